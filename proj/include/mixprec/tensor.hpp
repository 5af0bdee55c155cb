// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mixprec {

/// Signed integer bit-width in [2, 8]. Code range is [qmin, qmax] =
/// [-2^(b-1), 2^(b-1) - 1].
class BitWidth {
public:
    static constexpr int min_bits = 2;
    static constexpr int max_bits = 8;

    explicit BitWidth(int bits) : bits_(bits) {
        if (bits < min_bits || bits > max_bits) {
            throw std::invalid_argument("bit-width must be in [2, 8]");
        }
    }

    int bits() const noexcept { return bits_; }
    int qmin() const noexcept { return -(1 << (bits_ - 1)); }
    int qmax() const noexcept { return (1 << (bits_ - 1)) - 1; }

    friend auto operator<=>(BitWidth, BitWidth) = default;

private:
    int bits_;
};

/// Flat f32 buffer with row-major shape metadata.
struct Tensor {
    std::vector<float> values;
    std::vector<std::int64_t> shape;

    static Tensor from_values(std::vector<float> v) {
        Tensor t;
        t.shape = {static_cast<std::int64_t>(v.size())};
        t.values = std::move(v);
        return t;
    }

    std::int64_t size() const noexcept {
        return static_cast<std::int64_t>(values.size());
    }
};

std::int64_t element_count(const std::vector<std::int64_t>& shape);

/// Throws std::runtime_error if shape does not match the buffer or any
/// value is NaN/Inf.
void validate_tensor(const Tensor& t);

struct QuantParams {
    float scale;
    std::int64_t zero_point;
    BitWidth bit_width;
};

/// Integer codes plus the parameters that produced them. Every code lies
/// in [qmin, qmax] of the bit-width.
struct QuantizedTensor {
    std::vector<std::int32_t> codes;
    QuantParams params;
    std::vector<std::int64_t> shape;

    std::int64_t size() const noexcept {
        return static_cast<std::int64_t>(codes.size());
    }
};

}  // namespace mixprec
