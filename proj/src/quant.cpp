// SPDX-License-Identifier: Apache-2.0

#include "mixprec/quant.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mixprec {

namespace {

std::atomic<std::uint64_t> g_quantize_calls{0};

struct Range {
    float min;
    float max;
};

Range scan_range(const Tensor& t) {
    if (t.values.empty()) {
        throw std::runtime_error("empty tensor");
    }
    float lo = t.values[0];
    float hi = t.values[0];
    for (float v : t.values) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("non-finite input");
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

float scale_from_range(Range r, BitWidth b) {
    if (r.max == r.min) {
        return degenerate_scale;
    }
    return (r.max - r.min) / static_cast<float>(b.qmax() - b.qmin());
}

// Truncate a float toward zero into int64, saturating well inside the
// representable range so later +/- qmin arithmetic cannot overflow.
std::int64_t trunc_to_i64(float x) {
    constexpr double limit = 4.0e18;
    const double d = std::trunc(static_cast<double>(x));
    if (d > limit) return static_cast<std::int64_t>(limit);
    if (d < -limit) return -static_cast<std::int64_t>(limit);
    return static_cast<std::int64_t>(d);
}

std::int64_t zero_point_from_range(Range r, float scale, BitWidth b) {
    const float q = r.min / scale;  // f32 division, then trunc toward zero
    return static_cast<std::int64_t>(b.qmin()) - trunc_to_i64(q);
}

void check_same_shape(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape || a.values.size() != b.values.size()) {
        throw std::runtime_error("shape mismatch");
    }
}

}  // namespace

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        n *= d;
    }
    return n;
}

void validate_tensor(const Tensor& t) {
    if (element_count(t.shape) != t.size()) {
        throw std::runtime_error("shape mismatch");
    }
    for (float v : t.values) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("non-finite input");
        }
    }
}

float compute_scale(const Tensor& t, BitWidth b) {
    return scale_from_range(scan_range(t), b);
}

std::int64_t compute_zero_point(const Tensor& t, BitWidth b) {
    const Range r = scan_range(t);
    return zero_point_from_range(r, scale_from_range(r, b), b);
}

QuantizedTensor quantize(const Tensor& t, BitWidth b) {
    g_quantize_calls.fetch_add(1, std::memory_order_relaxed);

    const Range r = scan_range(t);
    const float scale = scale_from_range(r, b);
    const std::int64_t zero_point = zero_point_from_range(r, scale, b);
    const double qmin = b.qmin();
    const double qmax = b.qmax();

    QuantizedTensor q{{}, {scale, zero_point, b}, t.shape};
    q.codes.reserve(t.values.size());
    for (float v : t.values) {
        const float rounded = std::round(v / scale);
        // Sum in double: the pre-clamp code can sit far outside int range
        // when the tensor range is tiny relative to its magnitude.
        const double pre = static_cast<double>(rounded) + static_cast<double>(zero_point);
        std::int32_t code;
        if (pre <= qmin) {
            code = b.qmin();
        } else if (pre >= qmax) {
            code = b.qmax();
        } else {
            code = static_cast<std::int32_t>(pre);
        }
        q.codes.push_back(code);
    }
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t;
    t.shape = q.shape;
    t.values.reserve(q.codes.size());
    const float scale = q.params.scale;
    const std::int64_t zero_point = q.params.zero_point;
    for (std::int32_t c : q.codes) {
        t.values.push_back(static_cast<float>(c - zero_point) * scale);
    }
    return t;
}

Tensor quantize_roundtrip(const Tensor& t, BitWidth b) {
    return dequantize(quantize(t, b));
}

float quantization_mse(const Tensor& original, const Tensor& dequantized) {
    check_same_shape(original, dequantized);
    if (original.values.empty()) {
        return 0.0f;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < original.values.size(); ++i) {
        const double d = static_cast<double>(original.values[i]) -
                         static_cast<double>(dequantized.values[i]);
        acc += d * d;
    }
    return static_cast<float>(acc / static_cast<double>(original.values.size()));
}

RelativeQeStats relative_qe_stats(const Tensor& original, const Tensor& dequantized) {
    check_same_shape(original, dequantized);
    double acc = 0.0;
    std::int64_t counted = 0;
    std::int64_t excluded = 0;
    for (std::size_t i = 0; i < original.values.size(); ++i) {
        const double w = original.values[i];
        if (std::abs(w) <= rqe_zero_epsilon) {
            ++excluded;
            continue;
        }
        acc += (w - static_cast<double>(dequantized.values[i])) / w;
        ++counted;
    }
    if (counted == 0) {
        return {0.0f, excluded};
    }
    return {static_cast<float>(acc / static_cast<double>(counted)), excluded};
}

float relative_qe(const Tensor& original, const Tensor& dequantized) {
    return relative_qe_stats(original, dequantized).value;
}

std::uint64_t quantize_call_count() noexcept {
    return g_quantize_calls.load(std::memory_order_relaxed);
}

}  // namespace mixprec
