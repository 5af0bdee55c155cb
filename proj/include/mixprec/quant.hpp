// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include "mixprec/tensor.hpp"

namespace mixprec {

// Asymmetric affine quantization over a whole tensor:
//   scale      = (max - min) / (qmax - qmin)
//   zero_point = qmin - trunc(min / scale)        (truncation toward zero)
//   code       = clamp(round(v / scale) + zero_point, qmin, qmax)
//   value      = (code - zero_point) * scale
// round() is round-half-away-from-zero. All float steps are f32.
//
// Degenerate range (max == min) substitutes scale = 1.0; codes collapse to
// the zero point. A constant-zero tensor roundtrips exactly; a constant
// non-zero tensor roundtrips to round(value).

/// Substitute scale used when max(t) == min(t).
inline constexpr float degenerate_scale = 1.0f;

float compute_scale(const Tensor& t, BitWidth b);

std::int64_t compute_zero_point(const Tensor& t, BitWidth b);

QuantizedTensor quantize(const Tensor& t, BitWidth b);

Tensor dequantize(const QuantizedTensor& q);

/// dequantize(quantize(t, b)) in one call.
Tensor quantize_roundtrip(const Tensor& t, BitWidth b);

/// Mean of squared elementwise differences. Accumulates in f64, returns f32.
float quantization_mse(const Tensor& original, const Tensor& dequantized);

/// Threshold below which a weight is treated as zero for relative error.
inline constexpr double rqe_zero_epsilon = 1e-12;

/// Mean of (orig - deq) / orig over elements with |orig| > rqe_zero_epsilon;
/// 0 when every element is excluded. Signed: positive and negative
/// distortions can cancel.
float relative_qe(const Tensor& original, const Tensor& dequantized);

struct RelativeQeStats {
    float value;
    std::int64_t excluded;  // elements skipped because |orig| <= epsilon
};

RelativeQeStats relative_qe_stats(const Tensor& original, const Tensor& dequantized);

/// Process-wide count of quantize() invocations. Used by complexity tests.
std::uint64_t quantize_call_count() noexcept;

}  // namespace mixprec
