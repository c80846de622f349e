#pragma once

#include <cstddef>

#include "siamcheck/rng.hpp"
#include "siamcheck/tape.hpp"
#include "siamcheck/tensor.hpp"

namespace siamcheck {

enum class Mode { Train, Infer };
enum class Padding { Same, Valid };

// Layer primitives. Every op records its backward closure on the tape when the
// tape is recording and at least one input requires a gradient. Outputs are
// checked for NaN/Inf and raise a Numerical error.

/// Cross-correlation over input [N,H,W,C] with kernel [kh,kw,C,F] and bias [F].
/// Same padding follows the usual ceil(H/stride) convention with the extra
/// row/column at the bottom/right.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride = 1, Padding padding = Padding::Same);

/// Non-overlapping max pooling over [N,H,W,C]; output floor(H/stride).
/// Ties route the gradient to the first element in row-major window order.
Tensor maxpool2d(Tape& tape, const Tensor& input, std::size_t window = 2, std::size_t stride = 2);

/// x·W + b for x [N,D], W [D,U], b [U].
Tensor dense(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

/// [N, ...] -> [N, prod(...)].
Tensor flatten(Tape& tape, const Tensor& input);

Tensor relu(Tape& tape, const Tensor& input);
Tensor sigmoid(Tape& tape, const Tensor& input);

/// Sum of all elements as a [1] tensor.
Tensor sum(Tape& tape, const Tensor& input);

/// Running statistics for one batchnorm layer. The tensors are shared with the
/// model's parameter store so they serialize with the weights.
struct BatchNormStats {
    Tensor mean;
    Tensor variance;
    bool populated = false;

    /// Mean 0, variance 1, marked populated.
    static BatchNormStats fresh(std::size_t channels);
    /// Zero-filled and not yet usable for inference.
    static BatchNormStats empty(std::size_t channels);
};

inline constexpr float kBatchNormEpsilon = 1e-5f;
inline constexpr float kBatchNormMomentum = 0.9f;

/// Per-channel normalization over every axis but the last.
/// Train mode uses batch statistics (variance over N, not N-1) and updates
/// `stats`; infer mode reads `stats` and throws Uninitialized if they were
/// never populated.
Tensor batchnorm(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 Mode mode, BatchNormStats& stats);

/// Inverted dropout: survivors are scaled by 1/(1-rate). Identity in infer mode.
Tensor dropout(Tape& tape, const Tensor& input, float rate, Mode mode, Rng& rng);

struct L1Distance {
    Tensor elementwise; ///< |p - q|, [N,D]
    Tensor distance;    ///< row sums, [N,1]
};

/// Elementwise and summed L1 distance between two [N,D] feature batches.
L1Distance l1_distance(Tape& tape, const Tensor& p, const Tensor& q);

inline constexpr float kProbabilityClamp = 1e-7f;

/// Mean binary cross-entropy. Predictions are clamped to
/// [1e-7, 1-1e-7] before the log. When `prediction` came from sigmoid(), the
/// gradient is taken with respect to its logits (p - y) so a saturated
/// sigmoid still trains; otherwise the clamped region has zero gradient.
Tensor bce_loss(Tape& tape, const Tensor& prediction, const Tensor& target);

/// Stacks two batches along axis 0.
Tensor concat_batch(Tape& tape, const Tensor& a, const Tensor& b);
/// Rows [begin, end) along axis 0.
Tensor slice_batch(Tape& tape, const Tensor& input, std::size_t begin, std::size_t end);

} // namespace siamcheck
