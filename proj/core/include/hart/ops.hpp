#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hart/random.hpp"
#include "hart/tape.hpp"
#include "hart/tensor.hpp"

namespace hart::ops {

// Every op computes its forward result and, when the tape is recording and at
// least one input carries a gradient buffer, records a backward rule that
// accumulates into the inputs' gradients.

// Elementwise, shapes must match exactly.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);

// x + p where p's shape is a suffix of x's shape (p is tiled over the
// leading axes). Covers bias addition ([d] onto [BxTxd]) and positional
// tables ([Txd] onto [BxTxd]).
Tensor add_broadcast(Tape& tape, const Tensor& x, const Tensor& p);

// Matrix product.
//   a [m x k],        b [k x n]        -> [m x n]
//   a [... x m x k],  b [k x n]        -> [... x m x n]   (per-row linear map)
//   a [... x m x k],  b [... x k x n]  -> [... x m x n]   (batched, equal leading dims)
// Backward: dA += dC.B^T, dB += A^T.dC (summed over the batch for the 2-d b case).
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// Swap the last two axes.
Tensor transpose_last2(Tape& tape, const Tensor& x);

// Same element count, new shape. Data is copied (no views anywhere).
Tensor reshape(Tape& tape, const Tensor& x, std::vector<int> new_shape);

// [a x b x c x d] -> [a x c x b x d]; its own inverse.
Tensor permute_0213(Tape& tape, const Tensor& x);

// Softmax over the last axis, computed with max subtraction.
Tensor softmax(Tape& tape, const Tensor& x);

// Normalise each slice along the last axis to zero mean / unit variance,
// then apply gain and bias (both shaped [d]).
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Gaussian error linear unit, tanh approximation.
Tensor gelu(Tape& tape, const Tensor& x);

Tensor sigmoid(Tape& tape, const Tensor& x);

// Inverted dropout: identity when !training or rate == 0, otherwise zeroes
// entries with probability `rate` and rescales survivors by 1/(1-rate).
Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, Rng* rng);

// Reductions over axis 1 of a [B x T x D] tensor.
Tensor mean_axis1(Tape& tape, const Tensor& x);
Tensor max_axis1(Tape& tape, const Tensor& x);
Tensor slice_axis1(Tape& tape, const Tensor& x, int t);

// Concatenate along the last axis; leading shapes must match.
Tensor concat_last(Tape& tape, const Tensor& a, const Tensor& b);

// out[m] = x[indices[m]] for a [N x D] input; backward scatter-adds, so
// repeated indices accumulate.
Tensor gather_rows(Tape& tape, const Tensor& x, std::vector<int> indices);

Tensor sum_all(Tape& tape, const Tensor& x);
Tensor mean_all(Tape& tape, const Tensor& x);

// Mean over the batch (axis 0; a 1-d tensor counts as one sample) of the
// squared Euclidean distance between matching slices of y and target.
// Note this is the squared distance, not its root: same minimisers,
// simpler gradient.
Tensor l2_loss(Tape& tape, const Tensor& y, const Tensor& target);

// Mean negative log softmax probability of the true class.
// logits [B x C], labels.size() == B, each label in [0, C).
Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels);

// --- gradient checking -------------------------------------------------

struct GradCheckReport {
    // Worst relative error per checked parameter, and its flat index.
    std::vector<double> max_rel_err;
    std::vector<std::size_t> worst_index;
    double worst = 0.0;

    bool all_below(double tol) const;
};

// Compares analytic gradients against central finite differences.
// `f` must deterministically rebuild the scalar loss on the given tape from
// the current parameter values. Relative error uses a unit floor:
//     |analytic - numeric| / max(1, |analytic|, |numeric|)
// so near-zero gradients are judged on absolute error.
GradCheckReport finite_diff_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> params,
                                  double step = 1e-5);

}  // namespace hart::ops
