#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "sremtl/rng.hpp"
#include "sremtl/tensor.hpp"

namespace sremtl {

// Elementwise arithmetic. The second operand may be a scalar or have a shape
// equal to a trailing suffix of the first operand's shape (e.g. a [d] bias
// added to every row of a [T, d] matrix). add/mul also accept the operands
// the other way round.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double c);
Tensor mul(const Tensor& a, double c);

Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
// GELU, tanh approximation.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor reciprocal(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Half-open range [begin, end) along one axis.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
// Picks entries along axis 0; indices may repeat.
Tensor index_select(const Tensor& x, std::span<const std::size_t> indices);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

// Normalizes over the last axis, then applies gamma * x + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// 1-D cross-correlation. x: [C_in, L], weight: [C_out, C_in, K], optional
/// bias [C_out]. Output length floor((L + pad_left + pad_right - K) / stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor* bias,
              std::size_t stride, std::size_t pad_left, std::size_t pad_right);
Tensor conv1d(const Tensor& x, const Tensor& weight, std::size_t stride,
              std::size_t padding);

/// Gumbel-softmax sample along the last axis of `logits`. With hard=true
/// the forward value is the one-hot argmax of the relaxed sample and the
/// gradient is that of the relaxed sample (straight-through).
Tensor gumbel_softmax(const Tensor& logits, double temperature, bool hard,
                      Rng& rng);
// Same as above with caller-supplied noise of the logits' shape.
Tensor gumbel_softmax(const Tensor& logits, double temperature, bool hard,
                      std::span<const double> noise);
// Forward: one-hot of the per-row argmax (ties to the lowest index).
// Backward: identity.
Tensor straight_through(const Tensor& soft);

// Rows of x [T, d] where mask[t] is set are replaced by `row` [d].
Tensor replace_rows(const Tensor& x, const std::vector<bool>& mask,
                    const Tensor& row);
// Multiplies row i of x [N, d] by s[i].
Tensor scale_rows(const Tensor& x, const Tensor& s);
// Row-wise cosine similarity of a [N, d] and b [N, d]; rows must be non-zero.
Tensor cosine_rows(const Tensor& a, const Tensor& b);
// Euclidean norm of every row of x [N, d].
Tensor row_norms(const Tensor& x);

// Training-mode batch normalization over the rows of x [N, C].
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, std::vector<double>* batch_mean = nullptr,
                  std::vector<double>* batch_var = nullptr);
// Inference-mode batch normalization with fixed statistics.
Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma,
                            const Tensor& beta, std::span<const double> mean,
                            std::span<const double> var, double eps);

// Fixed sinusoidal positional table [T, d].
Tensor sinusoidal_positions(std::size_t steps, std::size_t dim);

/// Softmax(q k^T / sqrt(d)) v for one head; q, k, v: [T, d].
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k,
                                    const Tensor& v);

struct LstmState {
  Tensor h;
  Tensor c;
};

/// One LSTM step over a batch. x: [B, d_in], state h/c: [B, H],
/// w_ih: [d_in, 4H], w_hh: [H, 4H], bias: [4H]; gate order i, f, g, o.
LstmState lstm_step(const Tensor& x, const LstmState& state,
                    const Tensor& w_ih, const Tensor& w_hh, const Tensor& bias);

}  // namespace sremtl
