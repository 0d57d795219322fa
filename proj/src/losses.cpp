#include "sremtl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sremtl/ops.hpp"

namespace sremtl {

namespace {

Tensor one_hot(std::span<const int> labels, std::size_t classes,
               const char* who) {
  Tensor out({labels.size(), classes}, 0.0);
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ContractError(std::string(who) + ": label " +
                          std::to_string(labels[i]) + " outside [0, " +
                          std::to_string(classes) + ")");
    }
    d[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return out;
}

void check_batch(const Tensor& x, std::span<const int> labels, const char* who) {
  if (x.rank() != 2 || x.dim(0) != labels.size() || labels.empty()) {
    throw ShapeError(std::string(who) + ": expected [B, n] with B = " +
                     std::to_string(labels.size()) + ", got " +
                     shape_str(x.shape()));
  }
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_batch(logits, labels, "cross_entropy");
  Tensor target = one_hot(labels, logits.dim(1), "cross_entropy");
  Tensor picked = sum(mul(log_softmax(logits, 1), target));
  return mul(picked, -1.0 / static_cast<double>(labels.size()));
}

void AngularSoftmaxConfig::validate() const {
  if (margin < 1) throw ParameterError("angular margin must be >= 1");
  if (!(lambda0 >= 0.0) || !(gamma >= 0.0) || !(lambda_min >= 0.0)) {
    throw ParameterError("angular lambda schedule values must be non-negative");
  }
}

double AngularSoftmaxConfig::lambda(std::size_t step) const {
  return std::max(lambda_min, lambda0 / (1.0 + gamma * static_cast<double>(step)));
}

Tensor angular_psi(const Tensor& cosines, int margin) {
  if (margin < 1) throw ParameterError("angular_psi: margin must be >= 1");
  const std::size_t n = cosines.numel();
  const int m = margin;
  std::vector<double> value(n), slope(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::clamp(cosines[i], -1.0, 1.0);
    const double theta = std::acos(x);
    const int k = std::min(m - 1, static_cast<int>(std::floor(
                                      m * theta / std::numbers::pi)));
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    // Chebyshev recurrences: T_m(x) = cos(m theta), T_m'(x) = m U_{m-1}(x).
    double t_prev = 1.0, t_cur = x;
    double u_prev = 0.0, u_cur = 1.0;  // U_{-1}, U_0
    for (int j = 1; j < m; ++j) {
      const double t_next = 2.0 * x * t_cur - t_prev;
      t_prev = t_cur;
      t_cur = t_next;
      const double u_next = 2.0 * x * u_cur - u_prev;
      u_prev = u_cur;
      u_cur = u_next;
    }
    value[i] = sign * t_cur - 2.0 * k;
    slope[i] = sign * m * u_cur;
  }
  return detail::make_result(
      cosines.shape(), std::move(value), {cosines},
      [cosines, slope = std::move(slope)](const detail::TensorImpl& out) {
        auto* g = detail::grad_target(cosines);
        if (!g) return;
        for (std::size_t i = 0; i < slope.size(); ++i)
          (*g)[i] += out.grad[i] * slope[i];
      });
}

Tensor angular_softmax_loss(const Tensor& emb, std::span<const int> labels,
                            const Tensor& weight, int margin, double lambda) {
  check_batch(emb, labels, "angular_softmax_loss");
  if (weight.rank() != 2 || weight.dim(1) != emb.dim(1)) {
    throw ShapeError("angular_softmax_loss: weight must be [n_classes, " +
                     std::to_string(emb.dim(1)) + "], got " +
                     shape_str(weight.shape()));
  }
  if (!(lambda >= 0.0)) throw ParameterError("angular_softmax_loss: lambda < 0");
  Tensor norms = row_norms(emb);
  for (double v : norms.data()) {
    if (!(v > 0.0)) throw ContractError("angular_softmax_loss: zero-norm embedding");
  }
  Tensor unit_w = scale_rows(weight, reciprocal(row_norms(weight)));
  Tensor scaled_cos = matmul(emb, transpose(unit_w));  // |e| cos
  Tensor cos = scale_rows(scaled_cos, reciprocal(norms));
  Tensor target = one_hot(labels, weight.dim(0), "angular_softmax_loss");
  Tensor cos_y = sum(mul(cos, target), 1);
  Tensor shift = mul(sub(angular_psi(cos_y, margin), cos_y), 1.0 / (1.0 + lambda));
  Tensor logits = add(scaled_cos, scale_rows(target, mul(shift, norms)));
  return cross_entropy(logits, labels);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("cosine_similarity: vectors differ in length");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw ContractError("cosine_similarity: zero vector");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace sremtl
