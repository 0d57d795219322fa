#pragma once

#include <cstddef>
#include <span>

#include "sremtl/tensor.hpp"

namespace sremtl {

/// Mean over the batch of -log softmax(logits)[label]. logits: [B, n].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

struct AngularSoftmaxConfig {
  int margin = 4;
  double lambda0 = 1000.0;
  double gamma = 0.2;
  double lambda_min = 5.0;

  void validate() const;
  // max(lambda_min, lambda0 / (1 + gamma * t))
  double lambda(std::size_t step) const;
};

/// psi(theta) = (-1)^k cos(m theta) - 2k for theta = acos(x) in
/// [k pi / m, (k + 1) pi / m], applied elementwise to cosines x.
Tensor angular_psi(const Tensor& cosines, int margin);

/// A-Softmax. emb: [B, dim], weight: [n_classes, dim] (rows are normalized
/// inside). The target logit is (lambda |e| cos + |e| psi) / (1 + lambda);
/// the others are |e| cos.
Tensor angular_softmax_loss(const Tensor& emb, std::span<const int> labels,
                            const Tensor& weight, int margin, double lambda);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace sremtl
