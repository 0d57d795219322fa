#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "op_cases.hpp"
#include "oracles.hpp"
#include "sremtl/losses.hpp"
#include "sremtl/ops.hpp"

using namespace sremtl;
using sremtl::testing::cosine_logit_ce;
using sremtl::testing::random_tensor;

namespace {

constexpr double kPi = std::numbers::pi;

double psi_scalar(double theta, int m) {
  const int k = std::min(m - 1, static_cast<int>(std::floor(m * theta / kPi)));
  return (k % 2 == 0 ? 1.0 : -1.0) * std::cos(m * theta) - 2.0 * k;
}

}  // namespace

TEST(CrossEntropy, UniformLogits) {
  Tensor logits({3, 12}, 0.7);
  std::vector<int> labels{0, 5, 11};
  EXPECT_NEAR(cross_entropy(logits, labels).item(), std::log(12.0), 1e-12);
}

TEST(CrossEntropy, ClosedForm) {
  Tensor logits = Tensor::matrix({{2, 0, 0}});
  std::vector<int> label{0};
  const double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 2));
  EXPECT_NEAR(cross_entropy(logits, label).item(), expected, 1e-14);
  EXPECT_NEAR(expected, 0.2395, 1e-4);
}

TEST(CrossEntropy, ConfidentTargetApproachesZero) {
  std::vector<int> label{1};
  double previous = 1e9;
  for (double big : {1.0, 5.0, 10.0, 20.0}) {
    const double l = cross_entropy(Tensor::matrix({{0, big, 0}}), label).item();
    EXPECT_LT(l, previous);
    previous = l;
  }
  EXPECT_LT(previous, 1e-8);
  EXPECT_EQ(cross_entropy(Tensor::matrix({{0, 1000, 0}}), label).item(), 0.0);
}

TEST(CrossEntropy, RowShiftInvariance) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    Tensor logits = random_tensor({4, 6}, rng, 3.0);
    std::vector<int> labels{1, 0, 5, 3};
    Tensor shifted = logits.clone();
    for (std::size_t r = 0; r < 4; ++r) {
      const double c = rng.normal(0, 50);
      for (std::size_t j = 0; j < 6; ++j) shifted.mutable_data()[r * 6 + j] += c;
    }
    EXPECT_NEAR(cross_entropy(logits, labels).item(), cross_entropy(shifted, labels).item(), 1e-10);
  }
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tensor logits({2, 3});
  std::vector<int> bad{0, 3}, negative{-1, 0}, short_labels{0};
  EXPECT_THROW(cross_entropy(logits, bad), ContractError);
  EXPECT_THROW(cross_entropy(logits, negative), ContractError);
  EXPECT_THROW(cross_entropy(logits, short_labels), ShapeError);
}

TEST(AngularSoftmax, MarginOneIsCosineCrossEntropy) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const std::size_t b = 1 + rng.index(5), d = 2 + rng.index(6), n = 2 + rng.index(6);
    Tensor emb = random_tensor({b, d}, rng, 2.0), w = random_tensor({n, d}, rng);
    std::vector<int> labels(b);
    for (auto& l : labels) l = static_cast<int>(rng.index(n));
    const double lambda = rng.uniform(0.0, 1000.0);
    EXPECT_NEAR(angular_softmax_loss(emb, labels, w, 1, lambda).item(),
                cosine_logit_ce(emb, labels, w), 1e-9);
  }
}

TEST(AngularSoftmax, ScalarFormulaOracle) {
  // theta_y = pi/4, theta_other = 3 pi/4, |e| = 1, m = 2, lambda = 5.
  const double c = std::cos(kPi / 4), s = std::sin(kPi / 4);
  Tensor emb = Tensor::matrix({{1, 0}});
  Tensor w = Tensor::matrix({{c, s}, {-c * 3, s * 3}});
  std::vector<int> label{0};
  const double lambda = 5;
  const double psi = psi_scalar(kPi / 4, 2);
  const double target = (lambda * std::cos(kPi / 4) + psi) / (1 + lambda);
  const double other = std::cos(3 * kPi / 4);
  const double expected = -target + std::log(std::exp(target) + std::exp(other));
  EXPECT_NEAR(angular_softmax_loss(emb, label, w, 2, lambda).item(), expected, 1e-12);
}

TEST(AngularSoftmax, PsiValues) {
  for (int m : {1, 2, 3, 4}) {
    for (int i = 0; i <= 200; ++i) {
      const double theta = kPi * i / 200.0;
      Tensor c = angular_psi(Tensor::vector({std::cos(theta)}), m);
      EXPECT_NEAR(c[0], psi_scalar(std::acos(std::cos(theta)), m), 1e-9) << m << " " << theta;
    }
    EXPECT_NEAR(angular_psi(Tensor::vector({1.0}), m)[0], 1.0, 1e-15);
    EXPECT_NEAR(angular_psi(Tensor::vector({-1.0}), m)[0], -(2.0 * m - 1), 1e-12);
  }
  // Monotone decreasing in theta, continuous at the breakpoints.
  double previous = 2;
  for (int i = 0; i <= 1000; ++i) {
    const double v = psi_scalar(kPi * i / 1000.0, 4);
    EXPECT_LE(v, previous + 1e-12);
    previous = v;
  }
}

TEST(AngularSoftmax, AlignedEmbeddingHasMaximalTarget) {
  Tensor emb = Tensor::matrix({{0, 3}});
  Tensor w = Tensor::matrix({{1, 0}, {0, 2}, {-1, -1}});
  std::vector<int> label{1};
  // With theta_y = 0 the target logit is |e| for every margin.
  const double expected = -3 + std::log(std::exp(3.0) + std::exp(0.0) + std::exp(-3 / std::sqrt(2.0)));
  for (int m : {1, 2, 4})
    EXPECT_NEAR(angular_softmax_loss(emb, label, w, m, 7.0).item(), expected, 1e-12);
}

TEST(AngularSoftmax, MarginPenalizesTarget) {
  Rng rng(3);
  int checked = 0;
  while (checked < 100) {
    Tensor emb = random_tensor({1, 3}, rng), w = random_tensor({4, 3}, rng);
    std::vector<int> label{static_cast<int>(rng.index(4))};
    double dot = 0, ne = 0, nw = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      dot += emb[k] * w.at(label[0], k);
      ne += emb[k] * emb[k];
      nw += w.at(label[0], k) * w.at(label[0], k);
    }
    const double theta = std::acos(dot / std::sqrt(ne * nw));
    if (theta <= 0 || theta >= kPi / 4) continue;
    ++checked;
    EXPECT_GE(angular_softmax_loss(emb, label, w, 4, 5.0).item(),
              angular_softmax_loss(emb, label, w, 1, 5.0).item());
  }
}

TEST(AngularSoftmax, Errors) {
  Tensor w = Tensor::matrix({{1, 0}, {0, 1}});
  std::vector<int> label{0};
  EXPECT_THROW(angular_softmax_loss(Tensor({1, 2}, 0.0), label, w, 4, 5), ContractError);
  std::vector<int> bad{2};
  EXPECT_THROW(angular_softmax_loss(Tensor::matrix({{1, 1}}), bad, w, 4, 5), ContractError);
  EXPECT_THROW(angular_softmax_loss(Tensor::matrix({{1, 1}}), label, w, 0, 5), ParameterError);
}

TEST(AngularSoftmax, LambdaSchedule) {
  AngularSoftmaxConfig c;
  EXPECT_DOUBLE_EQ(c.lambda(0), 1000.0);
  EXPECT_DOUBLE_EQ(c.lambda(5), 500.0);
  double previous = c.lambda(0);
  for (std::size_t t = 1; t < 2000; ++t) {
    EXPECT_LE(c.lambda(t), previous);
    previous = c.lambda(t);
  }
  EXPECT_DOUBLE_EQ(c.lambda(1000000), 5.0);
  c.margin = 0;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(CosineSimilarity, Examples) {
  std::vector<double> a{1, 2, 3}, b{-2, 0.5, 4}, a2{2, 4, 6}, o{2, -1, 0};
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(a, o), 0.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(a2, b), cosine_similarity(a, b), 1e-15);
  std::vector<double> zero{0, 0, 0};
  EXPECT_THROW(cosine_similarity(a, zero), ContractError);
  const double v = cosine_similarity(a, b);
  EXPECT_GE(v, -1.0);
  EXPECT_LE(v, 1.0);
}

TEST(GradCheck, CompositeLossesOnRandomInstances) {
  for (const auto& c : sremtl::testing::composite_cases()) {
    Rng rng = Rng(29).split(c.name);
    double worst = 0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, c.run(rng).max_error);
    EXPECT_LT(worst, 1e-3) << c.name;
  }
}
