#pragma once

// Randomized gradient-check cases shared by the unit tests and the
// acceptance runner.

#include <numbers>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "sremtl/losses.hpp"
#include "sremtl/sre.hpp"

namespace sremtl::testing {

struct OpCase {
  std::string name;
  bool composite = false;
  std::function<GradCheck(Rng&)> run;
};

inline std::size_t small_dim(Rng& rng, std::size_t lo = 1, std::size_t hi = 4) {
  return lo + rng.index(hi - lo + 1);
}

// Values kept at least `gap` away from zero (for kinks and poles).
inline Tensor away_from_zero(Shape shape, Rng& rng, double gap = 0.05) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double& v : t.mutable_data())
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  return t;
}

inline Tensor micro_pretrain_loss(const SREModel& model, const Tensor& waves,
                                  std::uint64_t seed) {
  Rng rng(seed);
  return pretrain_loss(model, waves, 0.9, rng).total;
}

inline std::vector<OpCase> primitive_cases() {
  std::vector<OpCase> cases;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> f,
                   int domain) {
    // domain: 0 any, 1 positive, 2 away from zero
    cases.push_back({name, false, [f, domain](Rng& rng) {
                       Shape s{small_dim(rng), small_dim(rng)};
                       Tensor x = domain == 1   ? random_positive(s, rng)
                                  : domain == 2 ? away_from_zero(s, rng)
                                                : random_tensor(s, rng);
                       return grad_check([&] { return probe(f(x)); }, {x});
                     }});
  };
  unary("neg", [](const Tensor& x) { return neg(x); }, 0);
  unary("exp", [](const Tensor& x) { return exp(x); }, 0);
  unary("log", [](const Tensor& x) { return log(x); }, 1);
  unary("sqrt", [](const Tensor& x) { return sqrt(x); }, 1);
  unary("square", [](const Tensor& x) { return square(x); }, 0);
  unary("relu", [](const Tensor& x) { return relu(x); }, 2);
  unary("gelu", [](const Tensor& x) { return gelu(x); }, 0);
  unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, 0);
  unary("tanh", [](const Tensor& x) { return tanh(x); }, 0);
  unary("reciprocal", [](const Tensor& x) { return reciprocal(x); }, 1);
  unary("add_scalar", [](const Tensor& x) { return add(x, 0.7); }, 0);
  unary("mul_scalar", [](const Tensor& x) { return mul(x, -1.3); }, 0);
  unary("transpose", [](const Tensor& x) { return transpose(x); }, 0);
  unary("reshape", [](const Tensor& x) { return reshape(x, {x.numel()}); }, 0);
  unary("sum", [](const Tensor& x) { return sum(x); }, 0);
  unary("sum_axis0", [](const Tensor& x) { return sum(x, 0); }, 0);
  unary("sum_axis1", [](const Tensor& x) { return sum(x, 1); }, 0);
  unary("mean", [](const Tensor& x) { return mean(x); }, 0);
  unary("mean_axis0", [](const Tensor& x) { return mean(x, 0); }, 0);
  unary("mean_axis1", [](const Tensor& x) { return mean(x, 1); }, 0);
  unary("softmax_axis1", [](const Tensor& x) { return softmax(x, 1); }, 0);
  unary("softmax_axis0", [](const Tensor& x) { return softmax(x, 0); }, 0);
  unary("log_softmax", [](const Tensor& x) { return log_softmax(x, 1); }, 0);
  unary("row_norms", [](const Tensor& x) { return row_norms(x); }, 2);
  unary("slice", [](const Tensor& x) { return slice(x, 1, 0, (x.dim(1) + 1) / 2); }, 0);
  unary("index_select", [](const Tensor& x) {
          std::vector<std::size_t> idx{0, x.dim(0) - 1, 0};
          return index_select(x, idx);
        }, 0);

  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> f,
                    bool broadcast, bool positive_b) {
    cases.push_back({name, false, [f, broadcast, positive_b](Rng& rng) {
                       Shape s{small_dim(rng), small_dim(rng)};
                       Tensor a = random_tensor(s, rng);
                       Shape sb = broadcast ? Shape{s[1]} : s;
                       Tensor b = positive_b ? random_positive(sb, rng)
                                             : random_tensor(sb, rng);
                       return grad_check([&] { return probe(f(a, b)); }, {a, b});
                     }});
  };
  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, false, false);
  binary("add_broadcast", [](const Tensor& a, const Tensor& b) { return add(a, b); }, true, false);
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, false, false);
  binary("sub_broadcast", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, true, false);
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, false, false);
  binary("mul_broadcast", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, true, false);
  binary("div", [](const Tensor& a, const Tensor& b) { return div(a, b); }, false, true);
  binary("div_broadcast", [](const Tensor& a, const Tensor& b) { return div(a, b); }, true, true);
  binary("concat_axis0", [](const Tensor& a, const Tensor& b) {
           Tensor b2 = reshape(b, {1, b.numel()});
           const Tensor parts[] = {a, b2};
           return concat(parts, 0);
         }, true, false);
  binary("concat_axis1", [](const Tensor& a, const Tensor& b) {
           const Tensor parts[] = {a, b};
           return concat(parts, 1);
         }, false, false);
  binary("stack", [](const Tensor& a, const Tensor& b) {
           const Tensor parts[] = {a, b};
           return stack(parts);
         }, false, false);
  binary("scale_rows", [](const Tensor& a, const Tensor& b) {
           return scale_rows(a, reshape(slice(b, 1, 0, 1), {b.dim(0)}));
         }, false, false);
  binary("cosine_rows", [](const Tensor& a, const Tensor& b) { return cosine_rows(a, b); },
         false, true);

  cases.push_back({"matmul", false, [](Rng& rng) {
                     const std::size_t m = small_dim(rng), k = small_dim(rng), n = small_dim(rng);
                     Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
                     return grad_check([&] { return probe(matmul(a, b)); }, {a, b});
                   }});
  cases.push_back({"layer_norm", false, [](Rng& rng) {
                     const std::size_t n = small_dim(rng), d = small_dim(rng, 2, 5);
                     Tensor x = random_tensor({n, d}, rng);
                     Tensor g = random_tensor({d}, rng), b = random_tensor({d}, rng);
                     return grad_check([&] { return probe(layer_norm(x, g, b)); }, {x, g, b});
                   }});
  cases.push_back({"batch_norm", false, [](Rng& rng) {
                     const std::size_t n = small_dim(rng, 2, 5), d = small_dim(rng);
                     Tensor x = random_tensor({n, d}, rng);
                     Tensor g = random_tensor({d}, rng), b = random_tensor({d}, rng);
                     return grad_check([&] { return probe(batch_norm(x, g, b, 1e-5)); },
                                       {x, g, b});
                   }});
  cases.push_back({"conv1d", false, [](Rng& rng) {
                     const std::size_t cin = small_dim(rng, 1, 3), cout = small_dim(rng, 1, 3);
                     const std::size_t k = small_dim(rng, 1, 4), stride = small_dim(rng, 1, 3);
                     const std::size_t pl = rng.index(3), pr = rng.index(3);
                     const std::size_t len = k + small_dim(rng, 0, 6);
                     Tensor x = random_tensor({cin, len}, rng);
                     Tensor w = random_tensor({cout, cin, k}, rng);
                     Tensor b = random_tensor({cout}, rng);
                     return grad_check(
                         [&] { return probe(conv1d(x, w, &b, stride, pl, pr)); }, {x, w, b});
                   }});
  cases.push_back({"gumbel_softmax_soft", false, [](Rng& rng) {
                     const std::size_t n = small_dim(rng), v = small_dim(rng, 2, 5);
                     Tensor logits = random_tensor({n, v}, rng);
                     std::vector<double> noise(n * v);
                     for (double& g : noise) g = rng.gumbel();
                     const double tau = rng.uniform(0.5, 2.0);
                     return grad_check(
                         [&] { return probe(gumbel_softmax(logits, tau, false, noise)); },
                         {logits});
                   }});
  cases.push_back({"replace_rows", false, [](Rng& rng) {
                     const std::size_t t = small_dim(rng, 2, 5), d = small_dim(rng);
                     Tensor x = random_tensor({t, d}, rng), row = random_tensor({d}, rng);
                     std::vector<bool> mask(t);
                     for (std::size_t i = 0; i < t; ++i) mask[i] = rng.bernoulli(0.5);
                     mask[0] = true;
                     mask[t - 1] = false;
                     return grad_check([&] { return probe(replace_rows(x, mask, row)); },
                                       {x, row});
                   }});
  cases.push_back({"positional_add", false, [](Rng& rng) {
                     const std::size_t t = small_dim(rng), d = small_dim(rng, 2, 6);
                     Tensor x = random_tensor({t, d}, rng);
                     return grad_check(
                         [&] { return probe(add(x, sinusoidal_positions(t, d))); }, {x});
                   }});
  cases.push_back({"attention", false, [](Rng& rng) {
                     const std::size_t t = small_dim(rng), d = small_dim(rng, 1, 3);
                     Tensor q = random_tensor({t, d}, rng), k = random_tensor({t, d}, rng),
                            v = random_tensor({t, d}, rng);
                     return grad_check(
                         [&] { return probe(scaled_dot_product_attention(q, k, v)); },
                         {q, k, v});
                   }});
  cases.push_back({"lstm_step", false, [](Rng& rng) {
                     const std::size_t b = small_dim(rng, 1, 3), d = small_dim(rng, 1, 3),
                                       h = small_dim(rng, 1, 3);
                     Tensor x = random_tensor({b, d}, rng);
                     Tensor h0 = random_tensor({b, h}, rng), c0 = random_tensor({b, h}, rng);
                     Tensor wih = random_tensor({d, 4 * h}, rng, 0.5);
                     Tensor whh = random_tensor({h, 4 * h}, rng, 0.5);
                     Tensor bias = random_tensor({4 * h}, rng, 0.5);
                     return grad_check(
                         [&] {
                           LstmState s = lstm_step(x, {h0, c0}, wih, whh, bias);
                           return add(probe(s.h, 5), probe(s.c, 6));
                         },
                         {x, h0, c0, wih, whh, bias});
                   }});
  cases.push_back({"shared_input", false, [](Rng& rng) {
                     Tensor x = random_tensor({small_dim(rng), small_dim(rng)}, rng);
                     return grad_check([&] { return probe(add(mul(x, x), exp(x))); }, {x});
                   }});
  return cases;
}

inline std::vector<OpCase> composite_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"cross_entropy", true, [](Rng& rng) {
                     const std::size_t b = small_dim(rng), n = small_dim(rng, 2, 6);
                     Tensor logits = random_tensor({b, n}, rng, 2.0);
                     std::vector<int> labels(b);
                     for (auto& l : labels) l = static_cast<int>(rng.index(n));
                     return grad_check([&] { return cross_entropy(logits, labels); }, {logits});
                   }});
  cases.push_back({"angular_softmax", true, [](Rng& rng) {
                     const std::size_t b = small_dim(rng), d = small_dim(rng, 2, 4),
                                       n = small_dim(rng, 2, 5);
                     const int m = static_cast<int>(small_dim(rng, 1, 4));
                     const double lambda = rng.uniform(0.0, 10.0);
                     Tensor emb, w;
                     std::vector<int> labels(b);
                     // Resample until no target angle sits near a psi breakpoint.
                     for (;;) {
                       emb = random_tensor({b, d}, rng);
                       w = random_tensor({n, d}, rng);
                       for (auto& l : labels) l = static_cast<int>(rng.index(n));
                       bool ok = true;
                       for (std::size_t i = 0; i < b && ok; ++i) {
                         double dot = 0, ne = 0, nw = 0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double e = emb.at(i, j);
                           const double v = w.at(static_cast<std::size_t>(labels[i]), j);
                           dot += e * v;
                           ne += e * e;
                           nw += v * v;
                         }
                         const double theta = std::acos(dot / std::sqrt(ne * nw));
                         const double seg = theta * m / std::numbers::pi;
                         ok = std::abs(seg - std::round(seg)) > 0.02;
                       }
                       if (ok) break;
                     }
                     return grad_check(
                         [&] { return angular_softmax_loss(emb, labels, w, m, lambda); },
                         {emb, w});
                   }});
  cases.push_back({"pretrain_loss", true, [](Rng& rng) {
                     // Micro SRE: T = 8 frames, d_model = 8, soft quantizer.
                     SREConfig c;
                     c.conv_channels = 4;
                     c.d_model = 8;
                     c.n_layers = 1;
                     c.n_heads = 2;
                     c.ffn_dim = 8;
                     c.codebooks = 2;
                     c.entries_per_codebook = 4;
                     c.code_dim = 4;
                     c.mask_prob = 0.3;
                     c.mask_span = 2;
                     c.distractors = 3;
                     c.hard_quantizer = false;
                     Rng init = rng.split("init");
                     SREModel model(c, init);
                     const std::size_t len = c.receptive_field() + 7 * c.hop();
                     Tensor waves = random_tensor({1, len}, rng, 0.3);
                     const std::uint64_t seed = rng.next();
                     std::vector<Tensor> params;
                     for (const auto& p : model.parameters()) params.push_back(p.tensor);
                     GradCheck r = grad_check(
                         [&] { return micro_pretrain_loss(model, waves, seed); }, params);
                     set_trainable(model.parameters(), false);
                     return r;
                   }});
  return cases;
}

}  // namespace sremtl::testing
