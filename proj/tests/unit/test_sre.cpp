#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "op_cases.hpp"
#include "sremtl/ops.hpp"
#include "sremtl/sre.hpp"
#include "sremtl/trainer.hpp"

using namespace sremtl;
using sremtl::testing::grad_check;
using sremtl::testing::random_tensor;

namespace {

SREConfig small_config() {
  SREConfig c;
  c.conv_channels = 8;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_dim = 16;
  c.codebooks = 2;
  c.entries_per_codebook = 4;
  c.code_dim = 4;
  c.mask_span = 2;
  c.distractors = 3;
  return c;
}

SREModel frozen_model(const SREConfig& c, std::uint64_t seed = 1) {
  Rng rng(seed);
  SREModel m(c, rng);
  set_trainable(m.parameters(), false);
  return m;
}

bool equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  return index_select(x, perm);
}

// Exact expected masked fraction of sample_mask, forced span included.
double expected_mask_fraction(std::size_t T, double p, std::size_t M) {
  const double none = std::pow(1.0 - p, static_cast<double>(T));
  const std::size_t starts = T - M + 1;
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double natural = 1.0 - std::pow(1.0 - p, static_cast<double>(std::min(M, t + 1)));
    std::size_t covering = 0;
    for (std::size_t s = 0; s < starts; ++s) covering += s <= t && t < s + M;
    total += natural + none * static_cast<double>(covering) / static_cast<double>(starts);
  }
  return total / static_cast<double>(T);
}

}  // namespace

TEST(FrameArithmetic, HopAndFrameCounts) {
  SREConfig c;
  EXPECT_EQ(c.hop(), 320u);
  EXPECT_EQ(c.receptive_field(), 400u);
  EXPECT_EQ(c.frames_for(16000), 49u);
  EXPECT_EQ(c.frames_for(32000), 99u);
  EXPECT_EQ(c.frames_for(400), 1u);
  EXPECT_EQ(c.frames_for(399), 0u);
  SREModel m = frozen_model(small_config());
  Rng rng(2);
  EXPECT_EQ(m.encode_frames(random_tensor({16000}, rng, 0.1)).steps(), 49u);
  EXPECT_EQ(m.encode_frames(random_tensor({32000}, rng, 0.1)).steps(), 99u);
  EXPECT_EQ(m.encode_frames(random_tensor({400}, rng, 0.1)).steps(), 1u);
  EXPECT_THROW(m.encode_frames(Tensor({399})), ShapeError);
  EXPECT_THROW(m.encode_frames(Tensor({2, 16000})), ShapeError);
}

TEST(Encoder, ZeroWaveGivesIdenticalFrames) {
  for (bool norms : {false, true}) {
    SREConfig c = small_config();
    c.normalize_waveform = norms;
    c.first_layer_norm = norms;
    SREModel m = frozen_model(c);
    Tensor z = m.encode_frames(Tensor({4000}, 0.0)).frames;
    for (std::size_t t = 1; t < z.dim(0); ++t)
      for (std::size_t j = 0; j < z.dim(1); ++j) ASSERT_EQ(z.at(t, j), z.at(0, j));
  }
}

TEST(Encoder, Deterministic) {
  SREModel m = frozen_model(small_config());
  Rng rng(3);
  Tensor w = random_tensor({8000}, rng, 0.1);
  EXPECT_TRUE(equal(m.represent(w).frames, m.represent(w).frames));
  SREModel again = frozen_model(small_config());
  EXPECT_TRUE(equal(m.represent(w).frames, again.represent(w).frames));
}

TEST(Contextualize, PermutationEquivariantWithoutPositions) {
  SREConfig c = small_config();
  c.positional_encoding = false;
  c.n_layers = 2;
  SREModel m = frozen_model(c);
  Rng rng(4);
  Tensor z = random_tensor({6, c.conv_channels}, rng);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Tensor a = permute_rows(m.contextualize({z}).frames, perm);
  Tensor b = m.contextualize({permute_rows(z, perm)}).frames;
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Contextualize, AllFalseMaskEqualsNoMask) {
  SREModel m = frozen_model(small_config());
  Rng rng(5);
  Tensor z = random_tensor({7, 8}, rng);
  MaskSpec none{std::vector<bool>(7, false)};
  EXPECT_TRUE(equal(m.contextualize({z}).frames, m.contextualize({z}, &none).frames));
  MaskSpec wrong{std::vector<bool>(6, false)};
  EXPECT_THROW(m.contextualize({z}, &wrong), ShapeError);
}

TEST(Contextualize, EveryOutputSeesEveryInput) {
  SREModel m = frozen_model(small_config());
  Rng rng(6);
  Tensor z = random_tensor({9, 8}, rng);
  Tensor base = m.contextualize({z}).frames;
  for (std::size_t changed = 0; changed < 9; ++changed) {
    Tensor z2 = z.clone();
    z2.mutable_data()[changed * 8 + 3] += 0.5;
    Tensor c2 = m.contextualize({z2}).frames;
    for (std::size_t t = 0; t < 9; ++t) {
      double diff = 0;
      for (std::size_t j = 0; j < 8; ++j) diff += std::abs(c2.at(t, j) - base.at(t, j));
      EXPECT_GT(diff, 1e-9) << "frame " << t << " ignores input " << changed;
    }
  }
}

TEST(Contextualize, MaskedContentIsInvisible) {
  SREModel m = frozen_model(small_config());
  Rng rng(7);
  Tensor z = random_tensor({9, 8}, rng);
  MaskSpec mask{std::vector<bool>(9, false)};
  mask.masked[2] = mask.masked[3] = mask.masked[7] = true;
  Tensor base = m.contextualize({z}, &mask).frames;
  Tensor z2 = z.clone();
  for (std::size_t t : {2, 3, 7})
    for (std::size_t j = 0; j < 8; ++j) z2.mutable_data()[t * 8 + j] = rng.normal(0, 3);
  EXPECT_TRUE(equal(base, m.contextualize({z2}, &mask).frames));
}

TEST(Quantize, HardSelectionIsOneHot) {
  SREConfig c = small_config();
  SREModel m = frozen_model(c);
  Rng rng(8);
  Tensor z = random_tensor({20, 8}, rng);
  QuantizedTargets q = m.quantize({z}, 1.0, rng);
  EXPECT_EQ(q.frames.shape(), (Shape{20, 4}));
  EXPECT_EQ(q.code_probs.shape(), (Shape{20, 2, 4}));
  std::set<std::vector<std::size_t>> codes;
  for (std::size_t t = 0; t < 20; ++t) {
    std::vector<std::size_t> code;
    for (std::size_t g = 0; g < 2; ++g) {
      double total = 0;
      std::size_t ones = 0;
      for (std::size_t v = 0; v < 4; ++v) {
        const double p = q.code_probs[(t * 2 + g) * 4 + v];
        EXPECT_TRUE(p == 0.0 || p == 1.0);
        total += p;
        if (p == 1.0) code.push_back(v), ++ones;
      }
      EXPECT_EQ(total, 1.0);
      EXPECT_EQ(ones, 1u);
    }
    codes.insert(code);
  }
  EXPECT_LE(codes.size(), 16u);
  for (std::size_t t = 0; t < 20; ++t) {
    double total = 0;
    for (std::size_t v = 0; v < 4; ++v) total += q.soft_probs[t * 8 + v];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Quantize, StraightThroughGradientMatchesSoftPath) {
  // q is linear in the selection, so the straight-through gradient of a
  // linear probe must equal the soft-path gradient under the same noise.
  SREConfig hard_cfg = small_config(), soft_cfg = small_config();
  soft_cfg.hard_quantizer = false;
  Rng init_a(9), init_b(9);
  SREModel hard(hard_cfg, init_a), soft(soft_cfg, init_b);
  Rng rng(10);
  Tensor z = random_tensor({6, 8}, rng);
  auto logits_grad = [&](const SREModel& m) {
    Rng noise(11);
    backward(sremtl::testing::probe(m.quantize({z}, 0.7, noise).frames));
    for (const auto& p : m.parameters())
      if (p.name == "sre.quantizer.logits.weight")
        return std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end());
    return std::vector<double>{};
  };
  auto gh = logits_grad(hard), gs = logits_grad(soft);
  ASSERT_FALSE(gh.empty());
  double norm = 0;
  for (std::size_t i = 0; i < gh.size(); ++i) {
    EXPECT_NEAR(gh[i], gs[i], 1e-12);
    norm += gh[i] * gh[i];
  }
  EXPECT_GT(norm, 0.0);

  std::vector<Tensor> params;
  for (const auto& p : soft.parameters())
    if (p.name.rfind("sre.quantizer", 0) == 0) params.push_back(p.tensor);
  auto r = grad_check([&] {
    Rng noise(11);
    return sremtl::testing::probe(soft.quantize({z}, 0.7, noise).frames);
  }, params);
  EXPECT_LT(r.max_error, 1e-4);
}

TEST(Mask, ForcedSpanWhenProbabilityIsZero) {
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    MaskSpec m = sample_mask(49, 0.0, 4, rng);
    ASSERT_EQ(m.count(), 4u);
    std::size_t first = 0;
    while (!m.masked[first]) ++first;
    for (std::size_t j = first; j < first + 4; ++j) EXPECT_TRUE(m.masked[j]);
  }
}

TEST(Mask, ProbabilityOneMasksEverything) {
  Rng rng(13);
  EXPECT_EQ(sample_mask(49, 1.0, 4, rng).count(), 49u);
}

TEST(Mask, MonteCarloFractionMatchesClosedForm) {
  Rng rng(14);
  for (double p : {0.065, 0.2}) {
    constexpr int kDraws = 10000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < kDraws; ++i) {
      const double f = static_cast<double>(sample_mask(49, p, 4, rng).count()) / 49.0;
      sum += f;
      sum2 += f * f;
    }
    const double mean = sum / kDraws;
    const double sd = std::sqrt((sum2 / kDraws - mean * mean) / kDraws);
    EXPECT_NEAR(mean, expected_mask_fraction(49, p, 4), 3 * sd) << p;
    // Far from the edges and the forced span the simple union rule holds.
    EXPECT_NEAR(mean, 1 - std::pow(1 - p, 4), 0.03) << p;
  }
}

TEST(Mask, Errors) {
  Rng rng(1);
  EXPECT_THROW(sample_mask(10, -0.1, 2, rng), ParameterError);
  EXPECT_THROW(sample_mask(10, 1.1, 2, rng), ParameterError);
  EXPECT_THROW(sample_mask(10, 0.1, 0, rng), ParameterError);
  EXPECT_THROW(sample_mask(10, 0.1, 11, rng), ParameterError);
}

TEST(Contrastive, EqualSimilaritiesGiveLogTwo) {
  Rng rng(15);
  Tensor c = random_tensor({5, 3}, rng);
  Tensor q({5, 3}, std::vector<double>(15, 0.0));
  for (std::size_t t = 0; t < 5; ++t) q.mutable_data()[t * 3] = 1.0;
  MaskSpec mask{{true, true, false, true, true}};
  EXPECT_NEAR(contrastive_loss(c, q, mask, 1, 0.1, rng).item(), std::log(2.0), 1e-12);
  // Uninformative similarities: ln(K + 1) for any K.
  EXPECT_NEAR(contrastive_loss(c, q, mask, 32, 0.1, rng).item(), std::log(33.0), 1e-12);
}

TEST(Contrastive, PerfectSeparationClosedForm) {
  // Two masked frames pointing in opposite directions: every distractor of
  // frame t is the other frame's target, with cosine -1.
  Tensor c = Tensor::matrix({{1, 0}, {-1, 0}, {0, 1}});
  Tensor q = Tensor::matrix({{2, 0}, {-3, 0}, {0, 5}});
  MaskSpec mask{{true, true, false}};
  Rng rng(16);
  const double loss = contrastive_loss(c, q, mask, 32, 0.1, rng).item();
  EXPECT_NEAR(loss, std::log1p(32 * std::exp(-20.0)), 1e-12);
  EXPECT_NEAR(loss, 6.6e-8, 0.1e-8);
}

TEST(Contrastive, NonNegativeOnRandomInputs) {
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    Tensor c = random_tensor({10, 4}, rng), q = random_tensor({10, 4}, rng);
    MaskSpec mask = sample_mask(10, 0.3, 2, rng);
    EXPECT_GE(contrastive_loss(c, q, mask, 5, 0.1, rng).item(), 0.0);
  }
}

TEST(Contrastive, Errors) {
  Rng rng(18);
  Tensor c = random_tensor({4, 2}, rng);
  EXPECT_THROW(contrastive_loss(c, c, MaskSpec{std::vector<bool>(4, false)}, 2, 0.1, rng), ContractError);
  EXPECT_THROW(contrastive_loss(c, c, MaskSpec{std::vector<bool>(3, true)}, 2, 0.1, rng), ShapeError);
}

TEST(Diversity, UniformAndCollapsedUsage) {
  Tensor uniform({3, 2, 64}, 1.0 / 64);
  EXPECT_NEAR(diversity_loss(uniform).item(), 0.0, 1e-12);
  Tensor collapsed({3, 2, 64}, 0.0);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t g = 0; g < 2; ++g) collapsed.mutable_data()[(t * 2 + g) * 64 + 5] = 1.0;
  EXPECT_NEAR(diversity_loss(collapsed).item(), 63.0 / 64.0, 1e-12);
  auto ppl = codebook_perplexity(collapsed);
  ASSERT_EQ(ppl.size(), 2u);
  EXPECT_NEAR(ppl[0], 1.0, 1e-12);
  EXPECT_NEAR(codebook_perplexity(uniform)[1], 64.0, 1e-9);
}

TEST(Diversity, DecreasesTowardUniform) {
  double previous = 2.0;
  for (int k = 0; k <= 20; ++k) {
    const double a = k / 20.0;
    Tensor p({1, 2, 8}, (1 - a) * 0.0 + a / 8);
    for (std::size_t g = 0; g < 2; ++g) p.mutable_data()[g * 8] += 1 - a;
    const double value = diversity_loss(p).item();
    EXPECT_LT(value, previous);
    previous = value;
  }
  EXPECT_NEAR(previous, 0.0, 1e-12);
}

TEST(PretrainLoss, NoAuxiliaryTermsLeavesContrastive) {
  SREConfig c = small_config();
  c.diversity_weight = 0.0;
  c.weight_decay = 0.0;
  c.mask_prob = 0.3;
  SREModel m = frozen_model(c);
  Rng rng(19);
  Tensor waves = random_tensor({2, 400 + 9 * 320}, rng, 0.2);
  Rng r1(20);
  PretrainLoss l = pretrain_loss(m, waves, 1.0, r1);
  EXPECT_EQ(l.total.item(), l.contrastive);
  EXPECT_GT(l.contrastive, 0.0);
}

TEST(PretrainLoss, ZeroWeightsHaveNoL2) {
  SREModel m = frozen_model(small_config());
  for (const auto& p : m.parameters()) {
    Tensor t = p.tensor;
    for (double& v : t.mutable_data()) v = p.decay ? 0.0 : 1.0;
  }
  EXPECT_EQ(squared_norm(m.parameters()), 0.0);
}

TEST(PretrainLoss, HardQuantizerGradientsOutsideSelection) {
  // With a hard forward the loss is piecewise constant in the selection
  // logits, so every parameter feeding them (the selection layer, the conv
  // encoder and the feature norm) is left out of the finite-difference
  // comparison.
  SREConfig c = small_config();
  c.conv_channels = 4;
  c.mask_prob = 0.3;
  Rng init(22);
  SREModel m(c, init);
  Rng rng(23);
  Tensor waves = random_tensor({1, 400 + 7 * 320}, rng, 0.3);
  std::vector<Tensor> params;
  for (const auto& p : m.parameters())
    if (p.name.rfind("sre.quantizer.logits", 0) != 0 && p.name.rfind("sre.conv", 0) != 0 &&
        p.name.rfind("sre.feature_norm", 0) != 0)
      params.push_back(p.tensor);
  auto r = grad_check([&] { return sremtl::testing::micro_pretrain_loss(m, waves, 24); }, params);
  EXPECT_LT(r.max_error, 1e-3);
}

TEST(Pretrain, TinyRunReducesLoss) {
  SREConfig c;
  c.conv_channels = 16;
  c.d_model = 16;
  c.ffn_dim = 32;
  c.code_dim = 16;
  Rng root(7);
  Rng init = root.split("sre.init");
  SREModel m(c, init);
  SynthSpec spec;
  spec.clips_per_class = 10;
  spec.kws_test_clips_per_class = 2;
  spec.trial_pairs = 10;
  auto corpus = synth_dataset(spec);
  BatchLoader loader(std::make_shared<UtteranceSet>(corpus.kws_train), Task::kws, 16000,
                     root.split("loader"));
  TrainConfig tc;
  tc.pretrain_steps = 500;
  tc.pretrain_batch = 4;
  PretrainResult r = pretrain(tc, m, loader, root.split("pretrain"));
  ASSERT_EQ(r.log.size(), 500u);
  ASSERT_EQ(r.perplexity.size(), 500u);
  const double early = r.log.mean_loss("pretrain", 0, 50);
  const double late = r.log.mean_loss("pretrain", 450, 500);
  EXPECT_LT(late, early);
}

TEST(SREConfig, Validation) {
  SREConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ParameterError);
  c = SREConfig{};
  c.mask_prob = 1.5;
  EXPECT_THROW(c.validate(), ParameterError);
  c = SREConfig{};
  c.mask_span = 60;
  EXPECT_THROW(c.validate(), ParameterError);
  c = SREConfig{};
  c.contrastive_temperature = 0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = SREConfig{};
  EXPECT_DOUBLE_EQ(c.gumbel_temperature(0), 2.0);
  EXPECT_DOUBLE_EQ(c.gumbel_temperature(100000), 0.5);
}
