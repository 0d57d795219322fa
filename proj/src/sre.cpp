#include "sremtl/sre.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sremtl/ops.hpp"

namespace sremtl {

using detail::grad_target;
using detail::make_result;
using detail::TensorImpl;

void SREConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ParameterError(std::string("sre.") + name + " must be positive");
  };
  positive(conv_channels, "conv_channels");
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(ffn_dim, "ffn_dim");
  positive(codebooks, "codebooks");
  positive(entries_per_codebook, "entries_per_codebook");
  positive(code_dim, "code_dim");
  positive(mask_span, "mask_span");
  positive(distractors, "distractors");
  if (d_model % n_heads != 0) {
    throw ParameterError("sre.d_model (" + std::to_string(d_model) +
                         ") must be divisible by sre.n_heads (" +
                         std::to_string(n_heads) + ")");
  }
  if (code_dim % codebooks != 0) {
    throw ParameterError("sre.code_dim must be divisible by sre.codebooks");
  }
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    throw ParameterError("sre.mask_prob must lie in [0, 1]");
  }
  if (mask_span > frames_for(16000)) {
    throw ParameterError("sre.mask_span exceeds the frame count of a 1 s clip");
  }
  if (!(contrastive_temperature > 0.0)) {
    throw ParameterError("sre.contrastive_temperature must be positive");
  }
  if (!(gumbel_end > 0.0 && gumbel_start >= gumbel_end)) {
    throw ParameterError("sre gumbel temperatures need start >= end > 0");
  }
  if (!(gumbel_decay > 0.0 && gumbel_decay <= 1.0)) {
    throw ParameterError("sre.gumbel_decay must lie in (0, 1]");
  }
  if (!(diversity_weight >= 0.0) || !(weight_decay >= 0.0)) {
    throw ParameterError("sre loss weights must be non-negative");
  }
}

std::size_t SREConfig::receptive_field() const {
  std::size_t field = 1, jump = 1;
  for (std::size_t i = 0; i < kStrides.size(); ++i) {
    field += (kKernels[i] - 1) * jump;
    jump *= kStrides[i];
  }
  return field;
}

std::size_t SREConfig::hop() const {
  std::size_t jump = 1;
  for (std::size_t s : kStrides) jump *= s;
  return jump;
}

std::size_t SREConfig::frames_for(std::size_t samples) const {
  std::size_t len = samples;
  for (std::size_t i = 0; i < kStrides.size(); ++i) {
    if (len < kKernels[i]) return 0;
    len = (len - kKernels[i]) / kStrides[i] + 1;
  }
  return len;
}

double SREConfig::gumbel_temperature(std::size_t step) const {
  return std::max(gumbel_end,
                  gumbel_start * std::pow(gumbel_decay, static_cast<double>(step)));
}

std::size_t MaskSpec::count() const {
  return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true));
}

MaskSpec sample_mask(std::size_t steps, double p, std::size_t span, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError("sample_mask: p must lie in [0, 1]");
  }
  if (span < 1 || span > steps) {
    throw ParameterError("sample_mask: span must lie in [1, T]");
  }
  MaskSpec mask{std::vector<bool>(steps, false)};
  bool any = false;
  for (std::size_t t = 0; t < steps; ++t) {
    if (!rng.bernoulli(p)) continue;
    any = true;
    for (std::size_t j = t; j < std::min(steps, t + span); ++j)
      mask.masked[j] = true;
  }
  if (!any) {
    const std::size_t start = rng.index(steps - span + 1);
    for (std::size_t j = start; j < start + span; ++j) mask.masked[j] = true;
  }
  return mask;
}

Tensor SREModel::Linear::operator()(const Tensor& x) const {
  return add(matmul(x, weight), bias);
}

Tensor SREModel::Norm::operator()(const Tensor& x) const {
  return layer_norm(x, gamma, beta);
}

SREModel::Linear SREModel::make_linear(std::size_t in, std::size_t out,
                                       Rng& rng) {
  return {normal_param({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng),
          constant_param({out}, 0.0)};
}

SREModel::Norm SREModel::make_norm(std::size_t d) {
  return {constant_param({d}, 1.0), constant_param({d}, 0.0)};
}

SREModel::SREModel(const SREConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t c = config_.conv_channels;
  const std::size_t d = config_.d_model;
  std::size_t in = 1;
  for (std::size_t i = 0; i < SREConfig::kKernels.size(); ++i) {
    const std::size_t k = SREConfig::kKernels[i];
    conv_weight_.push_back(normal_param(
        {c, in, k}, std::sqrt(2.0 / static_cast<double>(in * k)), rng));
    conv_bias_.push_back(constant_param({c}, 0.0));
    in = c;
  }
  first_norm_gamma_ = constant_param({c}, 1.0);
  first_norm_beta_ = constant_param({c}, 0.0);
  feature_norm_ = make_norm(c);
  feature_proj_ = make_linear(c, d, rng);
  mask_embedding_ = uniform_param({d}, 0.0, 1.0, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    Block b;
    b.attn_norm = make_norm(d);
    b.wq = make_linear(d, d, rng);
    b.wk = make_linear(d, d, rng);
    b.wv = make_linear(d, d, rng);
    b.wo = make_linear(d, d, rng);
    b.ffn_norm = make_norm(d);
    b.ffn_in = make_linear(d, config_.ffn_dim, rng);
    b.ffn_out = make_linear(config_.ffn_dim, d, rng);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = make_norm(d);
  const std::size_t gv = config_.codebooks * config_.entries_per_codebook;
  quant_logits_ = make_linear(c, gv, rng);
  codebook_ = normal_param({gv, config_.code_dim / config_.codebooks}, 1.0, rng);
  quant_proj_ = make_linear(config_.code_dim, config_.code_dim, rng);
  final_proj_ = make_linear(d, config_.code_dim, rng);
}

FrameEncoding SREModel::encode_frames(const Tensor& wave) const {
  if (wave.rank() != 1) {
    throw ShapeError("encode_frames: expected a [L] waveform, got " +
                     shape_str(wave.shape()));
  }
  const std::size_t len = wave.dim(0);
  if (len < config_.receptive_field()) {
    throw ShapeError("encode_frames: " + std::to_string(len) +
                     " samples is shorter than one receptive field (" +
                     std::to_string(config_.receptive_field()) + ")");
  }
  Tensor h = reshape(wave, {1, len});
  if (config_.normalize_waveform) {
    h = layer_norm(h, Tensor({len}, 1.0), Tensor({len}, 0.0), 1e-7);
  }
  for (std::size_t i = 0; i < conv_weight_.size(); ++i) {
    h = conv1d(h, conv_weight_[i], &conv_bias_[i], SREConfig::kStrides[i], 0, 0);
    if (i == 0 && config_.first_layer_norm) {
      const std::size_t steps = h.dim(1);
      Tensor normed = layer_norm(h, Tensor({steps}, 1.0), Tensor({steps}, 0.0));
      h = transpose(add(mul(transpose(normed), first_norm_gamma_), first_norm_beta_));
    }
    h = gelu(h);
  }
  return {transpose(h)};
}

Tensor SREModel::block_forward(const Block& block, const Tensor& x) const {
  const std::size_t d = config_.d_model;
  const std::size_t dh = d / config_.n_heads;
  Tensor a = block.attn_norm(x);
  Tensor q = block.wq(a), k = block.wk(a), v = block.wv(a);
  std::vector<Tensor> heads;
  heads.reserve(config_.n_heads);
  for (std::size_t h = 0; h < config_.n_heads; ++h) {
    heads.push_back(scaled_dot_product_attention(
        slice(q, 1, h * dh, (h + 1) * dh), slice(k, 1, h * dh, (h + 1) * dh),
        slice(v, 1, h * dh, (h + 1) * dh)));
  }
  Tensor attended = heads.size() == 1 ? heads[0] : concat(heads, 1);
  Tensor y = add(x, block.wo(attended));
  Tensor f = block.ffn_out(gelu(block.ffn_in(block.ffn_norm(y))));
  return add(y, f);
}

ContextualRepresentation SREModel::contextualize(const FrameEncoding& z,
                                                 const MaskSpec* mask) const {
  const std::size_t steps = z.steps();
  Tensor x = feature_proj_(feature_norm_(z.frames));
  if (mask) {
    if (mask->masked.size() != steps) {
      throw ShapeError("contextualize: mask covers " +
                       std::to_string(mask->masked.size()) + " frames, Z has " +
                       std::to_string(steps));
    }
    x = replace_rows(x, mask->masked, mask_embedding_);
  }
  if (config_.positional_encoding) {
    x = add(x, sinusoidal_positions(steps, config_.d_model));
  }
  for (const auto& block : blocks_) x = block_forward(block, x);
  return {final_norm_(x)};
}

QuantizedTargets SREModel::quantize(const FrameEncoding& z, double temperature,
                                    Rng& rng) const {
  const std::size_t steps = z.steps();
  const std::size_t g = config_.codebooks;
  const std::size_t v = config_.entries_per_codebook;
  Tensor logits = reshape(quant_logits_(feature_norm_(z.frames)), {steps, g, v});
  Tensor selection =
      gumbel_softmax(logits, temperature, config_.hard_quantizer, rng);
  Tensor soft = softmax(logits, 2);
  std::vector<Tensor> parts;
  parts.reserve(g);
  for (std::size_t i = 0; i < g; ++i) {
    Tensor pick = reshape(slice(selection, 1, i, i + 1), {steps, v});
    parts.push_back(matmul(pick, slice(codebook_, 0, i * v, (i + 1) * v)));
  }
  Tensor codes = parts.size() == 1 ? parts[0] : concat(parts, 1);
  return {quant_proj_(codes), selection, soft};
}

Tensor SREModel::project_context(const ContextualRepresentation& c) const {
  return final_proj_(c.frames);
}

ContextualRepresentation SREModel::represent(const Tensor& wave) const {
  return contextualize(encode_frames(wave));
}

ParameterList SREModel::parameters() const {
  ParameterList out = backbone_parameters();
  auto add_linear = [&out](const std::string& name, const Linear& l) {
    out.push_back({name + ".weight", l.weight, true});
    out.push_back({name + ".bias", l.bias, false});
  };
  out.push_back({"sre.mask_embedding", mask_embedding_, false});
  add_linear("sre.quantizer.logits", quant_logits_);
  out.push_back({"sre.quantizer.codebook", codebook_, false});
  add_linear("sre.quantizer.proj", quant_proj_);
  add_linear("sre.final_proj", final_proj_);
  return out;
}

ParameterList SREModel::backbone_parameters() const {
  ParameterList out;
  auto add_linear = [&out](const std::string& name, const Linear& l) {
    out.push_back({name + ".weight", l.weight, true});
    out.push_back({name + ".bias", l.bias, false});
  };
  auto add_norm = [&out](const std::string& name, const Norm& n) {
    out.push_back({name + ".gamma", n.gamma, false});
    out.push_back({name + ".beta", n.beta, false});
  };
  for (std::size_t i = 0; i < conv_weight_.size(); ++i) {
    const std::string base = "sre.conv." + std::to_string(i);
    out.push_back({base + ".weight", conv_weight_[i], true});
    out.push_back({base + ".bias", conv_bias_[i], false});
  }
  if (config_.first_layer_norm) {
    out.push_back({"sre.conv.0.norm.gamma", first_norm_gamma_, false});
    out.push_back({"sre.conv.0.norm.beta", first_norm_beta_, false});
  }
  add_norm("sre.feature_norm", feature_norm_);
  add_linear("sre.feature_proj", feature_proj_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string base = "sre.blocks." + std::to_string(l);
    const Block& b = blocks_[l];
    add_norm(base + ".attn_norm", b.attn_norm);
    add_linear(base + ".wq", b.wq);
    add_linear(base + ".wk", b.wk);
    add_linear(base + ".wv", b.wv);
    add_linear(base + ".wo", b.wo);
    add_norm(base + ".ffn_norm", b.ffn_norm);
    add_linear(base + ".ffn_in", b.ffn_in);
    add_linear(base + ".ffn_out", b.ffn_out);
  }
  add_norm("sre.final_norm", final_norm_);
  return out;
}

Tensor contrastive_loss(const Tensor& context, const Tensor& targets,
                        const MaskSpec& mask, std::size_t distractors,
                        double kappa, Rng& rng) {
  if (context.rank() != 2 || context.shape() != targets.shape()) {
    throw ShapeError("contrastive_loss: context and targets must both be [T, D]");
  }
  const std::size_t steps = context.dim(0);
  if (mask.masked.size() != steps) {
    throw ShapeError("contrastive_loss: mask length does not match T");
  }
  if (!(kappa > 0.0)) throw ParameterError("contrastive_loss: kappa must be > 0");
  if (distractors == 0) throw ParameterError("contrastive_loss: K must be >= 1");
  std::vector<std::size_t> masked;
  for (std::size_t t = 0; t < steps; ++t)
    if (mask.masked[t]) masked.push_back(t);
  if (masked.empty()) {
    throw ContractError("contrastive_loss: no masked frames");
  }
  if (steps < 2) {
    throw ContractError("contrastive_loss: need at least two frames");
  }

  const std::size_t width = distractors + 1;
  std::vector<std::size_t> ctx_idx, tgt_idx;
  ctx_idx.reserve(masked.size() * width);
  tgt_idx.reserve(masked.size() * width);
  std::vector<std::size_t> pool;
  for (std::size_t t : masked) {
    pool.clear();
    for (std::size_t u : masked)
      if (u != t) pool.push_back(u);
    if (pool.empty()) {
      for (std::size_t u = 0; u < steps; ++u)
        if (u != t) pool.push_back(u);
    }
    ctx_idx.insert(ctx_idx.end(), width, t);
    tgt_idx.push_back(t);
    if (pool.size() >= distractors) {
      for (std::size_t i = 0; i < distractors; ++i) {
        const std::size_t j = i + rng.index(pool.size() - i);
        std::swap(pool[i], pool[j]);
        tgt_idx.push_back(pool[i]);
      }
    } else {
      for (std::size_t i = 0; i < distractors; ++i)
        tgt_idx.push_back(pool[rng.index(pool.size())]);
    }
  }
  Tensor sims = cosine_rows(index_select(context, ctx_idx),
                            index_select(targets, tgt_idx));
  Tensor logits = mul(reshape(sims, {masked.size(), width}), 1.0 / kappa);
  Tensor positive = slice(log_softmax(logits, 1), 1, 0, 1);
  return neg(mean(positive));
}

namespace {

// Shannon entropy (nats) of every row of p [G, V], with 0 log 0 = 0.
Tensor entropy_rows(const Tensor& p) {
  const std::size_t rows = p.dim(0), n = p.dim(1);
  std::vector<double> out(rows, 0.0);
  for (std::size_t g = 0; g < rows; ++g)
    for (std::size_t v = 0; v < n; ++v) {
      const double x = p.data()[g * n + v];
      if (x > 0.0) out[g] -= x * std::log(x);
    }
  return make_result({rows}, std::move(out), {p},
                     [p, rows, n](const TensorImpl& res) {
                       auto* gp = grad_target(p);
                       if (!gp) return;
                       for (std::size_t g = 0; g < rows; ++g)
                         for (std::size_t v = 0; v < n; ++v) {
                           const double x =
                               std::max(p.data()[g * n + v], 1e-300);
                           (*gp)[g * n + v] -=
                               res.grad[g] * (std::log(x) + 1.0);
                         }
                     });
}

Tensor mean_usage(const Tensor& code_probs) {
  if (code_probs.rank() != 3) {
    throw ShapeError("diversity: expected probabilities [N, G, V], got " +
                     shape_str(code_probs.shape()));
  }
  return mean(code_probs, 0);
}

}  // namespace

Tensor diversity_loss(const Tensor& code_probs) {
  Tensor usage = mean_usage(code_probs);
  const double gv = static_cast<double>(usage.numel());
  Tensor perplexity = exp(entropy_rows(usage));
  return add(mul(sum(perplexity), -1.0 / gv), 1.0);
}

std::vector<double> codebook_perplexity(const Tensor& code_probs) {
  Tensor usage = mean_usage(code_probs.detach());
  Tensor h = entropy_rows(usage);
  std::vector<double> out;
  for (double v : h.data()) out.push_back(std::exp(v));
  return out;
}

PretrainLoss pretrain_loss(const SREModel& model, const Tensor& waves,
                           double gumbel_temperature, Rng& rng) {
  if (waves.rank() != 2 || waves.dim(0) == 0) {
    throw ShapeError("pretrain_loss: expected a non-empty [B, L] batch");
  }
  const SREConfig& cfg = model.config();
  const std::size_t batch = waves.dim(0), len = waves.dim(1);
  std::vector<Tensor> weighted;
  std::vector<Tensor> probs;
  double masked_total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = waves.data().subspan(b * len, len);
    Tensor wave({len}, std::vector<double>(row.begin(), row.end()));
    FrameEncoding z = model.encode_frames(wave);
    MaskSpec mask = sample_mask(z.steps(), cfg.mask_prob, cfg.mask_span, rng);
    ContextualRepresentation c = model.contextualize(z, &mask);
    QuantizedTargets q = model.quantize(z, gumbel_temperature, rng);
    Tensor loss = contrastive_loss(model.project_context(c), q.frames, mask,
                                   cfg.distractors, cfg.contrastive_temperature,
                                   rng);
    const double n = static_cast<double>(mask.count());
    weighted.push_back(mul(loss, n));
    masked_total += n;
    probs.push_back(q.soft_probs);
  }
  Tensor contrastive = mul(sum(stack(weighted)), 1.0 / masked_total);
  Tensor all_probs = probs.size() == 1 ? probs[0] : concat(probs, 0);
  Tensor diversity = diversity_loss(all_probs);

  PretrainLoss out;
  out.contrastive = contrastive.item();
  out.diversity = diversity.item();
  out.perplexity = codebook_perplexity(all_probs);
  Tensor total = add(contrastive, mul(diversity, cfg.diversity_weight));
  const ParameterList params = model.parameters();
  out.l2 = squared_norm(params);
  if (cfg.weight_decay > 0.0) {
    std::vector<Tensor> squares;
    for (const auto& p : params)
      if (p.decay) squares.push_back(reshape(sum(square(p.tensor)), {1}));
    total = add(total, mul(sum(concat(squares, 0)), cfg.weight_decay));
  }
  out.total = total;
  return out;
}

}  // namespace sremtl
