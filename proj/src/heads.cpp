#include "sremtl/heads.hpp"

#include <cmath>

#include "sremtl/ops.hpp"
#include "sremtl/sre.hpp"

namespace sremtl {

std::string_view head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::linear: return "linear";
    case HeadKind::bilstm: return "bilstm";
    case HeadKind::cnn1d: return "cnn1d";
  }
  return "?";
}

HeadKind parse_head_kind(std::string_view name) {
  if (name == "linear") return HeadKind::linear;
  if (name == "bilstm") return HeadKind::bilstm;
  if (name == "cnn1d" || name == "cnn") return HeadKind::cnn1d;
  throw ParameterError("unknown head kind '" + std::string(name) +
                       "' (expected linear, bilstm or cnn1d)");
}

std::size_t frames_for_seconds(std::size_t seconds) {
  return SREConfig{}.frames_for(seconds * static_cast<std::size_t>(kSampleRate));
}

void HeadConfig::validate() const {
  if (out_dim == 0) throw ParameterError("head out_dim must be positive");
  if (input_seconds != 1 && input_seconds != 2) {
    throw ParameterError("head input_seconds must be 1 or 2");
  }
  if (kind == HeadKind::bilstm && lstm_hidden == 0) {
    throw ParameterError("head lstm_hidden must be positive");
  }
  if (kind == HeadKind::cnn1d && (cnn_filters == 0 || cnn_kernel == 0)) {
    throw ParameterError("head cnn_filters and cnn_kernel must be positive");
  }
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0) || !(bn_eps > 0.0)) {
    throw ParameterError("head batch-norm momentum must lie in [0, 1), eps > 0");
  }
}

namespace {

constexpr std::size_t kCnnOutSteps = 16;

// Frame axis is right-padded to 64 frames per second before the CNN blocks.
std::size_t padded_frames(std::size_t seconds) { return 64 * seconds; }

}  // namespace

TaskHead::ConvBlock TaskHead::make_block(std::size_t in, std::size_t stride,
                                         Rng& rng) const {
  const std::size_t f = config_.cnn_filters, k = config_.cnn_kernel;
  ConvBlock b;
  b.weight = normal_param({f, in, k}, std::sqrt(2.0 / static_cast<double>(in * k)),
                          rng);
  b.bias = constant_param({f}, 0.0);
  b.gamma = constant_param({f}, 1.0);
  b.beta = constant_param({f}, 0.0);
  b.running_mean = Tensor({f}, 0.0);
  b.running_var = Tensor({f}, 1.0);
  b.stride = stride;
  return b;
}

TaskHead::TaskHead(const HeadConfig& config, std::size_t d_model, Rng& rng)
    : config_(config), d_model_(d_model),
      frames_(frames_for_seconds(config.input_seconds)) {
  config_.validate();
  if (d_model == 0) throw ParameterError("head input dimension must be positive");
  std::size_t features = d_model;
  if (config_.kind == HeadKind::bilstm) {
    const std::size_t h = config_.lstm_hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (int dir = 0; dir < 2; ++dir) {
      lstm_.push_back(uniform_param({d_model, 4 * h}, -bound, bound, rng));
      lstm_.push_back(uniform_param({h, 4 * h}, -bound, bound, rng));
      lstm_.push_back(constant_param({4 * h}, 0.0));
    }
    features = (config_.all_endpoints ? 4 : 2) * h;
  } else if (config_.kind == HeadKind::cnn1d) {
    if (config_.input_seconds == 2) blocks_.push_back(make_block(d_model, 2, rng));
    blocks_.push_back(
        make_block(blocks_.empty() ? d_model : config_.cnn_filters, 4, rng));
    features = kCnnOutSteps * config_.cnn_filters;
  }
  out_weight_ = normal_param({features, config_.out_dim},
                             1.0 / std::sqrt(static_cast<double>(features)), rng);
  out_bias_ = constant_param({config_.out_dim}, 0.0);
}

Tensor TaskHead::forward(const Tensor& context, bool training) {
  return forward(std::span<const Tensor>(&context, 1), training);
}

Tensor TaskHead::forward(std::span<const Tensor> contexts, bool training) {
  if (contexts.empty()) throw ContractError("TaskHead::forward: empty batch");
  for (const Tensor& c : contexts) {
    if (c.rank() != 2 || c.dim(1) != d_model_ || c.dim(0) == 0) {
      throw ShapeError("TaskHead::forward: expected [T, " +
                       std::to_string(d_model_) + "], got " + shape_str(c.shape()));
    }
    if (c.dim(0) != contexts[0].dim(0)) {
      throw ShapeError("TaskHead::forward: utterances in a batch differ in length");
    }
  }
  switch (config_.kind) {
    case HeadKind::linear: return forward_linear(contexts);
    case HeadKind::bilstm: return forward_bilstm(contexts);
    case HeadKind::cnn1d: return forward_cnn(contexts, training);
  }
  return {};
}

Tensor TaskHead::forward_linear(std::span<const Tensor> contexts) const {
  std::vector<Tensor> first;
  first.reserve(contexts.size());
  for (const Tensor& c : contexts) first.push_back(slice(c, 0, 0, 1));
  Tensor x = first.size() == 1 ? first[0] : concat(first, 0);
  return add(matmul(x, out_weight_), out_bias_);
}

Tensor TaskHead::forward_bilstm(std::span<const Tensor> contexts) const {
  const std::size_t batch = contexts.size();
  const std::size_t steps = contexts[0].dim(0);
  const std::size_t h = config_.lstm_hidden;
  Tensor flat = batch == 1 ? contexts[0] : concat(contexts, 0);
  std::vector<std::size_t> idx(batch);
  auto rows_at = [&](std::size_t t) {
    for (std::size_t b = 0; b < batch; ++b) idx[b] = b * steps + t;
    return index_select(flat, idx);
  };
  const Tensor zeros({batch, h}, 0.0);

  LstmState fwd{zeros, zeros};
  Tensor fwd_first;
  for (std::size_t t = 0; t < steps; ++t) {
    fwd = lstm_step(rows_at(t), fwd, lstm_[0], lstm_[1], lstm_[2]);
    if (t == 0) fwd_first = fwd.h;
  }
  LstmState bwd{zeros, zeros};
  Tensor bwd_last;
  for (std::size_t t = steps; t-- > 0;) {
    bwd = lstm_step(rows_at(t), bwd, lstm_[3], lstm_[4], lstm_[5]);
    if (t == steps - 1) bwd_last = bwd.h;
  }
  std::vector<Tensor> parts{fwd.h, bwd.h};
  if (config_.all_endpoints) {
    parts.push_back(fwd_first);
    parts.push_back(bwd_last);
  }
  return add(matmul(concat(parts, 1), out_weight_), out_bias_);
}

std::vector<Tensor> TaskHead::run_block(ConvBlock& block,
                                        const std::vector<Tensor>& rows,
                                        bool training) {
  const std::size_t k = config_.cnn_kernel;
  const std::size_t len = rows[0].dim(0);
  const std::size_t out_len = (len + block.stride - 1) / block.stride;
  const std::size_t total_pad = (out_len - 1) * block.stride + k - len;
  const std::size_t pad_left =
      k > block.stride ? (k - block.stride + 1) / 2 : 0;
  const std::size_t pad_right = total_pad - std::min(pad_left, total_pad);

  std::vector<Tensor> activations;
  activations.reserve(rows.size());
  for (const Tensor& r : rows) {
    Tensor y = conv1d(transpose(r), block.weight, &block.bias, block.stride,
                      std::min(pad_left, total_pad), pad_right);
    activations.push_back(transpose(relu(y)));
  }
  Tensor stacked =
      activations.size() == 1 ? activations[0] : concat(activations, 0);
  Tensor normed;
  if (training) {
    std::vector<double> mu, var;
    normed = batch_norm(stacked, block.gamma, block.beta, config_.bn_eps, &mu, &var);
    const double m = config_.bn_momentum;
    auto rm = block.running_mean.mutable_data();
    auto rv = block.running_var.mutable_data();
    for (std::size_t i = 0; i < mu.size(); ++i) {
      rm[i] = m * rm[i] + (1.0 - m) * mu[i];
      rv[i] = m * rv[i] + (1.0 - m) * var[i];
    }
  } else {
    normed = batch_norm_inference(stacked, block.gamma, block.beta,
                                  block.running_mean.data(),
                                  block.running_var.data(), config_.bn_eps);
  }
  std::vector<Tensor> out;
  out.reserve(rows.size());
  const std::size_t steps = normed.dim(0) / rows.size();
  for (std::size_t b = 0; b < rows.size(); ++b)
    out.push_back(rows.size() == 1 ? normed
                                   : slice(normed, 0, b * steps, (b + 1) * steps));
  return out;
}

Tensor TaskHead::forward_cnn(std::span<const Tensor> contexts, bool training) {
  const std::size_t steps = contexts[0].dim(0);
  if (steps != frames_) {
    throw ShapeError("cnn head: " + std::to_string(config_.input_seconds) +
                     " s input needs " + std::to_string(frames_) +
                     " frames, got " + std::to_string(steps));
  }
  const std::size_t target = padded_frames(config_.input_seconds);
  const Tensor pad({target - steps, d_model_}, 0.0);
  std::vector<Tensor> rows;
  rows.reserve(contexts.size());
  for (const Tensor& c : contexts) {
    const Tensor parts[] = {c, pad};
    rows.push_back(concat(parts, 0));
  }
  for (ConvBlock& block : blocks_) rows = run_block(block, rows, training);
  std::vector<Tensor> flat;
  flat.reserve(rows.size());
  for (const Tensor& r : rows) flat.push_back(reshape(r, {1, r.numel()}));
  Tensor x = flat.size() == 1 ? flat[0] : concat(flat, 0);
  return add(matmul(x, out_weight_), out_bias_);
}

ParameterList TaskHead::parameters() const {
  const std::string base = "head." + std::string(task_name(config_.task)) + ".";
  ParameterList out;
  if (config_.kind == HeadKind::bilstm) {
    const char* dirs[] = {"fwd", "bwd"};
    for (int d = 0; d < 2; ++d) {
      const std::string p = base + "lstm." + dirs[d] + ".";
      out.push_back({p + "w_ih", lstm_[3 * d], true});
      out.push_back({p + "w_hh", lstm_[3 * d + 1], true});
      out.push_back({p + "bias", lstm_[3 * d + 2], false});
    }
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = base + "conv." + std::to_string(i) + ".";
    out.push_back({p + "weight", blocks_[i].weight, true});
    out.push_back({p + "bias", blocks_[i].bias, false});
    out.push_back({p + "bn.gamma", blocks_[i].gamma, false});
    out.push_back({p + "bn.beta", blocks_[i].beta, false});
  }
  out.push_back({base + "out.weight", out_weight_, true});
  out.push_back({base + "out.bias", out_bias_, false});
  return out;
}

ParameterList TaskHead::buffers() const {
  const std::string base = "head." + std::string(task_name(config_.task)) + ".";
  ParameterList out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = base + "conv." + std::to_string(i) + ".bn.";
    out.push_back({p + "running_mean", blocks_[i].running_mean, false});
    out.push_back({p + "running_var", blocks_[i].running_var, false});
  }
  return out;
}

}  // namespace sremtl
