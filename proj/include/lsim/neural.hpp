#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lsim/common.hpp"

namespace lsim {

using Vec = std::vector<double>;

/// Affine layer: out x in weight matrix (row-major) plus a bias of length out.
struct DenseLayer {
  std::size_t out = 0;
  std::size_t in = 0;
  Vec weights;  // out * in, row-major
  Vec bias;     // out
};

enum class OutputActivation { Identity, Softmax };

/// Feed-forward network with tanh hidden activations and an identity or
/// softmax head. All math is double precision.
struct MlpParams {
  std::vector<DenseLayer> layers;
  OutputActivation output_activation = OutputActivation::Identity;

  std::size_t input_dim() const {
    return layers.empty() ? 0 : layers.front().in;
  }
  std::size_t output_dim() const {
    return layers.empty() ? 0 : layers.back().out;
  }
};

inline void validate_params(const MlpParams& params) {
  if (params.layers.empty()) {
    throw ValidationError("MlpParams: at least one layer required");
  }
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    if (layer.out == 0 || layer.in == 0 ||
        layer.weights.size() != layer.out * layer.in ||
        layer.bias.size() != layer.out) {
      throw ValidationError("MlpParams: inconsistent shapes in layer " +
                            std::to_string(k));
    }
    if (k > 0 && layer.in != params.layers[k - 1].out) {
      throw ValidationError("MlpParams: layer " + std::to_string(k) +
                            " input does not match previous output");
    }
  }
}

/// Glorot-uniform weights (range sqrt(6 / (in + out))), zero biases.
inline MlpParams make_mlp(std::size_t input_dim,
                          const std::vector<std::size_t>& hidden_widths,
                          std::size_t output_dim, Rng& rng,
                          OutputActivation output_activation =
                              OutputActivation::Identity) {
  if (input_dim == 0 || output_dim == 0) {
    throw ValidationError("make_mlp: zero layer width");
  }
  std::vector<std::size_t> widths;
  widths.push_back(input_dim);
  for (const auto w : hidden_widths) {
    if (w == 0) {
      throw ValidationError("make_mlp: zero hidden width");
    }
    widths.push_back(w);
  }
  widths.push_back(output_dim);

  MlpParams params;
  params.output_activation = output_activation;
  for (std::size_t k = 1; k < widths.size(); ++k) {
    DenseLayer layer;
    layer.in = widths[k - 1];
    layer.out = widths[k];
    layer.weights.resize(layer.out * layer.in);
    layer.bias.assign(layer.out, 0.0);
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (auto& w : layer.weights) {
      w = rng.uniform(-limit, limit);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

/// Numerically stable softmax (max-subtracted).
inline Vec softmax(const Vec& logits) {
  if (logits.empty()) {
    throw ValidationError("softmax: empty input");
  }
  double max_logit = logits.front();
  for (const auto x : logits) {
    if (std::isnan(x)) {
      throw ValidationError("softmax: NaN input");
    }
    max_logit = std::max(max_logit, x);
  }
  Vec probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    total += probs[i];
  }
  for (auto& p : probs) {
    p /= total;
  }
  return probs;
}

/// Log-probabilities computed as a max-subtracted log-softmax.
inline Vec log_softmax(const Vec& logits) {
  if (logits.empty()) {
    throw ValidationError("log_softmax: empty input");
  }
  double max_logit = logits.front();
  for (const auto x : logits) {
    if (std::isnan(x)) {
      throw ValidationError("log_softmax: NaN input");
    }
    max_logit = std::max(max_logit, x);
  }
  double total = 0.0;
  for (const auto x : logits) {
    total += std::exp(x - max_logit);
  }
  const double log_total = std::log(total);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] - max_logit - log_total;
  }
  return out;
}

/// Per-layer activations retained by the forward pass; exactly what the
/// backward pass needs to produce analytic gradients.
struct ForwardCache {
  Vec input;
  std::vector<Vec> activations;  // post-activation output of each layer
};

inline Vec mlp_forward(const MlpParams& params, const Vec& input,
                       ForwardCache* cache = nullptr) {
  if (input.size() != params.input_dim()) {
    throw ValidationError("mlp_forward: input length " +
                          std::to_string(input.size()) +
                          " does not match first layer in-dim " +
                          std::to_string(params.input_dim()));
  }
  if (cache != nullptr) {
    cache->input = input;
    cache->activations.clear();
    cache->activations.reserve(params.layers.size());
  }
  Vec current = input;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    Vec next(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) {
      double z = layer.bias[r];
      const double* row = layer.weights.data() + r * layer.in;
      for (std::size_t c = 0; c < layer.in; ++c) {
        z += row[c] * current[c];
      }
      next[r] = z;
    }
    const bool last = k + 1 == params.layers.size();
    if (!last) {
      for (auto& x : next) {
        x = std::tanh(x);
      }
    } else if (params.output_activation == OutputActivation::Softmax) {
      next = softmax(next);
    }
    for (const auto x : next) {
      if (!std::isfinite(x)) {
        throw ValidationError("mlp_forward: non-finite value in layer " +
                              std::to_string(k));
      }
    }
    if (cache != nullptr) {
      cache->activations.push_back(next);
    }
    current = std::move(next);
  }
  return current;
}

/// Gradients with the same shapes as the parameters they correspond to.
struct MlpGrads {
  std::vector<DenseLayer> layers;
};

inline MlpGrads make_zero_grads(const MlpParams& params) {
  MlpGrads grads;
  grads.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    DenseLayer g;
    g.out = layer.out;
    g.in = layer.in;
    g.weights.assign(layer.weights.size(), 0.0);
    g.bias.assign(layer.bias.size(), 0.0);
    grads.layers.push_back(std::move(g));
  }
  return grads;
}

inline void scale_grads(MlpGrads& grads, double factor) {
  for (auto& layer : grads.layers) {
    for (auto& w : layer.weights) {
      w *= factor;
    }
    for (auto& b : layer.bias) {
      b *= factor;
    }
  }
}

inline void add_grads(MlpGrads& into, const MlpGrads& other) {
  for (std::size_t k = 0; k < into.layers.size(); ++k) {
    for (std::size_t i = 0; i < into.layers[k].weights.size(); ++i) {
      into.layers[k].weights[i] += other.layers[k].weights[i];
    }
    for (std::size_t i = 0; i < into.layers[k].bias.size(); ++i) {
      into.layers[k].bias[i] += other.layers[k].bias[i];
    }
  }
}

/// Exact backward pass through the cached forward computation. Gradients are
/// accumulated into `grads` (callers zero-initialize via make_zero_grads and
/// may sum several backward passes). Returns the gradient w.r.t. the input.
///
/// With a softmax head, `output_gradient` is taken w.r.t. the probabilities;
/// the softmax Jacobian dp/dz = diag(p) - p p^T is applied here.
inline Vec mlp_backward(const MlpParams& params, const ForwardCache& cache,
                        const Vec& output_gradient, MlpGrads& grads) {
  const std::size_t n_layers = params.layers.size();
  if (cache.activations.size() != n_layers ||
      cache.input.size() != params.input_dim()) {
    throw ValidationError("mlp_backward: cache does not match params");
  }
  if (output_gradient.size() != params.output_dim()) {
    throw ValidationError("mlp_backward: output gradient length mismatch");
  }
  if (grads.layers.size() != n_layers) {
    throw ValidationError("mlp_backward: grads do not match params");
  }

  // delta = dL/dz for the current layer.
  Vec delta = output_gradient;
  if (params.output_activation == OutputActivation::Softmax) {
    const Vec& p = cache.activations.back();
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      dot += p[i] * output_gradient[i];
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      delta[i] = p[i] * (output_gradient[i] - dot);
    }
  }

  for (std::size_t k = n_layers; k-- > 0;) {
    const auto& layer = params.layers[k];
    const Vec& below = k == 0 ? cache.input : cache.activations[k - 1];
    auto& g = grads.layers[k];
    for (std::size_t r = 0; r < layer.out; ++r) {
      g.bias[r] += delta[r];
      double* grow = g.weights.data() + r * layer.in;
      for (std::size_t c = 0; c < layer.in; ++c) {
        grow[c] += delta[r] * below[c];
      }
    }
    if (k == 0) {
      Vec input_grad(layer.in, 0.0);
      for (std::size_t r = 0; r < layer.out; ++r) {
        const double* row = layer.weights.data() + r * layer.in;
        for (std::size_t c = 0; c < layer.in; ++c) {
          input_grad[c] += row[c] * delta[r];
        }
      }
      return input_grad;
    }
    // Propagate through the tanh of the layer below: tanh' = 1 - tanh^2.
    Vec next_delta(layer.in, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double* row = layer.weights.data() + r * layer.in;
      for (std::size_t c = 0; c < layer.in; ++c) {
        next_delta[c] += row[c] * delta[r];
      }
    }
    const Vec& act = cache.activations[k - 1];
    for (std::size_t c = 0; c < layer.in; ++c) {
      next_delta[c] *= 1.0 - act[c] * act[c];
    }
    delta = std::move(next_delta);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<DenseLayer> first_moment;
  std::vector<DenseLayer> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamState make_adam_state(const MlpParams& params) {
  AdamState state;
  state.first_moment = make_zero_grads(params).layers;
  state.second_moment = make_zero_grads(params).layers;
  return state;
}

/// One bias-corrected Adam update, applied in place.
inline void adam_step(MlpParams& params, const MlpGrads& grads,
                      AdamState& state, double learning_rate) {
  if (learning_rate <= 0.0) {
    throw ValidationError("adam_step: learning_rate must be positive");
  }
  if (grads.layers.size() != params.layers.size() ||
      state.first_moment.size() != params.layers.size()) {
    throw ValidationError("adam_step: shape mismatch");
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  auto update = [&](double& param, double grad, double& m, double& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * grad;
    v = state.beta2 * v + (1.0 - state.beta2) * grad * grad;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    param -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  };

  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& layer = params.layers[k];
    const auto& g = grads.layers[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (g.weights.size() != layer.weights.size() ||
        g.bias.size() != layer.bias.size()) {
      throw ValidationError("adam_step: gradient shape mismatch in layer " +
                            std::to_string(k));
    }
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      update(layer.weights[i], g.weights[i], m.weights[i], v.weights[i]);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      update(layer.bias[i], g.bias[i], m.bias[i], v.bias[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned header, layer shapes, row-major weight payloads,
// optimizer state optional. Fixed-width little-endian fields.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'L', 'S', 'I', 'M',
                                             'N', 'N', '0', '1'};

inline void write_u64(std::ofstream& out, std::uint64_t value) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  }
  out.write(bytes, 8);
}

inline std::uint64_t read_u64(std::ifstream& in) {
  char bytes[8];
  in.read(bytes, 8);
  if (!in) {
    throw ParseError("checkpoint: truncated integer field");
  }
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) {
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i]))
             << (8 * i);
  }
  return value;
}

inline void write_f64(std::ofstream& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  write_u64(out, bits);
}

inline double read_f64(std::ifstream& in) {
  const std::uint64_t bits = read_u64(in);
  double value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

inline void write_layer_payload(std::ofstream& out, const DenseLayer& layer) {
  for (const auto w : layer.weights) {
    write_f64(out, w);
  }
  for (const auto b : layer.bias) {
    write_f64(out, b);
  }
}

inline void read_layer_payload(std::ifstream& in, DenseLayer& layer) {
  for (auto& w : layer.weights) {
    w = read_f64(in);
  }
  for (auto& b : layer.bias) {
    b = read_f64(in);
  }
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const MlpParams& params,
                            const AdamState* adam = nullptr) {
  validate_params(params);
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write checkpoint: " + path.string());
  }
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::write_u64(out, params.layers.size());
  detail::write_u64(
      out, params.output_activation == OutputActivation::Softmax ? 1 : 0);
  for (const auto& layer : params.layers) {
    detail::write_u64(out, layer.out);
    detail::write_u64(out, layer.in);
  }
  for (const auto& layer : params.layers) {
    detail::write_layer_payload(out, layer);
  }
  detail::write_u64(out, adam != nullptr ? 1 : 0);
  if (adam != nullptr) {
    detail::write_u64(out, adam->step_count);
    detail::write_f64(out, adam->beta1);
    detail::write_f64(out, adam->beta2);
    detail::write_f64(out, adam->epsilon);
    for (const auto& layer : adam->first_moment) {
      detail::write_layer_payload(out, layer);
    }
    for (const auto& layer : adam->second_moment) {
      detail::write_layer_payload(out, layer);
    }
  }
}

struct Checkpoint {
  MlpParams params;
  std::optional<AdamState> adam;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint: " + path.string());
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError("checkpoint: bad magic in " + path.string());
  }
  Checkpoint ckpt;
  const std::uint64_t n_layers = detail::read_u64(in);
  ckpt.params.output_activation = detail::read_u64(in) == 1
                                      ? OutputActivation::Softmax
                                      : OutputActivation::Identity;
  for (std::uint64_t k = 0; k < n_layers; ++k) {
    DenseLayer layer;
    layer.out = detail::read_u64(in);
    layer.in = detail::read_u64(in);
    layer.weights.resize(layer.out * layer.in);
    layer.bias.resize(layer.out);
    ckpt.params.layers.push_back(std::move(layer));
  }
  for (auto& layer : ckpt.params.layers) {
    detail::read_layer_payload(in, layer);
  }
  validate_params(ckpt.params);
  if (detail::read_u64(in) == 1) {
    AdamState adam = make_adam_state(ckpt.params);
    adam.step_count = detail::read_u64(in);
    adam.beta1 = detail::read_f64(in);
    adam.beta2 = detail::read_f64(in);
    adam.epsilon = detail::read_f64(in);
    for (auto& layer : adam.first_moment) {
      detail::read_layer_payload(in, layer);
    }
    for (auto& layer : adam.second_moment) {
      detail::read_layer_payload(in, layer);
    }
    ckpt.adam = std::move(adam);
  }
  return ckpt;
}

}  // namespace lsim
