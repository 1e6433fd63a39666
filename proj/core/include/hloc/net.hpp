#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "hloc/signal_io.hpp"

namespace hloc::net {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct NetConfig {
  int seq_len = kSignalLength;
  int in_dim = kSignalChannels;
  int d_model = 16;
  int n_heads = 2;
  int d_ff = 8;
  int n_encoder_layers = 1;
  int embed_dim = 256;
  std::uint64_t seed = 0;

  // Throws ConfigError on an invalid configuration.
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Row-vector convention: y = x * weight + bias, weight is (in x out).
struct Linear {
  Matrix weight;
  RowVector bias;
};

struct NormAffine {
  RowVector gain;
  RowVector bias;
};

struct EncoderLayer {
  Linear query, key, value, output;
  NormAffine attention_norm;
  Linear ff_inner, ff_outer;
  NormAffine ff_norm;
};

// Every learnable tensor of the Signal Transformer, in serialization order.
struct ParamTensors {
  Linear input_proj;
  Matrix pos_encoding;  // seq_len x d_model
  NormAffine pre_norm;
  std::vector<EncoderLayer> layers;
  NormAffine head_norm;  // batch-norm gain/bias
  Linear head_dense;
};

struct NetworkParams : ParamTensors {
  NetConfig config;
  RowVector running_mean;
  RowVector running_var;
};

// Same shapes as the learnable part of NetworkParams.
struct Gradients : ParamTensors {};

enum class TensorRole { kWeight, kNoDecay };

// Calls fn(name, tensor, role) for each learnable tensor in a fixed order.
// Normalization gains/biases and the positional encoding report kNoDecay.
template <class P, class Fn>
void for_each_tensor(P& params, Fn&& fn);

// Visits two congruent parameter sets in lockstep: fn(name, a_tensor, b_tensor, role).
template <class A, class B, class Fn>
void for_each_tensor_pair(A& a, B& b, Fn&& fn);

NetworkParams init_params(const NetConfig& config);
Gradients zero_gradients(const NetworkParams& params);

std::int64_t param_count(const NetConfig& config);
std::int64_t encoder_layer_param_count(const NetConfig& config);
std::int64_t param_count(const ParamTensors& tensors);

// Hash over the learnable tensors; used to detect params mutated between a
// forward pass and its backward pass.
std::uint64_t fingerprint(const ParamTensors& tensors);

enum class Mode { kTrain, kInfer };

// Activations for one sample through one encoder layer.
struct LayerCache {
  Matrix input;                           // T x D
  Matrix q, k, v;                         // T x D
  std::vector<Matrix> attention;          // per head, T x T row-stochastic
  Matrix heads;                           // T x D, concatenated head outputs
  Matrix attn_xhat;                       // T x D
  Eigen::VectorXd attn_inv_std;           // T
  Matrix attn_out;                        // T x D, post-norm
  Matrix ff_pre;                          // T x d_ff, before ReLU
  Matrix ff_xhat;                         // T x D
  Eigen::VectorXd ff_inv_std;             // T
};

struct SampleCache {
  Matrix input;                           // T x in_dim
  Matrix pre_xhat;                        // T x D
  Eigen::VectorXd pre_inv_std;            // T
  std::vector<LayerCache> layers;
  RowVector pooled;                       // 1 x D
};

struct ForwardCache {
  Mode mode = Mode::kInfer;
  std::uint64_t params_fingerprint = 0;
  std::vector<SampleCache> samples;
  Matrix head_xhat;                       // B x D
  RowVector head_inv_std;                 // 1 x D
  Matrix head_pre_relu;                   // B x E
};

struct ForwardResult {
  Matrix embeddings;  // B x embed_dim, row per sample
  ForwardCache cache;
};

// Train mode normalizes the pooled features with batch statistics and updates
// the running statistics; it needs a batch of at least two. Infer mode uses
// the running statistics and leaves params untouched.
ForwardResult forward(NetworkParams& params, std::span<const HapticSignal> batch,
                      Mode mode);
ForwardResult forward(const NetworkParams& params,
                      std::span<const HapticSignal> batch);

// Infer-mode embedding of a batch / single signal.
Matrix embed(const NetworkParams& params, std::span<const HapticSignal> batch);
Eigen::VectorXd embed(const NetworkParams& params, const HapticSignal& signal);

// Reverse-mode gradient of a scalar loss whose gradient with respect to the
// embeddings is `d_embeddings` (B x embed_dim). Requires a train-mode cache
// produced with the same params.
Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   const Matrix& d_embeddings);

// .stnet binary format.
void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path);
// Same as load_params, but rejects a file whose config differs from `expected`.
NetworkParams load_params(const std::filesystem::path& path, const NetConfig& expected);

// ---------------------------------------------------------------------------

namespace detail {
template <class L, class Fn>
void visit_linear(std::string_view prefix, L& a, Fn& fn) {
  fn(std::string(prefix) + ".weight", a.weight, TensorRole::kWeight);
  fn(std::string(prefix) + ".bias", a.bias, TensorRole::kWeight);
}
template <class N, class Fn>
void visit_norm(std::string_view prefix, N& a, Fn& fn) {
  fn(std::string(prefix) + ".gain", a.gain, TensorRole::kNoDecay);
  fn(std::string(prefix) + ".bias", a.bias, TensorRole::kNoDecay);
}
}  // namespace detail

template <class P, class Fn>
void for_each_tensor(P& params, Fn&& fn) {
  detail::visit_linear("input_proj", params.input_proj, fn);
  fn(std::string("pos_encoding"), params.pos_encoding, TensorRole::kNoDecay);
  detail::visit_norm("pre_norm", params.pre_norm, fn);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& l = params.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    detail::visit_linear(p + "query", l.query, fn);
    detail::visit_linear(p + "key", l.key, fn);
    detail::visit_linear(p + "value", l.value, fn);
    detail::visit_linear(p + "output", l.output, fn);
    detail::visit_norm(p + "attention_norm", l.attention_norm, fn);
    detail::visit_linear(p + "ff_inner", l.ff_inner, fn);
    detail::visit_linear(p + "ff_outer", l.ff_outer, fn);
    detail::visit_norm(p + "ff_norm", l.ff_norm, fn);
  }
  detail::visit_norm("head_norm", params.head_norm, fn);
  detail::visit_linear("head_dense", params.head_dense, fn);
}

template <class A, class B, class Fn>
void for_each_tensor_pair(A& a, B& b, Fn&& fn) {
  using BMap = Eigen::Map<std::conditional_t<std::is_const_v<B>,
                                             const Eigen::MatrixXd, Eigen::MatrixXd>>;
  std::vector<BMap> b_tensors;
  for_each_tensor(b, [&](const std::string&, auto& t, TensorRole) {
    b_tensors.emplace_back(t.data(), t.rows(), t.cols());
  });
  std::size_t i = 0;
  for_each_tensor(a, [&](const std::string& name, auto& t, TensorRole role) {
    fn(name, t, b_tensors.at(i++), role);
  });
}

}  // namespace hloc::net
