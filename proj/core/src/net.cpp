#include "hloc/net.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <utility>

#include "hloc/error.hpp"
#include "hloc/rng.hpp"

namespace hloc::net {
namespace {

using Eigen::ArrayXd;
using Eigen::VectorXd;

Linear make_linear(int in, int out) {
  return {Matrix::Zero(in, out), RowVector::Zero(out)};
}

NormAffine make_norm(int dim) {
  return {RowVector::Ones(dim), RowVector::Zero(dim)};
}

// Normalizes each row of `x` over its columns.
void layer_norm_rows(const Matrix& x, const NormAffine& p, Matrix& xhat,
                     VectorXd& inv_std, Matrix& out) {
  const VectorXd mean = x.rowwise().mean();
  xhat = x.colwise() - mean;
  const VectorXd var = xhat.array().square().rowwise().mean().matrix();
  inv_std = (var.array() + kNormEpsilon).rsqrt().matrix();
  xhat = inv_std.asDiagonal() * xhat;
  out = (xhat * p.gain.asDiagonal()).rowwise() + p.bias;
}

// Returns d(input) and accumulates gain/bias gradients.
Matrix layer_norm_rows_backward(const Matrix& d_out, const Matrix& xhat,
                                const VectorXd& inv_std, const NormAffine& p,
                                NormAffine& grad) {
  grad.gain += (d_out.array() * xhat.array()).colwise().sum().matrix();
  grad.bias += d_out.colwise().sum();
  const Matrix d_xhat = d_out * p.gain.asDiagonal();
  const VectorXd mean_d = d_xhat.rowwise().mean();
  const VectorXd mean_dx = (d_xhat.array() * xhat.array()).rowwise().mean().matrix();
  Matrix d_in = d_xhat.colwise() - mean_d;
  d_in -= xhat.cwiseProduct(mean_dx.replicate(1, xhat.cols()));
  return inv_std.asDiagonal() * d_in;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

Matrix affine(const Matrix& x, const Linear& l) {
  return (x * l.weight).rowwise() + l.bias;
}

void accumulate_linear(const Matrix& x, const Matrix& d_out, Linear& grad) {
  grad.weight.noalias() += x.transpose() * d_out;
  grad.bias += d_out.colwise().sum();
}

void check_batch(const NetConfig& config, std::span<const HapticSignal> batch) {
  if (batch.empty()) throw InvariantError("forward: empty batch");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].rows() != config.seq_len || batch[i].cols() != config.in_dim) {
      throw InvariantError("forward: sample " + std::to_string(i) + " has shape " +
                           std::to_string(batch[i].rows()) + "x" +
                           std::to_string(batch[i].cols()) + ", network expects " +
                           std::to_string(config.seq_len) + "x" +
                           std::to_string(config.in_dim));
    }
  }
}

// Runs one sample through projection, positional encoding and the encoder
// stack; fills `cache` when it is non-null. Returns the time-averaged output.
RowVector encode_sample(const NetworkParams& params, const Matrix& input,
                        SampleCache* cache) {
  const NetConfig& cfg = params.config;
  const int head_dim = cfg.d_model / cfg.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Matrix xhat;
  VectorXd inv_std;
  Matrix z;
  layer_norm_rows(affine(input, params.input_proj), params.pre_norm, xhat, inv_std, z);
  z += params.pos_encoding;
  if (cache) {
    cache->input = input;
    cache->pre_xhat = std::move(xhat);
    cache->pre_inv_std = std::move(inv_std);
    cache->layers.resize(params.layers.size());
  }

  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const EncoderLayer& layer = params.layers[li];
    LayerCache local;
    LayerCache& lc = cache ? cache->layers[li] : local;

    lc.q = affine(z, layer.query);
    lc.k = affine(z, layer.key);
    lc.v = affine(z, layer.value);
    lc.heads.resize(z.rows(), cfg.d_model);
    lc.attention.resize(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto qh = lc.q.middleCols(h * head_dim, head_dim);
      const auto kh = lc.k.middleCols(h * head_dim, head_dim);
      const auto vh = lc.v.middleCols(h * head_dim, head_dim);
      Matrix& a = lc.attention[h];
      a.noalias() = scale * (qh * kh.transpose());
      softmax_rows(a);
      lc.heads.middleCols(h * head_dim, head_dim).noalias() = a * vh;
    }
    const Matrix residual1 = z + affine(lc.heads, layer.output);
    layer_norm_rows(residual1, layer.attention_norm, lc.attn_xhat, lc.attn_inv_std,
                    lc.attn_out);

    lc.ff_pre = affine(lc.attn_out, layer.ff_inner);
    const Matrix ff_act = lc.ff_pre.cwiseMax(0.0);
    const Matrix residual2 = lc.attn_out + affine(ff_act, layer.ff_outer);
    lc.input = std::move(z);
    layer_norm_rows(residual2, layer.ff_norm, lc.ff_xhat, lc.ff_inv_std, z);
  }

  RowVector pooled = z.colwise().mean();
  if (cache) cache->pooled = pooled;
  return pooled;
}

ForwardResult forward_impl(const NetworkParams& params,
                           std::span<const HapticSignal> batch, Mode mode,
                           RowVector* batch_mean, RowVector* batch_var_unbiased) {
  const NetConfig& cfg = params.config;
  check_batch(cfg, batch);
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (mode == Mode::kTrain && n < 2) {
    throw InvariantError("forward: train mode needs a batch of at least 2 samples");
  }

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.mode = mode;
  Matrix pooled(n, cfg.d_model);
  if (mode == Mode::kTrain) {
    cache.params_fingerprint = fingerprint(params);
    cache.samples.resize(batch.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      pooled.row(i) = encode_sample(params, batch[i].samples, &cache.samples[i]);
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      pooled.row(i) = encode_sample(params, batch[i].samples, nullptr);
    }
  }

  RowVector mean, var;
  if (mode == Mode::kTrain) {
    mean = pooled.colwise().mean();
    const Matrix centered = pooled.rowwise() - mean;
    var = centered.array().square().colwise().mean().matrix();
    if (batch_mean) *batch_mean = mean;
    if (batch_var_unbiased) {
      *batch_var_unbiased = var * (static_cast<double>(n) / static_cast<double>(n - 1));
    }
  } else {
    mean = params.running_mean;
    var = params.running_var;
  }
  cache.head_inv_std = (var.array() + kNormEpsilon).rsqrt().matrix();
  cache.head_xhat = (pooled.rowwise() - mean) * cache.head_inv_std.asDiagonal();
  const Matrix normed = (cache.head_xhat * params.head_norm.gain.asDiagonal()).rowwise() +
                        params.head_norm.bias;
  cache.head_pre_relu = affine(normed, params.head_dense);
  result.embeddings = cache.head_pre_relu.cwiseMax(0.0);
  return result;
}

}  // namespace

void NetConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid NetConfig: ") + what);
  };
  require(seq_len >= 1, "seq_len must be positive");
  require(in_dim >= 1, "in_dim must be positive");
  require(d_model >= 1, "d_model must be positive");
  require(n_heads >= 1, "n_heads must be positive");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(d_ff >= 1, "d_ff must be positive");
  require(n_encoder_layers >= 1, "n_encoder_layers must be positive");
  require(embed_dim >= 1, "embed_dim must be >= 1");
}

NetworkParams init_params(const NetConfig& config) {
  config.validate();
  NetworkParams p;
  p.config = config;
  const int d = config.d_model;
  p.input_proj = make_linear(config.in_dim, d);
  p.pos_encoding = Matrix::Zero(config.seq_len, d);
  p.pre_norm = make_norm(d);
  p.layers.resize(config.n_encoder_layers);
  for (EncoderLayer& l : p.layers) {
    l.query = make_linear(d, d);
    l.key = make_linear(d, d);
    l.value = make_linear(d, d);
    l.output = make_linear(d, d);
    l.attention_norm = make_norm(d);
    l.ff_inner = make_linear(d, config.d_ff);
    l.ff_outer = make_linear(config.d_ff, d);
    l.ff_norm = make_norm(d);
  }
  p.head_norm = make_norm(d);
  p.head_dense = make_linear(d, config.embed_dim);
  p.running_mean = RowVector::Zero(d);
  p.running_var = RowVector::Ones(d);

  Rng rng(derive_seed(config.seed, "net.init"));
  for_each_tensor(p, [&](const std::string& name, auto& t, TensorRole) {
    const bool is_matrix = name.ends_with(".weight") || name == "pos_encoding";
    if (!is_matrix) return;
    const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  });
  return p;
}

Gradients zero_gradients(const NetworkParams& params) {
  Gradients g;
  static_cast<ParamTensors&>(g) = params;
  for_each_tensor(g, [](const std::string&, auto& t, TensorRole) { t.setZero(); });
  return g;
}

std::int64_t encoder_layer_param_count(const NetConfig& c) {
  const std::int64_t d = c.d_model;
  const std::int64_t attention = 4 * (d * d + d);
  const std::int64_t norms = 2 * (2 * d);
  const std::int64_t ff = (d * c.d_ff + c.d_ff) + (std::int64_t{c.d_ff} * d + d);
  return attention + norms + ff;
}

std::int64_t param_count(const NetConfig& c) {
  c.validate();
  const std::int64_t d = c.d_model;
  return (std::int64_t{c.in_dim} * d + d)                 // input projection
         + std::int64_t{c.seq_len} * d                    // positional encoding
         + 2 * d                                          // pre layer norm
         + c.n_encoder_layers * encoder_layer_param_count(c)
         + 2 * d                                          // batch-norm gain/bias
         + (d * c.embed_dim + c.embed_dim);               // dense head
}

std::int64_t param_count(const ParamTensors& tensors) {
  std::int64_t n = 0;
  for_each_tensor(tensors, [&](const std::string&, const auto& t, TensorRole) {
    n += t.size();
  });
  return n;
}

std::uint64_t fingerprint(const ParamTensors& tensors) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for_each_tensor(tensors, [&](const std::string&, const auto& t, TensorRole) {
    h = mix64(h ^ static_cast<std::uint64_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      h = mix64(h ^ std::bit_cast<std::uint64_t>(t.data()[i]));
    }
  });
  return h;
}

ForwardResult forward(NetworkParams& params, std::span<const HapticSignal> batch,
                      Mode mode) {
  if (mode == Mode::kInfer) return forward(std::as_const(params), batch);
  RowVector mean, var;
  ForwardResult result = forward_impl(params, batch, mode, &mean, &var);
  params.running_mean =
      (1.0 - kBatchNormMomentum) * params.running_mean + kBatchNormMomentum * mean;
  params.running_var =
      (1.0 - kBatchNormMomentum) * params.running_var + kBatchNormMomentum * var;
  return result;
}

ForwardResult forward(const NetworkParams& params, std::span<const HapticSignal> batch) {
  return forward_impl(params, batch, Mode::kInfer, nullptr, nullptr);
}

Matrix embed(const NetworkParams& params, std::span<const HapticSignal> batch) {
  return forward(params, batch).embeddings;
}

Eigen::VectorXd embed(const NetworkParams& params, const HapticSignal& signal) {
  return forward(params, std::span<const HapticSignal>(&signal, 1))
      .embeddings.row(0)
      .transpose();
}

Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   const Matrix& d_embeddings) {
  if (cache.mode != Mode::kTrain) {
    throw InvariantError("backward: cache was not produced by a train-mode forward");
  }
  if (cache.params_fingerprint != fingerprint(params)) {
    throw InvariantError("backward: stale cache, parameters changed since forward");
  }
  const NetConfig& cfg = params.config;
  const auto n = static_cast<Eigen::Index>(cache.samples.size());
  if (d_embeddings.rows() != n || d_embeddings.cols() != cfg.embed_dim) {
    throw InvariantError("backward: upstream gradient shape does not match batch");
  }

  Gradients g = zero_gradients(params);
  const int head_dim = cfg.d_model / cfg.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  // Head: ReLU, dense, batch norm (batch statistics).
  const Matrix d_pre = d_embeddings.cwiseProduct(
      (cache.head_pre_relu.array() > 0.0).cast<double>().matrix());
  const Matrix normed =
      (cache.head_xhat * params.head_norm.gain.asDiagonal()).rowwise() +
      params.head_norm.bias;
  accumulate_linear(normed, d_pre, g.head_dense);
  const Matrix d_normed = d_pre * params.head_dense.weight.transpose();
  const Matrix& xhat = cache.head_xhat;
  g.head_norm.gain += (d_normed.array() * xhat.array()).colwise().sum().matrix();
  g.head_norm.bias += d_normed.colwise().sum();
  const Matrix d_xhat = d_normed * params.head_norm.gain.asDiagonal();
  const RowVector mean_d = d_xhat.colwise().mean();
  const RowVector mean_dx = (d_xhat.array() * xhat.array()).colwise().mean().matrix();
  Matrix d_pooled = d_xhat.rowwise() - mean_d;
  d_pooled -= xhat.cwiseProduct(mean_dx.replicate(n, 1));
  d_pooled = d_pooled * cache.head_inv_std.asDiagonal();

  for (Eigen::Index i = 0; i < n; ++i) {
    const SampleCache& sc = cache.samples[i];
    const auto t_len = sc.input.rows();
    Matrix dz = d_pooled.row(i).replicate(t_len, 1) / static_cast<double>(t_len);

    for (std::size_t li = params.layers.size(); li-- > 0;) {
      const EncoderLayer& layer = params.layers[li];
      EncoderLayer& gl = g.layers[li];
      const LayerCache& lc = sc.layers[li];

      // Feed-forward block: z = LN(attn_out + ff_outer(relu(ff_inner(attn_out)))).
      const Matrix d_res2 =
          layer_norm_rows_backward(dz, lc.ff_xhat, lc.ff_inv_std, layer.ff_norm, gl.ff_norm);
      const Matrix ff_act = lc.ff_pre.cwiseMax(0.0);
      accumulate_linear(ff_act, d_res2, gl.ff_outer);
      Matrix d_ff = d_res2 * layer.ff_outer.weight.transpose();
      d_ff.array() *= (lc.ff_pre.array() > 0.0).cast<double>();
      accumulate_linear(lc.attn_out, d_ff, gl.ff_inner);
      Matrix d_attn_out = d_res2;
      d_attn_out.noalias() += d_ff * layer.ff_inner.weight.transpose();

      // Attention block: attn_out = LN(input + output(heads)).
      const Matrix d_res1 = layer_norm_rows_backward(
          d_attn_out, lc.attn_xhat, lc.attn_inv_std, layer.attention_norm,
          gl.attention_norm);
      accumulate_linear(lc.heads, d_res1, gl.output);
      const Matrix d_heads = d_res1 * layer.output.weight.transpose();

      Matrix dq(t_len, cfg.d_model), dk(t_len, cfg.d_model), dv(t_len, cfg.d_model);
      for (int h = 0; h < cfg.n_heads; ++h) {
        const Matrix& a = lc.attention[h];
        const auto d_head = d_heads.middleCols(h * head_dim, head_dim);
        const Matrix d_a = d_head * lc.v.middleCols(h * head_dim, head_dim).transpose();
        dv.middleCols(h * head_dim, head_dim).noalias() = a.transpose() * d_head;
        const Eigen::VectorXd row_dot = (d_a.array() * a.array()).rowwise().sum().matrix();
        Matrix d_s = a.cwiseProduct(d_a.colwise() - row_dot);
        d_s *= scale;
        dq.middleCols(h * head_dim, head_dim).noalias() =
            d_s * lc.k.middleCols(h * head_dim, head_dim);
        dk.middleCols(h * head_dim, head_dim).noalias() =
            d_s.transpose() * lc.q.middleCols(h * head_dim, head_dim);
      }
      accumulate_linear(lc.input, dq, gl.query);
      accumulate_linear(lc.input, dk, gl.key);
      accumulate_linear(lc.input, dv, gl.value);
      dz = d_res1;
      dz.noalias() += dq * layer.query.weight.transpose();
      dz.noalias() += dk * layer.key.weight.transpose();
      dz.noalias() += dv * layer.value.weight.transpose();
    }

    g.pos_encoding += dz;
    const Matrix d_proj =
        layer_norm_rows_backward(dz, sc.pre_xhat, sc.pre_inv_std, params.pre_norm, g.pre_norm);
    accumulate_linear(sc.input, d_proj, g.input_proj);
  }
  return g;
}

}  // namespace hloc::net
