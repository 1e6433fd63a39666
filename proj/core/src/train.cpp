#include "hloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "hloc/error.hpp"
#include "hloc/rng.hpp"

namespace hloc::train {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid TrainConfig: ") + what);
  };
  require(d_thr > 0.0, "d_thr must be > 0");
  require(margin >= 0.0, "margin must be >= 0");
  require(batch_size >= 3, "batch_size must be >= 3");
  require(epochs >= 1, "epochs must be >= 1");
  require(lr0 > 0.0, "lr0 must be > 0");
  require(weight_decay0 >= 0.0, "weight_decay0 must be >= 0");
}

MinedBatch mine(std::span<const Eigen::Vector3d> positions, double d_thr) {
  const int n = static_cast<int>(positions.size());
  MinedBatch mined;
  mined.positives.resize(n);
  mined.negatives.resize(n);
  for (int a = 0; a < n; ++a) {
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      const double d = (positions[a] - positions[i]).norm();
      (d <= d_thr ? mined.positives[a] : mined.negatives[a]).push_back(i);
    }
  }
  return mined;
}

TripletLoss batch_all_loss(const Eigen::MatrixXd& embeddings, const MinedBatch& mined,
                           double margin) {
  const auto n = embeddings.rows();
  if (static_cast<std::size_t>(n) != mined.size()) {
    throw InvariantError("batch_all_loss: embedding count does not match mined batch");
  }
  if (margin < 0.0) throw InvariantError("batch_all_loss: margin must be >= 0");

  Eigen::MatrixXd dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist(i, j) = dist(j, i) = (embeddings.row(i) - embeddings.row(j)).norm();
    }
  }

  // coeff(a, j) accumulates d(loss_sum)/d(dist(a, j)) over active triplets.
  Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(n, n);
  TripletLoss out;
  double sum = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (int p : mined.positives[a]) {
      for (int q : mined.negatives[a]) {
        ++out.total_triplets;
        const double hinge = dist(a, p) - dist(a, q) + margin;
        if (hinge > 0.0) {
          sum += hinge;
          ++out.active_triplets;
          coeff(a, p) += 1.0;
          coeff(a, q) -= 1.0;
        }
      }
    }
  }

  out.d_embeddings = Eigen::MatrixXd::Zero(n, embeddings.cols());
  if (out.active_triplets == 0) return out;
  const double inv_active = 1.0 / static_cast<double>(out.active_triplets);
  out.loss = sum * inv_active;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double c = coeff(a, j);
      if (c == 0.0 || dist(a, j) == 0.0) continue;
      const Eigen::RowVectorXd unit = (embeddings.row(a) - embeddings.row(j)) / dist(a, j);
      out.d_embeddings.row(a) += c * inv_active * unit;
      out.d_embeddings.row(j) -= c * inv_active * unit;
    }
  }
  return out;
}

double learning_rate(const TrainConfig& config, double epoch) {
  const double gamma = std::pow(0.01, 1.0 / config.epochs);
  return config.lr0 * std::pow(gamma, epoch);
}

double weight_decay(const TrainConfig& config, double epoch) {
  return config.weight_decay0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * epoch / config.epochs));
}

AdamState make_adam_state(const net::NetworkParams& params) {
  return {net::zero_gradients(params), net::zero_gradients(params), 0};
}

void adamw_step(net::NetworkParams& params, const net::Gradients& grads,
                AdamState& state, double lr, double wd, const TrainConfig& config) {
  net::for_each_tensor_pair(grads, params, [](const std::string& name, const auto& g,
                                              const auto&, net::TensorRole) {
    if (!g.allFinite()) throw NumericError("non-finite gradient in tensor " + name);
  });

  ++state.step;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double eps = config.adam_epsilon;

  std::vector<Eigen::Map<Eigen::MatrixXd>> m_tensors, v_tensors;
  net::for_each_tensor(state.first_moment, [&](const std::string&, auto& t, net::TensorRole) {
    m_tensors.emplace_back(t.data(), t.rows(), t.cols());
  });
  net::for_each_tensor(state.second_moment, [&](const std::string&, auto& t, net::TensorRole) {
    v_tensors.emplace_back(t.data(), t.rows(), t.cols());
  });

  std::size_t i = 0;
  net::for_each_tensor_pair(params, grads, [&](const std::string&, auto& theta,
                                               const auto& g, net::TensorRole role) {
    auto& m = m_tensors[i];
    auto& v = v_tensors[i];
    ++i;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    auto th = theta.reshaped();
    const auto mr = m.reshaped();
    const auto vr = v.reshaped();
    for (Eigen::Index k = 0; k < th.size(); ++k) {
      const double m_hat = mr(k) / bias1;
      const double v_hat = vr(k) / bias2;
      double update = lr * m_hat / (std::sqrt(v_hat) + eps);
      if (role == net::TensorRole::kWeight) update += wd * th(k);
      th(k) -= update;
    }
  });
}

std::vector<TrainingSample> collect_samples(std::span<const Trial> trials) {
  std::vector<TrainingSample> samples;
  for (const Trial& trial : trials) {
    for (const StepEvent& e : trial.events) {
      if (!e.foothold_world_truth) {
        throw InvariantError("trial " + trial.trial_id + " step_id " +
                             std::to_string(e.step_id) +
                             ": missing foothold_world_truth required for training");
      }
      samples.push_back({e.signal, *e.foothold_world_truth});
    }
  }
  return samples;
}

FitResult fit(std::span<const Trial> trials, const net::NetConfig& net_config,
              const TrainConfig& config, const ProgressSink& progress) {
  const std::vector<TrainingSample> samples = collect_samples(trials);
  return fit(samples, net_config, config, progress);
}

FitResult fit(std::span<const TrainingSample> samples, const net::NetConfig& net_config,
              const TrainConfig& config, const ProgressSink& progress) {
  config.validate();
  net_config.validate();
  if (samples.size() < static_cast<std::size_t>(config.batch_size)) {
    throw InvariantError("dataset has " + std::to_string(samples.size()) +
                         " samples, smaller than one batch of " +
                         std::to_string(config.batch_size));
  }

  FitResult result{net::init_params(net_config), {}};
  net::NetworkParams& params = result.params;
  AdamState adam = make_adam_state(params);
  Rng rng(derive_seed(config.seed, "train.shuffle"));

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batches = samples.size() / config.batch_size;

  std::vector<HapticSignal> signals(config.batch_size);
  std::vector<Eigen::Vector3d> positions(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate(config, epoch);
    const double wd = weight_decay(config, epoch);
    EpochLog log{epoch, 0.0, 0, lr, wd};
    for (std::size_t b = 0; b < batches; ++b) {
      for (int k = 0; k < config.batch_size; ++k) {
        const TrainingSample& s = samples[order[b * config.batch_size + k]];
        signals[k] = s.signal;
        positions[k] = s.position;
      }
      net::ForwardResult fwd = net::forward(params, signals, net::Mode::kTrain);
      const TripletLoss loss =
          batch_all_loss(fwd.embeddings, mine(positions, config.d_thr), config.margin);
      const net::Gradients grads = net::backward(params, fwd.cache, loss.d_embeddings);
      adamw_step(params, grads, adam, lr, wd, config);
      log.mean_loss += loss.loss;
      log.active_triplets += loss.active_triplets;
    }
    log.mean_loss /= static_cast<double>(batches);
    result.log.push_back(log);
    if (progress) progress(log);
  }
  return result;
}

void write_loss_log(std::span<const EpochLog> log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,mean_loss,active_triplets,lr,wd\n";
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << format_double(e.mean_loss) << ',' << e.active_triplets << ','
        << format_double(e.lr) << ',' << format_double(e.wd) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace hloc::train
