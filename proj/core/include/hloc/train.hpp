#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hloc/net.hpp"
#include "hloc/signal_io.hpp"

namespace hloc::train {

struct TrainConfig {
  double d_thr = 0.25;  // meters
  double margin = 0.2;
  int batch_size = 128;
  int epochs = 200;
  double lr0 = 5e-4;
  double weight_decay0 = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-anchor index sets: positives[a] and negatives[a] partition every index
// other than a.
struct MinedBatch {
  std::vector<std::vector<int>> positives;
  std::vector<std::vector<int>> negatives;

  std::size_t size() const { return positives.size(); }
};

// Geometric mining: i is a positive of anchor a iff ||s_a - s_i|| <= d_thr.
MinedBatch mine(std::span<const Eigen::Vector3d> positions, double d_thr);

struct TripletLoss {
  double loss = 0.0;
  Eigen::MatrixXd d_embeddings;  // same shape as the embeddings
  std::int64_t active_triplets = 0;
  std::int64_t total_triplets = 0;
};

// Batch-All triplet loss: sum of hinge terms over every (a, p, n) divided by
// the number of strictly positive hinge terms. `embeddings` has one row per
// sample. The gradient holds the active set fixed; a zero embedding distance
// contributes a zero subgradient.
TripletLoss batch_all_loss(const Eigen::MatrixXd& embeddings, const MinedBatch& mined,
                           double margin);

// Learning rate lr0 * gamma^epoch with gamma = 0.01^(1/epochs).
double learning_rate(const TrainConfig& config, double epoch);
// weight_decay0 * 0.5 * (1 + cos(pi * epoch / epochs)).
double weight_decay(const TrainConfig& config, double epoch);

struct AdamState {
  net::Gradients first_moment;
  net::Gradients second_moment;
  std::int64_t step = 0;
};

AdamState make_adam_state(const net::NetworkParams& params);

// One decoupled-weight-decay Adam update:
//   theta -= lr * m_hat / (sqrt(v_hat) + eps) + wd * theta
// where wd applies only to kWeight tensors. Throws NumericError on a
// non-finite gradient.
void adamw_step(net::NetworkParams& params, const net::Gradients& grads,
                AdamState& state, double lr, double wd, const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  std::int64_t active_triplets = 0;
  double lr = 0.0;
  double wd = 0.0;
};

struct FitResult {
  net::NetworkParams params;
  std::vector<EpochLog> log;
};

using ProgressSink = std::function<void(const EpochLog&)>;

struct TrainingSample {
  HapticSignal signal;
  Eigen::Vector3d position;
};

// Collects (signal, world foothold) pairs; throws InvariantError naming the
// first step without foothold_world_truth.
std::vector<TrainingSample> collect_samples(std::span<const Trial> trials);

// Mini-batches are drawn by shuffling the sample order every epoch and taking
// consecutive full batches (a trailing partial batch is dropped).
FitResult fit(std::span<const Trial> trials, const net::NetConfig& net_config,
              const TrainConfig& config, const ProgressSink& progress = {});
FitResult fit(std::span<const TrainingSample> samples, const net::NetConfig& net_config,
              const TrainConfig& config, const ProgressSink& progress = {});

// CSV with header epoch,mean_loss,active_triplets,lr,wd.
void write_loss_log(std::span<const EpochLog> log, const std::filesystem::path& path);

}  // namespace hloc::train
