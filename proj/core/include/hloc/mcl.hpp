#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hloc/map.hpp"
#include "hloc/net.hpp"
#include "hloc/pose.hpp"
#include "hloc/rng.hpp"
#include "hloc/signal_io.hpp"

namespace hloc::mcl {

struct Particle {
  Pose pose;
  double weight = 0.0;
};

// Haptic measurement model. use_elevation selects HL-ST (true) or HL-T.
struct MeasurementModelConfig {
  double sigma_latent = 0.4;
  double sigma_2d = 0.4;          // meters
  double sigma_elevation = 0.01;  // meters
  double match_threshold = 0.25;  // d_t, meters
  double p_min = 0.001;
  bool use_elevation = true;

  void validate() const;
};

// Motion noise standard deviations. z, roll and pitch use
// `vertical_fraction` of the planar values.
struct MotionNoise {
  double translation_per_meter = 0.1;
  double yaw_per_radian = 0.05;
  double yaw_per_meter = 0.02;
  double vertical_fraction = 0.2;
};

struct MclConfig {
  int n_particles = 500;
  MotionNoise motion;
  double resample_threshold = 0.5;  // fraction of n for the ESS gate
  double init_sigma_xy = 0.1;
  double init_sigma_yaw = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

// Composes each particle with `increment` perturbed by zero-mean Gaussian
// noise scaled by the increment's translation length and yaw angle.
void predict(std::vector<Particle>& particles, const Pose& increment,
             const MotionNoise& noise, Rng& rng);

// Foothold in the world frame for a particle pose.
Eigen::Vector3d foot_world(const Pose& pose, const Eigen::Vector3d& foothold_base);

struct LikelihoodTerms {
  double value = 0.0;
  double log_value = 0.0;
  double d_2d = 0.0;
  double d_latent = 0.0;
  double d_elevation = 0.0;
  bool matched = false;
};

// exp(-d^2 / (2 sigma^2)); peaks at 1.
double unnormalized_gaussian(double d, double sigma);

// p_min when the nearest map entry is farther than match_threshold in 2D,
// otherwise the product of unnormalized Gaussians of the latent, 2D and
// (HL-ST only) elevation distances. `value` is floored at the smallest
// positive normal double; `log_value` is exact.
LikelihoodTerms likelihood_terms(const map::SparseHapticMap& map,
                                 const Eigen::Vector3d& foot_position,
                                 const Eigen::VectorXd& embedding,
                                 const MeasurementModelConfig& config);
double likelihood(const map::SparseHapticMap& map, const Eigen::Vector3d& foot_position,
                  const Eigen::VectorXd& embedding, const MeasurementModelConfig& config);

// Multiplies each weight by its particle's likelihood and renormalizes.
// Computed in the log domain so products of tiny likelihoods do not
// underflow the whole set.
void update(std::vector<Particle>& particles, const Eigen::Vector3d& foothold_base,
            const Eigen::VectorXd& embedding, const map::SparseHapticMap& map,
            const MeasurementModelConfig& config);

void normalize_weights(std::vector<Particle>& particles);

double effective_sample_size(std::span<const Particle> particles);

// Systematic resampling with a single offset u0 in [0, 1/n): returns the
// parent index of each of the n offspring.
std::vector<std::size_t> systematic_indices(std::span<const double> weights, std::size_t n,
                                            double u0);

// Resamples (and resets weights to 1/n) only when ESS < threshold * n.
// Returns whether resampling happened.
bool resample(std::vector<Particle>& particles, double threshold, Rng& rng);

// Weighted mean translation; rotation is the weighted quaternion sum with
// signs aligned to the highest-weight particle, renormalized.
Pose estimate(std::span<const Particle> particles);

std::vector<Particle> initialize(const Pose& center, const MclConfig& config, Rng& rng);

struct TrajectoryRecord {
  double timestamp = 0.0;
  std::int64_t step_id = 0;
  Pose estimate;
  std::optional<Pose> truth;
  double ess = 0.0;

  bool operator==(const TrajectoryRecord&) const = default;
};

struct TrajectoryLog {
  std::string trial_id;
  std::vector<TrajectoryRecord> records;

  bool operator==(const TrajectoryLog&) const = default;
};

// Replays a trial: initialize around the first ground-truth pose, then per
// step predict from the odometry increment, embed, update, conditionally
// resample and record the estimate.
TrajectoryLog run_localization(const Trial& trial, const map::SparseHapticMap& map,
                               const net::NetworkParams& params, const MclConfig& mcl_config,
                               const MeasurementModelConfig& mm_config);

// Raw odometry as an estimate, aligned to the first ground-truth pose.
TrajectoryLog odometry_log(const Trial& trial);

// CSV with header
// timestamp,step_id,est_tx,est_ty,est_tz,est_qw,est_qx,est_qy,est_qz,
// truth_tx,truth_ty,truth_tz,truth_qw,truth_qx,truth_qy,truth_qz,ess
void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path);
TrajectoryLog read_trajectory_csv(const std::filesystem::path& path);

}  // namespace hloc::mcl
