#include "hloc/mcl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "hloc/error.hpp"

namespace hloc::mcl {

void MeasurementModelConfig::validate() const {
  if (!(sigma_latent > 0.0 && sigma_2d > 0.0 && sigma_elevation > 0.0)) {
    throw ConfigError("measurement model sigmas must be > 0");
  }
  if (!(p_min > 0.0)) throw ConfigError("p_min must be > 0");
  if (!(match_threshold > 0.0)) throw ConfigError("match threshold d_t must be > 0");
}

void MclConfig::validate() const {
  if (n_particles < 2) throw ConfigError("n_particles must be >= 2");
  if (resample_threshold < 0.0 || resample_threshold > 1.0) {
    throw ConfigError("resample_threshold must be in [0, 1]");
  }
  const MotionNoise& m = motion;
  if (m.translation_per_meter < 0 || m.yaw_per_radian < 0 || m.yaw_per_meter < 0 ||
      m.vertical_fraction < 0 || init_sigma_xy < 0 || init_sigma_yaw < 0) {
    throw ConfigError("noise standard deviations must be >= 0");
  }
}

void predict(std::vector<Particle>& particles, const Pose& increment,
             const MotionNoise& noise, Rng& rng) {
  if (!is_finite(increment)) throw InvariantError("predict: non-finite odometry increment");
  const double distance = increment.translation.norm();
  const double turn = std::abs(increment.yaw());
  const double sigma_xy = noise.translation_per_meter * distance;
  const double sigma_z = noise.vertical_fraction * sigma_xy;
  const double sigma_yaw = noise.yaw_per_radian * turn + noise.yaw_per_meter * distance;
  const double sigma_tilt = noise.vertical_fraction * noise.yaw_per_radian * turn;
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (Particle& p : particles) {
    Pose step = increment;
    if (sigma_xy > 0.0 || sigma_yaw > 0.0) {
      const double nx = sigma_xy * gauss(rng);
      const double ny = sigma_xy * gauss(rng);
      const double nz = sigma_z * gauss(rng);
      const double nroll = sigma_tilt * gauss(rng);
      const double npitch = sigma_tilt * gauss(rng);
      const double nyaw = sigma_yaw * gauss(rng);
      step.translation += Eigen::Vector3d(nx, ny, nz);
      step.rotation = (step.rotation * rpy_to_quaternion(nroll, npitch, nyaw)).normalized();
    }
    p.pose = p.pose * step;
  }
}

Eigen::Vector3d foot_world(const Pose& pose, const Eigen::Vector3d& foothold_base) {
  return pose * foothold_base;
}

double unnormalized_gaussian(double d, double sigma) {
  return std::exp(-d * d / (2.0 * sigma * sigma));
}

LikelihoodTerms likelihood_terms(const map::SparseHapticMap& map,
                                 const Eigen::Vector3d& foot_position,
                                 const Eigen::VectorXd& embedding,
                                 const MeasurementModelConfig& config) {
  if (map.empty()) throw InvariantError("likelihood: map is empty");
  if (embedding.size() != map.embed_dim()) {
    throw InvariantError("likelihood: embedding length " + std::to_string(embedding.size()) +
                         " does not match map embed_dim " +
                         std::to_string(map.embed_dim()));
  }
  LikelihoodTerms t;
  const map::Match match = map.nearest(foot_position.head<2>());
  t.d_2d = match.distance;
  if (t.d_2d > config.match_threshold) {
    t.value = config.p_min;
    t.log_value = std::log(config.p_min);
    return t;
  }
  t.matched = true;
  t.d_latent = (embedding - match.entry->embedding).norm();
  auto log_gauss = [](double d, double sigma) { return -d * d / (2.0 * sigma * sigma); };
  t.log_value = log_gauss(t.d_latent, config.sigma_latent) + log_gauss(t.d_2d, config.sigma_2d);
  if (config.use_elevation) {
    t.d_elevation = foot_position.z() - match.entry->elevation;
    t.log_value += log_gauss(t.d_elevation, config.sigma_elevation);
  }
  t.value = std::max(std::exp(t.log_value), std::numeric_limits<double>::min());
  return t;
}

double likelihood(const map::SparseHapticMap& map, const Eigen::Vector3d& foot_position,
                  const Eigen::VectorXd& embedding, const MeasurementModelConfig& config) {
  return likelihood_terms(map, foot_position, embedding, config).value;
}

void normalize_weights(std::vector<Particle>& particles) {
  double sum = 0.0;
  for (const Particle& p : particles) sum += p.weight;
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw NumericError("particle weights sum to " + std::to_string(sum));
  }
  for (Particle& p : particles) p.weight /= sum;
}

void update(std::vector<Particle>& particles, const Eigen::Vector3d& foothold_base,
            const Eigen::VectorXd& embedding, const map::SparseHapticMap& map,
            const MeasurementModelConfig& config) {
  if (particles.empty()) throw InvariantError("update: no particles");
  std::vector<double> log_w(particles.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const Particle& p = particles[i];
    const double lw = std::log(p.weight) +
                      likelihood_terms(map, foot_world(p.pose, foothold_base), embedding, config)
                          .log_value;
    log_w[i] = lw;
    max_log = std::max(max_log, lw);
  }
  if (!std::isfinite(max_log)) throw NumericError("update: all particle weights vanished");
  for (std::size_t i = 0; i < particles.size(); ++i) {
    particles[i].weight = std::exp(log_w[i] - max_log);
  }
  normalize_weights(particles);
}

double effective_sample_size(std::span<const Particle> particles) {
  double sum_sq = 0.0;
  for (const Particle& p : particles) sum_sq += p.weight * p.weight;
  return 1.0 / sum_sq;
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, std::size_t n,
                                            double u0) {
  std::vector<std::size_t> out;
  out.reserve(n);
  if (weights.empty()) return out;
  const double step = 1.0 / static_cast<double>(n);
  std::size_t i = 0;
  double cumulative = weights[0];
  for (std::size_t j = 0; j < n; ++j) {
    const double u = u0 + static_cast<double>(j) * step;
    while (u >= cumulative && i + 1 < weights.size()) cumulative += weights[++i];
    out.push_back(i);
  }
  return out;
}

bool resample(std::vector<Particle>& particles, double threshold, Rng& rng) {
  const std::size_t n = particles.size();
  if (n == 0) return false;
  if (effective_sample_size(particles) >= threshold * static_cast<double>(n)) return false;

  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = particles[i].weight;
  std::uniform_real_distribution<double> offset(0.0, 1.0 / static_cast<double>(n));
  const std::vector<std::size_t> parents = systematic_indices(weights, n, offset(rng));

  std::vector<Particle> next;
  next.reserve(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t parent : parents) next.push_back({particles[parent].pose, w});
  particles = std::move(next);
  return true;
}

Pose estimate(std::span<const Particle> particles) {
  if (particles.empty()) throw InvariantError("estimate: no particles");
  const auto best = std::max_element(
      particles.begin(), particles.end(),
      [](const Particle& a, const Particle& b) { return a.weight < b.weight; });
  const Eigen::Vector4d reference = best->pose.rotation.coeffs();

  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Vector4d q = Eigen::Vector4d::Zero();
  double total = 0.0;
  for (const Particle& p : particles) {
    t += p.weight * p.pose.translation;
    Eigen::Vector4d c = p.pose.rotation.coeffs();
    if (c.dot(reference) < 0.0) c = -c;
    q += p.weight * c;
    total += p.weight;
  }
  Pose out;
  out.translation = t / total;
  out.rotation.coeffs() = q;
  out.rotation.normalize();
  return out;
}

std::vector<Particle> initialize(const Pose& center, const MclConfig& config, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma_z = config.motion.vertical_fraction * config.init_sigma_xy;
  const double sigma_tilt = config.motion.vertical_fraction * config.init_sigma_yaw;
  std::vector<Particle> particles(config.n_particles);
  const double w = 1.0 / static_cast<double>(config.n_particles);
  for (Particle& p : particles) {
    Pose offset;
    offset.translation = {config.init_sigma_xy * gauss(rng), config.init_sigma_xy * gauss(rng),
                          sigma_z * gauss(rng)};
    const double roll = sigma_tilt * gauss(rng);
    const double pitch = sigma_tilt * gauss(rng);
    const double yaw = config.init_sigma_yaw * gauss(rng);
    offset.rotation = rpy_to_quaternion(roll, pitch, yaw);
    // Position noise in the world frame, attitude noise in the body frame.
    p.pose.translation = center.translation + offset.translation;
    p.pose.rotation = (center.rotation * offset.rotation).normalized();
    p.weight = w;
  }
  return particles;
}

TrajectoryLog run_localization(const Trial& trial, const map::SparseHapticMap& map,
                               const net::NetworkParams& params, const MclConfig& mcl_config,
                               const MeasurementModelConfig& mm_config) {
  mcl_config.validate();
  mm_config.validate();
  if (map.empty()) throw InvariantError("run_localization: map is empty");
  if (map.embed_dim() != params.config.embed_dim) {
    throw InvariantError("run_localization: map embed_dim " + std::to_string(map.embed_dim()) +
                         " differs from network embed_dim " +
                         std::to_string(params.config.embed_dim));
  }
  if (trial.events.empty()) throw InvariantError("run_localization: empty trial");
  const StepEvent& first = trial.events.front();
  if (!first.truth_pose) {
    throw InvariantError("run_localization: first step needs a ground-truth pose to "
                         "initialize the particles");
  }

  Rng init_rng(derive_seed(mcl_config.seed, "mcl.init"));
  Rng motion_rng(derive_seed(mcl_config.seed, "mcl.motion"));
  Rng resample_rng(derive_seed(mcl_config.seed, "mcl.resample"));
  std::vector<Particle> particles = initialize(*first.truth_pose, mcl_config, init_rng);

  TrajectoryLog log;
  log.trial_id = trial.trial_id;
  log.records.reserve(trial.events.size());
  for (std::size_t k = 0; k < trial.events.size(); ++k) {
    const StepEvent& e = trial.events[k];
    if (k > 0) {
      const Pose increment = trial.events[k - 1].odom_pose.inverse() * e.odom_pose;
      predict(particles, increment, mcl_config.motion, motion_rng);
    }
    const Eigen::VectorXd embedding = net::embed(params, e.signal);
    update(particles, e.foothold_base, embedding, map, mm_config);
    const double ess = effective_sample_size(particles);
    resample(particles, mcl_config.resample_threshold, resample_rng);
    log.records.push_back({e.timestamp, e.step_id, estimate(particles), e.truth_pose, ess});
  }
  return log;
}

TrajectoryLog odometry_log(const Trial& trial) {
  if (trial.events.empty()) throw InvariantError("odometry_log: empty trial");
  const StepEvent& first = trial.events.front();
  const Pose anchor = first.truth_pose ? *first.truth_pose : first.odom_pose;
  const Pose align = anchor * first.odom_pose.inverse();
  TrajectoryLog log;
  log.trial_id = trial.trial_id;
  for (const StepEvent& e : trial.events) {
    log.records.push_back({e.timestamp, e.step_id, align * e.odom_pose, e.truth_pose, 0.0});
  }
  return log;
}

namespace {

void write_pose(std::ostream& out, const Pose& p) {
  const auto& t = p.translation;
  const auto& q = p.rotation;
  for (double v : {t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z()}) {
    out << ',' << format_double(v);
  }
}

}  // namespace

void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "timestamp,step_id,est_tx,est_ty,est_tz,est_qw,est_qx,est_qy,est_qz,"
         "truth_tx,truth_ty,truth_tz,truth_qw,truth_qx,truth_qy,truth_qz,ess\n";
  for (const TrajectoryRecord& r : log.records) {
    out << format_double(r.timestamp) << ',' << r.step_id;
    write_pose(out, r.estimate);
    if (r.truth) {
      write_pose(out, *r.truth);
    } else {
      out << ",,,,,,,";
    }
    out << ',' << format_double(r.ess) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

TrajectoryLog read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory log " + path.string());
  TrajectoryLog log;
  const std::string name = path.filename().string();
  log.trial_id = name.substr(0, name.find('.'));
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty trajectory log", 1);
  ++line_no;
  if (!line.starts_with("timestamp,step_id,")) {
    throw ParseError("missing trajectory CSV header", line_no);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 17) {
      throw ParseError("expected 17 fields, got " + std::to_string(fields.size()), line_no);
    }
    auto num = [&](std::size_t i) {
      const std::string& f = fields[i];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty()) {
        throw ParseError("bad number in column " + std::to_string(i + 1), line_no);
      }
      return v;
    };
    auto pose_at = [&](std::size_t i) {
      Pose p;
      p.translation = {num(i), num(i + 1), num(i + 2)};
      p.rotation = Eigen::Quaterniond(num(i + 3), num(i + 4), num(i + 5), num(i + 6));
      return p;
    };
    TrajectoryRecord r;
    r.timestamp = num(0);
    try {
      r.step_id = std::stoll(fields[1]);
    } catch (const std::exception&) {
      throw ParseError("bad step_id", line_no);
    }
    r.estimate = pose_at(2);
    const bool has_truth = std::any_of(fields.begin() + 9, fields.begin() + 16,
                                       [](const std::string& f) { return !f.empty(); });
    if (has_truth) r.truth = pose_at(9);
    r.ess = num(16);
    log.records.push_back(r);
  }
  return log;
}

}  // namespace hloc::mcl
