#include "hloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "hloc/error.hpp"
#include "hloc/pose.hpp"

namespace hloc::synth {
namespace {

constexpr int kFieldFeatures = 48;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Typical magnitude of force (N) and torque (Nm) channels; scales offsets,
// modulation and noise.
constexpr std::array<double, kSignalChannels> kChannelScale = {15.0, 15.0, 40.0,
                                                               1.5,  1.5,  1.5};

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void WorldConfig::validate() const {
  if (!(width > 0.0 && height > 0.0)) throw ConfigError("arena dimensions must be > 0");
  if (n_regions < 1) throw ConfigError("n_regions must be >= 1");
  if (elevation_amplitude < 0.0 || region_height_step < 0.0 || modulation_scale < 0.0 ||
      signal_noise < 0.0) {
    throw ConfigError("world amplitudes and noise must be >= 0");
  }
  if (!(elevation_length_scale > 0.0 && modulation_length_scale > 0.0)) {
    throw ConfigError("length scales must be > 0");
  }
  if (!(step_length > 0.0 && step_period > 0.0)) {
    throw ConfigError("step_length and step_period must be > 0");
  }
}

void OdometryNoiseConfig::validate() const {
  if (translation_drift_per_meter < 0.0 || vertical_drift_per_meter < 0.0 ||
      yaw_drift_per_radian < 0.0 || translation_noise < 0.0 || yaw_noise < 0.0) {
    throw ConfigError("odometry noise parameters must be >= 0");
  }
}

SmoothField::SmoothField(double length_scale, int n_features, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0 / length_scale);
  for (int i = 0; i < n_features; ++i) {
    frequencies_.emplace_back(gauss(rng), gauss(rng));
    phases_.push_back(uniform(rng, 0.0, kTwoPi));
  }
}

double SmoothField::operator()(const Eigen::Vector2d& p) const {
  if (frequencies_.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < frequencies_.size(); ++i) {
    sum += std::cos(frequencies_[i].dot(p) + phases_[i]);
  }
  return std::sqrt(2.0 / static_cast<double>(frequencies_.size())) * sum;
}

World::World(const WorldConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config.seed, "synth.world"));
  for (int r = 0; r < config.n_regions; ++r) {
    centers_.emplace_back(uniform(rng, 0.0, config.width), uniform(rng, 0.0, config.height));
  }
  for (int r = 0; r < config.n_regions; ++r) {
    RegionSignature sig;
    for (int c = 0; c < kSignalChannels; ++c) {
      const double scale = kChannelScale[c];
      sig.offset[c] = c == 2 ? uniform(rng, 120.0, 180.0) : uniform(rng, -scale, scale);
      for (int j = 0; j < kComponentsPerChannel; ++j) {
        sig.amplitude[c][j] = uniform(rng, 0.3, 1.0) * scale;
        sig.frequency[c][j] = uniform(rng, 1.0, 8.0);  // cycles per window
        sig.damping[c][j] = uniform(rng, 1.0, 5.0);    // e-folds per window
        sig.phase[c][j] = uniform(rng, 0.0, kTwoPi);
      }
    }
    sig.height_offset = uniform(rng, -config.region_height_step, config.region_height_step);
    regions_.push_back(sig);
  }
  elevation_field_ = SmoothField(config.elevation_length_scale, kFieldFeatures, rng);
  for (int c = 0; c < kSignalChannels; ++c) {
    offset_fields_[c] = SmoothField(config.modulation_length_scale, kFieldFeatures, rng);
    for (int j = 0; j < kComponentsPerChannel; ++j) {
      amplitude_fields_[c][j] =
          SmoothField(config.modulation_length_scale, kFieldFeatures, rng);
    }
  }
}

int World::region_at(const Eigen::Vector2d& p) const {
  int best = 0;
  double best_d2 = (centers_[0] - p).squaredNorm();
  for (int r = 1; r < static_cast<int>(centers_.size()); ++r) {
    const double d2 = (centers_[r] - p).squaredNorm();
    if (d2 < best_d2) {
      best = r;
      best_d2 = d2;
    }
  }
  return best;
}

double World::elevation(const Eigen::Vector2d& p) const {
  return config_.elevation_amplitude * elevation_field_(p) +
         regions_[region_at(p)].height_offset;
}

bool World::contains(const Eigen::Vector2d& p) const {
  return p.x() >= 0.0 && p.x() <= config_.width && p.y() >= 0.0 && p.y() <= config_.height;
}

HapticSignal World::render(int region, const Eigen::Vector2d* p) const {
  const RegionSignature& sig = regions_.at(region);
  const double mod = config_.modulation_scale;
  HapticSignal out;
  out.samples.resize(kSignalLength, kSignalChannels);
  for (int c = 0; c < kSignalChannels; ++c) {
    const double offset =
        sig.offset[c] + (p ? mod * kChannelScale[c] * offset_fields_[c](*p) : 0.0);
    std::array<double, kComponentsPerChannel> amp;
    for (int j = 0; j < kComponentsPerChannel; ++j) {
      amp[j] = sig.amplitude[c][j] * (p ? 1.0 + mod * amplitude_fields_[c][j](*p) : 1.0);
    }
    for (int t = 0; t < kSignalLength; ++t) {
      const double s = static_cast<double>(t) / kSignalLength;
      double v = offset;
      for (int j = 0; j < kComponentsPerChannel; ++j) {
        v += amp[j] * std::exp(-sig.damping[c][j] * s) *
             std::sin(kTwoPi * sig.frequency[c][j] * s + sig.phase[c][j]);
      }
      out.samples(t, c) = v;
    }
  }
  return out;
}

HapticSignal World::signature(const Eigen::Vector2d& p) const {
  return render(region_at(p), &p);
}

HapticSignal World::base_signature(int region) const { return render(region, nullptr); }

HapticSignal World::sample_signal(const Eigen::Vector2d& p, Rng& rng) const {
  HapticSignal s = signature(p);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < kSignalLength; ++t) {
    for (int c = 0; c < kSignalChannels; ++c) {
      s.samples(t, c) += config_.signal_noise * kChannelScale[c] * gauss(rng);
    }
  }
  return s;
}

World generate_world(const WorldConfig& config) { return World(config); }

Route lawnmower_route(const WorldConfig& config, double lane_spacing, double margin) {
  if (!(lane_spacing > 0.0)) throw ConfigError("lane spacing must be > 0");
  if (2.0 * margin >= config.width || 2.0 * margin >= config.height) {
    throw ConfigError("route margin leaves no room inside the arena");
  }
  Route route;
  bool up = true;
  for (double x = margin; x <= config.width - margin + 1e-9; x += lane_spacing) {
    const double y0 = up ? margin : config.height - margin;
    const double y1 = up ? config.height - margin : margin;
    route.emplace_back(x, y0);
    route.emplace_back(x, y1);
    up = !up;
  }
  return route;
}

Route random_waypoint_route(const WorldConfig& config, int n_waypoints, double margin,
                            Rng& rng) {
  if (n_waypoints < 2) throw ConfigError("a route needs at least 2 waypoints");
  if (2.0 * margin >= config.width || 2.0 * margin >= config.height) {
    throw ConfigError("route margin leaves no room inside the arena");
  }
  Route route;
  while (static_cast<int>(route.size()) < n_waypoints) {
    const Eigen::Vector2d p(uniform(rng, margin, config.width - margin),
                            uniform(rng, margin, config.height - margin));
    // Skip near-duplicates so every leg has a well-defined heading.
    if (!route.empty() && (p - route.back()).norm() < 0.5) continue;
    route.push_back(p);
  }
  return route;
}

double route_length(const Route& route) {
  double length = 0.0;
  for (std::size_t i = 1; i < route.size(); ++i) length += (route[i] - route[i - 1]).norm();
  return length;
}

const std::array<Eigen::Vector2d, 4>& foot_offsets() {
  // Crawl order: left-front, right-hind, right-front, left-hind.
  static const std::array<Eigen::Vector2d, 4> offsets = {
      Eigen::Vector2d(0.3, 0.2), Eigen::Vector2d(-0.3, -0.2), Eigen::Vector2d(0.3, -0.2),
      Eigen::Vector2d(-0.3, 0.2)};
  return offsets;
}

Trial simulate_trial(const World& world, const Route& route, const OdometryNoiseConfig& odom,
                     std::uint64_t seed, const std::string& trial_id) {
  odom.validate();
  if (route.size() < 2) throw InvariantError("simulate_trial: route needs >= 2 waypoints");
  for (const Eigen::Vector2d& p : route) {
    if (!world.contains(p)) {
      throw InvariantError("simulate_trial: waypoint (" + std::to_string(p.x()) + ", " +
                           std::to_string(p.y()) + ") leaves the arena");
    }
  }
  const WorldConfig& wc = world.config();
  Rng signal_rng(derive_seed(seed, "synth.signal"));
  Rng odom_rng(derive_seed(seed, "synth.odometry"));
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double drift_heading = uniform(odom_rng, 0.0, kTwoPi);
  const Eigen::Vector2d drift_dir(std::cos(drift_heading), std::sin(drift_heading));
  const double vertical_sign = uniform(odom_rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  const double yaw_sign = uniform(odom_rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;

  // Base positions along the polyline at multiples of step_length.
  std::vector<Eigen::Vector2d> positions;
  std::vector<double> headings;
  double carried = 0.0;  // arc length into the current segment of the next step
  for (std::size_t s = 0; s + 1 < route.size(); ++s) {
    const Eigen::Vector2d a = route[s];
    const Eigen::Vector2d delta = route[s + 1] - a;
    const double len = delta.norm();
    if (len == 0.0) continue;
    const double heading = std::atan2(delta.y(), delta.x());
    double along = carried;
    for (; along < len; along += wc.step_length) {
      positions.push_back(a + delta * (along / len));
      headings.push_back(heading);
    }
    carried = along - len;
  }

  Trial trial;
  trial.trial_id = trial_id;
  trial.metadata["generator"] = "hloc.synth";
  trial.metadata["world_seed"] = std::to_string(wc.seed);
  trial.metadata["trial_seed"] = std::to_string(seed);
  trial.metadata["route_length_m"] = format_double(route_length(route));

  double yaw_error = 0.0;
  Eigen::Vector3d odom_position = Eigen::Vector3d::Zero();
  Pose previous_truth;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const Eigen::Vector2d& xy = positions[k];
    const Pose truth =
        Pose::from_xyz_yaw(xy.x(), xy.y(), world.elevation(xy) + wc.base_height, headings[k]);
    const int foot = static_cast<int>(k % 4);
    const Eigen::Vector3d foot_in_base(foot_offsets()[foot].x(), foot_offsets()[foot].y(), 0.0);
    Eigen::Vector3d foothold = truth * foot_in_base;
    foothold.z() = world.elevation(foothold.head<2>());

    if (k == 0) {
      odom_position = truth.translation;
    } else {
      const Eigen::Vector3d step = truth.translation - previous_truth.translation;
      const double turn = std::abs(wrap_angle(headings[k] - headings[k - 1]));
      yaw_error += yaw_sign * odom.yaw_drift_per_radian * turn + odom.yaw_noise * gauss(odom_rng);
      const double planar = step.head<2>().norm();
      Eigen::Vector3d drift = Eigen::Vector3d::Zero();
      drift.head<2>() = odom.translation_drift_per_meter * planar * drift_dir;
      drift.z() = vertical_sign * odom.vertical_drift_per_meter * planar;
      const Eigen::Vector3d white(odom.translation_noise * gauss(odom_rng),
                                  odom.translation_noise * gauss(odom_rng),
                                  odom.translation_noise * gauss(odom_rng));
      odom_position += Eigen::AngleAxisd(yaw_error, Eigen::Vector3d::UnitZ()) * step + drift +
                       white;
    }
    Pose odom_pose;
    odom_pose.translation = odom_position;
    odom_pose.rotation =
        (Eigen::Quaterniond(Eigen::AngleAxisd(yaw_error, Eigen::Vector3d::UnitZ())) *
         truth.rotation)
            .normalized();

    StepEvent e;
    e.step_id = static_cast<std::int64_t>(k);
    e.timestamp = static_cast<double>(k) * wc.step_period;
    e.foot_id = foot;
    e.signal = world.sample_signal(foothold.head<2>(), signal_rng);
    e.foothold_base = truth.inverse() * foothold;
    e.odom_pose = odom_pose;
    e.truth_pose = truth;
    e.foothold_world_truth = foothold;
    trial.events.push_back(std::move(e));
    previous_truth = truth;
  }
  if (trial.events.empty()) throw InvariantError("simulate_trial: route too short for one step");
  return trial;
}

void save_world(const World& world, const std::filesystem::path& path) {
  const WorldConfig& c = world.config();
  nlohmann::ordered_json j;
  j["format"] = "hloc.world";
  j["version"] = 1;
  j["config"] = {{"width", c.width},
                 {"height", c.height},
                 {"n_regions", c.n_regions},
                 {"elevation_amplitude", c.elevation_amplitude},
                 {"elevation_length_scale", c.elevation_length_scale},
                 {"region_height_step", c.region_height_step},
                 {"modulation_scale", c.modulation_scale},
                 {"modulation_length_scale", c.modulation_length_scale},
                 {"signal_noise", c.signal_noise},
                 {"step_length", c.step_length},
                 {"step_period", c.step_period},
                 {"base_height", c.base_height},
                 {"seed", c.seed}};
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& p : world.region_centers()) centers.push_back({p.x(), p.y()});
  j["region_centers"] = centers;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

World load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open world file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "hloc.world") {
    throw ParseError(path.string() + " is not a world file");
  }
  WorldConfig c;
  try {
    for (const auto& [key, v] : j.at("config").items()) {
      if (key == "width") c.width = v.get<double>();
      else if (key == "height") c.height = v.get<double>();
      else if (key == "n_regions") c.n_regions = v.get<int>();
      else if (key == "elevation_amplitude") c.elevation_amplitude = v.get<double>();
      else if (key == "elevation_length_scale") c.elevation_length_scale = v.get<double>();
      else if (key == "region_height_step") c.region_height_step = v.get<double>();
      else if (key == "modulation_scale") c.modulation_scale = v.get<double>();
      else if (key == "modulation_length_scale") c.modulation_length_scale = v.get<double>();
      else if (key == "signal_noise") c.signal_noise = v.get<double>();
      else if (key == "step_length") c.step_length = v.get<double>();
      else if (key == "step_period") c.step_period = v.get<double>();
      else if (key == "base_height") c.base_height = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw ParseError(path.string() + ": unknown world config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return World(c);
}

}  // namespace hloc::synth
