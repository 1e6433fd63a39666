#include "hloc/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "hloc/rng.hpp"
#include "hloc/signal_io.hpp"

namespace hloc::cli {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("bad value '" + s + "' for key " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("bad boolean '" + s + "' for key " + std::string(key));
}

std::string to_text(double v) { return format_double(v); }
std::string to_text(int v) { return std::to_string(v); }
std::string to_text(std::uint64_t v) { return std::to_string(v); }

struct Key {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Key field(std::string name, T RunConfig::*member) {
  return {name,
          [name, member](RunConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<T, bool>) {
              c.*member = parse_bool(name, v);
            } else {
              c.*member = parse_number<T>(name, v);
            }
          },
          [member](const RunConfig& c) { return to_text(c.*member); }};
}

template <class S, class T>
Key nested(std::string name, S RunConfig::*outer, T S::*member) {
  return {name,
          [name, outer, member](RunConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<T, bool>) {
              (c.*outer).*member = parse_bool(name, v);
            } else {
              (c.*outer).*member = parse_number<T>(name, v);
            }
          },
          [outer, member](const RunConfig& c) { return to_text((c.*outer).*member); }};
}

Key motion(std::string name, double mcl::MotionNoise::*member) {
  return {name,
          [name, member](RunConfig& c, std::string_view v) {
            c.mcl.motion.*member = parse_number<double>(name, v);
          },
          [member](const RunConfig& c) { return to_text(c.mcl.motion.*member); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    using W = synth::WorldConfig;
    using O = synth::OdometryNoiseConfig;
    using N = net::NetConfig;
    using T = train::TrainConfig;
    using M = mcl::MclConfig;
    using L = mcl::MeasurementModelConfig;
    std::vector<Key> k = {
        field("seed", &RunConfig::seed),
        nested("world.width", &RunConfig::world, &W::width),
        nested("world.height", &RunConfig::world, &W::height),
        nested("world.n_regions", &RunConfig::world, &W::n_regions),
        nested("world.elevation_amplitude", &RunConfig::world, &W::elevation_amplitude),
        nested("world.elevation_length_scale", &RunConfig::world, &W::elevation_length_scale),
        nested("world.region_height_step", &RunConfig::world, &W::region_height_step),
        nested("world.modulation_scale", &RunConfig::world, &W::modulation_scale),
        nested("world.modulation_length_scale", &RunConfig::world,
               &W::modulation_length_scale),
        nested("world.signal_noise", &RunConfig::world, &W::signal_noise),
        nested("world.step_length", &RunConfig::world, &W::step_length),
        nested("world.step_period", &RunConfig::world, &W::step_period),
        nested("world.base_height", &RunConfig::world, &W::base_height),
        nested("odometry.translation_drift_per_meter", &RunConfig::odometry,
               &O::translation_drift_per_meter),
        nested("odometry.vertical_drift_per_meter", &RunConfig::odometry,
               &O::vertical_drift_per_meter),
        nested("odometry.yaw_drift_per_radian", &RunConfig::odometry, &O::yaw_drift_per_radian),
        nested("odometry.translation_noise", &RunConfig::odometry, &O::translation_noise),
        nested("odometry.yaw_noise", &RunConfig::odometry, &O::yaw_noise),
        field("gen.trials", &RunConfig::gen_trials),
        field("gen.waypoints", &RunConfig::gen_waypoints),
        field("gen.waypoint_margin", &RunConfig::gen_waypoint_margin),
        field("gen.lane_spacing", &RunConfig::gen_lane_spacing),
        field("gen.lane_margin", &RunConfig::gen_lane_margin),
        nested("net.d_model", &RunConfig::net, &N::d_model),
        nested("net.n_heads", &RunConfig::net, &N::n_heads),
        nested("net.d_ff", &RunConfig::net, &N::d_ff),
        nested("net.n_encoder_layers", &RunConfig::net, &N::n_encoder_layers),
        nested("net.embed_dim", &RunConfig::net, &N::embed_dim),
        nested("train.d_thr", &RunConfig::train, &T::d_thr),
        nested("train.margin", &RunConfig::train, &T::margin),
        nested("train.batch_size", &RunConfig::train, &T::batch_size),
        nested("train.epochs", &RunConfig::train, &T::epochs),
        nested("train.lr0", &RunConfig::train, &T::lr0),
        nested("train.weight_decay0", &RunConfig::train, &T::weight_decay0),
        nested("mcl.n_particles", &RunConfig::mcl, &M::n_particles),
        nested("mcl.resample_threshold", &RunConfig::mcl, &M::resample_threshold),
        nested("mcl.init_sigma_xy", &RunConfig::mcl, &M::init_sigma_xy),
        nested("mcl.init_sigma_yaw", &RunConfig::mcl, &M::init_sigma_yaw),
        motion("mcl.translation_per_meter", &mcl::MotionNoise::translation_per_meter),
        motion("mcl.yaw_per_radian", &mcl::MotionNoise::yaw_per_radian),
        motion("mcl.yaw_per_meter", &mcl::MotionNoise::yaw_per_meter),
        motion("mcl.vertical_fraction", &mcl::MotionNoise::vertical_fraction),
        nested("mm.sigma_latent", &RunConfig::measurement, &L::sigma_latent),
        nested("mm.sigma_2d", &RunConfig::measurement, &L::sigma_2d),
        nested("mm.sigma_elevation", &RunConfig::measurement, &L::sigma_elevation),
        nested("mm.d_t", &RunConfig::measurement, &L::match_threshold),
        nested("mm.p_min", &RunConfig::measurement, &L::p_min),
        field("sweep.epochs", &RunConfig::sweep_epochs),
        field("bench.samples", &RunConfig::bench_samples),
        field("bench.warmup", &RunConfig::bench_warmup),
    };
    k.push_back({"sweep.sizes",
                 [](RunConfig& c, std::string_view v) { c.sweep_sizes = parse_sizes(v); },
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.sweep_sizes.size(); ++i) {
                     out += (i ? "," : "") + std::to_string(c.sweep_sizes[i]);
                   }
                   return out;
                 }});
    k.push_back({"sweep.variant",
                 [](RunConfig& c, std::string_view v) {
                   const std::string s = trim(v);
                   variant_uses_elevation(s);
                   c.sweep_variant = s;
                 },
                 [](const RunConfig& c) { return c.sweep_variant; }});
    return k;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  world_config().validate();
  odometry.validate();
  net_config().validate();
  train_config().validate();
  mcl_config().validate();
  measurement.validate();
  if (gen_trials < 0) throw ConfigError("gen.trials must be >= 0");
  if (gen_waypoints < 2) throw ConfigError("gen.waypoints must be >= 2");
  if (!(gen_lane_spacing > 0.0)) throw ConfigError("gen.lane_spacing must be > 0");
  if (sweep_sizes.empty()) throw UsageError("sweep.sizes must not be empty");
  if (sweep_epochs < 1) throw ConfigError("sweep.epochs must be >= 1");
  if (bench_samples < 1) throw ConfigError("bench.samples must be >= 1");
  if (bench_warmup < 0) throw ConfigError("bench.warmup must be >= 0");
}

synth::WorldConfig RunConfig::world_config() const {
  synth::WorldConfig c = world;
  c.seed = stage_seed("world");
  return c;
}

net::NetConfig RunConfig::net_config() const {
  net::NetConfig c = net;
  c.seed = stage_seed("net");
  return c;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig c = train;
  c.seed = stage_seed("train");
  return c;
}

mcl::MclConfig RunConfig::mcl_config() const {
  mcl::MclConfig c = mcl;
  c.seed = stage_seed("mcl");
  return c;
}

std::uint64_t RunConfig::stage_seed(std::string_view stage) const {
  return derive_seed(seed, stage);
}

void set_value(RunConfig& config, std::string_view key, std::string_view value) {
  const std::string k = trim(key);
  for (const Key& entry : keys()) {
    if (entry.name == k) {
      entry.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + k + "'");
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + " line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    try {
      set_value(config, std::string_view(body).substr(0, eq),
                std::string_view(body).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + a + "'");
    set_value(config, std::string_view(a).substr(0, eq), std::string_view(a).substr(eq + 1));
  }
}

std::vector<ConfigEntry> describe(const RunConfig& config) {
  std::vector<ConfigEntry> out;
  for (const Key& k : keys()) out.push_back({k.name, k.get(config)});
  return out;
}

std::vector<int> parse_sizes(std::string_view text) {
  std::vector<int> sizes;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    const int v = parse_number<int>("sweep.sizes", item);
    if (v < 1) throw ConfigError("embedding sizes must be >= 1, got " + std::to_string(v));
    sizes.push_back(v);
  }
  if (sizes.empty()) throw UsageError("empty embedding size list");
  return sizes;
}

bool variant_uses_elevation(std::string_view variant) {
  if (variant == "hl-st") return true;
  if (variant == "hl-t") return false;
  throw UsageError("unknown variant '" + std::string(variant) + "' (expected hl-t or hl-st)");
}

}  // namespace hloc::cli
