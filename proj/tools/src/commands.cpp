#include "hloc/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>

#include "json.hpp"

#include "hloc/map.hpp"
#include "hloc/mcl.hpp"
#include "hloc/net.hpp"
#include "hloc/signal_io.hpp"
#include "hloc/synth.hpp"
#include "hloc/train.hpp"

namespace hloc::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : ""));
  }
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_directory(file.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

mcl::MeasurementModelConfig measurement_for(const RunConfig& config, const std::string& variant) {
  mcl::MeasurementModelConfig mm = config.measurement;
  mm.use_elevation = variant_uses_elevation(variant);
  return mm;
}

void check_dims(const map::SparseHapticMap& map, const net::NetworkParams& params) {
  if (map.embed_dim() != params.config.embed_dim) {
    throw InvariantError("map embedding dimension " + std::to_string(map.embed_dim()) +
                         " does not match params embedding dimension " +
                         std::to_string(params.config.embed_dim));
  }
}

}  // namespace

std::string localization_file(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "loc_%02d.trial.jsonl", index);
  return buf;
}

std::vector<fs::path> localization_trials(const fs::path& data_dir) {
  if (!fs::is_directory(data_dir)) throw IoError("not a directory: " + data_dir.string());
  std::vector<fs::path> found;
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("loc_") && name.ends_with(".trial.jsonl")) found.push_back(entry.path());
  }
  std::sort(found.begin(), found.end());
  return found;
}

GenResult cmd_gen(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  config.validate();
  ensure_directory(out_dir);

  const synth::WorldConfig wc = config.world_config();
  const synth::World world = synth::generate_world(wc);
  GenResult result{out_dir / kWorldFile, out_dir / kMappingFile, {}};
  synth::save_world(world, result.world);

  const synth::Route lawnmower =
      synth::lawnmower_route(wc, config.gen_lane_spacing, config.gen_lane_margin);
  Trial mapping = synth::simulate_trial(world, lawnmower, config.odometry,
                                        config.stage_seed("gen.mapping"), "mapping");
  write_trial(mapping, result.mapping);

  json manifest = {{"seed", config.seed},
                   {"world", kWorldFile},
                   {"mapping", {{"file", kMappingFile},
                                {"events", mapping.events.size()},
                                {"route_length", synth::route_length(lawnmower)}}},
                   {"localization", json::array()}};

  Rng route_rng(config.stage_seed("gen.routes"));
  const std::uint64_t trial_seed = config.stage_seed("gen.trials");
  for (int k = 1; k <= config.gen_trials; ++k) {
    const synth::Route route = synth::random_waypoint_route(wc, config.gen_waypoints,
                                                            config.gen_waypoint_margin, route_rng);
    const std::string name = localization_file(k);
    const std::string id = name.substr(0, name.find('.'));
    Trial trial = synth::simulate_trial(world, route, config.odometry,
                                        derive_seed(trial_seed, static_cast<std::uint64_t>(k)), id);
    result.localization.push_back(out_dir / name);
    write_trial(trial, result.localization.back());
    manifest["localization"].push_back({{"file", name},
                                        {"events", trial.events.size()},
                                        {"route_length", synth::route_length(route)}});
  }

  const std::string text = manifest.dump(2) + "\n";
  write_text(out_dir / kManifestFile, text);
  out << text;
  return result;
}

train::FitResult cmd_train(const RunConfig& config, const std::vector<fs::path>& trial_paths,
                           const fs::path& params_out, const fs::path& loss_out,
                           std::ostream& out) {
  config.validate();
  if (trial_paths.empty()) throw UsageError("train needs at least one trial file");
  std::vector<Trial> trials;
  for (const fs::path& p : trial_paths) trials.push_back(read_trial(p));

  const train::TrainConfig tc = config.train_config();
  const net::NetConfig nc = config.net_config();
  const auto t0 = std::chrono::steady_clock::now();
  train::FitResult fit = train::fit(trials, nc, tc, [&](const train::EpochLog& e) {
    if (e.epoch % 10 == 0 || e.epoch + 1 == tc.epochs) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out << "epoch " << e.epoch << " loss " << format_double(e.mean_loss) << " active "
          << e.active_triplets << " (" << fixed(s, 1) << " s)\n";
    }
  });
  ensure_parent(params_out);
  net::save_params(fit.params, params_out);
  ensure_parent(loss_out);
  train::write_loss_log(fit.log, loss_out);
  out << "params " << params_out.string() << " (" << net::param_count(nc) << " parameters)\n"
      << "loss log " << loss_out.string() << "\n"
      << "final loss " << format_double(fit.log.back().mean_loss) << "\n";
  return fit;
}

map::SparseHapticMap cmd_map(const fs::path& mapping_trial, const fs::path& params_path,
                             const fs::path& map_out, std::ostream& out) {
  const Trial trial = read_trial(mapping_trial);
  const net::NetworkParams params = net::load_params(params_path);
  map::SparseHapticMap map = map::build_map(trial, params);
  ensure_parent(map_out);
  map::save_map(map, map_out);
  out << "map " << map_out.string() << ": " << map.size() << " entries, dim "
      << map.embed_dim() << "\n";
  return map;
}

mcl::TrajectoryLog cmd_localize(const RunConfig& config, const fs::path& trial_path,
                                const fs::path& map_path, const fs::path& params_path,
                                const std::string& variant, const fs::path& log_out,
                                const std::optional<fs::path>& odometry_out, std::ostream& out) {
  config.validate();
  const mcl::MeasurementModelConfig mm = measurement_for(config, variant);
  const Trial trial = read_trial(trial_path);
  const map::SparseHapticMap map = map::load_map(map_path);
  const net::NetworkParams params = net::load_params(params_path);
  check_dims(map, params);

  mcl::TrajectoryLog log = mcl::run_localization(trial, map, params, config.mcl_config(), mm);
  ensure_parent(log_out);
  mcl::write_trajectory_csv(log, log_out);
  out << variant << " " << trial.trial_id << ": " << log.records.size() << " records -> "
      << log_out.string() << "\n";
  if (odometry_out) {
    ensure_parent(*odometry_out);
    mcl::write_trajectory_csv(mcl::odometry_log(trial), *odometry_out);
    out << "odometry -> " << odometry_out->string() << "\n";
  }
  return log;
}

eval::ApeSummary cmd_eval(const fs::path& log_path, const std::optional<fs::path>& summary_out,
                          std::ostream& out) {
  const eval::ApeSummary summary = eval::ape(mcl::read_trajectory_csv(log_path));
  out << eval::summary_json(summary) << "\n";
  if (summary_out) {
    ensure_parent(*summary_out);
    eval::write_summary_json(summary, *summary_out);
  }
  return summary;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& config, const fs::path& data_dir,
                                const fs::path& csv_out, std::ostream& out) {
  config.validate();
  const mcl::MeasurementModelConfig mm = measurement_for(config, config.sweep_variant);
  const Trial mapping = read_trial(data_dir / kMappingFile);
  std::vector<Trial> trials;
  for (const fs::path& p : localization_trials(data_dir)) trials.push_back(read_trial(p));
  if (trials.empty()) throw IoError("no loc_*.trial.jsonl files in " + data_dir.string());

  train::TrainConfig tc = config.train_config();
  tc.epochs = config.sweep_epochs;
  const std::vector<Trial> training{mapping};

  std::vector<SweepRow> rows;
  for (int size : config.sweep_sizes) {
    net::NetConfig nc = config.net_config();
    nc.embed_dim = size;
    const auto t0 = std::chrono::steady_clock::now();
    const train::FitResult fit = train::fit(training, nc, tc);
    const map::SparseHapticMap map = map::build_map(mapping, fit.params);
    for (const Trial& trial : trials) {
      const eval::ApeSummary s = eval::ape(
          mcl::run_localization(trial, map, fit.params, config.mcl_config(), mm));
      rows.push_back({size, trial.trial_id, s.t2d_stats.mean, s.t3d_stats.mean});
      out << "embed " << size << " " << trial.trial_id << " t2d " << fixed(s.t2d_stats.mean, 4)
          << " t3d " << fixed(s.t3d_stats.mean, 4) << "\n";
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << "embed " << size << " done in " << fixed(s, 1) << " s\n";
  }

  std::string csv = "embed_dim,trial_id,t2d_mean,t3d_mean\n";
  for (const SweepRow& r : rows) {
    csv += std::to_string(r.embed_dim) + "," + r.trial_id + "," + format_double(r.t2d_mean) +
           "," + format_double(r.t3d_mean) + "\n";
  }
  write_text(csv_out, csv);
  return rows;
}

BenchReport cmd_bench(const RunConfig& config, const fs::path& params_path,
                      const std::optional<fs::path>& report_out, std::ostream& out) {
  config.validate();
  const net::NetworkParams params = net::load_params(params_path);
  Rng rng(config.stage_seed("bench"));
  std::normal_distribution<double> normal(0.0, 1.0);
  HapticSignal signal{Eigen::MatrixXd(params.config.seq_len, params.config.in_dim)};

  BenchReport report;
  report.count = config.bench_samples;
  report.warmup = config.bench_warmup;
  report.embed_dim = params.config.embed_dim;
  std::vector<double> times;
  times.reserve(report.count);
  double sink = 0.0;
  for (int i = 0; i < report.warmup + report.count; ++i) {
    for (Eigen::Index k = 0; k < signal.samples.size(); ++k) signal.samples(k) = normal(rng);
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::VectorXd e = net::embed(params, signal);
    const auto t1 = std::chrono::steady_clock::now();
    sink += e(0);
    if (i >= report.warmup) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  if (!std::isfinite(sink)) throw NumericError("non-finite embedding during benchmark");

  double sum = 0.0;
  for (double t : times) sum += t;
  report.mean_ms = sum / times.size();
  double sq = 0.0;
  for (double t : times) sq += (t - report.mean_ms) * (t - report.mean_ms);
  report.stddev_ms = times.size() > 1 ? std::sqrt(sq / (times.size() - 1)) : 0.0;
  report.min_ms = *std::min_element(times.begin(), times.end());
  report.max_ms = *std::max_element(times.begin(), times.end());

  const json j = {{"count", report.count},
                  {"warmup", report.warmup},
                  {"embed_dim", report.embed_dim},
                  {"mean_ms", report.mean_ms},
                  {"stddev_ms", report.stddev_ms},
                  {"min_ms", report.min_ms},
                  {"max_ms", report.max_ms},
                  {"reference_gpu_ms", {{"mean", 2.20}, {"stddev", 0.28}}}};
  out << "single-sample inference over " << report.count << " samples (" << report.warmup
      << " warm-up excluded): " << fixed(report.mean_ms, 4) << " +- "
      << fixed(report.stddev_ms, 4) << " ms (min " << fixed(report.min_ms, 4) << ", max "
      << fixed(report.max_ms, 4) << ")\n"
      << "reference GPU figure: 2.20 +- 0.28 ms (different hardware, informational)\n";
  if (report_out) write_text(*report_out, j.dump(2) + "\n");
  return report;
}

}  // namespace hloc::cli
