#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hloc/cli/run_config.hpp"
#include "hloc/eval.hpp"

namespace hloc::cli {

// File names inside a `gen` output directory.
inline constexpr const char* kWorldFile = "world.world.json";
inline constexpr const char* kMappingFile = "mapping.trial.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";
std::string localization_file(int index);  // loc_01.trial.jsonl, ...

struct GenResult {
  std::filesystem::path world;
  std::filesystem::path mapping;
  std::vector<std::filesystem::path> localization;
};

// Generates a world, a lawnmower mapping trial and `config.gen_trials`
// random-waypoint localization trials into `out_dir`.
GenResult cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir,
                  std::ostream& out);

// Trains on the given trials. Writes the params file and a loss CSV.
train::FitResult cmd_train(const RunConfig& config,
                           const std::vector<std::filesystem::path>& trials,
                           const std::filesystem::path& params_out,
                           const std::filesystem::path& loss_out, std::ostream& out);

map::SparseHapticMap cmd_map(const std::filesystem::path& mapping_trial,
                             const std::filesystem::path& params,
                             const std::filesystem::path& map_out, std::ostream& out);

// Replays one trial with the filter. `variant` is hl-t or hl-st. When
// `odometry_out` is set the raw-odometry log is written there too.
mcl::TrajectoryLog cmd_localize(const RunConfig& config, const std::filesystem::path& trial,
                                const std::filesystem::path& map,
                                const std::filesystem::path& params,
                                const std::string& variant,
                                const std::filesystem::path& log_out,
                                const std::optional<std::filesystem::path>& odometry_out,
                                std::ostream& out);

eval::ApeSummary cmd_eval(const std::filesystem::path& log,
                          const std::optional<std::filesystem::path>& summary_out,
                          std::ostream& out);

struct SweepRow {
  int embed_dim = 0;
  std::string trial_id;
  double t2d_mean = 0.0;
  double t3d_mean = 0.0;
};

// For each embedding size: train on the mapping trial of `data_dir`, build
// the map and localize every localization trial found there.
std::vector<SweepRow> cmd_sweep(const RunConfig& config, const std::filesystem::path& data_dir,
                                const std::filesystem::path& csv_out, std::ostream& out);

struct BenchReport {
  int count = 0;
  int warmup = 0;
  int embed_dim = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

// Times single-sample infer-mode forward passes on seeded random signals.
BenchReport cmd_bench(const RunConfig& config, const std::filesystem::path& params,
                      const std::optional<std::filesystem::path>& report_out,
                      std::ostream& out);

// Sorted loc_*.trial.jsonl files of a data directory.
std::vector<std::filesystem::path> localization_trials(const std::filesystem::path& data_dir);

}  // namespace hloc::cli
