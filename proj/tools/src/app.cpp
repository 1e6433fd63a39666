#include "hloc/cli/app.hpp"

#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "hloc/cli/commands.hpp"

namespace hloc::cli {
namespace fs = std::filesystem;

namespace {

int exit_code(const std::string& kind) {
  static const std::map<std::string, int> codes = {
      {"usage", kExitUsage},         {"config", kExitConfig}, {"io", kExitIo},
      {"parse", kExitParse},         {"invariant", kExitInvariant},
      {"numeric", kExitNumeric}};
  const auto it = codes.find(kind);
  return it == codes.end() ? kExitOther : it->second;
}

std::string one_line(std::string text) {
  for (char& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  while (!text.empty() && text.back() == ' ') text.pop_back();
  return text;
}

int fail(std::ostream& err, const std::string& kind, const std::string& message) {
  err << "hloc: error: " << kind << ": " << one_line(message) << "\n";
  return exit_code(kind);
}

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Haptic localization toolkit: synthetic data, metric learning and MCL replay",
               "hloc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::optional<std::uint64_t> seed;
  std::string config_file;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("--seed", seed, "Top-level seed; every stage derives its own");
  app.add_option("--config", config_file, "key = value config file");
  app.add_option("--set", overrides, "Override one config key (key=value), repeatable");
  app.add_flag("--print-config", print_config, "Print the merged configuration first");

  std::string out_path;
  std::optional<int> trials, epochs, embed_dim, samples, warmup;
  std::vector<std::string> inputs;
  std::string params, map_path, variant = "hl-st", odometry_out, loss_out, sizes, summary;

  auto* gen = app.add_subcommand("gen", "Generate a world, a mapping trial and localization trials");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--trials", trials, "Number of localization trials");

  auto* train = app.add_subcommand("train", "Train the signal transformer on trial files");
  train->add_option("trials", inputs, "Trial files (.trial.jsonl)")->required();
  train->add_option("--out", out_path, "Output params file (.stnet)")->required();
  train->add_option("--loss-log", loss_out, "Loss CSV (default: <out>.loss.csv)");
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_option("--embed-dim", embed_dim, "Embedding size");

  auto* map = app.add_subcommand("map", "Build a sparse haptic map from a mapping trial");
  map->add_option("trial", inputs, "Mapping trial file")->required()->expected(1);
  map->add_option("--params", params, "Params file")->required();
  map->add_option("--out", out_path, "Output map file (.hmap)")->required();

  auto* localize = app.add_subcommand("localize", "Replay a trial through the particle filter");
  localize->add_option("trial", inputs, "Trial file")->required()->expected(1);
  localize->add_option("--map", map_path, "Map file")->required();
  localize->add_option("--params", params, "Params file")->required();
  localize->add_option("--variant", variant, "hl-t or hl-st");
  localize->add_option("--out", out_path, "Output trajectory CSV")->required();
  localize->add_option("--odometry-log", odometry_out, "Also write the raw-odometry log here");

  auto* evalc = app.add_subcommand("eval", "Absolute pose error of a trajectory CSV");
  evalc->add_option("log", inputs, "Trajectory CSV")->required()->expected(1);
  evalc->add_option("--out", out_path, "Summary JSON path");

  auto* sweep = app.add_subcommand("sweep", "Embedding-size sweep over a gen directory");
  sweep->add_option("data", inputs, "Directory written by gen")->required()->expected(1);
  sweep->add_option("--out", out_path, "Output CSV")->required();
  sweep->add_option("--sizes", sizes, "Comma-separated embedding sizes");
  sweep->add_option("--epochs", epochs, "Training epochs per size");
  sweep->add_option("--variant", variant, "hl-t or hl-st");

  auto* bench = app.add_subcommand("bench", "Single-sample inference latency");
  bench->add_option("--params", params, "Params file")->required();
  bench->add_option("--samples", samples, "Timed samples");
  bench->add_option("--warmup", warmup, "Untimed warm-up samples");
  bench->add_option("--out", out_path, "Report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, "usage", e.what());
  }

  try {
    // Precedence: documented defaults < config file < command-line flags.
    RunConfig config;
    if (!config_file.empty()) apply_config_file(config, config_file);
    apply_overrides(config, overrides);
    if (seed) config.seed = *seed;
    if (trials) config.gen_trials = *trials;
    if (embed_dim) config.net.embed_dim = *embed_dim;
    if (samples) config.bench_samples = *samples;
    if (warmup) config.bench_warmup = *warmup;
    if (sweep->parsed()) {
      if (epochs) config.sweep_epochs = *epochs;
      if (sweep->count("--sizes")) config.sweep_sizes = parse_sizes(sizes);
      if (sweep->count("--variant")) config.sweep_variant = variant;
    } else if (epochs) {
      config.train.epochs = *epochs;
    }
    if (localize->parsed()) variant_uses_elevation(variant);
    config.validate();

    if (print_config) {
      for (const ConfigEntry& e : describe(config)) out << e.key << " = " << e.value << "\n";
    }

    if (gen->parsed()) {
      cmd_gen(config, out_path, out);
    } else if (train->parsed()) {
      std::vector<fs::path> paths(inputs.begin(), inputs.end());
      const fs::path loss = loss_out.empty() ? fs::path(out_path + ".loss.csv") : fs::path(loss_out);
      cmd_train(config, paths, out_path, loss, out);
    } else if (map->parsed()) {
      cmd_map(inputs.front(), params, out_path, out);
    } else if (localize->parsed()) {
      cmd_localize(config, inputs.front(), map_path, params, variant, out_path,
                   optional_path(odometry_out), out);
    } else if (evalc->parsed()) {
      cmd_eval(inputs.front(), optional_path(out_path), out);
    } else if (sweep->parsed()) {
      cmd_sweep(config, inputs.front(), out_path, out);
    } else if (bench->parsed()) {
      cmd_bench(config, params, optional_path(out_path), out);
    }
  } catch (const Error& e) {
    return fail(err, e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what());
  }
  return kExitOk;
}

}  // namespace hloc::cli
