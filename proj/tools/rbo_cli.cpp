#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rbo/error.hpp"
#include "rbo/experiment.hpp"

namespace {

using namespace rbo;

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out;
  bool permissive = false;
};

struct CsvArgs {
  std::string path;
  data::CsvOptions options;
  std::string direction = "maximize";
};

void add_csv_args(CLI::App* cmd, CsvArgs& args) {
  cmd->add_option("csv", args.path, "input CSV with a SMILES and a target column")->required();
  cmd->add_option("--smiles-column", args.options.smiles_column, "SMILES column name")->capture_default_str();
  cmd->add_option("--target-column", args.options.target_column, "target column name")->capture_default_str();
  cmd->add_option("--direction", args.direction, "maximize or minimize")->capture_default_str();
}

data::Dataset load(const CsvArgs& args, const Globals& g) {
  data::CsvOptions opts = args.options;
  opts.direction = data::direction_from_string(args.direction);
  opts.permissive = g.permissive;
  auto report = data::load_csv(args.path, opts);
  for (const auto& msg : report.messages) std::cerr << "skipped " << msg << '\n';
  return std::move(report.dataset);
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw DataError("cannot write '" + out + "'");
  f << text;
}

int run(int argc, char** argv) {
  CLI::App app{"Rank-based Bayesian optimisation over molecular fingerprints"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "base seed for `run` (overrides the config)");
  app.add_option("--jobs", g.jobs, "worker threads for `run`")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output file (fingerprint) or directory (run, report)");
  app.add_flag("--permissive", g.permissive, "skip unparsable SMILES rows instead of failing");

  CsvArgs fp_args, rogi_args;
  auto* fp = app.add_subcommand("fingerprint", "write id,hex-fingerprint rows");
  add_csv_args(fp, fp_args);
  auto* rogi = app.add_subcommand("rogi", "print the roughness index and its dispersion table");
  add_csv_args(rogi, rogi_args);

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "run the campaign grid of an experiment config");
  run_cmd->add_option("config", config_path, "key = value experiment config")->required();
  std::string trace_dir;
  auto* report = app.add_subcommand("report", "summarise a directory of traces into CSV files");
  report->add_option("traces", trace_dir, "directory of trace JSON files")->required();
  for (auto* sub : {fp, rogi, run_cmd, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fp) {
      emit(experiment::fingerprint_table(load(fp_args, g)), g.out);
    } else if (*rogi) {
      emit(experiment::rogi_table(load(rogi_args, g)), g.out);
    } else if (*run_cmd) {
      auto config = experiment::load_config(config_path);
      if (g.seed) config.base_seed = *g.seed;
      if (!g.out.empty()) config.output_dir = g.out;
      const data::Dataset dataset = config.dataset.load(g.permissive);
      const auto manifest = experiment::run_experiment(
          config, dataset, g.jobs, [](const experiment::ManifestEntry& e, std::size_t done, std::size_t total) {
            std::cerr << '[' << done << '/' << total << "] " << e.spec.file << ' ' << e.status;
            if (!e.error.empty()) std::cerr << ": " << e.error;
            std::cerr << '\n';
          });
      std::cerr << manifest.n_ok() << " of " << manifest.entries.size() << " campaigns succeeded; traces in "
                << config.output_dir.string() << '\n';
      if (manifest.n_ok() == 0) return kRuntime;
    } else if (*report) {
      const auto traces = experiment::load_traces(trace_dir);
      const auto rep = experiment::build_report(traces);
      const std::string dir = g.out.empty() ? trace_dir : g.out;
      experiment::write_report(rep, dir);
      std::cerr << "wrote summary.csv, comparison.csv, correlation.csv, curves.csv to " << dir << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
