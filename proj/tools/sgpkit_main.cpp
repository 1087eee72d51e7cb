// sgpkit experiment runner. Each subcommand maps to one named study; runs
// write a manifest plus per-method result files into the output directory,
// and emit-plots turns a finished run into plot-data series and scripts.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "sgp/experiments.hpp"

namespace {

constexpr int kExitSuccess = 0;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;
constexpr int kExitData = 4;

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::string data_path;
  long long seed = -1;
  int jobs = 1;
  int m = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--out", o.out_dir, "output directory (default runs/<experiment>)");
  cmd->add_option("--seed", o.seed, "base seed override");
  cmd->add_option("--jobs", o.jobs, "parallel worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--data", o.data_path, "dataset path override");
  cmd->add_option("-M,--inducing", o.m, "inducing-input count override");
}

int run_named(const std::string& experiment, const CommonOptions& o) {
  try {
    sgp::Json user;
    if (!o.config_path.empty()) {
      std::ifstream in(o.config_path);
      if (!in) {
        std::cerr << "error: cannot open config '" << o.config_path << "'\n";
        return kExitUsage;
      }
      user = sgp::Json::parse(in, nullptr, false);
      if (user.is_discarded()) {
        std::cerr << "error: '" << o.config_path << "' is not valid JSON\n";
        return kExitUsage;
      }
    }
    sgp::Json config = sgp::resolve_config(experiment, user);
    if (o.seed >= 0) config["seed"] = static_cast<std::uint64_t>(o.seed);
    if (!o.data_path.empty()) {
      config["data"]["path"] = o.data_path;
      config["data"]["synthetic"] = nullptr;
    }
    if (o.m > 0) {
      if (config.contains("m")) config["m"] = o.m;
      else {
        std::cerr << "error: " << experiment << " takes m_list, not -M\n";
        return kExitUsage;
      }
    }

    const std::string out_dir =
        o.out_dir.empty() ? "runs/" + experiment : o.out_dir;
    const auto outcome = sgp::run_experiment(config, out_dir, o.jobs);

    std::printf("%s: wrote %s/manifest.json (%s, %.1fs)\n", experiment.c_str(),
                out_dir.c_str(), outcome.partial ? "PARTIAL" : "ok",
                outcome.manifest["wall_clock_seconds"].get<double>());
    return outcome.partial ? kExitPartial : kExitSuccess;
  } catch (const sgp::IngestionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sgp::InvalidArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse Gaussian process regression toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  const std::vector<std::string> experiments = {
      "fit",        "sweep-add",    "clump-study",
      "recover-zx", "regime-study", "ard-study"};
  const std::vector<std::string> blurbs = {
      "train selected methods and report objectives and metrics",
      "trained M=7 models plus the inducing-addition sweep",
      "M=15 random init; where do the inducing inputs end up",
      "initialize at Z = X and watch who stays",
      "M-ladder over a synthetic 4-D draw with full-GP reference",
      "ARD table: SoD / FITC / VFE / frozen / FITC-initialized"};

  std::map<std::string, CommonOptions> options;
  for (std::size_t i = 0; i < experiments.size(); ++i)
    add_common(app.add_subcommand(experiments[i], blurbs[i]), options[experiments[i]]);

  std::string plots_run, plots_out;
  auto* plots = app.add_subcommand("emit-plots",
                                   "plot-data series + scripts from a finished run");
  plots->add_option("--run", plots_run, "run directory holding manifest.json")
      ->required();
  plots->add_option("--out", plots_out, "destination (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitSuccess : kExitUsage;
  }

  for (const auto& name : experiments)
    if (app.got_subcommand(name)) return run_named(name, options[name]);

  if (app.got_subcommand(plots)) {
    try {
      const auto files =
          sgp::emit_plots(plots_run, plots_out.empty() ? plots_run : plots_out);
      for (const auto& f : files) std::printf("%s\n", f.c_str());
      return kExitSuccess;
    } catch (const sgp::IngestionError& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kExitData;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  }
  return kExitUsage;
}
