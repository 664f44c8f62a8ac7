#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpot/checks.hpp"
#include "dpot/errors.hpp"
#include "dpot/experiments.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kNumeric = 3, kIo = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  bool dry_run = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* config = cmd->add_option("-c,--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  if (config_required) config->required();
  cmd->add_option("--seed", o.seed, "Override experiment.seed");
  cmd->add_option("--threads", o.threads, "Override experiment.threads")->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", o.out, "Run directory (default runs/<experiment>)");
  cmd->add_flag("--dry-run", o.dry_run, "Print the resolved configuration and exit");
}

int execute(const std::string& experiment, const Overrides& o, const std::string& source = {},
            const std::string& target = {}) {
  dpot::ExperimentConfig cfg;
  dpot::RunOptions options;
  if (!o.config.empty()) {
    cfg = dpot::load_config(o.config);
    options.inputs.push_back(o.config);
    if (!experiment.empty() && cfg.experiment != experiment)
      throw dpot::InputError("experiment.name: config is for '" + cfg.experiment + "', not '" + experiment + "'");
  } else {
    cfg = dpot::default_config(experiment);
  }
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.threads) cfg.train.threads = *o.threads;
  if (!source.empty()) cfg.source_image = source;
  if (!target.empty()) cfg.target_image = target;
  cfg.validate();

  if (o.dry_run) {
    dpot::print_config(std::cout, cfg);
    return kOk;
  }
  options.out_dir = o.out.empty() ? std::filesystem::path("runs") / cfg.experiment : std::filesystem::path(o.out);
  const dpot::RunManifest m = dpot::run_experiment(cfg, options);
  std::cout << "wrote " << m.outputs.size() << " files to " << options.out_dir.string() << '\n';
  for (const auto& [k, v] : m.summary) std::cout << "  " << k << " = " << v << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural optimal transport maps trained with the DPOT loss"};
  app.require_subcommand(1);

  Overrides run_opts;
  auto* run = app.add_subcommand("run", "Run the experiment named in a configuration file");
  add_common(run, run_opts, true);

  std::vector<std::pair<CLI::App*, std::unique_ptr<Overrides>>> benches;
  for (const auto& name : dpot::kExperimentNames) {
    if (name == "color-transfer") continue;
    auto o = std::make_unique<Overrides>();
    auto* cmd = app.add_subcommand(name, "Run the " + name + " experiment");
    add_common(cmd, *o, false);
    benches.emplace_back(cmd, std::move(o));
  }

  Overrides color_opts;
  std::string source, target;
  auto* color = app.add_subcommand("color-transfer", "Transfer colour palettes between two images");
  add_common(color, color_opts, false);
  color->add_option("--source", source, "Source image (PNG or JPEG)")->check(CLI::ExistingFile);
  color->add_option("--target", target, "Target image (PNG or JPEG)")->check(CLI::ExistingFile);

  std::uint64_t check_seed = 1;
  auto* oracle = app.add_subcommand("oracle-tests", "Check solvers, gradients and gap identities against oracles");
  oracle->add_option("--seed", check_seed, "Random seed");

  std::string metrics, mesh_pred, mesh_truth, plot_out = "plots";
  auto* plot = app.add_subcommand("plot-data", "Convert a run's metrics and mesh dumps to plot tables");
  plot->add_option("--metrics", metrics, "metrics.csv of a run")->required();
  plot->add_option("--mesh-pred", mesh_pred, "Binary point cloud of the mapped mesh");
  plot->add_option("--mesh-truth", mesh_truth, "Binary point cloud of the exact mesh image");
  plot->add_option("-o,--out", plot_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return execute("", run_opts);
    if (*color) return execute("color-transfer", color_opts, source, target);
    for (const auto& [cmd, o] : benches)
      if (*cmd) return execute(cmd->get_name(), *o);
    if (*oracle) {
      bool ok = true;
      for (const auto& r : dpot::run_oracle_checks(check_seed)) {
        dpot::print_check(std::cout, r);
        ok = ok && r.passed;
      }
      return ok ? kOk : kNumeric;
    }
    if (*plot) {
      dpot::PlotInputs in{metrics, std::nullopt, std::nullopt};
      if (!mesh_pred.empty()) in.mesh_pred = mesh_pred;
      if (!mesh_truth.empty()) in.mesh_truth = mesh_truth;
      for (const auto& p : dpot::emit_plot_data(in, plot_out)) std::cout << p.string() << '\n';
      return kOk;
    }
  } catch (const dpot::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const dpot::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const dpot::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const dpot::StarvationError& e) {
    std::cerr << "numeric error: " << e.what() << " (acceptance rate " << e.acceptance_rate() << ")\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}
