#pragma once

// Experiment definitions behind the command-line front end: structured
// configuration files, the benchmark training problems, per-experiment
// runners and the artifacts they write (metrics, point clouds, plot data,
// images, run manifest).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpot/color.hpp"
#include "dpot/csir.hpp"
#include "dpot/trainer.hpp"

namespace dpot {

inline const std::vector<std::string> kExperimentNames{"square",  "ellipse", "disjoint",
                                                       "inverse", "csir",    "color-transfer"};

struct ExperimentConfig {
  std::string experiment = "square";
  TrainConfig train;

  // ellipse and disjoint
  double kappa = 0.2;
  /// Condition the network on kappa drawn from [kappa_min, kappa_max].
  bool conditional = false;
  double kappa_min = -0.5;
  double kappa_max = 0.5;

  // csir
  int csir_d = 1;
  std::uint64_t observation_seed = 1;
  double noise_sd = 1.0;
  /// Accept-reject posterior samples timed as the baseline and used as the
  /// marginal reference; the training pools are drawn separately.
  std::size_t reference_samples = 1000;
  /// Prior samples pushed through the trained map for the timing table.
  std::size_t inference_samples = 100000;

  // color-transfer
  std::filesystem::path source_image;
  std::filesystem::path target_image;
  int train_max_side = 256;
  std::vector<double> frame_times{0.2, 0.4, 0.6, 0.8, 1.0};
  std::size_t round_trip_samples = 4096;
  double round_trip_radius = 0.1;

  // output
  std::size_t dump_points = 2000;
  int mesh_size = 15;

  /// Throws InputError prefixed with the offending "section.key".
  void validate() const;
  /// "section.key" -> value for every resolved parameter, in a stable order.
  std::vector<std::pair<std::string, std::string>> table() const;
};

/// Defaults for an experiment id, with the network dimensions filled in.
/// Throws InputError for unknown ids.
ExperimentConfig default_config(const std::string& experiment);

/// Flat INI-style file with [experiment], [dpot], [train], [network],
/// [benchmark], [csir], [color] and [output] sections. Unknown sections or
/// keys and unparsable values throw InputError naming "section.key". Relative
/// image paths resolve against the config file's directory.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::istream& is, const std::filesystem::path& base_dir = {});

/// Resolved parameter table, one "section.key = value" line each.
void print_config(std::ostream& os, const ExperimentConfig& cfg);

/// Source, target and exact map of a two-dimensional benchmark (square,
/// ellipse, disjoint, inverse).
TrainingProblem make_problem(const ExperimentConfig& cfg);

// --- CSIR ----------------------------------------------------------------------

struct CsirRun {
  ObservationSet observations;
  /// Timed accept-reject baseline; also the marginal reference.
  AcceptRejectResult reference;
  /// Accept-reject samples forming the n_kappa target pools.
  AcceptRejectResult training_target;
  TrainResult training;
  Matrix prior_samples;
  Matrix pushforward;
  double inference_seconds = 0.0;
  /// Sorted-coupling W1 between pushforward and reference, per coordinate.
  std::vector<double> marginal_w1;
  std::vector<TimingRow> timings;
};

CsirRun run_csir(const ExperimentConfig& cfg);

/// 1-D Wasserstein-1 distance between two empirical measures through the
/// sorted (quantile) coupling; sizes may differ.
double sorted_w1(std::vector<double> a, std::vector<double> b);

// --- runs ----------------------------------------------------------------------

struct RunOptions {
  std::filesystem::path out_dir = "runs";
  /// Files hashed into the manifest (config file, images).
  std::vector<std::filesystem::path> inputs;
};

struct RunManifest {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;
  /// Input path -> git-style blob SHA-1.
  std::vector<std::pair<std::string, std::string>> input_hashes;
  /// Output paths relative to the run directory.
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, double>> timings;
  /// Headline numbers of the run (final error, residuals, ...).
  std::vector<std::pair<std::string, double>> summary;
};

/// SHA-1 of "blob <size>\0" followed by the file bytes, as lowercase hex.
std::string git_blob_sha1(const std::filesystem::path& path);

/// Runs the experiment and writes its artifacts plus manifest.json into
/// options.out_dir. Throws IoError if an output is missing at exit.
RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& options);

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// --- plot data -------------------------------------------------------------------

struct PlotInputs {
  /// metrics.csv written by a training run.
  std::filesystem::path metrics;
  /// Optional binary point clouds of the mapped and exact 15 x 15 mesh.
  std::optional<std::filesystem::path> mesh_pred;
  std::optional<std::filesystem::path> mesh_truth;
};

/// Writes eps.tsv (one row per diagnostic step), rel_error.tsv (rows with an
/// error value) and mesh_pred.tsv / mesh_truth.tsv when the dumps are given.
/// Missing inputs throw IoError. Returns the written paths.
std::vector<std::filesystem::path> emit_plot_data(const PlotInputs& inputs, const std::filesystem::path& out_dir);

/// mesh_size x mesh_size Cartesian grid over [lo, hi]^2, row-major in x2.
Matrix cartesian_mesh(int mesh_size, double lo1, double hi1, double lo2, double hi2);

}  // namespace dpot
