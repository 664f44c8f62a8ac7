#include "dpot/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "dpot/bench.hpp"
#include "dpot/errors.hpp"
#include "dpot/particles.hpp"

namespace dpot {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt_double(v[i]);
  return out;
}

[[noreturn]] void field_error(const std::string& key, const std::string& message) {
  throw InputError(key + ": " + message);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), value);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
    field_error(key, "cannot parse '" + text + "' as a number");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string s = trim(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  field_error(key, "cannot parse '" + text + "' as a boolean");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_number<double>(key, item));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

template <class T, class Get>
Setter number(Get get) {
  return [get](ExperimentConfig& c, const std::string& k, const std::string& v) { get(c) = parse_number<T>(k, v); };
}

template <class Get>
Setter boolean(Get get) {
  return [get](ExperimentConfig& c, const std::string& k, const std::string& v) { get(c) = parse_bool(k, v); };
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, Setter>> table{
      {"experiment.name", [](C& c, const std::string&, const std::string& v) { c.experiment = trim(v); }},
      {"experiment.seed", number<std::uint64_t>([](C& c) -> std::uint64_t& { return c.train.seed; })},
      {"experiment.threads", number<int>([](C& c) -> int& { return c.train.threads; })},
      {"dpot.lambda", number<double>([](C& c) -> double& { return c.train.dpot.lambda; })},
      {"dpot.n_gamma", number<int>([](C& c) -> int& { return c.train.dpot.plan_refresh; })},
      {"dpot.n_kappa", number<int>([](C& c) -> int& { return c.train.dpot.n_kappa; })},
      {"dpot.batch_size", number<int>([](C& c) -> int& { return c.train.dpot.batch_size; })},
      {"dpot.ablation", boolean([](C& c) -> bool& { return c.train.dpot.ablation; })},
      {"train.steps", number<long>([](C& c) -> long& { return c.train.steps; })},
      {"train.learning_rate", number<double>([](C& c) -> double& { return c.train.learning_rate; })},
      {"train.pool_size", number<std::size_t>([](C& c) -> std::size_t& { return c.train.pool_size; })},
      {"train.eval_size", number<std::size_t>([](C& c) -> std::size_t& { return c.train.eval_size; })},
      {"train.diagnostic_period", number<long>([](C& c) -> long& { return c.train.diagnostic_period; })},
      {"train.checkpoint_every", number<long>([](C& c) -> long& { return c.train.checkpoint_every; })},
      {"train.warm_start_steps", number<long>([](C& c) -> long& { return c.train.warm_start_steps; })},
      {"train.first_plan_from_source", boolean([](C& c) -> bool& { return c.train.first_plan_from_source; })},
      {"network.arch",
       [](C& c, const std::string& k, const std::string& v) {
         try {
           c.train.network.arch = parse_architecture(trim(v));
         } catch (const InputError& e) {
           field_error(k, e.what());
         }
       }},
      {"network.width", number<int>([](C& c) -> int& { return c.train.network.width; })},
      {"network.depth", number<int>([](C& c) -> int& { return c.train.network.depth; })},
      {"network.block_layers", number<int>([](C& c) -> int& { return c.train.network.block_layers; })},
      {"network.relu_slope", number<double>([](C& c) -> double& { return c.train.network.relu_slope; })},
      {"network.prelu_slope", number<double>([](C& c) -> double& { return c.train.network.prelu_slope; })},
      {"benchmark.kappa", number<double>([](C& c) -> double& { return c.kappa; })},
      {"benchmark.conditional", boolean([](C& c) -> bool& { return c.conditional; })},
      {"benchmark.kappa_min", number<double>([](C& c) -> double& { return c.kappa_min; })},
      {"benchmark.kappa_max", number<double>([](C& c) -> double& { return c.kappa_max; })},
      {"csir.d", number<int>([](C& c) -> int& { return c.csir_d; })},
      {"csir.observation_seed", number<std::uint64_t>([](C& c) -> std::uint64_t& { return c.observation_seed; })},
      {"csir.noise_sd", number<double>([](C& c) -> double& { return c.noise_sd; })},
      {"csir.reference_samples", number<std::size_t>([](C& c) -> std::size_t& { return c.reference_samples; })},
      {"csir.inference_samples", number<std::size_t>([](C& c) -> std::size_t& { return c.inference_samples; })},
      {"color.source", [](C& c, const std::string&, const std::string& v) { c.source_image = trim(v); }},
      {"color.target", [](C& c, const std::string&, const std::string& v) { c.target_image = trim(v); }},
      {"color.train_max_side", number<int>([](C& c) -> int& { return c.train_max_side; })},
      {"color.frame_times",
       [](C& c, const std::string& k, const std::string& v) { c.frame_times = parse_list(k, v); }},
      {"color.round_trip_samples", number<std::size_t>([](C& c) -> std::size_t& { return c.round_trip_samples; })},
      {"color.round_trip_radius", number<double>([](C& c) -> double& { return c.round_trip_radius; })},
      {"output.dump_points", number<std::size_t>([](C& c) -> std::size_t& { return c.dump_points; })},
      {"output.mesh_size", number<int>([](C& c) -> int& { return c.mesh_size; })},
  };
  return table;
}

bool is_planar(const std::string& e) {
  return e == "square" || e == "ellipse" || e == "disjoint" || e == "inverse";
}

void resolve_dimensions(ExperimentConfig& c) {
  if (c.experiment == "csir") {
    c.train.network.d_in = c.train.network.d_out = 2 * c.csir_d;
  } else if (c.experiment == "color-transfer") {
    c.train.network.d_in = c.train.network.d_out = 3;
  } else {
    c.train.network.d_out = 2;
    c.train.network.d_in = c.conditional ? 3 : 2;
  }
  c.train.experiment = c.experiment;
}

}  // namespace

ExperimentConfig default_config(const std::string& experiment) {
  if (std::find(kExperimentNames.begin(), kExperimentNames.end(), experiment) == kExperimentNames.end())
    throw InputError("experiment.name: unknown experiment '" + experiment + "'");
  ExperimentConfig c;
  c.experiment = experiment;
  TrainConfig& t = c.train;
  t.dpot.lambda = 0.3;
  t.seed = 1;
  if (experiment == "square") {
    t.dpot.plan_refresh = 50;
    t.dpot.batch_size = 1000;
    t.steps = 1000;
    t.learning_rate = 2e-4;
    t.pool_size = 20000;
    t.first_plan_from_source = true;
    t.network = {Architecture::resnet, 2, 2, 64, 4, 5};
  } else if (experiment == "ellipse") {
    t.dpot.plan_refresh = 10;
    t.dpot.n_kappa = 10;
    t.dpot.batch_size = 300;
    t.steps = 500;
    t.pool_size = 1000;
    t.warm_start_steps = 200;
    t.network = {Architecture::resnet, 2, 2, 32, 3, 4};
  } else if (experiment == "disjoint") {
    t.dpot.plan_refresh = 10;
    t.dpot.batch_size = 500;
    t.steps = 500;
    t.pool_size = 20000;
    t.warm_start_steps = 200;
    t.network = {Architecture::mlp, 2, 2, 64, 3};
    c.kappa = 0.5;
    c.kappa_min = 0.0;
    c.kappa_max = 1.0;
  } else if (experiment == "inverse") {
    t.dpot.plan_refresh = 50;
    t.dpot.n_kappa = 10;
    t.dpot.batch_size = 200;
    t.steps = 2000;
    t.pool_size = 2000;
    t.network = {Architecture::modified_mlp, 2, 2, 32, 3};
  } else if (experiment == "csir") {
    t.dpot.plan_refresh = 10;
    t.dpot.n_kappa = 2;
    t.dpot.batch_size = 500;
    t.steps = 500;
    t.pool_size = 1000;
    t.network = {Architecture::resnet, 2, 2, 32, 3, 2};
  } else {
    t.dpot.plan_refresh = 50;
    t.dpot.batch_size = 500;
    t.steps = 1000;
    t.pool_size = 500;
    t.warm_start_steps = 200;
    t.network = {Architecture::modified_mlp, 3, 3, 32, 3};
  }
  resolve_dimensions(c);
  return c;
}

void ExperimentConfig::validate() const {
  if (std::find(kExperimentNames.begin(), kExperimentNames.end(), experiment) == kExperimentNames.end())
    field_error("experiment.name", "unknown experiment '" + experiment + "'");
  const DPOTConfig& d = train.dpot;
  if (!(d.lambda >= 0.0 && d.lambda <= 1.0)) field_error("dpot.lambda", "must lie in [0, 1]");
  if (!d.ablation && (d.lambda == 0.0 || d.lambda == 1.0))
    field_error("dpot.lambda", "0 and 1 need dpot.ablation = true");
  if (d.plan_refresh < 1) field_error("dpot.n_gamma", "must be >= 1");
  if (d.n_kappa < 1) field_error("dpot.n_kappa", "must be >= 1");
  if (d.batch_size < 2) field_error("dpot.batch_size", "must be >= 2");
  if (train.threads < 1) field_error("experiment.threads", "must be >= 1");
  if (train.network.width < 1) field_error("network.width", "must be >= 1");
  if (train.network.depth < 1) field_error("network.depth", "must be >= 1");
  if (train.network.block_layers < 1) field_error("network.block_layers", "must be >= 1");
  if (conditional && experiment != "ellipse" && experiment != "disjoint")
    field_error("benchmark.conditional", "only the ellipse and disjoint benchmarks take a condition");
  if (!(kappa_min <= kappa_max)) field_error("benchmark.kappa_min", "must not exceed benchmark.kappa_max");
  if (experiment == "ellipse" && !(std::abs(kappa) <= 0.5)) field_error("benchmark.kappa", "must lie in [-0.5, 0.5]");
  if (experiment == "ellipse" && conditional && (kappa_min < -0.5 || kappa_max > 0.5))
    field_error("benchmark.kappa_min", "ellipse conditions must lie in [-0.5, 0.5]");
  if (experiment == "disjoint" && (!(kappa >= 0.0) || (conditional && kappa_min < 0.0)))
    field_error("benchmark.kappa", "half-circle gaps must be non-negative");
  if (csir_d < 1) field_error("csir.d", "must be >= 1");
  if (!(noise_sd > 0.0)) field_error("csir.noise_sd", "must be positive");
  if (reference_samples < 1) field_error("csir.reference_samples", "must be >= 1");
  if (inference_samples < 1) field_error("csir.inference_samples", "must be >= 1");
  if (experiment == "color-transfer") {
    if (source_image.empty()) field_error("color.source", "required");
    if (target_image.empty()) field_error("color.target", "required");
    if (train_max_side < 1) field_error("color.train_max_side", "must be >= 1");
    if (round_trip_samples < 1) field_error("color.round_trip_samples", "must be >= 1");
    if (!(round_trip_radius > 0.0)) field_error("color.round_trip_radius", "must be positive");
    for (double t : frame_times)
      if (!(t >= 0.0 && t <= 1.0)) field_error("color.frame_times", "every time must lie in [0, 1]");
  }
  if (mesh_size < 2) field_error("output.mesh_size", "must be >= 2");
  try {
    TrainConfig t = train;
    if (experiment == "color-transfer") t.pool_size = std::max<std::size_t>(t.pool_size, d.batch_size);
    t.validate();
  } catch (const InputError& e) {
    throw InputError(std::string("train.") + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::table() const {
  const TrainConfig& t = train;
  std::vector<std::pair<std::string, std::string>> rows{
      {"experiment.name", experiment},
      {"experiment.seed", std::to_string(t.seed)},
      {"experiment.threads", std::to_string(t.threads)},
      {"dpot.lambda", fmt_double(t.dpot.lambda)},
      {"dpot.n_gamma", std::to_string(t.dpot.plan_refresh)},
      {"dpot.n_kappa", std::to_string(t.dpot.n_kappa)},
      {"dpot.batch_size", std::to_string(t.dpot.batch_size)},
      {"dpot.ablation", fmt_bool(t.dpot.ablation)},
      {"train.steps", std::to_string(t.steps)},
      {"train.learning_rate", fmt_double(t.learning_rate)},
      {"train.pool_size", std::to_string(t.pool_size)},
      {"train.eval_size", std::to_string(t.eval_size)},
      {"train.diagnostic_period", std::to_string(t.diagnostic_every())},
      {"train.checkpoint_every", std::to_string(t.checkpoint_every)},
      {"train.warm_start_steps", std::to_string(t.warm_start_steps)},
      {"train.first_plan_from_source", fmt_bool(t.first_plan_from_source)},
      {"network.arch", std::string(to_string(t.network.arch))},
      {"network.d_in", std::to_string(t.network.d_in)},
      {"network.d_out", std::to_string(t.network.d_out)},
      {"network.width", std::to_string(t.network.width)},
      {"network.depth", std::to_string(t.network.depth)},
      {"network.block_layers", std::to_string(t.network.block_layers)},
      {"network.relu_slope", fmt_double(t.network.relu_slope)},
      {"network.prelu_slope", fmt_double(t.network.prelu_slope)},
      {"network.parameters", std::to_string(parameter_count(t.network))},
  };
  if (experiment == "ellipse" || experiment == "disjoint") {
    rows.emplace_back("benchmark.kappa", fmt_double(kappa));
    rows.emplace_back("benchmark.conditional", fmt_bool(conditional));
    rows.emplace_back("benchmark.kappa_min", fmt_double(kappa_min));
    rows.emplace_back("benchmark.kappa_max", fmt_double(kappa_max));
  }
  if (experiment == "csir") {
    rows.emplace_back("csir.d", std::to_string(csir_d));
    rows.emplace_back("csir.observation_seed", std::to_string(observation_seed));
    rows.emplace_back("csir.noise_sd", fmt_double(noise_sd));
    rows.emplace_back("csir.reference_samples", std::to_string(reference_samples));
    rows.emplace_back("csir.inference_samples", std::to_string(inference_samples));
  }
  if (experiment == "color-transfer") {
    rows.emplace_back("color.source", source_image.string());
    rows.emplace_back("color.target", target_image.string());
    rows.emplace_back("color.train_max_side", std::to_string(train_max_side));
    rows.emplace_back("color.frame_times", fmt_list(frame_times));
    rows.emplace_back("color.round_trip_samples", std::to_string(round_trip_samples));
    rows.emplace_back("color.round_trip_radius", fmt_double(round_trip_radius));
  }
  rows.emplace_back("output.dump_points", std::to_string(dump_points));
  rows.emplace_back("output.mesh_size", std::to_string(mesh_size));
  return rows;
}

ExperimentConfig parse_config(std::istream& is, const std::filesystem::path& base_dir) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  const auto name = tree.get_optional<std::string>("experiment.name");
  if (!name) field_error("experiment.name", "required");
  ExperimentConfig cfg = default_config(trim(*name));

  for (const auto& [section, keys] : tree) {
    if (keys.empty() && !keys.data().empty()) field_error(section, "key outside a section");
    for (const auto& [key, value] : keys) {
      const std::string path = section + "." + key;
      const auto it = std::find_if(setters().begin(), setters().end(), [&](const auto& s) { return s.first == path; });
      if (it == setters().end()) field_error(path, "unknown key");
      it->second(cfg, path, value.data());
    }
  }
  if (cfg.experiment != trim(*name)) field_error("experiment.name", "unknown experiment");
  for (std::filesystem::path* p : {&cfg.source_image, &cfg.target_image})
    if (!p->empty() && p->is_relative() && !base_dir.empty()) *p = base_dir / *p;
  resolve_dimensions(cfg);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  return parse_config(is, path.parent_path());
}

void print_config(std::ostream& os, const ExperimentConfig& cfg) {
  std::size_t width = 0;
  const auto rows = cfg.table();
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  for (const auto& [k, v] : rows) os << k << std::string(width - k.size(), ' ') << " = " << v << '\n';
}

// --- problems ------------------------------------------------------------------------

TrainingProblem make_problem(const ExperimentConfig& cfg) {
  TrainingProblem p;
  const double fixed = cfg.kappa;
  const auto kappa_of = [fixed](std::span<const double> c) { return c.empty() ? fixed : c[0]; };
  if (cfg.conditional) {
    const double lo = cfg.kappa_min, hi = cfg.kappa_max;
    p.draw_condition = [lo, hi](Rng& rng) { return std::vector<double>{std::uniform_real_distribution<>(lo, hi)(rng)}; };
  }
  const std::string& e = cfg.experiment;
  if (e == "square") {
    p.source = [](std::span<const double>, std::size_t n, Rng& rng) { return sample_square_source(n, rng).samples; };
    p.target = [](std::span<const double>, std::size_t n, Rng& rng) { return sample_square_target(n, rng); };
    p.truth = [](const Matrix& x, std::span<const double>) { return square_exact_map(x); };
  } else if (e == "ellipse") {
    p.source = [](std::span<const double>, std::size_t n, Rng& rng) { return sample_ellipse_source(n, rng); };
    p.target = [kappa_of](std::span<const double> c, std::size_t n, Rng& rng) {
      return sample_ellipse_target(kappa_of(c), n, rng);
    };
    p.truth = [kappa_of](const Matrix& x, std::span<const double> c) { return ellipse_exact_map(x, kappa_of(c)); };
  } else if (e == "disjoint") {
    p.source = [kappa_of](std::span<const double> c, std::size_t n, Rng& rng) {
      return sample_half_circles(kappa_of(c), n, rng).points;
    };
    p.target = [](std::span<const double>, std::size_t n, Rng& rng) { return sample_half_circle_target(n, rng); };
  } else if (e == "inverse") {
    p.source = [](std::span<const double>, std::size_t n, Rng& rng) { return sample_mixture_source(n, rng).samples; };
    p.target = [](std::span<const double>, std::size_t n, Rng& rng) { return sample_mixture_target(n, rng).samples; };
  } else {
    throw InputError("experiment.name: '" + e + "' is not a two-dimensional benchmark");
  }
  return p;
}

// --- CSIR -----------------------------------------------------------------------------

double sorted_w1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("sorted_w1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |F_a^{-1}(q) - F_b^{-1}(q)| over the merged quantile breakpoints.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double q = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next = std::min((i + 1) / na, (j + 1) / nb);
    total += (next - q) * std::abs(a[i] - b[j]);
    q = next;
    if ((i + 1) / na <= next) ++i;
    if ((j + 1) / nb <= next) ++j;
  }
  return total;
}

CsirRun run_csir(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment != "csir") throw InputError("experiment.name: run_csir needs the csir experiment");
  const int d = cfg.csir_d;
  const TrainConfig& t = cfg.train;
  Rng obs_rng = make_rng(cfg.observation_seed);
  ObservationSet observations = make_observations(d, obs_rng, cfg.noise_sd);

  Rng ref_rng = make_rng(t.seed, 20);
  AcceptRejectResult reference = posterior_accept_reject(observations, cfg.reference_samples, ref_rng);
  Rng target_rng = make_rng(t.seed, 21);
  const std::size_t n0 = t.pool_size;
  AcceptRejectResult training_target =
      posterior_accept_reject(observations, n0 * static_cast<std::size_t>(t.dpot.n_kappa), target_rng);

  Rng prior_rng = make_rng(t.seed, 22);
  std::vector<ConditionPool> pools(static_cast<std::size_t>(t.dpot.n_kappa));
  for (std::size_t k = 0; k < pools.size(); ++k) {
    pools[k].source = sample_csir_prior(d, n0, prior_rng);
    pools[k].target = training_target.samples.middleRows(static_cast<Eigen::Index>(k * n0),
                                                          static_cast<Eigen::Index>(n0));
  }
  CsirRun run{std::move(observations), std::move(reference), std::move(training_target), train(t, pools), {}, {}, 0.0, {}, {}};

  run.prior_samples = sample_csir_prior(d, cfg.inference_samples, prior_rng);
  const auto start = Clock::now();
  run.pushforward = run.training.net.apply(run.prior_samples);
  run.inference_seconds = seconds_since(start);

  for (Eigen::Index c = 0; c < run.pushforward.cols(); ++c) {
    std::vector<double> pushed(static_cast<std::size_t>(run.pushforward.rows()));
    std::vector<double> ref(static_cast<std::size_t>(run.reference.samples.rows()));
    for (Eigen::Index i = 0; i < run.pushforward.rows(); ++i) pushed[static_cast<std::size_t>(i)] = run.pushforward(i, c);
    for (Eigen::Index i = 0; i < run.reference.samples.rows(); ++i)
      ref[static_cast<std::size_t>(i)] = run.reference.samples(i, c);
    run.marginal_w1.push_back(sorted_w1(std::move(pushed), std::move(ref)));
  }
  run.timings = {{d, "AR", cfg.reference_samples, run.reference.seconds},
                 {d, "NN", cfg.inference_samples, run.inference_seconds}};
  return run;
}

// --- manifest ---------------------------------------------------------------------------

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw IoError("SHA-1 failed for " + path.string());
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["experiment"] = m.experiment;
  j["seed"] = m.seed;
  for (const auto& [k, v] : m.config) j["config"][k] = v;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& [p, h] : m.input_hashes) j["inputs"].push_back({{"path", p}, {"sha1", h}});
  j["outputs"] = m.outputs;
  for (const auto& [k, v] : m.timings) j["timings"][k] = v;
  for (const auto& [k, v] : m.summary) j["summary"][k] = v;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

// --- plot data ---------------------------------------------------------------------------

Matrix cartesian_mesh(int mesh_size, double lo1, double hi1, double lo2, double hi2) {
  if (mesh_size < 2) throw InputError("cartesian_mesh: mesh_size must be >= 2");
  Matrix m(static_cast<Eigen::Index>(mesh_size) * mesh_size, 2);
  for (int i = 0; i < mesh_size; ++i)
    for (int j = 0; j < mesh_size; ++j) {
      const Eigen::Index r = static_cast<Eigen::Index>(i) * mesh_size + j;
      m(r, 0) = lo1 + (hi1 - lo1) * j / (mesh_size - 1);
      m(r, 1) = lo2 + (hi2 - lo2) * i / (mesh_size - 1);
    }
  return m;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

std::string mesh_tsv(const Matrix& m) {
  std::string out = "# x1\tx2\n";
  char buf[96];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\n", m(i, 0), m(i, 1));
    out += buf;
  }
  return out;
}

}  // namespace

std::vector<std::filesystem::path> emit_plot_data(const PlotInputs& inputs, const std::filesystem::path& out_dir) {
  std::ifstream is(inputs.metrics);
  if (!is) throw IoError("cannot open metrics " + inputs.metrics.string());
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader)
    throw IoError("unexpected metrics header in " + inputs.metrics.string());
  std::string eps = "# step\teps1\teps2\teps3\teps_total\n", err = "# step\trel_l2\n";
  while (std::getline(is, line)) {
    const auto f = split_csv(line);
    if (f.size() != 8) throw IoError("malformed metrics row in " + inputs.metrics.string() + ": " + line);
    if (!f[2].empty()) eps += f[0] + '\t' + f[2] + '\t' + f[3] + '\t' + f[4] + '\t' + f[5] + '\n';
    if (!f[6].empty()) err += f[0] + '\t' + f[6] + '\n';
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written{out_dir / "eps.tsv", out_dir / "rel_error.tsv"};
  write_text(written[0], eps);
  write_text(written[1], err);
  for (const auto& [src, name] : {std::pair{inputs.mesh_pred, "mesh_pred.tsv"}, std::pair{inputs.mesh_truth, "mesh_truth.tsv"}}) {
    if (!src) continue;
    if (!std::filesystem::exists(*src)) throw IoError("missing mesh dump " + src->string());
    written.push_back(out_dir / name);
    write_text(written.back(), mesh_tsv(read_point_cloud(*src)));
  }
  return written;
}

// --- runs ---------------------------------------------------------------------------------

namespace {

struct RunContext {
  std::filesystem::path dir;
  RunManifest manifest;

  std::filesystem::path file(const std::string& rel) {
    manifest.outputs.push_back(rel);
    const std::filesystem::path p = dir / rel;
    std::filesystem::create_directories(p.parent_path());
    return p;
  }

  void points(const std::string& stem, const Matrix& m) {
    write_point_cloud(file("points/" + stem + ".bin"), m);
    write_point_cloud_text(file("points/" + stem + ".txt"), m);
  }

  void track_checkpoints(const std::vector<std::filesystem::path>& paths) {
    for (const auto& p : paths) manifest.outputs.push_back(std::filesystem::relative(p, dir).generic_string());
  }
};

Matrix head(const Matrix& m, std::size_t n) { return m.topRows(std::min<Eigen::Index>(m.rows(), static_cast<Eigen::Index>(n))); }

void run_planar(const ExperimentConfig& cfg, RunContext& ctx) {
  TrainConfig t = cfg.train;
  t.checkpoint_dir = ctx.dir / "checkpoints";
  const TrainingProblem problem = make_problem(cfg);
  Rng data_rng = make_rng(t.seed, 3);
  const std::vector<ConditionPool> pools = build_pools(problem, t, data_rng);
  const auto start = Clock::now();
  const TrainResult r = train(t, pools, problem.truth);
  ctx.manifest.timings.emplace_back("train_seconds", seconds_since(start));
  ctx.track_checkpoints(r.checkpoints);

  write_metrics_csv(ctx.file("metrics.csv"), r.metrics);
  const ConditionPool& first = pools.front();
  ctx.points("source", head(first.source, cfg.dump_points));
  ctx.points("target", head(first.target, cfg.dump_points));
  ctx.points("mapped", r.net.apply(head(first.source, cfg.dump_points), first.condition));

  Matrix mesh;
  if (cfg.experiment == "square") {
    const Box b = square_box();
    mesh = cartesian_mesh(cfg.mesh_size, b.lo[0], b.hi[0], b.lo[1], b.hi[1]);
  } else {
    const Eigen::RowVectorXd lo = first.source.colwise().minCoeff(), hi = first.source.colwise().maxCoeff();
    mesh = cartesian_mesh(cfg.mesh_size, lo[0], hi[0], lo[1], hi[1]);
  }
  PlotInputs plot{ctx.dir / "metrics.csv", ctx.dir / "points/mesh_pred.bin", std::nullopt};
  write_point_cloud(ctx.file("points/mesh_pred.bin"), r.net.apply(mesh, first.condition));
  if (problem.truth) {
    write_point_cloud(ctx.file("points/mesh_truth.bin"), problem.truth(mesh, first.condition));
    plot.mesh_truth = ctx.dir / "points/mesh_truth.bin";
  }
  for (const auto& p : emit_plot_data(plot, ctx.dir / "plots"))
    ctx.manifest.outputs.push_back(std::filesystem::relative(p, ctx.dir).generic_string());

  const MetricsRow& last = r.metrics.back();
  ctx.manifest.summary.emplace_back("final_loss", last.loss);
  if (last.gap) ctx.manifest.summary.emplace_back("final_eps_total", last.gap->eps_total);
  if (last.rel_l2) ctx.manifest.summary.emplace_back("final_rel_l2", *last.rel_l2);
  ctx.manifest.summary.emplace_back("recoveries", r.recoveries);
}

void run_inverse(const ExperimentConfig& cfg, RunContext& ctx) {
  const TrainingProblem problem = make_problem(cfg);
  Rng data_rng = make_rng(cfg.train.seed, 3);
  const std::vector<ConditionPool> pools = build_pools(problem, cfg.train, data_rng);
  const auto start = Clock::now();
  const InverseResult r = train_inverse(cfg.train, pools);
  ctx.manifest.timings.emplace_back("train_seconds", seconds_since(start));
  {
    std::ofstream os(ctx.file("cycle.csv"));
    write_cycle_csv(os, r.metrics);
    if (!os) throw IoError("cannot write cycle.csv");
  }
  save_checkpoint(ctx.file("checkpoints/forward.ckpt"), r.forward);
  save_checkpoint(ctx.file("checkpoints/inverse.ckpt"), r.inverse);
  const Matrix x = head(pools.front().source, cfg.dump_points), y = head(pools.front().target, cfg.dump_points);
  ctx.points("source", x);
  ctx.points("target", y);
  ctx.points("forward_mapped", r.forward.apply(x));
  ctx.points("inverse_mapped", r.inverse.apply(y));
  ctx.manifest.summary.emplace_back("final_residual_forward", r.metrics.back().residual_forward);
  ctx.manifest.summary.emplace_back("final_residual_inverse", r.metrics.back().residual_inverse);
}

void run_csir_experiment(const ExperimentConfig& cfg, RunContext& ctx) {
  const CsirRun r = run_csir(cfg);
  write_metrics_csv(ctx.file("metrics.csv"), r.training.metrics);
  save_checkpoint(ctx.file("checkpoints/final.ckpt"), r.training.net);
  ctx.points("posterior_ar", r.reference.samples);
  ctx.points("training_target", r.training_target.samples);
  ctx.points("pushforward", head(r.pushforward, cfg.dump_points));
  {
    std::ofstream os(ctx.file("timing.tsv"));
    write_timing_table(os, r.timings);
    if (!os) throw IoError("cannot write timing.tsv");
  }
  {
    std::ofstream os(ctx.file("plots/marginal_w1.tsv"));
    os << "# coordinate\tw1\n";
    for (std::size_t c = 0; c < r.marginal_w1.size(); ++c) os << c << '\t' << fmt_double(r.marginal_w1[c]) << '\n';
  }
  for (const auto& p : emit_plot_data({ctx.dir / "metrics.csv", std::nullopt, std::nullopt}, ctx.dir / "plots"))
    ctx.manifest.outputs.push_back(std::filesystem::relative(p, ctx.dir).generic_string());
  ctx.manifest.timings.emplace_back("accept_reject_seconds", r.reference.seconds);
  ctx.manifest.timings.emplace_back("inference_seconds", r.inference_seconds);
  ctx.manifest.summary.emplace_back("acceptance_rate", r.reference.acceptance_rate());
  ctx.manifest.summary.emplace_back("speedup", r.reference.seconds / std::max(r.inference_seconds, 1e-12));
  for (std::size_t c = 0; c < r.marginal_w1.size(); ++c)
    ctx.manifest.summary.emplace_back("marginal_w1_" + std::to_string(c), r.marginal_w1[c]);
}

void run_color(const ExperimentConfig& cfg, RunContext& ctx) {
  ColorTransferConfig c;
  c.train = cfg.train;
  c.train_max_side = cfg.train_max_side;
  c.frame_times = cfg.frame_times;
  c.round_trip_samples = cfg.round_trip_samples;
  c.round_trip_radius = cfg.round_trip_radius;
  const ImageTensor src = load_image(cfg.source_image), tgt = load_image(cfg.target_image);
  const auto start = Clock::now();
  const ColorTransferResult r = color_transfer(src, tgt, c);
  ctx.manifest.timings.emplace_back("train_seconds", seconds_since(start));
  save_image(ctx.file("images/source_with_target_palette.png"), r.source_with_target_palette);
  save_image(ctx.file("images/target_with_source_palette.png"), r.target_with_source_palette);
  for (const auto& [t, frame] : r.frames) {
    char name[64];
    std::snprintf(name, sizeof name, "images/frame_t%.2f.png", t);
    save_image(ctx.file(name), frame);
  }
  {
    std::ofstream os(ctx.file("cycle.csv"));
    write_cycle_csv(os, r.maps.metrics);
  }
  save_checkpoint(ctx.file("checkpoints/forward.ckpt"), r.maps.forward);
  save_checkpoint(ctx.file("checkpoints/inverse.ckpt"), r.maps.inverse);
  if (r.clamp_rate_forward() > 0.01 || r.clamp_rate_inverse() > 0.01)
    std::cerr << "warning: out-of-gamut colours clamped on " << fmt_double(100.0 * r.clamp_rate_forward()) << "% / "
              << fmt_double(100.0 * r.clamp_rate_inverse()) << "% of pixels\n";
  ctx.manifest.summary.emplace_back("clamp_rate_forward", r.clamp_rate_forward());
  ctx.manifest.summary.emplace_back("clamp_rate_inverse", r.clamp_rate_inverse());
  ctx.manifest.summary.emplace_back("round_trip_source", r.round_trip_source);
  ctx.manifest.summary.emplace_back("round_trip_target", r.round_trip_target);
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const auto start = Clock::now();
  std::filesystem::create_directories(options.out_dir);
  RunContext ctx{options.out_dir, {}};
  RunManifest& m = ctx.manifest;
  m.experiment = cfg.experiment;
  m.seed = cfg.train.seed;
  m.config = cfg.table();
  std::vector<std::filesystem::path> inputs = options.inputs;
  if (cfg.experiment == "color-transfer") {
    inputs.push_back(cfg.source_image);
    inputs.push_back(cfg.target_image);
  }
  for (const auto& p : inputs) m.input_hashes.emplace_back(p.string(), git_blob_sha1(p));

  if (is_planar(cfg.experiment) && cfg.experiment != "inverse")
    run_planar(cfg, ctx);
  else if (cfg.experiment == "inverse")
    run_inverse(cfg, ctx);
  else if (cfg.experiment == "csir")
    run_csir_experiment(cfg, ctx);
  else
    run_color(cfg, ctx);

  m.timings.emplace_back("total_seconds", seconds_since(start));
  std::sort(m.outputs.begin(), m.outputs.end());
  m.outputs.erase(std::unique(m.outputs.begin(), m.outputs.end()), m.outputs.end());
  for (const auto& rel : m.outputs)
    if (!std::filesystem::exists(ctx.dir / rel)) throw IoError("declared output missing: " + rel);
  m.outputs.push_back("manifest.json");
  write_manifest(ctx.dir / "manifest.json", m);
  return m;
}

}  // namespace dpot
