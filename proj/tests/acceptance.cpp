// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 1 2 3`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "dpot/bench.hpp"
#include "dpot/checks.hpp"
#include "dpot/color.hpp"
#include "dpot/csir.hpp"
#include "dpot/errors.hpp"
#include "dpot/experiments.hpp"
#include "dpot/image.hpp"
#include "image_fixtures.hpp"

using namespace dpot;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

const MetricsRow& last_diagnostic(const TrainResult& r) {
  for (auto it = r.metrics.rbegin(); it != r.metrics.rend(); ++it)
    if (it->gap) return *it;
  throw InvariantError("run produced no diagnostic rows");
}

TrainResult train_experiment(const ExperimentConfig& cfg) { return train(cfg.train, make_problem(cfg)); }

Outcome from_check(const CheckResult& r, double budget_seconds = 0.0) {
  if (budget_seconds <= 0.0) return {r.passed, r.detail + fmt(" [%.1f s]", r.seconds)};
  const bool in_time = r.seconds < budget_seconds;
  return {r.passed && in_time, r.detail + fmt(" [%.1f s, budget %.0f s]", r.seconds, budget_seconds)};
}

// --- 4 ---------------------------------------------------------------------------

Outcome square_benchmark() {
  const auto start = Clock::now();
  const ExperimentConfig cfg = default_config("square");
  const TrainResult r = train_experiment(cfg);
  std::vector<double> eps, err;
  for (const auto& m : r.metrics)
    if (m.gap && m.rel_l2) {
      eps.push_back(m.gap->eps_total);
      err.push_back(*m.rel_l2);
    }
  const double final_err = *last_diagnostic(r).rel_l2;
  const double rho = spearman(eps, err);
  const double seconds = since(start);
  return {final_err <= 0.1 && rho > 0.5 && seconds <= 1200.0,
          fmt("rel L2 = %.4f (<= 0.1), Spearman(eps_total, rel L2) = %.3f over %zu checkpoints (> 0.5), %.0f s "
              "(<= 1200)",
              final_err, rho, eps.size(), seconds)};
}

// --- 5 and 6 -----------------------------------------------------------------------

struct EllipseRuns {
  std::vector<double> err_nk10, err_nk1;
  std::vector<double> sub[3];  // lambda = 0, 0.3, 1 at n_kappa = 1
  std::vector<double> w2ty[3];
};

ExperimentConfig ellipse_config(int n_kappa, double lambda, std::uint64_t seed) {
  ExperimentConfig cfg = default_config("ellipse");
  cfg.kappa = 0.2;
  cfg.train.seed = seed;
  cfg.train.dpot.n_kappa = n_kappa;
  cfg.train.pool_size = 10000 / static_cast<std::size_t>(n_kappa);
  cfg.train.dpot.lambda = lambda;
  cfg.train.dpot.ablation = lambda == 0.0 || lambda == 1.0;
  return cfg;
}

const EllipseRuns& ellipse_runs() {
  static const EllipseRuns runs = [] {
    EllipseRuns out;
    const double lambdas[3] = {0.0, 0.3, 1.0};
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      out.err_nk10.push_back(*last_diagnostic(train_experiment(ellipse_config(10, 0.3, seed))).rel_l2);
      for (int l = 0; l < 3; ++l) {
        const MetricsRow m = last_diagnostic(train_experiment(ellipse_config(1, lambdas[l], seed)));
        if (l == 1) out.err_nk1.push_back(*m.rel_l2);
        out.sub[l].push_back(m.gap->transport_root - m.gap->w2_mapped_source);
        out.w2ty[l].push_back(m.gap->w2_mapped_target);
      }
    }
    return out;
  }();
  return runs;
}

std::string join(const std::vector<double>& v, const char* f = "%.4f") {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : "/") + fmt(f, x);
  return s;
}

Outcome ellipse_benchmark() {
  double worst_asym = 0.0, min_eig = 1e300;
  for (int i = 0; i <= 20; ++i) {
    const double kappa = -0.5 + 0.05 * i;
    const Eigen::Matrix2d a = ellipse_target_matrix(kappa) * Eigen::Rotation2Dd(ellipse_angle(kappa)).toRotationMatrix() *
                              ellipse_source_matrix().inverse();
    worst_asym = std::max(worst_asym, std::abs(a(0, 1) - a(1, 0)));
    const Eigen::Matrix2d s = 0.5 * (a + a.transpose());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s).eigenvalues().minCoeff());
  }
  const bool a_ok = worst_asym < 1e-12 && min_eig > 0.0;

  const EllipseRuns& r = ellipse_runs();
  const bool b_ok = std::all_of(r.err_nk10.begin(), r.err_nk10.end(), [](double e) { return e <= 0.12; });
  int wins = 0;
  for (std::size_t s = 0; s < 3; ++s) wins += r.err_nk10[s] < r.err_nk1[s] ? 1 : 0;
  const bool c_ok = wins >= 2;
  return {a_ok && b_ok && c_ok,
          fmt("(a) max asymmetry %.2g, min eigenvalue %.3f over 21 kappa: %s; ", worst_asym, min_eig,
              a_ok ? "ok" : "fail") +
              "(b) rel L2 at kappa = 0.2, seeds 1-3: " + join(r.err_nk10) + " (<= 0.12): " + (b_ok ? "ok" : "fail") +
              "; (c) n_kappa = 10 vs 1: " + join(r.err_nk10) + " vs " + join(r.err_nk1) +
              fmt(", %d/3 seeds lower: %s", wins, c_ok ? "ok" : "fail")};
}

Outcome lambda_ablation() {
  const EllipseRuns& r = ellipse_runs();
  int zero_wins = 0, one_wins = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    zero_wins += r.sub[0][s] > 1e-9 && r.sub[0][s] >= 2.0 * std::max(r.sub[1][s], 0.0) ? 1 : 0;
    one_wins += r.w2ty[2][s] >= 2.0 * r.w2ty[1][s] ? 1 : 0;
  }
  return {zero_wins >= 2 && one_wins >= 2,
          "suboptimality lambda = 0 vs 0.3: " + join(r.sub[0], "%.2e") + " vs " + join(r.sub[1], "%.2e") +
              fmt(" (%d/3 >= 2x); ", zero_wins) + "W2(T(X), Y) lambda = 1 vs 0.3: " + join(r.w2ty[2]) + " vs " +
              join(r.w2ty[1]) + fmt(" (%d/3 >= 2x)", one_wins)};
}

// --- 7 ---------------------------------------------------------------------------

Outcome inverse_mapping() {
  const auto start = Clock::now();
  const ExperimentConfig cfg = default_config("inverse");
  Rng data_rng = make_rng(cfg.train.seed, 3);
  const auto pools = build_pools(make_problem(cfg), cfg.train, data_rng);
  const InverseResult r = train_inverse(cfg.train, pools);
  const CycleRow& last = r.metrics.back();
  const auto at100 = std::find_if(r.metrics.begin(), r.metrics.end(), [](const CycleRow& c) { return c.step == 100; });
  const double seconds = since(start);
  std::string drop;
  if (at100 != r.metrics.end())
    drop = fmt(", drop since step 100: %.1fx / %.1fx", at100->residual_forward / last.residual_forward,
               at100->residual_inverse / last.residual_inverse);
  return {last.residual_forward <= 5e-2 && last.residual_inverse <= 5e-2 && seconds <= 1800.0,
          fmt("residuals %.2e and %.2e at step %ld (<= 5e-2), %.0f s (<= 1800)", last.residual_forward,
              last.residual_inverse, last.step, seconds) +
              drop};
}

// --- 8 ---------------------------------------------------------------------------

Vector state_vector(const CSIRState& s) {
  Vector v(s.S.size() * 3);
  v << s.S, s.I, s.R;
  return v;
}

Outcome csir_benchmark() {
  const CSIRParams truth = CSIRParams::truth(1);
  std::vector<double> times;
  for (int k = 1; k <= 500; ++k) times.push_back(0.01 * k);
  const double initial = csir_initial_state(1).total();
  double drift = 0.0;
  for (const CSIRState& s : rk4_simulate(truth, times, kCsirStep)) drift = std::max(drift, std::abs(s.total() - initial));
  const bool a_ok = drift < 1e-6;

  const std::vector<double> end{5.0};
  const Vector h1 = state_vector(rk4_simulate(truth, end, 0.1).front());
  const Vector h2 = state_vector(rk4_simulate(truth, end, 0.05).front());
  const Vector h3 = state_vector(rk4_simulate(truth, end, 0.025).front());
  const double ratio = (h1 - h2).norm() / (h2 - h3).norm();
  const bool b_ok = ratio >= 8.0 && ratio <= 32.0;

  const CsirRun run = run_csir(default_config("csir"));
  const double speedup = run.reference.seconds / run.inference_seconds;
  const bool c_ok = speedup >= 100.0;
  const double worst_w1 = *std::max_element(run.marginal_w1.begin(), run.marginal_w1.end());
  const bool d_ok = worst_w1 <= 0.08;
  return {a_ok && b_ok && c_ok && d_ok,
          fmt("(a) population drift %.2e (< 1e-6); (b) step-halving ratio %.2f (in [8, 32]); ", drift, ratio) +
              fmt("(c) AR %zu samples %.1f s vs NN %zu samples %.3f s, speedup %.0fx (>= 100); ",
                  static_cast<std::size_t>(run.reference.samples.rows()), run.reference.seconds,
                  static_cast<std::size_t>(run.pushforward.rows()), run.inference_seconds, speedup) +
              "(d) marginal W1 beta/zeta " + join(run.marginal_w1) + " (<= 0.08)"};
}

// --- 9 ---------------------------------------------------------------------------

Outcome color_transfer_smoke() {
  const auto dir = std::filesystem::temp_directory_path() / "dpot_acceptance_color";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_image(dir / "source.png", testing::synthetic_image(256, 256, 0));
  save_image(dir / "target.png", testing::synthetic_image(256, 256, 1));
  const ImageTensor source = load_image(dir / "source.png");
  const ImageTensor target = load_image(dir / "target.png");

  ExperimentConfig base = default_config("color-transfer");
  ColorTransferConfig cfg;
  cfg.train = base.train;
  cfg.train_max_side = 128;
  cfg.frame_times = {0.0, 0.5, 1.0};
  const ColorTransferResult r = color_transfer(source, target, cfg);

  const ImageTensor& t0 = r.frames.front().second;
  const ImageTensor& t1 = r.frames.back().second;
  save_image(dir / "frame_t0.png", t0);
  save_image(dir / "frame_t1.png", t1);
  save_image(dir / "transfer.png", r.source_with_target_palette);
  const auto bytes = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };
  const bool frames_ok = t0.pixels == source.pixels && t1.pixels == r.source_with_target_palette.pixels &&
                         bytes(dir / "frame_t0.png") == bytes(dir / "source.png") &&
                         bytes(dir / "frame_t1.png") == bytes(dir / "transfer.png");
  const bool gamut_ok = r.clamp_rate_forward() < 0.01 && r.clamp_rate_inverse() < 0.01;
  const bool cycle_ok = r.round_trip_source >= 0.95 && r.round_trip_target >= 0.95;
  return {frames_ok && gamut_ok && cycle_ok,
          fmt("clamp rate %.2f%% / %.2f%% (< 1%%); round trip within 0.1: %.3f / %.3f (>= 0.95); ",
              100.0 * r.clamp_rate_forward(), 100.0 * r.clamp_rate_inverse(), r.round_trip_source,
              r.round_trip_target) +
              "t = 0 and t = 1 frames bit-match source and transfer: " + (frames_ok ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"assignment solver vs enumeration", [] { return from_check(check_assignment_oracle(1), 10.0); }},
      {"loss gradients vs finite differences", [] { return from_check(check_loss_gradients(1), 60.0); }},
      {"gap identity and bounds", [] { return from_check(check_gap_identity(1)); }},
      {"square benchmark", square_benchmark},
      {"ellipse benchmark", ellipse_benchmark},
      {"lambda ablation", lambda_ablation},
      {"inverse mapping", inverse_mapping},
      {"CSIR posterior, d = 1", csir_benchmark},
      {"colour transfer smoke", color_transfer_smoke},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [criterion 1-9 ...]\n";
      return 2;
    }
    selected.insert(n);
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.passed ? 0 : 1;
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << n << " (" << criteria[i].first << ", "
              << fmt("%.0f s", since(start)) << "): " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
