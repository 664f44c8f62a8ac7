#include "dpot/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#include "dpot/discrete_ot.hpp"
#include "dpot/errors.hpp"

namespace dpot {

void TrainConfig::validate() const {
  try {
    dpot.validate();
  } catch (const InputError& e) {
    throw InputError(std::string("dpot: ") + e.what());
  }
  if (steps < 0) throw InputError("steps: must be >= 0");
  if (steps > 0 && steps < dpot.plan_refresh) throw InputError("steps: must be >= plan_refresh");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InputError("learning_rate: must be positive");
  if (pool_size < static_cast<std::size_t>(dpot.batch_size))
    throw InputError("pool_size: must be >= batch_size");
  if (diagnostic_period < 0 || diagnostic_every() % dpot.plan_refresh != 0)
    throw InputError("diagnostic_period: must be a multiple of plan_refresh");
  if (checkpoint_every < 1) throw InputError("checkpoint_every: must be >= 1");
  if (threads < 1) throw InputError("threads: must be >= 1");
  if (warm_start_steps < 0) throw InputError("warm_start_steps: must be >= 0");
  if (network.d_in < 1 || network.d_out < 1 || network.width < 1 || network.depth < 1)
    throw InputError("network: dimensions must be positive");
}

std::vector<ConditionPool> build_pools(const TrainingProblem& problem, const TrainConfig& cfg, Rng& rng) {
  if (!problem.source || !problem.target) throw InputError("build_pools: source and target samplers required");
  std::vector<ConditionPool> pools(static_cast<std::size_t>(cfg.dpot.n_kappa));
  for (ConditionPool& p : pools)
    if (problem.draw_condition) p.condition = problem.draw_condition(rng);
  for (ConditionPool& p : pools) {
    p.source = problem.source(p.condition, cfg.pool_size, rng);
    p.target = problem.target(p.condition, cfg.pool_size, rng);
    if (problem.truth && cfg.eval_size > 0) p.eval = problem.source(p.condition, cfg.eval_size, rng);
  }
  return pools;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

Matrix random_subset(const Matrix& pool, std::size_t n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pool.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Matrix out(static_cast<Eigen::Index>(n), pool.cols());
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.row(static_cast<Eigen::Index>(i)) = pool.row(idx[i]);
  }
  return out;
}

/// Runs job(k) for k in [0, count) on up to `threads` workers.
template <class Job>
void parallel_for(std::size_t count, int threads, Job job) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) job(k);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < count; k += workers) {
        try {
          job(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void check_pools(const TrainConfig& cfg, std::span<const ConditionPool> pools) {
  if (pools.size() != static_cast<std::size_t>(cfg.dpot.n_kappa))
    throw InputError("train: expected n_kappa = " + std::to_string(cfg.dpot.n_kappa) + " pools, got " +
                     std::to_string(pools.size()));
  for (const ConditionPool& p : pools) {
    const auto cond = static_cast<Eigen::Index>(p.condition.size());
    if (p.source.cols() + cond != cfg.network.d_in || p.target.cols() != cfg.network.d_out)
      throw DimensionError("train: pool dimensions do not match the network");
    if (p.source.rows() < cfg.dpot.batch_size || p.target.rows() < cfg.dpot.batch_size)
      throw InputError("train: pool smaller than the batch size");
    if (!p.source.allFinite() || !p.target.allFinite()) throw InputError("train: non-finite pool entries");
  }
}

ParticleBatch make_batch(Matrix points, const std::vector<double>& condition, SampleSource source) {
  ParticleBatch b;
  b.points = std::move(points);
  b.condition = condition;
  b.source = source;
  return b;
}

Tensor variable_of(Tape& tape, const Vector& params) {
  return tape.variable(Eigen::Map<const Matrix>(params.data(), 1, params.size()));
}

Vector gradient_of(const Tape& tape, const Tensor& p) {
  const Matrix g = tape.grad(p);
  return Eigen::Map<const Vector>(g.data(), g.size());
}

GapReport average(const std::vector<GapReport>& gaps) {
  GapReport m;
  for (const GapReport& g : gaps) {
    m.eps1 += g.eps1;
    m.eps2 += g.eps2;
    m.eps3 += g.eps3;
    m.eps_total += g.eps_total;
    m.w2_reference += g.w2_reference;
    m.w2_mapped_target += g.w2_mapped_target;
    m.w2_mapped_source += g.w2_mapped_source;
    m.transport_root += g.transport_root;
    m.fresh_loss += g.fresh_loss;
  }
  const double s = 1.0 / static_cast<double>(gaps.size());
  for (double* f : {&m.eps1, &m.eps2, &m.eps3, &m.eps_total, &m.w2_reference, &m.w2_mapped_target,
                    &m.w2_mapped_source, &m.transport_root, &m.fresh_loss})
    *f *= s;
  return m;
}

constexpr double kInvariantTolerance = 1e-9;

/// Gap reports with fresh plans for every batch, checking the lower bound
/// and, when the batch carries a plan, that the frozen plan is no better
/// than the fresh one.
GapReport diagnose(const MapNetwork& net, const std::vector<PlannedBatch>& batches, double lambda, int threads,
                   bool check_stale, long step) {
  std::vector<GapReport> gaps(batches.size());
  std::vector<double> frozen(batches.size(), 0.0);
  parallel_for(batches.size(), threads, [&](std::size_t k) {
    const PlannedBatch& b = batches[k];
    const Matrix mapped = net.apply(b.source.points, b.source.condition);
    gaps[k] = gap_decomposition(mapped, b.source.points, b.target.points, lambda);
    if (check_stale) {
      const Matrix matched = permute_rows(b.target.points, b.plan.assignment);
      const double n = static_cast<double>(mapped.rows());
      const double tc = 0.5 * (mapped - b.source.points).squaredNorm() / n;
      frozen[k] = lambda * std::sqrt(tc) + std::sqrt(0.5 * (mapped - matched).squaredNorm() / n);
    }
  });
  for (std::size_t k = 0; k < gaps.size(); ++k) {
    const GapReport& g = gaps[k];
    const double worst = std::min({g.eps1, g.eps2, g.eps3, g.eps_total});
    if (worst < -kInvariantTolerance)
      throw InvariantError("lower bound violated at step " + std::to_string(step) + " (condition " +
                           std::to_string(k) + ", eps " + std::to_string(worst) + ")");
    if (check_stale && frozen[k] < g.fresh_loss - kInvariantTolerance)
      throw InvariantError("frozen plan beat the fresh exact plan at step " + std::to_string(step));
  }
  return average(gaps);
}

std::optional<double> pooled_error(const MapNetwork& net, const ExactMap& truth,
                                   std::span<const ConditionPool> pools) {
  if (!truth) return std::nullopt;
  double num = 0.0, den = 0.0;
  for (const ConditionPool& p : pools) {
    if (p.eval.rows() == 0) continue;
    const Matrix ref = truth(p.eval, p.condition);
    num += (net.apply(p.eval, p.condition) - ref).squaredNorm();
    den += ref.squaredNorm();
  }
  if (den == 0.0) return std::nullopt;
  return std::sqrt(num / den);
}

std::vector<PlannedBatch> draw_batches(const MapNetwork& net, std::span<const ConditionPool> pools,
                                       const TrainConfig& cfg, Rng& rng, bool from_source = false) {
  std::vector<PlannedBatch> batches(pools.size());
  const auto n = static_cast<std::size_t>(cfg.dpot.batch_size);
  for (std::size_t k = 0; k < pools.size(); ++k) {
    batches[k].source = make_batch(random_subset(pools[k].source, n, rng), pools[k].condition, SampleSource::mu);
    batches[k].target = make_batch(random_subset(pools[k].target, n, rng), pools[k].condition, SampleSource::nu);
  }
  parallel_for(batches.size(), cfg.threads, [&](std::size_t k) {
    PlannedBatch& b = batches[k];
    const Matrix from = from_source ? b.source.points : net.apply(b.source.points, b.source.condition);
    b.plan = solve_exact(cost_matrix(from, b.target.points));
  });
  return batches;
}

/// Pulls the network towards the identity with Adam on I(T) = 1/(2N) sum |T(x) - x|^2,
/// with x drawn from the source pools (or the target pools for an inverse map).
void warm_start(MapNetwork& net, std::span<const ConditionPool> pools, const TrainConfig& cfg,
                bool on_target = false) {
  if (cfg.warm_start_steps == 0) return;
  const auto input = [on_target](const ConditionPool& p) -> const Matrix& { return on_target ? p.target : p.source; };
  if (input(pools.front()).cols() != net.spec().d_out)
    throw InputError("warm_start_steps: identity warm start needs equal source and output dimensions");
  Rng rng = make_rng(cfg.seed, on_target ? 5 : 4);
  AdamState adam(net.size(), cfg.learning_rate);
  const auto n = static_cast<std::size_t>(cfg.dpot.batch_size);
  for (long s = 0; s < cfg.warm_start_steps; ++s) {
    Tape tape;
    const Tensor p = variable_of(tape, net.parameters());
    Tensor total;
    for (std::size_t k = 0; k < pools.size(); ++k) {
      const ParticleBatch x = make_batch(random_subset(input(pools[k]), n, rng), pools[k].condition,
                                         on_target ? SampleSource::nu : SampleSource::mu);
      const Tensor term = transport_cost(net, p, x);
      total = k == 0 ? term : add(total, term);
    }
    tape.backward(total);
    const Vector grad = gradient_of(tape, p);
    if (!grad.allFinite()) throw TrainingAbort("non-finite gradient during warm start", s);
    adam_step(adam, net.parameters(), grad);
  }
}

std::string csv_field(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::filesystem::path checkpoint_path(const TrainConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.checkpoint_dir);
  return cfg.checkpoint_dir / name;
}

std::string step_name(const char* prefix, long step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%06ld.ckpt", prefix, step);
  return buf;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::span<const ConditionPool> pools, const ExactMap& truth,
                  const TrainHooks& hooks) {
  cfg.validate();
  check_pools(cfg, pools);
  const auto start = Clock::now();
  Rng init_rng = make_rng(cfg.seed, 0);
  Rng rng = make_rng(cfg.seed, 1);
  TrainResult out{MapNetwork(cfg.network, init_rng), {}, cfg.learning_rate, 0, {}};
  MapNetwork& net = out.net;
  if (cfg.steps == 0) return out;
  warm_start(net, pools, cfg);

  AdamState adam(net.size(), cfg.learning_rate);
  const ParameterLocator locate = [&net](std::size_t i) { return net.locate(i); };
  const long refresh = cfg.dpot.plan_refresh;
  const long diag_every = cfg.diagnostic_every();
  const long checkpoint_every = diag_every * cfg.checkpoint_every;

  struct Snapshot {
    long step;
    Vector params;
    AdamState adam;
  } snap{0, net.parameters(), adam};

  std::vector<PlannedBatch> batches;
  long step = 0;
  while (step < cfg.steps) {
    MetricsRow row;
    row.step = step;
    if (step % refresh == 0) {
      if (step > 0 && step % checkpoint_every == 0 && snap.step != step) {
        snap = {step, net.parameters(), adam};
        if (!cfg.checkpoint_dir.empty()) {
          out.checkpoints.push_back(checkpoint_path(cfg, step_name("step_", step)));
          save_checkpoint(out.checkpoints.back(), net);
        }
      }
      const bool diagnostic = step % diag_every == 0;
      const bool have_old = !batches.empty();
      if (diagnostic && have_old) row.gap = diagnose(net, batches, cfg.dpot.lambda, cfg.threads, true, step);
      batches = draw_batches(net, pools, cfg, rng, cfg.first_plan_from_source && step == 0);
      if (diagnostic && !have_old) row.gap = diagnose(net, batches, cfg.dpot.lambda, cfg.threads, false, step);
      if (diagnostic) row.rel_l2 = pooled_error(net, truth, pools);
    }

    Tape tape;
    const Tensor p = variable_of(tape, net.parameters());
    const Tensor loss = conditional_dpot_loss(net, p, batches, cfg.dpot);
    row.loss = loss.item();
    tape.backward(loss);
    Vector grad = gradient_of(tape, p);
    if (hooks.on_gradient) hooks.on_gradient(step, grad);

    if (!std::isfinite(row.loss) || !grad.allFinite()) {
      if (out.recoveries > 0) {
        if (!cfg.checkpoint_dir.empty()) {
          MapNetwork good = net;
          good.parameters() = snap.params;
          out.checkpoints.push_back(checkpoint_path(cfg, "last_good.ckpt"));
          save_checkpoint(out.checkpoints.back(), good);
        }
        throw TrainingAbort("non-finite loss or gradient at step " + std::to_string(step) +
                                " after learning-rate recovery",
                            step);
      }
      ++out.recoveries;
      net.parameters() = snap.params;
      adam = snap.adam;
      adam.lr = 0.5 * cfg.learning_rate;
      out.final_learning_rate = adam.lr;
      std::erase_if(out.metrics, [&](const MetricsRow& r) { return r.step >= snap.step; });
      batches.clear();
      step = snap.step;
      continue;
    }
    adam_step(adam, net.parameters(), grad, locate);
    row.seconds = elapsed(start);
    out.metrics.push_back(std::move(row));
    ++step;
  }

  MetricsRow last;
  last.step = cfg.steps;
  last.gap = diagnose(net, batches, cfg.dpot.lambda, cfg.threads, true, cfg.steps);
  last.loss = last.gap->fresh_loss;
  last.rel_l2 = pooled_error(net, truth, pools);
  last.seconds = elapsed(start);
  out.metrics.push_back(std::move(last));
  if (!cfg.checkpoint_dir.empty()) {
    out.checkpoints.push_back(checkpoint_path(cfg, "final.ckpt"));
    save_checkpoint(out.checkpoints.back(), net);
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const TrainingProblem& problem, const TrainHooks& hooks) {
  cfg.validate();
  Rng data_rng = make_rng(cfg.seed, 3);
  const std::vector<ConditionPool> pools = build_pools(problem, cfg, data_rng);
  return train(cfg, pools, problem.truth, hooks);
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows) {
  os << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) {
    os << r.step << ',' << csv_field(r.loss) << ',';
    if (r.gap)
      os << csv_field(r.gap->eps1) << ',' << csv_field(r.gap->eps2) << ',' << csv_field(r.gap->eps3) << ','
         << csv_field(r.gap->eps_total);
    else
      os << ",,,";
    os << ',' << (r.rel_l2 ? csv_field(*r.rel_l2) : std::string()) << ',' << csv_field(r.seconds) << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  write_metrics_csv(os, rows);
  if (!os) throw IoError("write failed: " + path.string());
}

double relative_l2_error(const Matrix& predicted, const Matrix& reference) {
  if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols())
    throw DimensionError("relative_l2_error: shapes differ");
  const double den = reference.squaredNorm();
  if (!(den > 0.0)) throw DomainError("relative_l2_error: reference map has zero norm");
  return std::sqrt((predicted - reference).squaredNorm() / den);
}

double relative_l2_error(const MapNetwork& net, const ExactMap& truth, const Matrix& x,
                         std::span<const double> condition) {
  return relative_l2_error(net.apply(x, condition), truth(x, condition));
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InputError("spearman: need two equal-length series (n >= 2)");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const auto n = static_cast<Eigen::Index>(a.size());
  const Eigen::Map<const Vector> x(ra.data(), n), y(rb.data(), n);
  const Vector dx = x.array() - x.mean(), dy = y.array() - y.mean();
  const double den = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  if (!(den > 0.0)) throw DomainError("spearman: a series is constant");
  return dx.dot(dy) / den;
}

void write_cycle_csv(std::ostream& os, std::span<const CycleRow> rows) {
  os << kCycleHeader << '\n';
  for (const CycleRow& r : rows)
    os << r.step << ',' << csv_field(r.loss_forward) << ',' << csv_field(r.loss_inverse) << ','
       << csv_field(r.residual_forward) << ',' << csv_field(r.residual_inverse) << ',' << csv_field(r.seconds)
       << '\n';
}

namespace {

struct CyclePlans {
  std::vector<ParticleBatch> x, y;
  std::vector<TransportPlan> forward, inverse;
};

CyclePlans draw_cycle_batches(const MapNetwork& fwd, const MapNetwork& inv, std::span<const ConditionPool> pools,
                              const TrainConfig& cfg, Rng& rng) {
  CyclePlans c;
  const auto n = static_cast<std::size_t>(cfg.dpot.batch_size);
  for (const ConditionPool& p : pools) {
    c.x.push_back(make_batch(random_subset(p.source, n, rng), p.condition, SampleSource::mu));
    c.y.push_back(make_batch(random_subset(p.target, n, rng), p.condition, SampleSource::nu));
  }
  c.forward.resize(pools.size());
  c.inverse.resize(pools.size());
  parallel_for(2 * pools.size(), cfg.threads, [&](std::size_t job) {
    const std::size_t k = job / 2;
    if (job % 2 == 0)
      c.forward[k] = solve_exact(cost_matrix(fwd.apply(c.x[k].points, c.x[k].condition), c.y[k].points));
    else
      c.inverse[k] = solve_exact(cost_matrix(inv.apply(c.y[k].points, c.y[k].condition), c.x[k].points));
  });
  return c;
}

struct DirectionStep {
  double loss = 0.0;
  double residual = 0.0;
  Vector grad;
};

/// Mean cycle objective over conditions for map_a, map_b held constant.
DirectionStep direction(const MapNetwork& map_a, const MapNetwork& map_b, const std::vector<ParticleBatch>& x,
                        const std::vector<ParticleBatch>& y, const std::vector<TransportPlan>& plans, double lambda) {
  Tape tape;
  const Tensor pa = variable_of(tape, map_a.parameters());
  const Tensor pb = map_b.parameter_tensor();
  Tensor total;
  double residual = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    CycleTerm term = cycle_term(map_a, pa, map_b, pb, x[k], y[k], plans[k], lambda);
    total = k == 0 ? term.total : add(total, term.total);
    residual += term.residual;
  }
  const double scale = 1.0 / static_cast<double>(x.size());
  total = affine(total, scale, 0.0);
  DirectionStep out;
  out.loss = total.item();
  out.residual = residual * scale;
  tape.backward(total);
  out.grad = gradient_of(tape, pa);
  return out;
}

}  // namespace

InverseResult train_inverse(const TrainConfig& cfg, std::span<const ConditionPool> pools, const TrainHooks& hooks) {
  cfg.validate();
  check_pools(cfg, pools);
  NetworkSpec inv_spec = cfg.network;
  const auto cond = static_cast<int>(pools.front().condition.size());
  inv_spec.d_in = cfg.network.d_out + cond;
  inv_spec.d_out = cfg.network.d_in - cond;
  const auto start = Clock::now();
  Rng fwd_rng = make_rng(cfg.seed, 0), inv_rng = make_rng(cfg.seed, 2);
  Rng rng = make_rng(cfg.seed, 1);
  InverseResult out{MapNetwork(cfg.network, fwd_rng), MapNetwork(inv_spec, inv_rng), {}};
  if (cfg.steps == 0) return out;
  warm_start(out.forward, pools, cfg);
  warm_start(out.inverse, pools, cfg, true);

  AdamState adam_fwd(out.forward.size(), cfg.learning_rate), adam_inv(out.inverse.size(), cfg.learning_rate);
  const long refresh = cfg.dpot.plan_refresh;
  const long checkpoint_every = cfg.diagnostic_every() * cfg.checkpoint_every;
  struct Snapshot {
    long step;
    Vector fwd, inv;
    AdamState adam_fwd, adam_inv;
  } snap{0, out.forward.parameters(), out.inverse.parameters(), adam_fwd, adam_inv};
  bool recovered = false;

  CyclePlans batches;
  long step = 0;
  while (step < cfg.steps) {
    if (step % refresh == 0) {
      if (step > 0 && step % checkpoint_every == 0 && snap.step != step)
        snap = {step, out.forward.parameters(), out.inverse.parameters(), adam_fwd, adam_inv};
      batches = draw_cycle_batches(out.forward, out.inverse, pools, cfg, rng);
    }
    CycleRow row;
    row.step = step;
    DirectionStep f = direction(out.forward, out.inverse, batches.x, batches.y, batches.forward, cfg.dpot.lambda);
    if (hooks.on_gradient) hooks.on_gradient(step, f.grad);
    bool finite = std::isfinite(f.loss) && f.grad.allFinite();
    DirectionStep b;
    if (finite) {
      adam_step(adam_fwd, out.forward.parameters(), f.grad);
      b = direction(out.inverse, out.forward, batches.y, batches.x, batches.inverse, cfg.dpot.lambda);
      if (hooks.on_gradient) hooks.on_gradient(step, b.grad);
      finite = std::isfinite(b.loss) && b.grad.allFinite();
    }
    if (!finite) {
      if (recovered)
        throw TrainingAbort("non-finite cycle loss or gradient at step " + std::to_string(step) +
                                " after learning-rate recovery",
                            step);
      recovered = true;
      out.forward.parameters() = snap.fwd;
      out.inverse.parameters() = snap.inv;
      adam_fwd = snap.adam_fwd;
      adam_inv = snap.adam_inv;
      adam_fwd.lr = adam_inv.lr = 0.5 * cfg.learning_rate;
      std::erase_if(out.metrics, [&](const CycleRow& r) { return r.step >= snap.step; });
      step = snap.step;
      batches = {};
      continue;
    }
    adam_step(adam_inv, out.inverse.parameters(), b.grad);
    row.loss_forward = f.loss;
    row.loss_inverse = b.loss;
    row.residual_forward = f.residual;
    row.residual_inverse = b.residual;
    row.seconds = elapsed(start);
    out.metrics.push_back(row);
    ++step;
  }

  CycleRow last;
  last.step = cfg.steps;
  const DirectionStep f = direction(out.forward, out.inverse, batches.x, batches.y, batches.forward, cfg.dpot.lambda);
  const DirectionStep b = direction(out.inverse, out.forward, batches.y, batches.x, batches.inverse, cfg.dpot.lambda);
  last.loss_forward = f.loss;
  last.loss_inverse = b.loss;
  last.residual_forward = f.residual;
  last.residual_inverse = b.residual;
  last.seconds = elapsed(start);
  out.metrics.push_back(last);
  return out;
}

}  // namespace dpot
