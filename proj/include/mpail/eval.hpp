#pragma once

// Metrics and experiment drivers: OOD energy, cross-track error, rank
// correlation, deterministic deployment, the OOD-recovery experiment, the
// cost/value ablation and the planner throughput benchmark.

#include <chrono>
#include <cmath>
#include <numbers>

#include "mpail/mpail.hpp"

namespace mpail {

// ---------------------------------------------------------------------------
// OOD energy
// ---------------------------------------------------------------------------

class GaussianFit {
 public:
  static constexpr double kDefaultEpsilon = 1e-6;

  /// Fits N(mean, cov + eps I) to the columns of `samples`, with
  /// eps = rel_epsilon * trace(cov) / d.
  static GaussianFit fit(const Eigen::MatrixXd& samples, double rel_epsilon = kDefaultEpsilon) {
    if (samples.rows() < 1 || samples.cols() < 1) throw UsageError("gaussian fit: no samples");
    if (rel_epsilon < 0.0) throw UsageError("gaussian fit: epsilon must be >= 0");
    const auto d = samples.rows();
    GaussianFit g;
    g.mean_ = samples.rowwise().mean();
    const Eigen::MatrixXd c = samples.colwise() - g.mean_;
    g.raw_cov_ = c * c.transpose() / static_cast<double>(samples.cols());
    g.epsilon_ = rel_epsilon * g.raw_cov_.trace() / static_cast<double>(d);
    g.cov_ = g.raw_cov_;
    g.cov_.diagonal().array() += g.epsilon_;
    g.llt_.compute(g.cov_);
    if (g.llt_.info() != Eigen::Success || !(g.llt_.matrixL().toDenseMatrix().diagonal().array() > 0.0).all())
      throw UsageError("gaussian fit: covariance is singular; increase the regularization epsilon (currently " +
                       csv::format_double(rel_epsilon) + " x trace/d)");
    g.log_det_ = 2.0 * g.llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return g;
  }

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  /// Regularized covariance.
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const Eigen::MatrixXd& raw_covariance() const { return raw_cov_; }
  double epsilon() const { return epsilon_; }

  double log_density(const Eigen::VectorXd& s) const {
    if (s.size() != mean_.size()) throw ShapeError("gaussian fit: dimension mismatch");
    const Eigen::VectorXd z = llt_.matrixL().solve(s - mean_);
    return -0.5 * (z.squaredNorm() + log_det_ + static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi));
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd raw_cov_, cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double epsilon_ = 0.0;
  double log_det_ = 0.0;
};

inline double ood_energy(const State& s, const GaussianFit& fit) { return fit.log_density(s); }

// ---------------------------------------------------------------------------
// Cross-track error
// ---------------------------------------------------------------------------

struct CteResult {
  double max = 0.0;
  double mean = 0.0;
};

/// Distance from point p to the polyline through the columns of `ref`.
inline double polyline_distance(const Eigen::Vector2d& p, const Eigen::Matrix2Xd& ref) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i + 1 < ref.cols(); ++i) {
    const Eigen::Vector2d a = ref.col(i), b = ref.col(i + 1);
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (p - (a + t * ab)).norm());
  }
  return best;
}

/// Per-point distance of `path` (2 x T) to the polyline `ref` (2 x M, M >= 2).
inline CteResult cross_track_error(const Eigen::Matrix2Xd& path, const Eigen::Matrix2Xd& ref) {
  if (path.cols() == 0) throw UsageError("cross-track error: empty agent path");
  if (ref.cols() < 2) throw UsageError("cross-track error: reference needs at least 2 points");
  CteResult r;
  double sum = 0.0;
  for (Eigen::Index t = 0; t < path.cols(); ++t) {
    const double d = polyline_distance(path.col(t), ref);
    r.max = std::max(r.max, d);
    sum += d;
  }
  r.mean = sum / static_cast<double>(path.cols());
  return r;
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("correlation needs two equal-length series of size >= 2");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

// ---------------------------------------------------------------------------
// Deployment
// ---------------------------------------------------------------------------

template <class S>
struct Deployment {
  Episode episode;
  std::vector<int> captured_steps;
  std::vector<RolloutBatch<S>> batches;  // planner rollouts at captured steps
  PlannerCounters counters;
};

/// Runs the planner from a checkpoint in deploy mode (a = a*_0) for `steps`
/// steps from s0. Rollout batches are kept every `capture_every` steps
/// (0 keeps none).
template <class S>
Deployment<S> deploy(const Environment& env, const Checkpoint& ck, MppiConfig mc, const State& s0, int steps, Rng& rng,
                     int capture_every = 0) {
  mc.temperature = ck.temperature;
  MppiPolicy<S> policy(make_planner_functions<S>(ck.disc, ck.value, ck.dynamics), mc, env.bounds(), 0.0);
  Deployment<S> out;
  State s = s0;
  Plan plan = policy.initial_plan();
  for (int t = 0; t < steps; ++t) {
    const bool capture = capture_every > 0 && t % capture_every == 0;
    RolloutBatch<S> batch;
    ActResult ar;
    try {
      ar = policy.act(s, plan, PolicyMode::Deploy, rng, capture ? &batch : nullptr);
    } catch (const PlannerError& e) {
      out.episode.aborted = true;
      out.episode.error = e.what();
      break;
    }
    if (capture) {
      out.captured_steps.push_back(t);
      out.batches.push_back(std::move(batch));
    }
    State sn = env.step(s, ar.action, rng);
    StepRecord rec;
    rec.t = t;
    rec.s = s;
    rec.a = ar.action;
    rec.r = airl_reward(ck.disc, s, sn);
    rec.s_next = sn;
    rec.sigma = ar.plan.sigma;
    rec.task_reward = env.task_reward(sn);
    out.episode.records.push_back(std::move(rec));
    plan = std::move(ar.plan);
    s = std::move(sn);
  }
  out.counters = policy.counters();
  return out;
}

/// Path CSV: one row per visited state with the action taken from it and
/// the task reward of that state. The final state carries zero action.
inline void write_path_csv(const std::string& path, const Environment& env, const Episode& ep) {
  const int D = env.state_dim(), A = env.action_dim();
  std::vector<std::string> header{"t"};
  for (int i = 0; i < D; ++i) header.push_back("s" + std::to_string(i));
  for (int i = 0; i < A; ++i) header.push_back("a" + std::to_string(i));
  header.push_back("task_reward");
  csv::Writer w(path, header);
  auto emit = [&](std::size_t t, const State& s, const Action& a) {
    std::vector<double> row{double(t)};
    for (int i = 0; i < D; ++i) row.push_back(s[i]);
    for (int i = 0; i < A; ++i) row.push_back(a[i]);
    row.push_back(env.task_reward(s));
    w.row(row);
  };
  for (std::size_t t = 0; t < ep.records.size(); ++t) emit(t, ep.records[t].s, ep.records[t].a);
  if (!ep.records.empty()) emit(ep.records.size(), ep.records.back().s_next, Action::Zero(A));
}

// ---------------------------------------------------------------------------
// OOD recovery
// ---------------------------------------------------------------------------

struct OodConfig {
  double box = 40.0;
  int agents = 200;
  int steps = 100;
  std::uint64_t seed = 1;
  bool float_rollouts = true;
};

struct OodRow {
  int agent = 0;
  State initial;
  double energy = 0.0;
  double final_reward = 0.0;
  bool aborted = false;
};

/// Initial pose of agent i: depends only on (seed, i, box).
inline State ood_initial_state(const Environment& env, const OodConfig& cfg, int agent) {
  auto e = env.clone();
  auto region = env.init_region();
  for (int i = 0; i < 2; ++i) {
    region.lower[i] = -cfg.box / 2;
    region.upper[i] = cfg.box / 2;
  }
  e->set_init_region(region);
  Rng rng = derive_rng(cfg.seed, 0x0D000000ULL + static_cast<std::uint64_t>(agent));
  return e->initial_state(rng);
}

/// Deploys from `agents` initial poses sampled in a box of side cfg.box
/// around the origin (the first two state dims); records the OOD energy of
/// each initial state and the task reward after cfg.steps steps.
inline std::vector<OodRow> run_ood_eval(const Environment& env, const Checkpoint& ck, const MppiConfig& mc,
                                        const GaussianFit& fit, const OodConfig& cfg) {
  if (cfg.agents < 0 || cfg.steps < 1 || !(cfg.box > 0.0)) throw UsageError("ood eval: invalid configuration");
  std::vector<OodRow> rows(static_cast<std::size_t>(cfg.agents));
  parallel_for(cfg.agents, [&](int i) {
    OodRow r;
    r.agent = i;
    r.initial = ood_initial_state(env, cfg, i);
    r.energy = ood_energy(r.initial, fit);
    Rng rng = derive_rng(cfg.seed, 0x0E000000ULL + static_cast<std::uint64_t>(i));
    Episode ep = cfg.float_rollouts ? deploy<float>(env, ck, mc, r.initial, cfg.steps, rng).episode
                                    : deploy<double>(env, ck, mc, r.initial, cfg.steps, rng).episode;
    r.aborted = ep.aborted;
    r.final_reward = env.task_reward(ep.records.empty() ? r.initial : ep.records.back().s_next);
    rows[static_cast<std::size_t>(i)] = std::move(r);
  });
  return rows;
}

inline std::vector<std::string> ood_header(int state_dim) {
  std::vector<std::string> h{"agent"};
  for (int i = 0; i < state_dim; ++i) h.push_back("init_s" + std::to_string(i));
  h.insert(h.end(), {"energy", "final_reward", "aborted"});
  return h;
}

inline void write_ood_csv(const std::string& path, const std::vector<OodRow>& rows, int state_dim) {
  csv::Writer w(path, ood_header(state_dim));
  for (const auto& r : rows) {
    std::vector<double> row{double(r.agent)};
    for (int i = 0; i < state_dim; ++i) row.push_back(r.initial[i]);
    row.insert(row.end(), {r.energy, r.final_reward, r.aborted ? 1.0 : 0.0});
    w.row(row);
  }
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationCell {
  int horizon = 10;
  bool use_cost = true;
  bool use_value = true;

  std::string mode() const { return use_cost && use_value ? "both" : use_cost ? "cost" : "value"; }
  static AblationCell from_mode(int horizon, const std::string& mode) {
    if (mode == "both") return {horizon, true, true};
    if (mode == "cost") return {horizon, true, false};
    if (mode == "value") return {horizon, false, true};
    throw UsageError("unknown ablation mode '" + mode + "' (expected both, cost or value)");
  }
};

struct ExperimentGrid {
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds;
  int iterations = 100;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (cells.empty()) v.push_back("grid has no cells");
    if (seeds.empty()) v.push_back("grid has no seeds");
    auto s = seeds;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) v.push_back("grid seeds must be distinct");
    for (const auto& c : cells) {
      if (c.horizon < 1) v.push_back("cell horizon must be >= 1");
      if (!c.use_cost && !c.use_value) v.push_back("cell must use the cost, the value or both");
    }
    if (iterations < 1) v.push_back("grid iterations must be >= 1");
    return v;
  }
};

struct AblationRow {
  int cell = 0;
  AblationCell spec;
  std::uint64_t seed = 0;
  int iter = 0;
  double mean_task_reward = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<PlannerCounters> counters;  // per cell, summed over seeds

  /// Mean task reward of a cell over its last `window` iterations and all seeds.
  double final_reward(int cell, int window) const {
    int last = -1;
    for (const auto& r : rows)
      if (r.cell == cell) last = std::max(last, r.iter);
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows)
      if (r.cell == cell && r.iter > last - window) {
        sum += r.mean_task_reward;
        ++n;
      }
    if (n == 0) throw UsageError("ablation: cell has no records");
    return sum / n;
  }
};

inline std::vector<std::string> ablation_header() {
  return {"cell", "horizon", "mode", "seed", "iter", "mean_task_reward"};
}

inline void write_ablation_csv(const std::string& path, const AblationResult& res) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path);
  const auto h = ablation_header();
  for (std::size_t i = 0; i < h.size(); ++i) f << (i ? "," : "") << h[i];
  f << '\n';
  for (const auto& r : res.rows)
    f << r.cell << ',' << r.spec.horizon << ',' << r.spec.mode() << ',' << r.seed << ',' << r.iter << ','
      << csv::format_double(r.mean_task_reward) << '\n';
  if (!f) throw Error("write failed: " + path);
}

/// Trains every (cell, seed) pair from the base configuration with the
/// cell's horizon and flags, seeds shared across cells.
inline AblationResult run_ablation(const ExperimentGrid& grid, const Environment& env, const DemoSet& demos,
                                   const DynamicsModel& model, const MppiConfig& base_mppi,
                                   const TrainConfig& base_train,
                                   const std::function<void(const AblationRow&)>& on_row = {}) {
  auto v = grid.violations();
  if (!v.empty()) {
    std::string msg = "invalid experiment grid:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ConfigError(msg);
  }
  AblationResult res;
  res.counters.resize(grid.cells.size());
  for (std::size_t c = 0; c < grid.cells.size(); ++c) {
    const auto& cell = grid.cells[c];
    for (auto seed : grid.seeds) {
      MppiConfig mc = base_mppi;
      mc.horizon = cell.horizon;
      mc.use_cost = cell.use_cost;
      mc.use_value = cell.use_value;
      TrainConfig tc = base_train;
      tc.seed = seed;
      tc.iterations = grid.iterations;
      Trainer trainer(env, demos, model, mc, tc);
      trainer.run(grid.iterations, "", [&](const TrainRecord& rec) {
        AblationRow row{static_cast<int>(c), cell, seed, rec.iter, rec.mean_task_reward};
        res.rows.push_back(row);
        if (on_row) on_row(row);
      });
      res.counters[c] += trainer.planner_counters();
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Throughput
// ---------------------------------------------------------------------------

struct BenchRow {
  int horizon = 0;
  int iterations = 0;
  int samples = 0;
  int envs = 0;
  int steps = 0;
  double total_ms = 0.0;
  double per_step_ms = 0.0;
  long model_steps = 0;
  double rollout_flops = 0.0;
};

/// Multiply-adds times two over all layers, per evaluated column.
inline double mlp_flops(const nn::Mlp& net) {
  double f = 0.0;
  for (const auto& l : net.layers()) f += 2.0 * l.in() * l.out();
  return f;
}

inline std::vector<std::string> bench_header() {
  return {"H", "J", "N", "envs", "steps", "total_ms", "per_step_ms", "model_steps", "rollout_flops"};
}

/// Times one full episode across `envs` environments in deploy mode for
/// every (H, J) pair, with untrained networks from `seed`.
inline std::vector<BenchRow> throughput_bench(const Environment& env, const DynamicsModel& model,
                                              const std::vector<int>& horizons, const std::vector<int>& iterations,
                                              int samples, int envs, const MppiConfig& base, const TrainConfig& tc) {
  if (samples < 1 || envs < 1) throw UsageError("bench: samples and envs must be >= 1");
  const Checkpoint ck = initial_checkpoint(env, model, tc);
  const int steps = env.episode().horizon_steps;
  std::vector<BenchRow> rows;
  for (int H : horizons)
    for (int J : iterations) {
      MppiConfig mc = base;
      mc.horizon = H;
      mc.iterations = J;
      mc.samples = samples;
      mc.validate();
      std::vector<PlannerCounters> counters(static_cast<std::size_t>(envs));
      const auto t0 = std::chrono::steady_clock::now();
      parallel_for(envs, [&](int e) {
        Rng rng = derive_rng(tc.seed, 0x0F000000ULL + static_cast<std::uint64_t>(e));
        const State s0 = env.initial_state(rng);
        auto d = tc.float_rollouts ? deploy<float>(env, ck, mc, s0, steps, rng).counters
                                   : deploy<double>(env, ck, mc, s0, steps, rng).counters;
        counters[static_cast<std::size_t>(e)] = d;
      });
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      PlannerCounters total;
      for (const auto& c : counters) total += c;
      BenchRow r;
      r.horizon = H;
      r.iterations = J;
      r.samples = samples;
      r.envs = envs;
      r.steps = steps;
      r.total_ms = ms;
      r.per_step_ms = ms / steps;
      r.model_steps = total.model_steps;
      const double dyn = ck.dynamics.kind() == DynamicsKind::Learned ? mlp_flops(ck.dynamics.net()) : 0.0;
      r.rollout_flops = static_cast<double>(total.cost_evals) * mlp_flops(ck.disc.net()) +
                        static_cast<double>(total.value_evals) * mlp_flops(ck.value.net()) +
                        static_cast<double>(total.model_steps) * dyn;
      rows.push_back(r);
    }
  return rows;
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  csv::Writer w(path, bench_header());
  for (const auto& r : rows)
    w.row({double(r.horizon), double(r.iterations), double(r.samples), double(r.envs), double(r.steps), r.total_ms,
           r.per_step_ms, double(r.model_steps), r.rollout_flops});
}

}  // namespace mpail
