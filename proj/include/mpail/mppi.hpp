#pragma once

// Sampling-based MPC with discriminator step costs, a terminal value at the
// horizon and per-step cost markup.

#include <functional>
#include <limits>
#include <sstream>

#include <boost/random/normal_distribution.hpp>

#include "mpail/common.hpp"
#include "mpail/envs.hpp"

namespace mpail {

struct MppiConfig {
  int samples = 512;
  int horizon = 10;
  int iterations = 5;
  Eigen::VectorXd sampling_variance = Eigen::VectorXd::Constant(2, 0.3);  // diagonal of Sigma
  double temperature = 1.0;
  double markup = 1.01;
  bool use_cost = true;
  bool use_value = true;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (samples < 1) v.push_back("mppi.samples must be >= 1");
    if (horizon < 1) v.push_back("mppi.horizon must be >= 1");
    if (iterations < 1) v.push_back("mppi.iterations must be >= 1");
    if (!(temperature > 0.0)) v.push_back("mppi.temperature must be > 0");
    if (!(markup > 0.0)) v.push_back("mppi.markup must be > 0");
    if (sampling_variance.size() == 0 || !(sampling_variance.array() > 0.0).all() || !sampling_variance.allFinite())
      v.push_back("mppi.sampling_variance must be positive");
    return v;
  }

  void validate() const {
    auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid planner config:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ConfigError(msg);
  }

  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (use_cost && markup < 1.0)
      w.push_back("mppi.markup < 1 with step costs enabled; training is unlikely to converge");
    return w;
  }
};

/// H x action_dim action sequence plus the weighted std of its first action.
struct Plan {
  Eigen::MatrixXd actions;
  Eigen::VectorXd sigma;

  static Plan zeros(int horizon, int action_dim) {
    return {Eigen::MatrixXd::Zero(horizon, action_dim), Eigen::VectorXd::Zero(action_dim)};
  }
  int horizon() const { return static_cast<int>(actions.rows()); }
  Action first() const { return actions.row(0).transpose(); }
};

/// Advances the plan one step; the vacated last action becomes zero.
inline Plan shift_plan(const Plan& prev) {
  Plan p = prev;
  const Eigen::Index H = prev.actions.rows();
  if (H == 0) return p;
  if (H > 1) p.actions.topRows(H - 1) = prev.actions.bottomRows(H - 1);
  p.actions.row(H - 1).setZero();
  return p;
}

/// Outputs of the final planner iteration. Element t of `states` holds the
/// state_dim x N predicted states at step t; `step_costs` is N x H.
template <class S>
struct RolloutBatch {
  std::vector<MatX<S>> states;
  std::vector<MatX<S>> actions;
  Eigen::MatrixXd step_costs;
  Eigen::VectorXd terminal_values;
  Eigen::VectorXd traj_costs;
  Eigen::VectorXd weights;
  std::vector<bool> valid;

  int samples() const { return static_cast<int>(traj_costs.size()); }
};

/// N plans around `mean` (H x action_dim), returned per step as
/// action_dim x N matrices. Draw order is (t, k, i) so results depend only
/// on the engine state.
template <class S>
std::vector<MatX<S>> sample_plans(const Eigen::MatrixXd& mean, const Eigen::VectorXd& variance, int n,
                                  const ActionBounds& bounds, Rng& rng) {
  const Eigen::Index H = mean.rows(), A = mean.cols();
  if (variance.size() != A) throw ShapeError("sample_plans: variance width does not match action dim");
  if (!(variance.array() > 0.0).all()) throw UsageError("sample_plans: variance must be positive");
  const Eigen::ArrayXd sd = variance.cwiseSqrt().array();
  boost::random::normal_distribution<double> n01(0.0, 1.0);
  std::vector<MatX<S>> out(static_cast<std::size_t>(H));
  thread_local std::vector<double> z;
  z.resize(static_cast<std::size_t>(H * A * n));
  for (double& x : z) x = n01(rng);
  const Eigen::ArrayXd lo = bounds.lower.array(), hi = bounds.upper.array();
  for (Eigen::Index t = 0; t < H; ++t) {
    Eigen::Map<const Eigen::ArrayXXd> zt(z.data() + t * A * n, A, n);
    MatX<S> a(A, n);
    for (Eigen::Index i = 0; i < A; ++i)
      a.row(i) = (zt.row(i) * sd[i] + mean(t, i)).max(lo[i]).min(hi[i]).matrix().template cast<S>();
    out[static_cast<std::size_t>(t)] = std::move(a);
  }
  return out;
}

/// C = sum_t eta^t c_t - eta^H V(s_H), with either term switchable off.
/// Non-finite results map to +inf.
inline double trajectory_cost(const Eigen::Ref<const Eigen::VectorXd>& step_costs, double terminal_value,
                              double markup, bool use_cost = true, bool use_value = true) {
  const auto H = static_cast<int>(step_costs.size());
  double c = 0.0;
  if (use_cost) {
    double m = 1.0;
    for (int t = 0; t < H; ++t) {
      c += m * step_costs[t];
      m *= markup;
    }
  }
  if (use_value) c -= std::pow(markup, H) * terminal_value;
  return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
}

/// w_k = exp(-(C_k - min C) / lambda) / Z.
inline Eigen::VectorXd softmin_weights(const Eigen::VectorXd& costs, double temperature) {
  if (!(temperature > 0.0)) throw UsageError("softmin: temperature must be positive");
  double lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < costs.size(); ++k)
    if (std::isfinite(costs[k])) lo = std::min(lo, costs[k]);
  if (!std::isfinite(lo)) throw PlannerError("no valid rollouts");
  Eigen::VectorXd w(costs.size());
  for (Eigen::Index k = 0; k < costs.size(); ++k)
    w[k] = std::isfinite(costs[k]) ? std::exp(-(costs[k] - lo) / temperature) : 0.0;
  return w / w.sum();
}

/// Batched callbacks used by the planner. Columns are samples.
template <class S>
struct PlannerFunctions {
  std::function<MatX<S>(const MatX<S>&, const MatX<S>&)> dynamics;      // (states, actions) -> next
  std::function<RowX<S>(const MatX<S>&, const MatX<S>&)> step_cost;     // (s, s') -> c
  std::function<RowX<S>(const MatX<S>&)> terminal_value;                // s_H -> V
  std::string cost_name = "discriminator";
  std::string value_name = "value";
};

/// Network evaluation counts; batch calls and individual samples.
struct PlannerCounters {
  long cost_calls = 0;
  long cost_evals = 0;
  long value_calls = 0;
  long value_evals = 0;
  long model_steps = 0;  // sample transitions

  PlannerCounters& operator+=(const PlannerCounters& o) {
    cost_calls += o.cost_calls;
    cost_evals += o.cost_evals;
    value_calls += o.value_calls;
    value_evals += o.value_evals;
    model_steps += o.model_steps;
    return *this;
  }
};

template <class S>
struct PlanResult {
  Plan plan;
  RolloutBatch<S> batch;
};

namespace detail {

template <class S>
void check_network_output(const RowX<S>& out, const std::vector<bool>& valid, const std::string& name) {
  if (out.size() != static_cast<Eigen::Index>(valid.size()))
    throw ShapeError("network '" + name + "' returned wrong batch width");
  for (Eigen::Index k = 0; k < out.size(); ++k)
    if (valid[static_cast<std::size_t>(k)] && !std::isfinite(static_cast<double>(out[k])))
      throw PlannerError("non-finite output from network '" + name + "'");
}

}  // namespace detail

/// One planning call: shift `prev`, then J rounds of sample / roll out /
/// cost / reweight around the current mean. The returned plan carries the
/// weighted std of the first action from the final round.
template <class S>
PlanResult<S> mppi_plan(const State& state, const Plan& prev, const PlannerFunctions<S>& fn, const MppiConfig& cfg,
                        const ActionBounds& bounds, Rng& rng, PlannerCounters* counters = nullptr) {
  const int N = cfg.samples, H = cfg.horizon;
  const auto A = static_cast<Eigen::Index>(bounds.lower.size());
  if (prev.actions.rows() != H || prev.actions.cols() != A)
    throw ShapeError("mppi_plan: previous plan must be horizon x action_dim");
  if (!state.allFinite()) throw PlannerError("mppi_plan: non-finite state");
  if (cfg.use_cost && !fn.step_cost) throw UsageError("mppi_plan: step cost enabled but not provided");
  if (cfg.use_value && !fn.terminal_value) throw UsageError("mppi_plan: terminal value enabled but not provided");

  PlannerCounters local;
  Eigen::MatrixXd mean = shift_plan(prev).actions;
  PlanResult<S> res;
  RolloutBatch<S>& b = res.batch;

  for (int j = 0; j < cfg.iterations; ++j) {
    b.actions = sample_plans<S>(mean, cfg.sampling_variance, N, bounds, rng);
    b.states.assign(static_cast<std::size_t>(H) + 1, MatX<S>());
    b.states[0] = state.cast<S>().replicate(1, N);
    b.valid.assign(static_cast<std::size_t>(N), true);
    b.step_costs = Eigen::MatrixXd::Zero(N, H);
    b.terminal_values = Eigen::VectorXd::Zero(N);

    for (int t = 0; t < H; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      b.states[ts + 1] = fn.dynamics(b.states[ts], b.actions[ts]);
      local.model_steps += N;
      const MatX<S>& nx = b.states[ts + 1];
      for (int k = 0; k < N; ++k)
        if (b.valid[static_cast<std::size_t>(k)] && !nx.col(k).allFinite()) b.valid[static_cast<std::size_t>(k)] = false;
    }
    if (cfg.use_cost) {
      // All H transitions of all samples in one batch: column t * N + k.
      const auto D = b.states[0].rows();
      thread_local MatX<S> s0, s1;
      s0.resize(D, static_cast<Eigen::Index>(H) * N);
      s1.resize(D, static_cast<Eigen::Index>(H) * N);
      for (int t = 0; t < H; ++t) {
        s0.middleCols(static_cast<Eigen::Index>(t) * N, N) = b.states[static_cast<std::size_t>(t)];
        s1.middleCols(static_cast<Eigen::Index>(t) * N, N) = b.states[static_cast<std::size_t>(t) + 1];
      }
      RowX<S> c = fn.step_cost(s0, s1);
      ++local.cost_calls;
      local.cost_evals += static_cast<long>(H) * N;
      if (c.size() != static_cast<Eigen::Index>(H) * N)
        throw ShapeError("network '" + fn.cost_name + "' returned wrong batch width");
      for (int t = 0; t < H; ++t) {
        RowX<S> ct = c.segment(static_cast<Eigen::Index>(t) * N, N);
        detail::check_network_output<S>(ct, b.valid, fn.cost_name);
        b.step_costs.col(t) = ct.transpose().template cast<double>();
      }
    }
    if (cfg.use_value) {
      RowX<S> v = fn.terminal_value(b.states[static_cast<std::size_t>(H)]);
      ++local.value_calls;
      local.value_evals += N;
      detail::check_network_output<S>(v, b.valid, fn.value_name);
      b.terminal_values = v.transpose().template cast<double>();
    }

    b.traj_costs.resize(N);
    for (int k = 0; k < N; ++k) {
      b.traj_costs[k] = b.valid[static_cast<std::size_t>(k)]
                            ? trajectory_cost(b.step_costs.row(k).transpose(), b.terminal_values[k], cfg.markup,
                                              cfg.use_cost, cfg.use_value)
                            : std::numeric_limits<double>::infinity();
    }
    b.weights = softmin_weights(b.traj_costs, cfg.temperature);
    for (int t = 0; t < H; ++t)
      mean.row(t) = (b.actions[static_cast<std::size_t>(t)].template cast<double>() * b.weights).transpose();
  }

  res.plan.actions = mean;
  const Eigen::MatrixXd a0 = b.actions[0].template cast<double>();
  const Eigen::MatrixXd dev = a0.colwise() - mean.row(0).transpose();
  res.plan.sigma = (dev.array().square().matrix() * b.weights).cwiseSqrt();
  if (counters) *counters += local;
  return res;
}

}  // namespace mpail
