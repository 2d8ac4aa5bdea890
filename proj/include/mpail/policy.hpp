#pragma once

// The planner as an environment-facing policy, and episode collection.

#include <functional>
#include <optional>

#include <boost/random/normal_distribution.hpp>

#include "mpail/envs.hpp"
#include "mpail/learners.hpp"
#include "mpail/mppi.hpp"

namespace mpail {

enum class PolicyMode { Train, Deploy };

struct StepRecord {
  int episode = 0;
  int t = 0;
  State s;
  Action a;
  double r = 0.0;  // airl reward of (s, s') under the discriminator at collection time
  State s_next;
  Eigen::VectorXd sigma;
  double task_reward = 0.0;  // env metric at s_next
};

struct ActResult {
  Action action;
  Plan plan;
};

/// Planner plus the bits needed to turn its plan into an action.
template <class S>
class MppiPolicy {
 public:
  MppiPolicy(PlannerFunctions<S> fns, MppiConfig cfg, ActionBounds bounds, double sigma_floor = 1e-3)
      : fns_(std::move(fns)), cfg_(std::move(cfg)), bounds_(std::move(bounds)), sigma_floor_(sigma_floor) {
    cfg_.validate();
    if (sigma_floor < 0.0) throw ConfigError("sigma floor must be non-negative");
  }

  const MppiConfig& config() const { return cfg_; }
  MppiConfig& config() { return cfg_; }
  const ActionBounds& bounds() const { return bounds_; }
  double sigma_floor() const { return sigma_floor_; }
  const PlannerCounters& counters() const { return counters_; }
  Plan initial_plan() const { return Plan::zeros(cfg_.horizon, static_cast<int>(bounds_.lower.size())); }

  /// Train: a ~ N(a*_0, diag(max(sigma, floor)^2)), clamped. Deploy: a = a*_0.
  ActResult act(const State& s, const Plan& prev, PolicyMode mode, Rng& rng, RolloutBatch<S>* batch = nullptr) {
    auto res = mppi_plan<S>(s, prev, fns_, cfg_, bounds_, rng, &counters_);
    Action a = res.plan.first();
    if (mode == PolicyMode::Train) {
      boost::random::normal_distribution<double> n01;
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += std::max(res.plan.sigma[i], sigma_floor_) * n01(rng);
      a = bounds_.clamp(a);
    }
    if (batch) *batch = std::move(res.batch);
    return {a, std::move(res.plan)};
  }

 private:
  PlannerFunctions<S> fns_;
  MppiConfig cfg_;
  ActionBounds bounds_;
  double sigma_floor_;
  PlannerCounters counters_;
};

using RewardFn = std::function<double(const State&, const State&)>;

struct Episode {
  std::vector<StepRecord> records;
  bool aborted = false;
  std::string error;

  /// (state_dim x T+1) visited states.
  Eigen::MatrixXd states() const {
    if (records.empty()) return {};
    Eigen::MatrixXd m(records[0].s.size(), static_cast<Eigen::Index>(records.size()) + 1);
    for (std::size_t t = 0; t < records.size(); ++t) m.col(static_cast<Eigen::Index>(t)) = records[t].s;
    m.col(m.cols() - 1) = records.back().s_next;
    return m;
  }
};

/// Runs one episode of horizon_steps, re-planning from the shifted plan
/// every step. A planner failure stops the episode; the records so far are
/// kept and the episode is flagged.
template <class S>
Episode collect_episode(const Environment& env, MppiPolicy<S>& policy, PolicyMode mode, Rng& rng,
                        const RewardFn& reward, int episode_index = 0,
                        std::optional<State> initial = std::nullopt) {
  Episode ep;
  State s = initial ? *initial : env.initial_state(rng);
  Plan plan = policy.initial_plan();
  const int T = env.episode().horizon_steps;
  ep.records.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    ActResult ar;
    try {
      ar = policy.act(s, plan, mode, rng);
    } catch (const PlannerError& e) {
      ep.aborted = true;
      ep.error = e.what();
      break;
    }
    State sn = env.step(s, ar.action, rng);
    StepRecord rec;
    rec.episode = episode_index;
    rec.t = t;
    rec.s = s;
    rec.a = ar.action;
    rec.r = reward ? reward(s, sn) : 0.0;
    rec.s_next = sn;
    rec.sigma = ar.plan.sigma;
    rec.task_reward = env.task_reward(sn);
    ep.records.push_back(std::move(rec));
    plan = std::move(ar.plan);
    s = std::move(sn);
  }
  return ep;
}

}  // namespace mpail
