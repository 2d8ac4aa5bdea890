#pragma once

// The training loop: collect with the planner across parallel environments,
// optionally refit the dynamics model, update the discriminator and the
// value function, then decay the planner temperature.

#include <chrono>
#include <filesystem>
#include <memory>

#include <json.hpp>

#include "mpail/csv.hpp"
#include "mpail/envs.hpp"
#include "mpail/learners.hpp"
#include "mpail/models.hpp"
#include "mpail/mppi.hpp"
#include "mpail/policy.hpp"

namespace mpail {

struct TrainConfig {
  DiscriminatorConfig disc;
  ValueConfig value;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double initial_temperature = 1.0;
  double temperature_decay = 0.01;
  double min_temperature = 1e-5;
  int value_updates_per_iteration = 3;  // value:disc ratio numerator
  int disc_updates_per_iteration = 1;   // value:disc ratio denominator
  int iterations = 300;
  int parallel_envs = 64;
  std::uint64_t seed = 1;
  int checkpoint_every = 10;
  bool float_rollouts = true;
  double sigma_floor = 1e-3;
  // learned dynamics only
  int dyn_epochs = 5;
  int dyn_batch_size = 256;
  std::size_t buffer_capacity = 20000;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    auto pos = [&](double x, const char* name) {
      if (!(x > 0.0)) v.push_back(std::string(name) + " must be > 0");
    };
    pos(disc.adam.lr, "disc.lr");
    pos(value.adam.lr, "value.lr");
    pos(value.clip, "value.clip");
    pos(value.max_grad_norm, "value.max_grad_norm");
    pos(initial_temperature, "train.initial_temperature");
    pos(min_temperature, "train.min_temperature");
    if (disc.l2 < 0.0) v.push_back("disc.l2 must be >= 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) v.push_back("train.gamma must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) v.push_back("train.gae_lambda must be in [0, 1]");
    if (!(temperature_decay >= 0.0 && temperature_decay < 1.0)) v.push_back("train.temperature_decay must be in [0, 1)");
    if (initial_temperature < min_temperature) v.push_back("train.initial_temperature must be >= min_temperature");
    if (disc.epochs < 1 || disc.mini_batches < 1) v.push_back("disc.epochs and disc.mini_batches must be >= 1");
    if (value.epochs < 1 || value.mini_batches < 1) v.push_back("value.epochs and value.mini_batches must be >= 1");
    if (disc_updates_per_iteration < 1) v.push_back("train.disc_updates must be >= 1");
    if (value_updates_per_iteration < disc_updates_per_iteration)
      v.push_back("train.value_updates / train.disc_updates ratio must be >= 1");
    if (iterations < 0) v.push_back("train.iterations must be >= 0");
    if (parallel_envs < 1) v.push_back("train.parallel_envs must be >= 1");
    if (checkpoint_every < 1) v.push_back("train.checkpoint_every must be >= 1");
    if (sigma_floor < 0.0) v.push_back("train.sigma_floor must be >= 0");
    if (dyn_epochs < 1) v.push_back("dynamics.epochs must be >= 1");
    if (dyn_batch_size < 1) v.push_back("dynamics.batch_size must be >= 1");
    if (buffer_capacity < 1) v.push_back("dynamics.buffer_capacity must be >= 1");
    for (int h : disc.hidden)
      if (h < 1) v.push_back("disc.hidden widths must be >= 1");
    for (int h : value.hidden)
      if (h < 1) v.push_back("value.hidden widths must be >= 1");
    return v;
  }
};

/// lambda' = max(lambda_min, lambda * (1 - rate)).
inline double temperature_decay(double temperature, double rate, double min_temperature) {
  return std::max(min_temperature, temperature * (1.0 - rate));
}

inline double temperature_decay(double temperature, const TrainConfig& cfg) {
  return temperature_decay(temperature, cfg.temperature_decay, cfg.min_temperature);
}

struct TrainRecord {
  int iter = 0;
  double disc_loss = 0.0;
  double value_loss = 0.0;
  double mean_task_reward = 0.0;
  double mean_airl_reward = 0.0;
  double temperature = 0.0;
  double wall_ms = 0.0;

  static std::vector<std::string> header() {
    return {"iter", "disc_loss", "value_loss", "mean_task_reward", "mean_airl_reward", "temperature", "wall_ms"};
  }
  std::vector<double> row() const {
    return {double(iter), disc_loss, value_loss, mean_task_reward, mean_airl_reward, temperature, wall_ms};
  }
};

template <class S>
PlannerFunctions<S> make_planner_functions(const Discriminator& d, const ValueFunction& v, const DynamicsModel& m) {
  PlannerFunctions<S> f;
  auto dyn = m.freeze<S>();
  auto disc = d.freeze<S>();
  auto val = v.freeze<S>();
  f.dynamics = [dyn](const MatX<S>& s, const MatX<S>& a) { return dyn(s, a); };
  f.step_cost = [disc](const MatX<S>& s, const MatX<S>& sn) { return disc(s, sn); };
  f.terminal_value = [val](const MatX<S>& s) { return val(s); };
  return f;
}

/// Networks and planner temperature saved as run/{iter}/.
struct Checkpoint {
  Discriminator disc;
  ValueFunction value;
  DynamicsModel dynamics;
  double temperature = 1.0;
  int iteration = 0;

  void save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    disc.save(dir + "/disc.ckpt");
    value.save(dir + "/value.ckpt");
    dynamics.save(dir + "/dyn.ckpt");
    detail::write_json({{"format", "mpail.meta"}, {"version", 1}, {"iteration", iteration}, {"temperature", temperature}},
                       dir + "/meta.json");
  }

  static Checkpoint load(const std::string& dir, const TrainConfig& cfg = {}) {
    if (!std::filesystem::is_directory(dir)) throw Error("checkpoint directory not found: " + dir);
    Checkpoint c;
    c.disc = Discriminator::load(dir + "/disc.ckpt", cfg.disc);
    c.value = ValueFunction::load(dir + "/value.ckpt", cfg.value);
    c.dynamics = DynamicsModel::load(dir + "/dyn.ckpt");
    auto meta = detail::read_json(dir + "/meta.json");
    c.temperature = meta.at("temperature");
    c.iteration = meta.at("iteration");
    return c;
  }
};

/// Checkpoint iterations present under a run directory, ascending.
inline std::vector<int> list_checkpoints(const std::string& run_dir) {
  std::vector<int> out;
  if (!std::filesystem::is_directory(run_dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
    if (!e.is_directory()) continue;
    const auto name = e.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    if (std::filesystem::exists(e.path() / "meta.json")) out.push_back(std::stoi(name));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Freshly initialised networks for `env`, as a trainer seeded with
/// cfg.seed starts from.
inline Checkpoint initial_checkpoint(const Environment& env, DynamicsModel model, const TrainConfig& cfg) {
  Rng init = derive_rng(cfg.seed, 0x1000);
  Checkpoint c;
  c.disc = Discriminator(env.features(), cfg.disc, init);
  c.value = ValueFunction(env.features(), cfg.value, init);
  c.dynamics = std::move(model);
  c.temperature = cfg.initial_temperature;
  c.iteration = 0;
  return c;
}

/// Update bookkeeping used to verify the value:disc ratio.
struct UpdateCounters {
  long disc_updates = 0;
  long value_updates = 0;
  long dynamics_updates = 0;
};

class Trainer {
 public:
  Trainer(const Environment& env, DemoSet demos, DynamicsModel model, MppiConfig mppi, TrainConfig cfg)
      : env_(env.clone()), demos_(std::move(demos)), cfg_(std::move(cfg)), mppi_(std::move(mppi)) {
    auto v = cfg_.violations();
    for (auto& s : mppi_.violations()) v.push_back(s);
    if (!v.empty()) {
      std::string msg = "invalid training config:";
      for (const auto& s : v) msg += "\n  " + s;
      throw ConfigError(msg);
    }
    if (demos_.episodes.empty() || demos_.transition_count() == 0) throw UsageError("training requires demonstrations");
    if (demos_.state_dim != env_->state_dim()) throw ShapeError("demo state dimension does not match environment");
    if (mppi_.sampling_variance.size() != env_->action_dim())
      throw ConfigError("mppi.sampling_variance must have one entry per action dimension");
    ckpt_ = initial_checkpoint(*env_, std::move(model), cfg_);
    buffer_ = ReplayBuffer(cfg_.buffer_capacity, cfg_.seed ^ 0x5eedULL);
    update_rng_ = derive_rng(cfg_.seed, kUpdateStream);
    auto tr = demos_.transitions();
    expert_s_ = tr.first;
    expert_sn_ = tr.second;
  }

  const Environment& env() const { return *env_; }
  const TrainConfig& config() const { return cfg_; }
  const MppiConfig& mppi_config() const { return mppi_; }
  const Checkpoint& state() const { return ckpt_; }
  Checkpoint& state() { return ckpt_; }
  int iteration() const { return ckpt_.iteration; }
  double temperature() const { return ckpt_.temperature; }
  const UpdateCounters& update_counters() const { return updates_; }
  const PlannerCounters& planner_counters() const { return planner_; }
  const std::vector<Episode>& last_episodes() const { return episodes_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  /// One pass of collect -> (dynamics) -> discriminator -> value -> decay.
  TrainRecord iterate() {
    const auto t0 = std::chrono::steady_clock::now();
    TrainRecord rec;
    rec.iter = ckpt_.iteration;
    rec.temperature = ckpt_.temperature;

    if (cfg_.float_rollouts)
      collect<float>();
    else
      collect<double>();

    std::size_t n = 0;
    for (const auto& e : episodes_) n += e.records.size();
    if (n == 0) throw PlannerError("no transitions collected");
    const int D = env_->state_dim();
    Eigen::MatrixXd S(D, static_cast<Eigen::Index>(n)), SN(D, static_cast<Eigen::Index>(n));
    double task = 0.0, airl = 0.0;
    {
      Eigen::Index k = 0;
      for (const auto& e : episodes_)
        for (const auto& r : e.records) {
          S.col(k) = r.s;
          SN.col(k) = r.s_next;
          task += r.task_reward;
          airl += r.r;
          ++k;
        }
    }
    rec.mean_task_reward = task / static_cast<double>(n);
    rec.mean_airl_reward = airl / static_cast<double>(n);

    if (ckpt_.dynamics.kind() == DynamicsKind::Learned) {
      for (const auto& e : episodes_)
        for (const auto& r : e.records) buffer_.insert({r.s, r.a, r.s_next});
      ckpt_.dynamics.update(buffer_, cfg_.dyn_epochs, cfg_.dyn_batch_size, ckpt_.iteration, update_rng_);
      ++updates_.dynamics_updates;
    }

    // Value targets use the rewards logged at collection time and the
    // value predictions before any update in this iteration.
    const Eigen::RowVectorXd v_old_all = ckpt_.value.values(S);
    Eigen::VectorXd returns(static_cast<Eigen::Index>(n));
    {
      Eigen::Index k = 0;
      for (const auto& e : episodes_) {
        const auto T = static_cast<Eigen::Index>(e.records.size());
        if (T == 0) continue;
        Eigen::VectorXd r(T);
        for (Eigen::Index t = 0; t < T; ++t) r[t] = e.records[static_cast<std::size_t>(t)].r;
        const double boot = ckpt_.value.value(e.records.back().s_next);
        auto est = compute_returns(r, v_old_all.segment(k, T).transpose(), boot, cfg_.gamma, cfg_.gae_lambda);
        returns.segment(k, T) = est.returns;
        k += T;
      }
    }

    double dl = 0.0;
    for (int i = 0; i < cfg_.disc_updates_per_iteration; ++i) {
      dl += discriminator_update(ckpt_.disc, S, SN, expert_s_, expert_sn_, update_rng_).loss;
      ++updates_.disc_updates;
    }
    rec.disc_loss = dl / cfg_.disc_updates_per_iteration;

    double vl = 0.0;
    const Eigen::VectorXd v_old = v_old_all.transpose();
    for (int i = 0; i < cfg_.value_updates_per_iteration; ++i) {
      vl += value_update(ckpt_.value, S, returns, v_old, update_rng_);
      ++updates_.value_updates;
    }
    rec.value_loss = vl / cfg_.value_updates_per_iteration;

    ckpt_.temperature = temperature_decay(ckpt_.temperature, cfg_);
    ++ckpt_.iteration;
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return rec;
  }

  /// Runs `iterations` iterations. With a run directory, writes
  /// train_log.csv and checkpoints at every multiple of checkpoint_every
  /// plus the final state. A failing iteration still leaves a checkpoint of
  /// the last consistent state before the error propagates.
  std::vector<TrainRecord> run(int iterations, const std::string& run_dir = "",
                               const std::function<void(const TrainRecord&)>& on_record = {}) {
    std::vector<TrainRecord> out;
    std::unique_ptr<csv::Writer> log;
    if (!run_dir.empty()) {
      std::filesystem::create_directories(run_dir);
      log = std::make_unique<csv::Writer>(run_dir + "/train_log.csv", TrainRecord::header());
    }
    auto checkpoint = [&] {
      if (!run_dir.empty()) ckpt_.save(run_dir + "/" + std::to_string(ckpt_.iteration));
    };
    for (int i = 0; i < iterations; ++i) {
      if (ckpt_.iteration % cfg_.checkpoint_every == 0) checkpoint();
      const Checkpoint before = ckpt_;
      TrainRecord rec;
      try {
        rec = iterate();
      } catch (...) {
        ckpt_ = before;
        checkpoint();
        throw;
      }
      out.push_back(rec);
      if (log) log->row(rec.row());
      if (on_record) on_record(rec);
    }
    checkpoint();
    return out;
  }

 private:
  static constexpr std::uint64_t kUpdateStream = 0x2000;
  static constexpr std::uint64_t kCollectStream = 0x10000;

  template <class S>
  void collect() {
    MppiConfig mc = mppi_;
    mc.temperature = ckpt_.temperature;
    const auto fns = make_planner_functions<S>(ckpt_.disc, ckpt_.value, ckpt_.dynamics);
    const Discriminator& disc = ckpt_.disc;
    RewardFn reward = [&disc](const State& s, const State& sn) { return airl_reward(disc, s, sn); };
    const int E = cfg_.parallel_envs;
    episodes_.assign(static_cast<std::size_t>(E), Episode{});
    std::vector<PlannerCounters> counters(static_cast<std::size_t>(E));
    parallel_for(E, [&](int e) {
      MppiPolicy<S> policy(fns, mc, env_->bounds(), cfg_.sigma_floor);
      Rng rng = derive_rng(cfg_.seed, kCollectStream + static_cast<std::uint64_t>(ckpt_.iteration) * 4096u +
                                          static_cast<std::uint64_t>(e));
      episodes_[static_cast<std::size_t>(e)] =
          collect_episode<S>(*env_, policy, PolicyMode::Train, rng, reward, e);
      counters[static_cast<std::size_t>(e)] = policy.counters();
    });
    for (const auto& c : counters) planner_ += c;
  }

  std::unique_ptr<Environment> env_;
  DemoSet demos_;
  TrainConfig cfg_;
  MppiConfig mppi_;
  Checkpoint ckpt_;
  ReplayBuffer buffer_;
  Rng update_rng_;
  Eigen::MatrixXd expert_s_, expert_sn_;
  UpdateCounters updates_;
  PlannerCounters planner_;
  std::vector<Episode> episodes_;
};

}  // namespace mpail
