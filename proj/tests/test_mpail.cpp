#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "mpail/mpail.hpp"

using namespace mpail;
namespace fs = std::filesystem;

namespace {

// 1-D states with a shared transition kernel s' = s + N(0, 0.1^2).
void gaussian_pairs(double mean, int n, Rng& rng, Eigen::MatrixXd& s, Eigen::MatrixXd& sn) {
  std::normal_distribution<double> n01;
  s.resize(1, n);
  sn.resize(1, n);
  for (int k = 0; k < n; ++k) {
    s(0, k) = mean + n01(rng);
    sn(0, k) = s(0, k) + 0.1 * n01(rng);
  }
}

Discriminator scalar_discriminator(DiscriminatorConfig cfg, std::uint64_t seed) {
  Rng rng(seed);
  return Discriminator(FeatureMap::identity(1), cfg, rng);
}

DiscriminatorConfig single_step_config(double lr) {
  DiscriminatorConfig c;
  c.adam.lr = lr;
  c.epochs = 1;
  c.mini_batches = 1;
  return c;
}

MppiConfig smoke_mppi() {
  MppiConfig m;
  m.samples = 64;
  m.horizon = 5;
  m.iterations = 2;
  return m;
}

TrainConfig smoke_train(int envs = 4) {
  TrainConfig t;
  t.parallel_envs = envs;
  t.seed = 3;
  return t;
}

DemoSet nav_demos(int n = 4) { return generate_demos(NavEnv(), NavExpert(NavExpertMode::Direct), n, 1); }

std::string fresh_dir(const std::string& name) {
  const std::string d = ::testing::TempDir() + "/mpail_" + name;
  fs::remove_all(d);
  return d;
}

int count_lines(const std::string& path) {
  std::ifstream f(path);
  int n = 0;
  for (std::string l; std::getline(f, l);) ++n;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

TEST(DiscriminatorLoss, UniformDiscriminator) {
  Eigen::RowVectorXd zeros = Eigen::RowVectorXd::Zero(16);
  Eigen::RowVectorXd ga, ge;
  const double loss = discriminator_loss(zeros, zeros, &ga, &ge);
  EXPECT_NEAR(loss, 2 * 0.693147, 1e-6);
  EXPECT_NEAR(-loss, 2 * std::log(0.5), 1e-12);
  EXPECT_NEAR(discriminator_loss(zeros, Eigen::RowVectorXd::Constant(1, -1e3)), std::log(2.0), 1e-12);
  for (int k = 0; k < 16; ++k) {
    EXPECT_DOUBLE_EQ(ga[k], -0.5 / 16);
    EXPECT_DOUBLE_EQ(ge[k], 0.5 / 16);
  }
}

TEST(DiscriminatorLoss, GradientMatchesFiniteDifference) {
  Rng rng(1);
  std::normal_distribution<double> n01;
  Eigen::RowVectorXd fa(5), fe(7);
  for (auto& x : fa) x = 3 * n01(rng);
  for (auto& x : fe) x = 3 * n01(rng);
  Eigen::RowVectorXd ga, ge;
  discriminator_loss(fa, fe, &ga, &ge);
  const double h = 1e-6;
  for (int k = 0; k < 5; ++k) {
    Eigen::RowVectorXd p = fa, m = fa;
    p[k] += h;
    m[k] -= h;
    EXPECT_NEAR(ga[k], (discriminator_loss(p, fe) - discriminator_loss(m, fe)) / (2 * h), 1e-8);
  }
  for (int k = 0; k < 7; ++k) {
    Eigen::RowVectorXd p = fe, m = fe;
    p[k] += h;
    m[k] -= h;
    EXPECT_NEAR(ge[k], (discriminator_loss(fa, p) - discriminator_loss(fa, m)) / (2 * h), 1e-8);
  }
  // Stable for extreme logits.
  EXPECT_TRUE(std::isfinite(discriminator_loss(Eigen::RowVectorXd::Constant(1, -800), Eigen::RowVectorXd::Constant(1, 800))));
}

TEST(DiscriminatorUpdate, SeparatesDisjointBatches) {
  Discriminator d = scalar_discriminator(single_step_config(1e-3), 2);
  Eigen::MatrixXd agent = Eigen::MatrixXd::Constant(1, 64, 10.0), expert = Eigen::MatrixXd::Constant(1, 64, -10.0);
  Rng rng(1);
  DiscriminatorStats st;
  for (int i = 0; i < 500; ++i) st = discriminator_update(d, agent, agent, expert, expert, rng);
  EXPECT_GT(st.agent_logit_mean, st.expert_logit_mean);
  EXPECT_GT(st.agent_logit_mean, 0.0);
  EXPECT_LT(st.expert_logit_mean, 0.0);
  EXPECT_LT(st.loss, 0.1);
  EXPECT_LT(airl_reward(d, agent.col(0), agent.col(0)), airl_reward(d, expert.col(0), expert.col(0)));
}

TEST(DiscriminatorUpdate, IdenticalBatchesKeepLossStationary) {
  Discriminator d = scalar_discriminator(single_step_config(1e-4), 3);
  Rng rng(2);
  Eigen::MatrixXd s, sn;
  gaussian_pairs(0.0, 256, rng, s, sn);
  std::vector<double> losses;
  for (int i = 0; i < 100; ++i) losses.push_back(discriminator_update(d, s, sn, s, sn, rng).loss);
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += losses[static_cast<std::size_t>(i)] / 20;
    last += losses[static_cast<std::size_t>(80 + i)] / 20;
  }
  EXPECT_NEAR(first, 2 * std::log(2.0), 0.05);
  EXPECT_NEAR(last, first, 0.02);
}

TEST(DiscriminatorUpdate, SameDistributionLogitsCollapseToZero) {
  DiscriminatorConfig cfg;
  cfg.adam.lr = 1e-3;
  Discriminator d = scalar_discriminator(cfg, 4);
  Rng rng(3);
  Eigen::MatrixXd as, asn, es, esn;
  DiscriminatorStats st;
  for (int r = 0; r < 100; ++r) {
    gaussian_pairs(0.5, 1024, rng, as, asn);
    gaussian_pairs(0.5, 1024, rng, es, esn);
    st = discriminator_update(d, as, asn, es, esn, rng);
  }
  EXPECT_NEAR(st.agent_logit_mean, 0.0, 0.1);
  EXPECT_NEAR(st.expert_logit_mean, 0.0, 0.1);
}

TEST(DiscriminatorUpdate, RecoversGaussianLogRatio) {
  // Expert N(0,1), agent N(1,1): log(p_E / p_agent)(s) = 0.5 - s.
  DiscriminatorConfig cfg;
  cfg.adam.lr = 1e-3;
  Discriminator d = scalar_discriminator(cfg, 1);
  Rng rng(1);
  Eigen::MatrixXd as, asn, es, esn;
  for (int r = 0; r < 300; ++r) {
    gaussian_pairs(1.0, 4096, rng, as, asn);
    gaussian_pairs(0.0, 4096, rng, es, esn);
    discriminator_update(d, as, asn, es, esn, rng);
  }
  double mae = 0;
  int n = 0;
  for (double s = -2; s <= 3 + 1e-9; s += 0.05, ++n) {
    const State x = State::Constant(1, s);
    mae += std::abs(airl_reward(d, x, x) - (0.5 - s));
  }
  EXPECT_LT(mae / n, 0.15);
  // Agent-like states earn less reward than expert-like ones.
  EXPECT_LT(airl_reward(d, State::Constant(1, 1.0), State::Constant(1, 1.0)),
            airl_reward(d, State::Constant(1, 0.0), State::Constant(1, 0.0)));
}

TEST(DiscriminatorUpdate, RejectsEmptyBatches) {
  Discriminator d = scalar_discriminator({}, 1);
  Rng rng(1);
  Eigen::MatrixXd empty(1, 0), one = Eigen::MatrixXd::Zero(1, 1);
  EXPECT_THROW(discriminator_update(d, empty, empty, one, one, rng), UsageError);
  EXPECT_THROW(discriminator_update(d, one, one, empty, empty, rng), UsageError);
}

TEST(DiscriminatorUpdate, L2PenaltyShrinksWeights) {
  auto run = [](double l2) {
    DiscriminatorConfig cfg = single_step_config(1e-2);
    cfg.l2 = l2;
    cfg.spectral_norm = false;
    Discriminator d = scalar_discriminator(cfg, 5);
    Eigen::MatrixXd a = Eigen::MatrixXd::Constant(1, 32, 1.0), e = Eigen::MatrixXd::Constant(1, 32, -1.0);
    Rng rng(1);
    for (int i = 0; i < 200; ++i) discriminator_update(d, a, a, e, e, rng);
    return nn::l2_penalty(d.net(), 1.0);
  };
  EXPECT_LT(run(1e-1), run(0.0));
}

// ---------------------------------------------------------------------------
// Returns and value regression
// ---------------------------------------------------------------------------

TEST(ComputeReturns, GeometricSeriesLimit) {
  const int T = 5000;
  auto r = compute_returns(Eigen::VectorXd::Ones(T), Eigen::VectorXd::Zero(T), 0.0, 0.99, 1.0);
  EXPECT_NEAR(r.returns[0], 100.0, 1e-6);
}

TEST(ComputeReturns, SingleStepDelta) {
  auto r = compute_returns(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), 2.0, 0.99, 0.95);
  EXPECT_NEAR(r.advantages[0], 2.98, 1e-12);
  EXPECT_NEAR(r.returns[0], 2.98, 1e-12);
}

TEST(ComputeReturns, LambdaZeroIsTdError) {
  Eigen::VectorXd rw(4), v(4);
  rw << 1.0, -0.5, 2.0, 0.3;
  v << 0.2, 0.4, -1.0, 0.7;
  const double boot = 1.5, g = 0.9;
  auto r = compute_returns(rw, v, boot, g, 0.0);
  for (int t = 0; t < 4; ++t) {
    const double next = t + 1 < 4 ? v[t + 1] : boot;
    EXPECT_NEAR(r.advantages[t], rw[t] + g * next - v[t], 1e-12);
    EXPECT_NEAR(r.returns[t], r.advantages[t] + v[t], 1e-12);
  }
}

TEST(ComputeReturns, LambdaOneWithoutBootstrapIsDiscountedSum) {
  Rng rng(4);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    const int T = 1 + trial * 5;
    Eigen::VectorXd rw(T), v(T);
    for (int t = 0; t < T; ++t) {
      rw[t] = n01(rng);
      v[t] = n01(rng);
    }
    auto r = compute_returns(rw, v, 0.0, 0.97, 1.0);
    for (int t = 0; t < T; ++t) {
      double G = 0, d = 1;
      for (int k = t; k < T; ++k, d *= 0.97) G += d * rw[k];
      EXPECT_NEAR(r.returns[t], G, 1e-10);
    }
  }
}

TEST(ComputeReturns, LengthMismatch) {
  EXPECT_THROW(compute_returns(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2), 0, 0.99, 0.95), ShapeError);
}

TEST(ValueUpdate, ExactFitHasZeroLossAndLeavesNetUnchanged) {
  Rng rng(1);
  ValueFunction vf(FeatureMap::identity(2), ValueConfig{}, rng);
  for (auto& l : vf.net().layers()) l.weight.setZero();
  for (auto& l : vf.net().layers()) l.bias.setZero();
  vf.net().layers().back().bias[0] = 1.25;
  Eigen::MatrixXd s = Eigen::MatrixXd::Random(2, 30);
  const Eigen::VectorXd G = Eigen::VectorXd::Constant(30, 1.25);
  const nn::Mlp before = vf.net();
  EXPECT_EQ(value_update(vf, s, G, G, rng), 0.0);
  EXPECT_TRUE(vf.net() == before);
}

TEST(ValueUpdate, RegressesToConstantTarget) {
  Rng rng(2);
  ValueFunction vf(FeatureMap::identity(2), ValueConfig{}, rng);
  Eigen::MatrixXd s = Eigen::MatrixXd::Random(2, 300);
  const Eigen::VectorXd G = Eigen::VectorXd::Constant(300, 5.0);
  for (int round = 0; round < 2500; ++round) {
    Eigen::VectorXd old = vf.values(s).transpose();
    value_update(vf, s, G, old, rng);
  }
  EXPECT_LT((vf.values(s).array() - 5.0).abs().maxCoeff(), 1e-2);
}

TEST(ValueUpdate, ClippedBranch) {
  double dv = 0;
  // Unclipped loss dominates: (1 - 0.5)^2 vs (0.2 - 0.5)^2.
  EXPECT_DOUBLE_EQ(clipped_value_loss(1.0, 0.0, 0.5, 0.2, &dv), 0.25);
  EXPECT_DOUBLE_EQ(dv, 1.0);
  // Clipped loss dominates: (0.2 - 2)^2 > (1 - 2)^2 and its gradient is zero.
  EXPECT_NEAR(clipped_value_loss(1.0, 0.0, 2.0, 0.2, &dv), 3.24, 1e-12);
  EXPECT_EQ(dv, 0.0);
  // Inside the clip range both branches coincide.
  EXPECT_DOUBLE_EQ(clipped_value_loss(0.1, 0.0, 2.0, 0.2, &dv), 1.9 * 1.9);
  EXPECT_DOUBLE_EQ(dv, 2 * (0.1 - 2.0));
  // Derivative agrees with finite differences away from kinks.
  for (double v : {-0.7, -0.05, 0.13, 0.75}) {
    const double h = 1e-7;
    clipped_value_loss(v, 0.0, 0.4, 0.2, &dv);
    const double fd = (clipped_value_loss(v + h, 0.0, 0.4, 0.2) - clipped_value_loss(v - h, 0.0, 0.4, 0.2)) / (2 * h);
    EXPECT_NEAR(dv, fd, 1e-6) << v;
  }
}

TEST(ValueUpdate, RejectsBadBatches) {
  Rng rng(1);
  ValueFunction vf(FeatureMap::identity(2), ValueConfig{}, rng);
  EXPECT_THROW(value_update(vf, Eigen::MatrixXd(2, 0), Eigen::VectorXd(0), Eigen::VectorXd(0), rng), UsageError);
  EXPECT_THROW(value_update(vf, Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), rng),
               ShapeError);
}

// ---------------------------------------------------------------------------
// Temperature
// ---------------------------------------------------------------------------

TEST(TemperatureDecay, Examples) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(temperature_decay(1.0, cfg), 0.99);
  EXPECT_EQ(temperature_decay(1e-5, cfg), 1e-5);
  double t = 1.0;
  for (int i = 0; i < 459; ++i) t = temperature_decay(t, cfg);
  EXPECT_NEAR(t, 0.0099, 1e-4);
  EXPECT_NEAR(t, std::exp(459 * std::log(0.99)), 1e-12);
}

TEST(TemperatureDecay, MonotoneAndFloored) {
  TrainConfig cfg;
  cfg.temperature_decay = 0.05;
  cfg.min_temperature = 1e-3;
  double t = 1.0;
  for (int i = 0; i < 1000; ++i) {
    const double n = temperature_decay(t, cfg);
    EXPECT_LE(n, t);
    EXPECT_GE(n, cfg.min_temperature);
    t = n;
  }
  EXPECT_EQ(t, 1e-3);
}

// ---------------------------------------------------------------------------
// Planner weights as distributions
// ---------------------------------------------------------------------------

TEST(PlannerWeights, KlPlusEntropyIsLogN) {
  PlannerFunctions<double> f;
  f.dynamics = [](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) -> Eigen::MatrixXd { return s + a; };
  f.step_cost = [](const Eigen::MatrixXd&, const Eigen::MatrixXd& sn) -> RowX<double> {
    return sn.array().square().colwise().sum().matrix();
  };
  MppiConfig cfg;
  cfg.samples = 300;
  cfg.horizon = 4;
  cfg.use_value = false;
  ActionBounds b{Eigen::Vector2d(-5, -5), Eigen::Vector2d(5, 5)};
  Rng rng(1);
  for (double lambda : {0.01, 0.3, 1.0, 10.0}) {
    cfg.temperature = lambda;
    auto res = mppi_plan<double>(Eigen::Vector2d(1, -2), Plan::zeros(4, 2), f, cfg, b, rng);
    const auto& w = res.batch.weights;
    const double N = static_cast<double>(w.size());
    double kl = 0, h = 0;
    for (double x : w)
      if (x > 0) {
        kl += x * std::log(x * N);
        h -= x * std::log(x);
      }
    EXPECT_NEAR(kl + h, std::log(N), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

TEST(Trainer, ZeroIterationsWritesInitialCheckpointOnly) {
  const std::string dir = fresh_dir("zero");
  NavEnv env;
  Trainer tr(env, nav_demos(), DynamicsModel::analytic_bicycle(env.bicycle()), smoke_mppi(), smoke_train());
  auto recs = tr.run(0, dir);
  EXPECT_TRUE(recs.empty());
  EXPECT_EQ(list_checkpoints(dir), std::vector<int>{0});
  EXPECT_EQ(count_lines(dir + "/train_log.csv"), 1);
  // The saved state is the seeded initialisation.
  Checkpoint c = Checkpoint::load(dir + "/0");
  Checkpoint init = initial_checkpoint(env, DynamicsModel::analytic_bicycle(env.bicycle()), smoke_train());
  EXPECT_TRUE(c.disc.net() == init.disc.net());
  EXPECT_TRUE(c.value.net() == init.value.net());
  EXPECT_EQ(c.temperature, 1.0);
}

TEST(Trainer, SmokeRun) {
  const std::string dir = fresh_dir("smoke");
  NavEnv env;
  TrainConfig cfg = smoke_train();
  cfg.checkpoint_every = 5;
  Trainer tr(env, nav_demos(), DynamicsModel::analytic_bicycle(env.bicycle()), smoke_mppi(), cfg);
  int seen = 0;
  auto recs = tr.run(10, dir, [&](const TrainRecord&) { ++seen; });
  ASSERT_EQ(recs.size(), 10u);
  EXPECT_EQ(seen, 10);
  double prev_t = 2.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    EXPECT_EQ(r.iter, static_cast<int>(i));
    for (double x : r.row()) EXPECT_TRUE(std::isfinite(x));
    EXPECT_LE(r.temperature, prev_t);
    EXPECT_GE(r.temperature, cfg.min_temperature);
    prev_t = r.temperature;
  }
  EXPECT_DOUBLE_EQ(recs[0].temperature, 1.0);
  EXPECT_DOUBLE_EQ(recs[1].temperature, 0.99);
  EXPECT_EQ(list_checkpoints(dir), (std::vector<int>{0, 5, 10}));
  EXPECT_EQ(count_lines(dir + "/train_log.csv"), 11);
  EXPECT_EQ(tr.iteration(), 10);

  const auto& u = tr.update_counters();
  EXPECT_EQ(u.disc_updates, 10);
  EXPECT_EQ(u.value_updates, 3 * u.disc_updates);
  EXPECT_EQ(u.dynamics_updates, 0);

  const auto& p = tr.planner_counters();
  const long plans = 10L * cfg.parallel_envs * 100;
  EXPECT_EQ(p.cost_evals, plans * 2 * 5 * 64);
  EXPECT_EQ(p.value_evals, plans * 2 * 64);

  // Resuming from the final checkpoint reproduces the trainer's networks.
  Checkpoint last = Checkpoint::load(dir + "/10");
  EXPECT_TRUE(last.disc.net() == tr.state().disc.net());
  EXPECT_EQ(last.temperature, tr.temperature());
}

TEST(Trainer, RecordsIndependentOfWorkerCount) {
  NavEnv env;
  auto run = [&](const char* threads) {
    setenv("MPAIL_THREADS", threads, 1);
    Trainer tr(env, nav_demos(), DynamicsModel::analytic_bicycle(env.bicycle()), smoke_mppi(), smoke_train(3));
    auto recs = tr.run(3);
    unsetenv("MPAIL_THREADS");
    for (auto& r : recs) r.wall_ms = 0;
    return std::make_pair(recs, tr.state().disc.net());
  };
  auto a = run("1");
  auto b = run("3");
  ASSERT_EQ(a.first.size(), b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) EXPECT_EQ(a.first[i].row(), b.first[i].row());
  EXPECT_TRUE(a.second == b.second);
}

TEST(Trainer, LearnedDynamicsAreUpdated) {
  CartpoleEnv env;
  DemoSet demos = generate_demos(env, CartpoleExpert(env), 2, 1);
  Rng rng(1);
  LearnedDynamicsConfig lc;
  lc.hidden = {16, 16};
  DynamicsModel model = DynamicsModel::learned(4, 1, env.angle_dims(), lc, rng);
  MppiConfig m = smoke_mppi();
  m.sampling_variance = env.default_sampling_variance();
  TrainConfig cfg = smoke_train(2);
  cfg.dyn_epochs = 2;
  Trainer tr(env, demos, model, m, cfg);
  tr.run(2);
  EXPECT_EQ(tr.update_counters().dynamics_updates, 2);
  EXPECT_EQ(tr.buffer().size(), 2u * 2 * 100);
  EXPECT_EQ(tr.state().dynamics.updates(), 2);
}

TEST(Trainer, FailureLeavesCheckpointOfLastGoodState) {
  const std::string dir = fresh_dir("fail");
  NavEnv env;
  TrainConfig cfg = smoke_train(2);
  cfg.disc.adam.lr = 1e300;  // first update blows the discriminator up
  cfg.disc.spectral_norm = false;
  Trainer tr(env, nav_demos(), DynamicsModel::analytic_bicycle(env.bicycle()), smoke_mppi(), cfg);
  EXPECT_THROW(tr.run(5, dir), DivergenceError);
  // The trainer is rolled back and the rolled-back state is on disk.
  const int k = tr.iteration();
  Checkpoint saved = Checkpoint::load(dir + "/" + std::to_string(k));
  EXPECT_EQ(saved.iteration, k);
  EXPECT_TRUE(saved.disc.net() == tr.state().disc.net());
  for (const auto& l : saved.disc.net().layers()) EXPECT_TRUE(l.weight.allFinite());
}

TEST(Trainer, RejectsInvalidSetup) {
  NavEnv env;
  auto model = DynamicsModel::analytic_bicycle(env.bicycle());
  EXPECT_THROW(Trainer(env, DemoSet{}, model, smoke_mppi(), smoke_train()), UsageError);
  DemoSet wrong;
  wrong.state_dim = 3;
  wrong.episodes.push_back(Eigen::MatrixXd::Zero(3, 5));
  EXPECT_THROW(Trainer(env, wrong, model, smoke_mppi(), smoke_train()), ShapeError);
  TrainConfig bad = smoke_train();
  bad.gamma = 1.5;
  bad.value_updates_per_iteration = 0;
  bad.parallel_envs = 0;
  EXPECT_EQ(bad.violations().size(), 3u);
  EXPECT_THROW(Trainer(env, nav_demos(), model, smoke_mppi(), bad), ConfigError);
  MppiConfig m = smoke_mppi();
  m.sampling_variance = Eigen::VectorXd::Constant(3, 0.3);
  EXPECT_THROW(Trainer(env, nav_demos(), model, m, smoke_train()), ConfigError);
}

TEST(Checkpoint, RoundTripPreservesNetworks) {
  const std::string dir = fresh_dir("ckpt");
  NavEnv env;
  Checkpoint c = initial_checkpoint(env, DynamicsModel::analytic_bicycle(env.bicycle()), smoke_train());
  c.temperature = 0.37;
  c.iteration = 12;
  c.save(dir + "/12");
  Checkpoint back = Checkpoint::load(dir + "/12");
  EXPECT_EQ(back.temperature, 0.37);
  EXPECT_EQ(back.iteration, 12);
  Eigen::MatrixXd s = Eigen::MatrixXd::Random(4, 10), sn = Eigen::MatrixXd::Random(4, 10);
  EXPECT_EQ(back.disc.logits(s, sn), c.disc.logits(s, sn));
  EXPECT_EQ(back.value.values(s), c.value.values(s));
  EXPECT_THROW(Checkpoint::load(dir + "/99"), Error);
}
