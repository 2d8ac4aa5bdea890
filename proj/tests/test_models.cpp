#include <set>

#include <gtest/gtest.h>

#include "mpail/models.hpp"

using namespace mpail;

namespace {

DynamicsModel bicycle() { return DynamicsModel::analytic_bicycle({}); }

State nav_state(double x, double y, double yaw, double v) { return Eigen::Vector4d(x, y, yaw, v); }

LearnedDynamicsConfig linear_config(double lr) {
  LearnedDynamicsConfig c;
  c.hidden = {};
  c.activation = nn::Activation::Identity;
  c.adam.lr = lr;
  c.schedule = {lr, 1.0, 1, 0.0};
  return c;
}

struct LinearSystem {
  Eigen::MatrixXd A, B;
  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const { return A * s + B * a; }
};

LinearSystem make_linear() {
  LinearSystem sys;
  sys.A.resize(3, 3);
  sys.A << 0.9, 0.1, 0.0, -0.2, 0.8, 0.1, 0.0, 0.05, 1.0;
  sys.B.resize(3, 2);
  sys.B << 0.1, 0.0, 0.0, 0.2, -0.1, 0.1;
  return sys;
}

ReplayBuffer linear_buffer(const LinearSystem& sys, int n, std::uint64_t seed) {
  ReplayBuffer buf(static_cast<std::size_t>(n), seed);
  Rng rng(seed);
  std::normal_distribution<double> n01;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd s(3), a(2);
    for (auto& x : s) x = n01(rng);
    for (auto& x : a) x = n01(rng);
    buf.insert({s, a, sys.step(s, a)});
  }
  return buf;
}

Transition random_bicycle_transition(const DynamicsModel& truth, Rng& rng) {
  std::uniform_real_distribution<double> pos(-5, 5), yaw(-std::numbers::pi, std::numbers::pi), v(0, 2),
      steer(-0.4, 0.4);
  State s = nav_state(pos(rng), pos(rng), yaw(rng), v(rng));
  Action a = Eigen::Vector2d(v(rng), steer(rng));
  return {s, a, truth.predict(s, a)};
}

}  // namespace

// ---------------------------------------------------------------------------
// predict / rollout
// ---------------------------------------------------------------------------

TEST(Predict, AnalyticStraightLine) {
  State n = bicycle().predict(nav_state(0, 0, 0, 1), Eigen::Vector2d(1, 0));
  EXPECT_NEAR(n[0], 0.1, 1e-15);
  EXPECT_EQ(n[1], 0.0);
  EXPECT_EQ(n[2], 0.0);
  EXPECT_EQ(n[3], 1.0);
}

TEST(Predict, AnalyticMatchesSlipFreeEnv) {
  SlipParams off;
  off.enabled = false;
  NavEnv env({}, off);
  DynamicsModel m = bicycle();
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    Transition t = random_bicycle_transition(m, rng);
    EXPECT_LT((env.step(t.s, t.a, rng) - t.s_next).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Predict, ZeroWeightLearnedModelPredictsBias) {
  Rng rng(1);
  LearnedDynamicsConfig cfg;
  cfg.predict_delta = false;
  DynamicsModel m = DynamicsModel::learned(4, 2, {}, cfg, rng);
  for (auto& l : m.net().layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  Eigen::Vector4d bias(0.5, -1.0, 0.25, 2.0);
  m.net().layers().back().bias = bias;
  for (int i = 0; i < 5; ++i) {
    State s = State::Random(4) * 3;
    EXPECT_EQ(m.predict(s, Eigen::Vector2d(1, -1)), State(bias));
  }
  // Delta mode adds the constant to the current state.
  cfg.predict_delta = true;
  DynamicsModel d = DynamicsModel::learned(4, 2, {}, cfg, rng);
  for (auto& l : d.net().layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  d.net().layers().back().bias = bias;
  State s = nav_state(1, 2, 0.1, 0.3);
  EXPECT_LT((d.predict(s, Eigen::Vector2d(0, 0)) - (s + bias)).norm(), 1e-15);
}

TEST(Predict, DimensionMismatchThrows) {
  DynamicsModel m = bicycle();
  EXPECT_THROW(m.predict(State::Zero(3), Action::Zero(2)), ShapeError);
  EXPECT_THROW(m.predict(State::Zero(4), Action::Zero(1)), ShapeError);
  EXPECT_THROW(m.predict_batch<double>(Eigen::MatrixXd::Zero(4, 3), Eigen::MatrixXd::Zero(2, 2)), ShapeError);
}

TEST(Predict, LearnedInputWidth) {
  Rng rng(2);
  DynamicsModel m = DynamicsModel::learned(4, 2, {2}, {}, rng);
  EXPECT_EQ(m.net().input_dim(), 6);
  EXPECT_EQ(m.net().output_dim(), 4);
}

TEST(Rollout, EmptyPlanReturnsInitialState) {
  State s0 = nav_state(1, 2, 0.3, 0.5);
  Eigen::MatrixXd states = rollout(bicycle(), s0, Eigen::MatrixXd(0, 2));
  ASSERT_EQ(states.cols(), 1);
  EXPECT_EQ(states.col(0), s0);
}

TEST(Rollout, StraightLineAdvancesLinearly) {
  Eigen::MatrixXd plan(10, 2);
  plan.col(0).setConstant(1.0);
  plan.col(1).setZero();
  bool valid = false;
  Eigen::MatrixXd states = rollout(bicycle(), nav_state(0, 0, 0, 1), plan, &valid);
  EXPECT_TRUE(valid);
  ASSERT_EQ(states.cols(), 11);
  EXPECT_NEAR(states(0, 10), 10 * 0.1 * 1.0, 1e-12);
  EXPECT_NEAR(states(1, 10), 0.0, 1e-15);
}

TEST(Rollout, NonFiniteStateMarksInvalid) {
  Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(3, 2);
  bool valid = true;
  rollout(bicycle(), nav_state(0, std::nan(""), 0, 1), plan, &valid);
  EXPECT_FALSE(valid);
}

TEST(Rollout, BatchEqualsSequential) {
  DynamicsModel m = bicycle();
  Rng rng(7);
  std::uniform_real_distribution<double> v(0, 2), d(-0.4, 0.4);
  std::vector<Eigen::MatrixXd> plans(512, Eigen::MatrixXd(10, 2));
  for (auto& p : plans)
    for (int t = 0; t < 10; ++t) p.row(t) << v(rng), d(rng);
  State s0 = nav_state(0.2, -0.3, 1.0, 0.4);
  auto batch = rollout_batch(m, s0, plans);
  for (std::size_t n = 0; n < plans.size(); ++n) ASSERT_EQ(batch[n], rollout(m, s0, plans[n]));
}

TEST(Rollout, LearnedBatchEqualsSequential) {
  Rng rng(3);
  DynamicsModel m = DynamicsModel::learned(4, 2, {2}, {}, rng);
  std::vector<Eigen::MatrixXd> plans(64, Eigen::MatrixXd(5, 2));
  for (auto& p : plans) p = Eigen::MatrixXd::Random(5, 2);
  State s0 = nav_state(0.2, -0.3, 1.0, 0.4);
  auto batch = rollout_batch(m, s0, plans);
  for (std::size_t n = 0; n < plans.size(); ++n) ASSERT_EQ(batch[n], rollout(m, s0, plans[n]));
  // The frozen snapshot used by the planner agrees with predict().
  auto frozen = m.freeze<double>();
  Eigen::MatrixXd S = s0.replicate(1, 64), A(2, 64);
  for (int n = 0; n < 64; ++n) A.col(n) = plans[static_cast<std::size_t>(n)].row(0).transpose();
  EXPECT_LT((frozen(S, A) - m.predict_batch<double>(S, A)).cwiseAbs().maxCoeff(), 1e-12);
}

// ---------------------------------------------------------------------------
// dynamics_update
// ---------------------------------------------------------------------------

TEST(DynamicsUpdate, RecoversLinearSystem) {
  const LinearSystem sys = make_linear();
  ReplayBuffer buf = linear_buffer(sys, 2000, 5);
  Rng rng(1);
  DynamicsModel m = DynamicsModel::learned(3, 2, {}, linear_config(1e-2), rng);
  std::vector<double> hist;
  for (int e = 0; e < 60; ++e) {
    auto h = m.update(buf, 5, 64, e, rng);
    hist.insert(hist.end(), h.begin(), h.end());
  }
  ReplayBuffer test = linear_buffer(sys, 500, 99);
  Eigen::MatrixXd s(3, 500), a(2, 500), sn(3, 500);
  for (int k = 0; k < 500; ++k) {
    s.col(k) = test[static_cast<std::size_t>(k)].s;
    a.col(k) = test[static_cast<std::size_t>(k)].a;
    sn.col(k) = test[static_cast<std::size_t>(k)].s_next;
  }
  EXPECT_LT(m.evaluate_loss(s, a, sn), 1e-6);
  EXPECT_LT(hist.back(), 1e-6);
}

TEST(DynamicsUpdate, RejectsBadInputs) {
  Rng rng(1);
  DynamicsModel m = DynamicsModel::learned(3, 2, {}, linear_config(1e-3), rng);
  ReplayBuffer buf = linear_buffer(make_linear(), 10, 1);
  EXPECT_THROW(m.update(buf, 1, 0, 0, rng), UsageError);
  ReplayBuffer empty(10, 1);
  EXPECT_THROW(m.update(empty, 1, 8, 0, rng), UsageError);
  DynamicsModel a = bicycle();
  EXPECT_THROW(a.update(buf, 1, 8, 0, rng), UsageError);
}

TEST(DynamicsUpdate, FixedBatchLossNonIncreasing) {
  const LinearSystem sys = make_linear();
  ReplayBuffer buf = linear_buffer(sys, 256, 3);
  Rng rng(2);
  DynamicsModel m = DynamicsModel::learned(3, 2, {}, linear_config(1e-4), rng);
  m.fit_normalization(buf);
  Eigen::MatrixXd s(3, 256), a(2, 256), sn(3, 256);
  for (int k = 0; k < 256; ++k) {
    s.col(k) = buf[static_cast<std::size_t>(k)].s;
    a.col(k) = buf[static_cast<std::size_t>(k)].a;
    sn.col(k) = buf[static_cast<std::size_t>(k)].s_next;
  }
  double prev = m.train_step(s, a, sn);
  for (int i = 0; i < 100; ++i) {
    const double cur = m.train_step(s, a, sn);
    EXPECT_LE(cur, prev + 1e-15) << "step " << i;
    prev = cur;
  }
  EXPECT_LT(m.evaluate_loss(s, a, sn), prev);
}

TEST(DynamicsUpdate, ScheduleSetsLearningRate) {
  Rng rng(1);
  LearnedDynamicsConfig cfg;
  cfg.schedule = {1e-3, 0.9, 15, 1e-6};
  DynamicsModel m = DynamicsModel::learned(3, 2, {}, cfg, rng);
  ReplayBuffer buf = linear_buffer(make_linear(), 32, 1);
  m.update(buf, 1, 16, 14, rng);
  EXPECT_DOUBLE_EQ(m.optimizer().config().lr, 1e-3);
  m.update(buf, 1, 16, 15, rng);
  EXPECT_DOUBLE_EQ(m.optimizer().config().lr, 1e-3 * 0.9);
  m.update(buf, 1, 16, 45, rng);
  EXPECT_DOUBLE_EQ(m.optimizer().config().lr, 1e-3 * 0.9 * 0.9 * 0.9);
  EXPECT_EQ(m.updates(), 3);
}

TEST(DynamicsUpdate, LearnedBicycleReachesLowError) {
  DynamicsModel truth = bicycle();
  Rng data_rng(21);
  ReplayBuffer buf(5000, 1);
  for (int i = 0; i < 5000; ++i) buf.insert(random_bicycle_transition(truth, data_rng));
  Rng rng(5);
  DynamicsModel m = DynamicsModel::learned(4, 2, {2}, {}, rng);
  for (int e = 0; e < 200; ++e) m.update(buf, 1, 64, e, rng);

  const int n = 2000;
  Eigen::MatrixXd s(4, n), a(2, n), sn(4, n);
  for (int k = 0; k < n; ++k) {
    Transition t = random_bicycle_transition(truth, data_rng);
    s.col(k) = t.s;
    a.col(k) = t.a;
    sn.col(k) = t.s_next;
  }
  const double rmse = std::sqrt(m.evaluate_loss(s, a, sn) / 4.0);
  EXPECT_LT(rmse, 1e-2);
}

TEST(DynamicsModel, CheckpointRoundTrip) {
  Rng rng(8);
  DynamicsModel m = DynamicsModel::learned(4, 2, {2}, {}, rng);
  ReplayBuffer buf(100, 1);
  for (int i = 0; i < 100; ++i) buf.insert(random_bicycle_transition(bicycle(), rng));
  m.update(buf, 2, 32, 0, rng);
  const std::string path = ::testing::TempDir() + "/dyn_roundtrip.ckpt";
  m.save(path);
  DynamicsModel back = DynamicsModel::load(path);
  State s = nav_state(0.3, 0.2, -1.0, 1.1);
  Action a = Eigen::Vector2d(1.2, 0.1);
  EXPECT_EQ(back.predict(s, a), m.predict(s, a));

  bicycle().save(path);
  EXPECT_EQ(DynamicsModel::load(path).kind(), DynamicsKind::AnalyticBicycle);
}

// ---------------------------------------------------------------------------
// Replay buffer
// ---------------------------------------------------------------------------

namespace {
Transition tagged(double tag) { return {State::Constant(1, tag), Action::Zero(1), State::Zero(1)}; }
}  // namespace

TEST(ReplayBuffer, AppendsBelowCapacity) {
  ReplayBuffer buf(10, 1);
  for (int i = 0; i < 5; ++i) buf.insert(tagged(i));
  EXPECT_EQ(buf.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(buf[static_cast<std::size_t>(i)].s[0], i);
}

TEST(ReplayBuffer, ReplacesWhenFull) {
  ReplayBuffer buf(10, 1);
  for (int i = 0; i < 10; ++i) buf.insert(tagged(i));
  std::vector<Transition> fresh;
  for (int i = 100; i < 105; ++i) fresh.push_back(tagged(i));
  buf.insert(fresh);
  EXPECT_EQ(buf.size(), 10u);
  int fresh_count = 0;
  for (const auto& t : buf.data()) fresh_count += t.s[0] >= 100;
  EXPECT_GE(fresh_count, 1);
  // The last insert always survives.
  bool last = false;
  for (const auto& t : buf.data()) last = last || t.s[0] == 104;
  EXPECT_TRUE(last);
}

TEST(ReplayBuffer, ReplacementIsUniform) {
  // Each slot of a full buffer is hit with probability 1/capacity.
  std::vector<int> hits(10, 0);
  const int trials = 20000;
  ReplayBuffer buf(10, 3);
  for (int i = 0; i < 10; ++i) buf.insert(tagged(-1));
  for (int k = 0; k < trials; ++k) {
    buf.insert(tagged(k));
    for (int i = 0; i < 10; ++i)
      if (buf[static_cast<std::size_t>(i)].s[0] == k) ++hits[static_cast<std::size_t>(i)];
  }
  for (int h : hits) EXPECT_NEAR(h, trials / 10.0, 5 * std::sqrt(trials * 0.1 * 0.9));
}

TEST(ReplayBuffer, SameSeedSameContents) {
  auto fill = [](std::uint64_t seed) {
    ReplayBuffer buf(8, seed);
    for (int i = 0; i < 50; ++i) buf.insert(tagged(i));
    std::vector<double> tags;
    for (const auto& t : buf.data()) tags.push_back(t.s[0]);
    return tags;
  };
  EXPECT_EQ(fill(4), fill(4));
  EXPECT_NE(fill(4), fill(5));
}

TEST(ReplayBuffer, ZeroCapacityRejected) { EXPECT_THROW(ReplayBuffer(0, 1), UsageError); }

// ---------------------------------------------------------------------------
// Model bias
// ---------------------------------------------------------------------------

TEST(ModelBias, AnalyticPriorMissesSlip) {
  NavEnv env;
  DynamicsModel m = DynamicsModel::analytic_bicycle(env.bicycle());
  Rng rng(6);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    State s = nav_state(0, 0, 0.2 * i, 1.5);
    Action a = Eigen::Vector2d(1.5, 0.3);
    total += (env.step(s, a, rng) - m.predict(s, a)).norm();
  }
  EXPECT_GT(total / 100, 1e-3);
}
