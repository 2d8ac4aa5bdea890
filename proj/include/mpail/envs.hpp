#pragma once

// Simulation environments, scripted state-only demonstrators and demo I/O.
//
// Environments are immutable parameter objects: all stepping is a pure
// function of (state, action, rng), so a batch of environments can share one
// instance while each episode owns its engine.

#include <array>
#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "mpail/common.hpp"
#include "mpail/csv.hpp"

namespace mpail {

struct EpisodeSpec {
  int horizon_steps = 100;
  double dt = 0.1;
};

struct ActionBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  template <class S>
  void clamp(Eigen::Ref<MatX<S>> actions) const {
    for (Eigen::Index i = 0; i < actions.rows(); ++i)
      actions.row(i) = actions.row(i).cwiseMax(S(lower[i])).cwiseMin(S(upper[i]));
  }
  Action clamp(const Action& a) const { return a.cwiseMax(lower).cwiseMin(upper); }
  bool contains(const Action& a) const {
    return (a.array() >= lower.array()).all() && (a.array() <= upper.array()).all();
  }
};

/// Uniform box of initial states. Dimensions with lo == hi are fixed.
struct InitRegion {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  State sample(Rng& rng) const {
    State s(lower.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      std::uniform_real_distribution<double> d(lower[i], upper[i]);
      s[i] = lower[i] == upper[i] ? lower[i] : d(rng);
    }
    return s;
  }
};

/// Network input features: angle dimensions expand into (cos, sin), every
/// other dimension is multiplied by a fixed scale.
struct FeatureMap {
  std::vector<int> angle_dims;
  Eigen::VectorXd scale;

  bool is_angle(int i) const {
    return std::find(angle_dims.begin(), angle_dims.end(), i) != angle_dims.end();
  }
  int output_dim() const { return static_cast<int>(scale.size() + angle_dims.size()); }

  template <class S>
  MatX<S> apply(const MatX<S>& states) const {
    MatX<S> out(output_dim(), states.cols());
    apply_into(states, out, 0);
    return out;
  }

  /// Writes features of `states` into rows [row0, row0 + output_dim()).
  /// Works on a row-major copy so each feature row is contiguous.
  template <class S, class Out>
  void apply_into(const MatX<S>& states, Out& out, Eigen::Index row0) const {
    using RowMajor = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (states.rows() != scale.size()) throw ShapeError("feature map: state width mismatch");
    thread_local RowMajor in, f;
    in = states.array();
    f.resize(output_dim(), states.cols());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
      if (is_angle(static_cast<int>(i))) {
        f.row(r++) = in.row(i).cos();
        f.row(r++) = in.row(i).sin();
      } else {
        f.row(r++) = in.row(i) * S(scale[i]);
      }
    }
    out.middleRows(row0, output_dim()) = f.matrix();
  }

  static FeatureMap identity(int dim) { return {{}, Eigen::VectorXd::Ones(dim)}; }
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual const ActionBounds& bounds() const = 0;
  virtual EpisodeSpec episode() const = 0;
  virtual const InitRegion& init_region() const = 0;
  virtual void set_init_region(InitRegion r) = 0;
  /// Advances one step; actions outside the bounds are clamped.
  virtual State step(const State& s, const Action& a, Rng& rng) const = 0;
  /// Task metric used for reporting (never seen by the learner).
  virtual double task_reward(const State& s) const = 0;
  virtual FeatureMap features() const = 0;
  virtual std::vector<int> angle_dims() const = 0;
  /// Default per-dimension sampling variance for the planner.
  virtual Eigen::VectorXd default_sampling_variance() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  State initial_state(Rng& rng) const { return init_region().sample(rng); }
};

// ---------------------------------------------------------------------------
// Planar vehicle navigation
// ---------------------------------------------------------------------------

struct BicycleParams {
  double wheelbase = 0.3;   // L, m
  double speed_gain = 2.0;  // k in dv/dt = k (v_target - v), 1/s
  double dt = 0.1;
};

/// One explicit-Euler step of the kinematic bicycle, shared by the
/// environment and the planner's prior model. Operates column-wise on
/// states (x, y, yaw, v) and actions (v_target, steering).
template <class S>
void bicycle_step(const MatX<S>& states, const MatX<S>& actions, const BicycleParams& p, MatX<S>& next) {
  using RowMajor = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  thread_local RowMajor st, ac, nx;
  st = states.array();
  ac = actions.array();
  const auto x = st.row(0), y = st.row(1), yaw = st.row(2), v = st.row(3);
  const auto vt = ac.row(0), delta = ac.row(1);
  const S dt = S(p.dt);
  nx.resize(4, states.cols());
  nx.row(0) = x + v * yaw.cos() * dt;
  nx.row(1) = y + v * yaw.sin() * dt;
  nx.row(2) = yaw + v * (delta.sin() / delta.cos()) / S(p.wheelbase) * dt;
  nx.row(3) = v + S(p.speed_gain) * (vt - v) * dt;
  for (Eigen::Index c = 0; c < nx.cols(); ++c) nx(2, c) = wrap_angle(nx(2, c));
  next = nx.matrix();
}

struct SlipParams {
  bool enabled = true;
  double coefficient = 0.1;  // lateral slip speed per unit v*tan(delta)
  double noise_std = 0.01;   // per-step std of the coefficient
};

class NavEnv : public Environment {
 public:
  static constexpr double kGoalX = 10.0;
  static constexpr double kGoalY = 10.0;
  static constexpr double kMaxSteer = 0.4;
  static constexpr double kMaxSpeed = 2.0;

  NavEnv(BicycleParams bicycle = {}, SlipParams slip = {}) : bicycle_(bicycle), slip_(slip) {
    bounds_.lower = Eigen::Vector2d(0.0, -kMaxSteer);
    bounds_.upper = Eigen::Vector2d(kMaxSpeed, kMaxSteer);
    init_ = in_distribution_region();
  }

  /// Within 1 m of the origin (a 1 x 1 box), any heading, at rest.
  static InitRegion in_distribution_region() {
    return box_region(1.0);
  }

  /// Square box of side `side` centered on the origin, any heading, at rest.
  static InitRegion box_region(double side) {
    const double pi = std::numbers::pi;
    return {Eigen::Vector4d(-side / 2, -side / 2, -pi, 0.0), Eigen::Vector4d(side / 2, side / 2, pi, 0.0)};
  }

  std::string name() const override { return "nav"; }
  int state_dim() const override { return 4; }
  int action_dim() const override { return 2; }
  const ActionBounds& bounds() const override { return bounds_; }
  EpisodeSpec episode() const override { return {100, bicycle_.dt}; }
  const InitRegion& init_region() const override { return init_; }
  void set_init_region(InitRegion r) override { init_ = std::move(r); }
  const BicycleParams& bicycle() const { return bicycle_; }
  const SlipParams& slip() const { return slip_; }

  State step(const State& s, const Action& a, Rng& rng) const override {
    return step(s, a, rng, nullptr);
  }

  /// Bicycle update plus an outward lateral slip of speed c * v * tan(delta),
  /// c ~ N(coefficient, noise_std^2). The slip vanishes when delta == 0.
  State step(const State& s, const Action& a, Rng& rng, bool* clamped) const {
    Action ac = bounds_.clamp(a);
    if (clamped) *clamped = (ac.array() != a.array()).any();
    Eigen::MatrixXd next;
    bicycle_step<double>(s, ac, bicycle_, next);
    State out = next.col(0);
    if (slip_.enabled) {
      boost::random::normal_distribution<double> n01;
      double c = slip_.coefficient + slip_.noise_std * n01(rng);
      double lateral = -c * s[3] * std::tan(ac[1]);  // outward of the turn
      out[0] += -std::sin(s[2]) * lateral * bicycle_.dt;
      out[1] += std::cos(s[2]) * lateral * bicycle_.dt;
    }
    return out;
  }

  double task_reward(const State& s) const override { return nav_reward(s[0], s[1]); }

  static double nav_reward(double x, double y) {
    return std::sqrt(kGoalX * kGoalX + kGoalY * kGoalY) - std::hypot(x - kGoalX, y - kGoalY);
  }
  static double goal_distance(const State& s) { return std::hypot(s[0] - kGoalX, s[1] - kGoalY); }

  FeatureMap features() const override {
    return {{2}, Eigen::Vector4d(0.1, 0.1, 1.0, 0.5)};
  }
  std::vector<int> angle_dims() const override { return {2}; }
  Eigen::VectorXd default_sampling_variance() const override { return Eigen::Vector2d(0.3, 0.3); }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<NavEnv>(*this); }

 private:
  BicycleParams bicycle_;
  SlipParams slip_;
  ActionBounds bounds_;
  InitRegion init_;
};

/// Pads a planar state (x, y, yaw, v) into the 12-D layout
/// (x, y, z, roll, pitch, yaw, vx, vy, vz, wx, wy, wz) with zeros.
inline Eigen::VectorXd nav_state_to_12d(const State& s) {
  Eigen::VectorXd o = Eigen::VectorXd::Zero(12);
  o[0] = s[0];
  o[1] = s[1];
  o[5] = s[2];
  o[6] = s[3];
  return o;
}

inline State nav_state_from_12d(const Eigen::VectorXd& o) {
  return Eigen::Vector4d(o[0], o[1], o[5], o[6]);
}

// ---------------------------------------------------------------------------
// Cart-pole
// ---------------------------------------------------------------------------

struct CartpoleParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double gravity = 9.81;
  double max_force = 10.0;
  double dt = 0.02;
  int substeps = 20;  // integrator steps per control step
};

/// State (x, x_dot, theta, theta_dot) with theta = 0 upright; action (force).
class CartpoleEnv : public Environment {
 public:
  explicit CartpoleEnv(CartpoleParams p = {}) : p_(p) {
    bounds_.lower = Eigen::VectorXd::Constant(1, -p.max_force);
    bounds_.upper = Eigen::VectorXd::Constant(1, p.max_force);
    init_ = {Eigen::Vector4d::Constant(-0.05), Eigen::Vector4d::Constant(0.05)};
  }

  std::string name() const override { return "cartpole"; }
  int state_dim() const override { return 4; }
  int action_dim() const override { return 1; }
  const ActionBounds& bounds() const override { return bounds_; }
  EpisodeSpec episode() const override { return {100, p_.dt}; }
  const InitRegion& init_region() const override { return init_; }
  void set_init_region(InitRegion r) override { init_ = std::move(r); }
  const CartpoleParams& params() const { return p_; }

  State step(const State& s, const Action& a, Rng&) const override { return step(s, a); }

  /// Semi-implicit Euler on the standard cart-pole equations, `substeps`
  /// steps of dt / substeps with the force held.
  State step(const State& s, const Action& a) const {
    const double f = std::clamp(a[0], -p_.max_force, p_.max_force);
    const double total = p_.cart_mass + p_.pole_mass;
    const double pml = p_.pole_mass * p_.half_length;
    const int k = std::max(1, p_.substeps);
    const double h = p_.dt / k;
    State n = s;
    for (int i = 0; i < k; ++i) {
      const double st = std::sin(n[2]), ct = std::cos(n[2]);
      const double temp = (f + pml * n[3] * n[3] * st) / total;
      const double theta_acc =
          (p_.gravity * st - ct * temp) / (p_.half_length * (4.0 / 3.0 - p_.pole_mass * ct * ct / total));
      const double x_acc = temp - pml * theta_acc * ct / total;
      n[1] += x_acc * h;
      n[0] += n[1] * h;
      n[3] += theta_acc * h;
      n[2] += n[3] * h;
    }
    n[2] = wrap_angle(n[2]);
    return n;
  }

  /// Kinetic + potential energy of cart and uniform rod (pivot at the cart).
  double energy(const State& s) const {
    const double m = p_.pole_mass, l = p_.half_length;
    const double ct = std::cos(s[2]);
    return 0.5 * (p_.cart_mass + m) * s[1] * s[1] + m * l * s[1] * s[3] * ct +
           0.5 * (4.0 / 3.0) * m * l * l * s[3] * s[3] + m * p_.gravity * l * ct;
  }

  /// 1 while the pole is within 0.2 rad of upright.
  double task_reward(const State& s) const override { return std::abs(s[2]) < 0.2 ? 1.0 : 0.0; }

  FeatureMap features() const override { return {{2}, Eigen::Vector4d(1.0 / 2.4, 0.5, 1.0, 0.5)}; }
  std::vector<int> angle_dims() const override { return {2}; }
  Eigen::VectorXd default_sampling_variance() const override { return Eigen::VectorXd::Constant(1, 4.0); }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<CartpoleEnv>(*this); }

 private:
  CartpoleParams p_;
  ActionBounds bounds_;
  InitRegion init_;
};

// ---------------------------------------------------------------------------
// Scripted demonstrators
// ---------------------------------------------------------------------------

class Expert {
 public:
  virtual ~Expert() = default;
  virtual Action act(const State& s, Rng& rng) const = 0;
};

enum class NavExpertMode { Direct, Circling };

/// Pure pursuit toward the goal. Bearings beyond +-90 degrees saturate the
/// steering. Inside `slow_radius` the direct mode ramps speed down with
/// distance and with misalignment so it stops at the goal. In circling mode
/// the vehicle loops at constant steering once inside `circle_trigger`.
class NavExpert : public Expert {
 public:
  struct Params {
    double cruise_speed = 2.0;
    double lookahead = 1.5;
    double slow_radius = 2.0;
    double circle_trigger = 1.5;
    double circle_speed = 1.0;
    double circle_radius = 1.0;
    double wheelbase = 0.3;
  };

  explicit NavExpert(NavExpertMode mode) : mode_(mode) {}
  NavExpert(NavExpertMode mode, Params p) : mode_(mode), p_(p) {}

  Action act(const State& s, Rng&) const override { return act(s); }

  Action act(const State& s) const {
    const double dx = NavEnv::kGoalX - s[0], dy = NavEnv::kGoalY - s[1];
    const double dist = std::hypot(dx, dy);
    if (mode_ == NavExpertMode::Circling && dist < p_.circle_trigger)
      return Eigen::Vector2d(p_.circle_speed, circle_steering());
    const double alpha = wrap_angle(std::atan2(dy, dx) - s[2]);
    double delta;
    if (std::abs(alpha) >= std::numbers::pi / 2) {
      delta = alpha >= 0 ? NavEnv::kMaxSteer : -NavEnv::kMaxSteer;
    } else {
      const double lookahead = std::max(std::min(dist, p_.lookahead), 1e-6);
      delta = std::atan(2.0 * p_.wheelbase * std::sin(alpha) / lookahead);
      delta = std::clamp(delta, -NavEnv::kMaxSteer, NavEnv::kMaxSteer);
    }
    double speed = p_.cruise_speed;
    if (mode_ == NavExpertMode::Direct && dist < p_.slow_radius)
      speed = p_.cruise_speed * dist / p_.slow_radius * std::max(0.0, std::cos(alpha));
    return Eigen::Vector2d(speed, delta);
  }

  double circle_steering() const { return std::atan(p_.wheelbase / p_.circle_radius); }
  const Params& params() const { return p_; }

 private:
  NavExpertMode mode_;
  Params p_;
};

/// Infinite-horizon discrete LQR gain by Riccati iteration.
inline Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                const Eigen::MatrixXd& R, int iterations = 5000) {
  Eigen::MatrixXd P = Q;
  Eigen::MatrixXd K;
  for (int i = 0; i < iterations; ++i) {
    Eigen::MatrixXd BtP = B.transpose() * P;
    K = (R + BtP * B).ldlt().solve(BtP * A);
    Eigen::MatrixXd Pn = Q + A.transpose() * P * (A - B * K);
    if ((Pn - P).cwiseAbs().maxCoeff() < 1e-12) {
      P = Pn;
      break;
    }
    P = Pn;
  }
  Eigen::MatrixXd BtP = B.transpose() * P;
  return (R + BtP * B).ldlt().solve(BtP * A);
}

/// LQR balance controller on the dynamics linearized about upright.
class CartpoleExpert : public Expert {
 public:
  explicit CartpoleExpert(const CartpoleEnv& env) : env_(env) {
    const int n = 4;
    const double h = 1e-6;
    Eigen::MatrixXd A(n, n), B(n, 1);
    State zero = State::Zero(n);
    Action a0 = Action::Zero(1);
    for (int j = 0; j < n; ++j) {
      State sp = zero, sm = zero;
      sp[j] += h;
      sm[j] -= h;
      A.col(j) = (env.step(sp, a0) - env.step(sm, a0)) / (2 * h);
    }
    Action ap = Action::Constant(1, h), am = Action::Constant(1, -h);
    B.col(0) = (env.step(zero, ap) - env.step(zero, am)) / (2 * h);
    Eigen::Vector4d q(1.0, 0.1, 10.0, 0.1);
    gain_ = lqr_gain(A, B, q.asDiagonal().toDenseMatrix(), Eigen::MatrixXd::Constant(1, 1, 0.1));
  }

  Action act(const State& s, Rng&) const override { return act(s); }
  Action act(const State& s) const { return env_.bounds().clamp(Action(-gain_ * s)); }
  const Eigen::MatrixXd& gain() const { return gain_; }

 private:
  CartpoleEnv env_;
  Eigen::MatrixXd gain_;
};

// ---------------------------------------------------------------------------
// Demonstrations
// ---------------------------------------------------------------------------

/// State-only demonstrations; episode e is a (dim x T_e) matrix of states.
struct DemoSet {
  std::vector<Eigen::MatrixXd> episodes;
  int state_dim = 0;
  std::string source;

  std::size_t transition_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.cols() > 0 ? static_cast<std::size_t>(e.cols() - 1) : 0;
    return n;
  }

  /// All consecutive (s, s') pairs as two (dim x M) matrices.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> transitions() const {
    const auto m = static_cast<Eigen::Index>(transition_count());
    Eigen::MatrixXd s(state_dim, m), sn(state_dim, m);
    Eigen::Index k = 0;
    for (const auto& e : episodes) {
      for (Eigen::Index t = 0; t + 1 < e.cols(); ++t, ++k) {
        s.col(k) = e.col(t);
        sn.col(k) = e.col(t + 1);
      }
    }
    return {s, sn};
  }

  /// All states of all episodes, one per column.
  Eigen::MatrixXd all_states() const {
    Eigen::Index n = 0;
    for (const auto& e : episodes) n += e.cols();
    Eigen::MatrixXd out(state_dim, n);
    Eigen::Index k = 0;
    for (const auto& e : episodes) {
      out.middleCols(k, e.cols()) = e;
      k += e.cols();
    }
    return out;
  }

  friend bool operator==(const DemoSet& a, const DemoSet& b) {
    if (a.state_dim != b.state_dim || a.episodes.size() != b.episodes.size()) return false;
    for (std::size_t i = 0; i < a.episodes.size(); ++i)
      if (a.episodes[i].cols() != b.episodes[i].cols() || a.episodes[i] != b.episodes[i]) return false;
    return true;
  }
};

/// Rolls the expert for n episodes of env.episode().horizon_steps steps from
/// initial states drawn with per-episode engines derived from `seed`.
/// Actions are discarded.
inline DemoSet generate_demos(const Environment& env, const Expert& expert, int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw UsageError("generate_demos: need at least one episode");
  DemoSet d;
  d.state_dim = env.state_dim();
  d.source = env.name() + "-scripted";
  const int T = env.episode().horizon_steps;
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng = derive_rng(seed, static_cast<std::uint64_t>(e));
    Eigen::MatrixXd traj(env.state_dim(), T + 1);
    State s = env.initial_state(rng);
    traj.col(0) = s;
    for (int t = 0; t < T; ++t) {
      s = env.step(s, expert.act(s, rng), rng);
      traj.col(t + 1) = s;
    }
    d.episodes.push_back(std::move(traj));
  }
  return d;
}

inline void write_demos(const DemoSet& d, std::ostream& out) {
  out << "episode,t";
  for (int i = 0; i < d.state_dim; ++i) out << ",s" << i;
  out << '\n';
  for (std::size_t e = 0; e < d.episodes.size(); ++e) {
    const auto& ep = d.episodes[e];
    for (Eigen::Index t = 0; t < ep.cols(); ++t) {
      out << e << ',' << t;
      for (int i = 0; i < d.state_dim; ++i) out << ',' << csv::format_double(ep(i, t));
      out << '\n';
    }
  }
}

inline void write_demos(const DemoSet& d, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write demo file " + path);
  write_demos(d, f);
  if (!f) throw Error("failed writing demo file " + path);
}

/// Reads `episode,t,s0..s{d-1}`. Rows of an episode must be contiguous with
/// t = 0, 1, 2, ...; non-finite entries are rejected.
inline DemoSet read_demos(std::istream& in, const std::string& source = "file") {
  csv::Table t = csv::parse(in);
  const auto& h = t.header;
  if (h.size() < 3 || h[0] != "episode" || h[1] != "t")
    throw ParseError("demo header must be episode,t,s0..s{d-1}", 1);
  const int dim = static_cast<int>(h.size()) - 2;
  for (int i = 0; i < dim; ++i)
    if (h[static_cast<std::size_t>(i) + 2] != "s" + std::to_string(i))
      throw ParseError("demo header column " + std::to_string(i + 2) + " should be s" + std::to_string(i), 1);
  DemoSet d;
  d.state_dim = dim;
  d.source = source;
  std::vector<std::vector<double>> cur;
  long cur_ep = -1;
  auto flush = [&] {
    if (cur.empty()) return;
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(cur.size()));
    for (std::size_t c = 0; c < cur.size(); ++c)
      for (int i = 0; i < dim; ++i) m(i, static_cast<Eigen::Index>(c)) = cur[c][static_cast<std::size_t>(i)];
    d.episodes.push_back(std::move(m));
    cur.clear();
  };
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = t.row_lines[r];
    for (double v : row)
      if (!std::isfinite(v)) throw ParseError("non-finite value in demo file", line);
    const long ep = static_cast<long>(row[0]);
    const long ts = static_cast<long>(row[1]);
    if (ep != cur_ep) {
      flush();
      if (ep != static_cast<long>(d.episodes.size()))
        throw ParseError("episodes must be numbered consecutively from 0", line);
      cur_ep = ep;
    }
    if (ts != static_cast<long>(cur.size())) throw ParseError("time index out of sequence", line);
    cur.emplace_back(row.begin() + 2, row.end());
  }
  flush();
  if (d.episodes.empty()) throw ParseError("demo file has no rows", 2);
  return d;
}

inline DemoSet read_demos(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open demo file " + path);
  return read_demos(f, path);
}

}  // namespace mpail
