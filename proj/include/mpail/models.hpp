#pragma once

// Predictive models for planner rollouts: the analytic kinematic bicycle
// prior and an MLP dynamics model learned online from a replay buffer.

#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <variant>

#include <json.hpp>

#include "mpail/common.hpp"
#include "mpail/envs.hpp"
#include "mpail/nn.hpp"

namespace mpail {

enum class DynamicsKind { AnalyticBicycle, Learned };

struct Transition {
  State s;
  Action a;
  State s_next;
};

/// Fixed-capacity transition store. Below capacity inserts append; above it
/// each new transition overwrites a uniformly random existing slot.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 20000, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw UsageError("replay buffer capacity must be positive");
  }

  void insert(const Transition& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, capacity_ - 1);
      data_[pick(rng_)] = t;
    }
  }

  void insert(const std::vector<Transition>& ts) {
    for (const auto& t : ts) insert(t);
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  const std::vector<Transition>& data() const { return data_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }
  Rng& rng() { return rng_; }

 private:
  std::size_t capacity_;
  Rng rng_;
  std::vector<Transition> data_;
};

struct LearnedDynamicsConfig {
  std::vector<int> hidden{64, 64, 64};
  nn::Activation activation = nn::Activation::ReLU;
  bool predict_delta = true;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  nn::LrSchedule schedule{1e-3, 0.9, 15, 1e-6};
};

/// Per-dimension affine normalization of model inputs and outputs.
struct DynamicsNormalization {
  Eigen::VectorXd state_mean, state_std;
  Eigen::VectorXd action_mean, action_std;
  Eigen::VectorXd delta_mean, delta_std;    // output space

  static DynamicsNormalization identity(int sd, int ad) {
    return {Eigen::VectorXd::Zero(sd), Eigen::VectorXd::Ones(sd), Eigen::VectorXd::Zero(ad),
            Eigen::VectorXd::Ones(ad), Eigen::VectorXd::Zero(sd), Eigen::VectorXd::Ones(sd)};
  }
};

namespace detail {

inline Eigen::VectorXd safe_std(const Eigen::MatrixXd& m, const Eigen::VectorXd& mean) {
  Eigen::VectorXd sd = ((m.colwise() - mean).array().square().rowwise().mean()).sqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i)
    if (!(sd[i] > 1e-6)) sd[i] = 1.0;
  return sd;
}

}  // namespace detail

template <class S>
class FrozenDynamics;

/// f(s, a) -> s'. Learned models predict the (angle-wrapped) state delta
/// under buffer statistics; predict() always returns the next state.
class DynamicsModel {
 public:
  static DynamicsModel analytic_bicycle(BicycleParams p) {
    DynamicsModel m;
    m.kind_ = DynamicsKind::AnalyticBicycle;
    m.bicycle_ = p;
    m.state_dim_ = 4;
    m.action_dim_ = 2;
    m.angle_dims_ = {2};
    return m;
  }

  static DynamicsModel learned(int state_dim, int action_dim, std::vector<int> angle_dims,
                               LearnedDynamicsConfig cfg, Rng& rng) {
    DynamicsModel m;
    m.kind_ = DynamicsKind::Learned;
    m.state_dim_ = state_dim;
    m.action_dim_ = action_dim;
    m.angle_dims_ = std::move(angle_dims);
    m.cfg_ = cfg;
    m.net_ = nn::Mlp(m.input_dim(), cfg.hidden, state_dim, cfg.activation, false, rng);
    m.adam_ = nn::Adam(m.net_, cfg.adam);
    m.norm_ = DynamicsNormalization::identity(state_dim, action_dim);
    return m;
  }

  DynamicsKind kind() const { return kind_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const std::vector<int>& angle_dims() const { return angle_dims_; }
  const BicycleParams& bicycle() const { return bicycle_; }
  const LearnedDynamicsConfig& learned_config() const { return cfg_; }
  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  nn::Adam& optimizer() { return adam_; }
  const DynamicsNormalization& normalization() const { return norm_; }
  void set_normalization(DynamicsNormalization n) { norm_ = std::move(n); }
  int updates() const { return updates_; }

  /// Learned-model input width: normalized [s; a].
  int input_dim() const { return state_dim_ + action_dim_; }

  bool is_angle(int i) const { return std::find(angle_dims_.begin(), angle_dims_.end(), i) != angle_dims_.end(); }

  /// Batched prediction, one (s, a) pair per column. Pure.
  template <class S>
  MatX<S> predict_batch(const MatX<S>& states, const MatX<S>& actions) const {
    check_dims(states.rows(), actions.rows(), states.cols(), actions.cols());
    if (kind_ == DynamicsKind::AnalyticBicycle) {
      MatX<S> next;
      bicycle_step<S>(states, actions, bicycle_, next);
      return next;
    }
    MatX<S> out = net_.forward(encode<double>(states.template cast<double>(), actions.template cast<double>(), norm_))
                      .template cast<S>();
    return decode(states, out, norm_);
  }

  State predict(const State& s, const Action& a) const {
    return predict_batch<double>(Eigen::MatrixXd(s), Eigen::MatrixXd(a)).col(0);
  }

  /// Normalized network inputs for (states, actions) columns.
  template <class S>
  MatX<S> model_inputs(const MatX<S>& states, const MatX<S>& actions) const {
    return encode(states, actions, norm_);
  }

  template <class S>
  MatX<S> encode(const MatX<S>& states, const MatX<S>& actions, const DynamicsNormalization& n) const {
    MatX<S> in(input_dim(), states.cols());
    Eigen::Index r = 0;
    for (int i = 0; i < state_dim_; ++i)
      in.row(r++) = ((states.row(i).array() - S(n.state_mean[i])) / S(n.state_std[i])).matrix();
    for (int i = 0; i < action_dim_; ++i)
      in.row(r++) = ((actions.row(i).array() - S(n.action_mean[i])) / S(n.action_std[i])).matrix();
    return in;
  }

  template <class S>
  MatX<S> decode(const MatX<S>& states, const MatX<S>& out, const DynamicsNormalization& n) const {
    MatX<S> next(state_dim_, states.cols());
    for (int i = 0; i < state_dim_; ++i) {
      auto d = (out.row(i).array() * S(n.delta_std[i]) + S(n.delta_mean[i])).matrix();
      if (cfg_.predict_delta)
        next.row(i) = states.row(i) + d;
      else
        next.row(i) = d;
    }
    for (int i : angle_dims_)
      for (Eigen::Index c = 0; c < next.cols(); ++c) next(i, c) = wrap_angle(next(i, c));
    return next;
  }

  /// Fits normalization statistics to the buffer contents.
  void fit_normalization(const ReplayBuffer& buf) {
    if (buf.empty()) return;
    const auto n = static_cast<Eigen::Index>(buf.size());
    Eigen::MatrixXd S(state_dim_, n), A(action_dim_, n), D(state_dim_, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& t = buf[static_cast<std::size_t>(k)];
      S.col(k) = t.s;
      A.col(k) = t.a;
      D.col(k) = target_delta(t.s, t.s_next);
    }
    norm_.state_mean = S.rowwise().mean();
    norm_.state_std = detail::safe_std(S, norm_.state_mean);
    norm_.action_mean = A.rowwise().mean();
    norm_.action_std = detail::safe_std(A, norm_.action_mean);
    norm_.delta_mean = D.rowwise().mean();
    norm_.delta_std = detail::safe_std(D, norm_.delta_mean);
  }

  /// What the network output decodes to: wrapped delta or absolute state.
  Eigen::VectorXd target_delta(const State& s, const State& sn) const {
    if (!cfg_.predict_delta) return sn;
    Eigen::VectorXd d = sn - s;
    for (int i : angle_dims_) d[i] = wrap_angle(d[i]);
    return d;
  }

  /// One Adam step on a fixed batch; returns the pre-step loss
  /// L = (1/B) sum ||s' - f(s, a)||^2 (angle errors wrapped).
  double train_step(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a, const Eigen::MatrixXd& sn) {
    require_learned();
    const double B = static_cast<double>(s.cols());
    nn::ForwardCache cache;
    Eigen::MatrixXd out = net_.forward(encode<double>(s, a, norm_), cache);
    Eigen::MatrixXd pred = decode<double>(s, out, norm_);
    Eigen::MatrixXd err = pred - sn;
    for (int i : angle_dims_)
      for (Eigen::Index c = 0; c < err.cols(); ++c) err(i, c) = wrap_angle(err(i, c));
    const double loss = err.squaredNorm() / B;
    if (!std::isfinite(loss)) throw DivergenceError("dynamics loss is non-finite");
    Eigen::MatrixXd up = (2.0 / B) * (err.array().colwise() * norm_.delta_std.array()).matrix();
    auto g = net_.backward(cache, up);
    adam_.step(net_, g.params);
    return loss;
  }

  /// Mean loss of the current parameters on a batch (no update).
  double evaluate_loss(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a, const Eigen::MatrixXd& sn) const {
    Eigen::MatrixXd err = predict_batch<double>(s, a) - sn;
    for (int i : angle_dims_)
      for (Eigen::Index c = 0; c < err.cols(); ++c) err(i, c) = wrap_angle(err(i, c));
    return err.squaredNorm() / static_cast<double>(s.cols());
  }

  /// Refits normalization, sets the scheduled learning rate for `episode`,
  /// then runs `epochs` shuffled passes of mini-batches over the buffer.
  /// Returns the mean loss of each epoch.
  std::vector<double> update(const ReplayBuffer& buf, int epochs, int batch_size, int episode, Rng& rng,
                             bool refit_normalization = true) {
    require_learned();
    if (batch_size <= 0) throw UsageError("dynamics update: batch size must be positive");
    if (buf.empty()) throw UsageError("dynamics update: replay buffer is empty");
    if (refit_normalization) fit_normalization(buf);
    adam_.set_lr(cfg_.schedule.at(episode));
    std::vector<std::size_t> idx(buf.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> history;
    for (int e = 0; e < epochs; ++e) {
      std::shuffle(idx.begin(), idx.end(), rng);
      double sum = 0.0;
      int batches = 0;
      for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
        const auto B = static_cast<Eigen::Index>(end - start);
        Eigen::MatrixXd s(state_dim_, B), a(action_dim_, B), sn(state_dim_, B);
        for (Eigen::Index k = 0; k < B; ++k) {
          const auto& t = buf[idx[start + static_cast<std::size_t>(k)]];
          s.col(k) = t.s;
          a.col(k) = t.a;
          sn.col(k) = t.s_next;
        }
        sum += train_step(s, a, sn);
        ++batches;
      }
      history.push_back(sum / batches);
    }
    ++updates_;
    return history;
  }

  template <class S>
  FrozenDynamics<S> freeze() const;

  void save(const std::string& path) const {
    nlohmann::json j;
    j["format"] = "mpail.dynamics";
    j["version"] = 1;
    j["kind"] = kind_ == DynamicsKind::AnalyticBicycle ? "analytic_bicycle" : "learned";
    j["state_dim"] = state_dim_;
    j["action_dim"] = action_dim_;
    j["angle_dims"] = angle_dims_;
    if (kind_ == DynamicsKind::AnalyticBicycle) {
      j["wheelbase"] = bicycle_.wheelbase;
      j["speed_gain"] = bicycle_.speed_gain;
      j["dt"] = bicycle_.dt;
    } else {
      auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
      j["predict_delta"] = cfg_.predict_delta;
      j["net"] = net_.to_json();
      j["norm"] = {{"state_mean", vec(norm_.state_mean)},   {"state_std", vec(norm_.state_std)},
                   {"action_mean", vec(norm_.action_mean)}, {"action_std", vec(norm_.action_std)},
                   {"delta_mean", vec(norm_.delta_mean)},   {"delta_std", vec(norm_.delta_std)}};
    }
    std::ofstream f(path);
    if (!f) throw Error("cannot write checkpoint " + path);
    f << j.dump() << '\n';
  }

  static DynamicsModel load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read checkpoint " + path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what(), 0);
    }
    if (j.value("format", "") != "mpail.dynamics") throw ParseError(path + ": not a dynamics checkpoint", 0);
    if (j.at("kind") == "analytic_bicycle")
      return analytic_bicycle({j.at("wheelbase"), j.at("speed_gain"), j.at("dt")});
    DynamicsModel m;
    m.kind_ = DynamicsKind::Learned;
    m.state_dim_ = j.at("state_dim");
    m.action_dim_ = j.at("action_dim");
    m.angle_dims_ = j.at("angle_dims").get<std::vector<int>>();
    m.cfg_.predict_delta = j.at("predict_delta");
    m.net_ = nn::Mlp::from_json(j.at("net"));
    m.adam_ = nn::Adam(m.net_, m.cfg_.adam);
    auto vec = [&](const char* k) {
      auto v = j.at("norm").at(k).get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    m.norm_ = {vec("state_mean"), vec("state_std"), vec("action_mean"),
               vec("action_std"), vec("delta_mean"), vec("delta_std")};
    return m;
  }

 private:
  void require_learned() const {
    if (kind_ != DynamicsKind::Learned) throw UsageError("operation requires a learned dynamics model");
  }

  void check_dims(Eigen::Index sr, Eigen::Index ar, Eigen::Index sc, Eigen::Index ac) const {
    if (sr != state_dim_ || ar != action_dim_ || sc != ac)
      throw ShapeError("dynamics: expected (" + std::to_string(state_dim_) + ", " + std::to_string(action_dim_) +
                       ") rows with equal column counts");
  }

  DynamicsKind kind_ = DynamicsKind::AnalyticBicycle;
  int state_dim_ = 0;
  int action_dim_ = 0;
  std::vector<int> angle_dims_;
  BicycleParams bicycle_;
  LearnedDynamicsConfig cfg_;
  nn::Mlp net_;
  nn::Adam adam_;
  DynamicsNormalization norm_;
  int updates_ = 0;
};

/// Read-only batched snapshot of a DynamicsModel for planner rollouts.
/// Holds its own copy so it stays valid after the source model changes.
template <class S>
class FrozenDynamics {
 public:
  FrozenDynamics() = default;
  explicit FrozenDynamics(const DynamicsModel& m) : model_(std::make_shared<const DynamicsModel>(m)) {
    if (m.kind() == DynamicsKind::Learned) net_ = nn::FrozenMlp<S>(m.net());
  }

  MatX<S> operator()(const MatX<S>& states, const MatX<S>& actions) const {
    if (model_->kind() == DynamicsKind::AnalyticBicycle) return model_->predict_batch<S>(states, actions);
    const auto& n = model_->normalization();
    return model_->decode<S>(states, net_.forward(model_->encode<S>(states, actions, n)), n);
  }

 private:
  std::shared_ptr<const DynamicsModel> model_;
  nn::FrozenMlp<S> net_;
};

template <class S>
FrozenDynamics<S> DynamicsModel::freeze() const {
  return FrozenDynamics<S>(*this);
}

/// Iterates f over an H-step action sequence (H x action_dim). Returns the
/// (state_dim x H+1) predicted states; `valid` is cleared on non-finite
/// states.
inline Eigen::MatrixXd rollout(const DynamicsModel& model, const State& s0, const Eigen::MatrixXd& plan,
                               bool* valid = nullptr) {
  if (plan.rows() > 0 && plan.cols() != model.action_dim()) throw ShapeError("rollout: plan width mismatch");
  Eigen::MatrixXd states(model.state_dim(), plan.rows() + 1);
  states.col(0) = s0;
  bool ok = s0.allFinite();
  for (Eigen::Index t = 0; t < plan.rows(); ++t) {
    states.col(t + 1) = model.predict(states.col(t), plan.row(t).transpose());
    ok = ok && states.col(t + 1).allFinite();
  }
  if (valid) *valid = ok;
  return states;
}

/// Batched rollouts of N plans from one state; element n of the result is
/// the state sequence of plans[n].
inline std::vector<Eigen::MatrixXd> rollout_batch(const DynamicsModel& model, const State& s0,
                                                  const std::vector<Eigen::MatrixXd>& plans) {
  const auto N = static_cast<Eigen::Index>(plans.size());
  std::vector<Eigen::MatrixXd> out(plans.size());
  if (plans.empty()) return out;
  const Eigen::Index H = plans[0].rows();
  Eigen::MatrixXd cur = s0.replicate(1, N);
  for (auto& o : out) {
    o.resize(model.state_dim(), H + 1);
    o.col(0) = s0;
  }
  for (Eigen::Index t = 0; t < H; ++t) {
    Eigen::MatrixXd a(model.action_dim(), N);
    for (Eigen::Index n = 0; n < N; ++n) a.col(n) = plans[static_cast<std::size_t>(n)].row(t).transpose();
    cur = model.predict_batch<double>(cur, a);
    for (Eigen::Index n = 0; n < N; ++n) out[static_cast<std::size_t>(n)].col(t + 1) = cur.col(n);
  }
  return out;
}

}  // namespace mpail
