#pragma once

// Discriminator f_theta(s, s') and value V_phi(s) with their updates.
//
// Sign convention (the one place it is spelled out): the discriminator is
// trained with agent transitions labeled 1 and expert transitions labeled 0
// under D = sigmoid(f). Its logit f is therefore high on agent-like
// transitions and serves directly as the planner step cost c = f. The
// learning reward is r = -f, which is the logit of the expert probability
// 1 - D and, at the optimal discriminator, equals log(rho_E / rho_pi).

#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mpail/common.hpp"
#include "mpail/envs.hpp"
#include "mpail/nn.hpp"

namespace mpail {

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

namespace detail {

inline nlohmann::json feature_map_json(const FeatureMap& fm) {
  return {{"angle_dims", fm.angle_dims},
          {"scale", std::vector<double>(fm.scale.data(), fm.scale.data() + fm.scale.size())}};
}

inline FeatureMap feature_map_from_json(const nlohmann::json& j) {
  auto s = j.at("scale").get<std::vector<double>>();
  return {j.at("angle_dims").get<std::vector<int>>(),
          Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()))};
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read checkpoint " + path);
  try {
    nlohmann::json j;
    f >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write checkpoint " + path);
  f << j.dump() << '\n';
}

inline std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// Shuffled index chunks: `parts` near-equal mini-batches of [0, n).
inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, int parts, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  parts = std::max(1, std::min<int>(parts, static_cast<int>(n)));
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(parts));
  for (std::size_t i = 0; i < n; ++i) out[i * static_cast<std::size_t>(parts) / n].push_back(idx[i]);
  return out;
}

inline Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

struct DiscriminatorConfig {
  std::vector<int> hidden{32, 32};
  nn::Activation activation = nn::Activation::LeakyReLU;
  bool spectral_norm = true;
  nn::AdamConfig adam{1e-4, 0.5, 0.999, 1e-8};
  double l2 = 0.0;
  int epochs = 3;
  int mini_batches = 3;
};

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(FeatureMap features, const DiscriminatorConfig& cfg, Rng& rng)
      : features_(std::move(features)),
        cfg_(cfg),
        net_(2 * features_.output_dim(), cfg.hidden, 1, cfg.activation, cfg.spectral_norm, rng),
        adam_(net_, cfg.adam) {}

  const FeatureMap& features() const { return features_; }
  const DiscriminatorConfig& config() const { return cfg_; }
  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  nn::Adam& optimizer() { return adam_; }
  int state_dim() const { return static_cast<int>(features_.scale.size()); }

  template <class S>
  MatX<S> inputs(const MatX<S>& s, const MatX<S>& sn) const {
    const Eigen::Index F = features_.output_dim();
    MatX<S> in(2 * F, s.cols());
    features_.apply_into(s, in, 0);
    features_.apply_into(sn, in, F);
    return in;
  }

  /// f(s, s') per column: the planner step cost.
  Eigen::RowVectorXd logits(const Eigen::MatrixXd& s, const Eigen::MatrixXd& sn) const {
    if (s.cols() != sn.cols()) throw ShapeError("discriminator: s and s' batch sizes differ");
    return net_.forward(inputs<double>(s, sn)).row(0);
  }

  double logit(const State& s, const State& sn) const {
    return logits(Eigen::MatrixXd(s), Eigen::MatrixXd(sn))[0];
  }

  /// Read-only batched evaluator for planner rollouts.
  template <class S>
  struct Frozen {
    FeatureMap features;
    nn::FrozenMlp<S> net;
    RowX<S> operator()(const MatX<S>& s, const MatX<S>& sn) const {
      const Eigen::Index F = features.output_dim();
      thread_local MatX<S> in;
      in.resize(2 * F, s.cols());
      features.apply_into(s, in, 0);
      features.apply_into(sn, in, F);
      return net.forward(in).row(0);
    }
  };

  template <class S>
  Frozen<S> freeze() const {
    return {features_, nn::FrozenMlp<S>(net_)};
  }

  void save(const std::string& path) const {
    detail::write_json({{"format", "mpail.discriminator"},
                        {"version", 1},
                        {"features", detail::feature_map_json(features_)},
                        {"net", net_.to_json()}},
                       path);
  }

  static Discriminator load(const std::string& path, const DiscriminatorConfig& cfg = {}) {
    auto j = detail::read_json(path);
    if (j.value("format", "") != "mpail.discriminator") throw ParseError(path + ": not a discriminator checkpoint", 0);
    Discriminator d;
    d.features_ = detail::feature_map_from_json(j.at("features"));
    d.cfg_ = cfg;
    d.net_ = nn::Mlp::from_json(j.at("net"));
    d.adam_ = nn::Adam(d.net_, cfg.adam);
    return d;
  }

 private:
  FeatureMap features_;
  DiscriminatorConfig cfg_;
  nn::Mlp net_;
  nn::Adam adam_;
};

/// Reward carried by a logit: identity, with a finiteness check.
inline double logit_reward(double logit) {
  if (!std::isfinite(logit)) throw Error("non-finite discriminator logit");
  return logit;
}

/// r(s, s') = -f(s, s'), the expert-side logit.
inline double airl_reward(const Discriminator& d, const State& s, const State& sn) {
  return logit_reward(-d.logit(s, sn));
}

inline Eigen::RowVectorXd airl_rewards(const Discriminator& d, const Eigen::MatrixXd& s, const Eigen::MatrixXd& sn) {
  Eigen::RowVectorXd r = -d.logits(s, sn);
  if (!r.allFinite()) throw Error("non-finite discriminator logit");
  return r;
}

struct DiscriminatorStats {
  double loss = 0.0;                // mean BCE(agent, 1) + mean BCE(expert, 0), averaged over steps
  double agent_logit_mean = 0.0;    // after the update, over all agent transitions
  double expert_logit_mean = 0.0;
  int steps = 0;
};

/// Loss and its logit gradients for one mini-batch.
inline double discriminator_loss(const Eigen::RowVectorXd& f_agent, const Eigen::RowVectorXd& f_expert,
                                 Eigen::RowVectorXd* g_agent = nullptr, Eigen::RowVectorXd* g_expert = nullptr) {
  const double na = static_cast<double>(f_agent.size()), ne = static_cast<double>(f_expert.size());
  double la = 0.0, le = 0.0;
  if (g_agent) g_agent->resize(f_agent.size());
  if (g_expert) g_expert->resize(f_expert.size());
  for (Eigen::Index k = 0; k < f_agent.size(); ++k) {
    la += softplus(-f_agent[k]);
    if (g_agent) (*g_agent)[k] = (sigmoid(f_agent[k]) - 1.0) / na;
  }
  for (Eigen::Index k = 0; k < f_expert.size(); ++k) {
    le += softplus(f_expert[k]);
    if (g_expert) (*g_expert)[k] = sigmoid(f_expert[k]) / ne;
  }
  return la / na + le / ne;
}

/// epochs x mini_batches Adam steps of binary cross-entropy (agent 1,
/// expert 0). Agent transitions are split into shuffled mini-batches; each
/// is paired with an equally sized expert batch drawn uniformly with
/// replacement. One power iteration precedes every step.
inline DiscriminatorStats discriminator_update(Discriminator& d, const Eigen::MatrixXd& agent_s,
                                               const Eigen::MatrixXd& agent_sn, const Eigen::MatrixXd& expert_s,
                                               const Eigen::MatrixXd& expert_sn, Rng& rng) {
  if (agent_s.cols() == 0 || expert_s.cols() == 0) throw UsageError("discriminator update: empty batch");
  if (agent_s.cols() != agent_sn.cols() || expert_s.cols() != expert_sn.cols())
    throw ShapeError("discriminator update: s and s' batch sizes differ");
  const auto& cfg = d.config();
  DiscriminatorStats st;
  std::uniform_int_distribution<Eigen::Index> pick(0, expert_s.cols() - 1);
  for (int e = 0; e < cfg.epochs; ++e) {
    for (const auto& mb : detail::minibatches(static_cast<std::size_t>(agent_s.cols()), cfg.mini_batches, rng)) {
      const auto B = static_cast<Eigen::Index>(mb.size());
      Eigen::MatrixXd in(2 * d.features().output_dim(), 2 * B);
      in.leftCols(B) = d.inputs<double>(detail::gather(agent_s, mb), detail::gather(agent_sn, mb));
      Eigen::MatrixXd es(expert_s.rows(), B), esn(expert_s.rows(), B);
      for (Eigen::Index k = 0; k < B; ++k) {
        Eigen::Index i = pick(rng);
        es.col(k) = expert_s.col(i);
        esn.col(k) = expert_sn.col(i);
      }
      in.rightCols(B) = d.inputs<double>(es, esn);

      d.net().spectral_step();
      nn::ForwardCache cache;
      Eigen::RowVectorXd f = d.net().forward(in, cache).row(0);
      Eigen::RowVectorXd ga, ge;
      double loss = discriminator_loss(f.head(B), f.tail(B), &ga, &ge);
      if (!std::isfinite(loss))
        throw DivergenceError("discriminator loss is non-finite (epoch " + std::to_string(e) + ")");
      Eigen::MatrixXd up(1, 2 * B);
      up << ga, ge;
      auto g = d.net().backward(cache, up);
      loss += nn::l2_penalty(d.net(), cfg.l2, &g.params);
      d.optimizer().step(d.net(), g.params);
      st.loss += loss;
      ++st.steps;
    }
  }
  st.loss /= std::max(1, st.steps);
  st.agent_logit_mean = d.logits(agent_s, agent_sn).mean();
  st.expert_logit_mean = d.logits(expert_s, expert_sn).mean();
  return st;
}

// ---------------------------------------------------------------------------
// Value function
// ---------------------------------------------------------------------------

struct ValueConfig {
  std::vector<int> hidden{32, 32};
  nn::Activation activation = nn::Activation::ReLU;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  double clip = 0.2;
  double max_grad_norm = 1.0;
  int epochs = 3;
  int mini_batches = 3;
};

class ValueFunction {
 public:
  ValueFunction() = default;
  ValueFunction(FeatureMap features, const ValueConfig& cfg, Rng& rng)
      : features_(std::move(features)),
        cfg_(cfg),
        net_(features_.output_dim(), cfg.hidden, 1, cfg.activation, false, rng),
        adam_(net_, cfg.adam) {}

  const FeatureMap& features() const { return features_; }
  const ValueConfig& config() const { return cfg_; }
  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  nn::Adam& optimizer() { return adam_; }

  Eigen::RowVectorXd values(const Eigen::MatrixXd& states) const {
    return net_.forward(features_.apply<double>(states)).row(0);
  }
  double value(const State& s) const { return values(Eigen::MatrixXd(s))[0]; }

  template <class S>
  struct Frozen {
    FeatureMap features;
    nn::FrozenMlp<S> net;
    RowX<S> operator()(const MatX<S>& s) const {
      thread_local MatX<S> in;
      in.resize(features.output_dim(), s.cols());
      features.apply_into(s, in, 0);
      return net.forward(in).row(0);
    }
  };

  template <class S>
  Frozen<S> freeze() const {
    return {features_, nn::FrozenMlp<S>(net_)};
  }

  void save(const std::string& path) const {
    detail::write_json({{"format", "mpail.value"},
                        {"version", 1},
                        {"features", detail::feature_map_json(features_)},
                        {"net", net_.to_json()}},
                       path);
  }

  static ValueFunction load(const std::string& path, const ValueConfig& cfg = {}) {
    auto j = detail::read_json(path);
    if (j.value("format", "") != "mpail.value") throw ParseError(path + ": not a value checkpoint", 0);
    ValueFunction v;
    v.features_ = detail::feature_map_from_json(j.at("features"));
    v.cfg_ = cfg;
    v.net_ = nn::Mlp::from_json(j.at("net"));
    v.adam_ = nn::Adam(v.net_, cfg.adam);
    return v;
  }

 private:
  FeatureMap features_;
  ValueConfig cfg_;
  nn::Mlp net_;
  nn::Adam adam_;
};

struct ReturnEstimate {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;  // lambda-returns G_t = A_t + V(s_t)
};

/// GAE(lambda) over one episode. `values` holds V(s_0..s_{T-1});
/// `bootstrap` is V(s_T) (zero for a true terminal).
inline ReturnEstimate compute_returns(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, double bootstrap,
                                      double gamma, double lambda) {
  if (rewards.size() != values.size()) throw ShapeError("compute_returns: rewards and values differ in length");
  const Eigen::Index T = rewards.size();
  ReturnEstimate r{Eigen::VectorXd(T), Eigen::VectorXd(T)};
  double next_adv = 0.0, next_v = bootstrap;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const double delta = rewards[t] + gamma * next_v - values[t];
    next_adv = delta + gamma * lambda * next_adv;
    r.advantages[t] = next_adv;
    r.returns[t] = next_adv + values[t];
    next_v = values[t];
  }
  return r;
}

/// Per-sample clipped value loss max((v - G)^2, (v_old + clip(v - v_old) - G)^2)
/// and its derivative with respect to v.
inline double clipped_value_loss(double v, double v_old, double G, double clip, double* dv = nullptr) {
  const double d = v - v_old;
  const double vc = v_old + std::clamp(d, -clip, clip);
  const double lu = (v - G) * (v - G), lc = (vc - G) * (vc - G);
  if (lu >= lc) {
    if (dv) *dv = 2.0 * (v - G);
    return lu;
  }
  if (dv) *dv = (std::abs(d) < clip) ? 2.0 * (vc - G) : 0.0;
  return lc;
}

/// epochs x mini_batches Adam steps on the clipped regression loss with
/// global grad-norm clipping. Returns the mean pre-step mini-batch loss.
inline double value_update(ValueFunction& vf, const Eigen::MatrixXd& states, const Eigen::VectorXd& returns,
                           const Eigen::VectorXd& old_values, Rng& rng) {
  const auto M = states.cols();
  if (M == 0) throw UsageError("value update: empty batch");
  if (returns.size() != M || old_values.size() != M) throw ShapeError("value update: batch sizes differ");
  const auto& cfg = vf.config();
  const Eigen::MatrixXd feats = vf.features().apply<double>(states);
  double total = 0.0;
  int steps = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (const auto& mb : detail::minibatches(static_cast<std::size_t>(M), cfg.mini_batches, rng)) {
      const auto B = static_cast<Eigen::Index>(mb.size());
      nn::ForwardCache cache;
      Eigen::RowVectorXd v = vf.net().forward(detail::gather(feats, mb), cache).row(0);
      Eigen::MatrixXd up(1, B);
      double loss = 0.0;
      for (Eigen::Index k = 0; k < B; ++k) {
        const auto i = static_cast<Eigen::Index>(mb[static_cast<std::size_t>(k)]);
        double dv = 0.0;
        loss += clipped_value_loss(v[k], old_values[i], returns[i], cfg.clip, &dv);
        up(0, k) = dv / static_cast<double>(B);
      }
      loss /= static_cast<double>(B);
      if (!std::isfinite(loss)) throw DivergenceError("value loss is non-finite");
      auto g = vf.net().backward(cache, up);
      nn::clip_grad_norm(g.params, cfg.max_grad_norm);
      vf.optimizer().step(vf.net(), g.params);
      total += loss;
      ++steps;
    }
  }
  return total / steps;
}

}  // namespace mpail
