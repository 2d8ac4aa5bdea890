#pragma once

// Minimal dense-network stack: fixed-topology MLPs with analytic gradients,
// Adam, spectral normalization, gradient clipping and learning-rate decay.
// Training math runs in double; FrozenMlp<S> is a read-only snapshot for
// batched evaluation in any scalar type (float during planner rollouts).

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpail/common.hpp"

namespace mpail::nn {

enum class Activation { ReLU, LeakyReLU, Identity };

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kSpectralEps = 1e-12;
inline constexpr int kPowerIterationWarmup = 20;
// Warm-up continues past the minimum until the estimate settles.
inline constexpr int kPowerIterationWarmupMax = 20000;
inline constexpr double kPowerIterationTol = 1e-13;

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::LeakyReLU: return "leaky_relu";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "leaky_relu") return Activation::LeakyReLU;
  if (s == "identity") return Activation::Identity;
  throw ParseError("unknown activation '" + s + "'", 0);
}

template <class Derived>
inline void apply_activation(Activation a, Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  switch (a) {
    case Activation::ReLU: z = z.cwiseMax(S(0)); break;
    case Activation::LeakyReLU: z = z.cwiseMax(S(kLeakySlope) * z); break;
    case Activation::Identity: break;
  }
}

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Identity;
  bool spectral_norm = false;
  // Power-iteration estimates of the top singular pair (unit vectors).
  Eigen::VectorXd u;  // out
  Eigen::VectorXd v;  // in

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }

  /// Current estimate of the largest singular value.
  double sigma_estimate() const { return u.dot(weight * v); }

  /// Divisor applied to the weight: the estimate when it exceeds one, else 1.
  double spectral_divisor() const {
    if (!spectral_norm) return 1.0;
    double s = std::max(sigma_estimate(), kSpectralEps);
    return s > 1.0 ? s : 1.0;
  }

  Eigen::MatrixXd effective_weight() const { return weight / spectral_divisor(); }

  /// One power-iteration refinement of (u, v).
  void power_iteration() {
    Eigen::VectorXd nv = weight.transpose() * u;
    double nvn = nv.norm();
    if (nvn <= kSpectralEps) return;  // zero matrix: keep the current pair
    v = nv / nvn;
    Eigen::VectorXd nu = weight * v;
    double nun = nu.norm();
    if (nun <= kSpectralEps) return;
    u = nu / nun;
  }
};

/// Per-parameter tensors shaped like an Mlp (gradients, Adam moments).
struct ParamSet {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  void set_zero() {
    for (auto& w : weight) w.setZero();
    for (auto& b : bias) b.setZero();
  }
  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weight) s += w.squaredNorm();
    for (const auto& b : bias) s += b.squaredNorm();
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }
  bool all_finite() const {
    for (const auto& w : weight)
      if (!w.allFinite()) return false;
    for (const auto& b : bias)
      if (!b.allFinite()) return false;
    return true;
  }
  void scale(double k) {
    for (auto& w : weight) w *= k;
    for (auto& b : bias) b *= k;
  }
  ParamSet& operator+=(const ParamSet& o) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight[i] += o.weight[i];
      bias[i] += o.bias[i];
    }
    return *this;
  }
};

/// Activations cached by a training forward pass; one column per sample.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to layer i
  std::vector<Eigen::MatrixXd> preact;  // W_eff x + b of layer i
  bool empty() const { return inputs.empty(); }
};

struct Gradients {
  ParamSet params;
  Eigen::MatrixXd input;  // d loss / d x, same shape as the batch
};

class Mlp {
 public:
  Mlp() = default;

  /// He-uniform hidden layers (seeded), LeCun-uniform output layer, zero
  /// biases. Spectral normalization, when requested, applies to every layer
  /// and is warmed up with at least kPowerIterationWarmup power iterations.
  Mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
      Activation hidden_activation, bool spectral_norm, Rng& rng) {
    std::vector<int> widths{input_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(output_dim);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      bool last = i + 2 == widths.size();
      Layer l;
      l.activation = last ? Activation::Identity : hidden_activation;
      l.spectral_norm = spectral_norm;
      int fan_in = widths[i];
      double gain = 1.0;
      if (l.activation == Activation::ReLU) gain = std::sqrt(2.0);
      if (l.activation == Activation::LeakyReLU)
        gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
      double bound = gain * std::sqrt(3.0 / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      l.weight.resize(widths[i + 1], widths[i]);
      for (int r = 0; r < l.weight.rows(); ++r)
        for (int c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = dist(rng);
      l.bias = Eigen::VectorXd::Zero(widths[i + 1]);
      layers_.push_back(std::move(l));
    }
    init_power_iteration(rng);
  }

  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
    validate();
    for (auto& l : layers_) {
      if (l.u.size() != l.out()) l.u = Eigen::VectorXd::Unit(l.out(), 0);
      if (l.v.size() != l.in()) l.v = Eigen::VectorXd::Unit(l.in(), 0);
    }
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  int input_dim() const { return layers_.front().in(); }
  int output_dim() const { return layers_.back().out(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers_.empty()) throw ShapeError("mlp has no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].bias.size() != layers_[i].out())
        throw ShapeError("layer " + std::to_string(i) + ": bias width mismatch");
      if (i + 1 < layers_.size() && layers_[i].out() != layers_[i + 1].in())
        throw ShapeError("layer " + std::to_string(i) +
                         " output width does not match next layer input");
    }
  }

  /// Random unit start vectors followed by the warm-up iterations.
  void init_power_iteration(Rng& rng) {
    std::normal_distribution<double> n01;
    for (auto& l : layers_) {
      l.u.resize(l.out());
      for (int i = 0; i < l.out(); ++i) l.u[i] = n01(rng);
      l.u.normalize();
      l.v = Eigen::VectorXd::Zero(l.in());
      if (l.in() > 0) l.v[0] = 1.0;
      if (!l.spectral_norm) continue;
      double prev = l.sigma_estimate();
      for (int k = 0; k < kPowerIterationWarmupMax; ++k) {
        l.power_iteration();
        const double cur = l.sigma_estimate();
        if (k + 1 >= kPowerIterationWarmup && std::abs(cur - prev) <= kPowerIterationTol * std::abs(cur)) break;
        prev = cur;
      }
    }
  }

  /// One refinement per spectrally normalized layer (called once per
  /// optimizer step).
  void spectral_step() {
    for (auto& l : layers_)
      if (l.spectral_norm) l.power_iteration();
  }

  bool uses_spectral_norm() const {
    for (const auto& l : layers_)
      if (l.spectral_norm) return true;
    return false;
  }

  /// Batched evaluation, one sample per column. Pure. The coefficient-wise
  /// product makes each column bitwise independent of the batch width.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    check_input(x.rows());
    Eigen::MatrixXd h = x;
    for (const auto& l : layers_) {
      Eigen::MatrixXd z = l.effective_weight().lazyProduct(h);
      z.colwise() += l.bias;
      apply_activation(l.activation, z);
      h = std::move(z);
    }
    return h;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    return forward(Eigen::MatrixXd(x)).col(0);
  }

  /// Forward pass that records what backward() needs.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, ForwardCache& cache) const {
    check_input(x.rows());
    cache.inputs.clear();
    cache.preact.clear();
    Eigen::MatrixXd h = x;
    for (const auto& l : layers_) {
      cache.inputs.push_back(h);
      Eigen::MatrixXd z = l.effective_weight() * h;
      z.colwise() += l.bias;
      cache.preact.push_back(z);
      apply_activation(l.activation, z);
      h = std::move(z);
    }
    return h;
  }

  /// Gradients of a scalar loss whose gradient at the output is `upstream`
  /// (out x batch). Parameter gradients are summed over the batch. The
  /// spectral divisor is differentiated with (u, v) held fixed.
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream) const {
    if (cache.empty() || cache.inputs.size() != layers_.size())
      throw UsageError("backward called without a matching forward cache");
    if (upstream.rows() != output_dim() || upstream.cols() != cache.inputs[0].cols())
      throw ShapeError("upstream gradient shape does not match forward batch");
    Gradients g;
    g.params.weight.resize(layers_.size());
    g.params.bias.resize(layers_.size());
    Eigen::MatrixXd delta = upstream;
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      const Layer& l = layers_[i];
      const Eigen::MatrixXd& z = cache.preact[i];
      switch (l.activation) {
        case Activation::ReLU:
          delta = delta.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
          break;
        case Activation::LeakyReLU:
          delta = delta.cwiseProduct(
              (z.array() > 0.0).select(1.0, Eigen::ArrayXXd::Constant(z.rows(), z.cols(), kLeakySlope)).matrix());
          break;
        case Activation::Identity: break;
      }
      double div = l.spectral_divisor();
      Eigen::MatrixXd d_eff = delta * cache.inputs[i].transpose();
      if (div > 1.0) {
        // W_eff = W / s, s = u^T W v  =>  dW = G/s - <G, W>/s^2 * u v^T
        double gw = (d_eff.array() * l.weight.array()).sum();
        g.params.weight[i] = d_eff / div - (gw / (div * div)) * (l.u * l.v.transpose());
      } else {
        g.params.weight[i] = d_eff;
      }
      g.params.bias[i] = delta.rowwise().sum();
      delta = (l.weight / div).transpose() * delta;
    }
    g.input = std::move(delta);
    return g;
  }

  ParamSet zeros_like() const {
    ParamSet p;
    for (const auto& l : layers_) {
      p.weight.push_back(Eigen::MatrixXd::Zero(l.out(), l.in()));
      p.bias.push_back(Eigen::VectorXd::Zero(l.out()));
    }
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "mpail.mlp";
    j["version"] = 1;
    auto& arr = j["layers"] = nlohmann::json::array();
    for (const auto& l : layers_) {
      nlohmann::json lj;
      lj["in"] = l.in();
      lj["out"] = l.out();
      lj["activation"] = to_string(l.activation);
      lj["spectral_norm"] = l.spectral_norm;
      std::vector<double> w(static_cast<std::size_t>(l.weight.size()));
      for (int r = 0; r < l.out(); ++r)
        for (int c = 0; c < l.in(); ++c) w[static_cast<std::size_t>(r) * l.in() + c] = l.weight(r, c);
      lj["weight"] = w;
      lj["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
      lj["u"] = std::vector<double>(l.u.data(), l.u.data() + l.u.size());
      lj["v"] = std::vector<double>(l.v.data(), l.v.data() + l.v.size());
      arr.push_back(std::move(lj));
    }
    return j;
  }

  static Mlp from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "mpail.mlp")
      throw ParseError("not an mpail.mlp checkpoint", 0);
    if (j.value("version", 0) != 1)
      throw ParseError("unsupported checkpoint version " + std::to_string(j.value("version", 0)), 0);
    std::vector<Layer> layers;
    for (const auto& lj : j.at("layers")) {
      Layer l;
      int in = lj.at("in"), out = lj.at("out");
      auto w = lj.at("weight").get<std::vector<double>>();
      auto b = lj.at("bias").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(in) * out || b.size() != static_cast<std::size_t>(out))
        throw ParseError("layer tensor sizes do not match declared shape", 0);
      l.weight.resize(out, in);
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r) * in + c];
      l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
      l.activation = activation_from_string(lj.at("activation"));
      l.spectral_norm = lj.at("spectral_norm");
      if (lj.contains("u")) {
        auto u = lj["u"].get<std::vector<double>>();
        auto v = lj["v"].get<std::vector<double>>();
        if (u.size() == static_cast<std::size_t>(out)) l.u = Eigen::Map<const Eigen::VectorXd>(u.data(), out);
        if (v.size() == static_cast<std::size_t>(in)) l.v = Eigen::Map<const Eigen::VectorXd>(v.data(), in);
      }
      layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers));
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw Error("cannot write checkpoint " + path);
    f << to_json().dump() << '\n';
  }

  static Mlp load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read checkpoint " + path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what(), 0);
    }
    return from_json(j);
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      const auto &x = a.layers_[i], &y = b.layers_[i];
      if (x.activation != y.activation || x.spectral_norm != y.spectral_norm) return false;
      if (x.weight != y.weight || x.bias != y.bias || x.u != y.u || x.v != y.v) return false;
    }
    return true;
  }

 private:
  void check_input(Eigen::Index rows) const {
    if (layers_.empty()) throw UsageError("mlp has no layers");
    if (rows != input_dim())
      throw ShapeError("input has " + std::to_string(rows) + " rows, network expects " +
                       std::to_string(input_dim()));
  }

  std::vector<Layer> layers_;
};

/// Read-only snapshot with the spectral divisor folded into the weights.
template <class S>
class FrozenMlp {
 public:
  FrozenMlp() = default;
  explicit FrozenMlp(const Mlp& net) {
    for (const auto& l : net.layers())
      layers_.push_back({l.effective_weight().cast<S>(), l.bias.cast<S>(), l.activation});
  }

  int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
  bool empty() const { return layers_.empty(); }

  /// Evaluated in column blocks so GEMM packing buffers stay small; the
  /// per-thread scratch keeps the object itself read-only.
  MatX<S> forward(const MatX<S>& x) const {
    if (x.rows() != input_dim()) throw ShapeError("frozen mlp input width mismatch");
    constexpr Eigen::Index kBlock = 512;
    thread_local MatX<S> scratch[2];
    MatX<S> out(output_dim(), x.cols());
    for (Eigen::Index c0 = 0; c0 < x.cols(); c0 += kBlock) {
      const Eigen::Index nb = std::min(kBlock, x.cols() - c0);
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        MatX<S>& z = scratch[i % 2];
        z.resize(l.weight.rows(), nb);
        if (i == 0)
          z.noalias() = l.weight * x.middleCols(c0, nb);
        else
          z.noalias() = l.weight * scratch[(i - 1) % 2];
        switch (l.activation) {
          case Activation::ReLU: z = (z.colwise() + l.bias).cwiseMax(S(0)); break;
          case Activation::LeakyReLU:
            z = (z.colwise() + l.bias).cwiseMax(S(kLeakySlope) * (z.colwise() + l.bias));
            break;
          case Activation::Identity: z.colwise() += l.bias; break;
        }
      }
      out.middleCols(c0, nb) = scratch[(layers_.size() - 1) % 2];
    }
    return out;
  }

 private:
  struct FrozenLayer {
    MatX<S> weight;
    VecX<S> bias;
    Activation activation;
  };
  std::vector<FrozenLayer> layers_;
};

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Throws DivergenceError (leaving parameters
/// untouched) when a gradient entry is non-finite.
class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& net, AdamConfig cfg) : cfg_(cfg), m_(net.zeros_like()), v_(net.zeros_like()) {}

  void step(Mlp& net, const ParamSet& grads) {
    if (!grads.all_finite()) throw DivergenceError("non-finite gradient in adam step");
    ++step_count_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
    };
    auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      update(layers[i].weight, m_.weight[i], v_.weight[i], grads.weight[i]);
      update(layers[i].bias, m_.bias[i], v_.bias[i], grads.bias[i]);
    }
  }

  long step_count() const { return step_count_; }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }
  const ParamSet& first_moment() const { return m_; }
  const ParamSet& second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  ParamSet m_, v_;
  long step_count_ = 0;
};

/// Scales grads so that their global L2 norm is at most max_norm. Returns
/// the norm before clipping.
inline double clip_grad_norm(ParamSet& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw UsageError("max_norm must be positive");
  double n = grads.norm();
  if (n > max_norm) grads.scale(max_norm / n);
  return n;
}

/// coefficient * sum(w^2) over weights (biases excluded); adds the gradient
/// 2 * coefficient * w into grads when given.
inline double l2_penalty(const Mlp& net, double coefficient, ParamSet* grads = nullptr) {
  if (coefficient < 0.0) throw UsageError("l2 coefficient must be non-negative");
  double p = 0.0;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& w = net.layers()[i].weight;
    p += w.squaredNorm();
    if (grads && coefficient > 0.0) grads->weight[i] += 2.0 * coefficient * w;
  }
  return coefficient * p;
}

/// Step decay: base * rate^floor(episode / every), floored at min_lr.
struct LrSchedule {
  double base_lr = 1e-3;
  double decay_rate = 1.0;
  int decay_every_episodes = 1;
  double min_lr = 0.0;

  double at(int episode) const {
    int k = decay_every_episodes > 0 ? episode / decay_every_episodes : 0;
    return std::max(min_lr, base_lr * std::pow(decay_rate, k));
  }
};

}  // namespace mpail::nn
