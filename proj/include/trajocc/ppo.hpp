#pragma once

// Proximal policy optimization for the discrete-action policy-value net:
// categorical sampling, GAE, clipped-surrogate loss with analytic
// gradients, Adam, and the collect/update training loop.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "trajocc/common.hpp"
#include "trajocc/env.hpp"
#include "trajocc/nn.hpp"

namespace trajocc {

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double learning_rate = 3e-4;
  int epochs = 10;
  int minibatch = 64;
  int n_rollout = 2048;
  double ent_coef = 0.01;
  double vf_coef = 0.5;
  double max_grad_norm = 0.5;
  std::int64_t total_timesteps = 300000;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("ppo.gamma must be in [0, 1)");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ppo.lambda must be in [0, 1]");
    if (!(clip > 0.0)) throw ConfigError("ppo.clip must be > 0");
    if (!(learning_rate >= 0.0)) throw ConfigError("ppo.learning_rate must be >= 0");
    if (epochs < 1) throw ConfigError("ppo.epochs must be >= 1");
    if (minibatch < 1) throw ConfigError("ppo.minibatch must be >= 1");
    if (n_rollout < 1) throw ConfigError("ppo.n_rollout must be >= 1");
    if (!(max_grad_norm > 0.0)) throw ConfigError("ppo.max_grad_norm must be > 0");
    if (total_timesteps < 1) throw ConfigError("ppo.total_timesteps must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Categorical policy helpers (evaluated in double regardless of net scalar)

template <typename Derived>
std::vector<double> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  const Eigen::Index n = logits.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = static_cast<double>(logits(i));
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
    m = std::max(m, z);
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits(i)) - m);
  const double lse = m + std::log(sum);
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(logits(i)) - lse;
  return out;
}

template <typename Derived>
std::vector<double> softmax(const Eigen::MatrixBase<Derived>& logits) {
  auto p = log_softmax(logits);
  for (double& x : p) x = std::exp(x);
  return p;
}

struct SampledAction {
  int index = 0;
  double log_prob = 0.0;
};

template <typename Derived, typename Rng>
SampledAction sample_action(const Eigen::MatrixBase<Derived>& logits, Rng& rng) {
  const auto logp = log_softmax(logits);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  std::size_t pick = logp.size() - 1;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    cum += std::exp(logp[i]);
    if (u < cum) {
      pick = i;
      break;
    }
  }
  return {static_cast<int>(pick), logp[pick]};
}

template <typename Derived>
int greedy_action(const Eigen::MatrixBase<Derived>& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return static_cast<int>(best);
}

inline double entropy(std::span<const double> logp) {
  double h = 0.0;
  for (double l : logp) h -= std::exp(l) * l;
  return h;
}

// ---------------------------------------------------------------------------
// Rollout storage and advantage estimation

struct RolloutBuffer {
  Eigen::MatrixXf obs;  // input_size x capacity
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;  // episode ended at this step
  std::vector<double> advantages;
  std::vector<double> returns;
  std::size_t size = 0;

  RolloutBuffer(std::size_t input_size, std::size_t capacity)
      : obs(static_cast<Eigen::Index>(input_size), static_cast<Eigen::Index>(capacity)) {
    actions.reserve(capacity);
  }

  std::size_t capacity() const { return static_cast<std::size_t>(obs.cols()); }
  bool full() const { return size == capacity(); }

  void clear() {
    size = 0;
    actions.clear();
    log_probs.clear();
    rewards.clear();
    values.clear();
    dones.clear();
    advantages.clear();
    returns.clear();
  }

  template <typename Derived>
  void add(const Eigen::MatrixBase<Derived>& observation, int action, double log_prob, double reward,
           double value, bool done) {
    if (full()) throw UsageError("rollout buffer is full");
    obs.col(static_cast<Eigen::Index>(size)) = observation;
    actions.push_back(action);
    log_probs.push_back(log_prob);
    rewards.push_back(reward);
    values.push_back(value);
    dones.push_back(done ? 1 : 0);
    ++size;
  }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
// A_t     = delta_t + gamma lambda (1 - done_t) A_{t+1}
// V_T is bootstrap_value.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const std::uint8_t> dones, double gamma, double lambda,
                             double bootstrap_value) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ShapeError("GAE inputs differ in length");
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 < n ? values[t + 1] : bootstrap_value;
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
  }
  return out;
}

inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda, double bootstrap_value) {
  if (!buf.full()) throw UsageError("GAE needs a complete rollout buffer");
  auto r = compute_gae(buf.rewards, buf.values, buf.dones, gamma, lambda, bootstrap_value);
  buf.advantages = std::move(r.advantages);
  buf.returns = std::move(r.returns);
}

// ---------------------------------------------------------------------------
// Loss and optimizer

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double total = 0.0;
};

struct PpoBatch {
  std::span<const int> actions;
  std::span<const double> old_log_probs;
  std::span<const double> advantages;
  std::span<const double> returns;
};

// Mean clipped-surrogate loss + vf_coef * mean squared value error
// - ent_coef * mean entropy over the batch; accumulates its gradient.
template <typename Scalar>
LossStats ppo_loss_and_grad(const PolicyValueNet<Scalar>& net,
                            const typename PolicyValueNet<Scalar>::Mat& inputs, const PpoBatch& batch,
                            const PpoConfig& cfg, typename PolicyValueNet<Scalar>::Vec& grad) {
  using Net = PolicyValueNet<Scalar>;
  typename Net::Cache cache;
  const auto out = net.forward(inputs, cache);
  const Eigen::Index n = inputs.cols();
  const Eigen::Index k = out.logits.rows();
  typename Net::Mat dlogits(k, n);
  typename Net::RowVec dvalues(n);
  LossStats s;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto logp = log_softmax(out.logits.col(b));
    const int a = batch.actions[static_cast<std::size_t>(b)];
    const double adv = batch.advantages[static_cast<std::size_t>(b)];
    const double log_ratio = logp[static_cast<std::size_t>(a)] - batch.old_log_probs[static_cast<std::size_t>(b)];
    const double ratio = std::exp(log_ratio);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double surr1 = ratio * adv;
    const double surr2 = clipped * adv;
    const double g_logp = surr1 <= surr2 ? -adv * ratio : 0.0;
    const double h = entropy(logp);
    const double v = static_cast<double>(out.values(b));
    const double err = v - batch.returns[static_cast<std::size_t>(b)];

    s.policy_loss += -std::min(surr1, surr2) * inv_n;
    s.value_loss += err * err * inv_n;
    s.entropy += h * inv_n;
    s.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
    s.clip_fraction += (std::abs(ratio - 1.0) > cfg.clip ? 1.0 : 0.0) * inv_n;

    for (Eigen::Index i = 0; i < k; ++i) {
      const double p = std::exp(logp[static_cast<std::size_t>(i)]);
      const double onehot = i == a ? 1.0 : 0.0;
      const double d = g_logp * (onehot - p) + cfg.ent_coef * p * (logp[static_cast<std::size_t>(i)] + h);
      dlogits(i, b) = static_cast<Scalar>(d * inv_n);
    }
    dvalues(b) = static_cast<Scalar>(2.0 * cfg.vf_coef * err * inv_n);
  }
  s.total = s.policy_loss + cfg.vf_coef * s.value_loss - cfg.ent_coef * s.entropy;
  if (!std::isfinite(s.total)) throw NumericError("non-finite PPO loss");
  net.backward(cache, dlogits, dvalues, grad);
  return s;
}

template <typename Scalar>
struct Adam {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vec m;
  Vec v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;

  void step(Vec& params, const Vec& grad, double lr) {
    if (m.size() != params.size()) {
      m = Vec::Zero(params.size());
      v = Vec::Zero(params.size());
    }
    ++t;
    const Scalar b1 = static_cast<Scalar>(beta1);
    const Scalar b2 = static_cast<Scalar>(beta2);
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
    const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(beta1, static_cast<double>(t)));
    const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(beta2, static_cast<double>(t)));
    const Scalar step = static_cast<Scalar>(lr);
    params.array() -= step * (m.array() / c1) / ((v.array() / c2).sqrt() + static_cast<Scalar>(eps));
  }
};

// Rescales grad in place so its global L2 norm is at most max_norm; returns
// the norm before clipping.
template <typename Vec>
double clip_grad_norm(Vec& grad, double max_norm) {
  const double norm = static_cast<double>(grad.norm());
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > max_norm) grad *= static_cast<typename Vec::Scalar>(max_norm / (norm + 1e-6));
  return norm;
}

// Several epochs of shuffled minibatch updates over a full buffer with
// per-update normalized advantages.
template <typename Scalar, typename Rng>
LossStats ppo_update(PolicyValueNet<Scalar>& net, Adam<Scalar>& opt, const RolloutBuffer& buf,
                     const PpoConfig& cfg, Rng& rng) {
  using Net = PolicyValueNet<Scalar>;
  const std::size_t n = buf.size;
  if (n == 0 || buf.advantages.size() != n) throw UsageError("ppo_update needs advantages for a full buffer");
  std::vector<double> adv(buf.advantages);
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double stdev = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
  for (double& a : adv) a = (a - mean) / (stdev + 1e-8);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatch), n);
  LossStats mean_stats;
  int batches = 0;
  typename Net::Mat inputs;
  std::vector<int> actions;
  std::vector<double> old_logp, advs, rets;
  typename Net::Vec grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      const auto count = static_cast<Eigen::Index>(end - start);
      inputs.resize(buf.obs.rows(), count);
      actions.resize(end - start);
      old_logp.resize(end - start);
      advs.resize(end - start);
      rets.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t j = order[i];
        const auto c = static_cast<Eigen::Index>(i - start);
        inputs.col(c) = buf.obs.col(static_cast<Eigen::Index>(j)).template cast<Scalar>();
        actions[i - start] = buf.actions[j];
        old_logp[i - start] = buf.log_probs[j];
        advs[i - start] = adv[j];
        rets[i - start] = buf.returns[j];
      }
      grad = Net::Vec::Zero(net.num_params());
      const auto s = ppo_loss_and_grad(net, inputs, PpoBatch{actions, old_logp, advs, rets}, cfg, grad);
      clip_grad_norm(grad, cfg.max_grad_norm);
      opt.step(net.params(), grad, cfg.learning_rate);
      mean_stats.policy_loss += s.policy_loss;
      mean_stats.value_loss += s.value_loss;
      mean_stats.entropy += s.entropy;
      mean_stats.approx_kl += s.approx_kl;
      mean_stats.clip_fraction += s.clip_fraction;
      mean_stats.total += s.total;
      ++batches;
    }
  }
  for (double* x : {&mean_stats.policy_loss, &mean_stats.value_loss, &mean_stats.entropy,
                    &mean_stats.approx_kl, &mean_stats.clip_fraction, &mean_stats.total}) {
    *x /= batches;
  }
  return mean_stats;
}

// ---------------------------------------------------------------------------
// Training loop

struct CurveRow {
  std::int64_t timestep = 0;
  int stage = 0;
  double mean_reward = std::numeric_limits<double>::quiet_NaN();
  double success_rate = std::numeric_limits<double>::quiet_NaN();
  int episodes = 0;  // episodes completed so far in this stage
  LossStats loss;
};

// Single-collector PPO trainer. Owns the optimizer and RNG; the network is
// borrowed so stages of a curriculum share it.
class PpoTrainer {
 public:
  using Net = PolicyValueNet<float>;
  static constexpr std::size_t kWindow = 20;

  PpoTrainer(Net& net, PpoConfig cfg, std::uint64_t seed) : net_(net), cfg_(cfg), rng_(seed) {
    cfg_.validate();
  }

  // Trains for exactly `steps` environment steps on env, calling on_update
  // after every optimization phase.
  template <typename Env>
  void run(Env& env, std::int64_t steps, int stage, const std::function<void(const CurveRow&)>& on_update = {}) {
    const auto input_size = static_cast<std::size_t>(net_.input_size());
    if (env.input_size() != input_size) {
      throw ShapeError("environment observation size " + std::to_string(env.input_size()) +
                       " does not match network input " + std::to_string(input_size));
    }
    RolloutBuffer buf(input_size, static_cast<std::size_t>(cfg_.n_rollout));
    Eigen::MatrixXf x(static_cast<Eigen::Index>(input_size), 1);
    std::deque<double> returns;
    std::deque<bool> successes;
    int episodes = 0;
    auto obs = env.reset(seed_dist_(rng_));
    double ep_return = 0.0;
    std::int64_t done_steps = 0;
    while (done_steps < steps) {
      const auto chunk = static_cast<std::size_t>(
          std::min<std::int64_t>(cfg_.n_rollout, steps - done_steps));
      if (chunk != buf.capacity()) buf = RolloutBuffer(input_size, chunk);
      buf.clear();
      while (!buf.full()) {
        obs.template write_input<float>(std::span<float>(x.data(), input_size), env.target_scale());
        const auto out = net_.forward(x);
        const auto a = sample_action(out.logits.col(0), rng_);
        const auto r = env.step(a.index);
        buf.add(x.col(0), a.index, a.log_prob, r.reward, out.values(0), r.done);
        ep_return += r.reward;
        if (r.done) {
          returns.push_back(ep_return);
          successes.push_back(r.outcome == Outcome::kGoal);
          if (returns.size() > kWindow) {
            returns.pop_front();
            successes.pop_front();
          }
          ++episodes;
          ep_return = 0.0;
          obs = env.reset(seed_dist_(rng_));
        } else {
          obs = std::move(r.observation);
        }
      }
      double bootstrap = 0.0;
      if (!buf.dones.back()) {
        obs.template write_input<float>(std::span<float>(x.data(), input_size), env.target_scale());
        bootstrap = net_.forward(x).values(0);
      }
      compute_gae(buf, cfg_.gamma, cfg_.lambda, bootstrap);
      CurveRow row;
      row.loss = ppo_update(net_, opt_, buf, cfg_, rng_);
      done_steps += static_cast<std::int64_t>(chunk);
      timestep_ += static_cast<std::int64_t>(chunk);
      row.timestep = timestep_;
      row.stage = stage;
      row.episodes = episodes;
      if (!returns.empty()) {
        row.mean_reward = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
        row.success_rate = static_cast<double>(std::count(successes.begin(), successes.end(), true)) /
                           static_cast<double>(successes.size());
      }
      if (on_update) on_update(row);
    }
  }

  std::int64_t timestep() const { return timestep_; }
  void set_timestep(std::int64_t t) { timestep_ = t; }
  Adam<float>& optimizer() { return opt_; }
  const Adam<float>& optimizer() const { return opt_; }
  std::mt19937_64& rng() { return rng_; }
  const PpoConfig& config() const { return cfg_; }
  Net& net() { return net_; }

 private:
  Net& net_;
  PpoConfig cfg_;
  std::mt19937_64 rng_;
  std::uniform_int_distribution<std::uint64_t> seed_dist_;
  Adam<float> opt_;
  std::int64_t timestep_ = 0;
};

}  // namespace trajocc
