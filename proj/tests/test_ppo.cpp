#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "trajocc/ppo.hpp"

using namespace trajocc;

namespace {

// One-step episodes; reward 1 only for the target action.
struct BanditEnv {
  int target = 7;
  Observation obs() const {
    Observation o;
    o.n_stack = 1;
    o.frame_len = 1;
    o.block = {0.5};
    return o;
  }
  Observation reset(std::uint64_t) { return obs(); }
  StepResult step(int a) {
    StepResult r;
    r.observation = obs();
    r.reward = a == target ? 1.0 : 0.0;
    r.done = true;
    r.outcome = a == target ? Outcome::kGoal : Outcome::kTimeout;
    return r;
  }
  std::size_t input_size() const { return 5; }
  double target_scale() const { return 1.0; }
};

NetworkSpec bandit_spec() {
  NetworkSpec s;
  s.hidden = {32, 32};
  s.n_actions = 21;
  s.frame_len = 1;
  s.n_stack = 1;
  return s;
}

std::vector<double> probs_of(const PolicyValueNet<float>& net, const BanditEnv& env) {
  Eigen::MatrixXf x(5, 1);
  env.obs().write_input<float>(std::span<float>(x.data(), 5));
  return softmax(net.forward(x).logits.col(0));
}

// Dyadic values in [-4, 4] with 3 fractional bits.
template <typename Rng>
double dyadic(Rng& rng) {
  return static_cast<int>(rng() % 65) / 8.0 - 4.0;
}

}  // namespace

TEST(Softmax, ProbabilityVectorAndShiftInvariance) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 5);
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd z(1 + rng() % 120);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n(rng);
    const auto p = softmax(z);
    double sum = 0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    const auto q = softmax((z.array() + 37.5).matrix());
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
    const auto lp = log_softmax(z);
    EXPECT_LE(entropy(lp), std::log(static_cast<double>(z.size())) + 1e-12);
  }
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(105, 0.3);
  EXPECT_NEAR(entropy(log_softmax(flat)), std::log(105.0), 1e-12);
}

TEST(Softmax, NonFiniteLogitsThrow) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
  z(2) = std::numeric_limits<double>::quiet_NaN();
  std::mt19937_64 rng(2);
  EXPECT_THROW(sample_action(z, rng), NumericError);
  z(2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax(z), NumericError);
}

TEST(SampleAction, DominantLogit) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(105);
  z(42) = 50;
  std::mt19937_64 rng(3);
  for (int k = 0; k < 1000; ++k) {
    const auto a = sample_action(z, rng);
    EXPECT_EQ(a.index, 42);
    EXPECT_NEAR(a.log_prob, 0.0, 1e-18 + 105 * std::exp(-50.0));
  }
  EXPECT_EQ(greedy_action(z), 42);
}

TEST(SampleAction, UniformWithinThreeSigma) {
  const int n = 10, draws = 100000;
  Eigen::VectorXd z = Eigen::VectorXd::Constant(n, -1.25);
  std::mt19937_64 rng(4);
  std::vector<int> c(n, 0);
  for (int k = 0; k < draws; ++k) {
    const auto a = sample_action(z, rng);
    ++c[a.index];
    ASSERT_NEAR(std::exp(a.log_prob), 0.1, 1e-15);
  }
  const double mean = draws / double(n), sd = std::sqrt(draws * 0.1 * 0.9);
  for (int x : c) EXPECT_LT(std::abs(x - mean), 3 * sd);
}

TEST(SampleAction, LogProbMatchesSoftmax) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 2);
  for (int k = 0; k < 500; ++k) {
    Eigen::VectorXd z(7);
    for (int i = 0; i < 7; ++i) z(i) = nd(rng);
    const auto a = sample_action(z, rng);
    EXPECT_NEAR(std::exp(a.log_prob), softmax(z)[a.index], 1e-12);
  }
}

TEST(Gae, MyopicAndOneStepLimits) {
  const std::vector<double> r = {1, -2, 0.5, 3}, v = {0.25, 1, -0.5, 2};
  const std::vector<std::uint8_t> d = {0, 1, 0, 0};
  const auto g0 = compute_gae(r, v, d, 0.0, 0.95, 7.0);
  for (std::size_t t = 0; t < r.size(); ++t) EXPECT_EQ(g0.advantages[t], r[t] - v[t]);
  const auto l0 = compute_gae(r, v, d, 0.9, 0.0, 7.0);
  const std::vector<double> delta = {1 + 0.9 * 1 - 0.25, -2 - 1, 0.5 + 0.9 * 2 + 0.5, 3 + 0.9 * 7 - 2};
  for (std::size_t t = 0; t < r.size(); ++t) {
    EXPECT_DOUBLE_EQ(l0.advantages[t], delta[t]);
    EXPECT_EQ(l0.returns[t], l0.advantages[t] + v[t]);
  }
}

TEST(Gae, ExactAgainstDirectSumOnDyadicBuffers) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    std::vector<bool> db(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = dyadic(rng);
      v[t] = dyadic(rng);
      d[t] = rng() % 4 == 0;
      db[t] = d[t];
    }
    const double boot = dyadic(rng);
    const auto got = compute_gae(r, v, d, 0.5, 0.5, boot);
    const auto want = oracle::gae_direct(r, v, db, 0.5, 0.5, boot);
    for (std::size_t t = 0; t < n; ++t) EXPECT_EQ(got.advantages[t], want[t]) << k << ' ' << t;
  }
}

TEST(Gae, MatchesDirectSumAtNinety) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0, 1);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng() % 64;
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    std::vector<bool> db(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = nd(rng);
      v[t] = nd(rng);
      d[t] = rng() % 10 == 0;
      db[t] = d[t];
    }
    const auto got = compute_gae(r, v, d, 0.9, 0.9, 0.3);
    const auto want = oracle::gae_direct(r, v, db, 0.9, 0.9, 0.3);
    for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(got.advantages[t], want[t], 1e-12);
  }
}

TEST(Gae, RewardToGoWithUnitDiscount) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 1 + rng() % 10;
    std::vector<double> r(n), v(n, 0.0);
    std::vector<std::uint8_t> d(n, 0);
    for (auto& x : r) x = dyadic(rng);
    d[n - 1] = 1;
    const auto got = compute_gae(r, v, d, 1.0, 1.0, 123.0);
    double togo = 0;
    for (std::size_t t = n; t-- > 0;) {
      togo += r[t];
      EXPECT_EQ(got.advantages[t], togo);
      EXPECT_EQ(got.returns[t], togo);
    }
  }
}

TEST(Gae, BufferMustBeFull) {
  RolloutBuffer buf(3, 4);
  buf.add(Eigen::Vector3f::Zero(), 0, 0.0, 1.0, 0.0, false);
  EXPECT_THROW(compute_gae(buf, 0.99, 0.95, 0.0), UsageError);
  for (int i = 0; i < 3; ++i) buf.add(Eigen::Vector3f::Zero(), 0, 0.0, 1.0, 0.0, false);
  EXPECT_THROW(buf.add(Eigen::Vector3f::Zero(), 0, 0.0, 1.0, 0.0, false), UsageError);
  EXPECT_NO_THROW(compute_gae(buf, 0.99, 0.95, 0.0));
}

TEST(PpoLoss, ClippedRatioAndZeroAdvantage) {
  NetworkSpec spec = bandit_spec();
  PolicyValueNet<double> net(spec);
  std::mt19937_64 rng(9);
  net.init(rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(net.input_size(), 1);
  const auto logp = log_softmax(net.forward(x).logits.col(0));
  PpoConfig cfg;
  cfg.ent_coef = 0;
  cfg.vf_coef = 0;
  const std::vector<int> a = {3};
  const std::vector<double> old = {logp[3] - std::log(1.5)}, adv = {1.0}, ret = {0.0};
  PolicyValueNet<double>::Vec g = PolicyValueNet<double>::Vec::Zero(net.num_params());
  const auto s = ppo_loss_and_grad(net, x, PpoBatch{a, old, adv, ret}, cfg, g);
  EXPECT_NEAR(s.policy_loss, -1.2, 1e-12);
  EXPECT_EQ(s.clip_fraction, 1.0);
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);

  const std::vector<double> zero = {0.0}, same = {logp[3]};
  g.setZero();
  const auto z = ppo_loss_and_grad(net, x, PpoBatch{a, same, zero, ret}, cfg, g);
  EXPECT_EQ(z.policy_loss, 0.0);
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  cfg.vf_coef = 0.5;
  g.setZero();
  ppo_loss_and_grad(net, x, PpoBatch{a, same, zero, ret}, cfg, g);
  EXPECT_GT(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PpoUpdate, ZeroLearningRateKeepsParams) {
  PolicyValueNet<float> net(bandit_spec());
  std::mt19937_64 rng(10);
  net.init(rng);
  const auto before = net.params();
  RolloutBuffer buf(5, 64);
  Eigen::VectorXf x = Eigen::VectorXf::Random(5);
  for (int i = 0; i < 64; ++i) buf.add(x, i % 21, -3.0, i % 3, 0.1, i % 5 == 0);
  compute_gae(buf, 0.99, 0.95, 0.0);
  PpoConfig cfg;
  cfg.learning_rate = 0.0;
  Adam<float> opt;
  ppo_update(net, opt, buf, cfg, rng);
  EXPECT_EQ(net.params(), before);
  cfg.learning_rate = 1e-3;
  ppo_update(net, opt, buf, cfg, rng);
  EXPECT_NE(net.params(), before);
}

TEST(PpoUpdate, ClipGradNorm) {
  Eigen::VectorXd g(2);
  g << 3, 4;
  EXPECT_EQ(clip_grad_norm(g, 10.0), 5.0);
  EXPECT_EQ(g(0), 3.0);
  clip_grad_norm(g, 0.5);
  EXPECT_NEAR(g.norm(), 0.5, 1e-6);
  g(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(clip_grad_norm(g, 1.0), NumericError);
}

TEST(PpoConfig, Validation) {
  PpoConfig c;
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.clip = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, BanditConcentrates) {
  PolicyValueNet<float> net(bandit_spec());
  std::mt19937_64 init(11);
  net.init(init);
  BanditEnv env;
  PpoConfig cfg;
  cfg.n_rollout = 256;
  PpoTrainer trainer(net, cfg, 12);
  trainer.run(env, 10000, 0);
  EXPECT_EQ(trainer.timestep(), 10000);
  EXPECT_GT(probs_of(net, env)[env.target], 0.99);
}

TEST(Trainer, StepCountAndDeterminism) {
  auto once = [](std::int64_t steps, std::vector<CurveRow>& rows) {
    PolicyValueNet<float> net(bandit_spec());
    std::mt19937_64 init(13);
    net.init(init);
    BanditEnv env;
    PpoConfig cfg;
    cfg.n_rollout = 300;
    PpoTrainer trainer(net, cfg, 14);
    trainer.run(env, steps, 0, [&](const CurveRow& r) { rows.push_back(r); });
    EXPECT_EQ(trainer.timestep(), steps);
    return net.params();
  };
  std::vector<CurveRow> a, b;
  const auto pa = once(1000, a);
  const auto pb = once(1000, b);
  EXPECT_EQ(pa, pb);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a.back().timestep, 1000);
  EXPECT_EQ(a[2].timestep, 900);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].loss.total, b[i].loss.total);
    EXPECT_EQ(a[i].mean_reward, b[i].mean_reward);
  }
}

TEST(Trainer, RejectsMismatchedEnv) {
  NetworkSpec spec = bandit_spec();
  spec.frame_len = 2;
  PolicyValueNet<float> net(spec);
  BanditEnv env;
  PpoTrainer trainer(net, PpoConfig{}, 1);
  EXPECT_THROW(trainer.run(env, 10, 0), ShapeError);
}
