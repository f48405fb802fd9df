#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "epo/errors.hpp"
#include "epo/nn/adam.hpp"
#include "epo/nn/checkpoint.hpp"
#include "epo/nn/gaussian_policy.hpp"
#include "epo/nn/mlp.hpp"
#include "epo/rng.hpp"

using namespace epo;
using namespace epo::nn;

namespace {

Mlp random_net(std::vector<int> sizes, Rng& rng, double scale = 0.8) {
  Mlp net(std::move(sizes));
  std::normal_distribution<double> n(0.0, scale);
  ParamVector p(static_cast<Eigen::Index>(net.parameter_count()));
  for (auto& v : p) v = n(rng);
  net.unflatten(p);
  return net;
}

double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

}  // namespace

TEST_CASE("zero network gives zero output") {
  Mlp net({3, 5, 2});
  net.unflatten(ParamVector::Zero(static_cast<Eigen::Index>(net.parameter_count())));
  Eigen::VectorXd x(3);
  x << 0.3, -1.0, 7.0;
  CHECK(net.forward(x).isZero(0.0));
}

TEST_CASE("single identity layer passes input through") {
  Mlp net({1, 1});
  net.weights(0)(0, 0) = 1.0;
  net.biases(0)(0) = 0.0;
  CHECK(net.forward(Eigen::VectorXd::Constant(1, 0.3))(0) == 0.3);
}

TEST_CASE("2-2-1 network matches a hand evaluation") {
  Mlp net({2, 2, 1});
  net.weights(0) << 0.5, -0.25, 1.5, 0.75;
  net.biases(0) << 0.1, -0.2;
  net.weights(1) << 2.0, -1.0;
  net.biases(1) << 0.3;
  Eigen::VectorXd x(2);
  x << 0.4, -0.6;
  const double h1 = std::tanh(0.5 * 0.4 - 0.25 * -0.6 + 0.1);
  const double h2 = std::tanh(1.5 * 0.4 + 0.75 * -0.6 - 0.2);
  CHECK(net.forward(x)(0) == doctest::Approx(2.0 * h1 - h2 + 0.3).epsilon(1e-12));
}

TEST_CASE("forward rejects wrong input size") {
  Mlp net({2, 3, 1});
  CHECK_THROWS_AS(net.forward(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("batched forward agrees with per-sample forward") {
  Rng rng(3);
  Mlp net = random_net({2, 16, 16, 3}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 9);
  const Eigen::MatrixXd y = net.forward_batch(x);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    CHECK((y.col(i) - net.forward(x.col(i))).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("backward: zero upstream, linearity, finite differences") {
  Rng rng(11);
  Mlp net = random_net({3, 7, 5, 1}, rng);
  Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 1.0);

  CHECK(net.backward(x, Eigen::VectorXd::Zero(1)).isZero(0.0));
  CHECK(rel_error(net.backward(x, 2.0 * u), 2.0 * net.backward(x, u)) < 1e-15);

  const ParamVector p = net.flatten();
  const ParamVector g = net.backward(x, u);
  ParamVector fd(p.size());
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    ParamVector q = p;
    q(i) += h;
    net.unflatten(q);
    const double up = net.forward(x)(0);
    q(i) -= 2 * h;
    net.unflatten(q);
    const double down = net.forward(x)(0);
    fd(i) = (up - down) / (2 * h);
  }
  net.unflatten(p);
  CHECK(rel_error(g, fd) <= 1e-5);
}

TEST_CASE("batched backward sums per-sample gradients") {
  Rng rng(5);
  Mlp net = random_net({2, 6, 2}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 4);
  Eigen::MatrixXd up = Eigen::MatrixXd::Random(2, 4);
  ParamVector sum = ParamVector::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  for (Eigen::Index i = 0; i < 4; ++i) sum += net.backward(x.col(i), up.col(i));
  CHECK(rel_error(net.backward(net.forward_cached(x), up), sum) < 1e-13);
}

TEST_CASE("flatten and unflatten round trip exactly") {
  Rng rng(1);
  Mlp net = random_net({4, 8, 3}, rng);
  const ParamVector p = net.flatten();
  Mlp other({4, 8, 3});
  other.unflatten(p);
  CHECK(other.flatten() == p);
  CHECK_THROWS_AS(other.unflatten(ParamVector::Zero(p.size() - 1)), std::invalid_argument);
}

TEST_CASE("orthogonal init scales rows and zeroes biases") {
  Rng rng(2);
  Mlp net(make_layer_sizes(2, 2, 16, 1));
  net.init_orthogonal(rng, std::sqrt(2.0), 0.01);
  const Eigen::MatrixXd& w1 = net.weights(1);
  CHECK((w1 * w1.transpose() - 2.0 * Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(net.biases(0).isZero(0.0));
  CHECK(net.weights(2).norm() == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("adam: zero gradient, step count, sign steps, non-finite") {
  ParamVector p = ParamVector::Constant(3, 1.0);
  Adam adam(3, AdamConfig{1e-3});
  adam.step(p, ParamVector::Zero(3));
  CHECK(p == ParamVector::Constant(3, 1.0));

  ParamVector g(3);
  g << 0.5, -2.0, 1e-3;
  for (int k = 0; k < 200; ++k) {
    const ParamVector before = p;
    adam.step(p, g);
    if (k >= 50) {
      for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK((p(i) - before(i)) == doctest::Approx(-1e-3 * (g(i) > 0 ? 1.0 : -1.0)).epsilon(1e-3));
      }
    }
  }
  CHECK(adam.state().step == 201);

  ParamVector bad = g;
  bad(1) = std::nan("");
  const ParamVector kept = p;
  CHECK_THROWS_AS(adam.step(p, bad), NumericalError);
  CHECK(p == kept);
}

namespace {

GaussianPolicy make_test_policy(Rng& rng, double lo, double hi, double log_std) {
  Mlp net = random_net({2, 8, 1}, rng, 0.5);
  return GaussianPolicy(std::move(net), {ActionInterval{lo, hi}}, log_std);
}

// Midpoint rule over the squashed action interval.
double integrate_density(const GaussianPolicy& p, const Eigen::VectorXd& s, int n) {
  const auto& iv = p.intervals()[0];
  const double h = iv.width() / n;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = iv.lo + (i + 0.5) * h;
    total += std::exp(p.log_prob(s, Eigen::VectorXd::Constant(1, a))) * h;
  }
  return total;
}

}  // namespace

TEST_CASE("policy density integrates to one") {
  Rng rng(17);
  std::uniform_real_distribution<double> ls(-1.2, 0.3);
  for (int trial = 0; trial < 10; ++trial) {
    GaussianPolicy p = make_test_policy(rng, trial % 2 ? 0.0 : -1.5, trial % 2 ? 2.0 * M_PI : 1.5, ls(rng));
    const Eigen::VectorXd s = Eigen::VectorXd::Random(2);
    CHECK(integrate_density(p, s, 10000) == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("samples stay inside the interval with finite log-probabilities") {
  Rng rng(23);
  GaussianPolicy p = make_test_policy(rng, 0.0, 2.0 * M_PI, 1.0);
  const Eigen::VectorXd s = Eigen::VectorXd::Random(2);
  for (int i = 0; i < 20000; ++i) {
    const PolicySample x = p.sample(s, rng);
    CHECK(x.action(0) > 0.0);
    CHECK(x.action(0) < 2.0 * M_PI);
    CHECK(std::isfinite(x.log_prob));
    // Saturated draws are clamped inward, so only unsaturated ones invert exactly.
    if (std::abs(x.pre_squash(0)) < 5.0) {
      CHECK(x.log_prob == doctest::Approx(p.log_prob(s, x.action)).epsilon(1e-6));
    }
  }
}

TEST_CASE("zero-mean policy samples are symmetric about the midpoint") {
  Mlp net({2, 4, 1});
  net.unflatten(ParamVector::Zero(static_cast<Eigen::Index>(net.parameter_count())));
  GaussianPolicy p(std::move(net), {ActionInterval{-1.0, 3.0}}, -0.5);
  Rng rng(99);
  const Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = p.sample(s, rng).action(0);
    sum += a;
    sq += a * a;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("tiny std gives the squashed mean") {
  Rng rng(4);
  GaussianPolicy p = make_test_policy(rng, -2.0, 2.0, -30.0);
  const Eigen::VectorXd s = Eigen::VectorXd::Random(2);
  CHECK(p.sample(s, rng).action(0) == doctest::Approx(p.greedy_action(s)(0)).epsilon(1e-12));
}

TEST_CASE("zero-mean narrow policy peaks at the squashed mean, wider std lowers the peak") {
  Mlp net({2, 4, 1});
  net.unflatten(ParamVector::Zero(static_cast<Eigen::Index>(net.parameter_count())));
  GaussianPolicy p(std::move(net), {ActionInterval{0.0, 1.0}}, -0.5);
  const Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
  const Eigen::VectorXd mode = p.greedy_action(s);
  const double peak = p.log_prob(s, mode);
  for (double a = 0.01; a < 1.0; a += 0.01) {
    CHECK(p.log_prob(s, Eigen::VectorXd::Constant(1, a)) <= peak + 1e-12);
  }
  p.set_log_std(Eigen::VectorXd::Constant(1, -0.5 + std::log(2.0)));
  CHECK(p.log_prob(s, mode) < peak);
}

TEST_CASE("boundary actions get finite log-probabilities") {
  Rng rng(8);
  GaussianPolicy p = make_test_policy(rng, 0.0, 1.0, -0.5);
  const Eigen::VectorXd s = Eigen::VectorXd::Random(2);
  CHECK(std::isfinite(p.log_prob(s, Eigen::VectorXd::Constant(1, 0.0))));
  CHECK(std::isfinite(p.log_prob(s, Eigen::VectorXd::Constant(1, 1.0))));
}

TEST_CASE("log-prob gradient matches finite differences") {
  Rng rng(31);
  GaussianPolicy p = make_test_policy(rng, 0.0, 2.0 * M_PI, -0.3);
  const Eigen::MatrixXd states = Eigen::MatrixXd::Random(2, 5);
  const Eigen::MatrixXd pre = Eigen::MatrixXd::Random(1, 5);
  const Eigen::VectorXd w = Eigen::VectorXd::Random(5);
  auto objective = [&] { return w.dot(p.log_prob_batch(states, pre).log_probs); };

  const ParamVector theta = p.flatten();
  const ParamVector g = p.log_prob_gradient(p.log_prob_batch(states, pre), pre, w);
  ParamVector fd(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    ParamVector q = theta;
    q(i) += 1e-5;
    p.unflatten(q);
    const double up = objective();
    q(i) -= 2e-5;
    p.unflatten(q);
    fd(i) = (up - objective()) / 2e-5;
  }
  p.unflatten(theta);
  CHECK(rel_error(g, fd) <= 1e-5);
}

TEST_CASE("checkpoint round trip and architecture mismatch") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "epo_test_ckpt";
  fs::create_directories(dir);
  Rng rng(12);
  GaussianPolicy p = make_test_policy(rng, 0.0, 1.0, -0.7);
  p.set_log_std(Eigen::VectorXd::Constant(1, -0.123));
  save_policy(dir / "p.ckpt", p);

  Mlp blank({2, 8, 1});
  GaussianPolicy like(blank, {ActionInterval{0.0, 1.0}});
  const GaussianPolicy loaded = load_policy(dir / "p.ckpt", like);
  CHECK(loaded.flatten() == p.flatten());

  GaussianPolicy wrong(Mlp({2, 9, 1}), {ActionInterval{0.0, 1.0}});
  try {
    load_policy(dir / "p.ckpt", wrong);
    FAIL("expected a checkpoint error");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("layer_sizes") != std::string::npos);
  }

  save_network(dir / "n.ckpt", p.mean_net());
  CHECK(load_network(dir / "n.ckpt").flatten() == p.mean_net().flatten());

  {
    std::ofstream junk(dir / "junk.ckpt", std::ios::binary);
    junk << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_network(dir / "junk.ckpt"), CheckpointError);
  fs::remove_all(dir);
}
