#include "shrinkhs/gibbs.hpp"
#include "shrinkhs/netsim.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace shrinkhs;

namespace {

Hyperparams unit_hyper() {
  Hyperparams h = Hyperparams::initial(1, Variant::kPInc);
  h.group_shape.setConstant(2.0);
  h.group_rate.setConstant(2.0);
  h.error_shape = h.error_rate = 2.0;
  return h;
}

}  // namespace

TEST_CASE("effective sample size") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  const int n = 20000;
  Vector iid(n), ar(n);
  double prev = 0.0;
  for (int i = 0; i < n; ++i) {
    iid[i] = z(rng);
    prev = 0.9 * prev + std::sqrt(1 - 0.81) * z(rng);
    ar[i] = prev;
  }
  CHECK(gibbs::effective_sample_size(iid) == doctest::Approx(n).epsilon(0.1));
  CHECK(gibbs::effective_sample_size(ar) == doctest::Approx(n * 0.1 / 1.9).epsilon(0.25));
}

TEST_CASE("no data: the posterior is the prior") {
  RegressionTask t;
  t.x = Matrix::Zero(5, 1);
  t.y = Vector::Ones(5);
  t.groups = {1};
  gibbs::McmcOptions o;
  o.n_iter = 60000;
  o.n_burnin = 1000;
  o.seed = 2;
  const auto s = gibbs::gibbs_fit(t, unit_hyper(), o);
  CHECK(std::abs(s.means[0]) < 4.0 * s.sds[0] / std::sqrt(s.ess[0]));
}

TEST_CASE("frozen scales: posterior mean is the ridge solution") {
  const auto data = netsim::make_sparse_regressions(1, 15, 4, 2, 1.0, 3);
  const auto& t = data.tasks[0];
  gibbs::McmcOptions o;
  o.n_iter = 30000;
  o.n_burnin = 1000;
  o.seed = 4;
  o.freeze_local_scales = true;
  o.freeze_global_scales = true;
  const auto s = gibbs::gibbs_fit(t, unit_hyper(), o);
  Matrix a = t.x.transpose() * t.x;
  a.diagonal().array() += 1.0;
  const Vector ridge = a.ldlt().solve(t.x.transpose() * t.y);
  for (int j = 0; j < 4; ++j) {
    CAPTURE(j);
    CHECK(std::abs(s.means[j] - ridge[j]) < 4.0 * s.sds[j] / std::sqrt(s.ess[j]));
  }
}

TEST_CASE("wide-design draws match the closed form") {
  const auto data = netsim::make_sparse_regressions(1, 3, 14, 1, 1.0, 5);
  const auto& t = data.tasks[0];
  gibbs::McmcOptions o;
  o.n_iter = 30000;
  o.n_burnin = 1000;
  o.seed = 6;
  o.freeze_local_scales = true;
  o.freeze_global_scales = true;
  const auto s = gibbs::gibbs_fit(t, unit_hyper(), o);
  Matrix a = t.x.transpose() * t.x;
  a.diagonal().array() += 1.0;
  const Vector ridge = a.ldlt().solve(t.x.transpose() * t.y);
  for (int j = 0; j < 14; ++j) {
    CAPTURE(j);
    CHECK(std::abs(s.means[j] - ridge[j]) < 4.0 * s.sds[j] / std::sqrt(s.ess[j]));
  }
}

TEST_CASE("two seeds agree within Monte Carlo error") {
  const auto data = netsim::make_sparse_regressions(1, 30, 10, 2, 2.0, 7);
  const auto& t = data.tasks[0];
  Hyperparams h = Hyperparams::initial(1, Variant::kPInc);
  h.group_shape.setConstant(1.0);
  h.group_rate.setConstant(0.5);
  gibbs::McmcOptions o;
  o.n_iter = 40000;
  o.n_burnin = 20000;
  o.seed = 8;
  const auto a = gibbs::gibbs_fit(t, h, o);
  o.seed = 9;
  const auto b = gibbs::gibbs_fit(t, h, o);
  for (int j = 0; j < 10; ++j) {
    CAPTURE(j);
    const double se = std::sqrt(a.sds[j] * a.sds[j] / a.ess[j] + b.sds[j] * b.sds[j] / b.ess[j]);
    CHECK(std::abs(a.means[j] - b.means[j]) < 3.0 * se);
  }
  CHECK(a.kept == 20000);
  CHECK((a.sds.array() >= 0.0).all());
}

TEST_CASE("sampler options and determinism") {
  const auto data = netsim::make_sparse_regressions(1, 10, 3, 1, 1.0, 10);
  gibbs::McmcOptions o;
  o.n_iter = 200;
  o.n_burnin = 50;
  o.thin = 3;
  o.keep_draws = true;
  const auto a = gibbs::gibbs_fit(data.tasks[0], unit_hyper(), o);
  const auto b = gibbs::gibbs_fit(data.tasks[0], unit_hyper(), o);
  CHECK(a.kept == 50);
  CHECK(a.draws.rows() == 50);
  CHECK(a.means == b.means);
  o.n_burnin = 200;
  CHECK_THROWS_AS(gibbs::gibbs_fit(data.tasks[0], unit_hyper(), o), InvalidInput);
}

TEST_CASE("pooled variant uses the fixed scales") {
  const auto data = netsim::make_sparse_regressions(1, 10, 3, 1, 1.0, 11);
  Hyperparams h = Hyperparams::initial(1, Variant::kPInc2);
  h.pooled_tau_sq[0] = 0.25;
  gibbs::McmcOptions o;
  gibbs::Sampler s(data.tasks[0], h, o);
  CHECK(s.inv_tau_sq()[0] == 4.0);
  for (int k = 0; k < 20; ++k) s.step();
  CHECK(s.inv_tau_sq()[0] == 4.0);
}
