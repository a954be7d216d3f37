#include "shrinkhs/eb.hpp"
#include "shrinkhs/netsim.hpp"
#include "shrinkhs/specfn.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace shrinkhs;

TEST_CASE("gamma hyperparameters from moments") {
  const double e2 = std::exp(2.0);
  const auto est = eb::gamma_hyper_from_moments({1.0, e2}, {0.0, 2.0});
  const double a = 0.5 / (std::log(1.0 + e2) - 1.0 - std::numbers::ln2);
  CHECK(est.shape == doctest::Approx(a).epsilon(1e-14));
  CHECK(est.shape == doctest::Approx(1.1527).epsilon(1e-4));
  CHECK(est.rate == doctest::Approx(a * 2.0 / (1.0 + e2)).epsilon(1e-14));
  CHECK(est.rate == doctest::Approx(0.2748).epsilon(1e-3));
  CHECK_FALSE(est.clamped);
  // prior mean equals the empirical mean of E[tau^-2]
  CHECK(est.shape / est.rate == doctest::Approx((1.0 + e2) / 2.0).epsilon(1e-12));
}

TEST_CASE("identical moments hit the degenerate branch") {
  const auto est = eb::gamma_hyper_from_moments({2.0, 2.0, 2.0}, {std::log(2.0), std::log(2.0), std::log(2.0)});
  CHECK(est.clamped);
  CHECK(est.shape == eb::kHyperMax);
  const auto single = eb::gamma_hyper_from_moments({2.0}, {0.1});
  CHECK(single.clamped);
  CHECK(single.shape == eb::kHyperMax);
  CHECK_THROWS_AS(eb::gamma_hyper_from_moments({}, {}), InvalidInput);
}

TEST_CASE("rescaling b* leaves the shape and rescales the rate") {
  // Moments as they come from Gamma(a*, b*) factors.
  const std::vector<double> as{2.0, 3.5, 1.2, 7.0};
  const std::vector<double> bs{0.5, 4.0, 0.9, 2.2};
  auto moments = [&](double c) {
    std::vector<double> m, l;
    for (std::size_t i = 0; i < as.size(); ++i) {
      m.push_back(as[i] / (c * bs[i]));
      l.push_back(specfn::digamma(as[i]) - std::log(c * bs[i]));
    }
    return eb::gamma_hyper_from_moments(m, l);
  };
  const auto base = moments(1.0);
  const auto scaled = moments(3.0);
  CHECK(scaled.shape == doctest::Approx(base.shape).epsilon(1e-12));
  CHECK(scaled.rate == doctest::Approx(3.0 * base.rate).epsilon(1e-12));
}

namespace {

RegressionTask tiny_task(int s, int groups) {
  RegressionTask t;
  t.x = Matrix::Identity(s, s);
  t.y = Vector::Ones(s);
  for (int j = 0; j < s; ++j) t.groups.push_back(1 + j % groups);
  return t;
}

}  // namespace

TEST_CASE("pooled variance update") {
  const auto t = tiny_task(1, 1);
  Hyperparams h = Hyperparams::initial(1, Variant::kPInc2);
  std::vector<vb::PreparedTask> prep;
  prep.emplace_back(t, 1);
  auto st = vb::init_state(t, h);
  st.sigma_rate = st.sigma_shape;
  st.e_inv_lambda_sq.setOnes();
  st.beta_mean << 0.0;
  st.beta_var << 0.04;
  CHECK(eb::eb_update_pinc2({st}, prep, Vector::Constant(1, 0.5))[0] == doctest::Approx(0.04));

  prep.emplace_back(t, 1);
  auto st2 = st;
  st.beta_var << 0.02;
  st2.beta_var << 0.06;
  CHECK(eb::eb_update_pinc2({st, st2}, prep, Vector::Constant(1, 0.5))[0] == doctest::Approx(0.04));

  // label 2 unused: previous value kept
  Hyperparams h2 = Hyperparams::initial(2, Variant::kPInc2);
  std::vector<vb::PreparedTask> prep2;
  prep2.emplace_back(t, 2);
  auto st3 = vb::init_state(t, h2);
  Vector previous(2);
  previous << 0.3, 0.7;
  CHECK(eb::eb_update_pinc2({st3}, prep2, previous)[1] == 0.7);
}

TEST_CASE("pinc update skips tasks without the group and matches the closed form") {
  const auto t1 = tiny_task(2, 1);  // group 1 only
  const auto t2 = tiny_task(4, 2);
  const auto t3 = tiny_task(3, 2);
  Hyperparams h = Hyperparams::initial(2, Variant::kPInc);
  std::vector<vb::PreparedTask> prep;
  prep.emplace_back(t1, 2);
  prep.emplace_back(t2, 2);
  prep.emplace_back(t3, 2);
  std::vector<VariationalState> st{vb::init_state(t1, h), vb::init_state(t2, h), vb::init_state(t3, h)};
  st[0].tau_rate << 0.7, 0.9;
  st[1].tau_rate << 1.3, 0.2;
  st[2].tau_rate << 2.1, 0.5;
  const auto up = eb::eb_update_pinc(st, prep, h);
  std::vector<double> m, l;
  for (int i = 1; i < 3; ++i) {
    m.push_back(st[i].tau_shape[1] / st[i].tau_rate[1]);
    l.push_back(specfn::digamma(st[i].tau_shape[1]) - std::log(st[i].tau_rate[1]));
  }
  const auto direct = eb::gamma_hyper_from_moments(m, l);
  CHECK(up.shape[1] == doctest::Approx(direct.shape).epsilon(1e-14));
  CHECK(up.rate[1] == doctest::Approx(direct.rate).epsilon(1e-14));
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += st[i].tau_shape[0] / st[i].tau_rate[0];
  CHECK(up.shape[0] / up.rate[0] == doctest::Approx(s / 3.0).epsilon(1e-12));
}

TEST_CASE("run: single PINC task warns") {
  const auto data = netsim::make_sparse_regressions(1, 20, 5, 2, 2.0, 3);
  const auto r = eb::run(data.tasks, Hyperparams::initial(1, Variant::kPInc));
  CHECK_FALSE(r.trace.warnings.empty());
}

TEST_CASE("run: traces, convergence and E-step monotonicity") {
  const auto data = netsim::make_sparse_regressions(8, 30, 10, 2, 2.0, 4);
  for (auto variant : {Variant::kPInc, Variant::kPInc2}) {
    CAPTURE(to_string(variant));
    const Hyperparams h0 = Hyperparams::initial(1, variant);
    eb::RunOptions opts;
    opts.fit.max_iter = 300;
    const auto r = eb::run(data.tasks, h0, opts);
    CHECK(r.trace.records.size() == static_cast<std::size_t>(r.iterations));
    CHECK(r.summaries.size() == 8);
    CHECK(r.hyper.error_shape == h0.error_shape);
    CHECK(r.hyper.error_rate == h0.error_rate);
    if (r.converged) CHECK(r.trace.records.back().max_delta < opts.fit.tol);

    // With the final hyperparameters frozen, further sweeps never lower a bound.
    std::vector<vb::PreparedTask> prep;
    for (const auto& t : data.tasks) prep.emplace_back(t, 1);
    for (std::size_t i = 0; i < data.tasks.size(); ++i) {
      auto st = r.states[i];
      double before = vb::elbo(st, prep[i], r.hyper);
      for (int k = 0; k < 5; ++k) {
        vb::sweep(st, prep[i], r.hyper);
        CHECK(st.elbo >= before - 1e-8);
        before = st.elbo;
      }
    }
  }
}

TEST_CASE("run: PINC2 total bound is non-decreasing across outer iterations") {
  const auto data = netsim::make_sparse_regressions(6, 25, 12, 2, 1.5, 5);
  eb::RunOptions opts;
  opts.fit.max_iter = 100;
  const auto r = eb::run(data.tasks, Hyperparams::initial(1, Variant::kPInc2), opts);
  for (std::size_t k = 2; k < r.trace.records.size(); ++k)
    CHECK(r.trace.records[k].total_elbo >= r.trace.records[k - 1].total_elbo - 1e-8);
}

TEST_CASE("run: thread count does not change results") {
  const auto data = netsim::make_sparse_regressions(7, 20, 6, 2, 2.0, 6);
  eb::RunOptions one, four;
  one.fit.max_iter = four.fit.max_iter = 50;
  four.threads = 4;
  const auto a = eb::run(data.tasks, Hyperparams::initial(1, Variant::kPInc), one);
  const auto b = eb::run(data.tasks, Hyperparams::initial(1, Variant::kPInc), four);
  CHECK(a.hyper == b.hyper);
  for (std::size_t i = 0; i < a.summaries.size(); ++i) CHECK(a.summaries[i] == b.summaries[i]);
}

TEST_CASE("run rejects bad input") {
  CHECK_THROWS_AS(eb::run({}, Hyperparams::initial(1, Variant::kPInc)), InvalidInput);
  auto data = netsim::make_sparse_regressions(2, 10, 3, 1, 1.0, 7);
  data.tasks[1].groups[0] = 3;
  CHECK_THROWS_AS(eb::run(data.tasks, Hyperparams::initial(1, Variant::kPInc)), InvalidInput);
}
