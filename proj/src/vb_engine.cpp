#include "shrinkhs/vb_engine.hpp"

#include "shrinkhs/specfn.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace shrinkhs::vb {
namespace {

constexpr double kMinL = 1e-12;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
const double kLogPi = std::log(std::numbers::pi);

double tau_shape_for(double prior_shape, int count, TauShapeRule rule) {
  const double per_coef = rule == TauShapeRule::kConjugate ? 0.5 : 0.25;
  return prior_shape + per_coef * count;
}

// E[beta_t^2] under q(beta).
Vector second_moments(const VariationalState& state) {
  return state.beta_mean.array().square() + state.beta_var.array();
}

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "non-finite " << what << " (" << value << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace

PreparedTask::PreparedTask(const RegressionTask& task, int num_groups, int woodbury_ratio)
    : task_(&task), num_groups_(num_groups) {
  group_index_.reserve(task.groups.size());
  for (int g : task.groups) group_index_.push_back(g - 1);
  counts_ = group_counts(task, num_groups);
  woodbury_ = task.s() > static_cast<Eigen::Index>(woodbury_ratio) * task.n();
  if (!woodbury_) xtx_ = task.x.transpose() * task.x;
  xty_ = task.x.transpose() * task.y;
  yty_ = task.y.squaredNorm();
}

const Eigen::SelfAdjointEigenSolver<Matrix>& PreparedTask::xtx_eigen() const {
  if (woodbury_) throw std::logic_error("xtx_eigen: not available on the Woodbury path");
  if (!eigen_) eigen_.emplace(xtx_);
  return *eigen_;
}

LocalScaleMoments local_scale_moments(double l) {
  l = std::max(l, kMinL);
  LocalScaleMoments m{};
  if (l <= 1.0) {
    const double se = specfn::scaled_e1(l);
    m.log_scaled_e1 = std::log(se);
    m.l_times_mean = 1.0 / se - l;
  } else {
    const double r = specfn::scaled_e1_remainder(l);
    m.log_scaled_e1 = -std::log(l + 1.0 - r);
    m.l_times_mean = 1.0 - r;
  }
  m.mean_inv_sq = m.l_times_mean / l;
  return m;
}

VariationalState init_state(const RegressionTask& task, const Hyperparams& hyper,
                            const FitOptions& opts) {
  const int G = hyper.num_groups();
  require_valid(task, G);
  const auto counts = group_counts(task, G);
  const Eigen::Index s = task.s();

  VariationalState st;
  st.beta_mean = Vector::Zero(s);
  st.beta_var = Vector::Zero(s);  // beta_cov is formed by the first update_beta
  st.tau_shape.resize(G);
  st.tau_rate.resize(G);
  for (int g = 0; g < G; ++g) {
    if (hyper.variant == Variant::kPInc) {
      st.tau_shape[g] = tau_shape_for(hyper.group_shape[g], counts[g], opts.tau_shape);
      st.tau_rate[g] = counts[g] > 0 ? 1e-3 : hyper.group_rate[g];
    } else {
      st.tau_shape[g] = hyper.group_shape[g];
      st.tau_rate[g] = hyper.group_rate[g];
    }
  }
  st.sigma_shape = hyper.error_shape + 0.5 * static_cast<double>(task.n()) + 0.5 * s;
  st.sigma_rate = 1e-3;
  st.e_inv_lambda_sq = Vector::Ones(s);
  st.lambda_l = Vector::Ones(s);  // placeholder until the first update_lambda
  st.elbo = -std::numeric_limits<double>::infinity();
  return st;
}

Vector expected_inv_tau_sq(const VariationalState& state, const Hyperparams& hyper) {
  if (hyper.variant == Variant::kPInc2) return hyper.pooled_tau_sq.cwiseInverse();
  return state.tau_shape.cwiseQuotient(state.tau_rate);
}

Vector prior_precision(const VariationalState& state, const PreparedTask& prep,
                       const Hyperparams& hyper) {
  const Vector tau = expected_inv_tau_sq(state, hyper);
  Vector dinv(prep.s());
  for (Eigen::Index t = 0; t < prep.s(); ++t)
    dinv[t] = tau[prep.group_of(t)] * state.e_inv_lambda_sq[t];
  return dinv;
}

namespace {

struct BetaSolve {
  Vector mean;
  Vector inv_diag;  // diagonal of (X'X + D^-1)^-1
  Matrix inv;       // full inverse, only when requested
  double log_det = 0.0;
};

// X'X + D^-1 with D^-1 = c I: shares the cached eigenvectors of X'X.
BetaSolve solve_isotropic(const PreparedTask& prep, double c, bool full) {
  const auto& eig = prep.xtx_eigen();
  const Matrix& q = eig.eigenvectors();
  const Vector shifted = eig.eigenvalues().cwiseMax(0.0).array() + c;
  const Vector inv_shifted = shifted.cwiseInverse();
  BetaSolve out;
  out.mean = q * inv_shifted.cwiseProduct(q.transpose() * prep.xty());
  out.inv_diag = q.array().square().matrix() * inv_shifted;
  if (full) out.inv = q * inv_shifted.asDiagonal() * q.transpose();
  out.log_det = shifted.array().log().sum();
  return out;
}

// Inverse of a lower-triangular matrix by 2x2 block recursion; roughly a
// third of the work of solving against the identity.
Matrix lower_triangular_inverse(const Matrix& l) {
  const Eigen::Index s = l.rows();
  if (s <= 16) {
    // Column-wise forward substitution; cheaper than the generic solver here.
    Matrix out = Matrix::Zero(s, s);
    for (Eigen::Index j = 0; j < s; ++j) {
      out(j, j) = 1.0 / l(j, j);
      for (Eigen::Index i = j + 1; i < s; ++i) {
        double acc = 0.0;
        for (Eigen::Index k = j; k < i; ++k) acc += l(i, k) * out(k, j);
        out(i, j) = -acc / l(i, i);
      }
    }
    return out;
  }
  const Eigen::Index h = s / 2;
  const Matrix a_inv = lower_triangular_inverse(l.topLeftCorner(h, h));
  const Matrix c_inv = lower_triangular_inverse(l.bottomRightCorner(s - h, s - h));
  Matrix out = Matrix::Zero(s, s);
  out.topLeftCorner(h, h) = a_inv;
  out.bottomRightCorner(s - h, s - h) = c_inv;
  const Matrix cb = c_inv.triangularView<Eigen::Lower>() * l.bottomLeftCorner(s - h, h);
  out.bottomLeftCorner(s - h, h).noalias() = -(cb * a_inv.triangularView<Eigen::Lower>());
  return out;
}

BetaSolve solve_dense(const PreparedTask& prep, const Vector& dinv, bool full) {
  Matrix m = prep.xtx();
  m.diagonal() += dinv;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky of X'X + D^-1 failed");
  BetaSolve out;
  out.mean = llt.solve(prep.xty());
  const Matrix linv = lower_triangular_inverse(llt.matrixLLT());
  out.inv_diag = linv.colwise().squaredNorm().transpose();
  if (full) out.inv = linv.transpose() * linv;
  out.log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return out;
}

// (X'X + D^-1)^-1 = D^1/2 (I - V'V) D^1/2 with U = X D^1/2, V = L^-1 U and
// L L' = I + U U'.
BetaSolve solve_woodbury(const PreparedTask& prep, const Vector& dinv, bool full) {
  const auto& x = prep.task().x;
  const Vector sqrt_d = dinv.cwiseInverse().cwiseSqrt();
  const Matrix u = x * sqrt_d.asDiagonal();
  Matrix c = u * u.transpose();
  c.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky of I + X D X' failed");
  BetaSolve out;
  out.mean = sqrt_d.cwiseProduct(u.transpose() * llt.solve(prep.task().y));
  const Matrix v = llt.matrixL().solve(u);
  out.inv_diag =
      (1.0 - v.colwise().squaredNorm().transpose().array()) * sqrt_d.array().square();
  if (full) {
    out.inv = -(v.transpose() * v);
    out.inv.diagonal().array() += 1.0;
    out.inv = sqrt_d.asDiagonal() * out.inv * sqrt_d.asDiagonal();
  }
  out.log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum() + dinv.array().log().sum();
  return out;
}

}  // namespace

void update_beta(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
                 const FitOptions& opts) {
  const Eigen::Index s = prep.s();
  const Vector dinv = prior_precision(state, prep, hyper);
  if (!dinv.allFinite() || (dinv.array() <= 0.0).any())
    throw NumericalError("prior precision must be positive and finite");
  const double scale = state.sigma_rate / state.sigma_shape;  // 1 / E[sigma^-2]

  BetaSolve solve;
  if (prep.use_woodbury())
    solve = solve_woodbury(prep, dinv, opts.full_covariance);
  else if (s > 0 && (dinv.array() == dinv[0]).all())
    solve = solve_isotropic(prep, dinv[0], opts.full_covariance);
  else
    solve = solve_dense(prep, dinv, opts.full_covariance);

  state.beta_mean = std::move(solve.mean);
  state.beta_var = scale * solve.inv_diag;
  if (opts.full_covariance)
    state.beta_cov = scale * solve.inv;
  else
    state.beta_cov.resize(0, 0);
  state.log_det_cov = static_cast<double>(s) * std::log(scale) - solve.log_det;
  // tr(X'X M^-1) = tr(I - D^-1 M^-1)
  state.trace_xtx_cov = scale * (static_cast<double>(s) - dinv.dot(solve.inv_diag));
  if (!state.beta_mean.allFinite()) throw NumericalError("non-finite posterior mean");
}

void update_tau(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
                const FitOptions& opts) {
  if (hyper.variant != Variant::kPInc) return;
  const double e_sigma = state.sigma_shape / state.sigma_rate;
  const Vector m2 = second_moments(state);
  Vector quad = Vector::Zero(prep.num_groups());
  for (Eigen::Index t = 0; t < prep.s(); ++t)
    quad[prep.group_of(t)] += state.e_inv_lambda_sq[t] * m2[t];
  for (int g = 0; g < prep.num_groups(); ++g) {
    state.tau_shape[g] = tau_shape_for(hyper.group_shape[g], prep.counts()[g], opts.tau_shape);
    state.tau_rate[g] = hyper.group_rate[g] + 0.5 * e_sigma * quad[g];
  }
}

namespace {

// E[beta' D^-1 beta] and E||y - X beta||^2 under the current state.
std::pair<double, double> quadratic_forms(const VariationalState& state, const PreparedTask& prep,
                                          const Hyperparams& hyper) {
  const Vector dinv = prior_precision(state, prep, hyper);
  const double penalty = dinv.dot(second_moments(state));
  const Vector resid = prep.task().y - prep.task().x * state.beta_mean;
  const double rss = resid.squaredNorm() + state.trace_xtx_cov;
  return {penalty, rss};
}

}  // namespace

void update_sigma(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper) {
  const auto [penalty, rss] = quadratic_forms(state, prep, hyper);
  state.sigma_shape = hyper.error_shape + 0.5 * static_cast<double>(prep.n()) +
                      0.5 * static_cast<double>(prep.s());
  state.sigma_rate = hyper.error_rate + 0.5 * penalty + 0.5 * rss;
}

namespace {

// -log(pi) + log(e^l E1(l)) + l E[lambda^-2], the local-scale part of the bound.
double lambda_term(const LocalScaleMoments& m) { return -kLogPi + m.log_scaled_e1 + m.l_times_mean; }

// Also returns the summed local-scale bound terms at the new l, so a sweep
// need not evaluate E1 twice.
double update_lambda_impl(VariationalState& state, const PreparedTask& prep,
                          const Hyperparams& hyper, const FitOptions& opts) {
  if (opts.freeze_local_scales) {
    state.e_inv_lambda_sq.setOnes();
    return 0.0;
  }
  const double e_sigma = state.sigma_shape / state.sigma_rate;
  const Vector tau = expected_inv_tau_sq(state, hyper);
  const Vector m2 = second_moments(state);
  double sum = 0.0;
  for (Eigen::Index t = 0; t < prep.s(); ++t) {
    const double l = std::max(0.5 * e_sigma * tau[prep.group_of(t)] * m2[t], kMinL);
    if (!(l > 0.0) || !std::isfinite(l)) throw NumericalError("invalid local-scale parameter l");
    const auto m = local_scale_moments(l);
    state.lambda_l[t] = l;
    state.e_inv_lambda_sq[t] = m.mean_inv_sq;
    sum += lambda_term(m);
  }
  return sum;
}

ElboTerms elbo_terms_impl(const VariationalState& state, const PreparedTask& prep,
                          const Hyperparams& hyper, const FitOptions& opts,
                          const double* known_lambda);

}  // namespace

void update_lambda(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
                   const FitOptions& opts) {
  update_lambda_impl(state, prep, hyper, opts);
}

ElboTerms elbo_terms(const VariationalState& state, const PreparedTask& prep,
                     const Hyperparams& hyper, const FitOptions& opts) {
  return elbo_terms_impl(state, prep, hyper, opts, nullptr);
}

namespace {

ElboTerms elbo_terms_impl(const VariationalState& state, const PreparedTask& prep,
                          const Hyperparams& hyper, const FitOptions& opts,
                          const double* known_lambda) {
  using specfn::digamma;
  using specfn::log_gamma;
  const double n = static_cast<double>(prep.n());
  const double s = static_cast<double>(prep.s());
  const double c = hyper.error_shape, d = hyper.error_rate;
  const double cs = state.sigma_shape, ds = state.sigma_rate;
  const double e_sigma = cs / ds;
  const double e_log_sigma = digamma(cs) - std::log(ds);

  ElboTerms terms;
  terms.data = -0.5 * n * kLog2Pi;
  terms.beta = 0.5 * state.log_det_cov + 0.5 * s;

  const auto [penalty, rss] = quadratic_forms(state, prep, hyper);
  terms.sigma = c * std::log(d) - log_gamma(c) - cs * std::log(ds) + log_gamma(cs) +
                (c + 0.5 * n + 0.5 * s - cs) * e_log_sigma +
                e_sigma * (ds - d - 0.5 * penalty - 0.5 * rss);

  for (int g = 0; g < prep.num_groups(); ++g) {
    const double half_count = 0.5 * prep.counts()[g];
    if (hyper.variant == Variant::kPInc) {
      const double a = hyper.group_shape[g], b = hyper.group_rate[g];
      const double as = state.tau_shape[g], bs = state.tau_rate[g];
      const double e_tau = as / bs;
      const double e_log_tau = digamma(as) - std::log(bs);
      terms.tau += a * std::log(b) - log_gamma(a) - as * std::log(bs) + log_gamma(as) +
                   (a + half_count - as) * e_log_tau + (bs - b) * e_tau;
    } else {
      terms.tau -= half_count * std::log(hyper.pooled_tau_sq[g]);
    }
  }

  if (known_lambda) {
    terms.lambda = *known_lambda;
  } else if (!opts.freeze_local_scales) {
    for (Eigen::Index t = 0; t < prep.s(); ++t)
      terms.lambda += lambda_term(local_scale_moments(state.lambda_l[t]));
  }
  check_finite(terms.data, "ELBO data term");
  check_finite(terms.beta, "ELBO beta term (log|Sigma*|)");
  check_finite(terms.sigma, "ELBO sigma term");
  check_finite(terms.tau, "ELBO tau term");
  check_finite(terms.lambda, "ELBO lambda term");
  return terms;
}

}  // namespace

double elbo(const VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
            const FitOptions& opts) {
  return elbo_terms(state, prep, hyper, opts).total();
}

double elbo_at_fixed_point(const VariationalState& state, const PreparedTask& prep,
                           const Hyperparams& hyper) {
  using specfn::log_gamma;
  const double n = static_cast<double>(prep.n());
  const double s = static_cast<double>(prep.s());
  const double c = hyper.error_shape, d = hyper.error_rate;
  const double cs = state.sigma_shape, ds = state.sigma_rate;
  const double e_sigma = cs / ds;

  double value = -0.5 * n * kLog2Pi - s * kLogPi + 0.5 * state.log_det_cov + 0.5 * s;
  value += c * std::log(d) - log_gamma(c) - cs * std::log(ds) + log_gamma(cs);

  const Vector m2 = second_moments(state);
  Vector quad = Vector::Zero(prep.num_groups());
  for (Eigen::Index t = 0; t < prep.s(); ++t)
    quad[prep.group_of(t)] += state.e_inv_lambda_sq[t] * m2[t];
  for (int g = 0; g < prep.num_groups(); ++g) {
    const double a = hyper.group_shape[g], b = hyper.group_rate[g];
    const double as = state.tau_shape[g], bs = state.tau_rate[g];
    value += a * std::log(b) - log_gamma(a) - as * std::log(bs) + log_gamma(as);
    value += 0.5 * e_sigma * (as / bs) * quad[g];
  }
  for (Eigen::Index t = 0; t < prep.s(); ++t) {
    // log E1(l) + 1/(exp(l) E1(l))
    const auto m = local_scale_moments(state.lambda_l[t]);
    value += m.log_scaled_e1 - state.lambda_l[t] + m.l_times_mean + state.lambda_l[t];
  }
  return value;
}

void sweep(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
           const FitOptions& opts) {
  update_beta(state, prep, hyper, opts);
  update_tau(state, prep, hyper, opts);
  update_sigma(state, prep, hyper);
  const double lambda_sum = update_lambda_impl(state, prep, hyper, opts);
  state.elbo = elbo_terms_impl(state, prep, hyper, opts, &lambda_sum).total();
}

PosteriorSummary summarize(const VariationalState& state) {
  PosteriorSummary out;
  out.means = state.beta_mean;
  out.sds = state.beta_var.cwiseMax(0.0).cwiseSqrt();
  out.kappa.resize(out.means.size());
  for (Eigen::Index t = 0; t < out.means.size(); ++t) {
    out.kappa[t] = out.sds[t] > 0.0 ? std::abs(out.means[t]) / out.sds[t]
                                    : std::numeric_limits<double>::infinity();
  }
  out.elbo = state.elbo;
  return out;
}

FitResult fit_single(const RegressionTask& task, const Hyperparams& hyper,
                     const FitOptions& opts) {
  FitResult result;
  result.state = init_state(task, hyper, opts);
  const PreparedTask prep(task, hyper.num_groups(), opts.woodbury_ratio);
  double previous = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= opts.max_iter; ++k) {
    sweep(result.state, prep, hyper, opts);
    result.iterations = k;
    if (opts.track_elbo) result.elbo_trace.push_back(result.state.elbo);
    if (k >= 2 && std::abs(result.state.elbo - previous) < opts.tol) {
      result.converged = true;
      break;
    }
    previous = result.state.elbo;
  }
  result.summary = summarize(result.state);
  return result;
}

double empty_model_elbo(const Vector& y, const Hyperparams& hyper) {
  using specfn::log_gamma;
  const double n = static_cast<double>(y.size());
  const double c = hyper.error_shape, d = hyper.error_rate;
  const double cs = c + 0.5 * n;
  const double ds = d + 0.5 * y.squaredNorm();
  return -0.5 * n * kLog2Pi + c * std::log(d) - log_gamma(c) - cs * std::log(ds) + log_gamma(cs);
}

}  // namespace shrinkhs::vb
