#include "shrinkhs/gibbs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace shrinkhs::gibbs {

Sampler::Sampler(const RegressionTask& task, const Hyperparams& hyper, const McmcOptions& opts)
    : task_(&task), hyper_(hyper), opts_(opts), rng_(opts.seed) {
  const int G = hyper.num_groups();
  require_valid(task, G);
  if (hyper.variant == Variant::kPInc2 && hyper.pooled_tau_sq.size() != G)
    throw InvalidInput("gibbs: pooled tau^2 must have one entry per group");
  for (int g : task.groups) group_.push_back(g - 1);
  counts_ = group_counts(task, G);
  wide_ = task.s() > static_cast<Eigen::Index>(opts.wide_ratio) * task.n();
  if (!wide_) xtx_ = task.x.transpose() * task.x;
  set_response(task.y);

  const Eigen::Index s = task.s();
  beta_ = Vector::Zero(s);
  lambda_sq_ = Vector::Ones(s);
  nu_ = Vector::Ones(s);
  inv_tau_sq_ = Vector::Ones(G);
  if (hyper.variant == Variant::kPInc2) inv_tau_sq_ = hyper.pooled_tau_sq.cwiseInverse();
}

void Sampler::set_response(const Vector& y) {
  if (y.size() != task_->n()) throw InvalidInput("gibbs: response length differs from design");
  y_ = y;
  xty_ = task_->x.transpose() * y_;
}

void Sampler::set_state(const Vector& beta, const Vector& lambda_sq, const Vector& nu,
                        const Vector& inv_tau_sq, double inv_sigma_sq) {
  beta_ = beta;
  lambda_sq_ = lambda_sq;
  nu_ = nu;
  inv_tau_sq_ = inv_tau_sq;
  inv_sigma_sq_ = inv_sigma_sq;
}

double Sampler::gamma(double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng_);
}

void Sampler::step() {
  draw_beta();
  if (!opts_.freeze_local_scales) draw_local();
  if (hyper_.variant == Variant::kPInc && !opts_.freeze_global_scales) draw_global();
  draw_sigma();
}

void Sampler::draw_beta() {
  const Eigen::Index s = task_->s();
  // Prior precision of beta in units of sigma^2: tau_g^-2 / lambda_t^2.
  Vector dinv(s);
  for (Eigen::Index t = 0; t < s; ++t) dinv[t] = inv_tau_sq_[group_[t]] / lambda_sq_[t];
  if (!dinv.allFinite() || (dinv.array() <= 0.0).any()) {
    std::ostringstream msg;
    msg << "gibbs: invalid prior precision (min " << dinv.minCoeff() << ", max " << dinv.maxCoeff()
        << ")";
    throw NumericalError(msg.str());
  }
  if (wide_) {
    draw_beta_wide((dinv * inv_sigma_sq_).cwiseInverse());
    return;
  }
  Matrix a = xtx_;
  a.diagonal() += dinv;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "gibbs: Cholesky of X'X + D^-1 failed (min prior precision " << dinv.minCoeff()
        << ", sigma^-2 " << inv_sigma_sq_ << ")";
    throw NumericalError(msg.str());
  }
  Vector z(s);
  for (Eigen::Index t = 0; t < s; ++t) z[t] = normal_(rng_);
  // beta = A^-1 X'y + sigma L'^-1 z has covariance sigma^2 A^-1.
  beta_ = llt.solve(xty_) + llt.matrixU().solve(z) / std::sqrt(inv_sigma_sq_);
}

// Draw from N(mu, Sigma) with Sigma = (Phi'Phi + D^-1)^-1, mu = Sigma Phi' alpha,
// Phi = X / sigma, alpha = y / sigma, D = prior_var, without forming s x s
// matrices.
void Sampler::draw_beta_wide(const Vector& prior_var) {
  const Eigen::Index n = task_->n(), s = task_->s();
  const double root = std::sqrt(inv_sigma_sq_);
  Vector u(s), delta(n);
  for (Eigen::Index t = 0; t < s; ++t) u[t] = std::sqrt(prior_var[t]) * normal_(rng_);
  for (Eigen::Index r = 0; r < n; ++r) delta[r] = normal_(rng_);
  const Matrix phi = task_->x * root;
  const Vector v = phi * u + delta;
  Matrix m = phi * prior_var.asDiagonal() * phi.transpose();
  m.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("gibbs: Cholesky of Phi D Phi' + I failed");
  const Vector w = llt.solve(y_ * root - v);
  beta_ = u + prior_var.cwiseProduct(phi.transpose() * w);
}

void Sampler::draw_local() {
  for (Eigen::Index t = 0; t < task_->s(); ++t) {
    const double scale_term = 0.5 * beta_[t] * beta_[t] * inv_tau_sq_[group_[t]] * inv_sigma_sq_;
    lambda_sq_[t] = 1.0 / gamma(1.0, 1.0 / nu_[t] + scale_term);
    nu_[t] = 1.0 / gamma(1.0, 1.0 + 1.0 / lambda_sq_[t]);
  }
}

void Sampler::draw_global() {
  const int G = hyper_.num_groups();
  Vector quad = Vector::Zero(G);
  for (Eigen::Index t = 0; t < task_->s(); ++t)
    quad[group_[t]] += beta_[t] * beta_[t] / lambda_sq_[t];
  for (int g = 0; g < G; ++g) {
    inv_tau_sq_[g] = gamma(hyper_.group_shape[g] + 0.5 * counts_[g],
                           hyper_.group_rate[g] + 0.5 * inv_sigma_sq_ * quad[g]);
  }
}

void Sampler::draw_sigma() {
  const double n = static_cast<double>(task_->n()), s = static_cast<double>(task_->s());
  const double rss = (y_ - task_->x * beta_).squaredNorm();
  double penalty = 0.0;
  for (Eigen::Index t = 0; t < task_->s(); ++t)
    penalty += beta_[t] * beta_[t] * inv_tau_sq_[group_[t]] / lambda_sq_[t];
  inv_sigma_sq_ = gamma(hyper_.error_shape + 0.5 * n + 0.5 * s,
                        hyper_.error_rate + 0.5 * rss + 0.5 * penalty);
}

McmcSummary gibbs_fit(const RegressionTask& task, const Hyperparams& hyper,
                      const McmcOptions& opts) {
  if (opts.n_iter < 1 || opts.n_burnin < 0 || opts.n_burnin >= opts.n_iter || opts.thin < 1)
    throw InvalidInput("gibbs: need 0 <= n_burnin < n_iter and thin >= 1");
  const auto start = std::chrono::steady_clock::now();
  Sampler sampler(task, hyper, opts);
  const Eigen::Index s = task.s();
  const long kept = (opts.n_iter - opts.n_burnin + opts.thin - 1) / opts.thin;
  Matrix draws(kept, s);
  long row = 0;
  for (long it = 0; it < opts.n_iter; ++it) {
    sampler.step();
    if (it >= opts.n_burnin && (it - opts.n_burnin) % opts.thin == 0)
      draws.row(row++) = sampler.beta().transpose();
  }

  McmcSummary out;
  out.kept = kept;
  out.means = draws.colwise().mean().transpose();
  out.sds.resize(s);
  out.ess.resize(s);
  for (Eigen::Index t = 0; t < s; ++t) {
    const double var = kept > 1 ? (draws.col(t).array() - out.means[t]).square().sum() / (kept - 1)
                                : 0.0;
    out.sds[t] = std::sqrt(var);
    out.ess[t] = effective_sample_size(draws.col(t));
  }
  if (opts.keep_draws) out.draws = std::move(draws);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double effective_sample_size(const Eigen::Ref<const Vector>& draws) {
  const Eigen::Index n = draws.size();
  if (n < 4) return static_cast<double>(n);
  const Vector centered = draws.array() - draws.mean();
  const double nd = static_cast<double>(n);
  auto autocov = [&](Eigen::Index lag) {
    return centered.head(n - lag).dot(centered.tail(n - lag)) / nd;
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return nd;
  // Sum consecutive pairs of autocovariances while positive and non-increasing.
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k + 1 < n / 2; k += 2) {
    double pair = autocov(k) + autocov(k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    sum += pair;
    prev_pair = pair;
  }
  const double tau = std::max(2.0 * sum / c0 - 1.0, 1.0 / nd);
  return std::min(nd / tau, nd * std::log10(nd));
}

}  // namespace shrinkhs::gibbs
