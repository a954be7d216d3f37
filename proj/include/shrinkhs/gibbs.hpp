#pragma once

#include "shrinkhs/model.hpp"

#include <cstdint>
#include <random>

namespace shrinkhs::gibbs {

struct McmcOptions {
  long n_iter = 40000;
  long n_burnin = 20000;
  int thin = 1;
  std::uint64_t seed = 1;
  /// Hold lambda_t^2 = 1 (and nu_t) fixed.
  bool freeze_local_scales = false;
  /// Hold tau_g^-2 = 1 fixed (PINC; PINC2 always uses the pooled values).
  bool freeze_global_scales = false;
  /// Keep the post-burn-in beta draws in McmcSummary::draws.
  bool keep_draws = false;
  /// Designs wider than this multiple of n draw beta in O(n^2 s).
  int wide_ratio = 4;
};

struct McmcSummary {
  Vector means;
  Vector sds;
  Vector ess;
  long kept = 0;
  double seconds = 0.0;
  Matrix draws;  // kept x s, only with keep_draws
};

/// Single-chain sampler over (beta, lambda^2, nu, tau^-2, sigma^-2) for one
/// task. The half-Cauchy local scale uses lambda^2 | nu ~ IG(1/2, 1/nu),
/// nu ~ IG(1/2, 1).
class Sampler {
 public:
  Sampler(const RegressionTask& task, const Hyperparams& hyper, const McmcOptions& opts);

  /// One scan: beta, lambda^2, nu, tau^-2, sigma^-2.
  void step();

  /// Replaces the response (X'y and y'y are refreshed).
  void set_response(const Vector& y);

  const Vector& beta() const { return beta_; }
  const Vector& lambda_sq() const { return lambda_sq_; }
  const Vector& inv_tau_sq() const { return inv_tau_sq_; }  // per group
  double inv_sigma_sq() const { return inv_sigma_sq_; }

  /// Overwrites the current parameter values (for example with a prior draw).
  void set_state(const Vector& beta, const Vector& lambda_sq, const Vector& nu,
                 const Vector& inv_tau_sq, double inv_sigma_sq);

  std::mt19937_64& rng() { return rng_; }

 private:
  void draw_beta();
  void draw_beta_wide(const Vector& prior_var);
  void draw_local();
  void draw_global();
  void draw_sigma();
  double gamma(double shape, double rate);

  const RegressionTask* task_;
  Hyperparams hyper_;
  McmcOptions opts_;
  std::vector<int> group_;
  std::vector<int> counts_;
  bool wide_;
  Matrix xtx_;
  Vector y_;
  Vector xty_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;

  Vector beta_;
  Vector lambda_sq_;
  Vector nu_;
  Vector inv_tau_sq_;
  double inv_sigma_sq_ = 1.0;
};

/// Runs one chain and summarizes the post-burn-in draws.
McmcSummary gibbs_fit(const RegressionTask& task, const Hyperparams& hyper,
                      const McmcOptions& opts = {});

/// Effective sample size by Geyer's initial monotone sequence estimator.
double effective_sample_size(const Eigen::Ref<const Vector>& draws);

}  // namespace shrinkhs::gibbs
