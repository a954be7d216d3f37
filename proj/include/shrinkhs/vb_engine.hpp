#pragma once

#include "shrinkhs/model.hpp"

#include <optional>
#include <vector>

namespace shrinkhs::vb {

/// Shape of q(tau^-2). kConjugate uses a_g + s_g/2, the exact coordinate
/// update; kHalved uses a_g + s_g/4 (kept for comparison runs).
enum class TauShapeRule { kConjugate, kHalved };

struct FitOptions {
  double tol = 1e-3;
  int max_iter = 1000;
  bool track_elbo = false;
  /// Fix lambda_t = 1 (E z_t = 1): the Gaussian ridge-type baseline.
  bool freeze_local_scales = false;
  TauShapeRule tau_shape = TauShapeRule::kConjugate;
  /// Designs wider than this multiple of n use the n x n Woodbury solve.
  int woodbury_ratio = 4;
  /// Form the full beta_cov. When false only its diagonal (beta_var) is kept,
  /// which is all the updates and summaries need.
  bool full_covariance = true;
};

/// Task-level quantities reused across sweeps. Holds a reference to the task,
/// which must outlive it.
class PreparedTask {
 public:
  PreparedTask(const RegressionTask& task, int num_groups, int woodbury_ratio = 4);

  const RegressionTask& task() const { return *task_; }
  Eigen::Index n() const { return task_->n(); }
  Eigen::Index s() const { return task_->s(); }
  int num_groups() const { return num_groups_; }
  int group_of(Eigen::Index t) const { return group_index_[t]; }
  const std::vector<int>& counts() const { return counts_; }
  bool use_woodbury() const { return woodbury_; }
  const Matrix& xtx() const { return xtx_; }  // empty when use_woodbury()
  const Vector& xty() const { return xty_; }
  double yty() const { return yty_; }

  /// Eigendecomposition of X'X, computed on first use (not thread-safe; a
  /// prepared task belongs to one worker). Only available without Woodbury.
  const Eigen::SelfAdjointEigenSolver<Matrix>& xtx_eigen() const;

 private:
  const RegressionTask* task_;
  int num_groups_;
  std::vector<int> group_index_;
  std::vector<int> counts_;
  bool woodbury_;
  Matrix xtx_;
  Vector xty_;
  double yty_;
  mutable std::optional<Eigen::SelfAdjointEigenSolver<Matrix>> eigen_;
};

/// Closed-form moments of the local-scale factor Lambda_l.
struct LocalScaleMoments {
  double log_scaled_e1;  // log(exp(l) E1(l))
  double mean_inv_sq;    // E[lambda^-2] = 1/(l exp(l) E1(l)) - 1
  double l_times_mean;   // l * E[lambda^-2], accurate for large l
};
LocalScaleMoments local_scale_moments(double l);

/// Lower-bound contributions, grouped so that each prior hyperparameter
/// touches exactly one block.
struct ElboTerms {
  double data = 0.0;    // -n/2 log(2 pi)
  double beta = 0.0;    // entropy of q(beta) net of its prior normalizer
  double sigma = 0.0;   // sigma^-2 prior, entropy, and expected quadratic forms
  double tau = 0.0;     // tau^-2 prior and entropy (PINC) or fixed tau (PINC2)
  double lambda = 0.0;  // half-Cauchy prior and entropy of q(lambda)
  double total() const { return data + beta + sigma + tau + lambda; }
};

VariationalState init_state(const RegressionTask& task, const Hyperparams& hyper,
                            const FitOptions& opts = {});

/// E[tau_g^-2] under the current state (PINC) or the pooled value (PINC2).
Vector expected_inv_tau_sq(const VariationalState& state, const Hyperparams& hyper);

/// Diagonal of D^-1: E[tau_{P_t}^-2] E[lambda_t^-2].
Vector prior_precision(const VariationalState& state, const PreparedTask& prep,
                       const Hyperparams& hyper);

/// Sets beta_mean, beta_var and the cached log-determinant and trace, and
/// beta_cov when opts.full_covariance is set.
void update_beta(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
                 const FitOptions& opts = {});
void update_tau(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
                const FitOptions& opts = {});
void update_sigma(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper);
void update_lambda(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
                   const FitOptions& opts = {});

/// Evidence lower bound at the current variational parameters. Exact for any
/// parameter values, not only at a fixed point of the updates.
ElboTerms elbo_terms(const VariationalState& state, const PreparedTask& prep,
                     const Hyperparams& hyper, const FitOptions& opts = {});
double elbo(const VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
            const FitOptions& opts = {});

/// The compact form of the bound that holds once b*, c*, d* and a* satisfy
/// their update equations for the current l. Used to cross-check elbo().
double elbo_at_fixed_point(const VariationalState& state, const PreparedTask& prep,
                           const Hyperparams& hyper);

/// One coordinate sweep in the order Sigma/beta, (a*, b*), (c*, d*), l,
/// then refreshes state.elbo.
void sweep(VariationalState& state, const PreparedTask& prep, const Hyperparams& hyper,
           const FitOptions& opts = {});

PosteriorSummary summarize(const VariationalState& state);

struct FitResult {
  VariationalState state;
  PosteriorSummary summary;
  int iterations = 0;
  bool converged = false;
  std::vector<double> elbo_trace;
};

FitResult fit_single(const RegressionTask& task, const Hyperparams& hyper,
                     const FitOptions& opts = {});

/// Bound for the model with no predictors: the exact log marginal likelihood
/// of y under sigma^-2 ~ Gamma(c, d).
double empty_model_elbo(const Vector& y, const Hyperparams& hyper);

}  // namespace shrinkhs::vb
