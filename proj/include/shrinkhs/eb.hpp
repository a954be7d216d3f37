#pragma once

#include "shrinkhs/model.hpp"
#include "shrinkhs/vb_engine.hpp"

#include <string>
#include <vector>

namespace shrinkhs::eb {

inline constexpr double kHyperMin = 1e-6;
inline constexpr double kHyperMax = 1e6;

struct GammaHyperEstimate {
  double shape = 0.0;
  double rate = 0.0;
  bool clamped = false;
};

/// Closed-form gamma hyperparameters from per-task moments E[tau^-2] and
/// E[log tau^-2], using log(x) - 1/(2x) in place of the digamma function:
///   a = 1/2 [log S - L/p - log p]^-1,  b = a p / S.
/// A non-positive dispersion or a single task clamps a to kHyperMax.
GammaHyperEstimate gamma_hyper_from_moments(const std::vector<double>& mean_inv_tau_sq,
                                            const std::vector<double>& mean_log_inv_tau_sq);

struct PincUpdate {
  Vector shape;
  Vector rate;
  std::vector<std::string> warnings;
};

/// M-step for PINC over all task states. Tasks with no coefficient in group g
/// carry no information on that group and are left out of its estimate.
PincUpdate eb_update_pinc(const std::vector<VariationalState>& states,
                          const std::vector<vb::PreparedTask>& tasks, const Hyperparams& current);

/// M-step for PINC2: the pooled variance estimate
///   tau_g^2 = sum_i E[sigma_i^-2] sum_{t in g} E[lambda_t^-2] E[beta_t^2] / sum_i s_i^g.
/// Groups with no coefficients anywhere keep their previous value.
Vector eb_update_pinc2(const std::vector<VariationalState>& states,
                       const std::vector<vb::PreparedTask>& tasks, const Vector& previous);

struct TraceRecord {
  int iteration = 0;
  Vector shape;
  Vector rate;
  Vector pooled_tau_sq;
  double total_elbo = 0.0;
  double max_delta = 0.0;
};

struct EbTrace {
  std::vector<TraceRecord> records;
  std::vector<std::string> warnings;
};

struct RunOptions {
  vb::FitOptions fit;
  unsigned threads = 1;
};

struct RunResult {
  std::vector<VariationalState> states;
  std::vector<PosteriorSummary> summaries;
  Hyperparams hyper;
  EbTrace trace;
  int iterations = 0;
  bool converged = false;
};

/// Alternates one variational sweep per task with one hyperparameter update
/// until max_i |delta ELBO_i| < tol or max_iter outer iterations. The error
/// prior (c, d) stays at the values given in hyper0.
RunResult run(const std::vector<RegressionTask>& tasks, const Hyperparams& hyper0,
              const RunOptions& opts = {});

}  // namespace shrinkhs::eb
