#pragma once

#include "shrinkhs/model.hpp"
#include "shrinkhs/vb_engine.hpp"

#include <string>
#include <utility>
#include <vector>

namespace shrinkhs::selection {

enum class Method { kThreshold, kDss };
const char* to_string(Method m);

struct SelectionResult {
  Method method = Method::kThreshold;
  std::vector<bool> selected;
  double chosen_level = 0.0;  // credible level for thresholding, lambda for DSS
  std::vector<std::pair<double, double>> score_trace;  // (level, ELBO) or (lambda, CV MSE)
  std::vector<std::string> warnings;

  std::size_t count() const;
};

/// |mean| / sd per coefficient; +infinity where sd is zero.
Vector kappa_statistic(const PosteriorSummary& summary);

/// (k + k') / 2. The diagonal is ignored and returned as zero.
Matrix symmetrize_kappa(const Matrix& k);

/// Credible levels {0.10, 0.15, ..., 0.95, 0.9999}.
std::vector<double> credible_grid();

/// kappa cutoff for credible level gamma: the (1 + gamma)/2 normal quantile.
double kappa_cutoff(double gamma);

std::vector<bool> select_by_kappa(const Vector& kappa, double gamma);

struct SelectOptions {
  vb::FitOptions fit;
  unsigned threads = 1;
  int folds = 5;
};

/// For each credible level, refits the task on the coefficients whose kappa
/// clears the cutoff (other columns dropped, hyperparameters frozen) and keeps
/// the level with the largest bound. Reads summary.kappa, so callers may pass
/// symmetrized values; falls back to kappa_statistic(summary) when it is empty. The all-coefficient model reuses the
/// bound carried by `summary`; the empty model uses empty_model_elbo. Ties go
/// to the sparser model.
SelectionResult threshold_select(const RegressionTask& task, const Hyperparams& hyper,
                                 const PosteriorSummary& summary, const SelectOptions& opts = {});

struct DssPath {
  Vector lambdas;       // decreasing
  Matrix coefficients;  // s x lambdas.size(), one solution per column
};

/// Objective (1/n)||X beta_bar - X gamma||^2 + lambda sum_t |gamma_t| / |beta_bar_t|.
/// Coefficients with |beta_bar_t| < 1e-12 must be zero (infinite weight).
double dss_objective(const Matrix& x, const Vector& beta_bar, const Vector& gamma, double lambda);

/// Adaptive-lasso solutions at the given penalties, by coordinate descent on
/// the rescaled design X diag(|beta_bar|) with warm starts.
Matrix dss_solve(const Matrix& x, const Vector& beta_bar, const Vector& lambdas);

/// Path on `num_lambdas` log-spaced penalties from lambda_max, the smallest
/// penalty with an all-zero solution, down to min_ratio * lambda_max.
DssPath dss_path(const RegressionTask& task, const Vector& beta_bar, int num_lambdas = 100,
                 double min_ratio = 1e-4);

inline constexpr Eigen::Index kDssMinObservations = 15;

/// Thrown when DSS cannot be applied (too few observations for the folds).
class SelectionUnavailable : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// DSS with K-fold cross-validation of the prediction error; each training
/// fold is refitted by VB with the hyperparameters frozen. Picks the largest
/// lambda whose CV error is within one standard error of the minimum. Folds
/// are interleaved (row r goes to fold r mod K).
SelectionResult dss_select(const RegressionTask& task, const Hyperparams& hyper,
                           const Vector& beta_bar, const SelectOptions& opts = {});

}  // namespace shrinkhs::selection
