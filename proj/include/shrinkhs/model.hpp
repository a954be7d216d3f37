#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shrinkhs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Per-task global shrinkage: a gamma prior on each task's tau^-2 (PINC), or
/// one pooled tau^2 per group shared by all tasks (PINC2).
enum class Variant { kPInc, kPInc2 };

/// Exact element-wise equality that treats differently sized objects as unequal.
template <class A, class B>
bool same_values(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

const char* to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// One regression y = X beta + eps. Group labels are 1-based, one per column.
struct RegressionTask {
  int index = 1;
  Vector y;
  Matrix x;
  std::vector<int> groups;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index s() const { return x.cols(); }

  friend bool operator==(const RegressionTask& a, const RegressionTask& b) {
    return a.index == b.index && same_values(a.y, b.y) && same_values(a.x, b.x) &&
           a.groups == b.groups;
  }
};

struct Hyperparams {
  Vector group_shape;  // a_g
  Vector group_rate;   // b_g
  double error_shape = 1e-3;  // c
  double error_rate = 1e-3;   // d
  Variant variant = Variant::kPInc;
  Vector pooled_tau_sq;  // tau_g^2, PINC2 only

  int num_groups() const { return static_cast<int>(group_shape.size()); }

  /// Starting values used by the empirical-Bayes loop: a_g = b_g = c = d = 1e-3
  /// and pooled tau_g^2 = 0.05.
  static Hyperparams initial(int num_groups, Variant variant);

  friend bool operator==(const Hyperparams& a, const Hyperparams& b) {
    return same_values(a.group_shape, b.group_shape) && same_values(a.group_rate, b.group_rate) &&
           a.error_shape == b.error_shape && a.error_rate == b.error_rate &&
           a.variant == b.variant && same_values(a.pooled_tau_sq, b.pooled_tau_sq);
  }
};

/// Variational parameters of one task. The Gaussian factor q(beta) also keeps
/// its marginal variances and two cached scalars needed by the lower bound,
/// log|beta_cov| and tr(X'X beta_cov). beta_cov itself stays empty when a fit
/// asks for marginal variances only.
struct VariationalState {
  Vector beta_mean;
  Matrix beta_cov;
  Vector beta_var;  // diagonal of beta_cov
  Vector tau_shape;  // a*_{i,g}
  Vector tau_rate;   // b*_{i,g}
  double sigma_shape = 0.0;  // c*_i
  double sigma_rate = 0.0;   // d*_i
  Vector lambda_l;           // l_it
  Vector e_inv_lambda_sq;    // E z_it
  double log_det_cov = 0.0;
  double trace_xtx_cov = 0.0;
  double elbo = 0.0;

  friend bool operator==(const VariationalState& a, const VariationalState& b) {
    return same_values(a.beta_mean, b.beta_mean) && same_values(a.beta_cov, b.beta_cov) &&
           same_values(a.beta_var, b.beta_var) && same_values(a.tau_shape, b.tau_shape) &&
           same_values(a.tau_rate, b.tau_rate) && a.sigma_shape == b.sigma_shape &&
           a.sigma_rate == b.sigma_rate && same_values(a.lambda_l, b.lambda_l) &&
           same_values(a.e_inv_lambda_sq, b.e_inv_lambda_sq) &&
           a.log_det_cov == b.log_det_cov && a.trace_xtx_cov == b.trace_xtx_cov &&
           a.elbo == b.elbo;
  }
};

struct PosteriorSummary {
  Vector means;
  Vector sds;
  Vector kappa;
  double elbo = 0.0;

  friend bool operator==(const PosteriorSummary& a, const PosteriorSummary& b) {
    return same_values(a.means, b.means) && same_values(a.sds, b.sds) &&
           same_values(a.kappa, b.kappa) && a.elbo == b.elbo;
  }
};

struct NetworkEstimate {
  int p = 0;
  Matrix strength;
  std::vector<std::pair<int, int>> edges;  // 0-based, first < second

  friend bool operator==(const NetworkEstimate& a, const NetworkEstimate& b) {
    return a.p == b.p && same_values(a.strength, b.strength) && a.edges == b.edges;
  }
};

enum class TaskErrorKind { kDimensionMismatch, kEmptyDesign, kLabelOutOfRange, kNonFinite };

struct TaskError {
  TaskErrorKind kind;
  std::string message;
};

/// Checks shapes and labels. num_groups == 0 accepts any label >= 1.
std::optional<TaskError> validate_task(const RegressionTask& task, int num_groups = 0);

/// Throws InvalidInput carrying the TaskError message.
void require_valid(const RegressionTask& task, int num_groups = 0);

/// s_i^g for g = 1..num_groups, returned 0-based.
std::vector<int> group_counts(const RegressionTask& task, int num_groups);

/// Largest label over all tasks.
int infer_num_groups(const std::vector<RegressionTask>& tasks);

/// Columns `keep` of the task, with their labels.
RegressionTask restrict_columns(const RegressionTask& task, const std::vector<int>& keep);

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shrinkhs
