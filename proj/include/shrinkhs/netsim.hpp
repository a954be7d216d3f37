#pragma once

#include "shrinkhs/eb.hpp"
#include "shrinkhs/model.hpp"
#include "shrinkhs/vb_engine.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace shrinkhs::netsim {

using Adjacency = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class Topology { kBand, kCluster, kHub };
const char* to_string(Topology t);
Topology topology_from_string(const std::string& name);

struct PrecisionSpec {
  int p = 100;
  Topology topology = Topology::kBand;
  int bandwidth = 1;          // band: neighbours on each side
  int clusters = 5;           // cluster: contiguous blocks of ~p/clusters nodes
  double cluster_prob = 0.3;  // cluster: within-block edge probability
  int hubs = 1;               // hub: one star per contiguous block
  std::uint64_t seed = 1;
};

struct GroundTruth {
  Matrix omega;
  Adjacency adjacency;
  std::vector<Vector> coefficients;  // per node, -omega_it / omega_ii for t != i
};

/// SplitMix64 step; derives independent stream seeds from a master seed.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

/// Unit-diagonal precision matrix with exactly the topology's support.
/// Off-diagonal entries start as +-U[0.3, 0.8]; the diagonal is made strictly
/// dominant and then scaled to one. If the smallest eigenvalue falls below
/// 0.05 the dominance margin is doubled until it does not.
GroundTruth generate_precision(const PrecisionSpec& spec);

/// Support of a topology without drawing weights.
Adjacency topology_support(const PrecisionSpec& spec);

/// n i.i.d. rows from N(0, omega^-1).
Matrix sample_gaussian(const Matrix& omega, int n, std::uint64_t seed);

/// Node-wise regressions: task i regresses column i on the remaining columns
/// in their original order. With a prior adjacency, label 2 marks prior edges
/// and label 1 everything else; without one every label is 1.
std::vector<RegressionTask> build_regression_system(const Matrix& data,
                                                    const std::optional<Adjacency>& prior = {});

std::vector<Vector> coefficients_from_precision(const Matrix& omega);

/// Position of node t inside task i's coefficient vector.
inline int column_of(int task, int node) { return node < task ? node : node - 1; }

struct L1Errors {
  double err0 = 0.0;  // sum |est| over true zeros
  double err1 = 0.0;  // sum |est - truth| over true nonzeros
};
L1Errors l1_errors(const std::vector<Vector>& estimates, const std::vector<Vector>& truth);

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (FPR, TPR), from (0,0) to (1,1)
  std::optional<double> auc;                       // empty when truth is degenerate
};

/// Threshold sweep over the unordered pairs' strengths; tied strengths enter
/// together.
RocCurve roc_curve(const Matrix& strength, const Adjacency& truth);

/// Swaps a random half of the prior's edges with as many non-edges.
Adjacency corrupt_prior(const Adjacency& truth, double fraction, std::uint64_t seed);

/// Directed kappa matrix (zero diagonal) from per-node summaries.
Matrix directed_kappa(const std::vector<PosteriorSummary>& summaries);

/// Strength is the symmetrized kappa; an edge is kept when either direction is
/// selected. `selected` may be empty (no selection step).
NetworkEstimate assemble_network(const std::vector<PosteriorSummary>& summaries,
                                 const std::vector<std::vector<bool>>& selected);

enum class Method { kPInc, kPInc2, kRidge };
const char* to_string(Method m);
Method method_from_string(const std::string& name);

enum class PriorMode { kNone, kTrue, kCorrupted };
const char* to_string(PriorMode m);
PriorMode prior_mode_from_string(const std::string& name);

struct ReplicateSpec {
  PrecisionSpec precision;
  int n = 10;
  PriorMode prior = PriorMode::kNone;
  double corruption = 0.5;
  std::uint64_t seed = 1;  // replicate seed: truth, data and corruption streams
};

struct ReplicateData {
  GroundTruth truth;
  Matrix data;
  std::optional<Adjacency> prior;
  std::vector<RegressionTask> tasks;
};

ReplicateData make_replicate(const ReplicateSpec& spec);

struct MethodResult {
  Method method = Method::kPInc;
  L1Errors errors;
  RocCurve roc;
  Hyperparams hyper;
  std::vector<PosteriorSummary> summaries;
  int iterations = 0;
  bool converged = false;
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

/// Fits one method to a replicate. The ridge baseline ignores the prior and
/// freezes the local scales.
MethodResult run_method(const ReplicateData& rep, Method method, const eb::RunOptions& opts);

struct SparseRegressions {
  std::vector<RegressionTask> tasks;
  std::vector<Vector> truth;
};

/// `count` independent tasks y = X beta + N(0, 1) noise with standard normal
/// designs (n x s, single group); the first `signals` coefficients alternate
/// between +signal and -signal, the rest are zero.
SparseRegressions make_sparse_regressions(int count, int n, int s, int signals, double signal,
                                          std::uint64_t seed);

}  // namespace shrinkhs::netsim
