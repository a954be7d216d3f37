#include "shrinkhs/netsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace shrinkhs::netsim {

const char* to_string(Topology t) {
  switch (t) {
    case Topology::kBand: return "band";
    case Topology::kCluster: return "cluster";
    case Topology::kHub: return "hub";
  }
  return "?";
}

Topology topology_from_string(const std::string& name) {
  if (name == "band") return Topology::kBand;
  if (name == "cluster") return Topology::kCluster;
  if (name == "hub") return Topology::kHub;
  throw InvalidInput("unknown topology '" + name + "' (expected band, cluster or hub)");
}

const char* to_string(Method m) {
  switch (m) {
    case Method::kPInc: return "pinc";
    case Method::kPInc2: return "pinc2";
    case Method::kRidge: return "ridge";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "pinc") return Method::kPInc;
  if (name == "pinc2") return Method::kPInc2;
  if (name == "ridge") return Method::kRidge;
  throw InvalidInput("unknown method '" + name + "' (expected pinc, pinc2 or ridge)");
}

const char* to_string(PriorMode m) {
  switch (m) {
    case PriorMode::kNone: return "none";
    case PriorMode::kTrue: return "true";
    case PriorMode::kCorrupted: return "corrupted";
  }
  return "?";
}

PriorMode prior_mode_from_string(const std::string& name) {
  if (name == "none") return PriorMode::kNone;
  if (name == "true") return PriorMode::kTrue;
  if (name == "corrupted") return PriorMode::kCorrupted;
  throw InvalidInput("unknown prior mode '" + name + "' (expected none, true or corrupted)");
}

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Adjacency topology_support(const PrecisionSpec& spec) {
  const int p = spec.p;
  if (p < 2) throw InvalidInput("precision spec: p must be at least 2");
  Adjacency adj = Adjacency::Constant(p, p, false);
  auto link = [&](int i, int j) { adj(i, j) = adj(j, i) = true; };
  switch (spec.topology) {
    case Topology::kBand:
      if (spec.bandwidth < 1 || spec.bandwidth >= p)
        throw InvalidInput("band topology: bandwidth must lie in [1, p)");
      for (int i = 0; i < p; ++i)
        for (int j = i + 1; j <= std::min(p - 1, i + spec.bandwidth); ++j) link(i, j);
      break;
    case Topology::kCluster: {
      if (spec.clusters < 1 || spec.clusters > p)
        throw InvalidInput("cluster topology: cluster count must lie in [1, p]");
      if (!(spec.cluster_prob > 0.0 && spec.cluster_prob <= 1.0))
        throw InvalidInput("cluster topology: edge probability must lie in (0, 1]");
      std::mt19937_64 rng(split_seed(spec.seed, 7));
      std::bernoulli_distribution coin(spec.cluster_prob);
      for (int c = 0; c < spec.clusters; ++c) {
        const int lo = c * p / spec.clusters, hi = (c + 1) * p / spec.clusters;
        for (int i = lo; i < hi; ++i)
          for (int j = i + 1; j < hi; ++j)
            if (coin(rng)) link(i, j);
      }
      break;
    }
    case Topology::kHub:
      if (spec.hubs < 1 || 2 * spec.hubs > p)
        throw InvalidInput("hub topology: need 1 <= hubs <= p/2");
      for (int h = 0; h < spec.hubs; ++h) {
        const int lo = h * p / spec.hubs, hi = (h + 1) * p / spec.hubs;
        for (int j = lo + 1; j < hi; ++j) link(lo, j);
      }
      break;
  }
  return adj;
}

GroundTruth generate_precision(const PrecisionSpec& spec) {
  GroundTruth truth;
  truth.adjacency = topology_support(spec);
  const int p = spec.p;

  std::mt19937_64 rng(split_seed(spec.seed, 11));
  std::uniform_real_distribution<double> magnitude(0.3, 0.8);
  std::bernoulli_distribution sign(0.5);
  Matrix off = Matrix::Zero(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j)
      if (truth.adjacency(i, j)) off(i, j) = off(j, i) = (sign(rng) ? 1.0 : -1.0) * magnitude(rng);
  const Vector row_abs = off.cwiseAbs().rowwise().sum();

  for (double margin = 0.1;; margin *= 2.0) {
    Matrix omega = off;
    omega.diagonal() = row_abs.array() + margin;
    const Vector scale = omega.diagonal().cwiseSqrt().cwiseInverse();
    omega = scale.asDiagonal() * omega * scale.asDiagonal();
    omega = omega.triangularView<Eigen::Upper>();
    omega.triangularView<Eigen::StrictlyLower>() = omega.transpose();
    omega.diagonal().setOnes();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(omega, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() >= 0.05) {
      truth.omega = omega;
      break;
    }
  }
  truth.coefficients = coefficients_from_precision(truth.omega);
  return truth;
}

Matrix sample_gaussian(const Matrix& omega, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample_gaussian: n must be positive");
  const Eigen::Index p = omega.rows();
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) throw InvalidInput("sample_gaussian: omega not positive definite");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix z(p, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < p; ++i) z(i, j) = normal(rng);
  // omega = L L', so L'^-1 z has covariance omega^-1.
  const Matrix x = llt.matrixU().solve(z);
  return x.transpose();
}

std::vector<RegressionTask> build_regression_system(const Matrix& data,
                                                    const std::optional<Adjacency>& prior) {
  const Eigen::Index n = data.rows();
  const int p = static_cast<int>(data.cols());
  if (p < 2) throw InvalidInput("build_regression_system: need at least two variables");
  if (prior && (prior->rows() != p || prior->cols() != p))
    throw InvalidInput("build_regression_system: prior adjacency must be p x p");
  std::vector<RegressionTask> tasks(p);
  for (int i = 0; i < p; ++i) {
    auto& task = tasks[i];
    task.index = i + 1;
    task.y = data.col(i);
    task.x.resize(n, p - 1);
    task.groups.resize(p - 1);
    for (int t = 0; t < p; ++t) {
      if (t == i) continue;
      const int col = column_of(i, t);
      task.x.col(col) = data.col(t);
      task.groups[col] = (prior && (*prior)(i, t)) ? 2 : 1;
    }
  }
  return tasks;
}

std::vector<Vector> coefficients_from_precision(const Matrix& omega) {
  const int p = static_cast<int>(omega.rows());
  std::vector<Vector> out(p, Vector::Zero(p - 1));
  for (int i = 0; i < p; ++i)
    for (int t = 0; t < p; ++t)
      if (t != i) out[i][column_of(i, t)] = -omega(i, t) / omega(i, i);
  return out;
}

L1Errors l1_errors(const std::vector<Vector>& estimates, const std::vector<Vector>& truth) {
  if (estimates.size() != truth.size()) throw InvalidInput("l1_errors: task count mismatch");
  L1Errors err;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (estimates[i].size() != truth[i].size())
      throw InvalidInput("l1_errors: coefficient layout mismatch at task " + std::to_string(i + 1));
    for (Eigen::Index t = 0; t < truth[i].size(); ++t) {
      if (truth[i][t] == 0.0)
        err.err0 += std::abs(estimates[i][t]);
      else
        err.err1 += std::abs(estimates[i][t] - truth[i][t]);
    }
  }
  return err;
}

RocCurve roc_curve(const Matrix& strength, const Adjacency& truth) {
  const Eigen::Index p = strength.rows();
  std::vector<std::pair<double, bool>> pairs;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j) pairs.emplace_back(strength(i, j), truth(i, j));
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const auto positives = std::count_if(pairs.begin(), pairs.end(), [](auto& e) { return e.second; });
  const auto negatives = static_cast<std::ptrdiff_t>(pairs.size()) - positives;

  RocCurve roc;
  roc.points.emplace_back(0.0, 0.0);
  std::ptrdiff_t tp = 0, fp = 0;
  double area = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
  for (std::size_t k = 0; k < pairs.size();) {
    const double level = pairs[k].first;
    for (; k < pairs.size() && pairs[k].first == level; ++k) (pairs[k].second ? tp : fp)++;
    const double fpr = negatives > 0 ? static_cast<double>(fp) / negatives : 1.0;
    const double tpr = positives > 0 ? static_cast<double>(tp) / positives : 1.0;
    area += 0.5 * (fpr - prev_fpr) * (tpr + prev_tpr);
    roc.points.emplace_back(fpr, tpr);
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  if (roc.points.back() != std::pair<double, double>{1.0, 1.0}) {
    area += 0.5 * (1.0 - prev_fpr) * (1.0 + prev_tpr);
    roc.points.emplace_back(1.0, 1.0);
  }
  if (positives > 0 && negatives > 0) roc.auc = area;
  return roc;
}

Adjacency corrupt_prior(const Adjacency& truth, double fraction, std::uint64_t seed) {
  const Eigen::Index p = truth.rows();
  std::vector<std::pair<int, int>> ones, zeros;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j)
      (truth(i, j) ? ones : zeros).emplace_back(static_cast<int>(i), static_cast<int>(j));
  std::mt19937_64 rng(seed);
  std::shuffle(ones.begin(), ones.end(), rng);
  std::shuffle(zeros.begin(), zeros.end(), rng);
  const std::size_t swaps = std::min(
      zeros.size(), static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ones.size()))));
  Adjacency out = truth;
  for (std::size_t k = 0; k < swaps; ++k) {
    auto [i, j] = ones[k];
    out(i, j) = out(j, i) = false;
    auto [u, v] = zeros[k];
    out(u, v) = out(v, u) = true;
  }
  return out;
}

Matrix directed_kappa(const std::vector<PosteriorSummary>& summaries) {
  const int p = static_cast<int>(summaries.size());
  Matrix k = Matrix::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    if (summaries[i].kappa.size() != p - 1)
      throw InvalidInput("directed_kappa: summary " + std::to_string(i + 1) + " has wrong length");
    for (int t = 0; t < p; ++t)
      if (t != i) k(i, t) = summaries[i].kappa[column_of(i, t)];
  }
  return k;
}

NetworkEstimate assemble_network(const std::vector<PosteriorSummary>& summaries,
                                 const std::vector<std::vector<bool>>& selected) {
  const int p = static_cast<int>(summaries.size());
  NetworkEstimate net;
  net.p = p;
  const Matrix k = directed_kappa(summaries);
  net.strength = 0.5 * (k + k.transpose());
  if (!selected.empty()) {
    if (static_cast<int>(selected.size()) != p)
      throw InvalidInput("assemble_network: selection count mismatch");
    for (int i = 0; i < p; ++i)
      for (int j = i + 1; j < p; ++j)
        if (selected[i][column_of(i, j)] || selected[j][column_of(j, i)]) net.edges.emplace_back(i, j);
  }
  return net;
}

ReplicateData make_replicate(const ReplicateSpec& spec) {
  ReplicateData rep;
  PrecisionSpec ps = spec.precision;
  ps.seed = split_seed(spec.seed, 0);
  rep.truth = generate_precision(ps);
  rep.data = sample_gaussian(rep.truth.omega, spec.n, split_seed(spec.seed, 1));
  switch (spec.prior) {
    case PriorMode::kNone: break;
    case PriorMode::kTrue: rep.prior = rep.truth.adjacency; break;
    case PriorMode::kCorrupted:
      rep.prior = corrupt_prior(rep.truth.adjacency, spec.corruption, split_seed(spec.seed, 2));
      break;
  }
  rep.tasks = build_regression_system(rep.data, rep.prior);
  return rep;
}

MethodResult run_method(const ReplicateData& rep, Method method, const eb::RunOptions& opts) {
  MethodResult out;
  out.method = method;
  eb::RunOptions run_opts = opts;
  run_opts.fit.full_covariance = false;
  const std::vector<RegressionTask>* tasks = &rep.tasks;
  std::vector<RegressionTask> single_group;
  Variant variant = method == Method::kPInc2 ? Variant::kPInc2 : Variant::kPInc;
  if (method == Method::kRidge) {
    run_opts.fit.freeze_local_scales = true;
    single_group = build_regression_system(rep.data);
    tasks = &single_group;
  }
  const int G = std::max(1, infer_num_groups(*tasks));
  const auto start = std::chrono::steady_clock::now();
  auto fit = eb::run(*tasks, Hyperparams::initial(G, variant), run_opts);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::vector<Vector> means;
  means.reserve(fit.summaries.size());
  for (const auto& s : fit.summaries) means.push_back(s.means);
  out.errors = l1_errors(means, rep.truth.coefficients);
  const Matrix k = directed_kappa(fit.summaries);
  out.roc = roc_curve(0.5 * (k + k.transpose()), rep.truth.adjacency);
  out.hyper = fit.hyper;
  out.summaries = std::move(fit.summaries);
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  out.warnings = std::move(fit.trace.warnings);
  return out;
}

SparseRegressions make_sparse_regressions(int count, int n, int s, int signals, double signal,
                                          std::uint64_t seed) {
  if (count < 1 || n < 1 || s < 1 || signals < 0 || signals > s)
    throw InvalidInput("make_sparse_regressions: need count, n, s >= 1 and 0 <= signals <= s");
  SparseRegressions out;
  for (int k = 0; k < count; ++k) {
    std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> normal;
    RegressionTask task;
    task.index = k + 1;
    task.x.resize(n, s);
    for (int j = 0; j < s; ++j)
      for (int r = 0; r < n; ++r) task.x(r, j) = normal(rng);
    Vector beta = Vector::Zero(s);
    for (int j = 0; j < signals; ++j) beta[j] = (j % 2 == 0 ? 1.0 : -1.0) * signal;
    task.y = task.x * beta;
    for (int r = 0; r < n; ++r) task.y[r] += normal(rng);
    task.groups.assign(static_cast<std::size_t>(s), 1);
    out.tasks.push_back(std::move(task));
    out.truth.push_back(std::move(beta));
  }
  return out;
}

}  // namespace shrinkhs::netsim
