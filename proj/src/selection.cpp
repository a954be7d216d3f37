#include "shrinkhs/selection.hpp"

#include "shrinkhs/parallel.hpp"
#include "shrinkhs/specfn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace shrinkhs::selection {
namespace {

constexpr double kMinWeightBase = 1e-12;

RegressionTask restrict_rows(const RegressionTask& task, const std::vector<Eigen::Index>& rows) {
  RegressionTask out;
  out.index = task.index;
  out.groups = task.groups;
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.x.resize(static_cast<Eigen::Index>(rows.size()), task.s());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.y[static_cast<Eigen::Index>(r)] = task.y[rows[r]];
    out.x.row(static_cast<Eigen::Index>(r)) = task.x.row(rows[r]);
  }
  return out;
}

bool is_constant(const Vector& v) {
  return v.size() == 0 || (v.array() == v[0]).all();
}

// Bound of the model restricted to `keep` under frozen hyperparameters.
double refit_elbo(const RegressionTask& task, const Hyperparams& hyper,
                  const std::vector<bool>& keep, const vb::FitOptions& fit) {
  std::vector<int> cols;
  for (std::size_t t = 0; t < keep.size(); ++t)
    if (keep[t]) cols.push_back(static_cast<int>(t));
  if (cols.empty()) return vb::empty_model_elbo(task.y, hyper);
  const RegressionTask sub = restrict_columns(task, cols);
  return vb::fit_single(sub, hyper, fit).state.elbo;
}

}  // namespace

const char* to_string(Method m) { return m == Method::kThreshold ? "threshold" : "dss"; }

std::size_t SelectionResult::count() const {
  return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
}

Vector kappa_statistic(const PosteriorSummary& summary) {
  if (summary.means.size() != summary.sds.size())
    throw InvalidInput("kappa_statistic: means and sds differ in length");
  Vector k(summary.means.size());
  for (Eigen::Index t = 0; t < k.size(); ++t) {
    if (summary.sds[t] < 0.0) throw InvalidInput("kappa_statistic: negative standard deviation");
    k[t] = summary.sds[t] > 0.0 ? std::abs(summary.means[t]) / summary.sds[t]
                                : std::numeric_limits<double>::infinity();
  }
  return k;
}

Matrix symmetrize_kappa(const Matrix& k) {
  if (k.rows() != k.cols()) throw InvalidInput("symmetrize_kappa: matrix must be square");
  Matrix out = 0.5 * (k + k.transpose());
  out.diagonal().setZero();
  return out;
}

std::vector<double> credible_grid() {
  std::vector<double> grid;
  for (int step = 2; step <= 19; ++step) grid.push_back(step * 0.05);
  grid.push_back(0.9999);
  return grid;
}

double kappa_cutoff(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("credible level must lie in (0, 1)");
  return specfn::normal_quantile(0.5 * (1.0 + gamma));
}

std::vector<bool> select_by_kappa(const Vector& kappa, double gamma) {
  const double cut = kappa_cutoff(gamma);
  std::vector<bool> out(static_cast<std::size_t>(kappa.size()));
  for (Eigen::Index t = 0; t < kappa.size(); ++t) out[static_cast<std::size_t>(t)] = kappa[t] > cut;
  return out;
}

SelectionResult threshold_select(const RegressionTask& task, const Hyperparams& hyper,
                                 const PosteriorSummary& summary, const SelectOptions& opts) {
  require_valid(task, hyper.num_groups());
  if (summary.means.size() != task.s())
    throw InvalidInput("threshold_select: summary does not match the task");
  const Vector kappa = summary.kappa.size() == task.s() ? summary.kappa : kappa_statistic(summary);
  const auto grid = credible_grid();

  // Distinct candidate models, each refitted once.
  std::vector<std::vector<bool>> level_model;
  std::map<std::vector<bool>, std::size_t> index_of;
  std::vector<std::vector<bool>> models;
  for (double gamma : grid) {
    auto keep = select_by_kappa(kappa, gamma);
    if (index_of.emplace(keep, models.size()).second) models.push_back(keep);
    level_model.push_back(std::move(keep));
  }
  std::vector<double> model_elbo(models.size());
  parallel_for(models.size(), opts.threads, [&](std::size_t m) {
    const auto& keep = models[m];
    if (std::all_of(keep.begin(), keep.end(), [](bool b) { return b; }) && !keep.empty())
      model_elbo[m] = summary.elbo;
    else
      model_elbo[m] = refit_elbo(task, hyper, keep, opts.fit);
  });

  SelectionResult result;
  result.method = Method::kThreshold;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double value = model_elbo[index_of.at(level_model[g])];
    result.score_trace.emplace_back(grid[g], value);
    if (value >= best) {
      best = value;
      result.chosen_level = grid[g];
      result.selected = level_model[g];
    }
  }
  return result;
}

double dss_objective(const Matrix& x, const Vector& beta_bar, const Vector& gamma, double lambda) {
  const double n = static_cast<double>(x.rows());
  double penalty = 0.0;
  for (Eigen::Index t = 0; t < gamma.size(); ++t) {
    if (gamma[t] == 0.0) continue;
    if (std::abs(beta_bar[t]) < kMinWeightBase) return std::numeric_limits<double>::infinity();
    penalty += std::abs(gamma[t]) / std::abs(beta_bar[t]);
  }
  return (x * (beta_bar - gamma)).squaredNorm() / n + lambda * penalty;
}

Matrix dss_solve(const Matrix& x, const Vector& beta_bar, const Vector& lambdas) {
  const Eigen::Index n = x.rows(), s = x.cols();
  if (beta_bar.size() != s) throw InvalidInput("dss_solve: beta_bar length differs from design");
  if (!beta_bar.allFinite()) throw InvalidInput("dss_solve: beta_bar must be finite");
  Matrix out = Matrix::Zero(s, lambdas.size());

  std::vector<Eigen::Index> active;
  for (Eigen::Index t = 0; t < s; ++t)
    if (std::abs(beta_bar[t]) >= kMinWeightBase) active.push_back(t);
  const auto m = static_cast<Eigen::Index>(active.size());
  if (m == 0 || n == 0) return out;

  // gamma_t = |beta_bar_t| theta_t turns the weighted penalty into a plain l1.
  Vector scale(m);
  Matrix xs(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    scale[j] = std::abs(beta_bar[active[j]]);
    xs.col(j) = x.col(active[j]) * scale[j];
  }
  const Vector target = x * beta_bar;
  const Matrix gram = xs.transpose() * xs;
  const Vector corr = xs.transpose() * target;
  const double two_over_n = 2.0 / static_cast<double>(n);
  const double tol = 1e-13 * std::max(target.norm(), 1e-300);

  Vector theta = Vector::Zero(m);
  Vector grad = corr;  // xs' (target - xs theta)
  for (Eigen::Index k = 0; k < lambdas.size(); ++k) {
    const double lambda = lambdas[k];
    for (int sweep = 0; sweep < 100000; ++sweep) {
      double max_step = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        const double gjj = gram(j, j);
        if (gjj <= 0.0) continue;
        const double z = two_over_n * (grad[j] + gjj * theta[j]);
        const double shrunk = std::copysign(std::max(std::abs(z) - lambda, 0.0), z);
        const double next = shrunk / (two_over_n * gjj);
        const double delta = next - theta[j];
        if (delta != 0.0) {
          theta[j] = next;
          grad.noalias() -= gram.col(j) * delta;
          max_step = std::max(max_step, std::abs(delta) * std::sqrt(gjj));
        }
      }
      if (max_step <= tol) break;
    }
    for (Eigen::Index j = 0; j < m; ++j) out(active[j], k) = theta[j] * scale[j];
  }
  return out;
}

DssPath dss_path(const RegressionTask& task, const Vector& beta_bar, int num_lambdas,
                 double min_ratio) {
  if (num_lambdas < 1) throw InvalidInput("dss_path: need at least one penalty");
  if (!(min_ratio > 0.0 && min_ratio <= 1.0)) throw InvalidInput("dss_path: min_ratio in (0, 1]");
  if (beta_bar.size() != task.s()) throw InvalidInput("dss_path: beta_bar length differs from task");

  const double n = static_cast<double>(task.n());
  const Vector target = task.x * beta_bar;
  double lambda_max = 0.0;
  for (Eigen::Index t = 0; t < task.s(); ++t) {
    if (std::abs(beta_bar[t]) < kMinWeightBase) continue;
    lambda_max = std::max(lambda_max, 2.0 / n * std::abs(beta_bar[t]) * task.x.col(t).dot(target));
  }
  // An all-zero problem has no natural scale; the path is zero for any grid.
  if (!(lambda_max > 0.0)) lambda_max = 1.0;

  DssPath path;
  path.lambdas.resize(num_lambdas);
  for (int k = 0; k < num_lambdas; ++k) {
    const double frac = num_lambdas == 1 ? 0.0 : static_cast<double>(k) / (num_lambdas - 1);
    path.lambdas[k] = lambda_max * std::pow(min_ratio, frac);
  }
  path.coefficients = dss_solve(task.x, beta_bar, path.lambdas);
  path.coefficients.col(0).setZero();  // exact zero at lambda_max
  return path;
}

SelectionResult dss_select(const RegressionTask& task, const Hyperparams& hyper,
                           const Vector& beta_bar, const SelectOptions& opts) {
  require_valid(task, hyper.num_groups());
  const int folds = opts.folds;
  if (folds < 2) throw InvalidInput("dss_select: need at least two folds");
  if (task.n() < folds) throw InvalidInput("dss_select: fewer observations than folds");
  if (task.n() < kDssMinObservations) {
    std::ostringstream msg;
    msg << "dss_select: cross-validation needs at least " << kDssMinObservations
        << " observations (task " << task.index << " has " << task.n() << ")";
    throw SelectionUnavailable(msg.str());
  }

  const DssPath path = dss_path(task, beta_bar);
  const Eigen::Index num_lambdas = path.lambdas.size();

  Matrix fold_sse = Matrix::Zero(folds, num_lambdas);
  std::vector<Eigen::Index> fold_rows(folds, 0);
  std::vector<bool> skipped(folds, false);
  parallel_for(static_cast<std::size_t>(folds), opts.threads, [&](std::size_t f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index r = 0; r < task.n(); ++r)
      (r % folds == static_cast<Eigen::Index>(f) ? test : train).push_back(r);
    const RegressionTask train_task = restrict_rows(task, train);
    const RegressionTask test_task = restrict_rows(task, test);
    if (is_constant(train_task.y) || is_constant(test_task.y)) {
      skipped[f] = true;
      return;
    }
    const auto fit = vb::fit_single(train_task, hyper, opts.fit);
    const Matrix coef = dss_solve(train_task.x, fit.state.beta_mean, path.lambdas);
    const Matrix resid = (test_task.x * coef).colwise() - test_task.y;
    fold_sse.row(static_cast<Eigen::Index>(f)) = resid.colwise().squaredNorm();
    fold_rows[f] = static_cast<Eigen::Index>(test.size());
  });

  SelectionResult result;
  result.method = Method::kDss;
  std::vector<int> used;
  for (int f = 0; f < folds; ++f) {
    if (skipped[f]) {
      result.warnings.push_back("task " + std::to_string(task.index) + ": fold " +
                                std::to_string(f + 1) + " has a constant response; skipped");
    } else {
      used.push_back(f);
    }
  }
  if (used.size() < 2)
    throw SelectionUnavailable("dss_select: fewer than two usable folds for task " +
                               std::to_string(task.index));

  double used_rows = 0.0;
  for (int f : used) used_rows += static_cast<double>(fold_rows[f]);
  Vector mse = Vector::Zero(num_lambdas);
  for (int f : used) mse += fold_sse.row(f).transpose();
  mse /= used_rows;

  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < num_lambdas; ++k)
    if (mse[k] < mse[best]) best = k;

  // Standard error of the CV error at the minimizing penalty, from the spread
  // of the per-fold mean squared errors.
  const double kf = static_cast<double>(used.size());
  double mean_fold = 0.0;
  std::vector<double> per_fold;
  for (int f : used) {
    per_fold.push_back(fold_sse(f, best) / static_cast<double>(fold_rows[f]));
    mean_fold += per_fold.back();
  }
  mean_fold /= kf;
  double var = 0.0;
  for (double v : per_fold) var += (v - mean_fold) * (v - mean_fold);
  const double se = std::sqrt(var / (kf - 1.0)) / std::sqrt(kf);

  Eigen::Index chosen = best;
  for (Eigen::Index k = 0; k < num_lambdas; ++k) {
    if (mse[k] <= mse[best] + se) {
      chosen = k;  // lambdas decrease, so the first hit is the largest
      break;
    }
  }
  for (Eigen::Index k = 0; k < num_lambdas; ++k) result.score_trace.emplace_back(path.lambdas[k], mse[k]);
  result.chosen_level = path.lambdas[chosen];
  result.selected.resize(static_cast<std::size_t>(task.s()));
  for (Eigen::Index t = 0; t < task.s(); ++t)
    result.selected[static_cast<std::size_t>(t)] = path.coefficients(t, chosen) != 0.0;
  return result;
}

}  // namespace shrinkhs::selection
