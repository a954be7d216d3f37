#include "shrinkhs/eb.hpp"

#include "shrinkhs/parallel.hpp"
#include "shrinkhs/specfn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace shrinkhs::eb {

GammaHyperEstimate gamma_hyper_from_moments(const std::vector<double>& mean_inv_tau_sq,
                                            const std::vector<double>& mean_log_inv_tau_sq) {
  const std::size_t p = mean_inv_tau_sq.size();
  if (p == 0 || mean_log_inv_tau_sq.size() != p)
    throw InvalidInput("gamma_hyper_from_moments: need matching, non-empty moment vectors");
  double sum = 0.0, sum_log = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    sum += mean_inv_tau_sq[i];
    sum_log += mean_log_inv_tau_sq[i];
  }
  const double pd = static_cast<double>(p);
  const double dispersion = std::log(sum) - sum_log / pd - std::log(pd);

  GammaHyperEstimate est;
  double shape = dispersion > 0.0 ? 0.5 / dispersion : std::numeric_limits<double>::infinity();
  if (p == 1 || !(shape <= kHyperMax)) {
    shape = kHyperMax;
    est.clamped = true;
  } else if (shape < kHyperMin) {
    shape = kHyperMin;
    est.clamped = true;
  }
  double rate = shape * pd / sum;
  if (rate < kHyperMin || rate > kHyperMax) {
    rate = std::clamp(rate, kHyperMin, kHyperMax);
    est.clamped = true;
  }
  est.shape = shape;
  est.rate = rate;
  return est;
}

PincUpdate eb_update_pinc(const std::vector<VariationalState>& states,
                          const std::vector<vb::PreparedTask>& tasks, const Hyperparams& current) {
  const int G = current.num_groups();
  PincUpdate out;
  out.shape = current.group_shape;
  out.rate = current.group_rate;
  for (int g = 0; g < G; ++g) {
    std::vector<double> mean, mean_log;
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (tasks[i].counts()[g] == 0) continue;
      const double a = states[i].tau_shape[g], b = states[i].tau_rate[g];
      mean.push_back(a / b);
      mean_log.push_back(specfn::digamma(a) - std::log(b));
    }
    if (mean.empty()) continue;
    const auto est = gamma_hyper_from_moments(mean, mean_log);
    out.shape[g] = est.shape;
    out.rate[g] = est.rate;
    if (est.clamped) {
      std::ostringstream msg;
      msg << "group " << g + 1 << ": hyperparameter estimate clamped to [" << kHyperMin << ", "
          << kHyperMax << "]";
      if (mean.size() == 1) msg << " (single task: shape not identifiable)";
      out.warnings.push_back(msg.str());
    }
  }
  return out;
}

Vector eb_update_pinc2(const std::vector<VariationalState>& states,
                       const std::vector<vb::PreparedTask>& tasks, const Vector& previous) {
  const Eigen::Index G = previous.size();
  Vector numer = Vector::Zero(G);
  Vector denom = Vector::Zero(G);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& st = states[i];
    const auto& prep = tasks[i];
    const double e_sigma = st.sigma_shape / st.sigma_rate;
    for (Eigen::Index t = 0; t < prep.s(); ++t) {
      const double m2 = st.beta_mean[t] * st.beta_mean[t] + st.beta_var[t];
      numer[prep.group_of(t)] += e_sigma * st.e_inv_lambda_sq[t] * m2;
    }
    for (Eigen::Index g = 0; g < G; ++g) denom[g] += prep.counts()[g];
  }
  Vector out = previous;
  for (Eigen::Index g = 0; g < G; ++g) {
    if (denom[g] > 0.0) out[g] = std::max(numer[g] / denom[g], 1e-12);
  }
  return out;
}

RunResult run(const std::vector<RegressionTask>& tasks, const Hyperparams& hyper0,
              const RunOptions& opts) {
  if (tasks.empty()) throw InvalidInput("eb::run: no tasks");
  const int G = hyper0.num_groups();
  for (const auto& task : tasks) require_valid(task, G);

  RunResult result;
  result.hyper = hyper0;
  std::vector<vb::PreparedTask> prepared;
  prepared.reserve(tasks.size());
  for (const auto& task : tasks) prepared.emplace_back(task, G, opts.fit.woodbury_ratio);
  result.states.reserve(tasks.size());
  for (const auto& task : tasks) result.states.push_back(vb::init_state(task, hyper0, opts.fit));

  if (hyper0.variant == Variant::kPInc && tasks.size() == 1) {
    result.trace.warnings.push_back(
        "single task: the gamma hyperparameter shape is not identifiable and will be clamped");
  }

  const std::size_t p = tasks.size();
  std::vector<double> previous(p, -std::numeric_limits<double>::infinity());
  for (int k = 1; k <= opts.fit.max_iter; ++k) {
    parallel_for(p, opts.threads, [&](std::size_t i) {
      vb::update_beta(result.states[i], prepared[i], result.hyper, opts.fit);
      vb::update_tau(result.states[i], prepared[i], result.hyper, opts.fit);
      vb::update_sigma(result.states[i], prepared[i], result.hyper);
      vb::update_lambda(result.states[i], prepared[i], result.hyper, opts.fit);
    });

    if (result.hyper.variant == Variant::kPInc) {
      auto update = eb_update_pinc(result.states, prepared, result.hyper);
      result.hyper.group_shape = update.shape;
      result.hyper.group_rate = update.rate;
      for (auto& w : update.warnings) {
        if (std::find(result.trace.warnings.begin(), result.trace.warnings.end(), w) ==
            result.trace.warnings.end())
          result.trace.warnings.push_back(std::move(w));
      }
    } else {
      result.hyper.pooled_tau_sq =
          eb_update_pinc2(result.states, prepared, result.hyper.pooled_tau_sq);
    }

    parallel_for(p, opts.threads, [&](std::size_t i) {
      result.states[i].elbo = vb::elbo(result.states[i], prepared[i], result.hyper, opts.fit);
    });

    TraceRecord rec;
    rec.iteration = k;
    rec.shape = result.hyper.group_shape;
    rec.rate = result.hyper.group_rate;
    rec.pooled_tau_sq = result.hyper.pooled_tau_sq;
    double max_delta = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      rec.total_elbo += result.states[i].elbo;
      max_delta = std::max(max_delta, std::abs(result.states[i].elbo - previous[i]));
      previous[i] = result.states[i].elbo;
    }
    rec.max_delta = k >= 2 ? max_delta : std::numeric_limits<double>::infinity();
    result.trace.records.push_back(rec);
    result.iterations = k;
    if (k >= 2 && max_delta < opts.fit.tol) {
      result.converged = true;
      break;
    }
  }

  result.summaries.reserve(p);
  for (const auto& st : result.states) result.summaries.push_back(vb::summarize(st));
  return result;
}

}  // namespace shrinkhs::eb
