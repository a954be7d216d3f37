#include "shrinkhs/cli.hpp"

#include "shrinkhs/csv.hpp"
#include "shrinkhs/eb.hpp"
#include "shrinkhs/gibbs.hpp"
#include "shrinkhs/json_io.hpp"
#include "shrinkhs/parallel.hpp"
#include "shrinkhs/selection.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

namespace shrinkhs::cli {
namespace fs = std::filesystem;
using io::format_double;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void add_unique(std::vector<std::string>& list, const std::string& item) {
  if (std::find(list.begin(), list.end(), item) == list.end()) list.push_back(item);
}

std::vector<netsim::Method> parse_methods(const std::string& text) {
  std::vector<netsim::Method> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(netsim::method_from_string(item));
    } catch (const InvalidInput& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("--methods: at least one method is required");
  return out;
}

eb::RunOptions run_options(const RunConfig& cfg) {
  eb::RunOptions opts;
  opts.fit.tol = cfg.tol;
  opts.fit.max_iter = cfg.max_iter;
  opts.fit.tau_shape = cfg.tau_shape;
  opts.fit.full_covariance = false;
  opts.threads = cfg.threads;
  return opts;
}

selection::SelectOptions select_options(const RunConfig& cfg) {
  selection::SelectOptions opts;
  opts.fit = run_options(cfg).fit;
  opts.threads = 1;  // tasks are already spread over the workers
  opts.folds = cfg.folds;
  return opts;
}

// Runs the configured selector on every task. DSS falls back to thresholding
// (with a warning) where it cannot be applied.
std::vector<selection::SelectionResult> select_all(const RunConfig& cfg,
                                                   const std::vector<RegressionTask>& tasks,
                                                   const Hyperparams& hyper,
                                                   const std::vector<PosteriorSummary>& summaries,
                                                   std::vector<std::string>& warnings) {
  std::vector<selection::SelectionResult> out(tasks.size());
  if (cfg.selector == Selector::kNone) {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      out[i].selected.assign(static_cast<std::size_t>(tasks[i].s()), false);
    return out;
  }
  const auto opts = select_options(cfg);
  std::vector<std::string> fallbacks(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    if (cfg.selector == Selector::kDss) {
      try {
        out[i] = selection::dss_select(tasks[i], hyper, summaries[i].means, opts);
        return;
      } catch (const selection::SelectionUnavailable& e) {
        fallbacks[i] = std::string(e.what()) + "; using threshold selection";
      }
    }
    out[i] = selection::threshold_select(tasks[i], hyper, summaries[i], opts);
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!fallbacks[i].empty()) warnings.push_back(fallbacks[i]);
    for (const auto& w : out[i].warnings) warnings.push_back(w);
  }
  return out;
}

// Per-task selections for assemble_network; empty when no selector ran.
std::vector<std::vector<bool>> selected_sets(const RunConfig& cfg,
                                             const std::vector<selection::SelectionResult>& sel) {
  std::vector<std::vector<bool>> out;
  if (cfg.selector == Selector::kNone) return out;
  for (const auto& s : sel) out.push_back(s.selected);
  return out;
}

json selection_json(const selection::SelectionResult& sel) {
  return json{{"method", selection::to_string(sel.method)},
              {"chosen_level", sel.chosen_level},
              {"selected", sel.count()}};
}

// Writes coefficients.csv; `index_of(i, t)` labels coefficient t of task i.
template <class IndexFn>
void write_coefficients(const fs::path& path, const std::vector<RegressionTask>& tasks,
                        const std::vector<PosteriorSummary>& summaries,
                        const std::vector<selection::SelectionResult>& selections,
                        IndexFn index_of) {
  io::CsvWriter csv(path, {"task", "index", "group", "mean", "sd", "kappa", "selected"});
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (Eigen::Index t = 0; t < tasks[i].s(); ++t) {
      const bool sel = !selections.empty() && selections[i].selected[static_cast<std::size_t>(t)];
      csv.row({std::to_string(tasks[i].index), std::to_string(index_of(i, t)),
               std::to_string(tasks[i].groups[static_cast<std::size_t>(t)]),
               format_double(summaries[i].means[t]), format_double(summaries[i].sds[t]),
               format_double(summaries[i].kappa[t]), sel ? "true" : "false"});
    }
  }
  csv.close();
}

json task_records(const std::vector<RegressionTask>& tasks,
                  const std::vector<PosteriorSummary>& summaries,
                  const std::vector<selection::SelectionResult>* selections,
                  const std::vector<bool>* converged = nullptr) {
  json arr = json::array();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    json rec{{"index", tasks[i].index},
             {"n", tasks[i].n()},
             {"s", tasks[i].s()},
             {"elbo", summaries[i].elbo}};
    if (converged) rec["converged"] = static_cast<bool>((*converged)[i]);
    if (selections && !selections->empty()) rec["selection"] = selection_json((*selections)[i]);
    arr.push_back(std::move(rec));
  }
  return arr;
}

json base_summary(const RunConfig& cfg) {
  return json{{"schema_version", kSchemaVersion},
              {"command", to_string(cfg.command)},
              {"config", config_to_json(cfg)}};
}

void write_timings(const RunConfig& cfg, const std::vector<std::pair<std::string, double>>& rows) {
  if (!cfg.timings) return;
  io::CsvWriter csv(fs::path(cfg.out) / "timings.csv", {"stage", "seconds"});
  for (const auto& [stage, secs] : rows) csv.row({stage, format_double(secs)});
  csv.close();
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& log) {
  for (const auto& w : warnings) log << "warning: " << w << '\n';
}

std::vector<PosteriorSummary> with_kappa(std::vector<PosteriorSummary> summaries,
                                         const Matrix& sym) {
  const int p = static_cast<int>(summaries.size());
  for (int i = 0; i < p; ++i)
    for (int t = 0; t < p; ++t)
      if (t != i) summaries[i].kappa[netsim::column_of(i, t)] = sym(i, t);
  return summaries;
}

void write_edges(const fs::path& path, const NetworkEstimate& net,
                 const std::vector<std::string>& names) {
  io::CsvWriter csv(path, {"node_i", "node_j", "name_i", "name_j", "strength"});
  for (const auto& [i, j] : net.edges)
    csv.row({std::to_string(i + 1), std::to_string(j + 1), names[i], names[j],
             format_double(net.strength(i, j))});
  csv.close();
}

// ---------------------------------------------------------------- fit, network

struct FittedSystem {
  std::vector<PosteriorSummary> summaries;
  std::vector<selection::SelectionResult> selections;
  Hyperparams hyper;
  json eb_info;
  bool converged = true;
  std::vector<std::string> warnings;
  double fit_seconds = 0.0;
  double select_seconds = 0.0;
};

FittedSystem fit_and_select(const RunConfig& cfg, const std::vector<RegressionTask>& tasks,
                            bool symmetrize) {
  FittedSystem fs_out;
  const int G = std::max(1, infer_num_groups(tasks));
  auto start = std::chrono::steady_clock::now();
  auto result = eb::run(tasks, Hyperparams::initial(G, cfg.variant), run_options(cfg));
  fs_out.fit_seconds = seconds_since(start);
  fs_out.hyper = result.hyper;
  fs_out.converged = result.converged;
  fs_out.warnings = result.trace.warnings;
  fs_out.eb_info = json{{"iterations", result.iterations},
                        {"converged", result.converged},
                        {"final_max_elbo_change", result.trace.records.empty()
                                                      ? 0.0
                                                      : result.trace.records.back().max_delta}};
  fs_out.summaries = std::move(result.summaries);
  if (symmetrize) {
    const Matrix sym = selection::symmetrize_kappa(netsim::directed_kappa(fs_out.summaries));
    fs_out.summaries = with_kappa(std::move(fs_out.summaries), sym);
  }
  start = std::chrono::steady_clock::now();
  fs_out.selections = select_all(cfg, tasks, fs_out.hyper, fs_out.summaries, fs_out.warnings);
  fs_out.select_seconds = seconds_since(start);
  return fs_out;
}

int run_fit(const RunConfig& cfg, std::ostream& log) {
  const auto tasks = load_general_tasks(cfg.response, cfg.design, cfg.groups, cfg.standardize);
  log << "fit: " << tasks.size() << " tasks\n";
  auto fitted = fit_and_select(cfg, tasks, false);
  const fs::path out(cfg.out);
  write_coefficients(out / "coefficients.csv", tasks, fitted.summaries, fitted.selections,
                     [](std::size_t, Eigen::Index t) { return t + 1; });
  json summary = base_summary(cfg);
  summary["hyper"] = fitted.hyper;
  summary["eb"] = fitted.eb_info;
  summary["tasks"] = task_records(tasks, fitted.summaries, &fitted.selections);
  summary["warnings"] = fitted.warnings;
  io::write_json(out / "summary.json", summary);
  write_timings(cfg, {{"fit", fitted.fit_seconds}, {"select", fitted.select_seconds}});
  print_warnings(fitted.warnings, log);
  return fitted.converged ? kExitOk : kExitNonConvergence;
}

int run_network(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_data_matrix(cfg.data, cfg.standardize);
  const int p = static_cast<int>(data.values.cols());
  std::optional<netsim::Adjacency> prior;
  if (!cfg.prior.empty()) prior = load_adjacency(cfg.prior, p);
  const auto tasks = netsim::build_regression_system(data.values, prior);
  log << "network: n = " << data.values.rows() << ", p = " << p << '\n';
  auto fitted = fit_and_select(cfg, tasks, true);
  const auto net = netsim::assemble_network(fitted.summaries,
                                            selected_sets(cfg, fitted.selections));
  const fs::path out(cfg.out);
  write_coefficients(out / "coefficients.csv", tasks, fitted.summaries, fitted.selections,
                     [](std::size_t i, Eigen::Index t) {
                       return t < static_cast<Eigen::Index>(i) ? t + 1 : t + 2;
                     });
  write_edges(out / "edges.csv", net, data.names);
  json summary = base_summary(cfg);
  summary["hyper"] = fitted.hyper;
  summary["eb"] = fitted.eb_info;
  summary["nodes"] = data.names;
  summary["edge_count"] = net.edges.size();
  summary["tasks"] = task_records(tasks, fitted.summaries, &fitted.selections);
  summary["warnings"] = fitted.warnings;
  io::write_json(out / "summary.json", summary);
  write_timings(cfg, {{"fit", fitted.fit_seconds}, {"select", fitted.select_seconds}});
  print_warnings(fitted.warnings, log);
  log << "network: " << net.edges.size() << " edges\n";
  return fitted.converged ? kExitOk : kExitNonConvergence;
}

// ---------------------------------------------------------------- select

int run_select(const RunConfig& cfg, std::ostream& log) {
  const json prior_run = io::read_json(cfg.hyper);
  if (!prior_run.contains("hyper")) throw io::IoError(cfg.hyper + ": no \"hyper\" entry");
  Hyperparams hyper;
  try {
    hyper = prior_run.at("hyper").get<Hyperparams>();
  } catch (const json::exception& e) {
    throw io::IoError(cfg.hyper + ": malformed hyperparameters (" + e.what() + ")");
  }

  const bool network = !cfg.data.empty();
  std::vector<RegressionTask> tasks;
  std::vector<std::string> names;
  if (network) {
    auto data = load_data_matrix(cfg.data, cfg.standardize);
    std::optional<netsim::Adjacency> prior;
    if (!cfg.prior.empty()) prior = load_adjacency(cfg.prior, static_cast<int>(data.values.cols()));
    tasks = netsim::build_regression_system(data.values, prior);
    names = std::move(data.names);
  } else {
    tasks = load_general_tasks(cfg.response, cfg.design, cfg.groups, cfg.standardize);
  }
  for (const auto& t : tasks) {
    if (auto err = validate_task(t, hyper.num_groups()))
      throw InvalidInput("task " + std::to_string(t.index) + ": " + err->message +
                         " (labels must fit the stored hyperparameters)");
  }

  const auto start = std::chrono::steady_clock::now();
  std::vector<PosteriorSummary> summaries(tasks.size());
  std::vector<bool> converged(tasks.size());
  const auto fit_opts = run_options(cfg).fit;
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    auto fit = vb::fit_single(tasks[i], hyper, fit_opts);
    summaries[i] = std::move(fit.summary);
    converged[i] = fit.converged;
  });
  if (network) {
    const Matrix sym = selection::symmetrize_kappa(netsim::directed_kappa(summaries));
    summaries = with_kappa(std::move(summaries), sym);
  }
  std::vector<std::string> warnings;
  const auto selections = select_all(cfg, tasks, hyper, summaries, warnings);
  const double secs = seconds_since(start);

  const fs::path out(cfg.out);
  json summary = base_summary(cfg);
  summary["hyper"] = hyper;
  if (network) {
    const auto net = netsim::assemble_network(summaries, selected_sets(cfg, selections));
    write_coefficients(out / "coefficients.csv", tasks, summaries, selections,
                       [](std::size_t i, Eigen::Index t) {
                         return t < static_cast<Eigen::Index>(i) ? t + 1 : t + 2;
                       });
    write_edges(out / "edges.csv", net, names);
    summary["edge_count"] = net.edges.size();
  } else {
    write_coefficients(out / "coefficients.csv", tasks, summaries, selections,
                       [](std::size_t, Eigen::Index t) { return t + 1; });
  }
  summary["tasks"] = task_records(tasks, summaries, &selections, &converged);
  summary["warnings"] = warnings;
  io::write_json(out / "summary.json", summary);
  write_timings(cfg, {{"refit_and_select", secs}});
  print_warnings(warnings, log);
  const bool all_converged = std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
  log << "select: " << tasks.size() << " tasks refitted\n";
  return all_converged ? kExitOk : kExitNonConvergence;
}

// ---------------------------------------------------------------- simulate

int run_simulate(const RunConfig& cfg, std::ostream& log) {
  netsim::ReplicateSpec spec;
  spec.precision.p = cfg.p;
  spec.precision.topology = cfg.topology;
  spec.precision.bandwidth = cfg.bandwidth;
  spec.precision.clusters = cfg.clusters;
  spec.precision.cluster_prob = cfg.cluster_prob;
  spec.precision.hubs = cfg.hubs;
  spec.n = cfg.n;
  spec.prior = netsim::prior_mode_from_string(cfg.prior.empty() ? "none" : cfg.prior);
  spec.corruption = cfg.prior_corruption;
  const auto opts = run_options(cfg);

  const fs::path out(cfg.out);
  io::CsvWriter metrics(out / "metrics.csv", {"topology", "n", "p", "prior", "method", "rep", "err0",
                                              "err1", "auc", "iterations", "converged"});
  io::CsvWriter roc(out / "roc.csv",
                    {"topology", "n", "p", "prior", "method", "rep", "fpr", "tpr"});
  const std::vector<std::string> cell{netsim::to_string(cfg.topology), std::to_string(cfg.n),
                                      std::to_string(cfg.p), netsim::to_string(spec.prior)};
  auto with_cell = [&](std::vector<std::string> tail) {
    std::vector<std::string> row = cell;
    row.insert(row.end(), tail.begin(), tail.end());
    return row;
  };

  struct Totals {
    double err0 = 0.0, err1 = 0.0, auc = 0.0;
    int auc_count = 0, converged = 0;
  };
  std::vector<Totals> totals(cfg.methods.size());
  json runs = json::array();
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, double>> timing_rows;

  for (int r = 1; r <= cfg.reps; ++r) {
    spec.seed = netsim::split_seed(cfg.seed, static_cast<std::uint64_t>(r));
    const auto rep = netsim::make_replicate(spec);
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      const auto res = netsim::run_method(rep, cfg.methods[m], opts);
      const std::string method = netsim::to_string(res.method);
      metrics.row(with_cell({method, std::to_string(r), format_double(res.errors.err0),
                             format_double(res.errors.err1),
                             res.roc.auc ? format_double(*res.roc.auc) : "",
                             std::to_string(res.iterations), res.converged ? "true" : "false"}));
      for (const auto& [fpr, tpr] : res.roc.points)
        roc.row(with_cell({method, std::to_string(r), format_double(fpr), format_double(tpr)}));
      auto& tot = totals[m];
      tot.err0 += res.errors.err0;
      tot.err1 += res.errors.err1;
      if (res.roc.auc) {
        tot.auc += *res.roc.auc;
        ++tot.auc_count;
      }
      tot.converged += res.converged ? 1 : 0;
      runs.push_back(json{{"rep", r},
                          {"method", method},
                          {"hyper", res.hyper},
                          {"iterations", res.iterations},
                          {"converged", res.converged}});
      for (const auto& w : res.warnings) add_unique(warnings, method + ": " + w);
      timing_rows.emplace_back(method + " rep " + std::to_string(r), res.seconds);
      log << "simulate: rep " << r << ' ' << method << " err0=" << res.errors.err0
          << " err1=" << res.errors.err1 << '\n';
    }
  }
  metrics.close();
  roc.close();

  json methods = json::array();
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    const auto& tot = totals[m];
    json rec{{"method", netsim::to_string(cfg.methods[m])},
             {"mean_err0", tot.err0 / cfg.reps},
             {"mean_err1", tot.err1 / cfg.reps},
             {"converged_reps", tot.converged}};
    rec["mean_auc"] = tot.auc_count ? json(tot.auc / tot.auc_count) : json(nullptr);
    methods.push_back(std::move(rec));
  }
  json summary = base_summary(cfg);
  summary["methods"] = methods;
  summary["runs"] = runs;
  summary["warnings"] = warnings;
  io::write_json(out / "summary.json", summary);
  write_timings(cfg, timing_rows);
  print_warnings(warnings, log);
  return kExitOk;
}

// ---------------------------------------------------------------- bench

int run_bench(const RunConfig& cfg, std::ostream& log) {
  std::vector<RegressionTask> tasks;
  std::vector<Vector> truth;
  if (cfg.topology_given) {
    netsim::ReplicateSpec spec;
    spec.precision.p = cfg.p;
    spec.precision.topology = cfg.topology;
    spec.precision.bandwidth = cfg.bandwidth;
    spec.precision.clusters = cfg.clusters;
    spec.precision.cluster_prob = cfg.cluster_prob;
    spec.precision.hubs = cfg.hubs;
    spec.n = cfg.n;
    spec.seed = netsim::split_seed(cfg.seed, 1);
    auto rep = netsim::make_replicate(spec);
    tasks = std::move(rep.tasks);
    truth = std::move(rep.truth.coefficients);
  } else {
    auto sim = netsim::make_sparse_regressions(cfg.reps, cfg.n, cfg.p, cfg.signals, cfg.signal,
                                               netsim::split_seed(cfg.seed, 1));
    tasks = std::move(sim.tasks);
    truth = std::move(sim.truth);
  }

  auto start = std::chrono::steady_clock::now();
  auto vb_fit = eb::run(tasks, Hyperparams::initial(1, cfg.variant), run_options(cfg));
  const double vb_seconds = seconds_since(start);

  std::size_t sampled = tasks.size();
  if (cfg.topology_given && cfg.nodes > 0) sampled = std::min<std::size_t>(sampled, cfg.nodes);
  std::vector<gibbs::McmcSummary> chains(sampled);
  start = std::chrono::steady_clock::now();
  parallel_for(sampled, cfg.threads, [&](std::size_t i) {
    gibbs::McmcOptions mo;
    mo.n_iter = cfg.mcmc_iter;
    mo.n_burnin = cfg.mcmc_burnin;
    mo.seed = netsim::split_seed(cfg.seed, 1000 + i);
    chains[i] = gibbs::gibbs_fit(tasks[i], vb_fit.hyper, mo);
  });
  const double mcmc_seconds = seconds_since(start);

  const fs::path out(cfg.out);
  io::CsvWriter csv(out / "bench.csv", {"task", "index", "truth", "vb_mean", "vb_sd", "mcmc_mean",
                                        "mcmc_sd", "mcmc_ess"});
  std::vector<double> vb_all, mc_all;
  double max_diff = 0.0, vb_l1 = 0.0, mc_l1 = 0.0;
  for (std::size_t i = 0; i < sampled; ++i) {
    const auto& vs = vb_fit.summaries[i];
    const auto& ch = chains[i];
    for (Eigen::Index t = 0; t < tasks[i].s(); ++t) {
      csv.row({std::to_string(tasks[i].index), std::to_string(t + 1), format_double(truth[i][t]),
               format_double(vs.means[t]), format_double(vs.sds[t]), format_double(ch.means[t]),
               format_double(ch.sds[t]), format_double(ch.ess[t])});
      vb_all.push_back(vs.means[t]);
      mc_all.push_back(ch.means[t]);
      max_diff = std::max(max_diff, std::abs(vs.means[t] - ch.means[t]));
      if (truth[i][t] != 0.0) {
        vb_l1 += std::abs(vs.means[t] - truth[i][t]);
        mc_l1 += std::abs(ch.means[t] - truth[i][t]);
      }
    }
  }
  csv.close();

  const double k = static_cast<double>(vb_all.size());
  const double mv = std::accumulate(vb_all.begin(), vb_all.end(), 0.0) / k;
  const double mm = std::accumulate(mc_all.begin(), mc_all.end(), 0.0) / k;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t j = 0; j < vb_all.size(); ++j) {
    sxy += (vb_all[j] - mv) * (mc_all[j] - mm);
    sxx += (vb_all[j] - mv) * (vb_all[j] - mv);
    syy += (mc_all[j] - mm) * (mc_all[j] - mm);
  }
  const double corr = sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;

  json summary = base_summary(cfg);
  summary["hyper"] = vb_fit.hyper;
  summary["eb"] = json{{"iterations", vb_fit.iterations}, {"converged", vb_fit.converged}};
  summary["sampled_tasks"] = sampled;
  summary["comparison"] = json{{"max_abs_mean_difference", max_diff},
                               {"mean_correlation", corr},
                               {"vb_l1_error_nonzero", vb_l1 / static_cast<double>(sampled)},
                               {"mcmc_l1_error_nonzero", mc_l1 / static_cast<double>(sampled)}};
  summary["warnings"] = vb_fit.trace.warnings;
  io::write_json(out / "summary.json", summary);
  // VB time covers all tasks; scale to the sampled ones for the ratio.
  const double vb_share = vb_seconds * static_cast<double>(sampled) / tasks.size();
  write_timings(cfg, {{"vb", vb_seconds}, {"mcmc", mcmc_seconds}});
  log << "bench: VB " << vb_seconds << " s for " << tasks.size() << " tasks, MCMC " << mcmc_seconds
      << " s for " << sampled << " tasks (ratio " << mcmc_seconds / std::max(vb_share, 1e-12)
      << "x); max |mean difference| " << max_diff << ", correlation " << corr << '\n';
  print_warnings(vb_fit.trace.warnings, log);
  return kExitOk;
}

}  // namespace

const char* to_string(Command c) {
  switch (c) {
    case Command::kFit: return "fit";
    case Command::kNetwork: return "network";
    case Command::kSimulate: return "simulate";
    case Command::kSelect: return "select";
    case Command::kBench: return "bench";
  }
  return "?";
}

const char* to_string(Selector s) {
  switch (s) {
    case Selector::kThreshold: return "threshold";
    case Selector::kDss: return "dss";
    case Selector::kNone: return "none";
  }
  return "?";
}

json config_to_json(const RunConfig& cfg) {
  json methods = json::array();
  for (auto m : cfg.methods) methods.push_back(netsim::to_string(m));
  return json{{"command", to_string(cfg.command)},
              {"response", cfg.response},
              {"design", cfg.design},
              {"groups", cfg.groups},
              {"data", cfg.data},
              {"prior", cfg.prior},
              {"hyper", cfg.hyper},
              {"out", cfg.out},
              {"variant", to_string(cfg.variant)},
              {"selector", to_string(cfg.selector)},
              {"tau_shape",
               cfg.tau_shape == vb::TauShapeRule::kConjugate ? "conjugate" : "halved"},
              {"tol", cfg.tol},
              {"max_iter", cfg.max_iter},
              {"seed", cfg.seed},
              {"threads", cfg.threads},
              {"standardize", cfg.standardize},
              {"folds", cfg.folds},
              {"topology", netsim::to_string(cfg.topology)},
              {"n", cfg.n},
              {"p", cfg.p},
              {"reps", cfg.reps},
              {"prior_corruption", cfg.prior_corruption},
              {"methods", methods},
              {"bandwidth", cfg.bandwidth},
              {"clusters", cfg.clusters},
              {"cluster_prob", cfg.cluster_prob},
              {"hubs", cfg.hubs},
              {"mcmc_iter", cfg.mcmc_iter},
              {"mcmc_burnin", cfg.mcmc_burnin},
              {"signals", cfg.signals},
              {"signal", cfg.signal},
              {"nodes", cfg.nodes}};
}

ParseOutcome parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grouped horseshoe regression by variational Bayes with empirical Bayes priors",
               "shrinkhs"};
  app.set_config("--config", "", "Read default flag values from a key=value file");
  app.require_subcommand(1, 1);

  RunConfig cfg;
  std::string variant = "pinc", selector = "threshold", tau_shape = "conjugate",
              topology = "band", methods = "pinc,pinc2,ridge";
  unsigned threads = 0;

  app.add_option("--response", cfg.response, "General mode: response CSV (one column per task)")
      ->check(CLI::ExistingFile);
  app.add_option("--design", cfg.design, "General mode: design CSV, task blocks side by side")
      ->check(CLI::ExistingFile);
  app.add_option("--groups", cfg.groups, "General mode: group labels, one row per task")
      ->check(CLI::ExistingFile);
  app.add_option("--data", cfg.data, "Network mode: n x p data CSV")->check(CLI::ExistingFile);
  app.add_option("--prior", cfg.prior,
                 "Adjacency CSV for fit/network/select; none|true|corrupted for simulate");
  app.add_option("--hyper", cfg.hyper, "select: summary.json with frozen hyperparameters")
      ->check(CLI::ExistingFile);
  app.add_option("--out", cfg.out, "Output directory")->capture_default_str();
  app.add_option("--variant", variant, "pinc or pinc2")
      ->check(CLI::IsMember({"pinc", "pinc2"}))
      ->capture_default_str();
  app.add_option("--selector", selector, "threshold, dss or none")
      ->check(CLI::IsMember({"threshold", "dss", "none"}))
      ->capture_default_str();
  app.add_option("--tau-shape", tau_shape, "q(tau) shape rule: conjugate or halved")
      ->check(CLI::IsMember({"conjugate", "halved"}))
      ->capture_default_str();
  app.add_option("--tol", cfg.tol, "ELBO change threshold")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--max-iter", cfg.max_iter, "Iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads (default: SHRINKHS_THREADS, then all cores)");
  app.add_flag("--standardize", cfg.standardize, "Center and scale every input column");
  app.add_option("--folds", cfg.folds, "DSS cross-validation folds")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
  app.add_flag("--timings", cfg.timings, "Also write wall-clock times to timings.csv");
  app.add_option("--topology", topology, "band, cluster or hub")
      ->check(CLI::IsMember({"band", "cluster", "hub"}))
      ->capture_default_str();
  app.add_option("--n", cfg.n, "Observations")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--p", cfg.p, "Variables (simulate) or coefficients per task (bench)")
      ->check(CLI::Range(2, 100000))
      ->capture_default_str();
  app.add_option("--reps", cfg.reps, "Replicates")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--prior-corruption", cfg.prior_corruption, "Fraction of prior edges swapped")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--methods", methods, "simulate: comma list of pinc, pinc2, ridge")
      ->capture_default_str();
  app.add_option("--bandwidth", cfg.bandwidth, "Band topology bandwidth")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--clusters", cfg.clusters, "Cluster topology: number of clusters")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--cluster-prob", cfg.cluster_prob, "Cluster topology: within-cluster edge probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--hubs", cfg.hubs, "Hub topology: number of hubs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--mcmc-iter", cfg.mcmc_iter, "bench: Gibbs iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--mcmc-burnin", cfg.mcmc_burnin, "bench: Gibbs burn-in")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--signals", cfg.signals, "bench: nonzero coefficients per task")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--signal", cfg.signal, "bench: size of the nonzero coefficients")
      ->capture_default_str();
  app.add_option("--nodes", cfg.nodes, "bench on a network: nodes sampled by MCMC (0 = all)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  auto* fit = app.add_subcommand("fit", "Fit grouped regressions from response/design CSVs");
  auto* network = app.add_subcommand("network", "Infer a Gaussian graphical network from data");
  auto* simulate = app.add_subcommand("simulate", "Simulation study on synthetic networks");
  auto* select = app.add_subcommand("select", "Refit with frozen hyperparameters and select");
  auto* bench = app.add_subcommand("bench", "Compare VB with the Gibbs sampler");
  for (auto* sub : {fit, network, simulate, select, bench}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return {std::nullopt, code == 0 ? kExitOk : kExitUsage};
  }

  try {
    if (fit->parsed()) cfg.command = Command::kFit;
    if (network->parsed()) cfg.command = Command::kNetwork;
    if (simulate->parsed()) cfg.command = Command::kSimulate;
    if (select->parsed()) cfg.command = Command::kSelect;
    if (bench->parsed()) cfg.command = Command::kBench;

    cfg.variant = variant_from_string(variant);
    cfg.selector = selector == "threshold" ? Selector::kThreshold
                   : selector == "dss"     ? Selector::kDss
                                           : Selector::kNone;
    cfg.tau_shape =
        tau_shape == "conjugate" ? vb::TauShapeRule::kConjugate : vb::TauShapeRule::kHalved;
    cfg.topology = netsim::topology_from_string(topology);
    cfg.topology_given = app.count("--topology") > 0;
    cfg.methods = parse_methods(methods);
    cfg.threads = resolve_threads(threads);

    switch (cfg.command) {
      case Command::kFit:
        if (cfg.response.empty() || cfg.design.empty())
          throw UsageError("fit needs --response and --design");
        break;
      case Command::kNetwork:
        if (cfg.data.empty()) throw UsageError("network needs --data");
        break;
      case Command::kSelect:
        if (cfg.hyper.empty()) throw UsageError("select needs --hyper");
        if (cfg.data.empty() && (cfg.response.empty() || cfg.design.empty()))
          throw UsageError("select needs --data, or --response and --design");
        break;
      case Command::kSimulate:
        if (!cfg.prior.empty() && cfg.prior != "none" && cfg.prior != "true" &&
            cfg.prior != "corrupted")
          throw UsageError("simulate: --prior must be none, true or corrupted");
        break;
      case Command::kBench:
        if (cfg.mcmc_burnin >= cfg.mcmc_iter)
          throw UsageError("bench: --mcmc-burnin must be below --mcmc-iter");
        break;
    }
    if (cfg.command != Command::kSimulate && !cfg.prior.empty() && !fs::is_regular_file(cfg.prior))
      throw UsageError("--prior: file not found: " + cfg.prior);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\nRun with --help for more information.\n";
    return {std::nullopt, kExitUsage};
  }
  return {cfg, kExitOk};
}

void standardize_columns(Matrix& m) {
  const double n = static_cast<double>(m.rows());
  if (m.rows() < 2) throw InvalidInput("standardize: need at least two rows");
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).mean();
    m.col(c).array() -= mean;
    const double sd = std::sqrt(m.col(c).squaredNorm() / (n - 1.0));
    if (!(sd > 0.0)) throw InvalidInput("standardize: column " + std::to_string(c + 1) + " is constant");
    m.col(c) /= sd;
  }
}

std::vector<RegressionTask> load_general_tasks(const std::string& response,
                                               const std::string& design,
                                               const std::string& groups, bool standardize) {
  Matrix y = io::to_matrix(io::read_csv(response));
  Matrix x = io::to_matrix(io::read_csv(design));
  if (y.rows() != x.rows()) {
    std::ostringstream msg;
    msg << "response has " << y.rows() << " rows but design has " << x.rows();
    throw io::IoError(msg.str());
  }
  if (y.rows() == 0) throw io::IoError(response + ": no data rows");
  if (standardize) {
    standardize_columns(y);
    standardize_columns(x);
  }
  const auto p = y.cols();
  std::vector<RegressionTask> tasks(static_cast<std::size_t>(p));
  if (groups.empty()) {
    for (Eigen::Index i = 0; i < p; ++i) {
      auto& t = tasks[static_cast<std::size_t>(i)];
      t.index = static_cast<int>(i + 1);
      t.y = y.col(i);
      t.x = x;
      t.groups.assign(static_cast<std::size_t>(x.cols()), 1);
    }
  } else {
    const auto labels = io::read_csv(groups, true);
    if (static_cast<Eigen::Index>(labels.rows.size()) != p) {
      std::ostringstream msg;
      msg << groups << ": " << labels.rows.size() << " label rows for " << p << " tasks";
      throw io::IoError(msg.str());
    }
    Eigen::Index col = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto& row = labels.rows[static_cast<std::size_t>(i)];
      const auto s = static_cast<Eigen::Index>(row.size());
      if (col + s > x.cols()) {
        std::ostringstream msg;
        msg << groups << ": label rows need " << col + s << " design columns, design has "
            << x.cols();
        throw io::IoError(msg.str());
      }
      auto& t = tasks[static_cast<std::size_t>(i)];
      t.index = static_cast<int>(i + 1);
      t.y = y.col(i);
      t.x = x.middleCols(col, s);
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (row[k] != std::floor(row[k]) || row[k] < 1.0) {
          std::ostringstream msg;
          msg << groups << ": task " << i + 1 << ", entry " << k + 1
              << ": group labels are positive integers";
          throw io::IoError(msg.str());
        }
        t.groups.push_back(static_cast<int>(row[k]));
      }
      col += s;
    }
    if (col != x.cols()) {
      std::ostringstream msg;
      msg << groups << ": label rows cover " << col << " design columns, design has " << x.cols();
      throw io::IoError(msg.str());
    }
  }
  for (const auto& t : tasks) {
    if (auto e = validate_task(t)) throw io::IoError("task " + std::to_string(t.index) + ": " + e->message);
  }
  return tasks;
}

DataMatrix load_data_matrix(const std::string& path, bool standardize) {
  auto table = io::read_csv(path);
  DataMatrix out;
  out.values = io::to_matrix(table);
  out.names = std::move(table.header);
  if (out.values.rows() < 1) throw io::IoError(path + ": no data rows");
  if (out.values.cols() < 2) throw io::IoError(path + ": need at least two variables");
  if (standardize) standardize_columns(out.values);
  return out;
}

netsim::Adjacency load_adjacency(const std::string& path, int p) {
  const Matrix m = io::to_matrix(io::read_csv(path));
  if (m.rows() != p || m.cols() != p) {
    std::ostringstream msg;
    msg << path << ": adjacency is " << m.rows() << " x " << m.cols() << ", expected " << p << " x "
        << p;
    throw io::IoError(msg.str());
  }
  netsim::Adjacency adj(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      if (m(i, j) != 0.0 && m(i, j) != 1.0) {
        std::ostringstream msg;
        msg << path << ": row " << i + 1 << ", column " << j + 1 << ": value " << m(i, j)
            << " is not 0 or 1";
        throw io::IoError(msg.str());
      }
      adj(i, j) = i != j && m(i, j) == 1.0;
    }
  }
  return adj;
}

int run(const RunConfig& cfg, std::ostream& log) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out))
    throw io::IoError("cannot create output directory '" + cfg.out + "'");
  switch (cfg.command) {
    case Command::kFit: return run_fit(cfg, log);
    case Command::kNetwork: return run_network(cfg, log);
    case Command::kSimulate: return run_simulate(cfg, log);
    case Command::kSelect: return run_select(cfg, log);
    case Command::kBench: return run_bench(cfg, log);
  }
  return kExitError;
}

int main(int argc, const char* const* argv) {
  const auto parsed = parse_args(argc, argv, std::cout, std::cerr);
  if (!parsed.config) return parsed.exit_code;
  try {
    return run(*parsed.config, std::cerr);
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const InvalidInput& e) {
    std::cerr << "error: invalid input: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace shrinkhs::cli
