#pragma once

#include "shrinkhs/model.hpp"
#include "shrinkhs/netsim.hpp"
#include "shrinkhs/vb_engine.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace shrinkhs::cli {

inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;  // numerical failure or other unexpected error
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;     // unreadable, malformed or unwritable files
inline constexpr int kExitNonConvergence = 4;

enum class Command { kFit, kNetwork, kSimulate, kSelect, kBench };
enum class Selector { kThreshold, kDss, kNone };

const char* to_string(Command c);
const char* to_string(Selector s);

struct RunConfig {
  Command command = Command::kFit;

  // Inputs.
  std::string response;  // general mode: n x p responses
  std::string design;    // general mode: n x sum(s_i), task blocks side by side
  std::string groups;    // general mode: one ragged row of labels per task
  std::string data;      // network mode: n x p
  std::string prior;     // adjacency CSV (fit/network/select) or none|true|corrupted (simulate)
  std::string hyper;     // select: summary.json holding frozen hyperparameters
  std::string out = "shrinkhs-out";

  Variant variant = Variant::kPInc;
  Selector selector = Selector::kThreshold;
  vb::TauShapeRule tau_shape = vb::TauShapeRule::kConjugate;
  double tol = 1e-3;
  int max_iter = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;  // resolved, never 0
  bool standardize = false;
  int folds = 5;
  bool timings = false;

  // Simulation and benchmark settings.
  netsim::Topology topology = netsim::Topology::kBand;
  bool topology_given = false;
  int n = 10;
  int p = 100;
  int reps = 20;
  double prior_corruption = 0.5;
  std::vector<netsim::Method> methods{netsim::Method::kPInc, netsim::Method::kPInc2,
                                      netsim::Method::kRidge};
  int bandwidth = 1;
  int clusters = 5;
  double cluster_prob = 0.3;
  int hubs = 1;
  long mcmc_iter = 40000;
  long mcmc_burnin = 20000;
  int signals = 2;
  double signal = 2.0;
  int nodes = 0;  // bench on a network: nodes sampled by MCMC (0 = all)
};

nlohmann::json config_to_json(const RunConfig& cfg);

struct ParseOutcome {
  std::optional<RunConfig> config;
  int exit_code = kExitOk;  // meaningful when config is empty (help or error)
};

/// Parses a command line (argv[0] is the program name). Help and usage errors
/// are printed to `out` / `err`. A `--config FILE` of key=value lines supplies
/// defaults that explicit flags override.
ParseOutcome parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// General-mode tasks: response columns are tasks; each task's design block is
/// the next s_i design columns, s_i given by its row in the groups file. With
/// no groups file every task uses the whole design with a single group.
std::vector<RegressionTask> load_general_tasks(const std::string& response,
                                               const std::string& design,
                                               const std::string& groups, bool standardize);

/// Network-mode data matrix (n x p) and its column names.
struct DataMatrix {
  Matrix values;
  std::vector<std::string> names;
};
DataMatrix load_data_matrix(const std::string& path, bool standardize);

/// p x p 0/1 adjacency; any other value is an error.
netsim::Adjacency load_adjacency(const std::string& path, int p);

/// Centers each column and scales it to unit sample standard deviation.
void standardize_columns(Matrix& m);

/// Executes a parsed configuration, writing outputs below cfg.out and short
/// progress notes to `log`. Returns the exit status.
int run(const RunConfig& cfg, std::ostream& log);

/// Full entry point: parse, run, and map failures to exit codes.
int main(int argc, const char* const* argv);

}  // namespace shrinkhs::cli
