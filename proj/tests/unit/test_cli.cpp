#include "shrinkhs/cli.hpp"
#include "shrinkhs/csv.hpp"
#include "shrinkhs/json_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace shrinkhs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("shrinkhs_unit_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& file, const std::string& text) const {
    std::ofstream(path / file) << text;
    return path / file;
  }
};

cli::ParseOutcome parse(std::vector<std::string> args) {
  args.insert(args.begin(), "shrinkhs");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::parse_args(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("parse: simulate") {
  const auto r = parse({"simulate", "--topology", "band", "--n", "10", "--p", "100", "--reps", "50",
                        "--seed", "7"});
  REQUIRE(r.config);
  CHECK(r.config->command == cli::Command::kSimulate);
  CHECK(r.config->topology == netsim::Topology::kBand);
  CHECK(r.config->n == 10);
  CHECK(r.config->reps == 50);
  CHECK(r.config->seed == 7);
}

TEST_CASE("parse: usage errors") {
  CHECK(parse({"fit"}).exit_code == cli::kExitUsage);
  CHECK(parse({"simulate", "--bogus"}).exit_code == cli::kExitUsage);
  CHECK(parse({"simulate", "--variant", "pinc3"}).exit_code == cli::kExitUsage);
  CHECK(parse({"simulate", "--prior", "maybe"}).exit_code == cli::kExitUsage);
  CHECK(parse({"network"}).exit_code == cli::kExitUsage);
  CHECK(parse({"--help"}).exit_code == cli::kExitOk);
  CHECK_FALSE(parse({"--help"}).config);
}

TEST_CASE("parse: config file defaults, flags win") {
  TempDir dir("config");
  const auto cfg = dir.write("run.conf", "tol=1e-3\nmax-iter=77\nvariant=pinc2\n");
  const auto r = parse({"simulate", "--config", cfg.string(), "--tol", "1e-4"});
  REQUIRE(r.config);
  CHECK(r.config->tol == 1e-4);
  CHECK(r.config->max_iter == 77);
  CHECK(r.config->variant == Variant::kPInc2);
}

TEST_CASE("csv reading") {
  TempDir dir("csv");
  const auto good = dir.write("a.csv", "x,y\n1,2.5\n\n-3,4e-2\n");
  const auto t = io::read_csv(good);
  CHECK(t.header == std::vector<std::string>{"x", "y"});
  CHECK(io::to_matrix(t)(1, 1) == 0.04);

  const auto bad = dir.write("b.csv", "x,y\n1,abc\n");
  try {
    io::read_csv(bad);
    FAIL("expected an error");
  } catch (const io::IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }
  CHECK_THROWS_AS(io::read_csv(dir.write("c.csv", "x,y\n1,2,3\n")), io::IoError);
  CHECK_THROWS_AS(io::read_csv(dir.write("d.csv", "x\nnan\n")), io::IoError);
  CHECK_THROWS_AS(io::read_csv(dir.path / "missing.csv"), io::IoError);
  CHECK(io::read_csv(dir.write("e.csv", "a,b,c\n1\n1,2,3\n"), true).rows[0].size() == 1);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789}) {
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("hyperparameters json round trip") {
  Hyperparams h = Hyperparams::initial(2, Variant::kPInc2);
  h.group_shape << 1.5, 0.25;
  h.pooled_tau_sq << 0.1, 1.0 / 3.0;
  const nlohmann::json j = h;
  const auto back = j.get<Hyperparams>();
  CHECK(back == h);
  nlohmann::json broken = j;
  broken["group_rate"] = nlohmann::json::array({1.0});
  CHECK_THROWS(broken.get<Hyperparams>());
}

TEST_CASE("adjacency loading") {
  TempDir dir("adj");
  const auto ok = dir.write("ok.csv", "a,b,c\n0,1,0\n1,0,0\n0,0,1\n");
  const auto adj = cli::load_adjacency(ok.string(), 3);
  CHECK(adj(0, 1));
  CHECK_FALSE(adj(2, 2));
  CHECK_THROWS_AS(cli::load_adjacency(dir.write("two.csv", "a,b\n0,2\n2,0\n").string(), 2),
                  io::IoError);
  CHECK_THROWS_AS(cli::load_adjacency(ok.string(), 4), io::IoError);
}

TEST_CASE("general-mode tasks with ragged group rows") {
  TempDir dir("general");
  const auto y = dir.write("y.csv", "t1,t2,t3\n1,2,3\n2,1,0\n0,1,1\n5,2,2\n");
  const auto x = dir.write("x.csv",
                           "a,b,c,d,e,f,g,h\n"
                           "1,0,2,1,0,3,1,2\n0,1,1,2,1,0,0,1\n2,2,0,1,3,1,1,0\n1,3,1,0,2,2,0,1\n");
  const auto g = dir.write("g.csv", "labels\n1,2\n1,1,2,2,1\n1\n");
  const auto tasks = cli::load_general_tasks(y.string(), x.string(), g.string(), false);
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[0].s() == 2);
  CHECK(tasks[1].s() == 5);
  CHECK(tasks[2].s() == 1);
  CHECK(tasks[1].groups == std::vector<int>{1, 1, 2, 2, 1});
  CHECK(tasks[2].x(0, 0) == 2.0);
  const auto short_g = dir.write("g2.csv", "labels\n1,2\n1\n1\n");
  CHECK_THROWS_AS(cli::load_general_tasks(y.string(), x.string(), short_g.string(), false),
                  io::IoError);
  const auto whole = cli::load_general_tasks(y.string(), x.string(), "", false);
  CHECK(whole[0].s() == 8);
}

TEST_CASE("standardization") {
  Matrix m(3, 2);
  m << 1, 5, 2, 5, 3, 6;
  Matrix a = m;
  a.col(1) << 1, 2, 4;
  cli::standardize_columns(a);
  CHECK(std::abs(a.col(0).mean()) < 1e-15);
  CHECK(a.col(0).squaredNorm() / 2.0 == doctest::Approx(1.0));
  Matrix c = Matrix::Ones(3, 2);
  CHECK_THROWS_AS(cli::standardize_columns(c), InvalidInput);
}

TEST_CASE("network run writes the documented files") {
  TempDir dir("network");
  std::string csv = "g1,g2,g3,g4\n";
  // g2 follows g1, g4 follows g3
  const double rows[][2] = {{0.3, -1.0}, {1.2, 0.4}, {-0.7, 2.0}, {0.1, -0.3}, {2.2, 1.1},
                            {-1.5, 0.2}, {0.9, -1.7}, {-0.2, 0.8}, {1.7, -0.6}, {-1.1, 1.4},
                            {0.5, 0.5}, {-0.4, -2.1}, {1.0, 0.0}, {-2.0, 0.9}, {0.7, -0.8}};
  int k = 0;
  for (const auto& r : rows) {
    const double e1 = 0.05 * ((k * 7) % 5 - 2), e2 = 0.05 * ((k * 3) % 5 - 2);
    csv += std::to_string(r[0]) + "," + std::to_string(r[0] + e1) + "," + std::to_string(r[1]) +
           "," + std::to_string(-r[1] + e2) + "\n";
    ++k;
  }
  const auto data = dir.write("data.csv", csv);
  const auto r = parse({"network", "--data", data.string(), "--out", (dir.path / "out").string(),
                        "--threads", "1"});
  REQUIRE(r.config);
  std::ostringstream log;
  const int code = cli::run(*r.config, log);
  CHECK((code == cli::kExitOk || code == cli::kExitNonConvergence));
  for (const char* f : {"coefficients.csv", "edges.csv", "summary.json"})
    CHECK(fs::exists(dir.path / "out" / f));
  CHECK_FALSE(fs::exists(dir.path / "out" / "timings.csv"));
  const auto summary = io::read_json(dir.path / "out" / "summary.json");
  CHECK(summary.at("schema_version") == cli::kSchemaVersion);
  CHECK(summary.at("config").at("threads") == 1);
  std::istringstream edges(slurp(dir.path / "out" / "edges.csv"));
  std::size_t lines = 0;
  for (std::string line; std::getline(edges, line);) lines += !line.empty();
  REQUIRE(lines >= 1);
  CHECK(summary.at("edge_count") == lines - 1);  // minus the header
  CHECK(lines - 1 >= 2);
  std::istringstream coef(slurp(dir.path / "out" / "coefficients.csv"));
  std::string header;
  std::getline(coef, header);
  CHECK(header == "task,index,group,mean,sd,kappa,selected");
  std::size_t coef_rows = 0;
  for (std::string line; std::getline(coef, line);) coef_rows += !line.empty();
  CHECK(coef_rows == 12);
}

TEST_CASE("main maps bad input files to the I/O exit code") {
  TempDir dir("badinput");
  const auto data = dir.write("data.csv", "a,b\n1,x\n");
  const std::string out = (dir.path / "out").string();
  const char* argv[] = {"shrinkhs", "network", "--data", data.c_str(), "--out", out.c_str()};
  CHECK(cli::main(6, argv) == cli::kExitIo);
}

TEST_CASE("simulate output is reproducible") {
  TempDir dir("simulate");
  // summary.json echoes the output directory, so both runs share it.
  const fs::path out = dir.path / "out";
  auto once = [&] {
    const auto r = parse({"simulate", "--p", "8", "--n", "6", "--reps", "2", "--seed", "3",
                          "--threads", "1", "--out", out.string()});
    REQUIRE(r.config);
    std::ostringstream log;
    CHECK(cli::run(*r.config, log) == cli::kExitOk);
    std::vector<std::string> files;
    for (const char* f : {"metrics.csv", "roc.csv", "summary.json"}) files.push_back(slurp(out / f));
    return files;
  };
  const auto first = once();
  const auto second = once();
  CHECK(first == second);
  CHECK_FALSE(first[0].empty());
}
