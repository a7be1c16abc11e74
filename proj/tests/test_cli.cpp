// End-to-end tests of the command line tool. Each test shells out to the
// built binary (path injected as QCONS_CLI_PATH) and inspects its output.

#include "qcons/bounds.hpp"
#include "qcons/consensus.hpp"
#include "qcons/graph.hpp"

#include "doctest.h"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kCli = QCONS_CLI_PATH;

fs::path temp_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "qcons_cli_test";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cmd(const std::string& args) {
  const int rc = std::system((kCli + " " + args + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (first) {
      t.header = cells;
      first = false;
    } else {
      t.rows.push_back(cells);
    }
  }
  return t;
}

}  // namespace

TEST_CASE("run: identical seeds give byte-identical output") {
  const fs::path out1 = temp_dir() / "det1.csv";
  const fs::path out2 = temp_dir() / "det2.csv";
  const std::string base =
      "run --graph complete:5 --delta 0.5 --a 0.25 --tau 1 --b 2 --iters 500 --seed 7 --out ";
  REQUIRE(run_cmd(base + out1.string()) == 0);
  REQUIRE(run_cmd(base + out2.string()) == 0);
  const std::string a = read_file(out1), b = read_file(out2);
  CHECK(!a.empty());
  CHECK(a == b);
}

TEST_CASE("run: pfail=1 keeps every state frozen") {
  const fs::path cfg = temp_dir() / "frozen.json";
  write_file(cfg, R"({
    "graph": "path:3",
    "model": {"type": "erasure", "p_fail": 1.0},
    "quantizer": {"delta": 0.5},
    "weights": {"a": 0.1, "tau": 1.0},
    "x0": [1.0, 2.0, 4.0],
    "max_iter": 200
  })");
  const fs::path out = temp_dir() / "frozen.csv";
  REQUIRE(run_cmd("run --config " + cfg.string() + " --out " + out.string()) == 0);
  CsvTable t = parse_csv(read_file(out));
  REQUIRE(t.header == std::vector<std::string>{"iteration", "x_avg", "residual_norm", "spread",
                                               "saturated_flag"});
  REQUIRE(!t.rows.empty());
  for (const auto& row : t.rows) {
    // CSV carries 9 significant digits
    CHECK(std::stod(row[1]) == doctest::Approx(7.0 / 3.0).epsilon(1e-8));
    CHECK(std::stod(row[3]) == doctest::Approx(3.0).epsilon(1e-8));  // spread stays 4-1
    CHECK(row[4] == "0");
  }
}

TEST_CASE("run: forced saturation ends with a flagged row and zero states") {
  const fs::path cfg = temp_dir() / "sat.json";
  write_file(cfg, R"({
    "graph": "complete:2",
    "quantizer": {"delta": 1.0, "levels_p": 1},
    "weights": {"a": 0.5, "tau": 1.0},
    "x0": [10.0, -10.0],
    "b": 10.0,
    "max_iter": 50
  })");
  const fs::path out = temp_dir() / "sat.csv";
  REQUIRE(run_cmd("run --config " + cfg.string() + " --out " + out.string()) == 0);
  CsvTable t = parse_csv(read_file(out));
  REQUIRE(!t.rows.empty());
  const auto& last = t.rows.back();
  CHECK(last[4] == "1");
  for (std::size_t k = 0; k + 1 < t.rows.size(); ++k) CHECK(t.rows[k][4] == "0");
}

TEST_CASE("mc trials=1 agrees with a single run and with library bounds") {
  const fs::path cfg = temp_dir() / "mc.json";
  write_file(cfg, R"({
    "graph": "complete:4",
    "quantizer": {"delta": 0.5},
    "weights": {"a": 0.25, "tau": 1.0},
    "x0": [1.0, 2.0, 3.0, 6.0],
    "max_iter": 400,
    "seed": 123
  })");
  const fs::path run_out = temp_dir() / "mc_run.csv";
  const fs::path mc_out = temp_dir() / "mc.json.out";
  REQUIRE(run_cmd("run --config " + cfg.string() + " --out " + run_out.string()) == 0);
  REQUIRE(run_cmd("mc --config " + cfg.string() + " --trials 1 --out " + mc_out.string()) == 0);

  CsvTable t = parse_csv(read_file(run_out));
  REQUIRE(!t.rows.empty());
  json j = json::parse(read_file(mc_out));
  CHECK(j["trials"].get<long long>() == 1);
  CHECK(j["mean_theta"].get<double>() ==
        doctest::Approx(std::stod(t.rows.back()[1])).epsilon(1e-9));
  CHECK(j["mean_r"].get<double>() == doctest::Approx(3.0).epsilon(1e-12));

  // inlined bound equals a direct library evaluation
  qcons::BoundInputs in;
  in.n_nodes = 4;
  in.m_edges = 6;
  in.delta = 0.5;
  in.lambda2 = 4.0;
  in.lambdaN = 4.0;
  in.weights = qcons::WeightSequence{0.25, 1.0, 1.0, std::nullopt};
  CHECK(j["bounds"]["mse_bound"].get<double>() ==
        doctest::Approx(qcons::mse_bound(in).value).epsilon(1e-12));
  CHECK(j["empirical_mse"].get<double>() <
        10.0 * qcons::mse_bound(in).value + 1.0);  // sanity scale only
}

TEST_CASE("bounds subcommand matches library calls") {
  const fs::path out = temp_dir() / "bounds.json";
  REQUIRE(run_cmd("bounds --graph path:3 --delta 0.1 --a 0.1 --tau 1 --b 1 --levels 40 "
                  "--epsilon 0.5 --out " +
                  out.string()) == 0);
  json j = json::parse(read_file(out));
  qcons::Topology topo = qcons::Topology::path(3);
  qcons::SpectralSummary sp = qcons::spectral(qcons::laplacian(topo));
  CHECK(j["lambda2"].get<double>() == doctest::Approx(sp.lambda2).epsilon(1e-12));
  qcons::BoundInputs in;
  in.n_nodes = 3;
  in.m_edges = 2;
  in.delta = 0.1;
  in.lambda2 = sp.lambda2;
  in.lambdaN = sp.lambdaN;
  in.b = 1.0;
  in.p = 40;
  in.epsilon = 0.5;
  in.weights = qcons::WeightSequence{0.1, 1.0, 1.0, std::nullopt};
  CHECK(j["c_g"].get<double>() == doctest::Approx(qcons::lyapunov_c_g(in)).epsilon(1e-12));
  CHECK(j["mse_bound"].get<double>() == doctest::Approx(qcons::mse_bound(in).value).epsilon(1e-12));
  CHECK(j["eps_consensus_lb"]["value"].get<double>() ==
        doctest::Approx(qcons::eps_consensus_lb(in).value).epsilon(1e-12));
  CHECK(j["zero_rate_lb"]["value"].get<double>() ==
        doctest::Approx(qcons::zero_rate_lb(in).value).epsilon(1e-12));
}

TEST_CASE("design sweep table is well formed") {
  const fs::path out = temp_dir() / "design.csv";
  REQUIRE(run_cmd("design --graph complete:4 --a 0.2 --tau 1 --b 2 --epsilon 0.5 "
                  "--p-sweep 4,16,64 --out " +
                  out.string()) == 0);
  CsvTable t = parse_csv(read_file(out));
  REQUIRE(t.header == std::vector<std::string>{"p", "bit_rate", "delta_star", "T_star_clamped",
                                               "T_zero_rate"});
  REQUIRE(t.rows.size() == 3);
  long long prev_p = 0;
  for (const auto& row : t.rows) {
    const long long p = std::stoll(row[0]);
    CHECK(p > prev_p);
    prev_p = p;
    CHECK(std::stod(row[1]) == doctest::Approx(std::log2(2.0 * p + 1.0)).epsilon(1e-9));
    CHECK(std::stod(row[2]) > 0.0);
    CHECK(std::stod(row[3]) >= 0.0);
    CHECK(std::stod(row[4]) >= 0.0);
  }
}

TEST_CASE("exit codes") {
  SUBCASE("missing config file -> 2") {
    CHECK(run_cmd("run --config /nonexistent/cfg.json") == 2);
  }
  SUBCASE("malformed json -> 2") {
    const fs::path cfg = temp_dir() / "bad.json";
    write_file(cfg, "{ not json");
    CHECK(run_cmd("run --config " + cfg.string()) == 2);
  }
  SUBCASE("unknown flag -> 2") { CHECK(run_cmd("run --no-such-flag") == 2); }
  SUBCASE("bad graph spec -> 2") { CHECK(run_cmd("bounds --graph banana:seven") == 2); }
  SUBCASE("disconnected graph bounds -> 3") {
    const fs::path g = temp_dir() / "disc.txt";
    write_file(g, "N 4\n0 1\n2 3\n");
    CHECK(run_cmd("bounds --graph " + g.string() + " --a 0.1 --tau 1") == 3);
  }
}
