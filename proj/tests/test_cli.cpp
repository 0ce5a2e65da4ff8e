#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qdlab/harmonic_metric.hpp"
#include "qdlab/io.hpp"
#include "qdlab/qd_core.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_cli;  // path to the qdlab binary, from argv[1]

fs::path scratch(const std::string& name) {
  fs::path dir = fs::current_path() / "cli_scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void put(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Runs the CLI in dir; returns the exit code.
int run_cli(const fs::path& dir, const std::string& args) {
  std::string cmd = "cd " + dir.string() + " && " + g_cli + " " + args +
                    " > cli_out.txt 2> cli_err.txt";
  int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kPhiZ = "[[0,0],[1,0]]";
const char* kPairs = "x1_re,x1_im,x2_re,x2_im\n1,0,-0.5,0.8\n";

}  // namespace

TEST_CASE("tree subcommand writes the tripod JSON") {
  fs::path dir = scratch("tree");
  put(dir / "phi.json", kPhiZ);
  REQUIRE(run_cli(dir, "tree --phi phi.json --out tree.json") == 0);

  nlohmann::json doc = nlohmann::json::parse(slurp(dir / "tree.json"));
  CHECK(doc["vertices"].size() == 1);
  CHECK(doc["edges"].size() == 0);
  CHECK(doc["ends"].size() == 3);
  CHECK(doc["vertices"][0]["valence"] == 3);
  CHECK(doc["line_tree"] == false);
}

TEST_CASE("malformed pairs CSV exits 2 and leaves no partial output") {
  fs::path dir = scratch("badcsv");
  put(dir / "phi.json", kPhiZ);
  put(dir / "bad.csv", "x1_re,x1_im,x2_re\n1,2,3\n");
  CHECK(run_cli(dir, "dist --phi phi.json --pairs bad.csv --out d.csv") == 2);
  CHECK(!fs::exists(dir / "d.csv"));

  put(dir / "bad2.csv", "x1_re,x1_im,x2_re,x2_im\n1,oops,0,0\n");
  CHECK(run_cli(dir, "dist --phi phi.json --pairs bad2.csv --out d.csv") == 2);
  CHECK(!fs::exists(dir / "d.csv"));
}

TEST_CASE("config errors exit 2, numerical failures exit 3") {
  fs::path dir = scratch("codes");
  put(dir / "phi.json", kPhiZ);
  put(dir / "pairs.csv", kPairs);

  CHECK(run_cli(dir, "") == 2);                    // missing subcommand
  CHECK(run_cli(dir, "tree") == 2);                // missing --phi
  CHECK(run_cli(dir, "tree --phi nope.json") == 2);
  CHECK(run_cli(dir,
                "bounds --phi phi.json --pairs pairs.csv --t 0.5,4") == 2);

  put(dir / "phi2.json", "[[1,0],[0,0],[-1,0]]");  // zeros at +-1
  CHECK(run_cli(dir, "solve --phi phi2.json --t 4 --R 1.05 --n 65") == 3);
}

TEST_CASE("solve artifact round-trips through read_field") {
  fs::path dir = scratch("field");
  put(dir / "phi.json", kPhiZ);
  REQUIRE(run_cli(dir,
                  "solve --phi phi.json --t 4 --R 2 --n 65 --out f.bin "
                  "--csv f.csv") == 0);

  qdlab::PolyQD qd({qdlab::cplx(0, 0), qdlab::cplx(1, 0)});
  qdlab::GField from_file = qdlab::read_field((dir / "f.bin").string(), qd);
  qdlab::GField direct = qdlab::solve_field(qd, 4, 2, 65);
  CHECK(from_file.t() == 4.0);
  CHECK(from_file.R_dom() == 2.0);
  CHECK(from_file.nx() == 65);
  REQUIRE(from_file.u_data().size() == direct.u_data().size());
  CHECK(from_file.u_data() == direct.u_data());

  std::istringstream csv(slurp(dir / "f.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "x,y,u,G");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) rows += !line.empty();
  CHECK(rows == 65 * 65);
}

TEST_CASE("fixed seed makes converge reruns byte-identical") {
  fs::path dir = scratch("seed");
  put(dir / "phi.json", kPhiZ);
  const std::string args =
      "converge --phi phi.json --t 1,4 --samples 3 --seed 7 --radius 2 "
      "--grid 97";
  REQUIRE(run_cli(dir, args + " --out r1.json --csv r1.csv") == 0);
  REQUIRE(run_cli(dir, args + " --out r2.json --csv r2.csv") == 0);

  std::string j1 = slurp(dir / "r1.json");
  CHECK(j1 == slurp(dir / "r2.json"));
  CHECK(slurp(dir / "r1.csv") == slurp(dir / "r2.csv"));
  CHECK(!j1.empty());

  nlohmann::json doc = nlohmann::json::parse(j1);
  REQUIRE(doc["slices"].size() == 2);
  double g1 = doc["slices"][0]["sup_gap"].get<double>();
  double g4 = doc["slices"][1]["sup_gap"].get<double>();
  CHECK(g4 < g1);
  CHECK(doc["seed"] == 7);
  CHECK(doc["samples"] == 3);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-qdlab-binary> [doctest args]\n");
    return 1;
  }
  g_cli = fs::absolute(argv[1]).string();
  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  return ctx.run();
}
