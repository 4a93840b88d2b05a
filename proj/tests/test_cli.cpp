#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "bnfold/models.hpp"
#include "bnfold/serialize.hpp"

#ifndef BNFOLD_CLI_PATH
#define BNFOLD_CLI_PATH "bnfold"
#endif

using namespace bnfold;

namespace {

struct RunResult {
  int exit_code;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
  std::string out_file = "cli_stdout.tmp";
  std::string cmd = std::string(BNFOLD_CLI_PATH) + " " + args + " > " + out_file + " 2>cli_stderr.tmp";
  int status = std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::stringstream buf;
  buf << in.rdbuf();
  int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code, buf.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("cli: generate then fold fig2c reports zero naive folds") {
  REQUIRE(run_cli("generate fig2c --seed 5 -o cli_fig2c.json").exit_code == 0);
  RunResult fold = run_cli("fold cli_fig2c.json --algo naive --report cli_naive.json");
  CHECK(fold.exit_code == 0);
  CHECK(fold.stdout_text.find("folded 0/1") != std::string::npos);
  CHECK(slurp("cli_naive.json").find("\"folded\": []") != std::string::npos);
}

TEST_CASE("cli: banoff fold of fig2c verifies end to end") {
  REQUIRE(run_cli("generate fig2c --seed 5 -o cli_fig2c.json").exit_code == 0);
  RunResult fold = run_cli("fold cli_fig2c.json --algo banoff -o cli_fig2c_folded.json");
  CHECK(fold.exit_code == 0);
  RunResult verify = run_cli("verify cli_fig2c.json cli_fig2c_folded.json");
  CHECK(verify.exit_code == 0);
  CHECK(verify.stdout_text.find("pass=true") != std::string::npos);
}

TEST_CASE("cli: verify a graph against itself gives max_l1=0 and exit 0") {
  REQUIRE(run_cli("generate fig2a --seed 3 -o cli_fig2a.json").exit_code == 0);
  RunResult verify = run_cli("verify cli_fig2a.json cli_fig2a.json");
  CHECK(verify.exit_code == 0);
  CHECK(verify.stdout_text.find("max_l1=0") != std::string::npos);
}

TEST_CASE("cli: verification failure exits 1") {
  GeneratedModel m = generate(Archetype::Fig2a, {}, 3);
  save_graph(m.graph, "cli_orig.json");
  Graph tampered = m.graph;
  std::get<DenseOp>(tampered.nodes[0].kind).bias[0] += 0.5;
  save_graph(tampered, "cli_tampered.json");
  CHECK(run_cli("verify cli_orig.json cli_tampered.json").exit_code == 1);
}

TEST_CASE("cli: usage errors exit 2, io errors exit 3") {
  CHECK(run_cli("fold").exit_code == 2);
  CHECK(run_cli("definitely-not-a-subcommand").exit_code == 2);
  CHECK(run_cli("generate nosucharchetype -o x.json").exit_code == 2);
  CHECK(run_cli("inspect no_such_file.json").exit_code == 3);
  std::ofstream("cli_bad.json") << "{ not json";
  CHECK(run_cli("verify cli_bad.json cli_bad.json").exit_code == 3);
}

TEST_CASE("cli: inspect prints decisions with component members") {
  REQUIRE(run_cli("generate fig5b --seed 2 -o cli_fig5b.json").exit_code == 0);
  RunResult ins = run_cli("inspect cli_fig5b.json");
  CHECK(ins.exit_code == 0);
  CHECK(ins.stdout_text.find("bn1: foldable=false") != std::string::npos);
  CHECK(ins.stdout_text.find("reason=BlockedLeaf") != std::string::npos);
  CHECK(ins.stdout_text.find("C_in") != std::string::npos);
}

TEST_CASE("cli: bench on the toy suite emits three rows with naive zero on fig2c") {
  REQUIRE(run_cli("generate fig2a --seed 4 -o cli_b2a.json").exit_code == 0);
  REQUIRE(run_cli("generate fig2b --seed 4 -o cli_b2b.json").exit_code == 0);
  REQUIRE(run_cli("generate fig2c --seed 4 -o cli_b2c.json").exit_code == 0);
  RunResult bench =
      run_cli("bench cli_b2a.json cli_b2b.json cli_b2c.json --reps 5 --samples 20 --format csv");
  CHECK(bench.exit_code == 0);
  std::istringstream lines(bench.stdout_text);
  std::string header, row_a, row_b, row_c;
  std::getline(lines, header);
  std::getline(lines, row_a);
  std::getline(lines, row_b);
  std::getline(lines, row_c);
  CHECK(header.rfind("model,", 0) == 0);
  CHECK(row_a.rfind("fig2a,", 0) == 0);
  CHECK(row_b.rfind("fig2b,", 0) == 0);
  CHECK(row_c.rfind("fig2c,", 0) == 0);
  // fig2a folds all three under both passes
  CHECK(row_a.find(",3,3,true") != std::string::npos);
  // fig2c: 0 naive folds, 1 banoff fold, equivalence verified
  CHECK(row_c.find(",0,1,true") != std::string::npos);
}

TEST_CASE("cli: generated files and fold outputs are byte-deterministic") {
  REQUIRE(run_cli("generate resnet --seed 11 -o cli_r1.json").exit_code == 0);
  REQUIRE(run_cli("generate resnet --seed 11 -o cli_r2.json").exit_code == 0);
  CHECK(slurp("cli_r1.json") == slurp("cli_r2.json"));

  REQUIRE(run_cli("fold cli_r1.json --algo banoff -o cli_rf1.json").exit_code == 0);
  REQUIRE(run_cli("fold cli_r2.json --algo banoff -o cli_rf2.json").exit_code == 0);
  CHECK(slurp("cli_rf1.json") == slurp("cli_rf2.json"));
}

TEST_CASE("cli: BNFOLD_SEED environment variable sets the default seed") {
  std::string cmd1 = std::string("BNFOLD_SEED=99 ") + BNFOLD_CLI_PATH +
                     " generate fig2a -o cli_env1.json >/dev/null 2>&1";
  REQUIRE(std::system(cmd1.c_str()) == 0);
  REQUIRE(run_cli("generate fig2a --seed 99 -o cli_env2.json").exit_code == 0);
  CHECK(slurp("cli_env1.json") == slurp("cli_env2.json"));
  REQUIRE(run_cli("generate fig2a -o cli_env3.json").exit_code == 0);  // default 42
  CHECK(slurp("cli_env1.json") != slurp("cli_env3.json"));
}
