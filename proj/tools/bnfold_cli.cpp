#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bnfold/bench_report.hpp"
#include "bnfold/equivalence.hpp"
#include "bnfold/errors.hpp"
#include "bnfold/fold_transform.hpp"
#include "bnfold/models.hpp"
#include "bnfold/serialize.hpp"

namespace {

using namespace bnfold;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct SeedOption {
  uint64_t value = kDefaultSeed;
};

void add_seed_option(CLI::App* cmd, SeedOption& seed) {
  cmd->add_option("--seed", seed.value, "RNG seed")->envname("BNFOLD_SEED");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string join_ids(const std::set<std::string>& ids) {
  std::string s = "{";
  bool first = true;
  for (const auto& id : ids) {
    if (!first) s += ", ";
    s += id;
    first = false;
  }
  return s + "}";
}

int run_generate(const std::string& archetype_name, const std::vector<int64_t>& dims_list,
                 int64_t blocks, int64_t nodes, uint64_t seed, const std::string& out_path) {
  Archetype archetype;
  if (!archetype_from_string(archetype_name, archetype)) {
    std::cerr << "unknown archetype '" << archetype_name << "'\n";
    return kExitUsage;
  }
  ArchetypeDims dims;
  if (!dims_list.empty()) dims.channels = dims_list[0];
  if (dims_list.size() >= 2) dims.height = dims_list[1];
  if (dims_list.size() >= 3) dims.width = dims_list[2];
  if (blocks > 0) dims.blocks = blocks;
  if (nodes > 0) dims.nodes = nodes;

  GeneratedModel model = generate(archetype, dims, seed);
  save_graph(model.graph, out_path);
  int bn = 0;
  for (const auto& n : model.graph.nodes)
    if (classify_node(n) == LayerClass::BatchNorm) ++bn;
  std::cout << "wrote " << out_path << " (" << model.graph.nodes.size() << " nodes, " << bn
            << " batch-norm)\n";
  return kExitOk;
}

int run_inspect(const std::string& path, bool strict_paper) {
  Graph graph = load_graph(path);
  AnalysisOptions options;
  options.absorb_bn_leaves = !strict_paper;
  for (const auto& n : graph.nodes) {
    if (classify_node(n) != LayerClass::BatchNorm) continue;
    Component comp = affine_component(graph, n.id);
    FoldDecision decision = check_foldable(graph, n.id, options);
    std::cout << n.id << ": foldable=" << (decision.foldable ? "true" : "false")
              << " direction=" << to_string(decision.direction)
              << " reason=" << to_string(decision.reason) << "\n";
    std::cout << "  C     = " << join_ids(comp.members) << "\n";
    std::cout << "  C_in  = " << join_ids(comp.part_in) << "\n";
    std::cout << "  C_out = " << join_ids(comp.part_out) << "\n";
  }
  return kExitOk;
}

int run_fold(const std::string& path, const std::string& algo, bool strict_paper,
             const std::string& out_path, const std::string& report_path, int samples,
             uint64_t seed, double tol) {
  if (algo != "naive" && algo != "banoff") {
    std::cerr << "--algo must be naive or banoff\n";
    return kExitUsage;
  }
  Graph graph = load_graph(path);
  PassOptions options;
  options.analysis.absorb_bn_leaves = !strict_paper;
  auto [folded, report] =
      algo == "naive" ? naive_pass(graph, options) : banoff_pass(graph, options);

  // Fail closed: no output file unless the transform verifies.
  EquivalenceReport equivalence = check_equivalence(graph, folded, samples, seed, tol);
  if (!equivalence.pass) {
    std::cerr << "verification FAILED: max_l1=" << equivalence.max_l1 << " tol=" << tol << "\n";
    return kExitVerifyFailed;
  }
  if (!out_path.empty()) save_graph(folded, out_path);
  if (!report_path.empty()) write_text(report_path, fold_report_to_json(report, equivalence));
  std::cout << to_string(report.algorithm) << ": folded " << report.folded.size() << "/"
            << report.folded.size() + report.skipped.size() << " batch-norm nodes, removed "
            << report.params_before - report.params_after << " params ("
            << report.removed_percent << "%), max_l1=" << equivalence.max_l1 << "\n";
  return kExitOk;
}

int run_verify(const std::string& path_a, const std::string& path_b, int samples, uint64_t seed,
               double tol, int64_t batch, const std::string& report_path) {
  Graph a = load_graph(path_a);
  Graph b = load_graph(path_b);
  EquivalenceReport report = check_equivalence(a, b, samples, seed, tol, batch);
  if (!report_path.empty()) write_text(report_path, equivalence_report_to_json(report));
  std::cout << "samples=" << report.samples << " seed=" << report.seed
            << " max_l1=" << report.max_l1 << " max_linf=" << report.max_linf
            << " pass=" << (report.pass ? "true" : "false") << "\n";
  return report.pass ? kExitOk : kExitVerifyFailed;
}

int run_bench(const std::vector<std::string>& paths, int reps, int64_t batch,
              const std::string& format, int samples, uint64_t seed, double tol,
              const std::string& out_path) {
  if (format != "csv" && format != "md") {
    std::cerr << "--format must be csv or md\n";
    return kExitUsage;
  }
  std::vector<BenchRow> rows;
  for (const auto& path : paths) {
    Graph graph = load_graph(path);
    auto [g_naive, rep_naive] = naive_pass(graph);
    auto [g_banoff, rep_banoff] = banoff_pass(graph);

    EquivalenceReport eq_naive = check_equivalence(graph, g_naive, samples, seed, tol, batch);
    EquivalenceReport eq_banoff = check_equivalence(graph, g_banoff, samples, seed, tol, batch);
    if (!eq_naive.pass || !eq_banoff.pass) {
      std::cerr << "verification FAILED for '" << path << "', no row emitted\n";
      return kExitVerifyFailed;
    }

    BenchRow row;
    row.model = graph.name.empty() ? path : graph.name;
    row.naive_speedup_percent = 100.0 * speedup_ratio(graph, g_naive, reps, batch, seed).ratio;
    row.banoff_speedup_percent = 100.0 * speedup_ratio(graph, g_banoff, reps, batch, seed).ratio;
    row.removed_params_percent = rep_banoff.removed_percent;
    row.bn_folded_naive = static_cast<int>(rep_naive.folded.size());
    row.bn_folded_banoff = static_cast<int>(rep_banoff.folded.size());
    row.equivalence_pass = true;
    rows.push_back(std::move(row));
  }
  std::string table =
      emit_table(rows, format == "csv" ? TableFormat::Csv : TableFormat::Markdown);
  if (!out_path.empty()) write_text(out_path, table);
  else std::cout << table;
  std::cerr << "note: timing columns are desk-scale, interpreter-relative\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batch-norm folding toolkit: generate, inspect, fold, verify, bench"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "generate a corpus model");
  std::string gen_archetype;
  std::vector<int64_t> gen_dims;
  int64_t gen_blocks = 0, gen_nodes = 0;
  SeedOption gen_seed;
  std::string gen_out;
  gen->add_option("archetype", gen_archetype,
                  "fig2a|fig2b|fig2c|fig4|fig5a|fig5b|resnet|randomdag")->required();
  gen->add_option("--dims", gen_dims, "channels[,height,width]")->delimiter(',');
  gen->add_option("--blocks", gen_blocks, "block count (fig2a, resnet)");
  gen->add_option("--nodes", gen_nodes, "node budget (randomdag)");
  add_seed_option(gen, gen_seed);
  gen->add_option("-o,--output", gen_out, "output graph file")->required();

  // inspect
  auto* ins = app.add_subcommand("inspect", "print per-BN fold decisions and components");
  std::string ins_path;
  bool ins_strict = false;
  ins->add_option("file", ins_path, "graph file")->required();
  ins->add_flag("--strict-paper", ins_strict, "decline folds into batch-norm leaves");

  // fold
  auto* fold = app.add_subcommand("fold", "run a folding pass and verify it");
  std::string fold_path, fold_algo, fold_out, fold_report;
  bool fold_strict = false;
  int fold_samples = 100;
  double fold_tol = kDefaultTolerance;
  SeedOption fold_seed;
  fold->add_option("file", fold_path, "graph file")->required();
  fold->add_option("--algo", fold_algo, "naive|banoff")->required();
  fold->add_flag("--strict-paper", fold_strict, "decline folds into batch-norm leaves");
  fold->add_option("-o,--output", fold_out, "folded graph file");
  fold->add_option("--report", fold_report, "JSON report file");
  fold->add_option("--samples", fold_samples, "verification samples");
  fold->add_option("--tol", fold_tol, "L1 tolerance per output");
  add_seed_option(fold, fold_seed);

  // verify
  auto* ver = app.add_subcommand("verify", "numerical equivalence of two graphs");
  std::string ver_a, ver_b, ver_report;
  int ver_samples = 100;
  double ver_tol = kDefaultTolerance;
  int64_t ver_batch = kDefaultBatch;
  SeedOption ver_seed;
  ver->add_option("a", ver_a, "first graph")->required();
  ver->add_option("b", ver_b, "second graph")->required();
  ver->add_option("--samples", ver_samples, "sample count");
  ver->add_option("--tol", ver_tol, "L1 tolerance per output");
  ver->add_option("--batch", ver_batch, "batch size");
  ver->add_option("--report", ver_report, "JSON report file");
  add_seed_option(ver, ver_seed);

  // bench
  auto* bench = app.add_subcommand("bench", "run both passes, verify and time them");
  std::vector<std::string> bench_paths;
  int bench_reps = 20, bench_samples = 100;
  int64_t bench_batch = kDefaultBatch;
  double bench_tol = kDefaultTolerance;
  std::string bench_format = "md", bench_out;
  SeedOption bench_seed;
  bench->add_option("files", bench_paths, "graph files")->required();
  bench->add_option("--reps", bench_reps, "timing repetitions");
  bench->add_option("--batch", bench_batch, "batch size");
  bench->add_option("--format", bench_format, "csv|md");
  bench->add_option("--samples", bench_samples, "verification samples");
  bench->add_option("--tol", bench_tol, "L1 tolerance per output");
  bench->add_option("-o,--output", bench_out, "write the table to a file");
  add_seed_option(bench, bench_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed())
      return run_generate(gen_archetype, gen_dims, gen_blocks, gen_nodes, gen_seed.value, gen_out);
    if (ins->parsed()) return run_inspect(ins_path, ins_strict);
    if (fold->parsed())
      return run_fold(fold_path, fold_algo, fold_strict, fold_out, fold_report, fold_samples,
                      fold_seed.value, fold_tol);
    if (ver->parsed())
      return run_verify(ver_a, ver_b, ver_samples, ver_seed.value, ver_tol, ver_batch, ver_report);
    if (bench->parsed())
      return run_bench(bench_paths, bench_reps, bench_batch, bench_format, bench_samples,
                       bench_seed.value, bench_tol, bench_out);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const VersionMismatch& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
