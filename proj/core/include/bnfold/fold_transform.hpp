#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bnfold/fold_analysis.hpp"
#include "bnfold/graph.hpp"

namespace bnfold {

enum class FoldAlgorithm { Naive, BanOff };

/// Outcome of one folding pass over a graph.
struct FoldReport {
  FoldAlgorithm algorithm = FoldAlgorithm::Naive;
  std::vector<std::pair<std::string, FoldDirection>> folded;
  std::vector<std::pair<std::string, FoldBlockReason>> skipped;
  int64_t params_before = 0;
  int64_t params_after = 0;
  double removed_percent = 0.0;
};

std::string to_string(FoldAlgorithm a);

/// Applies a plan: deletes the batch-norm node, rewires its consumers (and
/// any output entry) to its input, applies every leaf update and
/// revalidates. The input graph is left untouched. Throws StalePlan when
/// the graph differs from the one the plan was built for.
Graph apply_fold(const Graph& graph, const FoldPlan& plan);

struct PassOptions {
  AnalysisOptions analysis;
  /// When set, the scan order of batch-norm candidates is shuffled with
  /// this seed instead of canonical topological order (used by the
  /// order-independence property checks).
  std::optional<uint64_t> scan_shuffle_seed;
};

/// Baseline: folds each batch-norm along a strictly sequential path (every
/// path node with whole-graph fan-in and fan-out of one) into the nearest
/// expressive layer, backward first, then forward. Repeats until a full
/// scan folds nothing.
std::pair<Graph, FoldReport> naive_pass(const Graph& graph, const PassOptions& options = {});

/// Optimal pass: folds every batch-norm whose component satisfies the
/// foldability condition, restarting the scan after each fold until none
/// remains foldable. Every surviving batch-norm is reported with its
/// failure reason.
std::pair<Graph, FoldReport> banoff_pass(const Graph& graph, const PassOptions& options = {});

}  // namespace bnfold
