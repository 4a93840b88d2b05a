#include "bnfold/fold_transform.hpp"

#include <algorithm>

#include "bnfold/errors.hpp"
#include "bnfold/rng.hpp"

namespace bnfold {

std::string to_string(FoldAlgorithm a) {
  return a == FoldAlgorithm::Naive ? "naive" : "banoff";
}

Graph apply_fold(const Graph& graph, const FoldPlan& plan) {
  if (graph_digest(graph) != plan.source_digest) throw StalePlan(plan.bn_id);
  const Node* bn = graph.find(plan.bn_id);
  if (!bn || classify_node(*bn) != LayerClass::BatchNorm) throw StalePlan(plan.bn_id);
  const std::string source = bn->inputs[0];

  std::vector<Node> nodes;
  nodes.reserve(graph.nodes.size() - 1);
  for (const auto& n : graph.nodes) {
    if (n.id == plan.bn_id) continue;
    Node copy = n;
    auto update = plan.leaf_updates.find(n.id);
    if (update != plan.leaf_updates.end()) copy.kind = update->second.new_kind;
    for (auto& ref : copy.inputs)
      if (ref == plan.bn_id) ref = source;
    nodes.push_back(std::move(copy));
  }
  std::vector<std::string> outputs = graph.outputs;
  for (auto& out : outputs)
    if (out == plan.bn_id) out = source;

  return build_graph(graph.name, graph.inputs, std::move(nodes), std::move(outputs));
}

namespace {

std::vector<std::string> bn_ids(const Graph& graph) {
  std::vector<std::string> ids;
  for (const auto& n : graph.nodes)
    if (classify_node(n) == LayerClass::BatchNorm) ids.push_back(n.id);
  return ids;
}

std::vector<std::string> scan_order(const Graph& graph, const PassOptions& options,
                                    uint64_t round) {
  std::vector<std::string> ids = bn_ids(graph);
  if (options.scan_shuffle_seed) {
    Rng rng(*options.scan_shuffle_seed + round);
    for (size_t i = ids.size(); i > 1; --i)
      std::swap(ids[i - 1], ids[rng.next_below(i)]);
  }
  return ids;
}

enum class WalkResult { FoundExpressive, HitNonAffine, HitBlocked };

/// Walks a strictly sequential path (whole-graph fan-in and fan-out of one
/// on every node, the terminal expressive layer's far side excepted) from
/// the batch-norm node. Being listed as a graph output counts as fan-out.
WalkResult naive_walk(const Graph& graph, const GraphIndex& idx, const std::string& bn_id,
                      FoldDirection dir) {
  const Node* bn = idx.node(bn_id);
  if (idx.fanout(bn_id) != 1) return WalkResult::HitBlocked;

  std::string cur;
  if (dir == FoldDirection::Backward) {
    cur = bn->inputs[0];
  } else {
    const auto& consumers = idx.consumers(bn_id);
    if (consumers.empty()) return WalkResult::HitBlocked;
    cur = consumers[0].consumer;
  }

  while (true) {
    const Node* n = idx.node(cur);
    if (!n) return WalkResult::HitBlocked;  // walked into a graph input
    switch (classify_node(*n)) {
      case LayerClass::NonAffine: return WalkResult::HitNonAffine;
      case LayerClass::BatchNorm: return WalkResult::HitBlocked;
      case LayerClass::Expressive:
        if (dir == FoldDirection::Backward) {
          // its output changes, so the path edge must be its only consumer
          return idx.fanout(cur) == 1 ? WalkResult::FoundExpressive : WalkResult::HitBlocked;
        }
        return WalkResult::FoundExpressive;  // forward: input side is the path
      case LayerClass::OtherAffine: {
        if (n->inputs.size() != 1 || idx.fanout(cur) != 1) return WalkResult::HitBlocked;
        if (dir == FoldDirection::Backward) {
          cur = n->inputs[0];
        } else {
          const auto& next = idx.consumers(cur);
          if (next.empty()) return WalkResult::HitBlocked;  // fan-out is a graph output
          cur = next[0].consumer;
        }
        break;
      }
    }
  }
}

void finish_report(const Graph& before, const Graph& after, FoldReport& report) {
  report.params_before = param_count(before);
  report.params_after = param_count(after);
  report.removed_percent =
      report.params_before == 0
          ? 0.0
          : 100.0 * static_cast<double>(report.params_before - report.params_after) /
                static_cast<double>(report.params_before);
}

}  // namespace

std::pair<Graph, FoldReport> naive_pass(const Graph& graph, const PassOptions& options) {
  Graph current = graph;
  FoldReport report;
  report.algorithm = FoldAlgorithm::Naive;

  bool progressed = true;
  uint64_t round = 0;
  while (progressed) {
    progressed = false;
    for (const auto& id : scan_order(current, options, round++)) {
      GraphIndex idx(current);
      for (FoldDirection dir : {FoldDirection::Backward, FoldDirection::Forward}) {
        if (naive_walk(current, idx, id, dir) != WalkResult::FoundExpressive) continue;
        FoldDecision decision{true, dir, FoldBlockReason::Ok};
        try {
          FoldPlan plan = plan_fold(current, id, decision, options.analysis);
          current = apply_fold(current, plan);
          report.folded.emplace_back(id, dir);
          progressed = true;
        } catch (const Error&) {
          continue;  // push rule undefined along this path, try the other way
        }
        break;
      }
      if (progressed) break;  // rescan on the updated graph
    }
  }

  GraphIndex idx(current);
  for (const auto& id : bn_ids(current)) {
    WalkResult back = naive_walk(current, idx, id, FoldDirection::Backward);
    WalkResult fwd = naive_walk(current, idx, id, FoldDirection::Forward);
    FoldBlockReason reason;
    if (back == WalkResult::FoundExpressive || fwd == WalkResult::FoundExpressive) {
      // a sequential path exists but planning failed during the scan
      reason = FoldBlockReason::UnsupportedPush;
      FoldDirection dir =
          back == WalkResult::FoundExpressive ? FoldDirection::Backward : FoldDirection::Forward;
      try {
        plan_fold(current, id, FoldDecision{true, dir, FoldBlockReason::Ok}, options.analysis);
      } catch (const NonInvertibleAffine&) {
        reason = FoldBlockReason::NonInvertibleBN;
      } catch (const Error&) {
      }
    } else if (back == WalkResult::HitNonAffine && fwd == WalkResult::HitNonAffine) {
      reason = FoldBlockReason::SurroundedByNonAffine;
    } else {
      reason = FoldBlockReason::BlockedLeaf;
    }
    report.skipped.emplace_back(id, reason);
  }
  finish_report(graph, current, report);
  return {std::move(current), report};
}

std::pair<Graph, FoldReport> banoff_pass(const Graph& graph, const PassOptions& options) {
  Graph current = graph;
  FoldReport report;
  report.algorithm = FoldAlgorithm::BanOff;

  bool progressed = true;
  uint64_t round = 0;
  while (progressed) {
    progressed = false;
    for (const auto& id : scan_order(current, options, round++)) {
      FoldDecision decision = check_foldable(current, id, options.analysis);
      if (!decision.foldable) continue;
      FoldPlan plan = plan_fold(current, id, decision, options.analysis);
      current = apply_fold(current, plan);
      report.folded.emplace_back(id, decision.direction);
      progressed = true;
      break;  // restart the scan, folding can change other components
    }
  }

  for (const auto& id : bn_ids(current)) {
    FoldDecision decision = check_foldable(current, id, options.analysis);
    report.skipped.emplace_back(id, decision.reason);
  }
  finish_report(graph, current, report);
  return {std::move(current), report};
}

}  // namespace bnfold
