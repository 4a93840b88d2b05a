#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bnfold/channel_affine.hpp"
#include "bnfold/graph.hpp"

namespace bnfold {

/// Affine connected component around a batch-norm node N: undirected
/// expansion over affine-class neighbors, stopping at expressive and
/// batch-norm members (terminals) and never entering non-affine nodes.
struct Component {
  std::string bn_id;
  std::set<std::string> members;   // C, includes N
  std::set<std::string> part_in;   // members reached through N's input side, plus N
  std::set<std::string> part_out;  // members reached through N's output side, plus N
  std::set<std::pair<std::string, std::string>> halted_at;  // (member, non-affine neighbor)

  bool overlap_beyond_bn() const {
    for (const auto& id : part_in)
      if (id != bn_id && part_out.count(id)) return true;
    return false;
  }
};

enum class FoldSide { In, Out };

enum class LeafClass { Expressive, BatchNormTerminal, Blocked };

struct LeafSet {
  std::map<std::string, LeafClass> leaves;
};

enum class FoldDirection { Backward, Forward, None };

/// Why a batch-norm node cannot be folded (or Ok when it can).
/// UnsupportedPush covers push-calculus infeasibilities outside the paper's
/// taxonomy: non-uniform backward pushes through rank-reducing Flatten,
/// conflicting per-node change requirements, or a changed node escaping
/// the analyzed region (e.g. into a graph output).
enum class FoldBlockReason { Ok, SurroundedByNonAffine, BlockedLeaf, NonInvertibleBN, UnsupportedPush };

struct FoldDecision {
  bool foldable = false;
  FoldDirection direction = FoldDirection::None;
  FoldBlockReason reason = FoldBlockReason::SurroundedByNonAffine;
};

std::string to_string(FoldDirection d);
std::string to_string(FoldBlockReason r);
std::string to_string(LeafClass c);

struct AnalysisOptions {
  /// Default mode lets adjacent batch-norm leaves absorb the pushed affine
  /// into their own (gamma, beta). Strict mode treats them as ordinary
  /// non-expressive leaves and declines the fold.
  bool absorb_bn_leaves = true;
};

/// Records one leaf's parameter rewrite: the node's full replacement kind.
struct ParameterUpdate {
  NodeKind new_kind;
};

/// Complete recipe for removing one batch-norm node: direction, the affine
/// carried by every changed region edge, the per-leaf parameter updates and
/// the I/O leaf partition. Applying it (fold-transform) must leave the
/// graph's predictive function unchanged.
struct FoldPlan {
  std::string bn_id;
  FoldDirection direction = FoldDirection::None;
  std::map<std::string, ChannelAffine> edge_affines;  // key "producer->consumer#slot"
  std::map<std::string, ParameterUpdate> leaf_updates;
  std::set<std::string> part_i;
  std::set<std::string> part_o;
  uint64_t source_digest = 0;  // fingerprint of the graph the plan was built for
};

/// Builds the affine connected component of a batch-norm node.
/// Throws NotABatchNorm.
Component affine_component(const Graph& graph, const std::string& bn_id);

/// Leaves of one side of the component with their classes. A leaf is a
/// member other than N that is expressive, a batch-norm terminal, has
/// degree one within C, or had expansion halted at a non-affine neighbor.
LeafSet component_leaves(const Graph& graph, const Component& component, FoldSide side);

/// Evaluates the foldability condition on both sides, then checks that the
/// qualifying side admits a consistent push plan. Direction preference when
/// both qualify: fewer O-leaves, ties broken Backward.
FoldDecision check_foldable(const Graph& graph, const std::string& bn_id,
                            const AnalysisOptions& options = {});

/// Splits the side's leaves into I (leaves on a directed path to N for the
/// in side, reachable from N for the out side) and O (the rest).
std::pair<std::set<std::string>, std::set<std::string>>
partition_io(const Graph& graph, const Component& component, FoldSide side);

/// Compiles the decision into a concrete plan. Requires decision.foldable.
/// Throws NonInvertibleAffine or UnsupportedPush when the push calculus
/// fails (check_foldable-approved decisions never do).
FoldPlan plan_fold(const Graph& graph, const std::string& bn_id, const FoldDecision& decision,
                   const AnalysisOptions& options = {});

/// Structural fingerprint used for StalePlan detection (FNV-1a over node
/// structure and weight bits).
uint64_t graph_digest(const Graph& graph);

}  // namespace bnfold
