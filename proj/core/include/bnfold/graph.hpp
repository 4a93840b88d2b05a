#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bnfold/ops.hpp"
#include "bnfold/tensor.hpp"

namespace bnfold {

/// One operator instance. Inputs reference node ids or graph-input ids.
struct Node {
  std::string id;
  NodeKind kind;
  std::vector<std::string> inputs;
  TensorShape out_shape;  // filled by infer_shapes

  bool operator==(const Node&) const = default;
};

/// Immutable feed-forward computation graph. Construct through build_graph,
/// which validates, orders the node list topologically (ties broken by id)
/// and infers shapes. Values are safe to share read-only across threads;
/// passes transform by copy.
struct Graph {
  std::string name;
  std::vector<std::pair<std::string, TensorShape>> inputs;
  std::vector<Node> nodes;  // canonical topological order
  std::vector<std::string> outputs;

  const Node* find(const std::string& id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
  bool is_graph_input(const std::string& id) const {
    for (const auto& [iid, _] : inputs)
      if (iid == id) return true;
    return false;
  }

  bool operator==(const Graph&) const = default;
};

/// Validates a raw node list and returns the canonical graph: rejects
/// cycles, dangling ids, duplicate ids and arity violations; sorts nodes
/// topologically (lexicographic tie-break) and runs shape inference.
/// Throws CycleDetected, UnknownId, ArityMismatch, ShapeMismatch.
Graph build_graph(std::string name,
                  std::vector<std::pair<std::string, TensorShape>> inputs,
                  std::vector<Node> nodes,
                  std::vector<std::string> outputs);

/// Deterministic topological order of node ids (Kahn, ready set ordered by
/// id). The canonical Graph node list follows this order.
std::vector<std::string> topo_order(const Graph& graph);

/// Recomputes every node's out_shape from the graph inputs. Idempotent.
/// Throws ShapeMismatch naming the offending node.
Graph infer_shapes(Graph graph);

/// Total parameter count over all nodes.
int64_t param_count(const Graph& graph);

LayerClass classify_node(const Node& node);

/// Adjacency index over an immutable graph: node lookup and consumer lists.
/// Consumer lists are ordered by (consumer id, input slot).
class GraphIndex {
public:
  struct ConsumerRef {
    std::string consumer;
    int input_slot;
  };

  explicit GraphIndex(const Graph& graph);

  const Node* node(const std::string& id) const;
  const std::vector<ConsumerRef>& consumers(const std::string& id) const;
  /// Number of consumer edges plus one per appearance in graph outputs.
  int fanout(const std::string& id) const;
  bool is_output(const std::string& id) const;

private:
  const Graph* graph_;
  std::map<std::string, const Node*> by_id_;
  std::map<std::string, std::vector<ConsumerRef>> consumers_;
  std::map<std::string, int> output_count_;
  std::vector<ConsumerRef> empty_;
};

}  // namespace bnfold
