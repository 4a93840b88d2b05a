#include "bnfold/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include "bnfold/errors.hpp"

namespace bnfold {

std::string op_name(const NodeKind& kind) {
  switch (kind.index()) {
    case 0: return "Dense";
    case 1: return "Conv2D";
    case 2: return "BatchNorm";
    case 3:
      switch (std::get<NonAffineOp>(kind).kind) {
        case NonAffineOp::Kind::ReLU: return "ReLU";
        case NonAffineOp::Kind::Sigmoid: return "Sigmoid";
        case NonAffineOp::Kind::Tanh: return "Tanh";
        case NonAffineOp::Kind::MaxPool2D: return "MaxPool2D";
      }
      return "?";
    default:
      switch (std::get<OtherAffineOp>(kind).kind) {
        case OtherAffineOp::Kind::Add: return "Add";
        case OtherAffineOp::Kind::Concat: return "Concat";
        case OtherAffineOp::Kind::AvgPool2D: return "AvgPool2D";
        case OtherAffineOp::Kind::Flatten: return "Flatten";
        case OtherAffineOp::Kind::Identity: return "Identity";
      }
      return "?";
  }
}

int op_arity(const NodeKind& kind) {
  if (const auto* other = std::get_if<OtherAffineOp>(&kind)) {
    if (other->kind == OtherAffineOp::Kind::Add || other->kind == OtherAffineOp::Kind::Concat)
      return -2;
  }
  return 1;
}

int64_t op_param_count(const NodeKind& kind) {
  switch (kind.index()) {
    case 0: {
      const auto& d = std::get<DenseOp>(kind);
      return d.out_channels * d.in_channels + d.out_channels;
    }
    case 1: {
      const auto& c = std::get<Conv2DOp>(kind);
      return c.out_channels * c.in_channels * c.kh * c.kw + c.out_channels;
    }
    case 2: return 4 * std::get<BatchNormOp>(kind).channels();
    default: return 0;
  }
}

LayerClass classify_node(const Node& node) { return classify_kind(node.kind); }

namespace {

void validate_weights(const Node& node) {
  const auto& id = node.id;
  if (const auto* d = std::get_if<DenseOp>(&node.kind)) {
    if (d->out_channels < 1 || d->in_channels < 1)
      throw ShapeMismatch(id, "Dense channels must be positive");
    if (static_cast<int64_t>(d->weight.size()) != d->out_channels * d->in_channels)
      throw ShapeMismatch(id, "Dense weight size inconsistent with declared channels");
    if (static_cast<int64_t>(d->bias.size()) != d->out_channels)
      throw ShapeMismatch(id, "Dense bias size inconsistent with out_channels");
  } else if (const auto* c = std::get_if<Conv2DOp>(&node.kind)) {
    if (c->out_channels < 1 || c->in_channels < 1 || c->kh < 1 || c->kw < 1)
      throw ShapeMismatch(id, "Conv2D dims must be positive");
    if (static_cast<int64_t>(c->kernel.size()) != c->out_channels * c->in_channels * c->kh * c->kw)
      throw ShapeMismatch(id, "Conv2D kernel size inconsistent with declared dims");
    if (static_cast<int64_t>(c->bias.size()) != c->out_channels)
      throw ShapeMismatch(id, "Conv2D bias size inconsistent with out_channels");
  } else if (const auto* bn = std::get_if<BatchNormOp>(&node.kind)) {
    size_t n = bn->gamma.size();
    if (n == 0) throw ShapeMismatch(id, "BatchNorm must have at least one channel");
    if (bn->beta.size() != n || bn->mu.size() != n || bn->sigma.size() != n)
      throw ShapeMismatch(id, "BatchNorm parameter vectors must have equal length");
    if (bn->epsilon <= 0.0) throw ShapeMismatch(id, "BatchNorm epsilon must be positive");
    for (double s : bn->sigma)
      if (s < 0.0) throw ShapeMismatch(id, "BatchNorm sigma must be nonnegative");
  } else if (const auto* p = std::get_if<NonAffineOp>(&node.kind)) {
    if (p->kind == NonAffineOp::Kind::MaxPool2D && (p->kh < 1 || p->kw < 1))
      throw ShapeMismatch(id, "MaxPool2D window must be positive");
  } else if (const auto* o = std::get_if<OtherAffineOp>(&node.kind)) {
    if (o->kind == OtherAffineOp::Kind::AvgPool2D && (o->kh < 1 || o->kw < 1))
      throw ShapeMismatch(id, "AvgPool2D window must be positive");
  }
}

TensorShape pooled_shape(const std::string& id, const TensorShape& in, int64_t kh, int64_t kw) {
  if (in.rank() != 4) throw ShapeMismatch(id, "pooling expects a rank-4 input, got " + in.to_string());
  int64_t h = in.dims[2], w = in.dims[3];
  if (h < kh || w < kw)
    throw ShapeMismatch(id, "pooling window larger than input " + in.to_string());
  // non-overlapping windows, trailing partial windows dropped
  return TensorShape{in.dims[0], in.dims[1], (h - kh) / kh + 1, (w - kw) / kw + 1};
}

TensorShape infer_node_shape(const Node& node, const std::vector<TensorShape>& in) {
  const std::string& id = node.id;
  if (const auto* d = std::get_if<DenseOp>(&node.kind)) {
    if (in[0].rank() != 2)
      throw ShapeMismatch(id, "Dense expects [batch, channels], got " + in[0].to_string());
    if (in[0].dims[1] != d->in_channels)
      throw ShapeMismatch(id, "Dense expects " + std::to_string(d->in_channels) +
                                  " input channels, got " + in[0].to_string());
    return TensorShape{in[0].dims[0], d->out_channels};
  }
  if (const auto* c = std::get_if<Conv2DOp>(&node.kind)) {
    if (in[0].rank() != 4)
      throw ShapeMismatch(id, "Conv2D expects [batch, c, h, w], got " + in[0].to_string());
    if (in[0].dims[1] != c->in_channels)
      throw ShapeMismatch(id, "Conv2D expects " + std::to_string(c->in_channels) +
                                  " input channels, got " + in[0].to_string());
    int64_t h = in[0].dims[2] - c->kh + 1, w = in[0].dims[3] - c->kw + 1;
    if (h < 1 || w < 1) throw ShapeMismatch(id, "Conv2D kernel larger than input");
    return TensorShape{in[0].dims[0], c->out_channels, h, w};
  }
  if (const auto* bn = std::get_if<BatchNormOp>(&node.kind)) {
    if (in[0].rank() < 2)
      throw ShapeMismatch(id, "BatchNorm expects a channel axis, got " + in[0].to_string());
    if (in[0].dims[1] != bn->channels())
      throw ShapeMismatch(id, "BatchNorm has " + std::to_string(bn->channels()) +
                                  " channels but input is " + in[0].to_string());
    return in[0];
  }
  if (const auto* p = std::get_if<NonAffineOp>(&node.kind)) {
    if (p->kind == NonAffineOp::Kind::MaxPool2D) return pooled_shape(id, in[0], p->kh, p->kw);
    return in[0];
  }
  const auto& o = std::get<OtherAffineOp>(node.kind);
  switch (o.kind) {
    case OtherAffineOp::Kind::Add: {
      for (size_t i = 1; i < in.size(); ++i)
        if (in[i] != in[0])
          throw ShapeMismatch(id, "Add operands differ: " + in[0].to_string() + " vs " +
                                      in[i].to_string());
      return in[0];
    }
    case OtherAffineOp::Kind::Concat: {
      TensorShape out = in[0];
      if (out.rank() < 2) throw ShapeMismatch(id, "Concat expects a channel axis");
      for (size_t i = 1; i < in.size(); ++i) {
        if (in[i].rank() != out.rank())
          throw ShapeMismatch(id, "Concat rank mismatch");
        for (int64_t d = 0; d < out.rank(); ++d)
          if (d != 1 && in[i].dims[d] != out.dims[d])
            throw ShapeMismatch(id, "Concat non-channel dims differ");
        out.dims[1] += in[i].dims[1];
      }
      return out;
    }
    case OtherAffineOp::Kind::AvgPool2D: return pooled_shape(id, in[0], o.kh, o.kw);
    case OtherAffineOp::Kind::Flatten: {
      if (in[0].rank() < 2) throw ShapeMismatch(id, "Flatten expects rank >= 2");
      return TensorShape{in[0].dims[0], in[0].elements_per_sample()};
    }
    case OtherAffineOp::Kind::Identity: return in[0];
  }
  throw ShapeMismatch(id, "unhandled kind");
}

}  // namespace

Graph build_graph(std::string name,
                  std::vector<std::pair<std::string, TensorShape>> inputs,
                  std::vector<Node> nodes,
                  std::vector<std::string> outputs) {
  Graph g;
  g.name = std::move(name);
  g.inputs = std::move(inputs);
  g.outputs = std::move(outputs);

  std::set<std::string> ids;
  for (const auto& [iid, shape] : g.inputs) {
    if (!ids.insert(iid).second) throw UnknownId(iid, "duplicate graph input id");
    if (shape.rank() < 2) throw ShapeMismatch(iid, "graph input needs [batch, channels, ...]");
    for (size_t i = 1; i < shape.dims.size(); ++i)
      if (shape.dims[i] < 1) throw ShapeMismatch(iid, "non-batch dims must be >= 1");
  }
  for (const auto& n : nodes) {
    if (n.id.empty()) throw UnknownId("", "empty node id");
    if (!ids.insert(n.id).second)
      throw UnknownId(n.id, "duplicate id '" + n.id + "'");
  }
  for (const auto& n : nodes) {
    int arity = op_arity(n.kind);
    if (arity == -2) {
      if (n.inputs.size() < 2)
        throw ArityMismatch(n.id, op_name(n.kind) + " needs >= 2 inputs, has " +
                                      std::to_string(n.inputs.size()));
    } else if (static_cast<int>(n.inputs.size()) != arity) {
      throw ArityMismatch(n.id, op_name(n.kind) + " needs " + std::to_string(arity) +
                                    " input(s), has " + std::to_string(n.inputs.size()));
    }
    for (const auto& ref : n.inputs)
      if (!ids.count(ref)) throw UnknownId(n.id, ref);
    validate_weights(n);
  }
  for (const auto& out : g.outputs) {
    bool is_node = false;
    for (const auto& n : nodes)
      if (n.id == out) is_node = true;
    if (!is_node && !g.is_graph_input(out)) throw UnknownId(out, "output id not found");
  }

  // Kahn's algorithm with a lexicographically ordered ready set; detects
  // cycles and fixes the canonical node order.
  std::map<std::string, const Node*> by_id;
  std::map<std::string, int> pending;
  std::map<std::string, std::vector<std::string>> dependents;
  for (const auto& n : nodes) {
    by_id[n.id] = &n;
    int deps = 0;
    for (const auto& ref : n.inputs) {
      if (g.is_graph_input(ref)) continue;
      ++deps;
      dependents[ref].push_back(n.id);
    }
    pending[n.id] = deps;
  }
  std::set<std::string> ready;
  for (const auto& [id, deps] : pending)
    if (deps == 0) ready.insert(id);
  std::vector<Node> ordered;
  ordered.reserve(nodes.size());
  while (!ready.empty()) {
    std::string id = *ready.begin();
    ready.erase(ready.begin());
    ordered.push_back(*by_id[id]);
    for (const auto& dep : dependents[id])
      if (--pending[dep] == 0) ready.insert(dep);
  }
  if (ordered.size() != nodes.size()) {
    for (const auto& [id, deps] : pending)
      if (deps > 0) throw CycleDetected(id);
  }
  g.nodes = std::move(ordered);
  return infer_shapes(std::move(g));
}

std::vector<std::string> topo_order(const Graph& graph) {
  std::vector<std::string> order;
  order.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) order.push_back(n.id);
  return order;
}

Graph infer_shapes(Graph graph) {
  std::map<std::string, TensorShape> shapes;
  for (const auto& [id, shape] : graph.inputs) shapes[id] = shape;
  for (auto& n : graph.nodes) {
    std::vector<TensorShape> in;
    in.reserve(n.inputs.size());
    for (const auto& ref : n.inputs) {
      auto it = shapes.find(ref);
      if (it == shapes.end()) throw UnknownId(n.id, ref);
      in.push_back(it->second);
    }
    n.out_shape = infer_node_shape(n, in);
    shapes[n.id] = n.out_shape;
  }
  return graph;
}

int64_t param_count(const Graph& graph) {
  int64_t total = 0;
  for (const auto& n : graph.nodes) total += op_param_count(n.kind);
  return total;
}

GraphIndex::GraphIndex(const Graph& graph) : graph_(&graph) {
  for (const auto& n : graph.nodes) by_id_[n.id] = &n;
  for (const auto& n : graph.nodes)
    for (size_t i = 0; i < n.inputs.size(); ++i)
      consumers_[n.inputs[i]].push_back({n.id, static_cast<int>(i)});
  for (auto& [id, list] : consumers_) {
    std::sort(list.begin(), list.end(), [](const ConsumerRef& a, const ConsumerRef& b) {
      return std::tie(a.consumer, a.input_slot) < std::tie(b.consumer, b.input_slot);
    });
  }
  for (const auto& out : graph.outputs) ++output_count_[out];
}

const Node* GraphIndex::node(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : it->second;
}

const std::vector<GraphIndex::ConsumerRef>& GraphIndex::consumers(const std::string& id) const {
  auto it = consumers_.find(id);
  return it == consumers_.end() ? empty_ : it->second;
}

int GraphIndex::fanout(const std::string& id) const {
  int n = static_cast<int>(consumers(id).size());
  auto it = output_count_.find(id);
  if (it != output_count_.end()) n += it->second;
  return n;
}

bool GraphIndex::is_output(const std::string& id) const { return output_count_.count(id) > 0; }

}  // namespace bnfold
