#include "bnfold/fold_analysis.hpp"

#include <algorithm>
#include <cstring>
#include <deque>

#include "bnfold/errors.hpp"

namespace bnfold {

std::string to_string(FoldDirection d) {
  switch (d) {
    case FoldDirection::Backward: return "Backward";
    case FoldDirection::Forward: return "Forward";
    default: return "None";
  }
}

std::string to_string(FoldBlockReason r) {
  switch (r) {
    case FoldBlockReason::Ok: return "OK";
    case FoldBlockReason::SurroundedByNonAffine: return "SurroundedByNonAffine";
    case FoldBlockReason::BlockedLeaf: return "BlockedLeaf";
    case FoldBlockReason::NonInvertibleBN: return "NonInvertibleBN";
    case FoldBlockReason::UnsupportedPush: return "UnsupportedPush";
  }
  return "?";
}

std::string to_string(LeafClass c) {
  switch (c) {
    case LeafClass::Expressive: return "Expressive";
    case LeafClass::BatchNormTerminal: return "BatchNormTerminal";
    case LeafClass::Blocked: return "Blocked";
  }
  return "?";
}

uint64_t graph_digest(const Graph& graph) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto mix_str = [&](const std::string& s) { mix_bytes(s.data(), s.size()); mix_bytes("\0", 1); };
  auto mix_i64 = [&](int64_t v) { mix_bytes(&v, sizeof v); };
  auto mix_f64s = [&](const std::vector<double>& v) {
    mix_i64(static_cast<int64_t>(v.size()));
    if (!v.empty()) mix_bytes(v.data(), v.size() * sizeof(double));
  };

  mix_str(graph.name);
  for (const auto& [id, shape] : graph.inputs) {
    mix_str(id);
    for (int64_t d : shape.dims) mix_i64(d);
  }
  for (const auto& n : graph.nodes) {
    mix_str(n.id);
    mix_str(op_name(n.kind));
    for (const auto& ref : n.inputs) mix_str(ref);
    if (const auto* d = std::get_if<DenseOp>(&n.kind)) {
      mix_i64(d->out_channels);
      mix_i64(d->in_channels);
      mix_f64s(d->weight);
      mix_f64s(d->bias);
    } else if (const auto* c = std::get_if<Conv2DOp>(&n.kind)) {
      mix_i64(c->out_channels);
      mix_i64(c->in_channels);
      mix_i64(c->kh);
      mix_i64(c->kw);
      mix_f64s(c->kernel);
      mix_f64s(c->bias);
    } else if (const auto* bn = std::get_if<BatchNormOp>(&n.kind)) {
      mix_f64s(bn->gamma);
      mix_f64s(bn->beta);
      mix_f64s(bn->mu);
      mix_f64s(bn->sigma);
      mix_bytes(&bn->epsilon, sizeof bn->epsilon);
    } else if (const auto* p = std::get_if<NonAffineOp>(&n.kind)) {
      mix_i64(p->kh);
      mix_i64(p->kw);
    } else if (const auto* o = std::get_if<OtherAffineOp>(&n.kind)) {
      mix_i64(o->kh);
      mix_i64(o->kw);
    }
  }
  for (const auto& out : graph.outputs) mix_str(out);
  return h;
}

Component affine_component(const Graph& graph, const std::string& bn_id) {
  GraphIndex idx(graph);
  const Node* n = idx.node(bn_id);
  if (!n || classify_node(*n) != LayerClass::BatchNorm) throw NotABatchNorm(bn_id);

  Component comp;
  comp.bn_id = bn_id;
  comp.members.insert(bn_id);
  comp.part_in.insert(bn_id);
  comp.part_out.insert(bn_id);

  // (member to expand, side it was reached from)
  std::deque<std::pair<std::string, FoldSide>> work;

  auto visit_neighbor = [&](const std::string& from, const std::string& to, FoldSide side) {
    if (to == bn_id) return;
    const Node* t = idx.node(to);
    if (!t) return;  // graph input, not a node
    if (classify_node(*t) == LayerClass::NonAffine) {
      comp.halted_at.insert({from, to});
      return;
    }
    comp.members.insert(to);
    auto& part = side == FoldSide::In ? comp.part_in : comp.part_out;
    bool fresh = part.insert(to).second;
    if (fresh && classify_node(*t) == LayerClass::OtherAffine) work.push_back({to, side});
  };

  for (const auto& ref : n->inputs) visit_neighbor(bn_id, ref, FoldSide::In);
  for (const auto& c : idx.consumers(bn_id)) visit_neighbor(bn_id, c.consumer, FoldSide::Out);

  while (!work.empty()) {
    auto [id, side] = work.front();
    work.pop_front();
    const Node* m = idx.node(id);
    for (const auto& ref : m->inputs) visit_neighbor(id, ref, side);
    for (const auto& c : idx.consumers(id)) visit_neighbor(id, c.consumer, side);
  }
  return comp;
}

namespace {

/// Undirected edge count between a member and other members (including N).
int degree_within(const GraphIndex& idx, const Component& comp, const std::string& id) {
  int deg = 0;
  const Node* n = idx.node(id);
  for (const auto& ref : n->inputs)
    if (comp.members.count(ref)) ++deg;
  for (const auto& c : idx.consumers(id))
    if (comp.members.count(c.consumer)) ++deg;
  return deg;
}

}  // namespace

LeafSet component_leaves(const Graph& graph, const Component& component, FoldSide side) {
  GraphIndex idx(graph);
  const auto& part = side == FoldSide::In ? component.part_in : component.part_out;
  LeafSet out;
  for (const auto& id : part) {
    if (id == component.bn_id) continue;
    const Node* n = idx.node(id);
    switch (classify_node(*n)) {
      case LayerClass::Expressive: out.leaves[id] = LeafClass::Expressive; break;
      case LayerClass::BatchNorm: out.leaves[id] = LeafClass::BatchNormTerminal; break;
      case LayerClass::OtherAffine: {
        bool halted = false;
        for (const auto& [member, _] : component.halted_at)
          if (member == id) halted = true;
        if (halted || degree_within(idx, component, id) <= 1) out.leaves[id] = LeafClass::Blocked;
        break;
      }
      case LayerClass::NonAffine: break;  // unreachable, never a member
    }
  }
  return out;
}

std::pair<std::set<std::string>, std::set<std::string>>
partition_io(const Graph& graph, const Component& component, FoldSide side) {
  GraphIndex idx(graph);
  const auto& part = side == FoldSide::In ? component.part_in : component.part_out;
  LeafSet leaves = component_leaves(graph, component, side);

  // Directed reachability restricted to the part: In side wants nodes with
  // a path to N, Out side nodes reachable from N.
  std::set<std::string> reach{component.bn_id};
  std::deque<std::string> work{component.bn_id};
  while (!work.empty()) {
    std::string id = work.front();
    work.pop_front();
    if (side == FoldSide::In) {
      const Node* n = idx.node(id);
      for (const auto& ref : n->inputs)
        if (part.count(ref) && reach.insert(ref).second) work.push_back(ref);
    } else {
      for (const auto& c : idx.consumers(id))
        if (part.count(c.consumer) && reach.insert(c.consumer).second) work.push_back(c.consumer);
    }
  }

  std::set<std::string> i_set, o_set;
  for (const auto& [id, _] : leaves.leaves)
    (reach.count(id) ? i_set : o_set).insert(id);
  return {i_set, o_set};
}

namespace {

std::string edge_key(const std::string& u, const std::string& w, int slot) {
  return u + "->" + w + "#" + std::to_string(slot);
}

/// Node output becomes M(old output).
NodeKind producer_compose(const NodeKind& kind, const ChannelAffine& m) {
  if (const auto* d = std::get_if<DenseOp>(&kind)) {
    DenseOp r = *d;
    for (int64_t o = 0; o < r.out_channels; ++o) {
      for (int64_t i = 0; i < r.in_channels; ++i) r.weight[o * r.in_channels + i] *= m.scale[o];
      r.bias[o] = m.scale[o] * r.bias[o] + m.shift[o];
    }
    return r;
  }
  if (const auto* c = std::get_if<Conv2DOp>(&kind)) {
    Conv2DOp r = *c;
    int64_t per_out = r.in_channels * r.kh * r.kw;
    for (int64_t o = 0; o < r.out_channels; ++o) {
      for (int64_t k = 0; k < per_out; ++k) r.kernel[o * per_out + k] *= m.scale[o];
      r.bias[o] = m.scale[o] * r.bias[o] + m.shift[o];
    }
    return r;
  }
  if (const auto* bn = std::get_if<BatchNormOp>(&kind)) {
    BatchNormOp r = *bn;
    for (size_t c = 0; c < r.gamma.size(); ++c) {
      r.gamma[c] *= m.scale[c];
      r.beta[c] = m.scale[c] * r.beta[c] + m.shift[c];
    }
    return r;
  }
  throw UnsupportedPush("producer update on a parameterless node");
}

/// Node now applies its op to M(x) instead of x.
NodeKind consumer_compose(const NodeKind& kind, const ChannelAffine& m) {
  if (const auto* d = std::get_if<DenseOp>(&kind)) {
    DenseOp r = *d;
    for (int64_t o = 0; o < r.out_channels; ++o) {
      double extra = 0.0;
      for (int64_t i = 0; i < r.in_channels; ++i)
        extra += d->weight[o * r.in_channels + i] * m.shift[i];
      r.bias[o] += extra;
      for (int64_t i = 0; i < r.in_channels; ++i) r.weight[o * r.in_channels + i] *= m.scale[i];
    }
    return r;
  }
  if (const auto* c = std::get_if<Conv2DOp>(&kind)) {
    Conv2DOp r = *c;
    int64_t hw = r.kh * r.kw;
    for (int64_t o = 0; o < r.out_channels; ++o) {
      double extra = 0.0;
      for (int64_t i = 0; i < r.in_channels; ++i)
        for (int64_t k = 0; k < hw; ++k)
          extra += c->kernel[(o * r.in_channels + i) * hw + k] * m.shift[i];
      r.bias[o] += extra;
      for (int64_t i = 0; i < r.in_channels; ++i)
        for (int64_t k = 0; k < hw; ++k) r.kernel[(o * r.in_channels + i) * hw + k] *= m.scale[i];
    }
    return r;
  }
  if (const auto* bn = std::get_if<BatchNormOp>(&kind)) {
    // BN(sx + t) expressed with the same mu, sigma, epsilon:
    //   gamma' = gamma * s
    //   beta'  = beta + gamma * (t + mu * (s - 1)) / (sigma + eps)
    BatchNormOp r = *bn;
    for (size_t c = 0; c < r.gamma.size(); ++c) {
      double denom = r.sigma[c] + r.epsilon;
      r.beta[c] = r.beta[c] + r.gamma[c] * (m.shift[c] + r.mu[c] * (m.scale[c] - 1.0)) / denom;
      r.gamma[c] = r.gamma[c] * m.scale[c];
    }
    return r;
  }
  throw UnsupportedPush("consumer update on a parameterless node");
}

/// Push-calculus state machine over one side of a component. Tracks
/// per-node value changes (new = F(old)) and, for forward folds, per-edge
/// compensation debts (old = G(new)). Every assignment is single-shot;
/// mismatching reassignments abort the plan.
class Planner {
public:
  Planner(const Graph& graph, const GraphIndex& idx, const Component& comp, FoldSide side)
      : graph_(graph), idx_(idx), comp_(comp),
        part_(side == FoldSide::In ? comp.part_in : comp.part_out),
        forward_(side == FoldSide::Out) {
    for (size_t i = 0; i < graph.nodes.size(); ++i) topo_index_[graph.nodes[i].id] = i;
  }

  void run(const ChannelAffine& bn_affine) {
    const Node* n = idx_.node(comp_.bn_id);
    if (!forward_) {
      const std::string& producer = n->inputs[0];
      if (!idx_.node(producer))
        throw UnsupportedPush("batch-norm reads a graph input, nothing to fold into");
      require(producer, bn_affine);
    } else {
      if (idx_.is_output(comp_.bn_id))
        throw UnsupportedPush("batch-norm output is a graph output, forward fold would change it");
      for (const auto& c : idx_.consumers(comp_.bn_id))
        process_debt(comp_.bn_id, c.consumer, c.input_slot, bn_affine);
    }
    drain_consequences();
    if (forward_ && change_.count(n->inputs[0]))
      throw UnsupportedPush("fold source value would change");
    verify_consistency();
  }

  std::map<std::string, ParameterUpdate> take_updates() {
    std::map<std::string, ParameterUpdate> out;
    for (auto& [id, kind] : updates_) out[id] = ParameterUpdate{std::move(kind)};
    return out;
  }
  std::map<std::string, ChannelAffine> take_edge_affines() {
    // Record the affine on every region edge leaving a changed node.
    for (const auto& [id, f] : change_)
      for (const auto& c : idx_.consumers(id))
        edge_affines_.emplace(edge_key(id, c.consumer, c.input_slot), f);
    return std::move(edge_affines_);
  }

private:
  int64_t channels_of(const std::string& id) const {
    if (const Node* n = idx_.node(id)) return n->out_shape.channels();
    for (const auto& [iid, shape] : graph_.inputs)
      if (iid == id) return shape.channels();
    return 0;
  }
  int64_t flatten_block(const Node& flatten) const {
    const std::string& src = flatten.inputs[0];
    const TensorShape* s = nullptr;
    if (const Node* n = idx_.node(src)) s = &n->out_shape;
    else
      for (const auto& [iid, shape] : graph_.inputs)
        if (iid == src) s = &shape;
    return s->elements_per_sample() / s->channels();
  }
  ChannelAffine state_of(const std::string& id) const {
    auto it = change_.find(id);
    return it != change_.end() ? it->second : ChannelAffine::identity(channels_of(id));
  }
  /// Per-edge "old = G(new)" relation: explicit debt, else the inverse of
  /// the producer's value change, else identity.
  ChannelAffine edge_state(const std::string& producer, const std::string& consumer,
                           int slot) const {
    auto it = debts_.find(edge_key(producer, consumer, slot));
    if (it != debts_.end()) return it->second;
    auto ch = change_.find(producer);
    if (ch != change_.end()) return ch->second.inverse();
    return ChannelAffine::identity(channels_of(producer));
  }

  void add_update(const std::string& id, NodeKind kind) {
    if (!updates_.emplace(id, std::move(kind)).second)
      throw UnsupportedPush("conflicting parameter updates at '" + id + "'");
  }

  /// Requires node `id`'s output value to change as new = f(old).
  void require(const std::string& id, const ChannelAffine& f) {
    auto existing = change_.find(id);
    if (f.is_identity()) {
      if (existing != change_.end() && !existing->second.is_identity())
        throw UnsupportedPush("conflicting change requirements at '" + id + "'");
      return;
    }
    if (existing != change_.end()) {
      if (existing->second == f) return;
      throw UnsupportedPush("conflicting change requirements at '" + id + "'");
    }
    if (!part_.count(id))
      throw UnsupportedPush("required change escapes the fold region at '" + id + "'");
    if (idx_.is_output(id))
      throw UnsupportedPush("fold would change graph output '" + id + "'");
    change_.emplace(id, f);

    const Node* n = idx_.node(id);
    switch (classify_node(*n)) {
      case LayerClass::Expressive:
      case LayerClass::BatchNorm:
        add_update(id, producer_compose(n->kind, f));
        break;
      case LayerClass::OtherAffine: push_into_inputs(*n, f); break;
      case LayerClass::NonAffine: throw UnsupportedPush("change hits non-affine '" + id + "'");
    }
    pending_.push_back(id);
  }

  /// Records a consequence change without pushing a requirement upstream.
  void note_change(const std::string& id, const ChannelAffine& f) {
    auto existing = change_.find(id);
    if (f.is_identity()) {
      if (existing != change_.end() && !existing->second.is_identity())
        throw UnsupportedPush("conflicting change requirements at '" + id + "'");
      return;
    }
    if (existing != change_.end()) {
      if (existing->second == f) return;
      throw UnsupportedPush("conflicting change requirements at '" + id + "'");
    }
    if (idx_.is_output(id))
      throw UnsupportedPush("fold would change graph output '" + id + "'");
    change_.emplace(id, f);
    pending_.push_back(id);
  }

  /// Consequences run only after the whole requirement tree has assigned
  /// its changes; sibling edges would otherwise look unchanged mid-push.
  void drain_consequences() {
    while (!pending_.empty()) {
      std::string id = pending_.front();
      pending_.pop_front();
      for (const auto& c : idx_.consumers(id)) handle_consequence(id, c.consumer, c.input_slot);
    }
  }

  void handle_consequence(const std::string& v, const std::string& w, int slot) {
    if (w == comp_.bn_id) return;  // the folded node itself
    const Node* n = idx_.node(w);
    if (!part_.count(w))
      throw UnsupportedPush("changed value escapes the fold region into '" + w + "'");
    switch (classify_node(*n)) {
      case LayerClass::Expressive:
      case LayerClass::BatchNorm:
        if (forward_) process_debt(v, w, slot, change_.at(v).inverse());
        else add_update(w, consumer_compose(n->kind, change_.at(v).inverse()));
        break;
      case LayerClass::OtherAffine:
        if (forward_) process_debt(v, w, slot, change_.at(v).inverse());
        else note_change(w, implied_output_change(*n));
        break;
      case LayerClass::NonAffine:
        throw UnsupportedPush("changed value feeds non-affine '" + w + "'");
    }
  }

  /// Requirement flowing backward through a parameterless affine node.
  void push_into_inputs(const Node& n, const ChannelAffine& f) {
    const auto& op = std::get<OtherAffineOp>(n.kind);
    switch (op.kind) {
      case OtherAffineOp::Kind::Identity:
      case OtherAffineOp::Kind::AvgPool2D: require(n.inputs[0], f); break;
      case OtherAffineOp::Kind::Flatten: {
        ChannelAffine folded;
        if (!f.unbroadcast(flatten_block(n), folded))
          throw UnsupportedPush("non-uniform affine cannot cross Flatten backward at '" + n.id + "'");
        require(n.inputs[0], folded);
        break;
      }
      case OtherAffineOp::Kind::Concat: {
        int64_t offset = 0;
        for (const auto& ref : n.inputs) {
          int64_t c = channels_of(ref);
          require(ref, f.slice(offset, offset + c));
          offset += c;
        }
        break;
      }
      case OtherAffineOp::Kind::Add: {
        // One carrier edge takes the whole shift, the rest scale only.
        // Carrier: producer with the smallest topological index. It must be
        // required first: its cascade may repair sibling edges, and those
        // repairs are scale-only, so the orders must agree.
        size_t carrier = 0;
        size_t best = SIZE_MAX;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          auto it = topo_index_.find(n.inputs[i]);
          size_t rank = it == topo_index_.end() ? SIZE_MAX : it->second;
          if (rank < best) {
            best = rank;
            carrier = i;
          }
        }
        ChannelAffine scale_only(f.scale, std::vector<double>(f.scale.size(), 0.0));
        require(n.inputs[carrier], f);
        for (size_t i = 0; i < n.inputs.size(); ++i)
          if (i != carrier) require(n.inputs[i], scale_only);
        break;
      }
    }
  }

  /// Output change of a parameterless affine node implied by its inputs'
  /// current states; repairs unchanged Add operands as needed.
  ChannelAffine implied_output_change(const Node& n) {
    const auto& op = std::get<OtherAffineOp>(n.kind);
    switch (op.kind) {
      case OtherAffineOp::Kind::Identity:
      case OtherAffineOp::Kind::AvgPool2D: return state_of(n.inputs[0]);
      case OtherAffineOp::Kind::Flatten: return state_of(n.inputs[0]).broadcast(flatten_block(n));
      case OtherAffineOp::Kind::Concat: {
        ChannelAffine joined;
        for (const auto& ref : n.inputs) {
          ChannelAffine part = state_of(ref);
          joined.scale.insert(joined.scale.end(), part.scale.begin(), part.scale.end());
          joined.shift.insert(joined.shift.end(), part.shift.begin(), part.shift.end());
        }
        return joined;
      }
      case OtherAffineOp::Kind::Add: {
        std::vector<double> scale;
        for (const auto& ref : n.inputs) {
          ChannelAffine st = state_of(ref);
          if (st.is_identity()) continue;
          if (scale.empty()) scale = st.scale;
          else if (scale != st.scale)
            throw UnsupportedPush("junction '" + n.id + "' mixes incompatible scales");
        }
        if (scale.empty()) return ChannelAffine::identity(channels_of(n.id));
        for (const auto& ref : n.inputs) {
          if (state_of(ref).is_identity() && !std::all_of(scale.begin(), scale.end(),
                                                          [](double s) { return s == 1.0; }))
            require(ref, ChannelAffine(scale, std::vector<double>(scale.size(), 0.0)));
        }
        std::vector<double> shift(scale.size(), 0.0);
        for (const auto& ref : n.inputs) {
          ChannelAffine st = state_of(ref);
          for (size_t c = 0; c < shift.size(); ++c) shift[c] += st.shift[c];
        }
        return ChannelAffine(scale, shift);
      }
    }
    throw UnsupportedPush("unhandled op");
  }

  /// Forward flow: edge (v -> w) obliges downstream to reproduce
  /// old = g(new). Terminals settle the debt, parameterless nodes pass a
  /// transformed debt to their own consumers.
  void process_debt(const std::string& v, const std::string& w, int slot,
                    const ChannelAffine& g) {
    if (!part_.count(w))
      throw UnsupportedPush("compensation debt escapes the fold region into '" + w + "'");
    std::string key = edge_key(v, w, slot);
    auto existing = debts_.find(key);
    if (existing != debts_.end()) {
      if (existing->second == g) return;
      throw UnsupportedPush("conflicting debts on edge " + key);
    }
    debts_.emplace(key, g);
    edge_affines_.emplace(key, g);

    const Node* n = idx_.node(w);
    switch (classify_node(*n)) {
      case LayerClass::Expressive:
      case LayerClass::BatchNorm:
        add_update(w, consumer_compose(n->kind, g));
        return;
      case LayerClass::OtherAffine: break;
      case LayerClass::NonAffine:
        throw UnsupportedPush("debt reaches non-affine '" + w + "'");
    }

    ChannelAffine g_out = implied_output_debt(*n);
    if (g_out.is_identity()) return;
    if (idx_.is_output(w))
      throw UnsupportedPush("fold would change graph output '" + w + "'");
    for (const auto& c : idx_.consumers(w)) process_debt(w, c.consumer, c.input_slot, g_out);
  }

  ChannelAffine implied_output_debt(const Node& n) {
    const auto& op = std::get<OtherAffineOp>(n.kind);
    auto in_state = [&](size_t i) {
      return edge_state(n.inputs[i], n.id, static_cast<int>(i));
    };
    switch (op.kind) {
      case OtherAffineOp::Kind::Identity:
      case OtherAffineOp::Kind::AvgPool2D: return in_state(0);
      case OtherAffineOp::Kind::Flatten: return in_state(0).broadcast(flatten_block(n));
      case OtherAffineOp::Kind::Concat: {
        ChannelAffine joined;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          ChannelAffine part = in_state(i);
          joined.scale.insert(joined.scale.end(), part.scale.begin(), part.scale.end());
          joined.shift.insert(joined.shift.end(), part.shift.begin(), part.shift.end());
        }
        return joined;
      }
      case OtherAffineOp::Kind::Add: {
        std::vector<double> scale;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          ChannelAffine st = in_state(i);
          if (st.is_identity()) continue;
          if (scale.empty()) scale = st.scale;
          else if (scale != st.scale)
            throw UnsupportedPush("junction '" + n.id + "' mixes incompatible debts");
        }
        if (scale.empty()) return ChannelAffine::identity(channels_of(n.id));
        bool unit = std::all_of(scale.begin(), scale.end(), [](double s) { return s == 1.0; });
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          if (!in_state(i).is_identity() || unit) continue;
          // Foreign operand: its producer must pre-scale by 1/g so the sum
          // keeps a single per-channel relation.
          ChannelAffine pre(scale, std::vector<double>(scale.size(), 0.0));
          require(n.inputs[i], pre.inverse());
        }
        std::vector<double> shift(scale.size(), 0.0);
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          ChannelAffine st = in_state(i);
          for (size_t c = 0; c < shift.size(); ++c) shift[c] += st.shift[c];
        }
        return ChannelAffine(scale, shift);
      }
    }
    throw UnsupportedPush("unhandled op");
  }

  /// Final sweep: every parameterless member's recorded state must agree
  /// with the state its inputs imply.
  void verify_consistency() {
    for (const auto& id : part_) {
      if (id == comp_.bn_id) continue;
      const Node* n = idx_.node(id);
      if (classify_node(*n) != LayerClass::OtherAffine) continue;
      if (!forward_) {
        bool touched = change_.count(id) > 0;
        for (const auto& ref : n->inputs) touched = touched || change_.count(ref);
        if (!touched) continue;
        ChannelAffine implied = implied_output_change(*n);
        if (!(implied == state_of(id)))
          throw UnsupportedPush("inconsistent change propagation at '" + id + "'");
      }
    }
  }

  const Graph& graph_;
  const GraphIndex& idx_;
  const Component& comp_;
  const std::set<std::string>& part_;
  bool forward_;
  std::map<std::string, size_t> topo_index_;
  std::map<std::string, ChannelAffine> change_;
  std::map<std::string, ChannelAffine> debts_;
  std::map<std::string, NodeKind> updates_;
  std::map<std::string, ChannelAffine> edge_affines_;
  std::deque<std::string> pending_;
};

struct SideCheck {
  bool structural_ok = false;
  bool plan_ok = false;
  FoldBlockReason fail = FoldBlockReason::Ok;
  size_t o_count = 0;
};

SideCheck evaluate_side(const Graph& graph, const GraphIndex& idx, const Component& comp,
                        FoldSide side, const AnalysisOptions& options) {
  SideCheck result;
  const auto& part = side == FoldSide::In ? comp.part_in : comp.part_out;
  if (part.size() <= 1) {
    result.fail = FoldBlockReason::SurroundedByNonAffine;
    return result;
  }
  if (side == FoldSide::Out) {
    // A non-affine consumer of N would be rewired onto uncompensated values.
    for (const auto& [member, neighbor] : comp.halted_at) {
      if (member != comp.bn_id) continue;
      const Node* nb = idx.node(neighbor);
      bool is_consumer = false;
      for (const auto& c : idx.consumers(comp.bn_id))
        if (c.consumer == neighbor) is_consumer = true;
      if (nb && is_consumer) {
        result.fail = FoldBlockReason::BlockedLeaf;
        return result;
      }
    }
  }
  LeafSet leaves = component_leaves(graph, comp, side);
  for (const auto& [id, cls] : leaves.leaves) {
    bool ok = cls == LeafClass::Expressive ||
              (cls == LeafClass::BatchNormTerminal && options.absorb_bn_leaves);
    if (!ok) {
      result.fail = FoldBlockReason::BlockedLeaf;
      return result;
    }
  }
  result.structural_ok = true;

  const Node* bn = idx.node(comp.bn_id);
  ChannelAffine affine = ChannelAffine::from_batch_norm(std::get<BatchNormOp>(bn->kind));
  try {
    Planner planner(graph, idx, comp, side);
    planner.run(affine);
    result.plan_ok = true;
  } catch (const NonInvertibleAffine&) {
    result.fail = FoldBlockReason::NonInvertibleBN;
  } catch (const UnsupportedPush&) {
    result.fail = FoldBlockReason::UnsupportedPush;
  }
  if (result.plan_ok) result.o_count = partition_io(graph, comp, side).second.size();
  return result;
}

}  // namespace

FoldDecision check_foldable(const Graph& graph, const std::string& bn_id,
                            const AnalysisOptions& options) {
  Component comp = affine_component(graph, bn_id);
  GraphIndex idx(graph);
  SideCheck in = evaluate_side(graph, idx, comp, FoldSide::In, options);
  SideCheck out = evaluate_side(graph, idx, comp, FoldSide::Out, options);

  FoldDecision decision;
  if (in.plan_ok && out.plan_ok) {
    decision.foldable = true;
    decision.direction = out.o_count < in.o_count ? FoldDirection::Forward : FoldDirection::Backward;
    decision.reason = FoldBlockReason::Ok;
  } else if (in.plan_ok || out.plan_ok) {
    decision.foldable = true;
    decision.direction = in.plan_ok ? FoldDirection::Backward : FoldDirection::Forward;
    decision.reason = FoldBlockReason::Ok;
  } else {
    decision.foldable = false;
    decision.direction = FoldDirection::None;
    auto has = [&](FoldBlockReason r) { return in.fail == r || out.fail == r; };
    if (has(FoldBlockReason::NonInvertibleBN)) decision.reason = FoldBlockReason::NonInvertibleBN;
    else if (has(FoldBlockReason::UnsupportedPush)) decision.reason = FoldBlockReason::UnsupportedPush;
    else if (has(FoldBlockReason::BlockedLeaf)) decision.reason = FoldBlockReason::BlockedLeaf;
    else decision.reason = FoldBlockReason::SurroundedByNonAffine;
  }
  return decision;
}

FoldPlan plan_fold(const Graph& graph, const std::string& bn_id, const FoldDecision& decision,
                   const AnalysisOptions& options) {
  (void)options;
  if (!decision.foldable || decision.direction == FoldDirection::None)
    throw UnsupportedPush("plan_fold requires a foldable decision for '" + bn_id + "'");
  Component comp = affine_component(graph, bn_id);
  GraphIndex idx(graph);
  FoldSide side = decision.direction == FoldDirection::Backward ? FoldSide::In : FoldSide::Out;

  const Node* bn = idx.node(bn_id);
  ChannelAffine affine = ChannelAffine::from_batch_norm(std::get<BatchNormOp>(bn->kind));
  Planner planner(graph, idx, comp, side);
  planner.run(affine);

  FoldPlan plan;
  plan.bn_id = bn_id;
  plan.direction = decision.direction;
  plan.leaf_updates = planner.take_updates();
  plan.edge_affines = planner.take_edge_affines();
  std::tie(plan.part_i, plan.part_o) = partition_io(graph, comp, side);
  plan.source_digest = graph_digest(graph);
  return plan;
}

}  // namespace bnfold
