#include <doctest.h>

#include <algorithm>

#include "bnfold/channel_affine.hpp"
#include "bnfold/errors.hpp"
#include "bnfold/fold_analysis.hpp"
#include "bnfold/fold_transform.hpp"
#include "bnfold/equivalence.hpp"
#include "bnfold/interpreter.hpp"
#include "bnfold/models.hpp"
#include "bnfold/rng.hpp"
#include "support/oracles.hpp"

using namespace bnfold;

namespace {

BatchNormOp bn_params(std::vector<double> gamma, std::vector<double> beta, std::vector<double> mu,
                      std::vector<double> sigma, double eps) {
  BatchNormOp bn;
  bn.gamma = std::move(gamma);
  bn.beta = std::move(beta);
  bn.mu = std::move(mu);
  bn.sigma = std::move(sigma);
  bn.epsilon = eps;
  return bn;
}

Graph vgg_chain() {
  DenseOp d;
  d.out_channels = d.in_channels = 2;
  d.weight = {1.0, 0.5, -0.5, 2.0};
  d.bias = {0.1, -0.1};
  return build_graph(
      "vgg", {{"x", TensorShape{0, 2}}},
      {Node{"dense", d, {"x"}, {}},
       Node{"bn", bn_params({1.5, 2.0}, {0.2, -0.3}, {0.4, 0.1}, {0.9, 1.2}, 1e-3), {"dense"}, {}},
       Node{"relu", NonAffineOp{NonAffineOp::Kind::ReLU}, {"bn"}, {}}},
      {"relu"});
}

Graph bn_between_relus() {
  return build_graph(
      "trapped", {{"x", TensorShape{0, 2}}},
      {Node{"r1", NonAffineOp{NonAffineOp::Kind::ReLU}, {"x"}, {}},
       Node{"bn", bn_params({1.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}, 1e-3), {"r1"}, {}},
       Node{"r2", NonAffineOp{NonAffineOp::Kind::ReLU}, {"bn"}, {}}},
      {"r2"});
}

}  // namespace

TEST_CASE("channel affine: batch-norm mapping, composition, inverse") {
  BatchNormOp bn = bn_params({3.0}, {0.5}, {1.0}, {0.999}, 0.001);
  ChannelAffine a = ChannelAffine::from_batch_norm(bn);
  CHECK(a.scale[0] == doctest::Approx(3.0));
  CHECK(a.shift[0] == doctest::Approx(-2.5));

  ChannelAffine p({2.0, -1.0}, {1.0, 3.0});
  ChannelAffine q({0.5, 4.0}, {-2.0, 0.25});
  ChannelAffine qp = q.after(p);
  Rng rng(5);
  for (int i = 0; i < 8; ++i) {
    double x = rng.next_normal();
    for (int64_t c = 0; c < 2; ++c) {
      CHECK(qp.apply(c, x) == doctest::Approx(q.apply(c, p.apply(c, x))).epsilon(1e-14));
      CHECK(p.inverse().apply(c, p.apply(c, x)) == doctest::Approx(x).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(ChannelAffine({0.0}, {1.0}).inverse(), NonInvertibleAffine);
}

TEST_CASE("affine_component: vgg chain splits into C_in and a bare C_out") {
  Graph g = vgg_chain();
  Component c = affine_component(g, "bn");
  CHECK(c.members == std::set<std::string>{"dense", "bn"});
  CHECK(c.part_in == std::set<std::string>{"dense", "bn"});
  CHECK(c.part_out == std::set<std::string>{"bn"});
  CHECK(c.halted_at == std::set<std::pair<std::string, std::string>>{{"bn", "relu"}});
}

TEST_CASE("affine_component: batch-norm surrounded by activations is alone") {
  Graph g = bn_between_relus();
  Component c = affine_component(g, "bn");
  CHECK(c.members == std::set<std::string>{"bn"});
  CHECK(c.part_in == std::set<std::string>{"bn"});
  CHECK(c.part_out == std::set<std::string>{"bn"});
}

TEST_CASE("affine_component: construction stops before non-affine nodes") {
  // a -> e -> f -> bn with a non-affine between a and e: the in part is
  // restricted to what lies past the activation.
  DenseOp d;
  d.out_channels = d.in_channels = 2;
  d.weight = {1, 0, 0, 1};
  d.bias = {0, 0};
  Graph g = build_graph(
      "rebuttal", {{"x", TensorShape{0, 2}}},
      {Node{"a", d, {"x"}, {}},
       Node{"act", NonAffineOp{NonAffineOp::Kind::Tanh}, {"a"}, {}},
       Node{"e", OtherAffineOp{OtherAffineOp::Kind::Identity}, {"act"}, {}},
       Node{"f", OtherAffineOp{OtherAffineOp::Kind::Identity}, {"e"}, {}},
       Node{"bn", bn_params({1, 1}, {0, 0}, {0, 0}, {1, 1}, 1e-3), {"f"}, {}}},
      {"bn"});
  Component c = affine_component(g, "bn");
  CHECK(c.members == std::set<std::string>{"e", "f", "bn"});
  CHECK(c.halted_at.count({"e", "act"}) == 1);
}

TEST_CASE("affine_component rejects non-batch-norm nodes") {
  Graph g = vgg_chain();
  CHECK_THROWS_AS(affine_component(g, "dense"), NotABatchNorm);
  CHECK_THROWS_AS(affine_component(g, "missing"), NotABatchNorm);
}

TEST_CASE("component_leaves: chain, blocked leaf, empty part") {
  Graph g = vgg_chain();
  Component c = affine_component(g, "bn");
  LeafSet in_leaves = component_leaves(g, c, FoldSide::In);
  REQUIRE(in_leaves.leaves.size() == 1);
  CHECK(in_leaves.leaves.at("dense") == LeafClass::Expressive);
  CHECK(component_leaves(g, c, FoldSide::Out).leaves.empty());

  GeneratedModel m = generate(Archetype::Fig5b, {}, 3);
  Component c5 = affine_component(m.graph, "bn1");
  LeafSet leaves5 = component_leaves(m.graph, c5, FoldSide::In);
  CHECK(leaves5.leaves.at("g2") == LeafClass::Blocked);  // expansion halted at relu_b
}

TEST_CASE("check_foldable: figure corpus decisions") {
  GeneratedModel fig2a = generate(Archetype::Fig2a, {}, 1);
  for (const auto& [bn, label] : fig2a.labels) {
    FoldDecision d = check_foldable(fig2a.graph, bn);
    CHECK(d.foldable);
    CHECK(d.direction == FoldDirection::Backward);
  }

  GeneratedModel fig2c = generate(Archetype::Fig2c, {}, 1);
  FoldDecision djunction = check_foldable(fig2c.graph, "bn1");
  CHECK(djunction.foldable);
  CHECK(djunction.direction == FoldDirection::Backward);

  GeneratedModel fig5b = generate(Archetype::Fig5b, {}, 1);
  FoldDecision dblocked = check_foldable(fig5b.graph, "bn1");
  CHECK_FALSE(dblocked.foldable);
  CHECK(dblocked.reason == FoldBlockReason::BlockedLeaf);

  Graph trapped = bn_between_relus();
  FoldDecision dtrap = check_foldable(trapped, "bn");
  CHECK_FALSE(dtrap.foldable);
  CHECK(dtrap.reason == FoldBlockReason::SurroundedByNonAffine);
}

TEST_CASE("check_foldable: zero-scale channels fold only without O-leaves") {
  // Sequential: dense -> bn(gamma has a zero) -> relu. O is empty, the
  // zero scale lands in the producer, fold proceeds.
  DenseOp d;
  d.out_channels = d.in_channels = 2;
  d.weight = {1, 2, 3, 4};
  d.bias = {0.5, -0.5};
  Graph seq = build_graph(
      "zs", {{"x", TensorShape{0, 2}}},
      {Node{"dense", d, {"x"}, {}},
       Node{"bn", bn_params({0.0, 1.0}, {0.3, 0.1}, {0.2, 0.2}, {1.0, 1.0}, 1e-3), {"dense"}, {}},
       Node{"relu", NonAffineOp{NonAffineOp::Kind::ReLU}, {"bn"}, {}}},
      {"relu"});
  FoldDecision dseq = check_foldable(seq, "bn");
  CHECK(dseq.foldable);
  FoldPlan plan = plan_fold(seq, "bn", dseq);
  Graph folded = apply_fold(seq, plan);
  CHECK(check_equivalence(seq, folded, 50, 7, 1e-9).pass);

  // fig5a-like junction: the O-leaf needs the inverse, a zero scale blocks it.
  GeneratedModel m = generate(Archetype::Fig5a, {}, 2);
  Graph g = m.graph;
  for (auto& n : g.nodes)
    if (n.id == "bn1") std::get<BatchNormOp>(n.kind).gamma[0] = 0.0;
  FoldDecision dj = check_foldable(g, "bn1");
  CHECK_FALSE(dj.foldable);
  CHECK(dj.reason == FoldBlockReason::NonInvertibleBN);
}

TEST_CASE("partition_io: fig5a case study and sequential chain") {
  GeneratedModel m = generate(Archetype::Fig5a, {}, 4);
  Component c = affine_component(m.graph, "bn1");
  auto [i_set, o_set] = partition_io(m.graph, c, FoldSide::In);
  CHECK(i_set == std::set<std::string>{"dense2", "dense3"});
  CHECK(o_set == std::set<std::string>{"dense4"});

  Graph g = vgg_chain();
  Component cv = affine_component(g, "bn");
  auto [iv, ov] = partition_io(g, cv, FoldSide::In);
  CHECK(iv == std::set<std::string>{"dense"});
  CHECK(ov.empty());
}

TEST_CASE("partition_io: diamond producers both land in I, checked by reachability oracle") {
  GeneratedModel m = generate(Archetype::Fig2c, {}, 4);
  Component c = affine_component(m.graph, "bn1");
  auto [i_set, o_set] = partition_io(m.graph, c, FoldSide::In);
  CHECK(i_set == std::set<std::string>{"dense2", "dense3"});
  CHECK(o_set == std::set<std::string>{"dense4"});
  for (const auto& id : i_set) CHECK(oracles::reachable(m.graph, id, "bn1"));
  for (const auto& id : o_set) CHECK_FALSE(oracles::reachable(m.graph, id, "bn1"));
}

TEST_CASE("plan_fold: the 1x1 worked example gives W'=[[6]], b'=[0.5]") {
  DenseOp d;
  d.out_channels = d.in_channels = 1;
  d.weight = {2.0};
  d.bias = {1.0};
  Graph g = build_graph(
      "ex", {{"x", TensorShape{0, 1}}},
      {Node{"dense", d, {"x"}, {}},
       Node{"bn", bn_params({3.0}, {0.5}, {1.0}, {0.999}, 0.001), {"dense"}, {}}},
      {"bn"});
  FoldDecision decision = check_foldable(g, "bn");
  REQUIRE(decision.foldable);
  FoldPlan plan = plan_fold(g, "bn", decision);
  REQUIRE(plan.leaf_updates.count("dense") == 1);
  const auto& updated = std::get<DenseOp>(plan.leaf_updates.at("dense").new_kind);
  CHECK(updated.weight[0] == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(updated.bias[0] == doctest::Approx(0.5).epsilon(1e-15));

  Graph folded = apply_fold(g, plan);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    double x = rng.next_normal();
    InputBinding b{{"x", TensorValue(TensorShape{1, 1}, {x})}};
    auto before = eval_graph(g, b);
    auto after = eval_graph(folded, b);
    CHECK(std::abs(before.at("bn").data[0] - after.at(folded.outputs[0]).data[0]) < 1e-12);
  }
}

TEST_CASE("plan_fold: identity batch-norm plans no-op updates") {
  DenseOp d;
  d.out_channels = d.in_channels = 2;
  d.weight = {1, 2, 3, 4};
  d.bias = {0.25, -0.75};
  Graph g = build_graph(
      "idbn", {{"x", TensorShape{0, 2}}},
      {Node{"dense", d, {"x"}, {}},
       Node{"bn", bn_params({1, 1}, {0, 0}, {0, 0}, {1.0 - 1e-3, 1.0 - 1e-3}, 1e-3), {"dense"}, {}}},
      {"bn"});
  FoldDecision decision = check_foldable(g, "bn");
  REQUIRE(decision.foldable);
  FoldPlan plan = plan_fold(g, "bn", decision);
  // a no-op push plans no parameter rewrites at all
  CHECK(plan.leaf_updates.empty());
  Graph folded = apply_fold(g, plan);
  CHECK(std::get<DenseOp>(folded.find("dense")->kind).weight == d.weight);
  CHECK(std::get<DenseOp>(folded.find("dense")->kind).bias == d.bias);
}

TEST_CASE("plan_fold: fig5a plan folds I by the push and O by its negation") {
  GeneratedModel m = generate(Archetype::Fig5a, {}, 6);
  FoldDecision decision = check_foldable(m.graph, "bn1");
  REQUIRE(decision.foldable);
  FoldPlan plan = plan_fold(m.graph, "bn1", decision);
  CHECK(plan.part_i == std::set<std::string>{"dense2", "dense3"});
  CHECK(plan.part_o == std::set<std::string>{"dense4"});
  CHECK(plan.leaf_updates.count("dense2") == 1);
  CHECK(plan.leaf_updates.count("dense3") == 1);
  CHECK(plan.leaf_updates.count("dense4") == 1);

  Graph folded = apply_fold(m.graph, plan);
  EquivalenceReport rep = check_equivalence(m.graph, folded, 100, 11, 1e-9);
  CHECK(rep.pass);
  CHECK(rep.max_l1 <= 1e-9);
}

TEST_CASE("plan_fold: strict-paper mode declines batch-norm leaves, absorb mode merges") {
  // dense -> bn_a -> bn_b -> relu: folding bn_b backward meets bn_a.
  DenseOp d;
  d.out_channels = d.in_channels = 2;
  d.weight = {2, 0, 0, 2};
  d.bias = {0, 0};
  Graph g = build_graph(
      "chain", {{"x", TensorShape{0, 2}}},
      {Node{"dense", d, {"x"}, {}},
       Node{"bn_a", bn_params({1.5, 0.5}, {0.1, 0.2}, {0.3, 0.4}, {1, 1}, 1e-3), {"dense"}, {}},
       Node{"bn_b", bn_params({2.0, -1.0}, {0.5, 0.5}, {0.1, 0.1}, {1, 1}, 1e-3), {"bn_a"}, {}},
       Node{"relu", NonAffineOp{NonAffineOp::Kind::ReLU}, {"bn_b"}, {}}},
      {"relu"});

  AnalysisOptions strict;
  strict.absorb_bn_leaves = false;
  FoldDecision dstrict = check_foldable(g, "bn_b", strict);
  CHECK_FALSE(dstrict.foldable);
  CHECK(dstrict.reason == FoldBlockReason::BlockedLeaf);

  FoldDecision dabsorb = check_foldable(g, "bn_b");
  REQUIRE(dabsorb.foldable);
  FoldPlan plan = plan_fold(g, "bn_b", dabsorb);
  REQUIRE(plan.leaf_updates.count("bn_a") == 1);
  Graph folded = apply_fold(g, plan);
  CHECK(folded.find("bn_b") == nullptr);
  CHECK(check_equivalence(g, folded, 50, 21, 1e-9).pass);
}

TEST_CASE("affine_component is independent of node list order") {
  GeneratedModel m = generate(Archetype::ResNetToy, {}, 17);
  Component base = affine_component(m.graph, "bn2");

  // rebuild the graph from a reversed node list; canonical order restores
  std::vector<Node> shuffled(m.graph.nodes.rbegin(), m.graph.nodes.rend());
  Graph rebuilt = build_graph(m.graph.name, m.graph.inputs, shuffled, m.graph.outputs);
  Component again = affine_component(rebuilt, "bn2");
  CHECK(base.members == again.members);
  CHECK(base.part_in == again.part_in);
  CHECK(base.part_out == again.part_out);
  CHECK(base.halted_at == again.halted_at);
}

TEST_CASE("push composition: interior chains compose like the affines they carry") {
  // dense -> id -> avgpool-free chain (vector ops) -> bn; folding through k
  // interior ops equals composing the per-edge affines directly.
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    Rng rng(seed);
    int64_t c = 3;
    DenseOp d;
    d.out_channels = d.in_channels = c;
    d.weight.resize(c * c);
    d.bias.resize(c);
    for (auto& v : d.weight) v = rng.next_normal();
    for (auto& v : d.bias) v = rng.next_normal();

    std::vector<Node> nodes{Node{"dense", d, {"x"}, {}}};
    std::string prev = "dense";
    int interiors = 1 + static_cast<int>(rng.next_below(3));
    for (int i = 0; i < interiors; ++i) {
      std::string id = "mid" + std::to_string(i);
      nodes.push_back(Node{id, OtherAffineOp{OtherAffineOp::Kind::Identity}, {prev}, {}});
      prev = id;
    }
    BatchNormOp bn;
    bn.epsilon = 1e-3;
    for (int64_t i = 0; i < c; ++i) {
      bn.gamma.push_back(1.0 + rng.next_uniform());
      bn.beta.push_back(rng.next_normal());
      bn.mu.push_back(rng.next_normal());
      bn.sigma.push_back(0.5 + rng.next_uniform());
    }
    nodes.push_back(Node{"bn", bn, {prev}, {}});
    Graph g = build_graph("comp", {{"x", TensorShape{0, c}}}, std::move(nodes), {"bn"});

    FoldDecision decision = check_foldable(g, "bn");
    REQUIRE(decision.foldable);
    FoldPlan plan = plan_fold(g, "bn", decision);

    // every interior edge carries the same affine as the seed edge
    ChannelAffine seed_affine = ChannelAffine::from_batch_norm(bn);
    for (const auto& [edge, affine] : plan.edge_affines) CHECK(affine == seed_affine);

    // and the leaf update equals composing the affine onto the dense params
    const auto& updated = std::get<DenseOp>(plan.leaf_updates.at("dense").new_kind);
    for (int64_t o = 0; o < c; ++o) {
      for (int64_t i = 0; i < c; ++i)
        CHECK(updated.weight[o * c + i] ==
              doctest::Approx(seed_affine.scale[o] * d.weight[o * c + i]).epsilon(1e-14));
      CHECK(updated.bias[o] ==
            doctest::Approx(seed_affine.apply(o, d.bias[o])).epsilon(1e-14));
    }
  }
}

TEST_CASE("sequential graphs: foldable iff an expressive layer is affine-reachable") {
  // random sequential stacks; compare check_foldable against a direct scan
  for (uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed * 977);
    int64_t c = 3;
    std::vector<Node> nodes;
    std::string prev = "x";
    int n = 3 + static_cast<int>(rng.next_below(5));
    std::string bn_id;
    for (int i = 0; i < n; ++i) {
      std::string id = "n" + std::to_string(i);
      int pick = static_cast<int>(rng.next_below(4));
      if (pick == 0) {
        DenseOp d;
        d.out_channels = d.in_channels = c;
        d.weight.resize(c * c);
        d.bias.resize(c);
        for (auto& v : d.weight) v = rng.next_normal();
        for (auto& v : d.bias) v = rng.next_normal();
        nodes.push_back(Node{id, d, {prev}, {}});
      } else if (pick == 1) {
        nodes.push_back(Node{id, NonAffineOp{NonAffineOp::Kind::ReLU}, {prev}, {}});
      } else if (pick == 2) {
        nodes.push_back(Node{id, OtherAffineOp{OtherAffineOp::Kind::Identity}, {prev}, {}});
      } else {
        BatchNormOp bn;
        bn.epsilon = 1e-3;
        for (int64_t k = 0; k < c; ++k) {
          bn.gamma.push_back(1.0 + rng.next_uniform());
          bn.beta.push_back(rng.next_normal());
          bn.mu.push_back(rng.next_normal());
          bn.sigma.push_back(0.5 + rng.next_uniform());
        }
        nodes.push_back(Node{id, bn, {prev}, {}});
        if (bn_id.empty()) bn_id = id;
      }
      prev = id;
    }
    if (bn_id.empty()) continue;
    Graph g = build_graph("seq", {{"x", TensorShape{0, c}}}, std::move(nodes), {prev});

    // direct scan: walk both directions from the bn across parameterless
    // affine nodes; strict mode stops at other batch-norms like the scan does
    auto affine_reachable_expressive = [&](const std::string& bn) {
      GraphIndex idx(g);
      for (int dir = 0; dir < 2; ++dir) {
        std::string cur = bn;
        while (true) {
          const auto* node = idx.node(cur);
          std::string next;
          if (dir == 0) {
            next = node->inputs[0];
          } else {
            const auto& cons = idx.consumers(cur);
            if (cons.empty()) break;
            next = cons[0].consumer;
          }
          const auto* nn = idx.node(next);
          if (!nn) break;
          LayerClass cls = classify_node(*nn);
          if (cls == LayerClass::Expressive) return true;
          if (cls != LayerClass::OtherAffine) break;
          cur = next;
        }
      }
      return false;
    };

    AnalysisOptions strict;
    strict.absorb_bn_leaves = false;
    FoldDecision d = check_foldable(g, bn_id, strict);
    CHECK(d.foldable == affine_reachable_expressive(bn_id));
  }
}
