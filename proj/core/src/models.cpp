#include "bnfold/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bnfold/errors.hpp"
#include "bnfold/rng.hpp"

namespace bnfold {

namespace {

std::vector<double> normal_vec(Rng& rng, int64_t n, double scale) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = scale * rng.next_normal();
  return v;
}

DenseOp make_dense(Rng& rng, int64_t out, int64_t in) {
  DenseOp d;
  d.out_channels = out;
  d.in_channels = in;
  d.weight = normal_vec(rng, out * in, 1.0 / std::sqrt(static_cast<double>(in)));
  d.bias = normal_vec(rng, out, 0.1);
  return d;
}

Conv2DOp make_conv(Rng& rng, int64_t out, int64_t in, int64_t kh, int64_t kw) {
  Conv2DOp c;
  c.out_channels = out;
  c.in_channels = in;
  c.kh = kh;
  c.kw = kw;
  c.kernel = normal_vec(rng, out * in * kh * kw, 1.0 / std::sqrt(static_cast<double>(in * kh * kw)));
  c.bias = normal_vec(rng, out, 0.1);
  return c;
}

/// gamma bounded away from zero, sigma strictly positive: keeps every fold
/// numerically tame and the induced affine invertible.
BatchNormOp make_bn(Rng& rng, int64_t channels) {
  BatchNormOp bn;
  bn.epsilon = 1e-3;
  bn.gamma.resize(channels);
  bn.sigma.resize(channels);
  for (int64_t c = 0; c < channels; ++c) {
    double sign = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
    bn.gamma[c] = sign * (0.5 + 0.5 * std::abs(rng.next_normal()));
    bn.sigma[c] = 0.25 + 0.5 * std::abs(rng.next_normal());
  }
  bn.beta = normal_vec(rng, channels, 1.0);
  bn.mu = normal_vec(rng, channels, 1.0);
  return bn;
}

Node relu(std::string id, std::string input) {
  return Node{std::move(id), NonAffineOp{NonAffineOp::Kind::ReLU}, {std::move(input)}, {}};
}
Node identity(std::string id, std::string input) {
  return Node{std::move(id), OtherAffineOp{OtherAffineOp::Kind::Identity}, {std::move(input)}, {}};
}
Node add(std::string id, std::vector<std::string> inputs) {
  return Node{std::move(id), OtherAffineOp{OtherAffineOp::Kind::Add}, {std::move(inputs)}, {}};
}
Node flatten(std::string id, std::string input) {
  return Node{std::move(id), OtherAffineOp{OtherAffineOp::Kind::Flatten}, {std::move(input)}, {}};
}

GeneratedModel make_fig2a(const ArchetypeDims& dims, uint64_t seed) {
  if (dims.blocks < 1 || dims.channels < 1) throw InvalidDims("fig2a needs blocks >= 1, channels >= 1");
  Rng rng(seed);
  std::vector<Node> nodes;
  GeneratedModel model;
  std::string prev = "x";
  int64_t width = dims.channels;
  for (int64_t k = 1; k <= dims.blocks; ++k) {
    int64_t next = std::min<int64_t>(64, width * 2);
    std::string d = "dense" + std::to_string(k);
    std::string b = "bn" + std::to_string(k);
    std::string r = "relu" + std::to_string(k);
    nodes.push_back(Node{d, make_dense(rng, next, width), {prev}, {}});
    nodes.push_back(Node{b, make_bn(rng, next), {d}, {}});
    nodes.push_back(relu(r, b));
    model.labels[b] = BnLabel{true, true};
    prev = r;
    width = next;
  }
  model.graph = build_graph("fig2a", {{"x", TensorShape{0, dims.channels}}}, std::move(nodes), {prev});
  return model;
}

GeneratedModel make_fig2b(const ArchetypeDims& dims, uint64_t seed) {
  if (dims.channels < 2 || dims.height < 6 || dims.width < 6)
    throw InvalidDims("fig2b needs channels >= 2 and an image of at least 6x6");
  Rng rng(seed);
  int64_t c1 = std::max<int64_t>(2, dims.channels / 2);
  int64_t c2 = dims.channels;
  int64_t h1 = dims.height - 2, w1 = dims.width - 2;          // conv1 3x3
  int64_t h2 = (h1 - 2) / 2 + 1, w2 = (w1 - 2) / 2 + 1;       // avgpool 2x2
  int64_t h3 = h2 - 1, w3 = w2 - 1;                           // conv2 2x2
  if (h3 < 1 || w3 < 1) throw InvalidDims("fig2b image too small");

  std::vector<Node> nodes;
  GeneratedModel model;
  nodes.push_back(Node{"conv1", make_conv(rng, c1, 3, 3, 3), {"x"}, {}});
  nodes.push_back(Node{"bn1", make_bn(rng, c1), {"conv1"}, {}});
  nodes.push_back(relu("relu1", "bn1"));
  nodes.push_back(Node{"bn_trap", make_bn(rng, c1), {"relu1"}, {}});
  nodes.push_back(relu("relu2", "bn_trap"));
  nodes.push_back(Node{"pool1", OtherAffineOp{OtherAffineOp::Kind::AvgPool2D, 2, 2}, {"relu2"}, {}});
  nodes.push_back(Node{"bn_fwd", make_bn(rng, c1), {"pool1"}, {}});
  nodes.push_back(identity("id1", "bn_fwd"));
  nodes.push_back(Node{"conv2", make_conv(rng, c2, c1, 2, 2), {"id1"}, {}});
  nodes.push_back(identity("id2", "conv2"));
  nodes.push_back(Node{"bn_back", make_bn(rng, c2), {"id2"}, {}});
  nodes.push_back(relu("relu3", "bn_back"));
  nodes.push_back(flatten("flat", "relu3"));
  nodes.push_back(Node{"head", make_dense(rng, dims.head_units, c2 * h3 * w3), {"flat"}, {}});
  model.labels["bn1"] = BnLabel{true, true};
  model.labels["bn_trap"] = BnLabel{false, false};
  model.labels["bn_fwd"] = BnLabel{true, true};
  model.labels["bn_back"] = BnLabel{true, true};
  model.graph = build_graph("fig2b", {{"x", TensorShape{0, 3, dims.height, dims.width}}},
                            std::move(nodes), {"head"});
  return model;
}

GeneratedModel make_fig2c(const ArchetypeDims& dims, uint64_t seed) {
  if (dims.channels < 1) throw InvalidDims("fig2c needs channels >= 1");
  Rng rng(seed);
  int64_t c = dims.channels;
  std::vector<Node> nodes;
  GeneratedModel model;
  nodes.push_back(Node{"dense1", make_dense(rng, c, c), {"x"}, {}});
  nodes.push_back(Node{"dense2", make_dense(rng, c, c), {"dense1"}, {}});
  nodes.push_back(Node{"dense3", make_dense(rng, c, c), {"dense1"}, {}});
  nodes.push_back(add("add1", {"dense2", "dense3"}));
  nodes.push_back(Node{"bn1", make_bn(rng, c), {"add1"}, {}});
  nodes.push_back(Node{"dense4", make_dense(rng, c, c), {"add1"}, {}});
  nodes.push_back(relu("relu1", "bn1"));
  nodes.push_back(relu("relu2", "dense4"));
  nodes.push_back(add("add2", {"relu1", "relu2"}));
  model.labels["bn1"] = BnLabel{false, true};
  model.graph = build_graph("fig2c", {{"x", TensorShape{0, c}}}, std::move(nodes), {"add2"});
  return model;
}

GeneratedModel make_fig4(const ArchetypeDims& dims, uint64_t seed) {
  if (dims.channels < 1) throw InvalidDims("fig4 needs channels >= 1");
  Rng rng(seed);
  int64_t c = dims.channels;
  std::vector<Node> nodes;
  GeneratedModel model;
  nodes.push_back(Node{"dense1", make_dense(rng, c, c), {"x"}, {}});
  nodes.push_back(identity("id1", "dense1"));
  nodes.push_back(identity("id2", "id1"));
  nodes.push_back(Node{"bn1", make_bn(rng, c), {"id2"}, {}});
  nodes.push_back(relu("relu_a", "bn1"));
  nodes.push_back(relu("relu_b", "id1"));
  nodes.push_back(add("add1", {"relu_a", "relu_b"}));
  model.labels["bn1"] = BnLabel{false, false};
  model.graph = build_graph("fig4", {{"x", TensorShape{0, c}}}, std::move(nodes), {"add1"});
  return model;
}

GeneratedModel make_fig5a(const ArchetypeDims& dims, uint64_t seed) {
  if (dims.channels < 1) throw InvalidDims("fig5a needs channels >= 1");
  Rng rng(seed);
  int64_t c = dims.channels;
  std::vector<Node> nodes;
  GeneratedModel model;
  nodes.push_back(Node{"dense1", make_dense(rng, c, c), {"x"}, {}});
  nodes.push_back(Node{"dense2", make_dense(rng, c, c), {"dense1"}, {}});
  nodes.push_back(Node{"dense3", make_dense(rng, c, c), {"dense1"}, {}});
  nodes.push_back(add("g1", {"dense2", "dense3"}));
  nodes.push_back(identity("g2", "g1"));
  nodes.push_back(Node{"bn1", make_bn(rng, c), {"g2"}, {}});
  nodes.push_back(Node{"dense4", make_dense(rng, c, c), {"g2"}, {}});
  nodes.push_back(relu("relu1", "bn1"));
  nodes.push_back(relu("relu2", "dense4"));
  model.labels["bn1"] = BnLabel{false, true};
  model.graph = build_graph("fig5a", {{"x", TensorShape{0, c}}}, std::move(nodes),
                            {"relu1", "relu2"});
  return model;
}

GeneratedModel make_fig5b(const ArchetypeDims& dims, uint64_t seed) {
  if (dims.channels < 1) throw InvalidDims("fig5b needs channels >= 1");
  Rng rng(seed);
  int64_t c = dims.channels;
  std::vector<Node> nodes;
  GeneratedModel model;
  nodes.push_back(Node{"dense1", make_dense(rng, c, c), {"x"}, {}});
  nodes.push_back(Node{"dense2", make_dense(rng, c, c), {"dense1"}, {}});
  nodes.push_back(Node{"dense3", make_dense(rng, c, c), {"dense1"}, {}});
  nodes.push_back(add("g1", {"dense2", "dense3"}));
  nodes.push_back(identity("g2", "g1"));
  nodes.push_back(Node{"bn1", make_bn(rng, c), {"g2"}, {}});
  nodes.push_back(relu("relu_a", "bn1"));
  nodes.push_back(relu("relu_b", "g2"));
  nodes.push_back(add("add2", {"relu_a", "relu_b"}));
  model.labels["bn1"] = BnLabel{false, false};
  model.graph = build_graph("fig5b", {{"x", TensorShape{0, c}}}, std::move(nodes), {"add2"});
  return model;
}

GeneratedModel make_resnet_toy(const ArchetypeDims& dims, uint64_t seed) {
  if (dims.blocks < 1 || dims.channels < 1 || dims.height < 1 || dims.width < 1)
    throw InvalidDims("resnet needs blocks >= 1 and a positive image");
  Rng rng(seed);
  int64_t c = dims.channels;
  std::vector<Node> nodes;
  GeneratedModel model;
  nodes.push_back(Node{"stem", make_conv(rng, c, c, 1, 1), {"x"}, {}});
  nodes.push_back(identity("tap0", "stem"));
  std::string prev = "tap0";
  for (int64_t k = 1; k <= dims.blocks; ++k) {
    std::string suffix = std::to_string(k);
    nodes.push_back(Node{"bn" + suffix, make_bn(rng, c), {prev}, {}});
    nodes.push_back(relu("relu" + suffix, "bn" + suffix));
    nodes.push_back(Node{"conv" + suffix, make_conv(rng, c, c, 1, 1), {"relu" + suffix}, {}});
    nodes.push_back(add("join" + suffix, {"conv" + suffix, prev}));
    model.labels["bn" + suffix] = BnLabel{false, true};
    prev = "join" + suffix;
  }
  nodes.push_back(flatten("flat", prev));
  nodes.push_back(Node{"head", make_dense(rng, dims.head_units, c * dims.height * dims.width),
                       {"flat"}, {}});
  nodes.push_back(Node{"bn_tail", make_bn(rng, dims.head_units), {"head"}, {}});
  model.labels["bn_tail"] = BnLabel{true, true};
  model.graph = build_graph("resnet_toy", {{"x", TensorShape{0, c, dims.height, dims.width}}},
                            std::move(nodes), {"bn_tail"});
  return model;
}

/// Grammar-driven random DAG: keeps a pool of produced tensors, appends
/// shape-compatible operators, guarantees at least one batch-norm and a
/// non-activation output. Junction operands always come from distinct
/// producers.
GeneratedModel make_random_dag(const ArchetypeDims& dims, uint64_t seed) {
  if (dims.nodes < 3) throw InvalidDims("randomdag needs a node budget of at least 3");
  Rng rng(seed);

  struct Slot {
    std::string id;
    TensorShape shape;
  };
  std::vector<Slot> pool;
  std::vector<Node> nodes;
  int bn_count = 0;
  int counter = 0;
  auto fresh = [&](const std::string& stem) { return stem + std::to_string(counter++); };

  bool image = rng.next_uniform() < 0.5;
  TensorShape in_shape = image
      ? TensorShape{0, 2 + static_cast<int64_t>(rng.next_below(4)),
                    4 + 2 * static_cast<int64_t>(rng.next_below(3)),
                    4 + 2 * static_cast<int64_t>(rng.next_below(3))}
      : TensorShape{0, 3 + static_cast<int64_t>(rng.next_below(8))};
  pool.push_back({"x", in_shape});

  auto push_node = [&](Node n, TensorShape out) {
    pool.push_back({n.id, std::move(out)});
    nodes.push_back(std::move(n));
  };

  auto add_bn = [&](const Slot& src) {
    BatchNormOp bn = make_bn(rng, src.shape.channels());
    push_node(Node{fresh("bn"), bn, {src.id}, {}}, src.shape);
    ++bn_count;
  };

  while (static_cast<int64_t>(nodes.size()) < dims.nodes) {
    int pick = static_cast<int>(rng.next_below(100));
    const Slot& src = pool[rng.next_below(pool.size())];
    if (pick < 14) {  // Dense
      if (src.shape.rank() != 2) continue;
      int64_t out = 2 + static_cast<int64_t>(rng.next_below(10));
      push_node(Node{fresh("dense"), make_dense(rng, out, src.shape.channels()), {src.id}, {}},
                TensorShape{0, out});
    } else if (pick < 24) {  // Conv2D
      if (src.shape.rank() != 4) continue;
      int64_t k = 1 + static_cast<int64_t>(rng.next_below(3));
      if (src.shape.dims[2] < k || src.shape.dims[3] < k) continue;
      int64_t out = 2 + static_cast<int64_t>(rng.next_below(6));
      push_node(Node{fresh("conv"), make_conv(rng, out, src.shape.channels(), k, k), {src.id}, {}},
                TensorShape{0, out, src.shape.dims[2] - k + 1, src.shape.dims[3] - k + 1});
    } else if (pick < 44) {  // BatchNorm
      add_bn(src);
    } else if (pick < 58) {  // activations
      NonAffineOp::Kind kind = pick < 50   ? NonAffineOp::Kind::ReLU
                               : pick < 54 ? NonAffineOp::Kind::Sigmoid
                                           : NonAffineOp::Kind::Tanh;
      push_node(Node{fresh("act"), NonAffineOp{kind}, {src.id}, {}}, src.shape);
    } else if (pick < 63) {  // MaxPool2D
      if (src.shape.rank() != 4 || src.shape.dims[2] < 2 || src.shape.dims[3] < 2) continue;
      push_node(Node{fresh("maxpool"), NonAffineOp{NonAffineOp::Kind::MaxPool2D, 2, 2}, {src.id}, {}},
                TensorShape{0, src.shape.dims[1], (src.shape.dims[2] - 2) / 2 + 1,
                            (src.shape.dims[3] - 2) / 2 + 1});
    } else if (pick < 75) {  // Add
      std::vector<const Slot*> mates;
      for (const auto& s : pool)
        if (s.id != src.id && s.shape == src.shape) mates.push_back(&s);
      if (mates.empty()) continue;
      const Slot* mate = mates[rng.next_below(mates.size())];
      push_node(add(fresh("add"), {src.id, mate->id}), src.shape);
    } else if (pick < 84) {  // Concat
      std::vector<const Slot*> mates;
      for (const auto& s : pool) {
        if (s.id == src.id || s.shape.rank() != src.shape.rank()) continue;
        bool ok = true;
        for (int64_t d = 0; d < s.shape.rank(); ++d)
          if (d != 1 && s.shape.dims[d] != src.shape.dims[d]) ok = false;
        if (ok) mates.push_back(&s);
      }
      if (mates.empty()) continue;
      const Slot* mate = mates[rng.next_below(mates.size())];
      TensorShape out = src.shape;
      out.dims[1] += mate->shape.dims[1];
      push_node(Node{fresh("concat"), OtherAffineOp{OtherAffineOp::Kind::Concat}, {src.id, mate->id}, {}},
                out);
    } else if (pick < 89) {  // AvgPool2D
      if (src.shape.rank() != 4 || src.shape.dims[2] < 2 || src.shape.dims[3] < 2) continue;
      push_node(Node{fresh("avgpool"), OtherAffineOp{OtherAffineOp::Kind::AvgPool2D, 2, 2}, {src.id}, {}},
                TensorShape{0, src.shape.dims[1], (src.shape.dims[2] - 2) / 2 + 1,
                            (src.shape.dims[3] - 2) / 2 + 1});
    } else if (pick < 95) {  // Flatten
      if (src.shape.rank() != 4) continue;
      push_node(flatten(fresh("flat"), src.id), TensorShape{0, src.shape.elements_per_sample()});
    } else {  // Identity
      push_node(identity(fresh("id"), src.id), src.shape);
    }
  }

  if (bn_count == 0) add_bn(pool[rng.next_below(pool.size())]);

  // Outputs: every sink. Keep at least one non-activation output so folds
  // stay observable.
  std::set<std::string> consumed;
  for (const auto& n : nodes)
    for (const auto& ref : n.inputs) consumed.insert(ref);
  std::vector<std::string> sinks;
  bool affine_sink = false;
  for (const auto& n : nodes)
    if (!consumed.count(n.id)) {
      sinks.push_back(n.id);
      if (classify_kind(n.kind) != LayerClass::NonAffine) affine_sink = true;
    }
  if (!affine_sink && !sinks.empty()) {
    std::string tail = fresh("id");
    nodes.push_back(identity(tail, sinks[0]));
    sinks[0] = tail;
  }

  GeneratedModel model;
  model.graph = build_graph("randomdag", {{"x", in_shape}}, std::move(nodes), std::move(sinks));
  return model;
}

}  // namespace

GeneratedModel generate(Archetype archetype, const ArchetypeDims& dims, uint64_t weight_seed) {
  switch (archetype) {
    case Archetype::Fig2a: return make_fig2a(dims, weight_seed);
    case Archetype::Fig2b: return make_fig2b(dims, weight_seed);
    case Archetype::Fig2c: return make_fig2c(dims, weight_seed);
    case Archetype::Fig4: return make_fig4(dims, weight_seed);
    case Archetype::Fig5a: return make_fig5a(dims, weight_seed);
    case Archetype::Fig5b: return make_fig5b(dims, weight_seed);
    case Archetype::ResNetToy: return make_resnet_toy(dims, weight_seed);
    case Archetype::RandomDag: return make_random_dag(dims, weight_seed);
  }
  throw InvalidDims("unknown archetype");
}

std::string to_string(Archetype a) {
  switch (a) {
    case Archetype::Fig2a: return "fig2a";
    case Archetype::Fig2b: return "fig2b";
    case Archetype::Fig2c: return "fig2c";
    case Archetype::Fig4: return "fig4";
    case Archetype::Fig5a: return "fig5a";
    case Archetype::Fig5b: return "fig5b";
    case Archetype::ResNetToy: return "resnet";
    case Archetype::RandomDag: return "randomdag";
  }
  return "?";
}

bool archetype_from_string(const std::string& name, Archetype& out) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "fig2a") out = Archetype::Fig2a;
  else if (s == "fig2b") out = Archetype::Fig2b;
  else if (s == "fig2c") out = Archetype::Fig2c;
  else if (s == "fig4") out = Archetype::Fig4;
  else if (s == "fig5a") out = Archetype::Fig5a;
  else if (s == "fig5b") out = Archetype::Fig5b;
  else if (s == "resnet" || s == "resnettoy") out = Archetype::ResNetToy;
  else if (s == "randomdag" || s == "random") out = Archetype::RandomDag;
  else return false;
  return true;
}

}  // namespace bnfold
