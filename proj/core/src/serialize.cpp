#include "bnfold/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bnfold/errors.hpp"

namespace bnfold {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

Json shape_to_json(const TensorShape& s) { return Json(s.dims); }

Json vec_to_json(const std::vector<double>& v) { return Json(v); }

/// Nested [d0][d1]... rendering of a flat row-major array.
Json nested_to_json(const std::vector<double>& flat, const std::vector<int64_t>& dims,
                    size_t level, size_t& offset) {
  Json arr = Json::array();
  if (level + 1 == dims.size()) {
    for (int64_t i = 0; i < dims[level]; ++i) arr.push_back(flat[offset++]);
    return arr;
  }
  for (int64_t i = 0; i < dims[level]; ++i) arr.push_back(nested_to_json(flat, dims, level + 1, offset));
  return arr;
}

Json nested_to_json(const std::vector<double>& flat, const std::vector<int64_t>& dims) {
  size_t offset = 0;
  return nested_to_json(flat, dims, 0, offset);
}

void flatten_nested(const Json& j, std::vector<double>& out, int depth, const std::string& where) {
  if (depth == 0) {
    if (!j.is_number()) throw ParseError(0, "expected a number in weights of " + where);
    out.push_back(j.get<double>());
    return;
  }
  if (!j.is_array()) throw ParseError(0, "expected a nested array in weights of " + where);
  for (const auto& e : j) flatten_nested(e, out, depth - 1, where);
}

std::vector<double> json_to_vec(const Json& j, const std::string& where) {
  std::vector<double> v;
  flatten_nested(j, v, 1, where);
  return v;
}

Json node_to_json(const Node& n) {
  Json j;
  j["id"] = n.id;
  j["op"] = op_name(n.kind);
  j["inputs"] = n.inputs;
  if (const auto* d = std::get_if<DenseOp>(&n.kind)) {
    j["attrs"] = {{"out_channels", d->out_channels}, {"in_channels", d->in_channels}};
    j["weights"] = {{"W", nested_to_json(d->weight, {d->out_channels, d->in_channels})},
                    {"b", vec_to_json(d->bias)}};
  } else if (const auto* c = std::get_if<Conv2DOp>(&n.kind)) {
    j["attrs"] = {{"out_channels", c->out_channels},
                  {"in_channels", c->in_channels},
                  {"kh", c->kh},
                  {"kw", c->kw}};
    j["weights"] = {{"W", nested_to_json(c->kernel, {c->out_channels, c->in_channels, c->kh, c->kw})},
                    {"b", vec_to_json(c->bias)}};
  } else if (const auto* bn = std::get_if<BatchNormOp>(&n.kind)) {
    j["attrs"] = {{"epsilon", bn->epsilon}};
    j["weights"] = {{"gamma", vec_to_json(bn->gamma)},
                    {"beta", vec_to_json(bn->beta)},
                    {"mu", vec_to_json(bn->mu)},
                    {"sigma", vec_to_json(bn->sigma)}};
  } else if (const auto* p = std::get_if<NonAffineOp>(&n.kind)) {
    if (p->kind == NonAffineOp::Kind::MaxPool2D) j["attrs"] = {{"kh", p->kh}, {"kw", p->kw}};
  } else if (const auto* o = std::get_if<OtherAffineOp>(&n.kind)) {
    if (o->kind == OtherAffineOp::Kind::AvgPool2D) j["attrs"] = {{"kh", o->kh}, {"kw", o->kw}};
  }
  return j;
}

int64_t attr_int(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains("attrs") || !j["attrs"].contains(key))
    throw ParseError(0, "missing attr '" + key + "' at node " + where);
  return j["attrs"][key].get<int64_t>();
}

const Json& weight_field(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains("weights") || !j["weights"].contains(key))
    throw ParseError(0, "missing weight '" + key + "' at node " + where);
  return j["weights"][key];
}

NodeKind kind_from_json(const Json& j, const std::string& id) {
  const std::string op = j.at("op").get<std::string>();
  if (op == "Dense") {
    DenseOp d;
    d.out_channels = attr_int(j, "out_channels", id);
    d.in_channels = attr_int(j, "in_channels", id);
    std::vector<double> w;
    flatten_nested(weight_field(j, "W", id), w, 2, id);
    d.weight = std::move(w);
    d.bias = json_to_vec(weight_field(j, "b", id), id);
    return d;
  }
  if (op == "Conv2D") {
    Conv2DOp c;
    c.out_channels = attr_int(j, "out_channels", id);
    c.in_channels = attr_int(j, "in_channels", id);
    c.kh = attr_int(j, "kh", id);
    c.kw = attr_int(j, "kw", id);
    std::vector<double> w;
    flatten_nested(weight_field(j, "W", id), w, 4, id);
    c.kernel = std::move(w);
    c.bias = json_to_vec(weight_field(j, "b", id), id);
    return c;
  }
  if (op == "BatchNorm") {
    BatchNormOp bn;
    if (j.contains("attrs") && j["attrs"].contains("epsilon"))
      bn.epsilon = j["attrs"]["epsilon"].get<double>();
    bn.gamma = json_to_vec(weight_field(j, "gamma", id), id);
    bn.beta = json_to_vec(weight_field(j, "beta", id), id);
    bn.mu = json_to_vec(weight_field(j, "mu", id), id);
    bn.sigma = json_to_vec(weight_field(j, "sigma", id), id);
    return bn;
  }
  if (op == "ReLU") return NonAffineOp{NonAffineOp::Kind::ReLU};
  if (op == "Sigmoid") return NonAffineOp{NonAffineOp::Kind::Sigmoid};
  if (op == "Tanh") return NonAffineOp{NonAffineOp::Kind::Tanh};
  if (op == "MaxPool2D")
    return NonAffineOp{NonAffineOp::Kind::MaxPool2D, attr_int(j, "kh", id), attr_int(j, "kw", id)};
  if (op == "Add") return OtherAffineOp{OtherAffineOp::Kind::Add};
  if (op == "Concat") return OtherAffineOp{OtherAffineOp::Kind::Concat};
  if (op == "AvgPool2D")
    return OtherAffineOp{OtherAffineOp::Kind::AvgPool2D, attr_int(j, "kh", id), attr_int(j, "kw", id)};
  if (op == "Flatten") return OtherAffineOp{OtherAffineOp::Kind::Flatten};
  if (op == "Identity") return OtherAffineOp{OtherAffineOp::Kind::Identity};
  throw ParseError(0, "unknown op '" + op + "' at node " + id);
}

int line_of_offset(const std::string& text, size_t byte) {
  int line = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace

std::string graph_to_json(const Graph& graph) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["name"] = graph.name;
  j["inputs"] = Json::array();
  for (const auto& [id, shape] : graph.inputs)
    j["inputs"].push_back({{"id", id}, {"shape", shape_to_json(shape)}});
  j["nodes"] = Json::array();
  for (const auto& n : graph.nodes) j["nodes"].push_back(node_to_json(n));
  j["outputs"] = graph.outputs;
  return j.dump(2) + "\n";
}

Graph graph_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_of_offset(text, e.byte), e.what());
  }
  try {
    if (!j.contains("format_version")) throw ParseError(0, "missing format_version");
    int version = j["format_version"].get<int>();
    if (version != kFormatVersion) throw VersionMismatch(version);

    std::vector<std::pair<std::string, TensorShape>> inputs;
    for (const auto& in : j.at("inputs"))
      inputs.emplace_back(in.at("id").get<std::string>(),
                          TensorShape(in.at("shape").get<std::vector<int64_t>>()));
    std::vector<Node> nodes;
    for (const auto& nj : j.at("nodes")) {
      Node n;
      n.id = nj.at("id").get<std::string>();
      n.inputs = nj.at("inputs").get<std::vector<std::string>>();
      n.kind = kind_from_json(nj, n.id);
      nodes.push_back(std::move(n));
    }
    std::vector<std::string> outputs = j.at("outputs").get<std::vector<std::string>>();
    return build_graph(j.value("name", std::string()), std::move(inputs), std::move(nodes),
                       std::move(outputs));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, e.what());
  }
}

void save_graph(const Graph& graph, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << graph_to_json(graph);
  if (!out) throw IoError("failed writing '" + path + "'");
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return graph_from_json(buf.str());
}

std::string equivalence_report_to_json(const EquivalenceReport& report) {
  Json j;
  j["samples"] = report.samples;
  j["max_l1"] = report.max_l1;
  j["max_linf"] = report.max_linf;
  j["tolerance"] = report.tolerance;
  j["seed"] = report.seed;
  j["pass"] = report.pass;
  return j.dump(2) + "\n";
}

std::string fold_report_to_json(const FoldReport& report, const EquivalenceReport& equivalence) {
  Json j;
  j["algorithm"] = to_string(report.algorithm);
  j["folded"] = Json::array();
  for (const auto& [id, dir] : report.folded)
    j["folded"].push_back({{"bn", id}, {"direction", to_string(dir)}});
  j["skipped"] = Json::array();
  for (const auto& [id, reason] : report.skipped)
    j["skipped"].push_back({{"bn", id}, {"reason", to_string(reason)}});
  j["params_before"] = report.params_before;
  j["params_after"] = report.params_after;
  j["removed_percent"] = report.removed_percent;
  j["equivalence"] = Json::parse(equivalence_report_to_json(equivalence));
  return j.dump(2) + "\n";
}

}  // namespace bnfold
