#pragma once

// Test-only oracles, written independently of the library's evaluation and
// analysis paths. They must stay free of bnfold/interpreter.hpp internals:
// straight-line arithmetic and plain BFS only.

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bnfold/graph.hpp"

namespace oracles {

/// Plain matrix-vector product, y = W x + b, W row-major [out][in].
inline std::vector<double> dense(const std::vector<double>& w, const std::vector<double>& b,
                                 const std::vector<double>& x) {
  size_t out = b.size(), in = x.size();
  std::vector<double> y(out, 0.0);
  for (size_t o = 0; o < out; ++o) {
    double acc = b[o];
    for (size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

inline double bn_scalar(double x, double gamma, double beta, double mu, double sigma, double eps) {
  return gamma * (x - mu) / (sigma + eps) + beta;
}

inline std::vector<double> bn_vec(const std::vector<double>& x, const bnfold::BatchNormOp& bn) {
  std::vector<double> y(x.size());
  for (size_t c = 0; c < x.size(); ++c)
    y[c] = bn_scalar(x[c], bn.gamma[c], bn.beta[c], bn.mu[c], bn.sigma[c], bn.epsilon);
  return y;
}

inline std::vector<double> relu(std::vector<double> x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
  return x;
}

inline std::vector<double> add(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> y(a.size());
  for (size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

/// Straight-line evaluation of the fig5a case-study graph for one sample
/// row: f(x) = (relu(BN(G2)), relu(W4 G2 + b4)) with
/// G2 = id(G1), G1 = W2(W1 x + b1) + b2  +  W3(W1 x + b1) + b3.
struct Fig5aWeights {
  std::vector<double> w1, b1, w2, b2, w3, b3, w4, b4;
  bnfold::BatchNormOp bn;
};

inline std::pair<std::vector<double>, std::vector<double>>
fig5a_forward(const Fig5aWeights& w, const std::vector<double>& x) {
  std::vector<double> h1 = dense(w.w1, w.b1, x);
  std::vector<double> g1 = add(dense(w.w2, w.b2, h1), dense(w.w3, w.b3, h1));
  const std::vector<double>& g2 = g1;  // the junction node is an identity
  return {relu(bn_vec(g2, w.bn)), relu(dense(w.w4, w.b4, g2))};
}

/// Independent per-node parameter count, written against the data layout
/// rather than op_param_count.
inline int64_t count_params(const bnfold::Graph& g) {
  int64_t total = 0;
  for (const auto& n : g.nodes) {
    if (const auto* d = std::get_if<bnfold::DenseOp>(&n.kind))
      total += static_cast<int64_t>(d->weight.size() + d->bias.size());
    else if (const auto* c = std::get_if<bnfold::Conv2DOp>(&n.kind))
      total += static_cast<int64_t>(c->kernel.size() + c->bias.size());
    else if (const auto* bn = std::get_if<bnfold::BatchNormOp>(&n.kind))
      total += static_cast<int64_t>(bn->gamma.size() + bn->beta.size() + bn->mu.size() +
                                    bn->sigma.size());
  }
  return total;
}

/// Plain BFS reachability over the directed node graph: returns true when a
/// path source ->* target exists.
inline bool reachable(const bnfold::Graph& g, const std::string& source,
                      const std::string& target) {
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto& n : g.nodes)
    for (const auto& ref : n.inputs) succ[ref].push_back(n.id);
  std::set<std::string> seen{source};
  std::deque<std::string> work{source};
  while (!work.empty()) {
    std::string cur = work.front();
    work.pop_front();
    if (cur == target) return true;
    for (const auto& next : succ[cur])
      if (seen.insert(next).second) work.push_back(next);
  }
  return false;
}

}  // namespace oracles
