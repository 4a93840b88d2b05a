#include "bnfold/equivalence.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "bnfold/errors.hpp"
#include "bnfold/fold_transform.hpp"
#include "bnfold/interpreter.hpp"
#include "bnfold/rng.hpp"

namespace bnfold {

namespace {

void check_signatures(const Graph& g1, const Graph& g2) {
  if (g1.inputs != g2.inputs)
    throw SignatureMismatch("input signatures differ between '" + g1.name + "' and '" + g2.name + "'");
  if (g1.outputs.size() != g2.outputs.size())
    throw SignatureMismatch("output counts differ");
  // Output ids may be renamed by folding; shapes must line up positionally.
  for (size_t i = 0; i < g1.outputs.size(); ++i) {
    auto shape_of = [](const Graph& g, const std::string& id) {
      if (const Node* n = g.find(id)) return n->out_shape;
      for (const auto& [iid, shape] : g.inputs)
        if (iid == id) return shape;
      throw SignatureMismatch("dangling output id '" + id + "'");
    };
    if (shape_of(g1, g1.outputs[i]) != shape_of(g2, g2.outputs[i]))
      throw SignatureMismatch("output " + std::to_string(i) + " shapes differ");
  }
}

}  // namespace

EquivalenceReport check_equivalence(const Graph& g1, const Graph& g2, int n_samples,
                                    uint64_t seed, double tolerance, int64_t batch) {
  check_signatures(g1, g2);

  EquivalenceReport report;
  report.samples = n_samples;
  report.seed = seed;
  report.tolerance = tolerance;

  for (int s = 0; s < n_samples; ++s) {
    uint64_t sample_seed = Rng::derive(seed, static_cast<uint64_t>(s));
    InputBinding bindings = random_binding(g1, batch, sample_seed);
    auto out1 = eval_graph(g1, bindings);
    auto out2 = eval_graph(g2, bindings);
    for (size_t i = 0; i < g1.outputs.size(); ++i) {
      const TensorValue& a = out1.at(g1.outputs[i]);
      const TensorValue& b = out2.at(g2.outputs[i]);
      double l1 = 0.0, linf = 0.0;
      for (size_t k = 0; k < a.data.size(); ++k) {
        double d = std::abs(a.data[k] - b.data[k]);
        l1 += d;
        linf = std::max(linf, d);
      }
      report.max_l1 = std::max(report.max_l1, l1);
      report.max_linf = std::max(report.max_linf, linf);
    }
  }
  report.pass = report.max_l1 <= tolerance;
  return report;
}

AuditReport audit_decisions(const Graph& graph, const std::map<std::string, bool>& labels,
                            int n_samples, uint64_t seed, double tolerance) {
  AuditReport report;
  for (const auto& [bn_id, expected] : labels) {
    AuditEntry entry;
    entry.bn_id = bn_id;
    entry.expected_foldable = expected;
    FoldDecision decision = check_foldable(graph, bn_id);
    entry.actual_foldable = decision.foldable;
    entry.decision_match = decision.foldable == expected;
    if (expected && decision.foldable) {
      FoldPlan plan = plan_fold(graph, bn_id, decision);
      Graph folded = apply_fold(graph, plan);
      entry.equivalence_pass =
          check_equivalence(graph, folded, n_samples, seed, tolerance).pass;
    }
    report.all_match = report.all_match && entry.decision_match && entry.equivalence_pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::pair<int64_t, double> param_stats(const Graph& g_before, const Graph& g_after) {
  int64_t before = param_count(g_before);
  int64_t removed = before - param_count(g_after);
  double percent = before == 0 ? 0.0 : 100.0 * static_cast<double>(removed) / static_cast<double>(before);
  return {removed, percent};
}

SpeedupMeasure speedup_ratio(const Graph& g_old, const Graph& g_new, int reps, int64_t batch,
                             uint64_t seed) {
  if (reps < 5) throw Error("speedup_ratio needs at least 5 repetitions");
  InputBinding bindings = random_binding(g_old, batch, seed);

  auto median_ms = [&](const Graph& g) {
    eval_graph(g, bindings);  // two warm-up runs, excluded from the stats
    eval_graph(g, bindings);
    std::vector<double> times;
    times.reserve(reps);
    for (int r = 0; r < reps; ++r) {
      auto start = std::chrono::steady_clock::now();
      auto out = eval_graph(g, bindings);
      auto stop = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    std::sort(times.begin(), times.end());
    size_t mid = times.size() / 2;
    return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  };

  SpeedupMeasure m;
  m.t_old_ms = median_ms(g_old);
  m.t_new_ms = median_ms(g_new);
  m.ratio = m.t_old_ms > 0.0 ? (m.t_old_ms - m.t_new_ms) / m.t_old_ms : 0.0;
  return m;
}

}  // namespace bnfold
