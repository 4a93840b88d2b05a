#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bnfold/graph.hpp"

namespace bnfold {

/// Numerical comparison of two graphs over sampled inputs. max_l1 is the
/// per-output sum of absolute differences, maximized over samples and
/// outputs; max_linf the matching elementwise maximum.
struct EquivalenceReport {
  int samples = 0;
  double max_l1 = 0.0;
  double max_linf = 0.0;
  double tolerance = 0.0;
  uint64_t seed = 0;
  bool pass = false;
};

/// Median-of-repetitions timing comparison. ratio = (t_old - t_new) / t_old.
struct SpeedupMeasure {
  double t_old_ms = 0.0;
  double t_new_ms = 0.0;
  double ratio = 0.0;
};

struct AuditEntry {
  std::string bn_id;
  bool expected_foldable = false;
  bool actual_foldable = false;
  bool decision_match = false;
  bool equivalence_pass = true;  // only checked for expected-foldable nodes
};

struct AuditReport {
  std::vector<AuditEntry> entries;
  bool all_match = true;
};

inline constexpr uint64_t kDefaultSeed = 42;
inline constexpr double kDefaultTolerance = 1e-9;
inline constexpr int64_t kDefaultBatch = 8;

/// Draws n_samples standard-normal bindings (per-sample derived seeds),
/// evaluates both graphs and reports the maxima. Graph signatures must
/// match: identical inputs, positionally matching output shapes (output ids
/// may differ, folding can rename them). Throws SignatureMismatch.
EquivalenceReport check_equivalence(const Graph& g1, const Graph& g2, int n_samples,
                                    uint64_t seed, double tolerance,
                                    int64_t batch = kDefaultBatch);

/// Compares check_foldable against hand labels; every expected-foldable
/// batch-norm is additionally folded and verified for equivalence.
AuditReport audit_decisions(const Graph& graph, const std::map<std::string, bool>& labels,
                            int n_samples = 100, uint64_t seed = kDefaultSeed,
                            double tolerance = kDefaultTolerance);

/// removed = param_count(before) - param_count(after); percent relative to
/// before (0 when before is empty).
std::pair<int64_t, double> param_stats(const Graph& g_before, const Graph& g_after);

/// Median wall time of eval_graph over `reps` repetitions for each graph on
/// identical bindings, two warm-up runs excluded, strictly serial.
/// Requires reps >= 5.
SpeedupMeasure speedup_ratio(const Graph& g_old, const Graph& g_new, int reps, int64_t batch,
                             uint64_t seed = kDefaultSeed);

}  // namespace bnfold
