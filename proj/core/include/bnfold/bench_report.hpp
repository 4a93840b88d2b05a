#pragma once

#include <string>
#include <vector>

namespace bnfold {

/// One comparison row of the benchmark table. Timing columns are desk-scale
/// and interpreter-relative; they are not comparable across machines.
struct BenchRow {
  std::string model;
  double naive_speedup_percent = 0.0;
  double banoff_speedup_percent = 0.0;
  double removed_params_percent = 0.0;
  int bn_folded_naive = 0;
  int bn_folded_banoff = 0;
  bool equivalence_pass = false;
};

enum class TableFormat { Csv, Markdown };

/// Renders rows with the fixed column order
///   model, naive_speedup_percent, banoff_speedup_percent,
///   removed_params_percent, bn_folded_naive, bn_folded_banoff,
///   equivalence_pass
/// CSV uses RFC-style quoting; markdown emits a pipe table.
std::string emit_table(const std::vector<BenchRow>& rows, TableFormat format);

}  // namespace bnfold
