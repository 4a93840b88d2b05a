#include "bnfold/bench_report.hpp"

#include <sstream>

namespace bnfold {

namespace {

const char* kColumns[] = {"model",
                          "naive_speedup_percent",
                          "banoff_speedup_percent",
                          "removed_params_percent",
                          "bn_folded_naive",
                          "bn_folded_banoff",
                          "equivalence_pass"};

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << v;
  return os.str();
}

std::vector<std::string> row_fields(const BenchRow& r) {
  return {r.model,
          fmt(r.naive_speedup_percent),
          fmt(r.banoff_speedup_percent),
          fmt(r.removed_params_percent),
          std::to_string(r.bn_folded_naive),
          std::to_string(r.bn_folded_banoff),
          r.equivalence_pass ? "true" : "false"};
}

}  // namespace

std::string emit_table(const std::vector<BenchRow>& rows, TableFormat format) {
  std::ostringstream out;
  constexpr size_t n_cols = sizeof(kColumns) / sizeof(kColumns[0]);
  if (format == TableFormat::Csv) {
    for (size_t i = 0; i < n_cols; ++i) out << (i ? "," : "") << kColumns[i];
    out << "\n";
    for (const auto& r : rows) {
      auto fields = row_fields(r);
      for (size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_quote(fields[i]);
      out << "\n";
    }
  } else {
    out << "|";
    for (size_t i = 0; i < n_cols; ++i) out << " " << kColumns[i] << " |";
    out << "\n|";
    for (size_t i = 0; i < n_cols; ++i) out << " --- |";
    out << "\n";
    for (const auto& r : rows) {
      out << "|";
      for (const auto& f : row_fields(r)) out << " " << f << " |";
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace bnfold
