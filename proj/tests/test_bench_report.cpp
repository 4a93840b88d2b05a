#include <doctest.h>

#include <sstream>
#include <vector>

#include "bnfold/bench_report.hpp"

using namespace bnfold;

namespace {

// minimal RFC-style CSV reader used to round-trip the emitted table
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
    } else if (c == '\n') {
      row.push_back(field);
      field.clear();
      rows.push_back(row);
      row.clear();
    } else {
      field += c;
    }
  }
  return rows;
}

BenchRow sample_row(std::string name) {
  BenchRow r;
  r.model = std::move(name);
  r.naive_speedup_percent = 12.5;
  r.banoff_speedup_percent = 47.8125;
  r.removed_params_percent = 0.3141;
  r.bn_folded_naive = 0;
  r.bn_folded_banoff = 3;
  r.equivalence_pass = true;
  return r;
}

}  // namespace

TEST_CASE("emit_table: markdown has a header, a rule and one line per row") {
  std::string md = emit_table({sample_row("fig2c")}, TableFormat::Markdown);
  std::istringstream in(md);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].find("model") != std::string::npos);
  CHECK(lines[1].find("---") != std::string::npos);
  CHECK(lines[2].find("fig2c") != std::string::npos);
  CHECK(lines[2].find("47.8125") != std::string::npos);
}

TEST_CASE("emit_table: csv round-trips through a standard parser") {
  std::vector<BenchRow> rows{sample_row("fig2a"), sample_row("toy, with comma"),
                             sample_row("\"quoted\"")};
  std::string csv = emit_table(rows, TableFormat::Csv);
  auto parsed = parse_csv(csv);
  REQUIRE(parsed.size() == 4);
  CHECK(parsed[0] == std::vector<std::string>{"model", "naive_speedup_percent",
                                              "banoff_speedup_percent", "removed_params_percent",
                                              "bn_folded_naive", "bn_folded_banoff",
                                              "equivalence_pass"});
  CHECK(parsed[1][0] == "fig2a");
  CHECK(parsed[2][0] == "toy, with comma");
  CHECK(parsed[3][0] == "\"quoted\"");
  CHECK(parsed[1][4] == "0");
  CHECK(parsed[1][5] == "3");
  CHECK(parsed[1][6] == "true");
}

TEST_CASE("emit_table: deterministic output") {
  std::vector<BenchRow> rows{sample_row("a"), sample_row("b")};
  CHECK(emit_table(rows, TableFormat::Csv) == emit_table(rows, TableFormat::Csv));
  CHECK(emit_table(rows, TableFormat::Markdown) == emit_table(rows, TableFormat::Markdown));
}
