#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "edgeyolo/netdef/graph.hpp"

namespace edgeyolo::analyzer {

struct LayerCost {
  int index = 0;
  netdef::LayerKind kind = netdef::LayerKind::Conv;
  int size = 0;
  int stride = 0;
  int filters = 0;
  Shape in;
  Shape out;
  std::size_t params = 0;
  /// Billions of floating-point operations for one image.
  double bflops = 0.0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::size_t total_params = 0;
  double total_bflops = 0.0;
  /// Byte length of the weights file for this graph.
  std::size_t serialized_bytes = 0;
};

/// conv: 2*K^2*Cin*Cout*Ho*Wo, max: K^2*C*Ho*Wo, everything else free.
/// Conv params: K^2*Cin*Cout + Cout, plus 4*Cout with batch norm.
CostReport analyze(const netdef::Graph& g);

std::string format_text(const CostReport& r);
/// Columns index,kind,size,stride,filters,out_c,out_h,out_w,bflops,params.
std::string format_csv(const CostReport& r);

struct GoldenRow {
  int index = 0;
  std::string kind;
  std::optional<int> size;
  std::optional<int> stride;
  std::optional<int> filters;
  int out_c = 0;
  int out_h = 0;
  int out_w = 0;
  std::optional<double> bflops;
};

/// Golden CSV: header line with the columns of format_csv (params optional,
/// extra columns ignored), empty cells for n/a values, '#' comment lines. A
/// comment of the form "# known-discrepancy: 25 32" marks rows whose
/// mismatches are expected.
struct GoldenTable {
  std::vector<GoldenRow> rows;
  std::set<int> known_discrepancies;
};

GoldenTable parse_golden(std::string_view csv);
GoldenTable load_golden(const std::filesystem::path& path);

inline constexpr double kBflopsTolerance = 0.0005;

struct Mismatch {
  int index = 0;
  std::string field;
  std::string expected;
  std::string actual;
  bool known_discrepancy = false;
};

struct GoldenDiff {
  std::vector<Mismatch> mismatches;
  /// Set when the golden and the report have different row counts; rows
  /// are matched by layer index and missing rows are not mismatches.
  std::optional<std::string> row_count_note;

  std::vector<Mismatch> unexpected() const;
  bool ok() const { return unexpected().empty(); }
};

GoldenDiff diff_golden(const CostReport& report, const GoldenTable& golden,
                       double bflops_tol = kBflopsTolerance);

std::string format_diff(const GoldenDiff& d);

}  // namespace edgeyolo::analyzer
