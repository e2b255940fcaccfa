#include "edgeyolo/analyzer/analyzer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "edgeyolo/netdef/weights.hpp"

namespace edgeyolo::analyzer {

using netdef::LayerKind;

CostReport analyze(const netdef::Graph& g) {
  CostReport r;
  r.layers.reserve(g.layers.size());
  for (const netdef::LayerSpec& l : g.layers) {
    LayerCost c;
    c.index = l.index;
    c.kind = l.kind;
    c.size = l.size;
    c.stride = l.stride;
    c.filters = l.filters;
    c.in = g.input_shape_of(l.index);
    c.out = l.out;
    const double k2 = static_cast<double>(l.size) * l.size;
    const double hw = static_cast<double>(l.out.h) * l.out.w;
    if (l.kind == LayerKind::Conv) {
      const std::size_t cin = static_cast<std::size_t>(c.in.c);
      const std::size_t cout = static_cast<std::size_t>(l.filters);
      c.params = static_cast<std::size_t>(l.size) * l.size * cin * cout + cout;
      if (l.batch_norm) {
        c.params += 4 * cout;
      }
      c.bflops = 2.0 * k2 * static_cast<double>(cin) * static_cast<double>(cout) * hw / 1e9;
    } else if (l.kind == LayerKind::Max) {
      c.bflops = k2 * l.out.c * hw / 1e9;
    }
    r.total_params += c.params;
    r.total_bflops += c.bflops;
    r.layers.push_back(c);
  }
  r.serialized_bytes = netdef::weights_file_size(g);
  return r;
}

namespace {

std::string shape_str(const Shape& s) {
  return std::to_string(s.w) + " x " + std::to_string(s.h) + " x " + std::to_string(s.c);
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) {
    ++a;
  }
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) {
    --b;
  }
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    out.push_back(trim(cell));
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_text(const CostReport& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%5s  %-8s %-9s %7s  %-18s %-18s %10s %10s\n", "layer",
                "type", "size/str", "filters", "input", "output", "BFLOPS", "params");
  out << buf;
  for (const LayerCost& c : r.layers) {
    std::string win;
    if (c.kind == LayerKind::Conv || c.kind == LayerKind::Max) {
      win = std::to_string(c.size) + "x" + std::to_string(c.size) + "/" +
            std::to_string(c.stride);
    }
    const std::string filters = c.kind == LayerKind::Conv ? std::to_string(c.filters) : "";
    const std::string flops =
        c.kind == LayerKind::Conv || c.kind == LayerKind::Max ? num(c.bflops).substr(0, 8)
                                                               : "";
    std::snprintf(buf, sizeof buf, "%5d  %-8s %-9s %7s  %-18s %-18s %10s %10zu\n", c.index,
                  std::string(netdef::kind_name(c.kind)).c_str(), win.c_str(),
                  filters.c_str(), shape_str(c.in).c_str(), shape_str(c.out).c_str(),
                  flops.c_str(), c.params);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "total: %.4f BFLOPS, %zu parameters, %zu bytes serialized\n",
                r.total_bflops, r.total_params, r.serialized_bytes);
  out << buf;
  return out.str();
}

std::string format_csv(const CostReport& r) {
  std::ostringstream out;
  out << "index,kind,size,stride,filters,out_c,out_h,out_w,bflops,params\n";
  for (const LayerCost& c : r.layers) {
    const bool windowed = c.kind == LayerKind::Conv || c.kind == LayerKind::Max;
    out << c.index << ',' << netdef::kind_name(c.kind) << ',';
    if (windowed) {
      out << c.size << ',' << c.stride;
    } else {
      out << ',';
    }
    out << ',';
    if (c.kind == LayerKind::Conv) {
      out << c.filters;
    }
    out << ',' << c.out.c << ',' << c.out.h << ',' << c.out.w << ',';
    if (windowed) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", c.bflops);
      out << buf;
    }
    out << ',' << c.params << '\n';
  }
  return out.str();
}

GoldenTable parse_golden(std::string_view csv) {
  GoldenTable t;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::map<std::string, std::size_t> col;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("golden line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty()) {
      continue;
    }
    if (s[0] == '#') {
      const std::string body = trim(std::string_view(s).substr(1));
      const std::string tag = "known-discrepancy:";
      if (body.rfind(tag, 0) == 0) {
        std::istringstream ids(body.substr(tag.size()));
        int id;
        while (ids >> id) {
          t.known_discrepancies.insert(id);
        }
      }
      continue;
    }
    const auto cells = split_csv(s);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        col[lower(cells[i])] = i;
      }
      for (const char* need :
           {"index", "kind", "size", "stride", "filters", "out_c", "out_h", "out_w", "bflops"}) {
        if (!col.count(need)) {
          fail(std::string("missing column '") + need + "'");
        }
      }
      continue;
    }
    auto cell = [&](const char* name) -> std::string {
      const std::size_t i = col.at(name);
      return i < cells.size() ? cells[i] : std::string();
    };
    auto opt_int = [&](const char* name) -> std::optional<int> {
      const std::string v = cell(name);
      if (v.empty()) {
        return std::nullopt;
      }
      try {
        return std::stoi(v);
      } catch (const std::exception&) {
        fail(std::string("bad integer in column ") + name + ": '" + v + "'");
      }
      return std::nullopt;
    };
    auto req_int = [&](const char* name) {
      auto v = opt_int(name);
      if (!v) {
        fail(std::string("column ") + name + " must not be empty");
      }
      return *v;
    };
    GoldenRow row;
    row.index = req_int("index");
    row.kind = lower(cell("kind"));
    row.size = opt_int("size");
    row.stride = opt_int("stride");
    row.filters = opt_int("filters");
    row.out_c = req_int("out_c");
    row.out_h = req_int("out_h");
    row.out_w = req_int("out_w");
    if (const std::string v = cell("bflops"); !v.empty()) {
      try {
        row.bflops = std::stod(v);
      } catch (const std::exception&) {
        fail("bad bflops value '" + v + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (col.empty()) {
    throw std::runtime_error("golden table has no header line");
  }
  return t;
}

GoldenTable load_golden(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open golden table " + path.string());
  }
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_golden(ss.str());
}

std::vector<Mismatch> GoldenDiff::unexpected() const {
  std::vector<Mismatch> out;
  for (const Mismatch& m : mismatches) {
    if (!m.known_discrepancy) {
      out.push_back(m);
    }
  }
  return out;
}

GoldenDiff diff_golden(const CostReport& report, const GoldenTable& golden,
                       double bflops_tol) {
  GoldenDiff d;
  if (golden.rows.size() != report.layers.size()) {
    d.row_count_note = "golden has " + std::to_string(golden.rows.size()) +
                       " rows, report has " + std::to_string(report.layers.size());
  }
  for (const GoldenRow& g : golden.rows) {
    const bool known = golden.known_discrepancies.count(g.index) > 0;
    auto add = [&](std::string field, std::string want, std::string got) {
      d.mismatches.push_back({g.index, std::move(field), std::move(want), std::move(got), known});
    };
    if (g.index < 0 || g.index >= static_cast<int>(report.layers.size())) {
      add("index", std::to_string(g.index), "missing");
      continue;
    }
    const LayerCost& c = report.layers[g.index];
    const std::string kind(netdef::kind_name(c.kind));
    if (g.kind != kind) {
      add("kind", g.kind, kind);
      continue;
    }
    auto cmp_int = [&](const char* field, const std::optional<int>& want, int got) {
      if (want && *want != got) {
        add(field, std::to_string(*want), std::to_string(got));
      }
    };
    if (c.kind == LayerKind::Conv || c.kind == LayerKind::Max) {
      cmp_int("size", g.size, c.size);
      cmp_int("stride", g.stride, c.stride);
    }
    if (c.kind == LayerKind::Conv) {
      cmp_int("filters", g.filters, c.filters);
    }
    cmp_int("out_c", g.out_c, c.out.c);
    cmp_int("out_h", g.out_h, c.out.h);
    cmp_int("out_w", g.out_w, c.out.w);
    if (g.bflops && std::abs(*g.bflops - c.bflops) > bflops_tol) {
      add("bflops", num(*g.bflops), num(c.bflops));
    }
  }
  return d;
}

std::string format_diff(const GoldenDiff& d) {
  std::ostringstream out;
  if (d.row_count_note) {
    out << "note: " << *d.row_count_note << '\n';
  }
  for (const Mismatch& m : d.mismatches) {
    out << "layer " << m.index << ' ' << m.field << ": golden " << m.expected
        << ", computed " << m.actual << (m.known_discrepancy ? " (known-discrepancy)" : "")
        << '\n';
  }
  const std::size_t bad = d.unexpected().size();
  out << (bad == 0 ? "golden: OK" : "golden: " + std::to_string(bad) + " mismatch(es)")
      << '\n';
  return out.str();
}

}  // namespace edgeyolo::analyzer
