#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vortex/lbfgs.hpp"
#include "vortex/model.hpp"

namespace vortex {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::filesystem::path meta_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".meta.json");
  return p;
}

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw error(errc::io, "cannot open " + path.string() + " for writing");
  return os;
}
}  // namespace detail

// CSV "x,y,value", row-major nodes, 17 significant digits; companion
// <name>.meta.json with R, n, spacing and the parameter hash.
inline void export_field(const ScalarField& f, const std::filesystem::path& path, const std::string& param_hash = "") {
  const Grid& g = f.grid;
  {
    auto os = detail::open_out(path);
    std::string line;
    os << "x,y,value\n";
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) {
        line = format_double(g.coord(i));
        line += ',';
        line += format_double(g.coord(j));
        line += ',';
        line += format_double(f(i, j));
        line += '\n';
        os << line;
      }
    if (!os) throw error(errc::io, "write failed for " + path.string());
  }
  auto ms = detail::open_out(meta_path(path));
  ms << "{\n  \"R\": " << format_double(g.R()) << ",\n  \"n\": " << g.n()
     << ",\n  \"spacing\": " << format_double(g.spacing()) << ",\n  \"param_hash\": \"" << param_hash << "\"\n}\n";
  if (!ms) throw error(errc::io, "write failed for " + meta_path(path).string());
}

inline ScalarField import_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw error(errc::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "x,y,value") throw error(errc::parse, path.string() + ": bad CSV header");
  std::vector<double> xs, ys, vs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const char* s = line.c_str();
    char* end = nullptr;
    double v[3];
    for (int c = 0; c < 3; ++c) {
      v[c] = std::strtod(s, &end);
      if (end == s) throw error(errc::parse, path.string() + ": malformed row '" + line + "'");
      s = end;
      if (c < 2) {
        if (*s != ',') throw error(errc::parse, path.string() + ": malformed row '" + line + "'");
        ++s;
      }
    }
    xs.push_back(v[0]);
    ys.push_back(v[1]);
    vs.push_back(v[2]);
  }
  const auto N = vs.size();
  const int n = static_cast<int>(std::llround(std::sqrt(static_cast<double>(N))));
  if (static_cast<std::size_t>(n) * n != N || n < 3) throw error(errc::parse, path.string() + ": not a square grid");
  const Grid g(-xs.front(), n);
  ScalarField f(g);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      if (xs[k] != g.coord(i) || ys[k] != g.coord(j))
        throw error(errc::parse, path.string() + ": node coordinates do not match a uniform grid");
      f.values[k] = vs[k];
    }
  return f;
}

// Values along x2 = 0, x1 >= 0 with columns r,<names...>.
inline void export_ray(const std::vector<const ScalarField*>& fields, const std::vector<std::string>& names,
                       const std::filesystem::path& path) {
  if (fields.empty() || fields.size() != names.size()) throw error(errc::invalid_argument, "ray export needs named fields");
  const Grid& g = fields.front()->grid;
  const int c = (g.n() - 1) / 2;
  auto os = detail::open_out(path);
  os << "r";
  for (const auto& nm : names) os << ',' << nm;
  os << '\n';
  for (int i = c; i < g.n(); ++i) {
    os << format_double(g.coord(i));
    for (const auto* f : fields) os << ',' << format_double((*f)(i, c));
    os << '\n';
  }
  if (!os) throw error(errc::io, "write failed for " + path.string());
}

inline void export_trace(const std::vector<TraceEntry>& trace, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  os << "iter,I_or_E,grad_norm\n";
  for (const auto& t : trace) os << t.iter << ',' << format_double(t.value) << ',' << format_double(t.grad_norm) << '\n';
  if (!os) throw error(errc::io, "write failed for " + path.string());
}

}  // namespace vortex
