#include "levi/kernel_grid.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace levi {

std::string to_string(KernelMethod m) {
  switch (m) {
    case KernelMethod::frozen: return "frozen";
    case KernelMethod::parametrix: return "parametrix";
    case KernelMethod::fd_oracle: return "fd_oracle";
    case KernelMethod::composed: return "composed";
  }
  return "unknown";
}

KernelMethod kernel_method_from_string(const std::string& s) {
  if (s == "frozen") return KernelMethod::frozen;
  if (s == "parametrix") return KernelMethod::parametrix;
  if (s == "fd_oracle") return KernelMethod::fd_oracle;
  if (s == "composed") return KernelMethod::composed;
  throw ConfigError("unknown kernel method '" + s + "'");
}

void enforce_causality(KernelGrid& grid) {
  for (std::size_t i = 0; i < grid.targets.size(); ++i)
    for (std::size_t j = 0; j < grid.sources.size(); ++j)
      if (grid.targets[i].t < grid.sources[j].t) grid.values(i, j) = 0.0;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

std::vector<SpaceTimePoint> tensor_points(const std::vector<double>& times, const Point& centre,
                                          double half_width, int nodes_per_dim) {
  const int d = static_cast<int>(centre.size());
  const auto axis = linspace(-half_width, half_width, nodes_per_dim);
  std::size_t per_time = 1;
  for (int k = 0; k < d; ++k) per_time *= axis.size();
  std::vector<SpaceTimePoint> pts;
  for (double t : times)
    for (std::size_t flat = 0; flat < per_time; ++flat) {
      std::size_t rem = flat;
      Point x = centre;
      for (int k = d - 1; k >= 0; --k) {
        x(k) += axis[rem % axis.size()];
        rem /= axis.size();
      }
      pts.push_back({t, x});
    }
  return pts;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_kernel_csv(std::ostream& out, const KernelGrid& grid) {
  const int d = grid.dim();
  out << "t";
  for (int k = 1; k <= d; ++k) out << ",x" << k;
  out << ",tau";
  for (int k = 1; k <= d; ++k) out << ",xi" << k;
  out << ",value,method\n";
  const std::string method = to_string(grid.method);
  for (std::size_t i = 0; i < grid.targets.size(); ++i)
    for (std::size_t j = 0; j < grid.sources.size(); ++j) {
      const auto& T = grid.targets[i];
      const auto& S = grid.sources[j];
      out << format_double(T.t);
      for (int k = 0; k < d; ++k) out << ',' << format_double(T.x(k));
      out << ',' << format_double(S.t);
      for (int k = 0; k < d; ++k) out << ',' << format_double(S.x(k));
      out << ',' << format_double(grid.values(i, j)) << ',' << method << '\n';
    }
}

namespace {

struct PointKey {
  std::vector<double> c;
  bool operator<(const PointKey& o) const { return c < o.c; }
};

PointKey key_of(const SpaceTimePoint& p) {
  PointKey k;
  k.c.push_back(p.t);
  for (int i = 0; i < p.x.size(); ++i) k.c.push_back(p.x(i));
  return k;
}

}  // namespace

KernelGrid read_kernel_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("kernel CSV: empty input");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      header.push_back(cell);
    }
  }
  if (header.size() < 6 || (header.size() - 4) % 2 != 0 || header.front() != "t" ||
      header[header.size() - 2] != "value" || header.back() != "method")
    throw IoError("kernel CSV: malformed header");
  const int d = static_cast<int>((header.size() - 4) / 2);

  KernelGrid grid;
  std::map<PointKey, std::size_t> target_index;
  std::map<PointKey, std::size_t> source_index;
  struct Entry {
    std::size_t i, j;
    double v;
  };
  std::vector<Entry> entries;
  bool method_set = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw IoError("kernel CSV: ragged row");
    SpaceTimePoint T, S;
    T.x.resize(d);
    S.x.resize(d);
    T.t = std::stod(cells[0]);
    for (int k = 0; k < d; ++k) T.x(k) = std::stod(cells[1 + k]);
    S.t = std::stod(cells[1 + d]);
    for (int k = 0; k < d; ++k) S.x(k) = std::stod(cells[2 + d + k]);
    const double v = std::stod(cells[2 + 2 * d]);
    std::string method = cells[3 + 2 * d];
    if (!method.empty() && method.back() == '\r') method.pop_back();
    if (!method_set) {
      grid.method = kernel_method_from_string(method);
      method_set = true;
    }
    auto ti = target_index.try_emplace(key_of(T), grid.targets.size());
    if (ti.second) grid.targets.push_back(T);
    auto si = source_index.try_emplace(key_of(S), grid.sources.size());
    if (si.second) grid.sources.push_back(S);
    entries.push_back({ti.first->second, si.first->second, v});
  }
  grid.values = Eigen::MatrixXd::Zero(grid.targets.size(), grid.sources.size());
  for (const auto& e : entries) grid.values(e.i, e.j) = e.v;
  return grid;
}

void write_kernel_csv_file(const std::string& path, const KernelGrid& grid) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_kernel_csv(out, grid);
}

KernelGrid read_kernel_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_kernel_csv(in);
}

void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

KeyValues read_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

std::string digest(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace levi
