#pragma once

#include "levi/types.hpp"

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace levi {

enum class KernelMethod { frozen, parametrix, fd_oracle, composed };

std::string to_string(KernelMethod m);
KernelMethod kernel_method_from_string(const std::string& s);

/// Samples of a space-time kernel Gamma(t, x, tau, xi): one row per target
/// (t, x), one column per source (tau, xi).
struct KernelGrid {
  std::vector<SpaceTimePoint> targets;
  std::vector<SpaceTimePoint> sources;
  Eigen::MatrixXd values;
  KernelMethod method = KernelMethod::frozen;
  std::string config_digest;

  int dim() const { return targets.empty() ? 0 : targets.front().dim(); }
  double& operator()(std::size_t i, std::size_t j) { return values(i, j); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Batch evaluator: fills a grid for the given targets and sources.
using KernelEvaluator =
    std::function<KernelGrid(const std::vector<SpaceTimePoint>&, const std::vector<SpaceTimePoint>&)>;

/// Sets every entry with t < tau to zero.
void enforce_causality(KernelGrid& grid);

/// Regular points: times x {centre + offsets on a uniform per-axis grid}.
std::vector<SpaceTimePoint> tensor_points(const std::vector<double>& times, const Point& centre,
                                          double half_width, int nodes_per_dim);

std::vector<double> linspace(double a, double b, int n);

/// CSV with header t,x1[,x2,..],tau,xi1[,..],value,method and 17 significant digits.
void write_kernel_csv(std::ostream& out, const KernelGrid& grid);
KernelGrid read_kernel_csv(std::istream& in);
void write_kernel_csv_file(const std::string& path, const KernelGrid& grid);
KernelGrid read_kernel_csv_file(const std::string& path);

/// Key-value sidecar ("key = value" per line).
using KeyValues = std::map<std::string, std::string>;
void write_key_values(std::ostream& out, const KeyValues& kv);
KeyValues read_key_values(std::istream& in);

/// 64-bit FNV-1a of a canonical text, rendered as hex.
std::string digest(const std::string& canonical);

/// Shortest round-trip decimal rendering (17 significant digits).
std::string format_double(double v);

}  // namespace levi
