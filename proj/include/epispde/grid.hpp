#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace epispde {

/// Uniform cell-centered grid on the unit interval: n cells of width
/// h = 1/n with centers x_j = (j + 1/2) h.  Cell centers make the
/// Neumann reflection exact and keep the discrete cosine basis orthogonal.
struct Grid {
  int n = 0;
  double h = 0.0;

  Grid() = default;
  explicit Grid(int cells) {
    if (cells < 2) throw std::invalid_argument("Grid: cell count must be >= 2");
    n = cells;
    h = 1.0 / n;
  }

  double center(int j) const { return (j + 0.5) * h; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Density values on the cells of a Grid (one species or one rate field).
/// A field flagged nonnegative is guaranteed to hold only values >= 0.
class Field {
 public:
  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0)
      : grid_(g), v_(static_cast<std::size_t>(g.n), fill) {}
  Field(const Grid& g, std::vector<double> values) : grid_(g), v_(std::move(values)) {
    if (static_cast<int>(v_.size()) != g.n)
      throw std::invalid_argument("Field: size mismatch with grid");
  }

  const Grid& grid() const { return grid_; }
  int size() const { return static_cast<int>(v_.size()); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double& operator[](int j) { return v_[static_cast<std::size_t>(j)]; }
  double operator[](int j) const { return v_[static_cast<std::size_t>(j)]; }
  const std::vector<double>& values() const { return v_; }

  bool flagged_nonnegative() const { return nonneg_; }

  /// Marks the field as nonnegative after checking the invariant holds.
  Field& flag_nonnegative() {
    for (double x : v_)
      if (!(x >= 0.0))
        throw std::invalid_argument("Field: negative value in field flagged nonnegative");
    nonneg_ = true;
    return *this;
  }

  double min_value() const {
    double m = v_.empty() ? 0.0 : v_[0];
    for (double x : v_) m = x < m ? x : m;
    return m;
  }
  double max_value() const {
    double m = v_.empty() ? 0.0 : v_[0];
    for (double x : v_) m = x > m ? x : m;
    return m;
  }
  double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::fabs(x) > m ? std::fabs(x) : m;
    return m;
  }

  void require_finite(const std::string& what) const {
    for (double x : v_)
      if (!std::isfinite(x)) throw std::invalid_argument(what + ": non-finite value");
  }

 private:
  Grid grid_;
  std::vector<double> v_;
  bool nonneg_ = false;
};

}  // namespace epispde
