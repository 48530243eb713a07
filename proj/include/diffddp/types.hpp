#pragma once

#include <Eigen/Dense>

#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diffddp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when operands of an operation have incompatible shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an argument violates a documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Closed interval; either end may be infinite.
struct Interval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v >= lower && v <= upper; }
  double clamp(double v) const { return v < lower ? lower : (v > upper ? upper : v); }

  bool operator==(const Interval&) const = default;
};

/// Named hyper-parameter vector with per-component bounds.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<std::string> names, VectorXd values,
              std::vector<Interval> bounds);

  int size() const { return static_cast<int>(values_.size()); }
  const VectorXd& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Interval>& bounds() const { return bounds_; }
  double operator[](int i) const { return values_[i]; }

  /// Index of the component called `name`; throws if absent.
  int index_of(std::string_view name) const;
  double value(std::string_view name) const { return values_[index_of(name)]; }

  /// Same names and bounds, new values. Throws if any value is out of bounds.
  ParamVector with_values(const VectorXd& values) const;
  ParamVector with_value(std::string_view name, double value) const;
  /// Same names and bounds, values projected onto the bounds.
  ParamVector clamped(const VectorXd& values) const;

 private:
  std::vector<std::string> names_;
  VectorXd values_;
  std::vector<Interval> bounds_;
};

/// States x_0..x_{T-1} and controls u_0..u_{T-2}.
struct Trajectory {
  std::vector<VectorXd> states;
  std::vector<VectorXd> controls;
  double dt = 0.0;

  int horizon() const { return static_cast<int>(states.size()); }
  const VectorXd& x1() const { return states.front(); }

  /// Throws PreconditionError if the length or dt invariants fail.
  void check_invariants() const;
};

/// Dense rank-3 array indexed (out, a, b), row-major.
class Tensor3 {
 public:
  using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor3() = default;
  Tensor3(int d_out, int d_a, int d_b);

  int dim_out() const { return d_out_; }
  int dim_a() const { return d_a_; }
  int dim_b() const { return d_b_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int o, int a, int b) { return data_[index(o, a, b)]; }
  double operator()(int o, int a, int b) const { return data_[index(o, a, b)]; }

  Eigen::Map<RowMajorMatrix> slice(int o) {
    return {data_.data() + static_cast<std::size_t>(o) * d_a_ * d_b_, d_a_, d_b_};
  }
  Eigen::Map<const RowMajorMatrix> slice(int o) const {
    return {data_.data() + static_cast<std::size_t>(o) * d_a_ * d_b_, d_a_, d_b_};
  }

  std::span<const double> data() const { return data_; }
  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  /// Fixes the last index: result[o][a] = t[o][a][b].
  MatrixXd column_slice(int b) const;

 private:
  std::size_t index(int o, int a, int b) const {
    return (static_cast<std::size_t>(o) * d_a_ + a) * d_b_ + b;
  }

  int d_out_ = 0;
  int d_a_ = 0;
  int d_b_ = 0;
  std::vector<double> data_;
};

/// result[a][b] = sum_o v[o] * t[o][a][b].
MatrixXd tensor_contract_left(const VectorXd& v, const Tensor3& t);

}  // namespace diffddp
