#include "diffddp/types.hpp"

#include <fmt/format.h>

namespace diffddp {

ParamVector::ParamVector(std::vector<std::string> names, VectorXd values,
                         std::vector<Interval> bounds)
    : names_(std::move(names)), values_(std::move(values)), bounds_(std::move(bounds)) {
  if (names_.size() != static_cast<std::size_t>(values_.size()) ||
      bounds_.size() != names_.size()) {
    throw DimensionError(fmt::format("ParamVector: {} names, {} values, {} bounds",
                                     names_.size(), values_.size(), bounds_.size()));
  }
  for (int i = 0; i < size(); ++i) {
    if (!bounds_[i].contains(values_[i])) {
      throw PreconditionError(fmt::format("ParamVector: {} = {} outside [{}, {}]", names_[i],
                                          values_[i], bounds_[i].lower, bounds_[i].upper));
    }
  }
}

int ParamVector::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  throw PreconditionError(fmt::format("ParamVector: no component named '{}'", name));
}

ParamVector ParamVector::with_values(const VectorXd& values) const {
  return ParamVector(names_, values, bounds_);
}

ParamVector ParamVector::with_value(std::string_view name, double value) const {
  VectorXd v = values_;
  v[index_of(name)] = value;
  return with_values(v);
}

ParamVector ParamVector::clamped(const VectorXd& values) const {
  if (values.size() != values_.size()) {
    throw DimensionError(
        fmt::format("ParamVector::clamped: expected {} values, got {}", size(), values.size()));
  }
  VectorXd v(values.size());
  for (int i = 0; i < size(); ++i) v[i] = bounds_[i].clamp(values[i]);
  return ParamVector(names_, v, bounds_);
}

void Trajectory::check_invariants() const {
  if (states.size() != controls.size() + 1) {
    throw PreconditionError(fmt::format("Trajectory: {} states but {} controls", states.size(),
                                        controls.size()));
  }
  if (!(dt > 0.0)) throw PreconditionError(fmt::format("Trajectory: dt = {} must be > 0", dt));
}

Tensor3::Tensor3(int d_out, int d_a, int d_b)
    : d_out_(d_out),
      d_a_(d_a),
      d_b_(d_b),
      data_(static_cast<std::size_t>(d_out) * d_a * d_b, 0.0) {
  if (d_out < 0 || d_a < 0 || d_b < 0) {
    throw DimensionError(fmt::format("Tensor3: negative dims ({}, {}, {})", d_out, d_a, d_b));
  }
}

MatrixXd Tensor3::column_slice(int b) const {
  MatrixXd m(d_out_, d_a_);
  for (int o = 0; o < d_out_; ++o)
    for (int a = 0; a < d_a_; ++a) m(o, a) = (*this)(o, a, b);
  return m;
}

MatrixXd tensor_contract_left(const VectorXd& v, const Tensor3& t) {
  if (v.size() != t.dim_out()) {
    throw DimensionError(fmt::format("tensor_contract_left: vector has {} entries, tensor is {}x{}x{}",
                                     v.size(), t.dim_out(), t.dim_a(), t.dim_b()));
  }
  MatrixXd out = MatrixXd::Zero(t.dim_a(), t.dim_b());
  for (int o = 0; o < t.dim_out(); ++o) {
    if (v[o] != 0.0) out.noalias() += v[o] * t.slice(o);
  }
  return out;
}

}  // namespace diffddp
