#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace protoncast {

// Row-major matrix views over contiguous storage.
struct MatrixRef {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct MutMatrixRef {
  double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  operator MatrixRef() const { return {data, rows, cols}; }
};

// Dense row-major tensor of 64-bit reals.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  // Rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  MatrixRef view() const { return {data_.data(), rows(), cols()}; }
  MutMatrixRef view() { return {data_.data(), rows(), cols()}; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Named tensors iterated in lexicographic name order. Shapes are fixed at insertion.
class ParameterStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  // Overwrites values; the shape must match the registered one.
  void assign(const std::string& name, const Tensor& value);

  std::size_t count() const { return tensors_.size(); }
  std::size_t total_size() const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  ParameterStore zeros_like() const;
  void set_zero();
  // Throws ShapeMismatch unless `other` has the same names and shapes.
  void require_same_layout(const ParameterStore& other) const;

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  Map tensors_;
};

}  // namespace protoncast
