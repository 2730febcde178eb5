#include "protoncast/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "protoncast/error.hpp"

namespace protoncast {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_))
    throw Error(ErrorCode::ShapeMismatch, "tensor of shape " + shape_string(shape_) + " given " +
                                              std::to_string(data_.size()) + " values");
}

std::size_t Tensor::rows() const {
  if (shape_.size() < 2) return 1;
  return data_.size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void ParameterStore::add(const std::string& name, Tensor value) {
  if (!tensors_.emplace(name, std::move(value)).second)
    throw Error(ErrorCode::InvalidArgument, "duplicate parameter " + name);
}

const Tensor& ParameterStore::at(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::ShapeMismatch, "missing parameter " + name);
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::ShapeMismatch, "missing parameter " + name);
  return it->second;
}

void ParameterStore::assign(const std::string& name, const Tensor& value) {
  Tensor& target = at(name);
  if (target.shape() != value.shape())
    throw Error(ErrorCode::ShapeMismatch, name + ": expected " + shape_string(target.shape()) + ", got " +
                                              shape_string(value.shape()));
  target = value;
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore out;
  for (const auto& [name, t] : tensors_) out.add(name, Tensor(t.shape()));
  return out;
}

void ParameterStore::set_zero() {
  for (auto& [name, t] : tensors_) t.fill(0.0);
}

void ParameterStore::require_same_layout(const ParameterStore& other) const {
  if (other.count() != count())
    throw Error(ErrorCode::ShapeMismatch, "parameter stores hold " + std::to_string(count()) + " and " +
                                              std::to_string(other.count()) + " tensors");
  auto a = tensors_.begin();
  auto b = other.tensors_.begin();
  for (; a != tensors_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape())
      throw Error(ErrorCode::ShapeMismatch, "layout differs at " + a->first + " vs " + b->first);
  }
}

}  // namespace protoncast
