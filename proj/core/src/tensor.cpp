#include "hecnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hecnn/errors.hpp"

namespace hecnn {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw ValidationError("tensor of shape " + shape_string() + " needs " +
                          std::to_string(element_count(shape_)) + " values, got " +
                          std::to_string(data_.size()));
  }
}

std::string Tensor::shape_string() const {
  std::string out = "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape_[i]);
  }
  return out + ")";
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ValidationError("tensor rank " + std::to_string(shape_.size()) + " indexed with " +
                          std::to_string(index.size()) + " coordinates");
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      throw ValidationError("tensor index out of range on axis " + std::to_string(axis) +
                            " of shape " + shape_string());
    }
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double relative_error(std::span<const double> actual, std::span<const double> expected) {
  if (actual.size() != expected.size()) {
    throw ValidationError("relative_error: size mismatch " + std::to_string(actual.size()) +
                          " vs " + std::to_string(expected.size()));
  }
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    diff = std::max(diff, std::abs(actual[i] - expected[i]));
    scale = std::max(scale, std::abs(expected[i]));
  }
  return diff / std::max(scale, 1e-300);
}

}  // namespace hecnn
