#include "anogan/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace anogan {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : impl_(std::make_shared<Impl>()) {}

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_string(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, std::vector<float>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw std::out_of_range("Tensor::dim: axis " + std::to_string(axis) + " of rank " +
                            std::to_string(impl_->shape.size()));
  }
  return impl_->shape[axis];
}

float Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " + shape_string(impl_->shape) +
                                " is not a scalar");
  }
  return impl_->data[0];
}

std::span<float> Tensor::mutable_grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

}  // namespace anogan
