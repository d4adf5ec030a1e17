#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace anogan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense float32 array, row-major, NCHW for images.
//
// A Tensor is a shared handle: copies refer to the same buffer, which is what
// lets a Tape accumulate gradients into parameters owned elsewhere. Use
// clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float value);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }
  bool empty() const { return impl_->data.empty(); }

  std::span<float> data() { return impl_->data; }
  std::span<const float> data() const { return impl_->data; }
  float* ptr() { return impl_->data.data(); }
  const float* ptr() const { return impl_->data.data(); }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Empty span when no gradient has been materialized.
  std::span<const float> grad() const { return impl_->grad; }
  // Materializes a zero gradient on first use. Gradients belong to the
  // shared storage, so a const handle may still accumulate into them.
  std::span<float> mutable_grad() const;
  void zero_grad() const;
  void clear_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Impl> impl_;
};

}  // namespace anogan
