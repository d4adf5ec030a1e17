#pragma once

#include <cstdint>
#include <vector>

#include "anogan/tensor.hpp"

namespace anogan {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. Moment buffers are allocated per parameter on
// construction and must keep matching the parameter shapes.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const std::vector<Tensor>& params, AdamOptions options);

  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }

  // Updates `params` in place from `grads` (same order and shapes as at
  // construction). A parameter with an empty gradient is treated as having
  // a zero gradient.
  void step(std::vector<Tensor>& params, const std::vector<std::vector<float>>& grads);

  // Convenience: uses each parameter's own materialized gradient.
  void step(std::vector<Tensor>& params);

 private:
  AdamOptions options_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t step_ = 0;
};

}  // namespace anogan
