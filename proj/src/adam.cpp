#include "anogan/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace anogan {

AdamState::AdamState(const std::vector<Tensor>& params, AdamOptions options) : options_(options) {
  for (const auto& p : params) {
    shapes_.push_back(p.shape());
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

void AdamState::step(std::vector<Tensor>& params, const std::vector<std::vector<float>>& grads) {
  if (params.size() != shapes_.size() || grads.size() != shapes_.size()) {
    throw std::invalid_argument("AdamState::step: expected " + std::to_string(shapes_.size()) +
                                " parameters and gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != shapes_[i] ||
        (!grads[i].empty() && grads[i].size() != params[i].numel())) {
      throw std::invalid_argument("AdamState::step: shape mismatch for parameter " +
                                  std::to_string(i) + " " + shape_string(params[i].shape()));
    }
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto& m = m_[i];
    auto& v = v_[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = options_.learning_rate * (mk / c1) / (std::sqrt(vk / c2) + options_.epsilon);
      p[k] = static_cast<float>(static_cast<double>(p[k]) - update);
    }
  }
}

void AdamState::step(std::vector<Tensor>& params) {
  std::vector<std::vector<float>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.emplace_back(p.grad().begin(), p.grad().end());
  step(params, grads);
}

}  // namespace anogan
