#pragma once

#include <vector>

#include "anogan/gan.hpp"
#include "anogan/mapping.hpp"

namespace anogan::testing {

// The three loss components for one query, evaluated by a separate
// double-precision forward pass of the generator and discriminator written
// with plain loops (eval mode, parameters read by name from model.state()).
struct ReferenceLosses {
  double residual = 0.0;
  double feature_matching = 0.0;
  double reference = 0.0;

  double total(double lambda, DiscriminationLoss variant) const;
};

class ReferenceModel {
 public:
  explicit ReferenceModel(const GanModel& model);

  // x: one query of size*size pixels; z: latent_dim values.
  ReferenceLosses losses(const std::vector<double>& x, const std::vector<double>& z) const;
  std::vector<double> generate(const std::vector<double>& z) const;

 private:
  struct Features {
    std::vector<double> features;
    double logit = 0.0;
  };
  Features discriminate(const std::vector<double>& image) const;
  const std::vector<double>& param(const std::string& name) const;

  GanConfig config_;
  std::size_t feature_layer_;
  std::vector<std::pair<std::string, std::vector<double>>> params_;
};

struct ReferenceGradCheck {
  double relative_error = 0.0;  // norm-wise over the coordinates kept
  std::size_t excluded = 0;     // coordinates with a kink inside the stencil
  std::size_t total = 0;
};

// Central differences of the double-precision losses (step h, in double)
// against the library's mapping_loss_gradient, for each requested
// (variant, lambda). One query, z given as [1, latent_dim].
std::vector<ReferenceGradCheck> mapping_gradient_vs_reference(
    const GanModel& model, const Tensor& x, const Tensor& z,
    const std::vector<std::pair<DiscriminationLoss, double>>& cases, double h);

}  // namespace anogan::testing
