#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "anogan/gan.hpp"
#include "anogan/tensor.hpp"

namespace anogan {

enum class DiscriminationLoss { feature_matching, reference };
enum class StepRule { adam, gradient_descent };

std::string to_string(DiscriminationLoss v);
DiscriminationLoss parse_discrimination_loss(const std::string& s);
std::string to_string(StepRule v);
StepRule parse_step_rule(const std::string& s);

struct MappingConfig {
  int iterations = 500;
  double lambda = 0.1;
  StepRule step_rule = StepRule::adam;
  double step_size = 0.01;
  DiscriminationLoss loss_variant = DiscriminationLoss::feature_matching;
  bool clip_to_prior = true;
  // Best-of-R restarts from independent starting points; 1 means a single z_1.
  int restarts = 1;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_text() const;
  static MappingConfig from_text(const std::string& text, const MappingConfig& base);
  static MappingConfig from_text(const std::string& text) { return from_text(text, MappingConfig{}); }
};

struct MappingResult {
  std::vector<float> z_final;
  Tensor generated;       // G(z_final), [1,1,s,s]
  Tensor residual_image;  // |x - G(z_final)|
  double residual_loss_final = 0.0;
  double discrimination_loss_final = 0.0;
  // Weighted total at each evaluated point z_1..z_Gamma; the last entry is
  // the loss of z_final.
  std::vector<double> loss_trajectory;
  DiscriminationLoss variant = DiscriminationLoss::feature_matching;
  double lambda = 0.1;
};

// Raised when the mapping loss becomes non-finite. Carries the per-query
// trajectories recorded up to that point.
class MappingDiverged : public std::runtime_error {
 public:
  MappingDiverged(const std::string& what, std::vector<std::vector<double>> partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const std::vector<std::vector<double>>& partial_trajectories() const { return partial_; }

 private:
  std::vector<std::vector<double>> partial_;
};

// Sum of |x - g| over all elements.
double residual_loss(const Tensor& x, const Tensor& g);

// Sum of |f(x) - f(g)| over the feature-layer activations, one value per
// image in the batch.
std::vector<double> discrimination_loss_fm(const GanModel& model, const Tensor& x,
                                           const Tensor& g);
// Sigmoid cross-entropy of each D(g) against the "real" target, i.e.
// -log sigmoid(D(g)).
std::vector<double> discrimination_loss_ref(const GanModel& model, const Tensor& g);
double reference_loss_from_logit(double logit);

// (1 - lambda) * residual + lambda * discrimination.
double combine_losses(double residual, double discrimination, double lambda);

// Full mapping loss at latent point(s) z for queries x, per query.
std::vector<double> mapping_loss(const GanModel& model, const Tensor& x, const Tensor& z,
                                 double lambda, DiscriminationLoss variant);

// Gradient of the summed mapping loss with respect to z ([N,latent_dim]),
// model parameters held fixed. Exposed for gradient checks.
std::vector<float> mapping_loss_gradient(const GanModel& model, const Tensor& x, const Tensor& z,
                                         double lambda, DiscriminationLoss variant);

// Iterative inversion of a single query [1,1,s,s] or [1,s,s] / [s,s].
MappingResult invert(const GanModel& model, const Tensor& x, const MappingConfig& config,
                     std::uint64_t query_index = 0);

// Inverts queries [N,1,s,s] jointly; each query is optimized independently
// (losses are per query, the optimizer is elementwise). Query i draws its
// starting point from a stream keyed by (config.seed, first_index + i), so a
// query's result does not depend on which other queries share the batch
// beyond floating-point summation order.
std::vector<MappingResult> invert_batch(const GanModel& model, const Tensor& queries,
                                        const MappingConfig& config,
                                        std::uint64_t first_index = 0);

}  // namespace anogan
