#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "anogan/evaluation.hpp"
#include "anogan/tape.hpp"
#include "anogan/tensor.hpp"

// Reference implementations written as plainly as possible, used only to
// check the library. Everything here is slow on purpose.
namespace anogan::testing {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f);
// Uniform values with |v| >= gap, for ops with a kink at zero.
Tensor random_away_from_zero(const Shape& shape, std::mt19937_64& rng, float gap);

// Direct loops in double.
std::vector<double> naive_conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
                                 std::size_t padding);
std::vector<double> naive_conv2d_transpose(const Tensor& input, const Tensor& kernel,
                                           std::size_t stride, std::size_t padding,
                                           std::size_t output_padding);

// Mean first, then the biased variance of the centered values.
std::vector<double> two_pass_batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                       double epsilon);

// Textbook Adam on a flat parameter vector: m and v kept in float like the
// library, bias correction spelled out per step.
struct ScriptedAdam {
  double lr, beta1, beta2, epsilon;
  std::vector<float> m, v;
  int t = 0;

  void step(std::vector<float>& params, const std::vector<float>& grads);
};

// Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 P(tie) over all pairs.
double all_pairs_auc(std::span<const ScoredSample> samples);

struct BruteYouden {
  double threshold;
  long long tp, fp;
  double index;
};
// Tries every observed score as a threshold (predict positive iff
// score >= threshold) and keeps the largest tpr - fpr; ties prefer the
// smaller threshold.
BruteYouden brute_force_youden(std::span<const ScoredSample> samples);

// A differentiable function of `inputs`. With a tape it must record, without
// one it is a plain evaluation.
using OutputFn = std::function<Tensor(const std::vector<Tensor>& inputs, Tape* tape)>;

struct GradCheck {
  double worst_relative = 0.0;  // norm-wise, over every checked input
  std::size_t worst_input = 0;
};

// Checks the tape gradient of sum(w * f(inputs)) for fixed random weights w
// against central differences with step h on every element of inputs[i],
// i in `checked`. The numeric side sums in double so that only the output's
// own float rounding enters the difference quotient.
GradCheck check_gradients(const OutputFn& f, std::vector<Tensor> inputs,
                          const std::vector<std::size_t>& checked, double h,
                          std::uint64_t weight_seed = 7);

}  // namespace anogan::testing
