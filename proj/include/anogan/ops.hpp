#pragma once

#include <cstddef>

#include "anogan/tape.hpp"
#include "anogan/tensor.hpp"

// Differentiable tensor operations. Every op takes an optional tape; when the
// tape is non-null and tracks at least one input, the op records itself and
// its output becomes tracked too. Shape violations throw std::invalid_argument.
namespace anogan::ops {

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct ConvTransposeParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  // Extra rows/columns on the bottom/right edge, so that a stride-2 layer can
  // exactly double its input (the adjoint of a "same"-padded strided conv).
  std::size_t output_padding = 0;
};

std::size_t conv2d_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding);
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                       std::size_t padding, std::size_t output_padding);

// input [N,Cin,H,W], kernel [Cout,Cin,k,k] -> [N,Cout,H',W']
Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dParams p, Tape* tape = nullptr);

// input [N,Cin,H,W], kernel [Cin,Cout,k,k] -> [N,Cout,H'',W'']
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, ConvTransposeParams p,
                        Tape* tape = nullptr);

// x [N,C,...] plus b[C] broadcast over everything but the channel axis.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias, Tape* tape = nullptr);

// x [N,in], weight [out,in], optional bias [out] (pass an empty tensor to skip).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias, Tape* tape = nullptr);

Tensor reshape(const Tensor& x, Shape shape, Tape* tape = nullptr);

enum class BatchNormMode { train, eval };

// Running statistics owned by the layer. Eval mode refuses to run until
// `initialized` is set, either by construction or by a train-mode update.
struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  bool initialized = false;
  float momentum = 0.9f;
  float epsilon = 1e-5f;

  static BatchNormStats fresh(std::size_t channels);
};

// Per-channel normalization over every axis except 1. Train mode uses batch
// statistics and folds them into `stats` by exponential moving average.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormMode mode,
                 BatchNormStats& stats, Tape* tape = nullptr);

enum class Activation { identity, relu, leaky_relu, tanh };

// y = act(scale[c] * x + shift[c]) in a single pass over x [N,C,...]. scale
// and shift are constants (a tape tracking either is rejected); this is the
// eval-mode form of batchnorm or a bias followed by an activation.
Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift, Activation act,
                      float slope = 0.0f, Tape* tape = nullptr);

// Eval-mode batchnorm as per-channel scale and shift.
void fold_batchnorm(const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats,
                    Tensor& scale, Tensor& shift);

Tensor leaky_relu(const Tensor& x, float slope, Tape* tape = nullptr);
Tensor relu(const Tensor& x, Tape* tape = nullptr);
Tensor tanh(const Tensor& x, Tape* tape = nullptr);
Tensor sigmoid(const Tensor& x, Tape* tape = nullptr);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, float factor, Tape* tape = nullptr);
Tensor abs(const Tensor& a, Tape* tape = nullptr);

// Reductions accumulate in double. sum/mean return a rank-0 tensor.
Tensor sum(const Tensor& a, Tape* tape = nullptr);
Tensor mean(const Tensor& a, Tape* tape = nullptr);
// [N,...] -> [N]
Tensor sum_per_item(const Tensor& a, Tape* tape = nullptr);

// Numerically stable sigmoid cross-entropy of each logit against a constant
// target: max(l,0) - l*t + log(1 + exp(-|l|)). logits [N] or [N,1] -> [N].
Tensor sigmoid_cross_entropy(const Tensor& logits, float target, Tape* tape = nullptr);

}  // namespace anogan::ops
