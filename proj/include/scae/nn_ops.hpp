#pragma once

#include <vector>

#include "scae/tensor.hpp"

namespace scae {

// Spatial output extent of a strided cross-correlation: floor((in + 2*pad - k) / stride) + 1.
// Throws ContractError when the result would be < 1.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
// Spatial output extent of the transposed map: (in - 1) * stride - 2*pad + k.
std::size_t deconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// Convolution weights are laid out (out, in, kh, kw). Transposed-convolution weights are
// laid out (in, out, kh, kw), so a convolution's weight tensor used unchanged by
// deconv2d gives exactly the adjoint linear map.
template <typename T>
struct ConvParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> grad_x;
  BasicTensor<T> grad_weight;
  BasicTensor<T> grad_bias;
};

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const ConvParams<T>& p);
// grad_x is skipped (left empty) when want_grad_x is false.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p, const BasicTensor<T>& grad_out,
                             bool want_grad_x = true);

template <typename T>
BasicTensor<T> deconv2d_forward(const BasicTensor<T>& x, const ConvParams<T>& p);
template <typename T>
ConvGrads<T> deconv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p, const BasicTensor<T>& grad_out,
                               bool want_grad_x = true);

enum class BnMode { train, infer };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Running statistics follow running = momentum * running + (1 - momentum) * batch, with the
// biased batch variance stored in running_var.
template <typename T>
struct BatchNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  double eps = kBatchNormEps;
  double momentum = kBatchNormMomentum;
  bool has_running_stats = false;

  static BatchNormParams identity(std::size_t channels);
};

template <typename T>
struct BatchNormCache {
  BnMode mode = BnMode::train;
  BasicTensor<T> x_hat;
  std::vector<double> inv_std;
};

// Train mode normalizes with batch statistics over (N,H,W) and updates the running stats in
// `p`; infer mode reads the running stats and leaves `p` untouched.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, BatchNormParams<T>& p, BnMode mode,
                                 BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> grad_x;
  BasicTensor<T> grad_gamma;
  BasicTensor<T> grad_beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BatchNormParams<T>& p,
                                     const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);
// The subgradient at exactly zero is taken as 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  BasicTensor<T> grad;
};

// Mean over the batch of -log softmax(logits)[label]; grad = (softmax - onehot) / N.
template <typename T>
LossAndGrad<T> softmax_cross_entropy(const BasicTensor<T>& logits, const std::vector<int>& labels);

// Mean squared error and its gradient with respect to `prediction`.
template <typename T>
LossAndGrad<T> mse_loss(const BasicTensor<T>& prediction, const BasicTensor<T>& target);

// (N,C,H,W) -> (N,C)
template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape, const BasicTensor<T>& grad_out);

// Fully connected layer on the flattened input: (N, F) x weight (K, F) + bias (K) -> (N, K).
template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
struct LinearGrads {
  BasicTensor<T> grad_x;
  BasicTensor<T> grad_weight;
  BasicTensor<T> grad_bias;
};

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_out, bool want_grad_x = true);

}  // namespace scae
