#include "scae/nn_ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace scae {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct Geometry {
  std::size_t channels, height, width;  // image side
  std::size_t kernel, stride, pad;
  std::size_t out_h, out_w;             // column grid side
};

// col[(c*k + ki)*k + kj, oh*out_w + ow] = img[c, oh*s - p + ki, ow*s - p + kj] (0 outside).
template <typename T>
void im2col(const T* img, const Geometry& g, T* col) {
  const std::size_t grid = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * grid;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) ? T{0} : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds columns back onto the image (img must be zeroed).
template <typename T>
void col2im(const T* col, const Geometry& g, T* img) {
  const std::size_t grid = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * grid;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.rank() != rank) {
    throw ContractError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                        s.str());
  }
}

template <typename T>
void check_conv_params(const ConvParams<T>& p, const char* op) {
  require_rank(p.weight.shape(), 4, op, "weight");
  require_rank(p.bias.shape(), 1, op, "bias");
  if (p.weight.shape()[2] != p.weight.shape()[3]) throw ContractError(std::string(op) + ": kernel must be square");
  if (p.stride == 0) throw ContractError(std::string(op) + ": stride must be positive");
}

template <typename T>
void add_bias(T* out, const BasicTensor<T>& bias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T b = bias[c];
    T* p = out + c * plane;
    for (std::size_t k = 0; k < plane; ++k) p[k] += b;
  }
}

template <typename T>
BasicTensor<T> bias_grad(const BasicTensor<T>& grad_out) {
  const std::size_t n = grad_out.shape()[0], c = grad_out.shape()[1];
  const std::size_t plane = grad_out.shape()[2] * grad_out.shape()[3];
  std::vector<double> acc(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = grad_out.data() + (i * c + ch) * plane;
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      acc[ch] += s;
    }
  }
  BasicTensor<T> out(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) out[ch] = static_cast<T>(acc[ch]);
  return out;
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ContractError("conv geometry: stride must be positive");
  if (in + 2 * pad < kernel) {
    throw ContractError("conv geometry: input " + std::to_string(in) + " with pad " + std::to_string(pad) +
                        " is smaller than kernel " + std::to_string(kernel));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

std::size_t deconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0 || in == 0) throw ContractError("deconv geometry: stride and input must be positive");
  const std::ptrdiff_t out = static_cast<std::ptrdiff_t>((in - 1) * stride + kernel) - 2 * static_cast<std::ptrdiff_t>(pad);
  if (out < 1) {
    throw ContractError("deconv geometry: output extent " + std::to_string(out) + " < 1 for input " +
                        std::to_string(in));
  }
  return static_cast<std::size_t>(out);
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const ConvParams<T>& p) {
  require_rank(x.shape(), 4, "conv2d_forward", "input");
  check_conv_params(p, "conv2d_forward");
  const std::size_t n = x.shape()[0], in_c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t out_c = p.weight.shape()[0], k = p.weight.shape()[2];
  if (p.weight.shape()[1] != in_c) {
    throw ContractError("conv2d_forward: weight " + p.weight.shape().str() + " does not accept input " +
                        x.shape().str());
  }
  if (p.bias.shape()[0] != out_c) throw ContractError("conv2d_forward: bias length mismatch");
  const Geometry g{in_c, h, w, k, p.stride, p.pad, conv_output_size(h, k, p.stride, p.pad),
                   conv_output_size(w, k, p.stride, p.pad)};
  const std::size_t grid = g.out_h * g.out_w, patch = in_c * k * k;

  BasicTensor<T> out(Shape{n, out_c, g.out_h, g.out_w});
  std::vector<T> col(patch * grid);
  ConstMatMap<T> weight(p.weight.data(), out_c, patch);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data() + i * in_c * h * w, g, col.data());
    MatMap<T> dst(out.data() + i * out_c * grid, out_c, grid);
    dst.noalias() = weight * ConstMatMap<T>(col.data(), patch, grid);
    add_bias(dst.data(), p.bias, out_c, grid);
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p, const BasicTensor<T>& grad_out,
                             bool want_grad_x) {
  require_rank(x.shape(), 4, "conv2d_backward", "input");
  check_conv_params(p, "conv2d_backward");
  const std::size_t n = x.shape()[0], in_c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t out_c = p.weight.shape()[0], k = p.weight.shape()[2];
  const Geometry g{in_c, h, w, k, p.stride, p.pad, conv_output_size(h, k, p.stride, p.pad),
                   conv_output_size(w, k, p.stride, p.pad)};
  require_same_shape(grad_out.shape(), Shape{n, out_c, g.out_h, g.out_w}, "conv2d_backward");
  const std::size_t grid = g.out_h * g.out_w, patch = in_c * k * k;

  ConvGrads<T> grads;
  grads.grad_weight = BasicTensor<T>(p.weight.shape());
  grads.grad_bias = bias_grad(grad_out);
  if (want_grad_x) grads.grad_x = BasicTensor<T>(x.shape());

  std::vector<T> col(patch * grid);
  ConstMatMap<T> weight(p.weight.data(), out_c, patch);
  MatMap<T> grad_weight(grads.grad_weight.data(), out_c, patch);
  for (std::size_t i = 0; i < n; ++i) {
    ConstMatMap<T> g_out(grad_out.data() + i * out_c * grid, out_c, grid);
    im2col(x.data() + i * in_c * h * w, g, col.data());
    grad_weight.noalias() += g_out * ConstMatMap<T>(col.data(), patch, grid).transpose();
    if (want_grad_x) {
      MatMap<T> grad_col(col.data(), patch, grid);
      grad_col.noalias() = weight.transpose() * g_out;
      col2im(col.data(), g, grads.grad_x.data() + i * in_c * h * w);
    }
  }
  return grads;
}

template <typename T>
BasicTensor<T> deconv2d_forward(const BasicTensor<T>& x, const ConvParams<T>& p) {
  require_rank(x.shape(), 4, "deconv2d_forward", "input");
  check_conv_params(p, "deconv2d_forward");
  const std::size_t n = x.shape()[0], in_c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t out_c = p.weight.shape()[1], k = p.weight.shape()[2];
  if (p.weight.shape()[0] != in_c) {
    throw ContractError("deconv2d_forward: weight " + p.weight.shape().str() + " does not accept input " +
                        x.shape().str());
  }
  if (p.bias.shape()[0] != out_c) throw ContractError("deconv2d_forward: bias length mismatch");
  const std::size_t out_h = deconv_output_size(h, k, p.stride, p.pad);
  const std::size_t out_w = deconv_output_size(w, k, p.stride, p.pad);
  // The image side of the im2col geometry is the deconv output; the column grid is the input.
  const Geometry g{out_c, out_h, out_w, k, p.stride, p.pad, h, w};
  const std::size_t grid = h * w, patch = out_c * k * k;

  BasicTensor<T> out(Shape{n, out_c, out_h, out_w});
  std::vector<T> col(patch * grid);
  ConstMatMap<T> weight(p.weight.data(), in_c, patch);
  for (std::size_t i = 0; i < n; ++i) {
    MatMap<T> c(col.data(), patch, grid);
    c.noalias() = weight.transpose() * ConstMatMap<T>(x.data() + i * in_c * grid, in_c, grid);
    T* dst = out.data() + i * out_c * out_h * out_w;
    col2im(col.data(), g, dst);
    add_bias(dst, p.bias, out_c, out_h * out_w);
  }
  return out;
}

template <typename T>
ConvGrads<T> deconv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p, const BasicTensor<T>& grad_out,
                               bool want_grad_x) {
  require_rank(x.shape(), 4, "deconv2d_backward", "input");
  check_conv_params(p, "deconv2d_backward");
  const std::size_t n = x.shape()[0], in_c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t out_c = p.weight.shape()[1], k = p.weight.shape()[2];
  const std::size_t out_h = deconv_output_size(h, k, p.stride, p.pad);
  const std::size_t out_w = deconv_output_size(w, k, p.stride, p.pad);
  require_same_shape(grad_out.shape(), Shape{n, out_c, out_h, out_w}, "deconv2d_backward");
  const Geometry g{out_c, out_h, out_w, k, p.stride, p.pad, h, w};
  const std::size_t grid = h * w, patch = out_c * k * k;

  ConvGrads<T> grads;
  grads.grad_weight = BasicTensor<T>(p.weight.shape());
  grads.grad_bias = bias_grad(grad_out);
  if (want_grad_x) grads.grad_x = BasicTensor<T>(x.shape());

  std::vector<T> col(patch * grid);
  ConstMatMap<T> weight(p.weight.data(), in_c, patch);
  MatMap<T> grad_weight(grads.grad_weight.data(), in_c, patch);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(grad_out.data() + i * out_c * out_h * out_w, g, col.data());
    ConstMatMap<T> c(col.data(), patch, grid);
    ConstMatMap<T> x_i(x.data() + i * in_c * grid, in_c, grid);
    grad_weight.noalias() += x_i * c.transpose();
    if (want_grad_x) {
      MatMap<T> gx(grads.grad_x.data() + i * in_c * grid, in_c, grid);
      gx.noalias() = weight * c;
    }
  }
  return grads;
}

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::size_t channels) {
  BatchNormParams<T> p;
  p.gamma = full<T>(Shape{channels}, T{1});
  p.beta = zeros<T>(Shape{channels});
  p.running_mean = zeros<T>(Shape{channels});
  p.running_var = full<T>(Shape{channels}, T{1});
  return p;
}

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, BatchNormParams<T>& p, BnMode mode,
                                 BatchNormCache<T>* cache) {
  require_rank(x.shape(), 4, "batchnorm_forward", "input");
  const std::size_t n = x.shape()[0], c = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
  if (p.gamma.size() != c || p.beta.size() != c || p.running_mean.size() != c || p.running_var.size() != c) {
    throw ContractError("batchnorm_forward: parameters sized for " + std::to_string(p.gamma.size()) +
                        " channels, input has " + std::to_string(c));
  }
  std::vector<double> mean(c), inv_std(c);
  if (mode == BnMode::train) {
    const auto batch_mean = channel_mean(x);
    const auto batch_var = channel_variance(x);
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = batch_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(batch_var[ch] + p.eps);
      p.running_mean[ch] = static_cast<T>(p.momentum * p.running_mean[ch] + (1.0 - p.momentum) * batch_mean[ch]);
      p.running_var[ch] = static_cast<T>(p.momentum * p.running_var[ch] + (1.0 - p.momentum) * batch_var[ch]);
    }
    p.has_running_stats = true;
  } else {
    if (!p.has_running_stats) throw ContractError("batchnorm_forward: infer mode needs initialized running stats");
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = p.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(p.running_var[ch]) + p.eps);
    }
  }

  BasicTensor<T> out(x.shape());
  BasicTensor<T> x_hat;
  if (cache) x_hat = BasicTensor<T>(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * plane;
      const T m = static_cast<T>(mean[ch]), s = static_cast<T>(inv_std[ch]);
      const T gamma = p.gamma[ch], beta = p.beta[ch];
      for (std::size_t k = 0; k < plane; ++k) {
        const T xh = (x[off + k] - m) * s;
        out[off + k] = gamma * xh + beta;
        if (cache) x_hat[off + k] = xh;
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BatchNormParams<T>& p,
                                     const BasicTensor<T>& grad_out) {
  require_same_shape(grad_out.shape(), cache.x_hat.shape(), "batchnorm_backward");
  const std::size_t n = grad_out.shape()[0], c = grad_out.shape()[1], plane = grad_out.shape()[2] * grad_out.shape()[3];
  const double count = static_cast<double>(n * plane);

  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * plane;
      double sg = 0.0, sgx = 0.0;
      for (std::size_t k = 0; k < plane; ++k) {
        sg += grad_out[off + k];
        sgx += static_cast<double>(grad_out[off + k]) * cache.x_hat[off + k];
      }
      sum_g[ch] += sg;
      sum_gx[ch] += sgx;
    }
  }

  BatchNormGrads<T> grads;
  grads.grad_gamma = BasicTensor<T>(Shape{c});
  grads.grad_beta = BasicTensor<T>(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    grads.grad_gamma[ch] = static_cast<T>(sum_gx[ch]);
    grads.grad_beta[ch] = static_cast<T>(sum_g[ch]);
  }

  grads.grad_x = BasicTensor<T>(grad_out.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * plane;
      const double scale_ = static_cast<double>(p.gamma[ch]) * cache.inv_std[ch];
      if (cache.mode == BnMode::train) {
        const double mean_g = sum_g[ch] / count, mean_gx = sum_gx[ch] / count;
        for (std::size_t k = 0; k < plane; ++k) {
          grads.grad_x[off + k] =
              static_cast<T>(scale_ * (grad_out[off + k] - mean_g - cache.x_hat[off + k] * mean_gx));
        }
      } else {
        for (std::size_t k = 0; k < plane; ++k) grads.grad_x[off + k] = static_cast<T>(scale_ * grad_out[off + k]);
      }
    }
  }
  return grads;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  require_same_shape(x.shape(), grad_out.shape(), "relu_backward");
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return out;
}

template <typename T>
LossAndGrad<T> softmax_cross_entropy(const BasicTensor<T>& logits, const std::vector<int>& labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  if (labels.size() != n) throw ContractError("softmax_cross_entropy: label count does not match batch");
  LossAndGrad<T> result;
  result.grad = BasicTensor<T>(logits.shape());
  double total = 0.0;
  std::vector<double> prob(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                          std::to_string(k) + ")");
    }
    const T* row = logits.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      prob[j] = std::exp(static_cast<double>(row[j]) - mx);
      z += prob[j];
    }
    total += std::log(z) + mx - row[labels[i]];
    for (std::size_t j = 0; j < k; ++j) {
      const double onehot = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
      result.grad[i * k + j] = static_cast<T>((prob[j] / z - onehot) / static_cast<double>(n));
    }
  }
  result.loss = total / static_cast<double>(n);
  if (!std::isfinite(result.loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
  return result;
}

template <typename T>
LossAndGrad<T> mse_loss(const BasicTensor<T>& prediction, const BasicTensor<T>& target) {
  require_same_shape(prediction.shape(), target.shape(), "mse_loss");
  LossAndGrad<T> result;
  result.loss = mse(prediction, target);
  result.grad = BasicTensor<T>(prediction.shape());
  const double factor = 2.0 / static_cast<double>(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    result.grad[i] = static_cast<T>(factor * (static_cast<double>(prediction[i]) - target[i]));
  }
  return result;
}

template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool", "input");
  const std::size_t n = x.shape()[0], c = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
  BasicTensor<T> out(Shape{n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    const T* p = x.data() + i * plane;
    for (std::size_t k = 0; k < plane; ++k) s += p[k];
    out[i] = static_cast<T>(s / static_cast<double>(plane));
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape, const BasicTensor<T>& grad_out) {
  require_rank(input_shape, 4, "global_avg_pool_backward", "input");
  const std::size_t n = input_shape[0], c = input_shape[1], plane = input_shape[2] * input_shape[3];
  require_same_shape(grad_out.shape(), Shape{n, c}, "global_avg_pool_backward");
  BasicTensor<T> out(input_shape);
  for (std::size_t i = 0; i < n * c; ++i) {
    const T g = static_cast<T>(grad_out[i] / static_cast<double>(plane));
    std::fill(out.data() + i * plane, out.data() + (i + 1) * plane, g);
  }
  return out;
}

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_rank(weight.shape(), 2, "linear_forward", "weight");
  const std::size_t n = x.shape()[0], features = x.size() / n, k = weight.shape()[0];
  if (weight.shape()[1] != features) {
    throw ContractError("linear_forward: weight " + weight.shape().str() + " does not accept input " +
                        x.shape().str());
  }
  if (bias.size() != k) throw ContractError("linear_forward: bias length mismatch");
  BasicTensor<T> out(Shape{n, k});
  MatMap<T> dst(out.data(), n, k);
  dst.noalias() = ConstMatMap<T>(x.data(), n, features) * ConstMatMap<T>(weight.data(), k, features).transpose();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] += bias[j];
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out,
                               bool want_grad_x) {
  const std::size_t n = x.shape()[0], features = x.size() / n, k = weight.shape()[0];
  require_same_shape(grad_out.shape(), Shape{n, k}, "linear_backward");
  LinearGrads<T> grads;
  ConstMatMap<T> g(grad_out.data(), n, k);
  grads.grad_weight = BasicTensor<T>(weight.shape());
  MatMap<T>(grads.grad_weight.data(), k, features).noalias() = g.transpose() * ConstMatMap<T>(x.data(), n, features);
  grads.grad_bias = BasicTensor<T>(Shape{k});
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += grad_out[i * k + j];
    grads.grad_bias[j] = static_cast<T>(s);
  }
  if (want_grad_x) {
    grads.grad_x = BasicTensor<T>(x.shape());
    MatMap<T>(grads.grad_x.data(), n, features).noalias() = g * ConstMatMap<T>(weight.data(), k, features);
  }
  return grads;
}

#define SCAE_INSTANTIATE(T)                                                                                     \
  template struct BatchNormParams<T>;                                                                           \
  template BasicTensor<T> conv2d_forward<T>(const BasicTensor<T>&, const ConvParams<T>&);                      \
  template ConvGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const ConvParams<T>&, const BasicTensor<T>&,   \
                                           bool);                                                               \
  template BasicTensor<T> deconv2d_forward<T>(const BasicTensor<T>&, const ConvParams<T>&);                    \
  template ConvGrads<T> deconv2d_backward<T>(const BasicTensor<T>&, const ConvParams<T>&, const BasicTensor<T>&, \
                                             bool);                                                             \
  template BasicTensor<T> batchnorm_forward<T>(const BasicTensor<T>&, BatchNormParams<T>&, BnMode,              \
                                               BatchNormCache<T>*);                                             \
  template BatchNormGrads<T> batchnorm_backward<T>(const BatchNormCache<T>&, const BatchNormParams<T>&,         \
                                                   const BasicTensor<T>&);                                      \
  template BasicTensor<T> relu_forward<T>(const BasicTensor<T>&);                                               \
  template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template LossAndGrad<T> softmax_cross_entropy<T>(const BasicTensor<T>&, const std::vector<int>&);             \
  template LossAndGrad<T> mse_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> global_avg_pool_forward<T>(const BasicTensor<T>&);                                    \
  template BasicTensor<T> global_avg_pool_backward<T>(const Shape&, const BasicTensor<T>&);                     \
  template BasicTensor<T> linear_forward<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template LinearGrads<T> linear_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                             bool);

SCAE_INSTANTIATE(float)
SCAE_INSTANTIATE(double)
#undef SCAE_INSTANTIATE

}  // namespace scae
