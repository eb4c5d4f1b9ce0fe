#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "scae/errors.hpp"

namespace scae {

class Rng;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

// Up to four strictly positive extents, row-major. Activations use (N,C,H,W),
// conv weights (O,I,Kh,Kw).
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::span<const std::size_t> dims);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const;
  std::size_t numel() const;
  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

  bool operator==(const Shape& other) const;
  std::string str() const;

 private:
  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  static constexpr DType dtype() { return dtype_of<T>(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 element access.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Same data under a new shape of equal element count.
  BasicTensor reshaped(Shape shape) const;

  bool operator==(const BasicTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& t);

template <typename T>
BasicTensor<T> zeros(const Shape& shape);
template <typename T>
BasicTensor<T> full(const Shape& shape, T value);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, double factor);
// a += b, in place; used for gradient accumulation buffers.
template <typename T>
void accumulate(BasicTensor<T>& into, const BasicTensor<T>& b);

template <typename T>
double mse(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
double sum(const BasicTensor<T>& a);

// Per-channel statistics of a (N,C,H,W) tensor over (N,H,W). Variance is biased (1/count).
template <typename T>
std::vector<double> channel_mean(const BasicTensor<T>& x);
template <typename T>
std::vector<double> channel_variance(const BasicTensor<T>& x);

// Index of the largest entry in each row of an (N,K) tensor; ties resolve to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> gaussian(Rng& rng, const Shape& shape, double mean, double stddev);

// Shapes equal and every element has the identical bit pattern.
template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
bool all_close(const BasicTensor<T>& a, const BasicTensor<T>& b, double rtol, double atol);

// Throws NumericError naming `what` if any value is NaN or infinite.
template <typename T>
void check_finite(const BasicTensor<T>& t, const std::string& what);

void require_same_shape(const Shape& a, const Shape& b, const char* op);

}  // namespace scae
