#include "scae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "scae/rng.hpp"

namespace scae {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.empty() || dims.size() > kMaxRank) {
    throw ContractError("tensor rank must be in [1, 4], got " + std::to_string(dims.size()));
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) throw ContractError("tensor dimensions must be positive");
    dims_[i] = dims[i];
  }
  rank_ = dims.size();
}

std::size_t Shape::operator[](std::size_t axis) const {
  if (axis >= rank_) {
    throw ContractError("axis " + std::to_string(axis) + " out of range for shape " + str());
  }
  return dims_[axis];
}

std::size_t Shape::numel() const {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool Shape::operator==(const Shape& other) const {
  return rank_ == other.rank_ && std::equal(dims_.begin(), dims_.begin() + rank_, other.dims_.begin());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ')';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) {
    throw ContractError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape), data_(shape.numel(), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ContractError("tensor of shape " + shape_.str() + " needs " + std::to_string(shape_.numel()) +
                        " values, got " + std::to_string(data_.size()));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != data_.size()) {
    throw ContractError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return BasicTensor(shape, data_);
}

template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return BasicTensor<To>(t.shape(), std::move(out));
}

template <typename T>
BasicTensor<T> zeros(const Shape& shape) {
  return BasicTensor<T>(shape, T{0});
}

template <typename T>
BasicTensor<T> full(const Shape& shape, T value) {
  return BasicTensor<T>(shape, value);
}

template <typename T>
void check_finite(const BasicTensor<T>& t, const std::string& what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      throw NumericError("non-finite value in " + what + " at flat index " + std::to_string(i));
    }
  }
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  check_finite(out, "add");
  return out;
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  check_finite(out, "sub");
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, double factor) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<T>(a[i] * factor);
  check_finite(out, "scale");
  return out;
}

template <typename T>
void accumulate(BasicTensor<T>& into, const BasicTensor<T>& b) {
  require_same_shape(into.shape(), b.shape(), "accumulate");
  T* dst = into.data();
  const T* src = b.data();
  for (std::size_t i = 0; i < into.size(); ++i) dst[i] += src[i];
}

template <typename T>
double mse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double out = acc / static_cast<double>(a.size());
  if (!std::isfinite(out)) throw NumericError("mse: non-finite result");
  return out;
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <typename T>
double sum(const BasicTensor<T>& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
  return acc;
}

namespace {

void require_rank4(const Shape& s, const char* op) {
  if (s.rank() != 4) throw ContractError(std::string(op) + ": expected (N,C,H,W), got " + s.str());
}

}  // namespace

template <typename T>
std::vector<double> channel_mean(const BasicTensor<T>& x) {
  require_rank4(x.shape(), "channel_mean");
  const std::size_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  std::vector<double> mean(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = x.data() + (i * c + ch) * hw;
      double acc = 0.0;
      for (std::size_t k = 0; k < hw; ++k) acc += p[k];
      mean[ch] += acc;
    }
  }
  for (auto& m : mean) m /= static_cast<double>(n * hw);
  return mean;
}

template <typename T>
std::vector<double> channel_variance(const BasicTensor<T>& x) {
  const auto mean = channel_mean(x);
  const std::size_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  std::vector<double> var(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = x.data() + (i * c + ch) * hw;
      double acc = 0.0;
      for (std::size_t k = 0; k < hw; ++k) {
        const double d = p[k] - mean[ch];
        acc += d * d;
      }
      var[ch] += acc;
    }
  }
  for (auto& v : var) v /= static_cast<double>(n * hw);
  return var;
}

template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& x) {
  if (x.shape().rank() != 2) throw ContractError("argmax_rows: expected (N,K), got " + x.shape().str());
  const std::size_t n = x.shape()[0], k = x.shape()[1];
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

template <typename T>
BasicTensor<T> gaussian(Rng& rng, const Shape& shape, double mean, double stddev) {
  if (!(stddev >= 0.0)) throw ContractError("gaussian: stddev must be >= 0");
  BasicTensor<T> out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(mean + stddev * rng.normal());
  return out;
}

template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
bool all_close(const BasicTensor<T>& a, const BasicTensor<T>& b, double rtol, double atol) {
  if (!(a.shape() == b.shape())) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    if (!(std::abs(x - y) <= atol + rtol * std::abs(y))) return false;
  }
  return true;
}

#define SCAE_INSTANTIATE(T)                                                                   \
  template class BasicTensor<T>;                                                              \
  template BasicTensor<T> zeros<T>(const Shape&);                                             \
  template BasicTensor<T> full<T>(const Shape&, T);                                           \
  template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template BasicTensor<T> sub<T>(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template BasicTensor<T> scale<T>(const BasicTensor<T>&, double);                            \
  template void accumulate<T>(BasicTensor<T>&, const BasicTensor<T>&);                        \
  template double mse<T>(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template double dot<T>(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template double sum<T>(const BasicTensor<T>&);                                              \
  template std::vector<double> channel_mean<T>(const BasicTensor<T>&);                        \
  template std::vector<double> channel_variance<T>(const BasicTensor<T>&);                    \
  template std::vector<int> argmax_rows<T>(const BasicTensor<T>&);                            \
  template BasicTensor<T> gaussian<T>(Rng&, const Shape&, double, double);                    \
  template bool bitwise_equal<T>(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template bool all_close<T>(const BasicTensor<T>&, const BasicTensor<T>&, double, double);   \
  template void check_finite<T>(const BasicTensor<T>&, const std::string&);

SCAE_INSTANTIATE(float)
SCAE_INSTANTIATE(double)
#undef SCAE_INSTANTIATE

template BasicTensor<double> cast<double, float>(const BasicTensor<float>&);
template BasicTensor<float> cast<float, double>(const BasicTensor<double>&);
template BasicTensor<float> cast<float, float>(const BasicTensor<float>&);
template BasicTensor<double> cast<double, double>(const BasicTensor<double>&);

}  // namespace scae
