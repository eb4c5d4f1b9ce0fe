#include "scae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <map>

#include "scae/file_io.hpp"
#include "scae/network.hpp"

namespace scae {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'C', 'A', 'E'};
// Largest element count accepted for a single tensor (4 GiB of floats).
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 30;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void pod(U v) {
    bytes(&v, sizeof v);
  }
  void text(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename T>
  void tensor(const std::string& name, const BasicTensor<T>& t) {
    text(name);
    pod(static_cast<std::uint32_t>(t.shape().rank()));
    for (auto d : t.shape().dims()) pod(static_cast<std::uint32_t>(d));
    pod(static_cast<std::uint8_t>(dtype_of<T>()));
    bytes(t.data(), t.size() * sizeof(T));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

struct RawTensor {
  std::string name;
  DType dtype = DType::f32;
  Tensor f32;
  TensorD f64;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  void bytes(void* p, std::size_t n) {
    if (n > b_.size() - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U pod() {
    U v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string text() {
    const auto n = pod<std::uint32_t>();
    if (n > b_.size() - pos_) throw FormatError("checkpoint truncated: string length " + std::to_string(n));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  RawTensor tensor() {
    RawTensor t;
    t.name = text();
    const auto rank = pod<std::uint32_t>();
    if (rank < 1 || rank > Shape::kMaxRank) {
      throw FormatError("checkpoint tensor '" + t.name + "' has unsupported rank " + std::to_string(rank));
    }
    std::vector<std::size_t> dims(rank);
    std::uint64_t count = 1;
    for (auto& d : dims) {
      d = pod<std::uint32_t>();
      if (d == 0) throw FormatError("checkpoint tensor '" + t.name + "' has a zero dimension");
      count *= d;
      if (count > kMaxElements) throw FormatError("checkpoint tensor '" + t.name + "' dimensions overflow");
    }
    const auto tag = pod<std::uint8_t>();
    const Shape shape{std::span<const std::size_t>(dims)};
    if (tag == static_cast<std::uint8_t>(DType::f32)) {
      t.dtype = DType::f32;
      t.f32 = Tensor(shape);
      bytes(t.f32.data(), t.f32.size() * sizeof(float));
    } else if (tag == static_cast<std::uint8_t>(DType::f64)) {
      t.dtype = DType::f64;
      t.f64 = TensorD(shape);
      bytes(t.f64.data(), t.f64.size() * sizeof(double));
    } else {
      throw FormatError("checkpoint tensor '" + t.name + "' has unknown dtype tag " + std::to_string(tag));
    }
    return t;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::vector<double> to_vector(const TensorD& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.pod(kCheckpointVersion);
  w.text(ckpt.spec.to_text());

  std::uint32_t count = static_cast<std::uint32_t>(ckpt.params.size());
  if (ckpt.stats) count += 2;
  w.pod(count);
  for (const auto& e : ckpt.params.entries()) w.tensor(e.name, e.value);
  if (ckpt.stats) {
    const auto& s = *ckpt.stats;
    w.tensor("norm.mean", TensorD(Shape{s.mean.size()}, s.mean));
    w.tensor("norm.std", TensorD(Shape{s.stddev.size()}, s.stddev));
  }

  w.pod(static_cast<std::uint8_t>(ckpt.optimizer ? 1 : 0));
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    w.pod(o.step);
    w.pod(o.config.beta1);
    w.pod(o.config.beta2);
    w.pod(o.config.eps);
    w.pod(static_cast<std::uint32_t>(o.m.size() + o.v.size()));
    for (const auto& e : o.m.entries()) w.tensor("m/" + e.name, e.value);
    for (const auto& e : o.v.entries()) w.tensor("v/" + e.name, e.value);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ckpt;
  try {
    ckpt.spec = NetworkSpec::from_text(r.text());
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint spec block: ") + e.what());
  }
  const Graph graph = build_graph(ckpt.spec);
  std::map<std::string, bool, std::less<>> trainable;
  for (const auto& p : graph.params()) trainable[p.name] = p.trainable;

  const auto count = r.pod<std::uint32_t>();
  std::optional<TensorD> mean, stddev;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto t = r.tensor();
    if (t.name == "norm.mean" || t.name == "norm.std") {
      if (t.dtype != DType::f64 || t.f64.shape().rank() != 1) throw FormatError("checkpoint: malformed " + t.name);
      (t.name == "norm.mean" ? mean : stddev) = std::move(t.f64);
      continue;
    }
    const auto it = trainable.find(t.name);
    if (it == trainable.end()) throw FormatError("checkpoint tensor '" + t.name + "' is not part of the network");
    if (t.dtype != DType::f32) throw FormatError("checkpoint tensor '" + t.name + "' must be single precision");
    if (ckpt.params.contains(t.name)) throw FormatError("checkpoint tensor '" + t.name + "' appears twice");
    ckpt.params.add(t.name, std::move(t.f32), it->second);
  }
  if (mean.has_value() != stddev.has_value()) throw FormatError("checkpoint: incomplete normalization statistics");
  if (mean) {
    if (mean->size() != stddev->size()) throw FormatError("checkpoint: normalization statistics length mismatch");
    ckpt.stats = NormalizationStats{to_vector(*mean), to_vector(*stddev)};
  }
  graph.check_store(ckpt.params);

  const auto has_opt = r.pod<std::uint8_t>();
  if (has_opt > 1) throw FormatError("checkpoint: bad optimizer flag");
  if (has_opt) {
    AdamState<float> o;
    o.step = r.pod<std::uint64_t>();
    o.config.beta1 = r.pod<double>();
    o.config.beta2 = r.pod<double>();
    o.config.eps = r.pod<double>();
    const auto n = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto t = r.tensor();
      const bool is_m = t.name.rfind("m/", 0) == 0;
      if (!is_m && t.name.rfind("v/", 0) != 0) throw FormatError("checkpoint: bad optimizer tensor '" + t.name + "'");
      const std::string param = t.name.substr(2);
      if (!ckpt.params.contains(param) || !(ckpt.params.get(param).shape() == t.f32.shape()) ||
          t.dtype != DType::f32) {
        throw FormatError("checkpoint: optimizer tensor '" + t.name + "' does not match a parameter");
      }
      auto& store = is_m ? o.m : o.v;
      if (store.contains(param)) throw FormatError("checkpoint tensor '" + t.name + "' appears twice");
      store.add(param, std::move(t.f32), true);
    }
    ckpt.optimizer = std::move(o);
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace scae
