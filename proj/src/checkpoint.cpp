#include "asymvq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "asymvq/errors.hpp"

namespace asymvq {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'S', 'Y', 'M', 'V', 'Q', 'C', 'K'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v{};
    need(sizeof v);
    std::memcpy(&v, in_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  [[nodiscard]] bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > in_.size() - pos_) throw InputError("checkpoint truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>* Checkpoint::find_array(const std::string& name) const {
  for (const auto& [k, v] : arrays)
    if (k == name) return &v;
  return nullptr;
}

const std::string* Checkpoint::find_string(const std::string& name) const {
  for (const auto& [k, v] : strings)
    if (k == name) return &v;
  return nullptr;
}

const Tensor<float>& Checkpoint::array(const std::string& name) const {
  if (const auto* t = find_array(name)) return *t;
  throw InputError("checkpoint has no array '" + name + "'");
}

const std::string& Checkpoint::string(const std::string& name) const {
  if (const auto* s = find_string(name)) return *s;
  throw InputError("checkpoint has no entry '" + name + "'");
}

void Checkpoint::set_array(const std::string& name, Tensor<float> value) {
  for (auto& [k, v] : arrays)
    if (k == name) {
      v = std::move(value);
      return;
    }
  arrays.emplace_back(name, std::move(value));
}

void Checkpoint::set_string(const std::string& name, std::string value) {
  for (auto& [k, v] : strings)
    if (k == name) {
      v = std::move(value);
      return;
    }
  strings.emplace_back(name, std::move(value));
}

void Checkpoint::store(const ParameterSet<float>& params, const std::string& prefix) {
  for (const auto& [name, var] : params) set_array(prefix + name, var.value());
}

void Checkpoint::restore(const ParameterSet<float>& params, const std::string& prefix) const {
  for (const auto& [name, var] : params) {
    const Tensor<float>& stored = array(prefix + name);
    if (stored.shape() != var.shape())
      throw InputError("checkpoint array '" + prefix + name + "' has shape " + stored.shape().str() + ", expected " +
                       var.shape().str());
    Var<float> target = var;
    target.mutable_value() = stored;
  }
}

std::uint64_t Checkpoint::checksum(const std::string& prefix) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [k, v] : arrays)
    if (k.rfind(prefix, 0) == 0) h = asymvq::checksum(v, h);
  return h;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  const auto entries = config_entries(ckpt.config);
  w.pod<std::uint64_t>(entries.size());
  for (const auto& [k, v] : entries) {
    w.str(k);
    w.str(v);
  }
  w.pod<std::int64_t>(ckpt.step);
  w.pod<std::uint64_t>(ckpt.arrays.size());
  for (const auto& [name, t] : ckpt.arrays) {
    w.str(name);
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) w.pod<std::int32_t>(d);
    w.bytes(t.data(), sizeof(float) * static_cast<std::size_t>(t.size()));
  }
  w.pod<std::uint64_t>(ckpt.strings.size());
  for (const auto& [k, v] : ckpt.strings) {
    w.str(k);
    w.str(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw InputError("not an asymvq checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto n_entries = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    const std::string k = r.str();
    const std::string v = r.str();
    set_config_value(ckpt.config, k, v);
  }
  ckpt.step = r.pod<std::int64_t>();
  const auto n_arrays = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    std::string name = r.str();
    Shape s;
    s.n = r.pod<std::int32_t>();
    s.c = r.pod<std::int32_t>();
    s.h = r.pod<std::int32_t>();
    s.w = r.pod<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw InputError("checkpoint array '" + name + "' has a negative extent");
    Tensor<float> t(s);
    r.bytes(t.data(), sizeof(float) * static_cast<std::size_t>(t.size()));
    ckpt.arrays.emplace_back(std::move(name), std::move(t));
  }
  const auto n_strings = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_strings; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    ckpt.strings.emplace_back(std::move(k), std::move(v));
  }
  if (!r.done()) throw InputError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace asymvq
