#pragma once

#include <bit>
#include <cstring>
#include <map>

#include "signvid/nn.hpp"

namespace signvid {

// Checkpoint container: magic "SVIP", format-version u32, tensor count u64,
// then per tensor: name length u32 + UTF-8 name, rank u32, dims (u64 each),
// little-endian float64 payload. Round-trips bit-exactly.

namespace ckpt_detail {

constexpr char kMagic[4] = {'S', 'V', 'I', 'P'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == n_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > n_) throw IoError("checkpoint: truncated file");
  }
  const unsigned char* p_;
  std::size_t n_, pos_ = 0;
};

}  // namespace ckpt_detail

inline std::string serialize_checkpoint(const NamedParams& tensors) {
  using namespace ckpt_detail;
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_f64(out, v);
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const NamedParams& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path.string());
  const std::string bytes = serialize_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("checkpoint: write failed: " + path.string());
}

inline NamedParams parse_checkpoint(const std::string& bytes) {
  using namespace ckpt_detail;
  ckpt_detail::Reader r(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  if (r.bytes(4) != std::string(kMagic, 4)) throw IoError("checkpoint: bad magic");
  const std::uint32_t ver = r.u32();
  if (ver != kVersion) throw IoError("checkpoint: unsupported version " + std::to_string(ver));
  const std::uint64_t count = r.u64();
  NamedParams out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::size_t>(r.u64());
      numel *= shape[d];
    }
    std::vector<double> data(numel);
    for (std::size_t j = 0; j < numel; ++j) data[j] = r.f64();
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return out;
}

inline NamedParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw StateError("checkpoint: missing file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

/// Copy loaded values into an existing parameter set (shape-checked).
/// Extra tensors in `loaded` are allowed (metadata); missing ones are errors.
inline void assign_params(const NamedParams& params, const NamedParams& loaded) {
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : loaded) by_name.emplace(name, t);
  for (const auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw StateError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape() != t.shape())
      throw ShapeError("checkpoint: shape mismatch for '" + name + "': file " +
                       shape_str(it->second.shape()) + " vs model " + shape_str(t.shape()));
    t.node()->value = it->second.data();
    t.node()->grad.clear();
  }
}

inline Tensor find_tensor(const NamedParams& loaded, const std::string& name) {
  for (const auto& [n, t] : loaded)
    if (n == name) return t;
  throw StateError("checkpoint: missing tensor '" + name + "'");
}

inline bool has_tensor(const NamedParams& loaded, const std::string& name) {
  for (const auto& [n, t] : loaded)
    if (n == name) return true;
  return false;
}

}  // namespace signvid
