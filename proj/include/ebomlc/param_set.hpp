#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ebomlc/error.hpp"
#include "ebomlc/tensor.hpp"

namespace ebomlc {

/// Ordered collection of named tensors; the unit of optimizer updates.
/// Iteration order is insertion order, which every algebraic helper relies on.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  void add(std::string name, Tensor value) {
    if (find(name) != nullptr) throw UsageError("ParamSet: duplicate name '" + name + "'");
    entries_.push_back({std::move(name), std::move(value)});
  }

  const Tensor* find(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return &e.value;
    }
    return nullptr;
  }
  Tensor* find(std::string_view name) {
    for (auto& e : entries_) {
      if (e.name == name) return &e.value;
    }
    return nullptr;
  }

  const Tensor& at(std::string_view name) const {
    if (const Tensor* t = find(name)) return *t;
    throw UsageError("ParamSet: no tensor named '" + std::string(name) + "'");
  }
  Tensor& at(std::string_view name) {
    if (Tensor* t = find(name)) return *t;
    throw UsageError("ParamSet: no tensor named '" + std::string(name) + "'");
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Entry& entry(std::size_t i) { return entries_[i]; }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  bool same_structure(const ParamSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (entries_[i].name != other.entries_[i].name) return false;
      if (entries_[i].value.shape() != other.entries_[i].value.shape()) return false;
    }
    return true;
  }

  ParamSet zeros_like() const {
    ParamSet z;
    for (const auto& e : entries_) z.add(e.name, Tensor::zeros_like(e.value));
    return z;
  }

  bool all_finite() const {
    for (const auto& e : entries_) {
      if (!e.value.all_finite()) return false;
    }
    return true;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value))
        return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

/// Gradients keyed by parameter name; same container as the parameters.
using GradientMap = ParamSet;

namespace detail {
inline void require_compatible(const ParamSet& a, const ParamSet& b, const char* op) {
  if (!a.same_structure(b)) throw DimensionError(std::string(op) + ": ParamSet structure mismatch");
}
}  // namespace detail

inline double dot(const ParamSet& a, const ParamSet& b) {
  detail::require_compatible(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a.entry(i).value.data();
    const auto y = b.entry(i).value.data();
    for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * y[j];
  }
  return s;
}

inline double squared_norm(const ParamSet& a) {
  double s = 0.0;
  for (const auto& e : a) {
    for (double v : e.value.data()) s += v * v;
  }
  return s;
}

inline double norm(const ParamSet& a) { return std::sqrt(squared_norm(a)); }

/// a + scale * b
inline ParamSet axpy(const ParamSet& a, double scale, const ParamSet& b) {
  detail::require_compatible(a, b, "axpy");
  ParamSet out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto dst = out.entry(i).value.data();
    const auto src = b.entry(i).value.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
  return out;
}

inline ParamSet scaled(const ParamSet& a, double scale) {
  ParamSet out = a;
  for (auto& e : out) {
    for (double& v : e.value.data()) v *= scale;
  }
  return out;
}

inline ParamSet operator+(const ParamSet& a, const ParamSet& b) { return axpy(a, 1.0, b); }
inline ParamSet operator-(const ParamSet& a, const ParamSet& b) { return axpy(a, -1.0, b); }

inline double max_abs_diff(const ParamSet& a, const ParamSet& b) {
  detail::require_compatible(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs_diff(a.entry(i).value, b.entry(i).value));
  return m;
}

inline std::vector<double> flatten(const ParamSet& a) {
  std::vector<double> out;
  out.reserve(a.num_scalars());
  for (const auto& e : a) out.insert(out.end(), e.value.data().begin(), e.value.data().end());
  return out;
}

inline ParamSet unflatten(const ParamSet& like, std::span<const double> flat) {
  if (flat.size() != like.num_scalars()) throw DimensionError("unflatten: size mismatch");
  ParamSet out = like;
  std::size_t k = 0;
  for (auto& e : out) {
    for (double& v : e.value.data()) v = flat[k++];
  }
  return out;
}

// ---------------------------------------------------------------------------
// BMPS container: "BMPS", u32 version, then records of
// (u32 name length, name bytes, u32 rank, u32 dims..., fp64 payload), all
// little-endian, until end of stream.
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 4> kBmpsMagic = {'B', 'M', 'P', 'S'};
inline constexpr std::uint32_t kBmpsVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_bytes(std::istream& is, unsigned char* out, std::size_t n) {
  is.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!get_bytes(is, b, 4)) throw FormatError("BMPS: truncated u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!get_bytes(is, b, 8)) throw FormatError("BMPS: truncated fp64 payload");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace detail

inline void write_bmps(std::ostream& os, const ParamSet& params) {
  os.write(kBmpsMagic.data(), 4);
  detail::put_u32(os, kBmpsVersion);
  for (const auto& e : params) {
    detail::put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : e.value.data()) detail::put_f64(os, v);
  }
}

inline ParamSet read_bmps(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kBmpsMagic.data(), 4) != 0) {
    throw FormatError("BMPS: bad magic");
  }
  const std::uint32_t version = detail::get_u32(is);
  if (version != kBmpsVersion) throw FormatError("BMPS: unsupported version " + std::to_string(version));
  ParamSet out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t name_len = detail::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(is.gcount()) != name_len) throw FormatError("BMPS: truncated name");
    const std::uint32_t rank = detail::get_u32(is);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_u32(is);
    Tensor t(shape);
    for (double& v : t.data()) v = detail::get_f64(is);
    out.add(std::move(name), std::move(t));
  }
  return out;
}

inline void save_bmps(const std::string& path, const ParamSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("BMPS: cannot open '" + path + "' for writing");
  write_bmps(os, params);
}

inline ParamSet load_bmps(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("BMPS: cannot open '" + path + "'");
  return read_bmps(is);
}

}  // namespace ebomlc
