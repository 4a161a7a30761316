#pragma once

// Binary checkpoints:
//   "JIIO1\n"
//   per tensor: u32 name length, name bytes, u32 rank, u32 extents[rank],
//               f64 payload (little-endian)
//   u32 tensor count
// Integers are little-endian. Metadata rides along as ordinary tensors.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/tensor.hpp"
#include "jiio/harness/data.hpp"
#include "jiio/layer.hpp"

namespace jiio {

inline constexpr char kCheckpointMagic[] = "JIIO1\n";
inline constexpr std::size_t kCheckpointMagicLen = 6;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> data;

  bool operator==(const NamedTensor&) const = default;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_++]} << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_++]} << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void seek(std::size_t p) { pos_ = p; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw Error(ErrorCode::kTruncatedFile, "checkpoint ends inside a tensor record");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + kCheckpointMagicLen);
  for (const auto& t : tensors) {
    std::size_t count = 1;
    for (auto e : t.shape) count *= e;
    require(t.data.size() == count, ErrorCode::kDimensionMismatch, "checkpoint tensor " + t.name + " shape and data disagree");
    detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) detail::put_u32(out, e);
    for (double v : t.data) detail::put_f64(out, v);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kCheckpointMagicLen || std::memcmp(bytes.data(), kCheckpointMagic, kCheckpointMagicLen) != 0)
    throw Error(ErrorCode::kBadMagic, "not a JIIO1 checkpoint");
  if (bytes.size() < kCheckpointMagicLen + 4) throw Error(ErrorCode::kCorruptFooter, "checkpoint has no footer");
  const std::size_t body_end = bytes.size() - 4;
  detail::ByteReader footer(bytes, bytes.size());
  footer.seek(body_end);
  const std::uint32_t expected = footer.u32();

  detail::ByteReader r(bytes, body_end);
  r.seek(kCheckpointMagicLen);
  std::vector<NamedTensor> out;
  try {
    while (r.pos() < body_end) {
      NamedTensor t;
      t.name = r.str(r.u32());
      const std::uint32_t rank = r.u32();
      std::size_t count = 1;
      for (std::uint32_t i = 0; i < rank; ++i) {
        t.shape.push_back(r.u32());
        count *= t.shape.back();
      }
      if (count > (body_end - r.pos()) / 8) throw Error(ErrorCode::kTruncatedFile, "tensor payload exceeds file");
      t.data.reserve(count);
      for (std::size_t i = 0; i < count; ++i) t.data.push_back(r.f64());
      out.push_back(std::move(t));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kTruncatedFile) throw;
    throw Error(ErrorCode::kCorruptFooter, std::string("checkpoint body does not end at the footer: ") + e.what());
  }
  if (out.size() != expected)
    throw Error(ErrorCode::kCorruptFooter, "footer says " + std::to_string(expected) + " tensors, found " +
                                               std::to_string(out.size()));
  return out;
}

inline void save_checkpoint(const std::vector<NamedTensor>& tensors, const std::string& path) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIoError, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Model <-> tensors
// ---------------------------------------------------------------------------

inline NamedTensor matrix_tensor(std::string name, const Matrix& m) {
  const auto d = m.data();
  return {std::move(name), {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
          std::vector<double>(d.begin(), d.end())};
}

inline NamedTensor vector_tensor(std::string name, const Vector& v) {
  return {std::move(name), {static_cast<std::uint32_t>(v.size())}, v};
}

struct CheckpointMeta {
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  Activation activation = Activation::kTanh;
};

/// Model parameters plus metadata. The 64-bit step and config hash are stored
/// as two exact 32-bit halves.
inline std::vector<NamedTensor> model_tensors(const Model& m, const CheckpointMeta& meta) {
  const auto& p = m.layer.params();
  auto split = [](std::uint64_t v) {
    return Vector{static_cast<double>(v >> 32), static_cast<double>(v & 0xffffffffu)};
  };
  return {matrix_tensor("layer.W", p.W),
          matrix_tensor("layer.U", p.U),
          vector_tensor("layer.b", p.b),
          matrix_tensor("head.C", m.head.C),
          vector_tensor("head.d", m.head.d),
          vector_tensor("meta.activation", {m.layer.kind() == Activation::kTanh ? 1.0 : 0.0}),
          vector_tensor("meta.step", split(meta.step)),
          vector_tensor("meta.config_hash", split(meta.config_hash))};
}

inline std::pair<Model, CheckpointMeta> model_from_tensors(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto get = [&](const std::string& name, std::size_t rank) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::kMissingKey, "checkpoint lacks tensor " + name);
    require(it->second->shape.size() == rank, ErrorCode::kDimensionMismatch, "tensor " + name + " has wrong rank");
    return *it->second;
  };
  auto mat = [&](const std::string& name) {
    const auto& t = get(name, 2);
    return Matrix(t.shape[0], t.shape[1], t.data);
  };
  auto join = [&](const std::string& name) {
    const auto& t = get(name, 1);
    require(t.data.size() == 2, ErrorCode::kDimensionMismatch, "tensor " + name + " must hold two halves");
    return (static_cast<std::uint64_t>(t.data[0]) << 32) | static_cast<std::uint64_t>(t.data[1]);
  };
  CheckpointMeta meta;
  meta.activation = get("meta.activation", 1).data.at(0) != 0.0 ? Activation::kTanh : Activation::kLinear;
  meta.step = join("meta.step");
  meta.config_hash = join("meta.config_hash");
  LayerParams lp{mat("layer.W"), mat("layer.U"), get("layer.b", 1).data};
  OutputHead head{mat("head.C"), get("head.d", 1).data};
  return {Model{EquilibriumLayer(meta.activation, std::move(lp)), std::move(head)}, meta};
}

}  // namespace jiio
