#pragma once

// Dataset ingestion: IDX containers and seeded synthetic corpora.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/rng.hpp"
#include "jiio/tasks/data.hpp"

namespace jiio {

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Parses an unsigned-byte IDX buffer. Images (rank 3) become flattened
/// row-major items scaled by 1/255; a rank-1 buffer becomes labels.
inline Dataset parse_idx(const std::vector<std::uint8_t>& bytes) {
  auto u32 = [&](std::size_t off) {
    if (off + 4 > bytes.size()) throw Error(ErrorCode::kTruncatedFile, "IDX header truncated");
    return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
           (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
  };
  const std::uint32_t magic = u32(0);
  if (magic != kIdxLabelMagic && magic != kIdxImageMagic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "IDX magic 0x%08x is not 0x801 or 0x803", magic);
    throw Error(ErrorCode::kBadMagic, buf);
  }
  const std::size_t rank = magic & 0xff;
  std::vector<std::size_t> dims;
  std::size_t total = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    dims.push_back(u32(4 + 4 * i));
    total *= dims.back();
  }
  const std::size_t off = 4 + 4 * rank;
  if (bytes.size() < off + total)
    throw Error(ErrorCode::kTruncatedFile, "IDX payload has " + std::to_string(bytes.size() - off) + " of " +
                                               std::to_string(total) + " bytes");
  Dataset d;
  d.provenance = Provenance::kIdxFile;
  if (rank == 1) {
    for (std::size_t i = 0; i < total; ++i) d.labels.push_back(bytes[off + i]);
    return d;
  }
  d.height = dims[1];
  d.width = dims[2];
  const std::size_t item = dims[1] * dims[2];
  d.items.reserve(dims[0]);
  for (std::size_t k = 0; k < dims[0]; ++k) {
    Vector v(item);
    for (std::size_t i = 0; i < item; ++i) v[i] = bytes[off + k * item + i] / 255.0;
    d.items.push_back(std::move(v));
  }
  return d;
}

inline Dataset load_idx(const std::string& path) { return parse_idx(read_file_bytes(path)); }

/// Images plus labels from two IDX files; `limit` keeps the first items.
inline Dataset load_idx_pair(const std::string& images, const std::string& labels, std::size_t limit = 0) {
  Dataset d = load_idx(images);
  require(!d.items.empty(), ErrorCode::kInvalidArgument, images + " holds no images");
  if (!labels.empty()) {
    const Dataset l = load_idx(labels);
    require(l.labels.size() == d.items.size(), ErrorCode::kDimensionMismatch, "IDX image and label counts differ");
    d.labels = l.labels;
  }
  if (limit > 0 && limit < d.size()) d = d.slice(0, limit);
  return d;
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

/// 8×8 images with two Gaussian bumps at random centers, clamped to [0,1].
inline Dataset gen_blobs(std::size_t count, std::uint64_t seed, std::size_t side = 8) {
  SeededRng rng(seed);
  Dataset d;
  d.height = d.width = side;
  const double hi = static_cast<double>(side - 1);
  for (std::size_t k = 0; k < count; ++k) {
    Vector img(side * side, 0.0);
    for (int b = 0; b < 2; ++b) {
      const double cr = rng.uniform(0.0, hi), cc = rng.uniform(0.0, hi);
      const double amp = rng.uniform(0.6, 1.0), width = rng.uniform(0.8, 1.6);
      for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) {
          const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
          img[r * side + c] += amp * std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
        }
    }
    for (double& v : img) v = std::clamp(v, 0.0, 1.0);
    d.items.push_back(std::move(img));
  }
  return d;
}

/// Two interleaved spiral arms in the plane, labels 0/1.
inline Dataset gen_spirals(std::size_t count, std::uint64_t seed, double noise = 0.05, double turns = 0.75) {
  SeededRng rng(seed);
  Dataset d;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t label = k % 2;
    const double t = rng.uniform(0.15, 1.0);
    const double angle = 2.0 * std::numbers::pi * turns * t + std::numbers::pi * static_cast<double>(label);
    const double nx = rng.normal(), ny = rng.normal();
    d.items.push_back({2.0 * t * std::cos(angle) + noise * nx, 2.0 * t * std::sin(angle) + noise * ny});
    d.labels.push_back(label);
  }
  return d;
}

struct LinrealSpec {
  std::size_t feature_dim = 4;
  std::size_t task_dim = 2;
  std::size_t support = 5;
  std::size_t query = 10;
};

/// Tasks labelled by 1[sᵀ R t > 0] with a shared random R and a planted
/// per-task vector t.
inline std::vector<MetaTask> gen_linreal_tasks(std::size_t count, std::uint64_t seed, const LinrealSpec& spec = {}) {
  SeededRng rng(seed);
  const Matrix R = gaussian_matrix(rng, spec.feature_dim, spec.task_dim);
  std::vector<MetaTask> tasks;
  for (std::size_t k = 0; k < count; ++k) {
    MetaTask t;
    t.task_dim = spec.task_dim;
    t.classes = 2;
    t.planted = rng.normal_vector(spec.task_dim);
    const Vector w = matvec(R, t.planted);
    auto draw = [&](LabeledSet& set, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        Vector s = rng.normal_vector(spec.feature_dim);
        set.labels.push_back(dot(s, w) > 0.0 ? 1 : 0);
        set.inputs.push_back(std::move(s));
      }
    };
    draw(t.support, spec.support);
    draw(t.query, spec.query);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

enum class SyntheticKind { kBlobs, kSpirals, kLinrealTasks };

struct SyntheticData {
  Dataset data;
  std::vector<MetaTask> tasks;
};

inline SyntheticData gen_synthetic(SyntheticKind kind, std::size_t count, std::uint64_t seed) {
  switch (kind) {
    case SyntheticKind::kBlobs: return {gen_blobs(count, seed), {}};
    case SyntheticKind::kSpirals: return {gen_spirals(count, seed), {}};
    case SyntheticKind::kLinrealTasks: return {{}, gen_linreal_tasks(count, seed)};
  }
  return {};
}

}  // namespace jiio
