#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/tensor.hpp"

namespace jiio {

enum class Provenance { kSynthetic, kIdxFile };

struct Dataset {
  std::vector<Vector> items;
  std::vector<std::size_t> labels;  // empty when unlabeled
  Provenance provenance = Provenance::kSynthetic;
  std::size_t height = 0;  // image geometry when items are images
  std::size_t width = 0;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  bool labeled() const { return !labels.empty(); }
  std::size_t dim() const { return items.empty() ? 0 : items.front().size(); }
  std::size_t classes() const {
    std::size_t c = 0;
    for (auto l : labels) c = std::max(c, l + 1);
    return c;
  }

  void validate() const {
    for (const auto& it : items) check_same_size(it.size(), dim(), "dataset item");
    require(labels.empty() || labels.size() == items.size(), ErrorCode::kDimensionMismatch,
            "label count differs from item count");
  }

  /// Items [begin, end) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t end) const {
    require(begin <= end && end <= size(), ErrorCode::kInvalidArgument, "dataset slice out of range");
    Dataset d;
    d.provenance = provenance;
    d.height = height;
    d.width = width;
    d.items.assign(items.begin() + static_cast<std::ptrdiff_t>(begin), items.begin() + static_cast<std::ptrdiff_t>(end));
    if (labeled())
      d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(end));
    return d;
  }
};

struct LabeledSet {
  std::vector<Vector> inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const { return inputs.size(); }
};

/// Support and query sets of one task; inputs are the per-example features,
/// the task vector is what the inner problem optimizes.
struct MetaTask {
  LabeledSet support;
  LabeledSet query;
  std::size_t task_dim = 0;
  std::size_t classes = 2;
  Vector planted;  // generating task vector, when known
};

}  // namespace jiio
