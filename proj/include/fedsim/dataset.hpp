#pragma once

#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

// Ordered label subset with its reverse index (global id -> local row).
struct LabelSet {
  std::vector<int> labels;   // distinct global ids, order defines local rows
  std::vector<int> reverse;  // size num_global, -1 where absent
  int num_global = 0;

  static LabelSet full(int num_global) {
    std::vector<int> ids(num_global);
    for (int i = 0; i < num_global; ++i) ids[i] = i;
    return of(std::move(ids), num_global);
  }

  static LabelSet of(std::vector<int> ids, int num_global) {
    LabelSet s;
    s.labels = std::move(ids);
    s.num_global = num_global;
    s.reverse.assign(num_global, -1);
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      const int g = s.labels[i];
      if (g < 0 || g >= num_global)
        throw ConfigError("label id out of range");
      if (s.reverse[g] != -1)
        throw ConfigError("duplicate label in label set");
      s.reverse[g] = int(i);
    }
    return s;
  }

  int size() const { return int(labels.size()); }
  bool contains(int global) const {
    return global >= 0 && global < num_global && reverse[global] != -1;
  }
  // Local row for a global id, -1 if absent.
  int local(int global) const {
    return (global >= 0 && global < num_global) ? reverse[global] : -1;
  }
  bool is_identity_full() const {
    if (size() != num_global) return false;
    for (int i = 0; i < num_global; ++i)
      if (labels[i] != i) return false;
    return true;
  }
};

inline bool operator==(const LabelSet& a, const LabelSet& b) {
  return a.labels == b.labels && a.num_global == b.num_global;
}

struct Dataset {
  Tensor images;            // N x input shape
  std::vector<int> labels;  // one id per sample
  std::string provenance;   // fashion-mnist | cifar10 | synthetic
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }

  Dataset subset(const std::vector<int>& indices) const {
    Dataset out;
    out.provenance = provenance;
    out.num_classes = num_classes;
    const std::size_t stride = size() == 0 ? 0 : images.numel() / size();
    std::vector<std::size_t> shape = images.shape;
    shape[0] = indices.size();
    out.images = Tensor(std::move(shape));
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const std::size_t src = std::size_t(indices[i]);
      for (std::size_t j = 0; j < stride; ++j)
        out.images[i * stride + j] = images[src * stride + j];
      out.labels.push_back(labels[src]);
    }
    return out;
  }

  // Gathers a batch of rows plus their labels.
  void gather(const int* indices, std::size_t count, Tensor& batch,
              std::vector<int>& batch_labels) const {
    const std::size_t stride = images.numel() / size();
    std::vector<std::size_t> shape = images.shape;
    shape[0] = count;
    batch = Tensor(std::move(shape));
    batch_labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = std::size_t(indices[i]);
      for (std::size_t j = 0; j < stride; ++j)
        batch[i * stride + j] = images[src * stride + j];
      batch_labels[i] = labels[src];
    }
  }
};

}  // namespace fedsim
