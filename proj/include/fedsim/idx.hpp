#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"

namespace fedsim {

// Parsed IDX payload (FashionMNIST distribution format). Big-endian header;
// magic 0x00000803 = images (N,rows,cols), 0x00000801 = labels (N).
struct IdxContent {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  bool is_images() const { return magic == 0x00000803u; }
  bool is_labels() const { return magic == 0x00000801u; }
};

IdxContent parse_idx(std::span<const std::uint8_t> bytes);

// Pixel bytes -> N x 1 x H x W tensor normalized to [0,1].
Tensor idx_to_images(const IdxContent& content);
std::vector<int> idx_to_labels(const IdxContent& content);

std::vector<std::uint8_t> serialize_idx_images(const Tensor& images);
std::vector<std::uint8_t> serialize_idx_labels(const std::vector<int>& labels);

// Reads <prefix>-images-idx3-ubyte / <prefix>-labels-idx1-ubyte from dir,
// prefix "train" or "t10k".
Dataset load_fashion_mnist(const std::string& dir, const std::string& prefix);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

}  // namespace fedsim
