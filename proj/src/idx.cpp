#include "fedsim/idx.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace fedsim {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t off) {
  return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
         (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

IdxContent parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4)
    throw ParseError("idx: truncated header at byte 0 (need 4 bytes for magic, have " +
                     std::to_string(bytes.size()) + ")");
  IdxContent c;
  c.magic = read_be32(bytes, 0);
  std::size_t ndims;
  if (c.magic == 0x00000803u) {
    ndims = 3;
  } else if (c.magic == 0x00000801u) {
    ndims = 1;
  } else {
    throw ParseError("idx: bad magic " + hex32(c.magic) + " at byte 0");
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header)
    throw ParseError("idx: truncated header at byte " +
                     std::to_string(bytes.size()) + " (need " +
                     std::to_string(header) + " bytes)");
  std::size_t expected = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    c.dims.push_back(read_be32(bytes, 4 + 4 * i));
    expected *= c.dims.back();
  }
  const std::size_t expected_end = header + expected;
  if (bytes.size() < expected_end)
    throw ParseError("idx: payload truncated at byte " +
                     std::to_string(bytes.size()) + " (expected " +
                     std::to_string(expected_end) + " bytes for " +
                     std::to_string(c.dims[0]) + " records)");
  c.payload.assign(bytes.begin() + header, bytes.begin() + expected_end);
  return c;
}

Tensor idx_to_images(const IdxContent& content) {
  if (!content.is_images())
    throw ParseError("idx: content is not an image file");
  const std::size_t n = content.dims[0], h = content.dims[1], w = content.dims[2];
  Tensor t({n, 1, h, w});
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = double(content.payload[i]) / 255.0;
  return t;
}

std::vector<int> idx_to_labels(const IdxContent& content) {
  if (!content.is_labels())
    throw ParseError("idx: content is not a label file");
  std::vector<int> out(content.payload.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = int(content.payload[i]);
  return out;
}

std::vector<std::uint8_t> serialize_idx_images(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 1)
    throw UsageError("idx serializer expects N x 1 x H x W images");
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.numel());
  write_be32(out, 0x00000803u);
  write_be32(out, std::uint32_t(images.dim(0)));
  write_be32(out, std::uint32_t(images.dim(2)));
  write_be32(out, std::uint32_t(images.dim(3)));
  for (double v : images.data)
    out.push_back(std::uint8_t(std::lround(v * 255.0)));
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(const std::vector<int>& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, 0x00000801u);
  write_be32(out, std::uint32_t(labels.size()));
  for (int v : labels) out.push_back(std::uint8_t(v));
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

Dataset load_fashion_mnist(const std::string& dir, const std::string& prefix) {
  const auto images_bytes =
      read_file_bytes(dir + "/" + prefix + "-images-idx3-ubyte");
  const auto labels_bytes =
      read_file_bytes(dir + "/" + prefix + "-labels-idx1-ubyte");
  const IdxContent imgs = parse_idx(images_bytes);
  const IdxContent labs = parse_idx(labels_bytes);
  Dataset d;
  d.images = idx_to_images(imgs);
  d.labels = idx_to_labels(labs);
  d.provenance = "fashion-mnist";
  d.num_classes = 10;
  if (d.images.dim(0) != d.labels.size())
    throw ParseError("fashion-mnist: image/label counts differ");
  for (int y : d.labels)
    if (y < 0 || y >= 10) throw ParseError("fashion-mnist: label out of range");
  return d;
}

}  // namespace fedsim
