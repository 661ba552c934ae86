#include "fedsim/cifar.hpp"

#include "fedsim/idx.hpp"

namespace fedsim {

namespace {
constexpr std::size_t kRecordBytes = 3073;
constexpr std::size_t kPixelBytes = 3072;
}  // namespace

Dataset parse_cifar_bin(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kRecordBytes != 0)
    throw ParseError("cifar: length " + std::to_string(bytes.size()) +
                     " is not a multiple of " + std::to_string(kRecordBytes));
  const std::size_t n = bytes.size() / kRecordBytes;
  Dataset d;
  d.provenance = "cifar10";
  d.num_classes = 10;
  d.images = Tensor({n, 3, 32, 32});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecordBytes;
    const int label = rec[0];
    if (label > 9)
      throw ParseError("cifar: label byte " + std::to_string(label) +
                       " out of range in record " + std::to_string(i));
    d.labels[i] = label;
    double* dst = d.images.data.data() + i * kPixelBytes;
    for (std::size_t j = 0; j < kPixelBytes; ++j)
      dst[j] = double(rec[1 + j]) / 255.0;
  }
  return d;
}

Dataset load_cifar10(const std::string& dir, bool train) {
  std::vector<std::uint8_t> all;
  if (train) {
    for (int b = 1; b <= 5; ++b) {
      const auto bytes =
          read_file_bytes(dir + "/data_batch_" + std::to_string(b) + ".bin");
      all.insert(all.end(), bytes.begin(), bytes.end());
    }
  } else {
    all = read_file_bytes(dir + "/test_batch.bin");
  }
  return parse_cifar_bin(all);
}

}  // namespace fedsim
