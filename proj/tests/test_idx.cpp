#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/idx.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(std::uint8_t(x >> 24));
  v.push_back(std::uint8_t(x >> 16));
  v.push_back(std::uint8_t(x >> 8));
  v.push_back(std::uint8_t(x));
}

// Handcrafted two-record golden fixtures.
std::vector<std::uint8_t> golden_images() {
  std::vector<std::uint8_t> bytes;
  push_be32(bytes, 0x00000803u);
  push_be32(bytes, 2);  // two images
  push_be32(bytes, 2);  // 2 rows
  push_be32(bytes, 3);  // 3 cols
  for (std::uint8_t px : {0, 51, 102, 153, 204, 255, 10, 20, 30, 40, 50, 60})
    bytes.push_back(px);
  return bytes;
}

std::vector<std::uint8_t> golden_labels() {
  std::vector<std::uint8_t> bytes;
  push_be32(bytes, 0x00000801u);
  push_be32(bytes, 2);
  bytes.push_back(7);
  bytes.push_back(1);
  return bytes;
}

}  // namespace

TEST_CASE("golden image fixture parses to exact expected tensors") {
  const auto content = parse_idx(golden_images());
  REQUIRE(content.is_images());
  CHECK(content.dims == std::vector<std::uint32_t>{2, 2, 3});
  const Tensor images = idx_to_images(content);
  CHECK(images.shape == std::vector<std::size_t>{2, 1, 2, 3});
  const double expected[12] = {0.0 / 255,   51.0 / 255,  102.0 / 255,
                               153.0 / 255, 204.0 / 255, 255.0 / 255,
                               10.0 / 255,  20.0 / 255,  30.0 / 255,
                               40.0 / 255,  50.0 / 255,  60.0 / 255};
  for (int i = 0; i < 12; ++i) CHECK(images[i] == expected[i]);
}

TEST_CASE("golden label fixture parses exactly") {
  const auto content = parse_idx(golden_labels());
  REQUIRE(content.is_labels());
  CHECK(idx_to_labels(content) == std::vector<int>{7, 1});
}

TEST_CASE("zero-record file parses to an empty part") {
  std::vector<std::uint8_t> bytes;
  push_be32(bytes, 0x00000803u);
  push_be32(bytes, 0);
  push_be32(bytes, 28);
  push_be32(bytes, 28);
  const auto content = parse_idx(bytes);
  CHECK(content.payload.empty());
  CHECK(idx_to_images(content).numel() == 0);
}

TEST_CASE("truncated payload reports the computed offset") {
  std::vector<std::uint8_t> bytes;
  push_be32(bytes, 0x00000803u);
  push_be32(bytes, 10);  // claims 10 images
  push_be32(bytes, 2);
  push_be32(bytes, 3);
  for (int i = 0; i < 9 * 6; ++i) bytes.push_back(0);  // only 9 present
  try {
    parse_idx(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("70") != std::string::npos);  // 16 + 9*6 bytes present
    CHECK(msg.find("76") != std::string::npos);  // 16 + 10*6 expected
  }
}

TEST_CASE("wrong magic is a parse error at byte 0") {
  std::vector<std::uint8_t> bytes;
  push_be32(bytes, 0x0000dead);
  push_be32(bytes, 1);
  try {
    parse_idx(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("magic") != std::string::npos);
    CHECK(msg.find("byte 0") != std::string::npos);
  }
}

TEST_CASE("idx round trip preserves tensors and labels") {
  Rng rng(77);
  const std::size_t n = 23;
  Tensor images({n, 1, 5, 4});
  for (double& v : images.data) v = double(rng.uniform_int(256)) / 255.0;
  std::vector<int> labels(n);
  for (int& y : labels) y = rng.uniform_int(10);

  const Tensor back = idx_to_images(parse_idx(serialize_idx_images(images)));
  CHECK(back == images);
  const auto labels_back =
      idx_to_labels(parse_idx(serialize_idx_labels(labels)));
  CHECK(labels_back == labels);
}
