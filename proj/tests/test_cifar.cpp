#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/cifar.hpp"

using namespace fedsim;

TEST_CASE("single all-white record") {
  std::vector<std::uint8_t> bytes(3073, 255);
  bytes[0] = 7;
  const Dataset d = parse_cifar_bin(bytes);
  CHECK(d.size() == 1);
  CHECK(d.labels[0] == 7);
  CHECK(d.images.shape == std::vector<std::size_t>{1, 3, 32, 32});
  for (double v : d.images.data) CHECK(v == 1.0);
}

TEST_CASE("empty input gives an empty dataset") {
  const Dataset d = parse_cifar_bin(std::vector<std::uint8_t>{});
  CHECK(d.size() == 0);
  CHECK(d.images.numel() == 0);
}

TEST_CASE("non-multiple length is a parse error") {
  std::vector<std::uint8_t> bytes(3073 * 2 + 1, 0);
  CHECK_THROWS_AS(parse_cifar_bin(bytes), ParseError);
}

TEST_CASE("golden two-record fixture") {
  std::vector<std::uint8_t> bytes(2 * 3073, 0);
  bytes[0] = 3;  // first record: label 3
  // First pixel of the red plane and first pixel of the blue plane.
  bytes[1] = 255;
  bytes[1 + 2048] = 51;
  bytes[3073] = 9;  // second record: label 9
  bytes[3073 + 1 + 1024] = 102;  // green plane

  const Dataset d = parse_cifar_bin(bytes);
  REQUIRE(d.size() == 2);
  CHECK(d.labels == std::vector<int>{3, 9});
  CHECK(d.images[0] == 1.0);                       // record 0, R(0,0)
  CHECK(d.images[2048] == doctest::Approx(0.2));   // record 0, B(0,0)
  CHECK(d.images[3072 + 1024] == doctest::Approx(0.4));  // record 1, G(0,0)
  CHECK(d.images[1] == 0.0);
}

TEST_CASE("bad label byte is a parse error") {
  std::vector<std::uint8_t> bytes(3073, 0);
  bytes[0] = 10;
  CHECK_THROWS_AS(parse_cifar_bin(bytes), ParseError);
}
