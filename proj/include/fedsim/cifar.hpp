#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "fedsim/dataset.hpp"

namespace fedsim {

// CIFAR-10 binary batch format: 3073-byte records, 1 label byte followed by
// 3072 channel-major pixel bytes (3 x 32 x 32).
Dataset parse_cifar_bin(std::span<const std::uint8_t> bytes);

// Reads data_batch_1..5.bin (train) or test_batch.bin (test) from dir.
Dataset load_cifar10(const std::string& dir, bool train);

}  // namespace fedsim
