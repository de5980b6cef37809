#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cellgan/wire.hpp"

namespace cellgan::data {

/// Unsigned-byte IDX tensor (the MNIST container): dims outermost first.
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::size_t element_count() const;
  bool operator==(const IdxTensor&) const = default;
};

inline constexpr std::uint8_t kIdxUnsignedByte = 0x08;

/// Parses an IDX container. Accepts the unsigned-byte type (0x08) with one
/// to three dimensions; throws DecodeError on a bad magic, an unsupported
/// type byte or dimension count, overflowing dims, or a body whose length
/// differs from the product of the dims.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
Bytes encode_idx(const IdxTensor& tensor);

/// Reads a whole file; throws IoError when it cannot be opened.
Bytes read_file(const std::filesystem::path& path);
IdxTensor load_idx(const std::filesystem::path& path);

}  // namespace cellgan::data
