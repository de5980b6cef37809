#include "cellgan/idx.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>

#include "cellgan/error.hpp"

namespace cellgan::data {

namespace {

std::string hex_byte(unsigned v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%02X", v & 0xFFu);
  return buf;
}

}  // namespace

std::size_t IdxTensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4) throw DecodeError("IDX: truncated magic");
  const std::uint8_t zero0 = r.u8();
  const std::uint8_t zero1 = r.u8();
  const std::uint8_t type = r.u8();
  const std::uint8_t ndims = r.u8();
  if (zero0 != 0 || zero1 != 0) throw DecodeError("IDX: bad magic, leading bytes must be zero");
  if (type != kIdxUnsignedByte) throw DecodeError("IDX: unsupported type byte " + hex_byte(type));
  if (ndims < 1 || ndims > 3)
    throw DecodeError("IDX: unsupported dimension count " + std::to_string(ndims) + " (magic byte " +
                      hex_byte(ndims) + ")");

  IdxTensor t;
  std::uint64_t count = 1;
  for (int i = 0; i < ndims; ++i) {
    if (r.remaining() < 4) throw DecodeError("IDX: truncated dimension header");
    const std::uint32_t d = r.u32_be();
    t.dims.push_back(d);
    count *= d;
    if (count > std::numeric_limits<std::uint32_t>::max())
      throw DecodeError("IDX: dimension product overflows");
  }
  if (r.remaining() < count)
    throw DecodeError("IDX: truncated body, expected " + std::to_string(count) + " bytes, got " +
                      std::to_string(r.remaining()));
  if (r.remaining() > count)
    throw DecodeError("IDX: " + std::to_string(r.remaining() - count) + " trailing bytes");
  auto body = r.bytes(static_cast<std::size_t>(count));
  t.data.assign(body.begin(), body.end());
  return t;
}

Bytes encode_idx(const IdxTensor& tensor) {
  if (tensor.dims.empty() || tensor.dims.size() > 3) throw UsageError("IDX: need 1 to 3 dimensions");
  if (tensor.element_count() != tensor.data.size()) throw UsageError("IDX: data size does not match dims");
  ByteWriter w;
  w.u8(0);
  w.u8(0);
  w.u8(kIdxUnsignedByte);
  w.u8(static_cast<std::uint8_t>(tensor.dims.size()));
  for (auto d : tensor.dims) w.u32_be(d);
  w.bytes(tensor.data);
  return w.take();
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

IdxTensor load_idx(const std::filesystem::path& path) { return parse_idx(read_file(path)); }

}  // namespace cellgan::data
