#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cellgan/grid.hpp"
#include "cellgan/wire.hpp"

namespace cellgan::transport {

enum class Tag : std::uint8_t {
  RunTask = 1,
  GetStatus = 2,
  StatusReport = 3,
  Heartbeat = 4,
  HeartbeatAck = 5,
  CenterExchange = 6,
  FinalResult = 7,
  Shutdown = 8,
  Config = 9,
  PeerFailed = 10,
};

std::string to_string(Tag tag);
std::optional<Tag> tag_from_byte(std::uint8_t b);

/// Control tags travel on a queue separate from CENTER_EXCHANGE and
/// FINAL_RESULT so heartbeats are never stuck behind model traffic.
bool is_control(Tag tag);

struct Message {
  Tag tag = Tag::GetStatus;
  int sender = 0;
  int epoch = 0;
  Bytes payload;

  bool operator==(const Message&) const = default;
};

inline constexpr std::size_t kFrameHeaderSize = 13;
inline constexpr std::uint32_t kMaxFramePayload = 1u << 30;

/// length(4 BE) | tag(1) | sender(4 BE) | epoch(4 BE) | payload
Bytes encode_frame(const Message& msg);

struct FrameHeader {
  std::uint32_t length;
  Tag tag;
  int sender;
  int epoch;
};
FrameHeader decode_frame_header(std::span<const std::uint8_t> header);
Message decode_frame(std::span<const std::uint8_t> frame);

enum class WorkerState : std::uint8_t { Inactive = 0, Processing = 1, Finished = 2, Failed = 3 };
std::string to_string(WorkerState s);

// Tag-specific payloads.

Bytes encode_coord(const grid::CellCoord& c);
grid::CellCoord decode_coord(std::span<const std::uint8_t> payload);

Bytes encode_state(WorkerState s);
WorkerState decode_state(std::span<const std::uint8_t> payload);

Bytes encode_rank(int rank);
int decode_rank(std::span<const std::uint8_t> payload);

struct CenterExchange {
  grid::CellCoord source;
  Bytes generator;      // serialized parameters
  Bytes discriminator;  // serialized parameters

  bool operator==(const CenterExchange&) const = default;
};
Bytes encode_center_exchange(const CenterExchange& c);
CenterExchange decode_center_exchange(std::span<const std::uint8_t> payload);

}  // namespace cellgan::transport
