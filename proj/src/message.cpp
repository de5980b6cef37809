#include "cellgan/message.hpp"

namespace cellgan::transport {

std::string to_string(Tag tag) {
  switch (tag) {
    case Tag::RunTask: return "RUN_TASK";
    case Tag::GetStatus: return "GET_STATUS";
    case Tag::StatusReport: return "STATUS_REPORT";
    case Tag::Heartbeat: return "HEARTBEAT";
    case Tag::HeartbeatAck: return "HEARTBEAT_ACK";
    case Tag::CenterExchange: return "CENTER_EXCHANGE";
    case Tag::FinalResult: return "FINAL_RESULT";
    case Tag::Shutdown: return "SHUTDOWN";
    case Tag::Config: return "CONFIG";
    case Tag::PeerFailed: return "PEER_FAILED";
  }
  return "?";
}

std::optional<Tag> tag_from_byte(std::uint8_t b) {
  if (b >= 1 && b <= 10) return static_cast<Tag>(b);
  return std::nullopt;
}

bool is_control(Tag tag) { return tag != Tag::CenterExchange && tag != Tag::FinalResult; }

Bytes encode_frame(const Message& msg) {
  if (msg.payload.size() > kMaxFramePayload) throw UsageError("payload exceeds frame limit");
  ByteWriter w;
  w.u32_be(static_cast<std::uint32_t>(msg.payload.size()));
  w.u8(static_cast<std::uint8_t>(msg.tag));
  w.u32_be(static_cast<std::uint32_t>(msg.sender));
  w.u32_be(static_cast<std::uint32_t>(msg.epoch));
  w.bytes(msg.payload);
  return w.take();
}

FrameHeader decode_frame_header(std::span<const std::uint8_t> header) {
  ByteReader r(header);
  FrameHeader h{};
  h.length = r.u32_be();
  const auto raw_tag = r.u8();
  const auto tag = tag_from_byte(raw_tag);
  if (!tag) throw DecodeError("unknown message tag " + std::to_string(raw_tag));
  h.tag = *tag;
  h.sender = static_cast<int>(r.u32_be());
  h.epoch = static_cast<int>(r.u32_be());
  if (h.length > kMaxFramePayload) throw DecodeError("frame length " + std::to_string(h.length) + " over limit");
  return h;
}

Message decode_frame(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeaderSize) throw DecodeError("truncated frame header");
  const auto h = decode_frame_header(frame.first(kFrameHeaderSize));
  if (frame.size() - kFrameHeaderSize != h.length)
    throw DecodeError("frame length " + std::to_string(h.length) + " does not match " +
                      std::to_string(frame.size() - kFrameHeaderSize) + " payload bytes");
  auto body = frame.subspan(kFrameHeaderSize);
  return Message{h.tag, h.sender, h.epoch, Bytes(body.begin(), body.end())};
}

std::string to_string(WorkerState s) {
  switch (s) {
    case WorkerState::Inactive: return "INACTIVE";
    case WorkerState::Processing: return "PROCESSING";
    case WorkerState::Finished: return "FINISHED";
    case WorkerState::Failed: return "FAILED";
  }
  return "?";
}

namespace {
void expect_done(const ByteReader& r, const char* what) {
  if (!r.done()) throw DecodeError(std::string("trailing bytes in ") + what + " payload");
}
}  // namespace

Bytes encode_coord(const grid::CellCoord& c) {
  ByteWriter w;
  w.u32_be(static_cast<std::uint32_t>(c.row));
  w.u32_be(static_cast<std::uint32_t>(c.col));
  return w.take();
}

grid::CellCoord decode_coord(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  grid::CellCoord c{static_cast<int>(r.u32_be()), static_cast<int>(r.u32_be())};
  expect_done(r, "coordinate");
  return c;
}

Bytes encode_state(WorkerState s) { return Bytes{static_cast<std::uint8_t>(s)}; }

WorkerState decode_state(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const auto b = r.u8();
  expect_done(r, "status");
  if (b > 3) throw DecodeError("unknown worker state " + std::to_string(b));
  return static_cast<WorkerState>(b);
}

Bytes encode_rank(int rank) {
  ByteWriter w;
  w.u32_be(static_cast<std::uint32_t>(rank));
  return w.take();
}

int decode_rank(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const int rank = static_cast<int>(r.u32_be());
  expect_done(r, "rank");
  return rank;
}

Bytes encode_center_exchange(const CenterExchange& c) {
  ByteWriter w;
  w.u32_be(static_cast<std::uint32_t>(c.source.row));
  w.u32_be(static_cast<std::uint32_t>(c.source.col));
  w.blob(c.generator);
  w.blob(c.discriminator);
  return w.take();
}

CenterExchange decode_center_exchange(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  CenterExchange c;
  c.source.row = static_cast<int>(r.u32_be());
  c.source.col = static_cast<int>(r.u32_be());
  auto g = r.blob();
  c.generator.assign(g.begin(), g.end());
  auto d = r.blob();
  c.discriminator.assign(d.begin(), d.end());
  expect_done(r, "center exchange");
  return c;
}

}  // namespace cellgan::transport
