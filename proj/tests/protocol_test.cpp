#include "replaynet/wire/protocol.hpp"

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "message_gen.hpp"

namespace replaynet::wire {
namespace {

using Bytes = std::vector<std::uint8_t>;

Message DecodeWhole(const Bytes& bytes, std::uint32_t dim) {
  auto r = decode(bytes, dim);
  EXPECT_TRUE(r.complete());
  EXPECT_EQ(r.consumed, bytes.size());
  return *r.message;
}

TEST(Encode, StatsReqIsHeaderOnly) {
  Bytes frame = encode(StatsReq{});
  ASSERT_EQ(frame.size(), 12u);
  EXPECT_EQ(frame[0], 'D');
  EXPECT_EQ(frame[1], 'R');
  EXPECT_EQ(frame[2], 'P');
  EXPECT_EQ(frame[3], 'L');
  EXPECT_EQ(frame[4], 1);
  EXPECT_EQ(frame[5], 0x50);
  for (int i = 6; i < 12; ++i) EXPECT_EQ(frame[i], 0) << i;
}

TEST(Encode, HeaderIsLittleEndian) {
  Bytes frame = encode(SampleReq{0x01020304});
  ASSERT_EQ(frame.size(), 16u);
  EXPECT_EQ(frame[8], 4);  // payload_len = 4
  EXPECT_EQ(frame[9], 0);
  EXPECT_EQ(frame[12], 0x04);
  EXPECT_EQ(frame[15], 0x01);
}

TEST(Encode, PushRecordLayout) {
  PushExperiences m;
  m.records.push_back(PushRecord{2.0, Experience{{1.0f, 2.0f}, 3, -1.0f, {4.0f, 5.0f}}});
  Bytes frame = encode(m);
  ASSERT_EQ(frame.size(), 12u + 4 + push_record_size(2));
  ASSERT_EQ(push_record_size(2), 32u);
  // count
  EXPECT_EQ(frame[12], 1);
  // priority 2.0 as f64 LE: 0x4000000000000000
  EXPECT_EQ(frame[16 + 7], 0x40);
  // action
  EXPECT_EQ(frame[24], 3);
  // reward -1.0f = 0xBF800000
  EXPECT_EQ(frame[31], 0xBF);
  EXPECT_EQ(frame[30], 0x80);
}

TEST(Encode, FullFramePushSize) {
  // 200 experiences of 4x84x84 float32 frames.
  const std::uint32_t dim = 28224;
  ASSERT_EQ(push_record_size(dim), 8u + 4 + 4 + 2 * 4 * 28224);
  PushExperiences m;
  Experience e;
  e.state.assign(dim, 0.5f);
  e.next_state.assign(dim, 0.25f);
  for (int i = 0; i < 200; ++i) m.records.push_back(PushRecord{1.0, e});
  Bytes frame = encode(m);
  EXPECT_EQ(frame.size(), 12u + 4 + 200u * 225808u);
  EXPECT_EQ(frame.size() - 16, 45161600u);  // ~45.2 MB payload
  auto back = DecodeWhole(frame, dim);
  EXPECT_EQ(std::get<PushExperiences>(back), m);
}

TEST(Encode, RejectsMixedStateDims) {
  PushExperiences m;
  m.records.push_back(PushRecord{1.0, Experience{{1.0f}, 0, 0.0f, {1.0f}}});
  m.records.push_back(PushRecord{1.0, Experience{{1.0f, 2.0f}, 0, 0.0f, {1.0f, 2.0f}}});
  EXPECT_THROW(encode(m), EncodeError);
}

TEST(Encode, OversizePayloadIsEncodeError) {
  SetParams m;
  m.blob.assign(kMaxPayload - 12 + 1, 0);
  EXPECT_THROW(encode(m), EncodeError);
}

TEST(Encode, MaximumSizeBlobRoundTrips) {
  ParamsBlob m;
  m.param_version = 7;
  m.blob.assign(kMaxPayload - 12, 0xAB);
  m.blob.front() = 1;
  m.blob.back() = 2;
  Bytes frame = encode(m);
  EXPECT_EQ(frame.size(), kHeaderSize + kMaxPayload);
  EXPECT_EQ(std::get<ParamsBlob>(DecodeWhole(frame, 0)), m);
}

TEST(Decode, BadMagicIsProtocolError) {
  Bytes frame = encode(StatsReq{});
  frame[0] = 'X';
  frame[1] = 'X';
  frame[2] = 'X';
  frame[3] = 'X';
  EXPECT_THROW(decode(frame, 0), ProtocolError);
  // Even a partial header is rejected once a magic byte is wrong.
  EXPECT_THROW(decode(Bytes{'X'}, 0), ProtocolError);
}

TEST(Decode, BadVersionIsProtocolError) {
  Bytes frame = encode(StatsReq{});
  frame[4] = 2;
  EXPECT_THROW(decode(frame, 0), ProtocolError);
}

TEST(Decode, OversizeLengthIsProtocolError) {
  Bytes frame = encode(StatsReq{});
  frame[11] = 0x20;  // 512 MiB
  EXPECT_THROW(decode(frame, 0), ProtocolError);
}

TEST(Decode, TruncatedHeaderNeedsMore) {
  Bytes frame = encode(StatsReq{});
  auto r = decode(std::span(frame).first(3), 0);
  EXPECT_FALSE(r.complete());
  EXPECT_EQ(r.need_more, 9u);
}

TEST(Decode, TruncatedPayloadNeedsMore) {
  Bytes frame = encode(PullParams{5});
  auto r = decode(std::span(frame).first(15), 0);
  EXPECT_FALSE(r.complete());
  EXPECT_EQ(r.need_more, frame.size() - 15);
}

TEST(Decode, CountExceedsRecordsIsMalformed) {
  const std::uint32_t dim = 3;
  testing::MessageGen gen(1, dim);
  PushExperiences m;
  for (int i = 0; i < 9; ++i) m.records.push_back(PushRecord{1.0, gen.experience()});
  Bytes frame = encode(m);
  ASSERT_EQ(frame.size(), 12 + 4 + 9 * push_record_size(dim));
  frame[12] = 10;  // claim ten records, payload holds nine
  EXPECT_THROW(decode(frame, dim), MalformedError);
}

TEST(Decode, WrongStateDimIsMalformed) {
  testing::MessageGen gen(2, 4);
  PushExperiences m{gen.push_records(3)};
  if (m.records.empty()) m.records.push_back(PushRecord{1.0, gen.experience()});
  Bytes frame = encode(m);
  EXPECT_THROW(decode(frame, 5), MalformedError);
}

TEST(Decode, TrailingBytesAreMalformed) {
  Bytes frame = encode(SampleReq{3});
  frame.push_back(0);
  frame[8] = 5;
  EXPECT_THROW(decode(frame, 0), MalformedError);
}

TEST(Decode, UnknownTypeIsProtocolError) {
  Bytes frame = encode(StatsReq{});
  frame[5] = 0x66;
  EXPECT_THROW(decode(frame, 0), ProtocolError);
}

TEST(RoundTrip, EveryTypeRandomized) {
  for (std::uint32_t dim : {0u, 1u, 7u, 64u}) {
    testing::MessageGen gen(dim + 100, dim);
    for (int i = 0; i < 1000; ++i) {
      Message m = gen.make(i % testing::kMessageKinds);
      Bytes frame = encode(m);
      EXPECT_EQ(DecodeWhole(frame, dim), m) << type_name(type_of(m));
    }
  }
}

TEST(StreamDecoder, ByteByByteMatchesWhole) {
  testing::MessageGen gen(5, 6);
  for (int i = 0; i < 200; ++i) {
    Message m = gen.make(i % testing::kMessageKinds);
    Bytes frame = encode(m);
    StreamDecoder decoder(6);
    std::optional<Message> got;
    for (std::size_t b = 0; b < frame.size(); ++b) {
      EXPECT_FALSE(got.has_value());
      decoder.feed(std::span(frame).subspan(b, 1));
      got = decoder.next();
    }
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ(*got, m);
    EXPECT_EQ(decoder.buffered(), 0u);
  }
}

TEST(StreamDecoder, ConcatenatedFramesAnyChunking) {
  testing::MessageGen gen(6, 3);
  std::vector<Message> sent;
  Bytes stream;
  for (int i = 0; i < 300; ++i) {
    sent.push_back(gen.any());
    encode_into(sent.back(), stream);
  }
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    StreamDecoder decoder(3);
    std::vector<Message> received;
    std::size_t pos = 0;
    while (pos < stream.size()) {
      std::size_t n = std::min<std::size_t>(1 + rng() % 97, stream.size() - pos);
      decoder.feed(std::span(stream).subspan(pos, n));
      pos += n;
      while (auto m = decoder.next()) received.push_back(std::move(*m));
    }
    EXPECT_EQ(received, sent);
    EXPECT_EQ(decoder.buffered(), 0u);
  }
}

TEST(StreamDecoder, DoesNotReadPastPayload) {
  Bytes stream = encode(PullParams{1});
  Bytes second = encode(PullParams{2});
  stream.insert(stream.end(), second.begin(), second.begin() + 5);
  StreamDecoder decoder(0);
  decoder.feed(stream);
  auto first = decoder.next();
  ASSERT_TRUE(first);
  EXPECT_EQ(std::get<PullParams>(*first).min_version, 1u);
  EXPECT_EQ(decoder.buffered(), 5u);
  EXPECT_FALSE(decoder.next());
  EXPECT_EQ(decoder.need_more(), 7u);
}

}  // namespace
}  // namespace replaynet::wire
