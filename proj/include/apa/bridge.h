/// @file bridge.h
/// @brief Framed stdio protocol to external embedders.
///
/// Every frame is: 4-byte magic | u32 header length | UTF-8 JSON header | f32 payload.
///   APHI  bridge -> engine, once at startup: {"embedder_id", "dim", "input_rate"}, no payload
///   APRQ  engine -> bridge: {"id", "sample_rate", "num_samples"}, num_samples f32 PCM
///   APRS  bridge -> engine: {"id", "dim"[, "frames"]}, frames*dim f32 (frames defaults to 1)
/// Multi-frame responses are averaged over time by the engine.

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apa/embed.h"

namespace apa {

class Subprocess;

namespace bridge {

struct Frame {
  std::string magic;
  nlohmann::json header;
  std::vector<float> payload;
};

std::vector<std::uint8_t> encode_frame(const std::string& magic, const nlohmann::json& header,
                                       std::span<const float> payload = {});

/// @brief Parses one frame from the front of @p bytes.
/// @return the frame and the number of bytes it occupied, or nullopt if more bytes are needed.
/// @throws Error(BridgeError) on a malformed frame.
std::optional<std::pair<Frame, std::size_t>> try_parse_frame(std::span<const std::uint8_t> bytes);

/// Timeout per batch: APA_BRIDGE_TIMEOUT_S if set, else 60 s.
double default_timeout_s();

}  // namespace bridge

/// @brief Embedder backed by an external process speaking the bridge protocol.
class BridgeEmbedder final : public Embedder {
 public:
  /// @brief Spawns `/bin/sh -c command` and waits for the APHI handshake.
  explicit BridgeEmbedder(const std::string& command, double timeout_s = bridge::default_timeout_s());
  ~BridgeEmbedder() override;

  const EmbedderSpec& spec() const override { return spec_; }

  /// @brief Sends one request per window and collects responses in order.
  /// @throws Error(BridgeError) on protocol violations, crashes or timeouts;
  /// Error(DimensionMismatch) when a response dim differs from the handshake.
  EmbeddingMatrix embed_batch(std::span<const AudioBuffer> windows) override;

 private:
  std::unique_ptr<Subprocess> process_;
  EmbedderSpec spec_;
  double timeout_s_;
  std::uint64_t next_id_ = 0;
  std::vector<std::uint8_t> inbox_;
  bool broken_ = false;
};

/// @brief One-shot: spawn a bridge, embed @p windows, shut it down.
EmbeddingMatrix bridge_embed(std::span<const AudioBuffer> windows, const std::string& command);

}  // namespace apa
