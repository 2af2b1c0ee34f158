#include "apa/bridge.h"

#include <cstdlib>
#include <cstring>

#include "apa/error.h"
#include "apa/subprocess.h"

namespace apa {

namespace bridge {

namespace {

constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;

std::size_t payload_floats(const std::string& magic, const nlohmann::json& header) {
  if (magic == "APHI") return 0;
  if (magic == "APRQ") return header.at("num_samples").get<std::size_t>();
  if (magic == "APRS") {
    const auto dim = header.at("dim").get<std::size_t>();
    const auto frames = header.value("frames", std::size_t{1});
    return dim * frames;
  }
  throw Error(ErrorCode::BridgeError, "protocol: unknown frame magic '" + magic + "'");
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const std::string& magic, const nlohmann::json& header,
                                       std::span<const float> payload) {
  const std::string json = header.dump();
  const auto len = static_cast<std::uint32_t>(json.size());
  std::vector<std::uint8_t> out(4 + 4 + json.size() + payload.size_bytes());
  std::memcpy(out.data(), magic.data(), 4);
  std::memcpy(out.data() + 4, &len, 4);
  std::memcpy(out.data() + 8, json.data(), json.size());
  if (!payload.empty()) std::memcpy(out.data() + 8 + json.size(), payload.data(), payload.size_bytes());
  return out;
}

std::optional<std::pair<Frame, std::size_t>> try_parse_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) return std::nullopt;
  Frame frame;
  frame.magic.assign(reinterpret_cast<const char*>(bytes.data()), 4);
  std::uint32_t len;
  std::memcpy(&len, bytes.data() + 4, 4);
  if (len > kMaxHeaderBytes) throw Error(ErrorCode::BridgeError, "protocol: oversized header");
  if (bytes.size() < 8 + len) return std::nullopt;
  std::size_t floats = 0;
  try {
    frame.header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    floats = payload_floats(frame.magic, frame.header);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BridgeError, std::string("protocol: bad header: ") + e.what());
  }
  const std::size_t total = 8 + len + floats * sizeof(float);
  if (bytes.size() < total) return std::nullopt;
  frame.payload.resize(floats);
  if (floats > 0) std::memcpy(frame.payload.data(), bytes.data() + 8 + len, floats * sizeof(float));
  return std::make_pair(std::move(frame), total);
}

double default_timeout_s() {
  if (const char* env = std::getenv("APA_BRIDGE_TIMEOUT_S")) {
    char* end = nullptr;
    const double v = std::strtod(env, &end);
    if (end != env && v > 0.0) return v;
  }
  return 60.0;
}

}  // namespace bridge

namespace {

Subprocess::Clock::time_point deadline_after(double seconds) {
  return Subprocess::Clock::now() + std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

// Counts complete frames at the front of a buffer without consuming them.
std::size_t complete_frames(const std::vector<std::uint8_t>& bytes) {
  std::size_t count = 0;
  std::span<const std::uint8_t> rest(bytes);
  while (auto parsed = bridge::try_parse_frame(rest)) {
    ++count;
    rest = rest.subspan(parsed->second);
  }
  return count;
}

}  // namespace

BridgeEmbedder::BridgeEmbedder(const std::string& command, double timeout_s)
    : process_(std::make_unique<Subprocess>(command, ErrorCode::BridgeError)), timeout_s_(timeout_s) {
  process_->read_until(inbox_, [](const auto& bytes) { return complete_frames(bytes) >= 1; },
                       deadline_after(timeout_s_));
  auto parsed = bridge::try_parse_frame(inbox_);
  auto& [hello, used] = *parsed;
  inbox_.erase(inbox_.begin(), inbox_.begin() + static_cast<std::ptrdiff_t>(used));
  if (hello.magic != "APHI") throw Error(ErrorCode::BridgeError, "protocol: expected APHI handshake");
  try {
    spec_.id = "bridge:" + hello.header.at("embedder_id").get<std::string>();
    spec_.dim = hello.header.at("dim").get<int>();
    spec_.input_rate = hello.header.at("input_rate").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BridgeError, std::string("protocol: bad handshake: ") + e.what());
  }
  if (spec_.dim <= 0 || spec_.input_rate <= 0) {
    throw Error(ErrorCode::BridgeError, "protocol: handshake dim and input_rate must be positive");
  }
}

BridgeEmbedder::~BridgeEmbedder() = default;

EmbeddingMatrix BridgeEmbedder::embed_batch(std::span<const AudioBuffer> windows) {
  if (broken_) throw Error(ErrorCode::BridgeError, "bridge unusable after an earlier failure");
  EmbeddingMatrix out(static_cast<Eigen::Index>(windows.size()), spec_.dim);
  if (windows.empty()) return out;

  std::vector<std::uint8_t> requests;
  const std::uint64_t first_id = next_id_;
  for (const auto& w : windows) {
    if (w.sample_rate != spec_.input_rate) {
      throw Error(ErrorCode::InvalidArgument, "window rate differs from bridge input rate");
    }
    const nlohmann::json header{{"id", next_id_++}, {"sample_rate", w.sample_rate}, {"num_samples", w.size()}};
    const auto frame = bridge::encode_frame("APRQ", header, w.samples);
    requests.insert(requests.end(), frame.begin(), frame.end());
  }

  try {
    process_->exchange(requests, inbox_,
                       [n = windows.size()](const auto& bytes) { return complete_frames(bytes) >= n; },
                       deadline_after(timeout_s_));
  } catch (const Error&) {
    broken_ = true;
    throw;
  }

  std::span<const std::uint8_t> rest(inbox_);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    auto parsed = bridge::try_parse_frame(rest);
    auto& [frame, used] = *parsed;
    rest = rest.subspan(used);
    if (frame.magic != "APRS") {
      broken_ = true;
      throw Error(ErrorCode::BridgeError, "protocol: expected APRS, got " + frame.magic);
    }
    std::uint64_t id = 0;
    int dim = 0;
    try {
      id = frame.header.at("id").get<std::uint64_t>();
      dim = frame.header.at("dim").get<int>();
    } catch (const nlohmann::json::exception& e) {
      broken_ = true;
      throw Error(ErrorCode::BridgeError, std::string("protocol: bad response header: ") + e.what());
    }
    if (id != first_id + i) {
      broken_ = true;
      throw Error(ErrorCode::BridgeError, "protocol: response id " + std::to_string(id) + " where " +
                                              std::to_string(first_id + i) + " was expected");
    }
    if (dim != spec_.dim) {
      broken_ = true;
      throw Error(ErrorCode::DimensionMismatch,
                  "bridge declared " + std::to_string(spec_.dim) + " dims, replied " + std::to_string(dim));
    }
    const auto v = time_average(frame.payload, dim);
    out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXf>(v.data(), dim);
  }
  inbox_.erase(inbox_.begin(), inbox_.begin() + static_cast<std::ptrdiff_t>(inbox_.size() - rest.size()));
  return out;
}

EmbeddingMatrix bridge_embed(std::span<const AudioBuffer> windows, const std::string& command) {
  BridgeEmbedder embedder(command);
  return embedder.embed_batch(windows);
}

}  // namespace apa
