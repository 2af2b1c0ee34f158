// Test double for the embedder bridge protocol. Replies to each request with
// the first `dim` samples of the window (zero-padded).

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace {

struct Options {
  int dim = 8;
  int rate = 48000;
  std::string id = "echo";
  int frames = 1;
  std::string mode = "echo";  // echo | bad-ids | wrong-dim | die-after:N | bad-magic | mute
};

bool read_exact(void* dst, std::size_t n) { return std::fread(dst, 1, n, stdin) == n; }

void write_frame(const char* magic, const nlohmann::json& header, const std::vector<float>& payload) {
  const std::string json = header.dump();
  const auto len = static_cast<std::uint32_t>(json.size());
  std::fwrite(magic, 1, 4, stdout);
  std::fwrite(&len, 4, 1, stdout);
  std::fwrite(json.data(), 1, json.size(), stdout);
  if (!payload.empty()) std::fwrite(payload.data(), sizeof(float), payload.size(), stdout);
}

Options parse(int argc, char** argv) {
  Options o;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string key = argv[i];
    const std::string value = argv[i + 1];
    if (key == "--dim") o.dim = std::atoi(value.c_str());
    else if (key == "--rate") o.rate = std::atoi(value.c_str());
    else if (key == "--id") o.id = value;
    else if (key == "--frames") o.frames = std::atoi(value.c_str());
    else if (key == "--mode") o.mode = value;
    else {
      std::fprintf(stderr, "apa_echo_bridge: unknown option %s\n", key.c_str());
      std::exit(2);
    }
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const Options opt = parse(argc, argv);
  long die_after = -1;
  if (opt.mode.rfind("die-after:", 0) == 0) die_after = std::atol(opt.mode.c_str() + 10);

  write_frame("APHI", {{"embedder_id", opt.id}, {"dim", opt.dim}, {"input_rate", opt.rate}}, {});
  std::fflush(stdout);

  long served = 0;
  for (;;) {
    char magic[4];
    std::uint32_t len = 0;
    if (!read_exact(magic, 4)) return 0;  // engine closed the pipe
    if (!read_exact(&len, 4)) return 1;
    if (std::memcmp(magic, "APRQ", 4) != 0) {
      std::fprintf(stderr, "apa_echo_bridge: unexpected frame\n");
      return 1;
    }
    std::string json(len, '\0');
    if (!read_exact(json.data(), len)) return 1;
    const auto header = nlohmann::json::parse(json);
    const auto n = header.at("num_samples").get<std::size_t>();
    std::vector<float> pcm(n);
    if (n > 0 && !read_exact(pcm.data(), n * sizeof(float))) return 1;
    if (n == 0) {
      std::fprintf(stderr, "apa_echo_bridge: empty request\n");
      return 1;
    }
    if (die_after >= 0 && served >= die_after) return 3;
    if (opt.mode == "mute") continue;

    const int dim = opt.mode == "wrong-dim" ? opt.dim + 1 : opt.dim;
    std::uint64_t id = header.at("id").get<std::uint64_t>();
    if (opt.mode == "bad-ids") id += 7;

    std::vector<float> payload(static_cast<std::size_t>(dim) * opt.frames, 0.0f);
    for (int f = 0; f < opt.frames; ++f) {
      for (int d = 0; d < dim; ++d) {
        const float v = static_cast<std::size_t>(d) < n ? pcm[d] : 0.0f;
        payload[static_cast<std::size_t>(f) * dim + d] = v + static_cast<float>(f);
      }
    }
    nlohmann::json reply{{"id", id}, {"dim", dim}};
    if (opt.frames != 1) reply["frames"] = opt.frames;
    write_frame(opt.mode == "bad-magic" ? "XXXX" : "APRS", reply, payload);
    std::fflush(stdout);
    ++served;
  }
}
