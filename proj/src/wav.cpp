#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "apa/audio_io.h"
#include "apa/error.h"

namespace apa {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV codec assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
constexpr std::uint32_t kStreamingSize = 0xFFFFFFFF;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  bool tag_is(const char* tag) const {
    return remaining() >= 4 && std::memcmp(bytes_.data() + pos_, tag, 4) == 0;
  }

  template <typename T>
  T read() {
    if (remaining() < sizeof(T)) throw Error(ErrorCode::CorruptFile, "unexpected end of WAV header");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void skip(std::size_t n) {
    if (remaining() < n) throw Error(ErrorCode::CorruptFile, "chunk extends past end of file");
    pos_ += n;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (remaining() < n) throw Error(ErrorCode::CorruptFile, "chunk extends past end of file");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct FormatChunk {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

FormatChunk parse_format(std::span<const std::uint8_t> chunk) {
  ByteReader r(chunk);
  if (chunk.size() < 16) throw Error(ErrorCode::CorruptFile, "fmt chunk too small");
  FormatChunk f;
  f.tag = r.read<std::uint16_t>();
  f.channels = r.read<std::uint16_t>();
  f.sample_rate = r.read<std::uint32_t>();
  r.skip(4);  // byte rate
  r.skip(2);  // block align
  f.bits = r.read<std::uint16_t>();
  if (f.tag == kFormatExtensible) {
    if (chunk.size() < 26) throw Error(ErrorCode::CorruptFile, "extensible fmt chunk too small");
    r.skip(2 + 2 + 4);  // cbSize, valid bits, channel mask
    f.tag = r.read<std::uint16_t>();  // first two bytes of the subformat GUID
  }
  return f;
}

float decode_sample(const std::uint8_t* p, const FormatChunk& f) {
  if (f.tag == kFormatFloat) {
    float v;
    std::memcpy(&v, p, 4);
    return v;
  }
  if (f.bits == 16) {
    std::int16_t v;
    std::memcpy(&v, p, 2);
    return static_cast<float>(v) / 32768.0f;
  }
  // 24-bit, sign-extended from the top byte.
  std::int32_t v = static_cast<std::int32_t>(static_cast<std::uint32_t>(p[0]) << 8 |
                                             static_cast<std::uint32_t>(p[1]) << 16 |
                                             static_cast<std::uint32_t>(p[2]) << 24) >>
                   8;
  return static_cast<float>(v) / 8388608.0f;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.tag_is("RIFF")) throw Error(ErrorCode::UnsupportedFormat, "not a RIFF file");
  r.skip(4);
  r.read<std::uint32_t>();  // RIFF size, often wrong for piped output
  if (!r.tag_is("WAVE")) throw Error(ErrorCode::UnsupportedFormat, "RIFF file is not WAVE");
  r.skip(4);

  FormatChunk fmt;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  while (r.remaining() >= 8 && !have_data) {
    const bool is_fmt = r.tag_is("fmt ");
    const bool is_data = r.tag_is("data");
    r.skip(4);
    std::uint32_t size = r.read<std::uint32_t>();
    if (is_data && (size == kStreamingSize || size == 0) && r.remaining() > 0) {
      size = static_cast<std::uint32_t>(r.remaining());
    }
    if (size > r.remaining()) {
      throw Error(ErrorCode::CorruptFile, "declared chunk length exceeds file size");
    }
    auto chunk = r.take(size);
    if (size % 2 == 1 && r.remaining() > 0) r.skip(1);  // pad byte
    if (is_fmt) {
      fmt = parse_format(chunk);
      have_fmt = true;
    } else if (is_data) {
      data = chunk;
      have_data = true;
    }
  }
  if (!have_fmt || !have_data) throw Error(ErrorCode::CorruptFile, "missing fmt or data chunk");

  if (fmt.channels < 1 || fmt.channels > 2) {
    throw Error(ErrorCode::UnsupportedFormat, std::to_string(fmt.channels) + " channels");
  }
  const bool pcm_ok = fmt.tag == kFormatPcm && (fmt.bits == 16 || fmt.bits == 24);
  const bool float_ok = fmt.tag == kFormatFloat && fmt.bits == 32;
  if (!pcm_ok && !float_ok) {
    throw Error(ErrorCode::UnsupportedFormat,
                "format tag " + std::to_string(fmt.tag) + " with " + std::to_string(fmt.bits) + " bits");
  }
  if (fmt.sample_rate == 0) throw Error(ErrorCode::CorruptFile, "sample rate is zero");

  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t frames = data.size() / frame_bytes;

  AudioBuffer out;
  out.sample_rate = static_cast<int>(fmt.sample_rate);
  out.samples.resize(frames);
  const std::uint8_t* p = data.data();
  for (std::size_t i = 0; i < frames; ++i, p += frame_bytes) {
    float v = decode_sample(p, fmt);
    if (fmt.channels == 2) v = 0.5f * (v + decode_sample(p + bytes_per_sample, fmt));
    if (!std::isfinite(v)) throw Error(ErrorCode::CorruptFile, "non-finite sample");
    out.samples[i] = v;
  }
  return out;
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& buf, WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : encoding == WavEncoding::Pcm24 ? 24 : 32;
  const std::uint16_t tag = encoding == WavEncoding::Float32 ? kFormatFloat : kFormatPcm;
  const std::uint32_t block = bits / 8;
  const std::uint32_t data_size = static_cast<std::uint32_t>(buf.size() * block);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size + 1);
  put_tag(out, "RIFF");
  put<std::uint32_t>(out, 36 + data_size + (data_size % 2));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, tag);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(buf.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(buf.sample_rate) * block);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(block));
  put<std::uint16_t>(out, bits);
  put_tag(out, "data");
  put<std::uint32_t>(out, data_size);

  for (float s : buf.samples) {
    switch (encoding) {
      case WavEncoding::Float32:
        put<float>(out, s);
        break;
      case WavEncoding::Pcm16: {
        double v = std::round(static_cast<double>(s) * 32768.0);
        put<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0)));
        break;
      }
      case WavEncoding::Pcm24: {
        double v = std::round(static_cast<double>(s) * 8388608.0);
        auto q = static_cast<std::int32_t>(std::clamp(v, -8388608.0, 8388607.0));
        auto u = static_cast<std::uint32_t>(q);
        out.push_back(static_cast<std::uint8_t>(u & 0xFF));
        out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xFF));
        out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xFF));
        break;
      }
    }
  }
  if (data_size % 2 == 1) out.push_back(0);
  return out;
}

AudioBuffer load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buf, WavEncoding encoding) {
  auto bytes = encode_wav(buf, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace apa
