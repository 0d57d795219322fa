#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sremtl/data.hpp"

namespace sremtl {
namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 |
         static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

std::string_view task_name(Task task) {
  return task == Task::kws ? "kws" : "sv";
}

Task parse_task(std::string_view name) {
  if (name == "kws") return Task::kws;
  if (name == "sv") return Task::sv;
  throw ParameterError("unknown task '" + std::string(name) +
                       "' (expected kws or sv)");
}

std::size_t task_clip_samples(Task task) {
  return task == Task::kws ? kKwsSamples : kSvSamples;
}

WavClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id) {
  const std::string where = source_id.empty() ? "wav" : source_id;
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") ||
      !tag_is(bytes, 8, "WAVE")) {
    throw FormatError(where + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::span<const std::uint8_t> payload;
  bool have_data = false;
  std::size_t at = 12;
  while (at + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, at + 4);
    const std::size_t body = at + 8;
    if (body + size > bytes.size()) {
      throw FormatError(where + ": truncated chunk");
    }
    if (tag_is(bytes, at, "fmt ")) {
      if (size < 16) throw FormatError(where + ": fmt chunk too small");
      const std::uint16_t format = read_u16(bytes, body);
      const std::uint16_t channels = read_u16(bytes, body + 2);
      const std::uint32_t rate = read_u32(bytes, body + 4);
      const std::uint16_t bits = read_u16(bytes, body + 14);
      if (format != 1) {
        throw FormatError(where + ": format tag " + std::to_string(format) +
                          ", expected PCM (1)");
      }
      if (channels != 1) {
        throw FormatError(where + ": " + std::to_string(channels) +
                          " channels, expected mono");
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw FormatError(where + ": sample rate " + std::to_string(rate) +
                          " Hz, expected 16000 Hz");
      }
      if (bits != 16) {
        throw FormatError(where + ": " + std::to_string(bits) +
                          " bits per sample, expected 16");
      }
      have_fmt = true;
    } else if (tag_is(bytes, at, "data")) {
      payload = bytes.subspan(body, size);
      have_data = true;
    }
    at = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError(where + ": missing fmt chunk");
  if (!have_data) throw FormatError(where + ": missing data chunk");
  if (payload.size() % 2 != 0) throw FormatError(where + ": odd data size");

  WavClip clip;
  clip.source_id = std::move(source_id);
  clip.samples.resize(payload.size() / 2);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(read_u16(payload, 2 * i));
    clip.samples[i] = static_cast<float>(v) / 32768.0f;
  }
  return clip;
}

std::vector<std::uint8_t> encode_wav(const WavClip& clip) {
  if (clip.sample_rate != kSampleRate) {
    throw FormatError("write_wav: sample rate must be 16000 Hz");
  }
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (float s : clip.samples) {
    const double scaled = std::round(static_cast<double>(s) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

WavClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

void write_wav(const std::filesystem::path& path, const WavClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

WavClip slice_utterance(const WavClip& clip, std::size_t length_samples,
                        Rng& rng) {
  if (length_samples == 0) {
    throw ParameterError("slice_utterance: length must be at least 1 sample");
  }
  WavClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  const std::size_t n = clip.samples.size();
  if (n > length_samples) {
    const std::size_t start = rng.index(n - length_samples + 1);
    out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                       clip.samples.begin() +
                           static_cast<std::ptrdiff_t>(start + length_samples));
  } else {
    out.samples = clip.samples;
    out.samples.resize(length_samples, 0.0f);
  }
  return out;
}

}  // namespace sremtl
