// Copyright 2026 The Crosstask Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "crosstask/core/binary_io.hpp"
#include "crosstask/core/errors.hpp"

namespace crosstask {

/// Interleaved samples in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  std::uint32_t sample_rate = 0;
  std::uint32_t channels = 1;

  std::size_t frames() const noexcept { return channels == 0 ? 0 : samples.size() / channels; }
  double seconds() const noexcept { return sample_rate == 0 ? 0.0 : static_cast<double>(frames()) / sample_rate; }
};

/// Format tag or bit depth we do not decode.
class UnsupportedCodecError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File ends before a declared chunk or sample frame.
class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Not RIFF/WAVE, or required chunks missing or inconsistent.
class MalformedHeaderError : public FormatError {
 public:
  using FormatError::FormatError;
};

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline constexpr std::uint16_t kWavPcm = 1;
inline constexpr std::uint16_t kWavFloat = 3;
inline constexpr std::uint16_t kWavExtensible = 0xFFFE;

inline std::uint32_t read_u32_at(const std::vector<char>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

inline std::uint16_t read_u16_at(const std::vector<char>& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    (static_cast<unsigned char>(b[at + 1]) << 8));
}

}  // namespace detail

/// Decodes RIFF/WAVE bytes holding PCM16 or IEEE float32 (plain or
/// WAVE_FORMAT_EXTENSIBLE). PCM16 is scaled by 1/32768.
inline AudioClip parse_wav(const std::vector<char>& b, const std::string& source) {
  if (b.size() < 12) throw TruncatedFileError(source + ": shorter than a RIFF header");
  if (std::string(b.data(), 4) != "RIFF" || std::string(b.data() + 8, 4) != "WAVE") {
    throw MalformedHeaderError(source + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (true) {
    if (pos + 8 > b.size()) {
      if (have_fmt) throw TruncatedFileError(source + ": no data chunk before end of file");
      throw MalformedHeaderError(source + ": no fmt chunk");
    }
    const std::string id(b.data() + pos, 4);
    const std::uint32_t size = detail::read_u32_at(b, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16) throw MalformedHeaderError(source + ": fmt chunk too small");
      if (body + size > b.size()) throw TruncatedFileError(source + ": fmt chunk cut short");
      format = detail::read_u16_at(b, body);
      channels = detail::read_u16_at(b, body + 2);
      rate = detail::read_u32_at(b, body + 4);
      block_align = detail::read_u16_at(b, body + 12);
      bits = detail::read_u16_at(b, body + 14);
      if (format == detail::kWavExtensible) {
        if (size < 40) throw MalformedHeaderError(source + ": extensible fmt chunk too small");
        format = detail::read_u16_at(b, body + 24);
      }
      if (channels == 0 || rate == 0) throw MalformedHeaderError(source + ": zero channels or sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw MalformedHeaderError(source + ": data chunk before fmt chunk");
      const bool pcm16 = format == detail::kWavPcm && bits == 16;
      const bool f32 = format == detail::kWavFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw UnsupportedCodecError(source + ": format tag " + std::to_string(format) + " with " +
                                    std::to_string(bits) + " bits; only PCM16 and float32 are supported");
      }
      const std::size_t width = bits / 8;
      if (block_align != width * channels) throw MalformedHeaderError(source + ": block align disagrees with fmt");
      if (body + size > b.size()) throw TruncatedFileError(source + ": data chunk extends past end of file");
      if (size % block_align != 0) throw TruncatedFileError(source + ": partial sample frame at end of data");
      AudioClip clip;
      clip.sample_rate = rate;
      clip.channels = channels;
      clip.samples.resize(size / width);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const std::size_t at = body + i * width;
        if (pcm16) {
          clip.samples[i] = static_cast<std::int16_t>(detail::read_u16_at(b, at)) / 32768.0;
        } else {
          clip.samples[i] = std::bit_cast<float>(detail::read_u32_at(b, at));
        }
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_wav(bytes, path.string());
}

/// PCM16 output rounds and clips to [-32768, 32767].
inline BinaryWriter encode_wav(const AudioClip& clip, WavEncoding encoding) {
  if (clip.channels == 0 || clip.samples.size() % clip.channels != 0) {
    throw UsageError("encode_wav: sample count is not a multiple of the channel count");
  }
  const std::uint16_t width = encoding == WavEncoding::pcm16 ? 2 : 4;
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * width);
  BinaryWriter w;
  w.raw("RIFF");
  w.u32(36 + data_bytes);
  w.raw("WAVE");
  w.raw("fmt ");
  w.u32(16);
  w.u16(encoding == WavEncoding::pcm16 ? detail::kWavPcm : detail::kWavFloat);
  w.u16(static_cast<std::uint16_t>(clip.channels));
  w.u32(clip.sample_rate);
  w.u32(clip.sample_rate * clip.channels * width);
  w.u16(static_cast<std::uint16_t>(clip.channels * width));
  w.u16(static_cast<std::uint16_t>(width * 8));
  w.raw("data");
  w.u32(data_bytes);
  for (double v : clip.samples) {
    if (encoding == WavEncoding::pcm16) {
      const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
      w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      w.f32(static_cast<float>(v));
    }
  }
  return w;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  encode_wav(clip, encoding).save(path);
}

/// Per-frame mean over channels. Mono input is returned unchanged.
inline AudioClip downmix_mono(const AudioClip& clip) {
  if (clip.channels <= 1) return clip;
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.channels = 1;
  const std::size_t frames = clip.frames();
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double s = 0.0;
    for (std::size_t c = 0; c < clip.channels; ++c) s += clip.samples[f * clip.channels + c];
    out.samples[f] = s / clip.channels;
  }
  return out;
}

}  // namespace crosstask
