// Copyright 2026 The Triplex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "triplex/errors.hpp"

namespace triplex {

// Mono audio, amplitudes in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace wav_detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace wav_detail

// Reads a RIFF/WAVE file. Only PCM, 16-bit, mono input is accepted;
// anything else is an explicit UnsupportedFormat rather than a silent
// conversion. Samples are scaled to [-1, 1) by dividing by 32768.
inline AudioBuffer load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingFile("cannot open wav file: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::size_t n = buf.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw UnsupportedFormat("not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= n) {
    const char* id = buf.data() + off;
    const std::uint32_t sz = wav_detail::read_u32(p + off + 4);
    const std::size_t body = off + 8;
    if (body + sz > n)
      throw UnsupportedFormat("truncated wav chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (sz < 16) throw UnsupportedFormat("short fmt chunk in " + path);
      format = wav_detail::read_u16(p + body);
      channels = wav_detail::read_u16(p + body + 2);
      sample_rate = wav_detail::read_u32(p + body + 4);
      bits = wav_detail::read_u16(p + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = p + body;
      data_len = sz;
    }
    off = body + sz + (sz & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr)
    throw UnsupportedFormat("missing fmt/data chunk in " + path);
  if (format != 1)
    throw UnsupportedFormat("non-PCM wav (format " + std::to_string(format) +
                            "): " + path);
  if (channels != 1)
    throw UnsupportedFormat("expected mono, got " + std::to_string(channels) +
                            " channels: " + path);
  if (bits != 16)
    throw UnsupportedFormat("expected 16-bit PCM, got " + std::to_string(bits) +
                            "-bit: " + path);
  if (sample_rate == 0) throw UnsupportedFormat("zero sample rate: " + path);

  AudioBuffer out;
  out.sample_rate = static_cast<int>(sample_rate);
  const std::size_t count = data_len / 2;
  out.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = static_cast<std::int16_t>(
        static_cast<std::uint16_t>(data[2 * i] | (data[2 * i + 1] << 8)));
    out.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return out;
}

inline void save_wav(const AudioBuffer& audio, const std::string& path) {
  const auto count = static_cast<std::uint32_t>(audio.samples.size());
  const std::uint32_t data_len = count * 2;
  std::string s;
  s.reserve(44 + data_len);
  s += "RIFF";
  wav_detail::put_u32(s, 36 + data_len);
  s += "WAVEfmt ";
  wav_detail::put_u32(s, 16);
  wav_detail::put_u16(s, 1);  // PCM
  wav_detail::put_u16(s, 1);  // mono
  wav_detail::put_u32(s, static_cast<std::uint32_t>(audio.sample_rate));
  wav_detail::put_u32(s, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  wav_detail::put_u16(s, 2);   // block align
  wav_detail::put_u16(s, 16);  // bits
  s += "data";
  wav_detail::put_u32(s, data_len);
  for (std::uint32_t i = 0; i < count; ++i) {
    double v = audio.samples[i];
    long long q = std::llround(v * 32768.0);
    if (q > 32767) q = 32767;
    if (q < -32768) q = -32768;
    wav_detail::put_u16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot write wav file: " + path);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw IoFailure("short write to " + path);
}

}  // namespace triplex
