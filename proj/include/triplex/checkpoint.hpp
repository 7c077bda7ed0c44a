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

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "triplex/errors.hpp"
#include "triplex/rng.hpp"
#include "triplex/tensor.hpp"

namespace triplex {

// Binary tensor container, all integers little-endian:
//
//   "TPLX"  u32 version=1  u32 stage  u64 step  u64 tokenizer_hash
//   u32 config_len   config bytes (key=value snapshot)
//   u32 tokenizer_len tokenizer bytes (text format of tokenizer.hpp)
//   u32 tensor_count
//   per tensor: u16 name_len, name, u8 dtype (0=f32, 1=f64), u8 rank,
//               u64 dims[rank], raw little-endian values
//   trailing u64: total file size in bytes (integrity by length, no CRC)
//
// Loading reproduces every tensor bit-exactly.
struct Checkpoint {
  std::uint32_t stage = 0;
  std::uint64_t step = 0;
  std::uint64_t tokenizer_hash = 0;
  std::string config_snapshot;
  std::string tokenizer_text;
  std::map<std::string, Tensor> tensors;  // ordered by name
};

namespace ckpt_detail {

constexpr std::uint32_t kVersion = 1;

inline void put_u16(std::string& s, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& s, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(s, bits);
}

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  std::uint64_t take(std::size_t bytes) {
    if (at_ + bytes > n_) throw Corrupt("checkpoint: truncated record");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(p_[at_ + i]) << (8 * i);
    at_ += bytes;
    return v;
  }

  std::string take_string(std::size_t len) {
    if (at_ + len > n_) throw Corrupt("checkpoint: truncated string");
    std::string s(reinterpret_cast<const char*>(p_ + at_), len);
    at_ += len;
    return s;
  }

  double take_f64() {
    const std::uint64_t bits = take(8);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  float take_f32() {
    const auto bits = static_cast<std::uint32_t>(take(4));
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::size_t at() const { return at_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t at_ = 0;
};

}  // namespace ckpt_detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string buf;
  buf += "TPLX";
  ckpt_detail::put_u32(buf, ckpt_detail::kVersion);
  ckpt_detail::put_u32(buf, ckpt.stage);
  ckpt_detail::put_u64(buf, ckpt.step);
  ckpt_detail::put_u64(buf, ckpt.tokenizer_hash);
  ckpt_detail::put_u32(buf, static_cast<std::uint32_t>(ckpt.config_snapshot.size()));
  buf += ckpt.config_snapshot;
  ckpt_detail::put_u32(buf, static_cast<std::uint32_t>(ckpt.tokenizer_text.size()));
  buf += ckpt.tokenizer_text;
  ckpt_detail::put_u32(buf, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    ckpt_detail::put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf += name;
    buf.push_back(1);  // f64
    buf.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.dims)
      ckpt_detail::put_u64(buf, static_cast<std::uint64_t>(d));
    for (double v : t.data) ckpt_detail::put_f64(buf, v);
  }
  ckpt_detail::put_u64(buf, static_cast<std::uint64_t>(buf.size() + 8));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot write checkpoint: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoFailure("short write to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingFile("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 12) throw Corrupt("checkpoint: file too small");
  if (std::memcmp(p, "TPLX", 4) != 0)
    throw Corrupt("checkpoint: bad magic in " + path);

  ckpt_detail::Reader r(p, buf.size());
  r.take(4);  // magic
  const auto version = static_cast<std::uint32_t>(r.take(4));
  if (version != ckpt_detail::kVersion)
    throw VersionMismatch("checkpoint: version " + std::to_string(version) +
                          ", expected " + std::to_string(ckpt_detail::kVersion));

  // trailing length check catches truncation anywhere in the body
  {
    ckpt_detail::Reader tail(p + buf.size() - 8, 8);
    if (tail.take(8) != buf.size())
      throw Corrupt("checkpoint: length mismatch (truncated or padded)");
  }

  Checkpoint ckpt;
  ckpt.stage = static_cast<std::uint32_t>(r.take(4));
  ckpt.step = r.take(8);
  ckpt.tokenizer_hash = r.take(8);
  ckpt.config_snapshot = r.take_string(r.take(4));
  ckpt.tokenizer_text = r.take_string(r.take(4));
  if (!ckpt.tokenizer_text.empty() &&
      fnv1a64(ckpt.tokenizer_text) != ckpt.tokenizer_hash)
    throw Corrupt("checkpoint: tokenizer hash mismatch");
  const auto count = static_cast<std::uint32_t>(r.take(4));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.take_string(r.take(2));
    const auto dtype = static_cast<int>(r.take(1));
    if (dtype != 0 && dtype != 1)
      throw Corrupt("checkpoint: unknown dtype for " + name);
    const auto rank = static_cast<std::size_t>(r.take(1));
    std::vector<std::size_t> dims(rank);
    std::size_t total = 1;
    for (std::size_t d = 0; d < rank; ++d) {
      dims[d] = static_cast<std::size_t>(r.take(8));
      total *= dims[d];
    }
    Tensor t = Tensor::zeros(dims);
    for (std::size_t e = 0; e < total; ++e)
      t.data[e] = dtype == 1 ? r.take_f64() : static_cast<double>(r.take_f32());
    if (ckpt.tensors.count(name))
      throw Corrupt("checkpoint: duplicate tensor " + name);
    ckpt.tensors.emplace(name, std::move(t));
  }
  if (r.at() + 8 != buf.size())
    throw Corrupt("checkpoint: trailing garbage after tensor records");
  return ckpt;
}

// Debug feature dump: same container, one tensor named "mel".
inline void save_feature_dump(const Tensor& mel, const std::string& path) {
  Checkpoint ckpt;
  ckpt.tensors.emplace("mel", mel);
  save_checkpoint(ckpt, path);
}

inline Tensor load_feature_dump(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  auto it = ckpt.tensors.find("mel");
  if (it == ckpt.tensors.end())
    throw Corrupt("feature dump: no \"mel\" entry in " + path);
  return it->second;
}

}  // namespace triplex
