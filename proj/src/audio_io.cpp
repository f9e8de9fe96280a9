// src/audio_io.cpp

// Copyright 2026  The stylekit Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "stylekit/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "stylekit/ioutil.hpp"

namespace stylekit {

namespace {

constexpr uint16_t kFormatPcm = 0x0001;
constexpr uint16_t kFormatFloat = 0x0003;
constexpr uint16_t kFormatExtensible = 0xFFFE;

struct FmtChunk {
  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits = 0;
};

FmtChunk parse_fmt(ByteReader& r, uint32_t chunk_size, const std::string& path) {
  if (chunk_size < 16) throw Error("malformed wav (fmt chunk too small): " + path);
  FmtChunk fmt;
  fmt.format = r.u16();
  fmt.channels = r.u16();
  fmt.sample_rate = r.u32();
  r.u32();  // byte rate
  r.u16();  // block align
  fmt.bits = r.u16();
  uint32_t consumed = 16;
  if (fmt.format == kFormatExtensible) {
    if (chunk_size < 40) {
      throw Error("malformed wav (extensible fmt truncated): " + path);
    }
    uint16_t ext_size = r.u16();
    if (ext_size < 22) {
      throw Error("malformed wav (extensible fmt truncated): " + path);
    }
    r.u16();  // valid bits
    r.u32();  // channel mask
    // First two bytes of the subformat GUID carry the actual codec tag.
    fmt.format = r.u16();
    r.skip(14);
    consumed = 40;
  }
  if (chunk_size > consumed) r.skip(chunk_size - consumed);
  return fmt;
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::vector<uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error&) {
    throw Error("cannot open wav file: " + path);
  }
  ByteReader r(bytes, "wav file " + path);
  if (bytes.size() < 12) throw Error("malformed wav (too short): " + path);
  char riff[4], wave[4];
  r.raw(riff, 4);
  r.u32();  // RIFF size, unreliable in the wild; chunk walk bounds itself
  r.raw(wave, 4);
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw Error("malformed wav (not a RIFF/WAVE file): " + path);
  }

  FmtChunk fmt;
  bool have_fmt = false;
  std::vector<uint8_t> data;
  bool have_data = false;
  while (r.remaining() >= 8) {
    char id[4];
    r.raw(id, 4);
    uint32_t size = r.u32();
    if (size > r.remaining()) throw Error("malformed wav (chunk overruns file): " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      fmt = parse_fmt(r, size, path);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data.resize(size);
      if (size > 0) r.raw(data.data(), size);
      have_data = true;
    } else {
      r.skip(size);
    }
    if (size % 2 == 1 && r.remaining() > 0) r.skip(1);  // chunk padding byte
  }
  if (!have_fmt) throw Error("malformed wav (missing fmt chunk): " + path);
  if (!have_data) throw Error("malformed wav (missing data chunk): " + path);
  if (fmt.channels == 0 || fmt.sample_rate == 0) {
    throw Error("malformed wav (zero channels or sample rate): " + path);
  }

  int bytes_per_sample;
  if (fmt.format == kFormatPcm && fmt.bits == 16) {
    bytes_per_sample = 2;
  } else if (fmt.format == kFormatPcm && fmt.bits == 24) {
    bytes_per_sample = 3;
  } else if (fmt.format == kFormatFloat && fmt.bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw Error("unsupported wav format (tag " + std::to_string(fmt.format) +
                ", " + std::to_string(fmt.bits) + " bit): " + path);
  }

  const size_t frame_bytes = static_cast<size_t>(bytes_per_sample) * fmt.channels;
  const size_t n_frames = data.size() / frame_bytes;
  Waveform w;
  w.sample_rate = static_cast<int>(fmt.sample_rate);
  w.samples.resize(static_cast<Index>(n_frames));
  const uint8_t* p = data.data();
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < fmt.channels; ++c) {
      const uint8_t* s = p + i * frame_bytes + static_cast<size_t>(c) * bytes_per_sample;
      if (bytes_per_sample == 2) {
        int16_t v;
        std::memcpy(&v, s, 2);
        acc += v / 32768.0;
      } else if (bytes_per_sample == 3) {
        int32_t v = (s[0] << 8) | (s[1] << 16) | (static_cast<int32_t>(s[2]) << 24);
        acc += (v >> 8) / 8388608.0;
      } else {
        float v;
        std::memcpy(&v, s, 4);
        acc += v;
      }
    }
    w.samples[static_cast<Index>(i)] = acc / fmt.channels;
  }
  return w;
}

void write_wav(const Waveform& w, const std::string& path) {
  if (w.sample_rate <= 0) throw Error("write_wav: sample rate must be positive");
  for (Index i = 0; i < w.samples.size(); ++i) {
    if (!std::isfinite(w.samples[i])) {
      throw Error("write_wav: non-finite sample at index " + std::to_string(i));
    }
  }
  ByteWriter bw;
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  bw.raw("RIFF", 4);
  bw.u32(36 + data_bytes);
  bw.raw("WAVE", 4);
  bw.raw("fmt ", 4);
  bw.u32(16);
  bw.u16(kFormatPcm);
  bw.u16(1);
  bw.u32(static_cast<uint32_t>(w.sample_rate));
  bw.u32(static_cast<uint32_t>(w.sample_rate) * 2);
  bw.u16(2);
  bw.u16(16);
  bw.raw("data", 4);
  bw.u32(data_bytes);
  for (Index i = 0; i < w.samples.size(); ++i) {
    double v = std::round(std::clamp(w.samples[i], -1.0, 1.0) * 32768.0);
    v = std::clamp(v, -32768.0, 32767.0);
    bw.u16(static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  atomic_write_file(path, bw.bytes());
}

Waveform resample(const Waveform& w, int target_rate) {
  if (w.sample_rate <= 0) throw Error("resample: source sample rate must be positive");
  if (target_rate <= 0) throw Error("resample: target sample rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // anti-alias when downsampling
  const int half = 32;
  const double beta = 8.0;

  // I0 via the standard power series; converges fast for beta <= 8.
  auto bessel_i0 = [](double x) {
    double sum = 1.0, term = 1.0;
    for (int k = 1; k < 64; ++k) {
      term *= (x / (2.0 * k)) * (x / (2.0 * k));
      sum += term;
      if (term < 1e-16 * sum) break;
    }
    return sum;
  };
  const double i0_beta = bessel_i0(beta);
  // The kernel support widens by 1/cutoff when downsampling so the windowed
  // sinc keeps the same number of zero crossings.
  const double support = half / cutoff;
  auto kernel = [&](double t) {
    const double u = t / support;
    if (std::abs(u) >= 1.0) return 0.0;
    const double win = bessel_i0(beta * std::sqrt(1.0 - u * u)) / i0_beta;
    const double a = kPi * cutoff * t;
    const double sinc = std::abs(a) < 1e-12 ? 1.0 : std::sin(a) / a;
    return cutoff * sinc * win;
  };

  const Index n_in = w.samples.size();
  const Index n_out = static_cast<Index>(std::llround(static_cast<double>(n_in) * ratio));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples = Vecd::Zero(n_out);
  for (Index j = 0; j < n_out; ++j) {
    const double center = j / ratio;
    const Index lo = std::max<Index>(0, static_cast<Index>(std::ceil(center - support)));
    const Index hi = std::min<Index>(n_in - 1, static_cast<Index>(std::floor(center + support)));
    double acc = 0.0;
    for (Index i = lo; i <= hi; ++i) {
      acc += w.samples[i] * kernel(i - center);
    }
    out.samples[j] = acc;
  }
  return out;
}

}  // namespace stylekit
