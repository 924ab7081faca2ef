// Copyright 2026 The turncourt Authors
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

// PCM WAV input/output, segment slicing, and framewise pitch and level
// tracks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "turncourt/corpus.hpp"
#include "turncourt/error.hpp"
#include "turncourt/log.hpp"
#include "turncourt/util.hpp"

namespace turncourt::audio {

struct AudioBuffer {
  std::vector<float> samples;  // mono, [-1, 1]
  int sample_rate_hz = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// ---------------------------------------------------------------------------
// WAV

namespace detail {

inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

// Decodes 16-bit PCM or 32-bit IEEE float WAV, mono or stereo. Stereo is
// downmixed by channel mean.
inline AudioBuffer decode_wav(std::string_view bytes) {
  using namespace detail;
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12) throw IoError("WAV file truncated before RIFF header");
  if (std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file");

  std::optional<std::uint16_t> format;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const std::uint32_t chunk_size = le32(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    const std::size_t available = size - pos - 8;
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16 || available < 16) throw IoError("WAV fmt chunk truncated");
      format = le16(body);
      channels = le16(body + 2);
      rate = le32(body + 4);
      bits = le16(body + 14);
      if (*format == kFormatExtensible) {
        if (chunk_size < 40 || available < 40) throw IoError("WAV extensible fmt chunk truncated");
        format = le16(body + 24);  // first two bytes of the subformat GUID
      }
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      if (chunk_size > available) throw IoError("WAV data chunk truncated");
      pcm = body;
      pcm_bytes = chunk_size;
      break;
    }
    if (chunk_size > available) throw IoError("WAV chunk truncated");
    pos += 8 + chunk_size + (chunk_size & 1u);
  }
  if (!format) throw IoError("WAV file has no fmt chunk");
  if (!pcm) throw IoError("WAV file has no data chunk");
  const bool pcm16 = *format == kFormatPcm && bits == 16;
  const bool float32 = *format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32)
    throw FormatError("unsupported WAV encoding (format " + std::to_string(*format) + ", " +
                      std::to_string(bits) + " bits); expected 16-bit PCM or 32-bit float");
  if (channels != 1 && channels != 2)
    throw FormatError("unsupported channel count " + std::to_string(channels));
  if (rate == 0) throw FormatError("WAV sample rate is zero");

  const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
  if (pcm_bytes % frame_bytes != 0) throw IoError("WAV data ends mid-frame");
  const std::size_t frames = pcm_bytes / frame_bytes;

  AudioBuffer buf;
  buf.sample_rate_hz = static_cast<int>(rate);
  buf.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = pcm + f * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else {
        float v;
        const std::uint32_t u = le32(p);
        std::memcpy(&v, &u, sizeof v);
        acc += v;
      }
    }
    buf.samples[f] = static_cast<float>(std::clamp(acc / channels, -1.0, 1.0));
  }
  return buf;
}

inline AudioBuffer load_audio(const std::string& path) { return decode_wav(read_file(path)); }

// 16-bit PCM mono.
inline std::string encode_wav16(const AudioBuffer& buf) {
  using namespace detail;
  const auto n = static_cast<std::uint32_t>(buf.samples.size());
  std::string out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out += "RIFF";
  put32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(buf.sample_rate_hz));
  put32(out, static_cast<std::uint32_t>(buf.sample_rate_hz) * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, 2 * n);
  for (float s : buf.samples) {
    const double v = std::clamp(std::round(static_cast<double>(s) * 32768.0), -32768.0, 32767.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return out;
}

inline void save_wav16(const std::string& path, const AudioBuffer& buf) {
  write_file(path, encode_wav16(buf));
}

// ---------------------------------------------------------------------------
// Slicing

inline std::int64_t seconds_to_sample(double s, int rate) {
  return static_cast<std::int64_t>(std::llround(s * rate));
}

// Window edges outside the buffer are clamped with a warning.
inline AudioBuffer slice(const AudioBuffer& buffer, double start_s, double end_s) {
  if (!(end_s > start_s))
    throw RangeError("slice window [" + format_double(start_s) + ", " + format_double(end_s) +
                     "] has no length");
  const auto n = static_cast<std::int64_t>(buffer.samples.size());
  std::int64_t b = seconds_to_sample(start_s, buffer.sample_rate_hz);
  std::int64_t e = seconds_to_sample(end_s, buffer.sample_rate_hz);
  if (e <= 0 || b >= n)
    throw RangeError("slice window [" + format_double(start_s) + ", " + format_double(end_s) +
                     "] lies outside the " + format_double(buffer.duration_s()) + " s buffer");
  if (b < 0 || e > n) {
    warn("slice window [" + format_double(start_s) + ", " + format_double(end_s) +
         "] clamped to buffer bounds [0, " + format_double(buffer.duration_s()) + "]");
    b = std::max<std::int64_t>(b, 0);
    e = std::min(e, n);
  }
  AudioBuffer out;
  out.sample_rate_hz = buffer.sample_rate_hz;
  out.samples.assign(buffer.samples.begin() + b, buffer.samples.begin() + e);
  return out;
}

inline AudioBuffer slice(const AudioBuffer& buffer, const corpus::SegmentWindow& window) {
  return slice(buffer, corpus::to_seconds(window.start), corpus::to_seconds(window.end));
}

// ---------------------------------------------------------------------------
// Framewise tracks

struct TrackConfig {
  double f0_min_hz = 60.0;
  double f0_max_hz = 500.0;
  double frame_len_s = 0.040;
  double frame_hop_s = 0.010;
  // Minimum peak normalized autocorrelation for a voiced frame.
  double voicing_threshold = 0.6;
  // A candidate more than this factor above the previous voiced F0 needs
  // correlation >= voicing_threshold + octave_guard_margin.
  double octave_jump_ratio = 1.8;
  double octave_guard_margin = 0.1;
  double silence_floor_db = -100.0;
};

struct Framing {
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::size_t count = 0;
};

inline Framing framing(const AudioBuffer& buf, const TrackConfig& cfg) {
  if (buf.samples.empty()) throw RangeError("empty audio buffer");
  if (buf.sample_rate_hz <= 0) throw RangeError("sample rate must be positive");
  Framing f;
  f.frame_len = static_cast<std::size_t>(std::llround(cfg.frame_len_s * buf.sample_rate_hz));
  f.hop = static_cast<std::size_t>(std::llround(cfg.frame_hop_s * buf.sample_rate_hz));
  if (f.frame_len == 0 || f.hop == 0) throw RangeError("frame length and hop must be positive");
  if (buf.samples.size() < f.frame_len)
    throw RangeError("buffer shorter than one analysis frame");
  f.count = 1 + (buf.samples.size() - f.frame_len) / f.hop;
  return f;
}

struct F0Frame {
  double time_s = 0;
  std::optional<double> f0_hz;  // nullopt = unvoiced
};

struct F0Track {
  std::vector<F0Frame> frames;
  double frame_hop_s = 0.010;
  double frame_len_s = 0.040;

  std::size_t voiced_count() const {
    return static_cast<std::size_t>(std::count_if(
        frames.begin(), frames.end(), [](const F0Frame& f) { return f.f0_hz.has_value(); }));
  }
};

struct LevelFrame {
  double time_s = 0;
  double level_db = 0;
};

struct LoudnessTrack {
  std::vector<LevelFrame> frames;
  double frame_hop_s = 0.010;
  double frame_len_s = 0.040;
};

namespace detail {

struct PitchCandidate {
  double lag;  // fractional, after parabolic refinement
  double corr;
};

// Normalized autocorrelation r(k) = sum x[n]x[n+k] / sqrt(E0(k) E1(k)) over
// the overlapping part of the frame, for k in [min_lag, max_lag]. Returns the
// interior local maxima, smallest lag first.
inline std::vector<PitchCandidate> autocorrelation_peaks(std::span<const double> x,
                                                         std::size_t min_lag,
                                                         std::size_t max_lag) {
  const std::size_t n = x.size();
  max_lag = std::min(max_lag, n - 2);
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];

  const std::size_t lo = min_lag > 0 ? min_lag - 1 : 0;
  const std::size_t hi = max_lag + 1;
  std::vector<double> r(hi + 1, 0.0);
  for (std::size_t k = lo; k <= hi && k < n; ++k) {
    const std::size_t m = n - k;
    double cross = 0;
    for (std::size_t i = 0; i < m; ++i) cross += x[i] * x[i + k];
    const double e0 = prefix[m];
    const double e1 = prefix[n] - prefix[k];
    const double denom = std::sqrt(e0 * e1);
    r[k] = denom > 0 ? cross / denom : 0.0;
  }

  std::vector<PitchCandidate> peaks;
  for (std::size_t k = std::max<std::size_t>(min_lag, 1); k <= max_lag; ++k) {
    if (!(r[k] > r[k - 1] && r[k] >= r[k + 1])) continue;
    const double a = r[k - 1], b = r[k], c = r[k + 1];
    const double curvature = a - 2 * b + c;
    double shift = 0;
    double peak = b;
    if (curvature < 0) {
      shift = 0.5 * (a - c) / curvature;
      shift = std::clamp(shift, -0.5, 0.5);
      peak = b - 0.25 * (a - c) * shift;
    }
    peaks.push_back({static_cast<double>(k) + shift, std::min(peak, 1.0)});
  }
  return peaks;
}

}  // namespace detail

// Per-frame F0 by normalized autocorrelation with parabolic interpolation.
// The first local peak within 0.05 of the best one is preferred, which keeps
// multiples of the period from winning.
inline F0Track track_f0(const AudioBuffer& buf, const TrackConfig& cfg = {}) {
  const Framing fr = framing(buf, cfg);
  const double rate = buf.sample_rate_hz;
  const auto min_lag = static_cast<std::size_t>(std::floor(rate / cfg.f0_max_hz));
  const auto max_lag = static_cast<std::size_t>(std::ceil(rate / cfg.f0_min_hz));

  F0Track track;
  track.frame_hop_s = cfg.frame_hop_s;
  track.frame_len_s = cfg.frame_len_s;
  track.frames.reserve(fr.count);

  std::vector<double> frame(fr.frame_len);
  std::optional<double> prev_f0;
  for (std::size_t i = 0; i < fr.count; ++i) {
    F0Frame out;
    out.time_s = (static_cast<double>(i * fr.hop) + 0.5 * fr.frame_len) / rate;

    const float* src = buf.samples.data() + i * fr.hop;
    double mean = 0;
    for (std::size_t j = 0; j < fr.frame_len; ++j) mean += src[j];
    mean /= static_cast<double>(fr.frame_len);
    double energy = 0;
    for (std::size_t j = 0; j < fr.frame_len; ++j) {
      frame[j] = src[j] - mean;
      energy += frame[j] * frame[j];
    }

    if (energy > 1e-12 * static_cast<double>(fr.frame_len)) {
      const auto peaks = detail::autocorrelation_peaks(frame, min_lag, max_lag);
      double best = 0;
      for (const auto& p : peaks) best = std::max(best, p.corr);
      if (best >= cfg.voicing_threshold) {
        for (const auto& p : peaks) {
          if (p.corr < best - 0.05) continue;
          const double f0 = rate / p.lag;
          if (f0 < cfg.f0_min_hz || f0 > cfg.f0_max_hz) continue;
          if (prev_f0 && f0 > cfg.octave_jump_ratio * *prev_f0 &&
              p.corr < cfg.voicing_threshold + cfg.octave_guard_margin)
            continue;
          out.f0_hz = f0;
          break;
        }
      }
    }
    prev_f0 = out.f0_hz;
    track.frames.push_back(out);
  }
  return track;
}

// Per-frame level 20*log10(RMS), clamped at the silence floor.
inline LoudnessTrack track_loudness(const AudioBuffer& buf, const TrackConfig& cfg = {}) {
  const Framing fr = framing(buf, cfg);
  const double rate = buf.sample_rate_hz;
  LoudnessTrack track;
  track.frame_hop_s = cfg.frame_hop_s;
  track.frame_len_s = cfg.frame_len_s;
  track.frames.reserve(fr.count);
  for (std::size_t i = 0; i < fr.count; ++i) {
    const float* src = buf.samples.data() + i * fr.hop;
    double sum = 0;
    for (std::size_t j = 0; j < fr.frame_len; ++j) sum += static_cast<double>(src[j]) * src[j];
    const double rms = std::sqrt(sum / static_cast<double>(fr.frame_len));
    double db = rms > 0 ? 20.0 * std::log10(rms) : cfg.silence_floor_db;
    db = std::max(db, cfg.silence_floor_db);
    track.frames.push_back({(static_cast<double>(i * fr.hop) + 0.5 * fr.frame_len) / rate, db});
  }
  return track;
}

}  // namespace turncourt::audio
