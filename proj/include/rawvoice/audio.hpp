#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "rawvoice/binio.hpp"
#include "rawvoice/error.hpp"

namespace rawvoice {

/// Decoded mono waveform. Samples are normalized to [-1, 1].
struct AudioClip {
  std::string id;
  std::vector<float> samples;
  int sample_rate = 0;
  std::optional<int> label;  // KSS rating in [1, 9] when known

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Reads a RIFF/WAVE file containing 16-bit signed PCM. Multichannel input
/// is averaged to mono; integer samples map to v/32768.
inline AudioClip decode_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  char riff[4];
  in.read(riff, 4);
  if (in.gcount() != 4 || std::string_view(riff, 4) != "RIFF") {
    throw FormatError(path.string() + ": missing RIFF header");
  }
  detail::get_u32(in, "RIFF size");
  char wave[4];
  in.read(wave, 4);
  if (in.gcount() != 4 || std::string_view(wave, 4) != "WAVE") {
    throw FormatError(path.string() + ": missing WAVE tag");
  }

  std::uint16_t audio_format = 0, num_channels = 0, bits_per_sample = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<unsigned char> payload;

  while (true) {
    char chunk_id[4];
    in.read(chunk_id, 4);
    if (in.gcount() == 0) break;  // clean end of file
    if (in.gcount() != 4) throw FormatError(path.string() + ": truncated chunk header");
    const std::uint32_t chunk_size = detail::get_u32(in, "chunk size");
    const std::string_view id(chunk_id, 4);
    if (id == "fmt ") {
      if (chunk_size < 16) throw FormatError(path.string() + ": fmt chunk too small");
      audio_format = detail::get_u16(in, "audio format");
      num_channels = detail::get_u16(in, "channel count");
      sample_rate = detail::get_u32(in, "sample rate");
      detail::get_u32(in, "byte rate");
      detail::get_u16(in, "block align");
      bits_per_sample = detail::get_u16(in, "bits per sample");
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (id == "data") {
      payload.resize(chunk_size);
      detail::read_bytes(in, payload.data(), chunk_size, "PCM data");
    } else {
      // skip unknown chunk (chunks are word-aligned)
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
      if (!in) throw FormatError(path.string() + ": truncated chunk body");
    }
  }

  if (!have_fmt) throw FormatError(path.string() + ": no fmt chunk");
  if (audio_format != 1) {
    throw UnsupportedError(path.string() + ": only PCM (format 1) is supported");
  }
  if (bits_per_sample != 16) {
    throw UnsupportedError(path.string() + ": only 16-bit samples are supported");
  }
  if (num_channels == 0 || sample_rate == 0) {
    throw FormatError(path.string() + ": invalid fmt fields");
  }

  AudioClip clip;
  clip.id = path.stem().string();
  clip.sample_rate = static_cast<int>(sample_rate);
  const std::size_t frame_bytes = static_cast<std::size_t>(num_channels) * 2;
  const std::size_t frames = payload.size() / frame_bytes;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    float acc = 0.0f;
    for (std::uint16_t c = 0; c < num_channels; ++c) {
      const std::size_t off = i * frame_bytes + 2 * c;
      const auto v = static_cast<std::int16_t>(
          static_cast<std::uint16_t>(payload[off]) |
          (static_cast<std::uint16_t>(payload[off + 1]) << 8));
      acc += static_cast<float>(v) / 32768.0f;
    }
    clip.samples[i] = acc / static_cast<float>(num_channels);
  }
  return clip;
}

/// Writes a clip as mono 16-bit PCM. Round-trip error is at most 1/32768
/// per sample.
inline void encode_wav(const AudioClip& clip, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());

  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  const auto rate = static_cast<std::uint32_t>(clip.sample_rate);
  out.write("RIFF", 4);
  detail::put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);  // PCM
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * 2);  // byte rate
  detail::put_u16(out, 2);         // block align
  detail::put_u16(out, 16);        // bits per sample
  out.write("data", 4);
  detail::put_u32(out, data_bytes);
  for (const float s : clip.samples) {
    const long q = std::lround(static_cast<double>(s) * 32768.0);
    const auto clamped = static_cast<std::int16_t>(std::clamp<long>(q, -32768, 32767));
    detail::put_u16(out, static_cast<std::uint16_t>(clamped));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

/// Linear-phase lowpass FIR: Hamming-windowed sinc, normalized to unit DC
/// gain. taps must be odd so the filter delay is a whole sample.
inline std::vector<double> design_lowpass_fir(int taps, double cutoff_hz,
                                              double sample_rate_hz) {
  if (taps < 3 || taps % 2 == 0) throw ConfigError("FIR taps must be odd and >= 3");
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double fc = cutoff_hz / sample_rate_hz;  // cycles per sample
  const double mid = (taps - 1) / 2.0;
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double m = n - mid;
    const double x = 2.0 * std::numbers::pi * fc * m;
    const double sinc = (m == 0.0) ? 2.0 * fc : std::sin(x) / (std::numbers::pi * m);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (taps - 1));
    h[static_cast<std::size_t>(n)] = sinc * w;
    sum += h[static_cast<std::size_t>(n)];
  }
  for (double& v : h) v /= sum;
  return h;
}

inline constexpr int kResampleFirTaps = 63;
inline constexpr int kMinTargetRate = 8000;

/// Integer-factor decimation with an anti-alias lowpass (63-tap Hamming
/// windowed sinc, cutoff 0.45x the target Nyquist). The FIR uses zero-padded
/// convolution, so output length is exactly floor(len/factor).
inline AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate == clip.sample_rate) return clip;
  if (target_rate > clip.sample_rate) {
    throw UnsupportedError("upsampling is not supported (" +
                           std::to_string(clip.sample_rate) + " -> " +
                           std::to_string(target_rate) + ")");
  }
  if (target_rate < kMinTargetRate) {
    throw UnsupportedError("target rate below 8000 Hz is not supported");
  }
  if (clip.sample_rate % target_rate != 0) {
    throw UnsupportedError("non-integer decimation factor (" +
                           std::to_string(clip.sample_rate) + " -> " +
                           std::to_string(target_rate) + ")");
  }
  const int factor = clip.sample_rate / target_rate;
  const std::vector<double> h =
      design_lowpass_fir(kResampleFirTaps, 0.45 * (target_rate / 2.0), clip.sample_rate);
  const auto n = static_cast<std::ptrdiff_t>(clip.samples.size());
  const auto delay = static_cast<std::ptrdiff_t>((h.size() - 1) / 2);

  AudioClip out;
  out.id = clip.id;
  out.label = clip.label;
  out.sample_rate = target_rate;
  out.samples.resize(clip.samples.size() / static_cast<std::size_t>(factor));
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const auto center = static_cast<std::ptrdiff_t>(i) * factor;
    double acc = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      const std::ptrdiff_t src = center + static_cast<std::ptrdiff_t>(j) - delay;
      if (src >= 0 && src < n) {
        acc += h[j] * clip.samples[static_cast<std::size_t>(src)];
      }
    }
    out.samples[i] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace rawvoice
