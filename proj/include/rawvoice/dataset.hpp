#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rawvoice/audio.hpp"
#include "rawvoice/binio.hpp"
#include "rawvoice/error.hpp"
#include "rawvoice/rng.hpp"

namespace rawvoice {

enum class Split { kTrain, kDev, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw ParseError("unknown split '" + s + "'");
}

struct ManifestEntry {
  std::string file;  // relative to the audio root
  int label = 0;     // KSS rating, 1..9
  Split split = Split::kTrain;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

/// Parses a `file,label,split` CSV. Errors name the offending line.
inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "file,label,split") {
    throw ParseError(path.string() + ":1: expected header 'file,label,split'");
  }

  Manifest m;
  std::set<std::string> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ParseError(where + ": expected three comma-separated fields");
    }
    ManifestEntry e;
    e.file = line.substr(0, c1);
    const std::string label_str = line.substr(c1 + 1, c2 - c1 - 1);
    try {
      std::size_t used = 0;
      e.label = std::stoi(label_str, &used);
      if (used != label_str.size()) throw std::invalid_argument(label_str);
    } catch (const std::exception&) {
      throw ParseError(where + ": label '" + label_str + "' is not an integer");
    }
    if (e.label < 1 || e.label > 9) {
      throw ParseError(where + ": label " + std::to_string(e.label) +
                       " outside [1, 9]");
    }
    try {
      e.split = parse_split(line.substr(c2 + 1));
    } catch (const ParseError& err) {
      throw ParseError(where + ": " + err.what());
    }
    if (!seen.insert(e.file).second) {
      throw ParseError(where + ": duplicate file '" + e.file + "'");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "file,label,split\n";
  for (const auto& e : m.entries) {
    out << e.file << ',' << e.label << ',' << split_name(e.split) << '\n';
  }
}

/// Sliding-window parameters. Window and stride must be whole sample counts
/// at the configured rate.
struct WindowingConfig {
  double window_size_s = 1.5;
  double stride_s = 0.1;
  int sample_rate = 16000;
  bool pad_short = false;  // when true, clips shorter than one window are
                           // zero-padded instead of rejected

  int window_samples() const { return whole_samples(window_size_s, "window size"); }
  int stride_samples() const { return whole_samples(stride_s, "stride"); }

 private:
  int whole_samples(double seconds, const char* what) const {
    if (seconds <= 0) throw ConfigError(std::string(what) + " must be positive");
    if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
    const double exact = seconds * sample_rate;
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-6 || rounded < 1) {
      throw ConfigError(std::string(what) + " of " + std::to_string(seconds) +
                        " s is not a whole sample count at " +
                        std::to_string(sample_rate) + " Hz");
    }
    return static_cast<int>(rounded);
  }
};

/// Fixed-length training window with its (possibly perturbed) label.
struct WindowSample {
  std::vector<float> samples;
  float label = 0.0f;  // in [1, 9]
  std::string source_id;
  double offset_s = 0.0;
};

struct SplitStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Duration statistics per split, in seconds.
struct CorpusStats {
  std::array<SplitStats, 3> splits;  // indexed by Split

  SplitStats& of(Split s) { return splits[static_cast<std::size_t>(s)]; }
  const SplitStats& of(Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

inline CorpusStats corpus_stats(const Manifest& manifest,
                                const std::filesystem::path& audio_root) {
  std::array<std::vector<double>, 3> durations;
  for (const auto& e : manifest.entries) {
    AudioClip clip;
    try {
      clip = decode_wav(audio_root / e.file);
    } catch (const Error& err) {
      throw FormatError("cannot decode " + e.file + ": " + err.what());
    }
    durations[static_cast<std::size_t>(e.split)].push_back(clip.duration_seconds());
  }
  CorpusStats stats;
  for (std::size_t i = 0; i < 3; ++i) {
    auto& s = stats.splits[i];
    const auto& d = durations[i];
    s.count = d.size();
    if (d.empty()) continue;
    s.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    double sq = 0.0;
    for (double v : d) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(d.size()));
    s.min = *std::min_element(d.begin(), d.end());
    s.max = *std::max_element(d.begin(), d.end());
  }
  return stats;
}

/// Cuts max(1, floor((L-w)/s)) windows starting at multiples of the stride.
/// Every window inherits the clip label.
inline std::vector<WindowSample> extract_windows(const AudioClip& clip,
                                                 const WindowingConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw ShapeError("clip rate " + std::to_string(clip.sample_rate) +
                     " does not match configured rate " +
                     std::to_string(cfg.sample_rate));
  }
  const auto w = static_cast<std::size_t>(cfg.window_samples());
  const auto s = static_cast<std::size_t>(cfg.stride_samples());
  const std::size_t len = clip.samples.size();
  const float label = clip.label ? static_cast<float>(*clip.label) : 0.0f;

  std::vector<WindowSample> out;
  if (len < w) {
    if (!cfg.pad_short) {
      throw InputError("clip " + clip.id + " is shorter than one window (" +
                       std::to_string(len) + " < " + std::to_string(w) + " samples)");
    }
    WindowSample pad;
    pad.samples.assign(w, 0.0f);
    std::copy(clip.samples.begin(), clip.samples.end(), pad.samples.begin());
    pad.label = label;
    pad.source_id = clip.id;
    pad.offset_s = 0.0;
    out.push_back(std::move(pad));
    return out;
  }

  const std::size_t count = std::max<std::size_t>(1, (len - w) / s);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    WindowSample ws;
    const std::size_t start = i * s;
    ws.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                      clip.samples.begin() + static_cast<std::ptrdiff_t>(start + w));
    ws.label = label;
    ws.source_id = clip.id;
    ws.offset_s = static_cast<double>(start) / cfg.sample_rate;
    out.push_back(std::move(ws));
  }
  return out;
}

namespace detail {

/// Bucket index for balancing: labels round half away from zero.
inline int label_bucket(float label) {
  const long b = std::lround(label);
  if (b < 1 || b > 9) {
    throw InputError("label " + std::to_string(label) +
                     " falls outside buckets 1..9");
  }
  return static_cast<int>(b);
}

}  // namespace detail

/// Equalizes label buckets to the median non-empty bucket count. Oversized
/// buckets are subsampled without replacement; undersized buckets are
/// replicated cyclically and topped up by seeded sampling. Per-bucket
/// generators are derived from (seed, bucket), so the result does not depend
/// on processing order.
inline std::vector<WindowSample> balance(std::vector<WindowSample> windows,
                                         std::uint64_t seed) {
  if (windows.empty()) return windows;

  std::array<std::vector<std::size_t>, 10> buckets;  // index 1..9
  for (std::size_t i = 0; i < windows.size(); ++i) {
    buckets[static_cast<std::size_t>(detail::label_bucket(windows[i].label))].push_back(i);
  }

  std::vector<std::size_t> counts;
  for (int b = 1; b <= 9; ++b) {
    if (!buckets[static_cast<std::size_t>(b)].empty()) {
      counts.push_back(buckets[static_cast<std::size_t>(b)].size());
    }
  }
  std::sort(counts.begin(), counts.end());
  const std::size_t target = counts[(counts.size() - 1) / 2];  // lower median

  std::vector<WindowSample> out;
  out.reserve(target * counts.size());
  for (int b = 1; b <= 9; ++b) {
    auto& idx = buckets[static_cast<std::size_t>(b)];
    if (idx.empty()) continue;
    Rng rng(derive_seed(seed, 0xba1a, static_cast<std::uint64_t>(b)));
    const std::size_t n = idx.size();
    if (n >= target) {
      // choose `target` of n without replacement, keep original order
      std::vector<std::size_t> pick = idx;
      rng.shuffle(pick);
      pick.resize(target);
      std::sort(pick.begin(), pick.end());
      for (std::size_t i : pick) out.push_back(std::move(windows[i]));
      // moved-from windows are only referenced once per bucket
      if (n == target) continue;
    } else {
      const std::size_t copies = target / n;
      const std::size_t extra = target % n;
      std::vector<std::size_t> pick = idx;
      rng.shuffle(pick);
      pick.resize(extra);
      std::sort(pick.begin(), pick.end());
      std::vector<WindowSample> extras;
      extras.reserve(extra);
      for (std::size_t i : pick) extras.push_back(windows[i]);
      for (std::size_t c = 0; c + 1 < copies; ++c) {
        for (std::size_t i : idx) out.push_back(windows[i]);
      }
      for (std::size_t i : idx) out.push_back(std::move(windows[i]));  // last replica
      for (auto& w : extras) out.push_back(std::move(w));
    }
  }
  return out;
}

/// Reverses the sample order; label and source are preserved.
inline WindowSample reverse_augment(const WindowSample& w) {
  WindowSample out = w;
  std::reverse(out.samples.begin(), out.samples.end());
  return out;
}

/// Adds alpha-scaled noise and clamps back into [-1, 1].
inline WindowSample overlay_noise(const WindowSample& w,
                                  std::span<const float> noise, float alpha) {
  if (noise.size() < w.samples.size()) {
    throw InputError("noise buffer (" + std::to_string(noise.size()) +
                     ") shorter than window (" + std::to_string(w.samples.size()) + ")");
  }
  if (alpha < 0.0f || alpha > 1.0f) throw ConfigError("alpha must be in [0, 1]");
  WindowSample out = w;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = std::clamp(w.samples[i] + alpha * noise[i], -1.0f, 1.0f);
  }
  return out;
}

/// Concatenates all full frames whose RMS is below the threshold. Returns an
/// empty vector when no frame qualifies.
inline std::vector<float> extract_background(const AudioClip& clip,
                                             float energy_threshold,
                                             double frame_s) {
  if (frame_s <= 0) throw ConfigError("frame length must be positive");
  const auto frame = static_cast<std::size_t>(
      std::max(1.0, std::round(frame_s * clip.sample_rate)));
  std::vector<float> out;
  for (std::size_t start = 0; start + frame <= clip.samples.size(); start += frame) {
    double energy = 0.0;
    for (std::size_t i = start; i < start + frame; ++i) {
      energy += static_cast<double>(clip.samples[i]) * clip.samples[i];
    }
    const double rms = std::sqrt(energy / static_cast<double>(frame));
    if (rms < energy_threshold) {
      out.insert(out.end(), clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                 clip.samples.begin() + static_cast<std::ptrdiff_t>(start + frame));
    }
  }
  return out;
}

/// KSS label with additive Gaussian noise, clamped to the rating range.
inline float noisy_label(float label, float sigma, Rng& rng) {
  if (sigma < 0.0f) throw ConfigError("label noise sigma must be >= 0");
  const double noisy = label + rng.normal(0.0, sigma);
  return static_cast<float>(std::clamp(noisy, 1.0, 9.0));
}

// ---------------------------------------------------------------------------
// Binary window file: magic "RVW1", u32 count, u32 window length, then per
// window an f32 label followed by f32 samples (all little-endian).

namespace detail {

// Bulk f32 conversion; a straight copy on little-endian hosts.
inline void f32_to_bytes(const float* src, std::size_t n, unsigned char* dst) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, src, n * 4);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, src + i, 4);
      for (int b = 0; b < 4; ++b) dst[4 * i + static_cast<std::size_t>(b)] =
          static_cast<unsigned char>(bits >> (8 * b));
    }
  }
}

inline void bytes_to_f32(const unsigned char* src, std::size_t n, float* dst) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, src, n * 4);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | src[4 * i + static_cast<std::size_t>(b)];
      std::memcpy(dst + i, &bits, 4);
    }
  }
}

}  // namespace detail

inline void save_windows(const std::vector<WindowSample>& windows,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t len = windows.empty() ? 0 : windows.front().samples.size();
  for (const auto& w : windows) {
    if (w.samples.size() != len) {
      throw ShapeError("window length mismatch while saving " + path.string());
    }
  }
  out.write("RVW1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(windows.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(len));
  std::vector<unsigned char> buf((len + 1) * 4);
  for (const auto& w : windows) {
    detail::f32_to_bytes(&w.label, 1, buf.data());
    detail::f32_to_bytes(w.samples.data(), len, buf.data() + 4);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<WindowSample> load_windows(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string_view(magic, 4) != "RVW1") {
    throw FormatError(path.string() + ": not a window file (bad magic)");
  }
  const std::uint32_t count = detail::get_u32(in, "window count");
  const std::uint32_t len = detail::get_u32(in, "window length");
  std::vector<WindowSample> out(count);
  std::vector<unsigned char> buf((static_cast<std::size_t>(len) + 1) * 4);
  for (auto& w : out) {
    detail::read_bytes(in, buf.data(), buf.size(), "window payload");
    detail::bytes_to_f32(buf.data(), 1, &w.label);
    w.samples.resize(len);
    detail::bytes_to_f32(buf.data() + 4, len, w.samples.data());
  }
  return out;
}

}  // namespace rawvoice
