#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "rawvoice/audio.hpp"
#include "rawvoice/dataset.hpp"
#include "rawvoice/error.hpp"
#include "rawvoice/rng.hpp"

namespace rawvoice {

/// Deterministic stand-in corpus: each label k gets sine tones at
/// f(k) = base + step*(k-1) with amplitude 0.5 plus a uniform noise floor.
/// Durations follow a clipped normal whose defaults match the real corpus
/// statistics. Splits are assigned 40/30/30 per label by a seeded shuffle,
/// so window-level leakage across splits is impossible.
struct SynthSpec {
  int clips_per_label = 10;
  int num_labels = 9;  // labels 1..num_labels
  double duration_mean = 3.87;
  double duration_std = 0.64;
  double duration_min = 1.56;
  double duration_max = 5.00;
  double base_freq_hz = 200.0;
  double freq_step_hz = 150.0;
  double noise_floor = 0.05;
  int sample_rate = 16000;
  std::uint64_t seed = 42;

  double tone_freq(int label) const { return base_freq_hz + freq_step_hz * (label - 1); }

  void validate() const {
    if (clips_per_label < 1) throw ConfigError("clips per label must be >= 1");
    if (num_labels < 1 || num_labels > 9) throw ConfigError("labels must lie in 1..9");
    if (!(duration_min <= duration_mean && duration_mean <= duration_max)) {
      throw ConfigError("duration bounds must satisfy min <= mean <= max");
    }
    if (duration_min <= 0) throw ConfigError("duration must be positive");
    if (noise_floor < 0 || noise_floor >= 1) throw ConfigError("noise floor must be in [0, 1)");
    if (sample_rate < kMinTargetRate) throw ConfigError("sample rate must be >= 8000");
    // all tones must stay below 0.4x Nyquist at the lowest supported rate
    const double limit = 0.4 * (kMinTargetRate / 2.0);
    if (base_freq_hz <= 0 || freq_step_hz < 0 || tone_freq(num_labels) >= limit) {
      throw ConfigError("tone frequencies must stay below " + std::to_string(limit) +
                        " Hz; got " + std::to_string(tone_freq(num_labels)));
    }
  }
};

inline constexpr double kSynthToneAmplitude = 0.5;

/// Generates the corpus under out_dir and writes manifest.csv next to the
/// WAV files. Same spec, same bytes.
inline Manifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string());
  }

  Manifest manifest;
  for (int label = 1; label <= spec.num_labels; ++label) {
    // split boundaries: 40% train, 30% dev, rest test, per label
    const int n = spec.clips_per_label;
    const int n_train = static_cast<int>(std::lround(0.4 * n));
    const int n_dev = static_cast<int>(std::lround(0.3 * n));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(spec.seed, 0x59a1, static_cast<std::uint64_t>(label)));
    split_rng.shuffle(order);
    std::vector<Split> split_of(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Split s = i < n_train             ? Split::kTrain
                      : i < n_train + n_dev   ? Split::kDev
                                              : Split::kTest;
      split_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = s;
    }

    const double freq = spec.tone_freq(label);
    for (int i = 0; i < n; ++i) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(label),
                          static_cast<std::uint64_t>(i)));
      const double duration = std::clamp(rng.normal(spec.duration_mean, spec.duration_std),
                                         spec.duration_min, spec.duration_max);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const auto samples = static_cast<std::size_t>(std::llround(duration * spec.sample_rate));

      AudioClip clip;
      clip.sample_rate = spec.sample_rate;
      clip.label = label;
      clip.samples.resize(samples);
      const double omega = 2.0 * std::numbers::pi * freq / spec.sample_rate;
      for (std::size_t t = 0; t < samples; ++t) {
        const double tone = kSynthToneAmplitude * std::sin(omega * static_cast<double>(t) + phase);
        const double noise = rng.uniform(-spec.noise_floor, spec.noise_floor);
        clip.samples[t] = static_cast<float>(std::clamp(tone + noise, -1.0, 1.0));
      }

      char name[64];
      std::snprintf(name, sizeof name, "label%d_clip%04d.wav", label, i);
      clip.id = std::filesystem::path(name).stem().string();
      encode_wav(clip, out_dir / name);

      ManifestEntry entry;
      entry.file = name;
      entry.label = label;
      entry.split = split_of[static_cast<std::size_t>(i)];
      manifest.entries.push_back(std::move(entry));
    }
  }
  save_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace rawvoice
