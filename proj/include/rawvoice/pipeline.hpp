#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "rawvoice/audio.hpp"
#include "rawvoice/config.hpp"
#include "rawvoice/dataset.hpp"
#include "rawvoice/rng.hpp"

namespace rawvoice {

/// Concatenated low-RMS frames from every clip of a split, resampled to the
/// configured rate. May be empty when the recordings have no quiet parts.
inline std::vector<float> collect_background(const Manifest& manifest, Split split,
                                             const std::filesystem::path& audio_root,
                                             const RunConfig& cfg) {
  std::vector<float> buffer;
  for (const auto& entry : manifest.entries) {
    if (entry.split != split) continue;
    AudioClip clip = decode_wav(audio_root / entry.file);
    if (clip.sample_rate != cfg.sample_rate) clip = resample(clip, cfg.sample_rate);
    const auto frames = extract_background(
        clip, static_cast<float>(cfg.background_threshold), cfg.background_frame_s);
    buffer.insert(buffer.end(), frames.begin(), frames.end());
  }
  return buffer;
}

/// Windows for one split. Training transforms (balancing, then additive
/// augmentation) are applied only when `training_transforms` is set; dev and
/// test windows stay untouched. All randomness derives from
/// (pipeline.seed, window index), so the result is order-independent.
inline std::vector<WindowSample> build_windows(const Manifest& manifest, Split split,
                                               const std::filesystem::path& audio_root,
                                               const RunConfig& cfg,
                                               bool training_transforms) {
  const WindowingConfig wcfg = cfg.windowing();
  std::vector<WindowSample> windows;
  for (const auto& entry : manifest.entries) {
    if (entry.split != split) continue;
    AudioClip clip = decode_wav(audio_root / entry.file);
    clip.label = entry.label;
    if (clip.sample_rate != cfg.sample_rate) clip = resample(clip, cfg.sample_rate);
    auto clip_windows = extract_windows(clip, wcfg);
    for (auto& w : clip_windows) windows.push_back(std::move(w));
  }
  if (!training_transforms) return windows;

  if (cfg.balance_enabled) {
    windows = balance(std::move(windows), cfg.pipeline_seed);
  }

  // augmentations are additive: the originals always stay in the set
  const std::size_t originals = windows.size();
  if (cfg.augment_reverse) {
    windows.reserve(originals * 2);
    for (std::size_t i = 0; i < originals; ++i) {
      windows.push_back(reverse_augment(windows[i]));
    }
  }
  if (cfg.augment_overlay) {
    const std::vector<float> background =
        collect_background(manifest, split, audio_root, cfg);
    const std::size_t window_len = originals == 0 ? 0 : windows.front().samples.size();
    if (background.size() < window_len || window_len == 0) {
      std::cerr << "note: background buffer too small (" << background.size()
                << " samples); overlay augmentation skipped\n";
    } else {
      const std::size_t slack = background.size() - window_len;
      for (std::size_t i = 0; i < originals; ++i) {
        Rng rng(derive_seed(cfg.pipeline_seed, 0x0f5e, i));
        const std::size_t offset = slack == 0 ? 0 : rng.uniform_int(slack + 1);
        const float alpha =
            static_cast<float>(rng.uniform(cfg.overlay_alpha_min, cfg.overlay_alpha_max));
        windows.push_back(overlay_noise(
            windows[i], std::span<const float>(background.data() + offset, window_len),
            alpha));
      }
    }
  }
  if (cfg.augment_noisy_labels) {
    for (std::size_t i = 0; i < originals; ++i) {
      Rng rng(derive_seed(cfg.pipeline_seed, 0x1abe, i));
      WindowSample copy = windows[i];
      copy.label = noisy_label(copy.label, static_cast<float>(cfg.label_noise_sigma), rng);
      windows.push_back(std::move(copy));
    }
  }
  return windows;
}

}  // namespace rawvoice
