#include "rawvoice/synth.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#include "gtest/gtest.h"
#include "oracles.hpp"
#include "rawvoice/config.hpp"
#include "rawvoice/dataset.hpp"

namespace fs = std::filesystem;
using namespace rawvoice;

namespace {

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<char> file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Synth, DeterministicBytes) {
  SynthSpec spec;
  spec.clips_per_label = 2;
  spec.num_labels = 3;
  spec.duration_mean = 2.0;
  spec.duration_std = 0.2;
  spec.duration_min = 1.7;
  spec.duration_max = 2.3;
  spec.sample_rate = 8000;
  spec.seed = 31;

  const auto dir_a = fresh_dir("rawvoice_synth_a");
  const auto dir_b = fresh_dir("rawvoice_synth_b");
  const Manifest ma = generate_corpus(spec, dir_a);
  const Manifest mb = generate_corpus(spec, dir_b);
  ASSERT_EQ(ma.entries.size(), mb.entries.size());
  for (std::size_t i = 0; i < ma.entries.size(); ++i) {
    EXPECT_EQ(ma.entries[i].file, mb.entries[i].file);
    EXPECT_EQ(file_bytes(dir_a / ma.entries[i].file), file_bytes(dir_b / mb.entries[i].file));
  }
  EXPECT_EQ(file_bytes(dir_a / "manifest.csv"), file_bytes(dir_b / "manifest.csv"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST(Synth, SpectralPeakOracleRecoversLabels) {
  SynthSpec spec;
  spec.clips_per_label = 12;
  spec.num_labels = 9;
  spec.duration_mean = 2.0;
  spec.duration_std = 0.2;
  spec.duration_min = 1.6;
  spec.duration_max = 2.4;
  spec.sample_rate = 8000;
  spec.noise_floor = 0.05;
  spec.seed = 37;
  const auto dir = fresh_dir("rawvoice_synth_oracle");
  const Manifest manifest = generate_corpus(spec, dir);

  std::size_t correct = 0;
  for (const auto& e : manifest.entries) {
    const AudioClip clip = decode_wav(dir / e.file);
    // independent oracle: spectrum argmax over a 25 Hz grid -> nearest f(k)
    const double peak = oracle::spectrum_peak_freq(clip.samples, spec.sample_rate, 50.0,
                                                   1600.0, 25.0);
    int best_label = 1;
    double best_dist = 1e9;
    for (int k = 1; k <= spec.num_labels; ++k) {
      const double d = std::abs(peak - spec.tone_freq(k));
      if (d < best_dist) {
        best_dist = d;
        best_label = k;
      }
    }
    correct += best_label == e.label;
  }
  const double accuracy =
      static_cast<double>(correct) / static_cast<double>(manifest.entries.size());
  EXPECT_GE(accuracy, 0.99);
  fs::remove_all(dir);
}

TEST(Synth, SplitProportionsPerLabel) {
  SynthSpec spec;
  spec.clips_per_label = 10;
  spec.num_labels = 9;
  spec.duration_mean = 2.0;
  spec.duration_std = 0.0;
  spec.duration_min = 2.0;
  spec.duration_max = 2.0;
  spec.sample_rate = 8000;
  const auto dir = fresh_dir("rawvoice_synth_splits");
  const Manifest manifest = generate_corpus(spec, dir);
  std::map<int, std::map<Split, int>> counts;
  for (const auto& e : manifest.entries) counts[e.label][e.split]++;
  for (int k = 1; k <= 9; ++k) {
    EXPECT_EQ(counts[k][Split::kTrain], 4);
    EXPECT_EQ(counts[k][Split::kDev], 3);
    EXPECT_EQ(counts[k][Split::kTest], 3);
  }
  fs::remove_all(dir);
}

TEST(Synth, ToneFrequenciesStayBelowNyquistBound) {
  SynthSpec spec;
  spec.base_freq_hz = 400.0;
  spec.freq_step_hz = 200.0;  // f(9) = 2000 >= 1600
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Synth, AmplitudeStaysInRange) {
  SynthSpec spec;
  spec.clips_per_label = 1;
  spec.num_labels = 2;
  spec.duration_mean = 1.6;
  spec.duration_std = 0.0;
  spec.duration_min = 1.6;
  spec.duration_max = 1.6;
  spec.sample_rate = 8000;
  spec.noise_floor = 0.3;
  const auto dir = fresh_dir("rawvoice_synth_range");
  const Manifest manifest = generate_corpus(spec, dir);
  for (const auto& e : manifest.entries) {
    const AudioClip clip = decode_wav(dir / e.file);
    for (float s : clip.samples) {
      EXPECT_GE(s, -1.0f);
      EXPECT_LE(s, 1.0f);
    }
  }
  fs::remove_all(dir);
}

TEST(Config, DefaultsMirrorSubmittedConfiguration) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.sample_rate, 16000);
  EXPECT_DOUBLE_EQ(cfg.window_size_s, 1.5);
  EXPECT_DOUBLE_EQ(cfg.stride_s, 0.1);
  EXPECT_EQ(cfg.conv_blocks, 2);
  EXPECT_EQ(cfg.batch_size, 64);
  EXPECT_EQ(cfg.epochs, 8);
  EXPECT_DOUBLE_EQ(cfg.lr, 0.001);
  EXPECT_FALSE(cfg.augment_reverse);
  EXPECT_FALSE(cfg.augment_overlay);
  EXPECT_FALSE(cfg.augment_noisy_labels);
}

TEST(Config, FileAndOverridePrecedence) {
  const auto dir = fresh_dir("rawvoice_config");
  const auto path = dir / "run.cfg";
  std::ofstream(path) << "# comment line\n"
                      << "train.epochs = 4\n"
                      << "model.conv_blocks = 3   # trailing comment\n"
                      << "\n"
                      << "eval.aggregation = median\n";
  const RunConfig cfg = RunConfig::load(path, {{"train.epochs", "2"}});
  EXPECT_EQ(cfg.epochs, 2);       // flag beats file
  EXPECT_EQ(cfg.conv_blocks, 3);  // file beats default
  EXPECT_EQ(cfg.aggregation, "median");
  fs::remove_all(dir);
}

TEST(Config, UnknownKeyRejected) {
  const auto dir = fresh_dir("rawvoice_config_unknown");
  const auto path = dir / "bad.cfg";
  std::ofstream(path) << "no.such.key = 1\n";
  EXPECT_THROW(RunConfig::load(path), ConfigError);
  fs::remove_all(dir);
}

TEST(Config, MalformedLineRejected) {
  const auto dir = fresh_dir("rawvoice_config_malformed");
  const auto path = dir / "bad.cfg";
  std::ofstream(path) << "train.epochs 4\n";
  EXPECT_THROW(RunConfig::load(path), ParseError);
  fs::remove_all(dir);
}

TEST(Config, EchoRoundTripReproducesEveryKey) {
  RunConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 0.00125;
  cfg.window_size_s = 1.0;
  cfg.augment_overlay = true;
  cfg.synth.noise_floor = 0.075;
  cfg.manifest = "corpus/manifest.csv";
  const auto dir = fresh_dir("rawvoice_config_echo");
  const auto path = dir / "effective.cfg";
  cfg.save(path);
  const RunConfig back = RunConfig::load(path);
  EXPECT_EQ(back.items(), cfg.items());
  fs::remove_all(dir);
}

}  // namespace
