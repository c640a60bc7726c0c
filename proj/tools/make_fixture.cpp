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

// Writes the small synthetic datasets used by the end-to-end pipeline test.
// Output is deterministic: the same directory contents on every run.
//
//   make_fixture OUT_DIR
//
// OUT_DIR/scenes  task 1 layout, 3 classes (low tone, high tone, noise)
// OUT_DIR/events  task 4 layout, 3 event classes with reference onsets

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "crosstask/core/random.hpp"
#include "crosstask/core/text.hpp"
#include "crosstask/dsp/wav.hpp"

namespace {

using namespace crosstask;
namespace fs = std::filesystem;

constexpr std::uint32_t kRate = 8000;
constexpr std::size_t kSamples = kRate;  // 1 s clips

void add_tone(std::vector<double>& x, double hz, double amp, std::size_t start, std::size_t end, Rng& rng) {
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t n = start; n < end; ++n) {
    x[n] += amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(n) / kRate + phase);
  }
}

void add_noise(std::vector<double>& x, double amp, std::size_t start, std::size_t end, Rng& rng) {
  for (std::size_t n = start; n < end; ++n) x[n] += amp * rng.uniform(-1.0, 1.0);
}

void save(const fs::path& path, const std::vector<double>& x) {
  AudioClip clip;
  clip.sample_rate = kRate;
  clip.channels = 1;
  clip.samples = x;
  write_wav(path, clip, WavEncoding::pcm16);
}

std::string two_digits(std::size_t i) { return (i < 10 ? "0" : "") + std::to_string(i); }

void make_scenes(const fs::path& root) {
  fs::create_directories(root / "audio");
  Rng rng(2018);
  const std::vector<std::string> classes{"tone_low", "tone_high", "noise"};
  std::string manifest = "clip_id,path,labels,fold,verified\n";
  for (std::size_t i = 0; i < 24; ++i) {
    const std::size_t label = i % 3;
    std::vector<double> x(kSamples, 0.0);
    add_noise(x, 0.01, 0, kSamples, rng);
    const double amp = rng.uniform(0.2, 0.4);
    if (label == 0) add_tone(x, rng.uniform(400.0, 600.0), amp, 0, kSamples, rng);
    if (label == 1) add_tone(x, rng.uniform(1800.0, 2200.0), amp, 0, kSamples, rng);
    if (label == 2) add_noise(x, amp, 0, kSamples, rng);
    const std::string id = "scene_" + two_digits(i);
    save(root / "audio" / (id + ".wav"), x);
    manifest += id + ",audio/" + id + ".wav," + classes[label] + "," + (i < 15 ? "1" : "2") + ",1\n";
  }
  write_text_file(root / "manifest.csv", manifest);
  write_text_file(root / "config.json", R"({
  "task": 1,
  "model": "cnn4",
  "classes": ["tone_low", "tone_high", "noise"],
  "features": {"sample_rate": 8000, "n_fft": 1024, "hop": 256, "segment_seconds": 1, "clip_seconds": 1},
  "train": {"max_iterations": 40, "batch_size": 8, "checkpoint_every": 20, "validate_every": 10, "seed": 7}
}
)");
}

void make_events(const fs::path& root) {
  fs::create_directories(root / "audio");
  Rng rng(2019);
  const std::vector<std::string> classes{"beep", "whistle", "hiss"};
  std::string manifest = "clip_id,path,labels,fold,verified\n";
  std::string events = "clip_id,class,onset_s,offset_s\n";
  for (std::size_t i = 0; i < 24; ++i) {
    const std::string id = "event_" + two_digits(i);
    std::vector<double> x(kSamples, 0.0);
    add_noise(x, 0.01, 0, kSamples, rng);
    // One or two distinct classes per clip, each as a single event.
    std::vector<std::size_t> present{i % 3};
    if (i % 2 == 1) present.push_back((i % 3 + 1 + (i / 2) % 2) % 3);
    std::sort(present.begin(), present.end());
    std::string labels;
    for (std::size_t c : present) {
      const std::size_t len = static_cast<std::size_t>(rng.uniform(0.3, 0.5) * kRate);
      const std::size_t start = static_cast<std::size_t>(rng.below(kSamples - len));
      const double amp = rng.uniform(0.25, 0.4);
      if (c == 0) add_tone(x, 1000.0, amp, start, start + len, rng);
      if (c == 1) add_tone(x, 3000.0, amp, start, start + len, rng);
      if (c == 2) add_noise(x, amp, start, start + len, rng);
      labels += (labels.empty() ? "" : ";") + classes[c];
      events += id + "," + classes[c] + "," + format_real(static_cast<double>(start) / kRate) + "," +
                format_real(static_cast<double>(start + len) / kRate) + "\n";
    }
    save(root / "audio" / (id + ".wav"), x);
    manifest += id + ",audio/" + id + ".wav," + labels + "," + (i < 15 ? "1" : "2") + ",1\n";
  }
  write_text_file(root / "manifest.csv", manifest);
  write_text_file(root / "reference_events.csv", events);
  write_text_file(root / "config.json", R"({
  "task": 4,
  "model": "cnn4",
  "classes": ["beep", "whistle", "hiss"],
  "paths": {"reference_events": "reference_events.csv"},
  "features": {"sample_rate": 8000, "n_fft": 1024, "hop": 256, "segment_seconds": 1, "clip_seconds": 1},
  "train": {"max_iterations": 60, "batch_size": 8, "checkpoint_every": 30, "validate_every": 10, "seed": 7}
}
)");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture OUT_DIR\n";
    return 2;
  }
  try {
    const fs::path out = argv[1];
    make_scenes(out / "scenes");
    make_events(out / "events");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
