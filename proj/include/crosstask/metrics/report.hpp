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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "crosstask/core/binary_io.hpp"
#include "crosstask/core/errors.hpp"
#include "crosstask/core/tensor.hpp"
#include "crosstask/core/text.hpp"
#include "crosstask/metrics/classification.hpp"
#include "crosstask/metrics/events.hpp"

namespace crosstask {

// ---- clip predictions: CSV "clip_id,<class>..." ----

struct ClipPrediction {
  std::string clip_id;
  std::vector<double> probs;
};

struct PredictionSet {
  std::vector<std::string> classes;
  std::vector<ClipPrediction> clips;

  ProbabilityRows rows() const {
    ProbabilityRows r;
    for (const auto& c : clips) r.push_back(c.probs);
    return r;
  }
};

inline std::string seed_comment(std::optional<std::uint64_t> seed) {
  return seed ? "# seed=" + std::to_string(*seed) + "\n" : std::string();
}

inline std::string format_predictions(const PredictionSet& p, std::optional<std::uint64_t> seed) {
  std::ostringstream out;
  out << seed_comment(seed) << "clip_id";
  for (const auto& c : p.classes) out << ',' << c;
  out << '\n';
  for (const auto& clip : p.clips) {
    out << clip.clip_id;
    for (double v : clip.probs) out << ',' << format_real(v);
    out << '\n';
  }
  return out.str();
}

inline PredictionSet parse_predictions(const std::string& text, const std::string& source) {
  const auto lines = content_lines(text);
  if (lines.empty()) throw FormatError(source + ": missing header");
  auto header = split(lines[0].second, ',');
  if (header.empty() || trim(header[0]) != "clip_id") throw FormatError(source + ": header must start with clip_id");
  PredictionSet p;
  for (std::size_t i = 1; i < header.size(); ++i) p.classes.emplace_back(trim(header[i]));
  std::set<std::string> seen;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto& [number, line] = lines[l];
    auto cells = split(line, ',');
    const std::string where = source + ":" + std::to_string(number);
    if (cells.size() != header.size()) throw FormatError(where + ": expected " + std::to_string(header.size()) + " cells");
    ClipPrediction c{std::string(trim(cells[0])), {}};
    if (!seen.insert(c.clip_id).second) throw FormatError(where + ": duplicate clip_id " + c.clip_id);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      auto v = parse_real(cells[i]);
      if (!v || *v < 0.0 || *v > 1.0) throw FormatError(where + ": probability out of range in column " + header[i]);
      c.probs.push_back(*v);
    }
    p.clips.push_back(std::move(c));
  }
  return p;
}

// ---- frame predictions: one binary matrix per clip ----

struct FramePrediction {
  std::string clip_id;
  Tensor<float> probs;  // (frames, classes)
  double frames_per_second = 0;

  ProbabilityRows rows() const {
    ProbabilityRows r(probs.dim(0), std::vector<double>(probs.dim(1)));
    for (std::size_t t = 0; t < probs.dim(0); ++t)
      for (std::size_t c = 0; c < probs.dim(1); ++c) r[t][c] = probs.at(t, c);
    return r;
  }
};

inline constexpr std::uint32_t kFramePredictionVersion = 1;

/// "CTBP" u32 version, str clip_id, u32 frames, u32 classes, f64 fps, f32 data.
inline void write_frame_prediction(const std::filesystem::path& path, const FramePrediction& f) {
  BinaryWriter w;
  w.raw("CTBP");
  w.u32(kFramePredictionVersion);
  w.str(f.clip_id);
  w.u32(static_cast<std::uint32_t>(f.probs.dim(0)));
  w.u32(static_cast<std::uint32_t>(f.probs.dim(1)));
  w.f64(f.frames_per_second);
  for (float v : f.probs.values()) w.f32(v);
  w.save(path);
}

inline FramePrediction read_frame_prediction(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  r.header("CTBP", kFramePredictionVersion);
  FramePrediction f;
  f.clip_id = r.str();
  const std::size_t frames = r.u32(), classes = r.u32();
  f.frames_per_second = r.f64();
  if (frames == 0 || classes == 0) throw FormatError(r.source() + ": empty frame matrix");
  if (r.remaining() != frames * classes * 4) throw FormatError(r.source() + ": payload size does not match shape");
  f.probs = Tensor<float>({frames, classes});
  for (float& v : f.probs.values()) v = r.f32();
  return f;
}

// ---- events: CSV "clip_id,class,onset_s,offset_s" ----

inline std::string format_events(const EventMap& events, const std::vector<std::string>& classes,
                                 std::optional<std::uint64_t> seed) {
  std::ostringstream out;
  out << seed_comment(seed) << "clip_id,class,onset_s,offset_s\n";
  for (const auto& [clip, list] : events) {
    for (const auto& e : list) {
      out << clip << ',' << classes.at(e.cls) << ',' << format_real(e.onset) << ',' << format_real(e.offset) << '\n';
    }
  }
  return out.str();
}

inline EventMap parse_events(const std::string& text, const std::vector<std::string>& classes,
                             const std::string& source) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = i;
  const auto lines = content_lines(text);
  if (lines.empty() || trim(lines[0].second) != "clip_id,class,onset_s,offset_s") {
    throw FormatError(source + ": expected header clip_id,class,onset_s,offset_s");
  }
  EventMap out;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto& [number, line] = lines[l];
    const std::string where = source + ":" + std::to_string(number);
    auto cells = split(line, ',');
    if (cells.size() != 4) throw FormatError(where + ": expected 4 cells");
    auto cls = index.find(std::string(trim(cells[1])));
    if (cls == index.end()) throw FormatError(where + ": unknown class '" + cells[1] + "'");
    auto onset = parse_real(cells[2]), offset = parse_real(cells[3]);
    if (!onset || !offset || *onset < 0 || *offset <= *onset) throw FormatError(where + ": invalid event times");
    out[std::string(trim(cells[0]))].push_back({cls->second, *onset, *offset});
  }
  for (auto& [clip, list] : out) sort_events(list);
  return out;
}

// ---- metrics report: key=value text ----

struct MetricTable {
  std::string name;
  ClassScores scores;
};

struct MetricsReport {
  int task = 0;
  std::string split;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> classes;
  std::vector<MetricTable> tables;                       // class-wise metrics
  std::vector<std::pair<std::string, double>> scalars;  // clip-level metrics

  const MetricTable* table(const std::string& name) const {
    for (const auto& t : tables) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
  std::optional<double> scalar(const std::string& name) const {
    for (const auto& [k, v] : scalars) {
      if (k == name) return v;
    }
    return std::nullopt;
  }
};

inline constexpr const char* kMissing = "NA";

inline std::string format_report(const MetricsReport& r) {
  std::ostringstream out;
  out << seed_comment(r.seed);
  out << "task=" << r.task << '\n' << "split=" << r.split << '\n' << "checkpoint=" << r.checkpoint << '\n';
  out << "classes=";
  for (std::size_t i = 0; i < r.classes.size(); ++i) out << (i ? ";" : "") << r.classes[i];
  out << '\n';
  for (const auto& [name, value] : r.scalars) out << "scalar." << name << '=' << format_real(value) << '\n';
  for (const auto& t : r.tables) {
    out << "table." << t.name << ".average=" << format_real(t.scores.average) << '\n';
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
      const auto& v = t.scores.per_class.at(c);
      out << "table." << t.name << ".class." << r.classes[c] << '=' << (v ? format_real(*v) : kMissing) << '\n';
    }
  }
  return out.str();
}

inline MetricsReport parse_report(const std::string& text, const std::string& source) {
  MetricsReport r;
  std::map<std::string, std::size_t> class_index;
  std::map<std::string, std::size_t> table_index;
  for (const auto& line : split(text, '\n')) {
    if (line.rfind("# seed=", 0) == 0) {
      auto s = parse_int(line.substr(7));
      if (!s || *s < 0) throw FormatError(source + ": bad seed comment");
      r.seed = static_cast<std::uint64_t>(*s);
    }
  }
  for (const auto& [number, line] : content_lines(text)) {
    const std::string where = source + ":" + std::to_string(number);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key=value");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto real = [&](const std::string& s) {
      auto v = parse_real(s);
      if (!v) throw FormatError(where + ": not a number: " + s);
      return *v;
    };
    if (key == "task") {
      auto v = parse_int(value);
      if (!v) throw FormatError(where + ": bad task");
      r.task = static_cast<int>(*v);
    } else if (key == "split") {
      r.split = value;
    } else if (key == "checkpoint") {
      r.checkpoint = value;
    } else if (key == "classes") {
      r.classes = value.empty() ? std::vector<std::string>{} : split(value, ';');
      for (std::size_t i = 0; i < r.classes.size(); ++i) class_index[r.classes[i]] = i;
    } else if (key.rfind("scalar.", 0) == 0) {
      r.scalars.emplace_back(key.substr(7), real(value));
    } else if (key.rfind("table.", 0) == 0) {
      const std::string rest = key.substr(6);
      const auto dot = rest.find('.');
      if (dot == std::string::npos) throw FormatError(where + ": malformed table key");
      const std::string name = rest.substr(0, dot), field = rest.substr(dot + 1);
      auto [it, inserted] = table_index.try_emplace(name, r.tables.size());
      if (inserted) r.tables.push_back({name, {std::vector<std::optional<double>>(r.classes.size()), 0.0}});
      auto& t = r.tables[it->second];
      if (field == "average") {
        t.scores.average = real(value);
      } else if (field.rfind("class.", 0) == 0) {
        auto c = class_index.find(field.substr(6));
        if (c == class_index.end()) throw FormatError(where + ": unknown class " + field.substr(6));
        if (value != kMissing) t.scores.per_class[c->second] = real(value);
      } else {
        throw FormatError(where + ": unknown table field " + field);
      }
    } else {
      throw FormatError(where + ": unknown key " + key);
    }
  }
  return r;
}

// ---- tables for reporting across splits ----

/// Rows are classes plus an Average row; one column per (metric, split),
/// followed by a per-metric mean over splits when there is more than one
/// split. Each Average cell is the mean of the class entries above it.
inline std::string classwise_table_csv(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw UsageError("no reports to tabulate");
  const auto& classes = reports.front().classes;
  std::vector<std::string> metrics;
  for (const auto& t : reports.front().tables) metrics.push_back(t.name);
  for (const auto& r : reports) {
    if (r.classes != classes) throw UsageError("reports disagree on the class vocabulary");
  }

  std::vector<std::string> header{"class"};
  std::vector<std::vector<std::optional<double>>> columns;  // each: per class
  for (const auto& m : metrics) {
    std::vector<std::vector<std::optional<double>>> per_split;
    for (const auto& r : reports) {
      const auto* t = r.table(m);
      if (!t) throw UsageError("report " + r.split + " lacks metric " + m);
      header.push_back(m + ":" + r.split);
      columns.push_back(t->scores.per_class);
      per_split.push_back(t->scores.per_class);
    }
    if (reports.size() > 1) {
      header.push_back(m + ":mean");
      std::vector<std::optional<double>> mean(classes.size());
      for (std::size_t c = 0; c < classes.size(); ++c) {
        double s = 0;
        std::size_t n = 0;
        for (const auto& col : per_split) {
          if (col[c]) s += *col[c], ++n;
        }
        if (n) mean[c] = s / static_cast<double>(n);
      }
      columns.push_back(std::move(mean));
    }
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (std::size_t c = 0; c < classes.size(); ++c) {
    out << classes[c];
    for (const auto& col : columns) out << ',' << (col[c] ? format_real(*col[c]) : kMissing);
    out << '\n';
  }
  out << "Average";
  for (const auto& col : columns) out << ',' << format_real(ClassScores::from(col).average);
  out << '\n';
  return out.str();
}

/// Rows are splits plus an Average row; columns are the clip-level scalars
/// followed by each class-wise metric's average.
inline std::string split_table_csv(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw UsageError("no reports to tabulate");
  std::vector<std::string> keys;
  for (const auto& [k, v] : reports.front().scalars) keys.push_back(k);
  for (const auto& t : reports.front().tables) keys.push_back(t.name + ".average");
  auto value = [](const MetricsReport& r, const std::string& key) -> double {
    if (auto s = r.scalar(key)) return *s;
    const auto dot = key.rfind(".average");
    if (dot != std::string::npos) {
      if (const auto* t = r.table(key.substr(0, dot))) return t->scores.average;
    }
    throw UsageError("report " + r.split + " lacks " + key);
  };
  std::ostringstream out;
  out << "split";
  for (const auto& k : keys) out << ',' << k;
  out << '\n';
  std::vector<double> sums(keys.size(), 0.0);
  for (const auto& r : reports) {
    out << r.split;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const double v = value(r, keys[i]);
      sums[i] += v;
      out << ',' << format_real(v);
    }
    out << '\n';
  }
  out << "Average";
  for (double s : sums) out << ',' << format_real(s / static_cast<double>(reports.size()));
  out << '\n';
  return out.str();
}

/// One row per value: split,metric,class,value. Clip-level scalars use the
/// class "all"; class-wise averages use "Average".
inline std::string long_table_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "split,metric,class,value\n";
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.scalars) out << r.split << ',' << k << ",all," << format_real(v) << '\n';
    for (const auto& t : r.tables) {
      for (std::size_t c = 0; c < r.classes.size(); ++c) {
        const auto& v = t.scores.per_class[c];
        out << r.split << ',' << t.name << ',' << r.classes[c] << ',' << (v ? format_real(*v) : kMissing) << '\n';
      }
      out << r.split << ',' << t.name << ",Average," << format_real(t.scores.average) << '\n';
    }
  }
  return out.str();
}

}  // namespace crosstask
