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

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crosstask/core/errors.hpp"
#include "crosstask/core/text.hpp"
#include "crosstask/train/task.hpp"

// Manifest CSV:
//
//   clip_id,path,labels,fold,verified
//   a001,audio/a001.wav,Bark;Meow,1,1
//
// `labels` holds class names separated by ';'. `fold` is an integer.
// `verified` is 1/0 or true/false. Blank lines and '#' lines are skipped.
// No quoting: clip ids, paths and class names may not contain ','.

namespace crosstask {

struct ManifestRow {
  std::string clip_id;
  std::string path;
  std::vector<std::size_t> labels;  // class indices, ascending
  int fold = 0;
  bool verified = true;

  bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  std::set<int> folds() const {
    std::set<int> out;
    for (const auto& r : rows) out.insert(r.fold);
    return out;
  }
};

/// Every problem found in a manifest, one per line with its row number.
class ManifestError : public FormatError {
 public:
  ManifestError(const std::string& source, std::vector<std::string> problems)
      : FormatError(summary(source, problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string summary(const std::string& source, const std::vector<std::string>& problems) {
    std::string out = source + ": " + std::to_string(problems.size()) + " manifest error(s)";
    for (const auto& p : problems) out += "\n  " + p;
    return out;
  }

  std::vector<std::string> problems_;
};

inline constexpr const char* kManifestHeader = "clip_id,path,labels,fold,verified";

/// Clip ids name feature files, so they stay within a portable character set.
inline bool valid_clip_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

/// Parses manifest text. When `audio_root` is set, every path (relative to
/// it) must name an existing file.
inline DatasetManifest parse_manifest_text(const std::string& text, const TaskAdapter& task,
                                           const std::string& source = "manifest",
                                           const std::optional<std::filesystem::path>& audio_root = std::nullopt) {
  std::map<std::string, std::size_t> class_index;
  for (std::size_t i = 0; i < task.classes.size(); ++i) class_index[task.classes[i]] = i;

  const auto lines = content_lines(text);
  if (lines.empty()) throw ManifestError(source, {"missing header '" + std::string(kManifestHeader) + "'"});
  if (std::string(trim(lines.front().second)) != kManifestHeader) {
    throw ManifestError(source, {"row " + std::to_string(lines.front().first) + ": expected header '" +
                                 kManifestHeader + "', got '" + lines.front().second + "'"});
  }

  DatasetManifest manifest;
  std::vector<std::string> problems;
  std::map<std::string, std::size_t> first_row;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [number, line] = lines[i];
    const std::string where = "row " + std::to_string(number) + ": ";
    auto cells = split(line, ',');
    if (cells.size() != 5) {
      problems.push_back(where + "expected 5 columns, found " + std::to_string(cells.size()));
      continue;
    }
    for (auto& c : cells) c = std::string(trim(c));
    ManifestRow row;
    bool ok = true;
    row.clip_id = cells[0];
    if (!valid_clip_id(row.clip_id)) {
      problems.push_back(where + "invalid clip_id '" + row.clip_id + "' (use letters, digits, '_', '-', '.')");
      ok = false;
    } else if (auto [it, inserted] = first_row.emplace(row.clip_id, number); !inserted) {
      problems.push_back(where + "duplicate clip_id '" + row.clip_id + "' (first seen on row " +
                         std::to_string(it->second) + ")");
      ok = false;
    }

    row.path = cells[1];
    if (row.path.empty()) {
      problems.push_back(where + "empty path");
      ok = false;
    } else if (audio_root && !std::filesystem::is_regular_file(*audio_root / row.path)) {
      problems.push_back(where + "missing file '" + (*audio_root / row.path).string() + "'");
      ok = false;
    }

    std::set<std::size_t> labels;
    if (!cells[2].empty()) {
      for (const auto& raw : split(cells[2], ';')) {
        const std::string name(trim(raw));
        auto it = class_index.find(name);
        if (it == class_index.end()) {
          problems.push_back(where + "unknown class '" + name + "'");
          ok = false;
        } else if (!labels.insert(it->second).second) {
          problems.push_back(where + "class '" + name + "' listed twice");
          ok = false;
        }
      }
    }
    row.labels.assign(labels.begin(), labels.end());
    if (ok && task.arity != LabelArity::multi && row.labels.size() != 1) {
      problems.push_back(where + "task " + std::to_string(task.id) + " needs exactly one label, found " +
                         std::to_string(row.labels.size()));
      ok = false;
    }

    const auto fold = parse_int(cells[3]);
    if (!fold || *fold < 0 || *fold > 1000000) {
      problems.push_back(where + "fold must be a non-negative integer, got '" + cells[3] + "'");
      ok = false;
    } else {
      row.fold = static_cast<int>(*fold);
    }

    const std::string& v = cells[4];
    if (v == "1" || v == "true") {
      row.verified = true;
    } else if (v == "0" || v == "false") {
      row.verified = false;
    } else {
      problems.push_back(where + "verified must be 1, 0, true or false, got '" + v + "'");
      ok = false;
    }
    if (ok) manifest.rows.push_back(std::move(row));
  }
  if (!problems.empty()) throw ManifestError(source, std::move(problems));
  return manifest;
}

inline DatasetManifest parse_manifest(const std::filesystem::path& path, const TaskAdapter& task,
                                      const std::optional<std::filesystem::path>& audio_root = std::nullopt) {
  return parse_manifest_text(read_text_file(path), task, path.string(), audio_root);
}

inline std::string format_manifest(const DatasetManifest& m, const TaskAdapter& task) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : m.rows) {
    std::string labels;
    for (std::size_t i = 0; i < r.labels.size(); ++i) labels += (i ? ";" : "") + task.classes.at(r.labels[i]);
    out += r.clip_id + "," + r.path + "," + labels + "," + std::to_string(r.fold) + "," + (r.verified ? "1" : "0") +
           "\n";
  }
  return out;
}

}  // namespace crosstask
