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
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "crosstask/core/errors.hpp"
#include "crosstask/metrics/classification.hpp"

namespace crosstask {

struct Event {
  std::size_t cls = 0;
  double onset = 0.0;
  double offset = 0.0;

  bool operator==(const Event&) const = default;
};

/// Events of one clip, sorted by class then onset.
using EventList = std::vector<Event>;

/// Events keyed by clip id.
using EventMap = std::map<std::string, EventList>;

inline void sort_events(EventList& events) {
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.cls != b.cls ? a.cls < b.cls : a.onset < b.onset;
  });
}

/// One whole-clip event per class whose clip probability reaches the threshold.
inline EventList sed1_decode(const std::vector<double>& clip_probs, double threshold, double clip_seconds) {
  if (!(clip_seconds > 0)) throw ConfigError("sed1: clip duration must be positive");
  EventList out;
  for (std::size_t c = 0; c < clip_probs.size(); ++c) {
    if (clip_probs[c] >= threshold) out.push_back({c, 0.0, clip_seconds});
  }
  return out;
}

/// Hysteresis thresholding per class over frame probabilities (frames x
/// classes). Every maximal run of frames >= lo that contains a frame >= hi
/// becomes one event [start/fps, (end+1)/fps).
inline EventList sed2_decode(const ProbabilityRows& frames, double hi, double lo, double frames_per_second) {
  if (!(0.0 <= lo && lo <= hi && hi <= 1.0)) throw ConfigError("sed2: thresholds must satisfy 0 <= lo <= hi <= 1");
  if (!(frames_per_second > 0)) throw ConfigError("sed2: frames per second must be positive");
  EventList out;
  const std::size_t classes = detail::width_of(frames);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t t = 0;
    while (t < frames.size()) {
      if (frames[t].size() != classes) throw ShapeError("sed2: ragged frame matrix");
      if (frames[t][c] < lo) {
        ++t;
        continue;
      }
      const std::size_t start = t;
      bool seeded = false;
      while (t < frames.size() && frames[t][c] >= lo) seeded |= frames[t++][c] >= hi;
      if (seeded) {
        out.push_back({c, static_cast<double>(start) / frames_per_second, static_cast<double>(t) / frames_per_second});
      }
    }
  }
  return out;
}

struct EventCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Absolute slack on time comparisons so frame-derived times such as
/// 0.1 + 0.2 still meet a 0.3 s tolerance.
inline constexpr double kTimeSlack = 1e-9;

inline bool events_match(const Event& ref, const Event& est, double collar) {
  const double offset_tol = std::max(collar, 0.2 * (ref.offset - ref.onset));
  return ref.cls == est.cls && std::abs(ref.onset - est.onset) <= collar + kTimeSlack &&
         std::abs(ref.offset - est.offset) <= offset_tol + kTimeSlack;
}

/// Greedy one-to-one matching for one clip: estimates in onset order each
/// take the earliest-onset unmatched reference they satisfy. Adds the
/// per-class outcome to `counts`.
inline void count_event_matches(const EventList& reference, const EventList& estimate, double collar,
                                std::vector<EventCounts>& counts) {
  auto by_onset = [](const Event& a, const Event& b) { return a.onset != b.onset ? a.onset < b.onset : a.offset < b.offset; };
  EventList ref = reference, est = estimate;
  std::stable_sort(ref.begin(), ref.end(), by_onset);
  std::stable_sort(est.begin(), est.end(), by_onset);
  std::vector<bool> used(ref.size(), false);
  for (const Event& e : est) {
    if (e.cls >= counts.size()) throw ShapeError("event class index out of range");
    bool matched = false;
    for (std::size_t r = 0; r < ref.size() && !matched; ++r) {
      if (!used[r] && events_match(ref[r], e, collar)) used[r] = matched = true;
    }
    ++(matched ? counts[e.cls].tp : counts[e.cls].fp);
  }
  for (std::size_t r = 0; r < ref.size(); ++r) {
    if (ref[r].cls >= counts.size()) throw ShapeError("event class index out of range");
    if (!used[r]) ++counts[ref[r].cls].fn;
  }
}

/// Event-based per-class F1 summed over all clips present in either map.
inline ClassScores event_f1(const EventMap& reference, const EventMap& estimate, std::size_t classes,
                            double collar = 0.2) {
  std::vector<EventCounts> counts(classes);
  const EventList none;
  for (const auto& [clip, ref] : reference) {
    auto it = estimate.find(clip);
    count_event_matches(ref, it == estimate.end() ? none : it->second, collar, counts);
  }
  for (const auto& [clip, est] : estimate) {
    if (!reference.contains(clip)) count_event_matches(none, est, collar, counts);
  }
  std::vector<std::optional<double>> per(classes);
  for (std::size_t c = 0; c < classes; ++c) per[c] = f1_from_counts(counts[c].tp, counts[c].fp, counts[c].fn);
  return ClassScores::from(std::move(per));
}

}  // namespace crosstask
