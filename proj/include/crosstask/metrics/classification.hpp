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
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "crosstask/core/errors.hpp"

namespace crosstask {

using ProbabilityRows = std::vector<std::vector<double>>;

/// Per-class values with a macro average. Classes that have no support
/// (absent from both truth and predictions) carry no value and are left out
/// of the average.
struct ClassScores {
  std::vector<std::optional<double>> per_class;
  double average = 0.0;

  static ClassScores from(std::vector<std::optional<double>> values) {
    ClassScores s{std::move(values), 0.0};
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& v : s.per_class) {
      if (v) total += *v, ++n;
    }
    s.average = n == 0 ? 0.0 : total / static_cast<double>(n);
    return s;
  }
};

/// Index of the largest value; the first one wins ties.
inline std::size_t argmax(const std::vector<double>& row) {
  if (row.empty()) throw UsageError("argmax of an empty row");
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

namespace detail {

inline void check_rows(const ProbabilityRows& probs, const std::vector<std::size_t>& truth, std::size_t classes) {
  if (probs.size() != truth.size()) {
    throw ShapeError(std::to_string(probs.size()) + " prediction rows for " + std::to_string(truth.size()) + " labels");
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != classes) throw ShapeError("prediction row " + std::to_string(i) + " has the wrong width");
    if (truth[i] >= classes) throw ShapeError("label index out of range in row " + std::to_string(i));
  }
}

inline std::size_t width_of(const ProbabilityRows& probs) { return probs.empty() ? 0 : probs.front().size(); }

}  // namespace detail

/// counts[true][predicted] with argmax predictions.
inline std::vector<std::vector<std::size_t>> confusion_matrix(const ProbabilityRows& probs,
                                                              const std::vector<std::size_t>& truth,
                                                              std::size_t classes) {
  detail::check_rows(probs, truth, classes);
  std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < probs.size(); ++i) ++m[truth[i]][argmax(probs[i])];
  return m;
}

struct AccuracyResult {
  ClassScores classwise;  // correct / count within each true class; average is the reported accuracy
  double micro = 0.0;     // fraction of clips predicted correctly
};

inline AccuracyResult accuracy(const ProbabilityRows& probs, const std::vector<std::size_t>& truth,
                               std::size_t classes) {
  const auto m = confusion_matrix(probs, truth, classes);
  std::vector<std::optional<double>> per(classes);
  std::size_t correct = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t count = std::accumulate(m[c].begin(), m[c].end(), std::size_t{0});
    correct += m[c][c];
    if (count > 0) per[c] = static_cast<double>(m[c][c]) / static_cast<double>(count);
  }
  AccuracyResult r{ClassScores::from(std::move(per)), 0.0};
  r.micro = probs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(probs.size());
  return r;
}

/// 1-based rank of `label` in `row`; ties go to the lower class index.
inline std::size_t rank_of(const std::vector<double>& row, std::size_t label) {
  std::size_t rank = 1;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] > row[label] || (row[j] == row[label] && j < label)) ++rank;
  }
  return rank;
}

/// Mean over clips of 1/rank of the true label when it is in the top k.
inline double map_at_k(const ProbabilityRows& probs, const std::vector<std::size_t>& truth, std::size_t k = 3) {
  if (k == 0) throw UsageError("map_at_k: k must be at least 1");
  detail::check_rows(probs, truth, detail::width_of(probs));
  if (probs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::size_t r = rank_of(probs[i], truth[i]);
    if (r <= k) total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(probs.size());
}

/// Mann-Whitney AUC by rank sum with midranks for ties:
/// P(pos > neg) + P(pos == neg) / 2.
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UsageError("roc_auc is undefined when only one class is present");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;  // ranks doubled to stay integral
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double doubled_midrank = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) pos_rank_sum += doubled_midrank;
    }
    i = j;
  }
  const double u = pos_rank_sum / 2.0 - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Per-class AUC over a multi-hot truth matrix. Classes whose truth column is
/// all positive or all negative have no AUC and are left out of the average.
inline ClassScores tagging_auc(const ProbabilityRows& probs, const std::vector<std::vector<bool>>& truth) {
  if (probs.size() != truth.size()) throw ShapeError("tagging_auc: row count mismatch");
  const std::size_t classes = detail::width_of(probs);
  std::vector<std::optional<double>> per(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> s;
    std::vector<bool> y;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i].size() != classes || truth[i].size() != classes) throw ShapeError("tagging_auc: ragged rows");
      s.push_back(probs[i][c]);
      y.push_back(truth[i][c]);
    }
    const auto pos = std::count(y.begin(), y.end(), true);
    if (pos > 0 && static_cast<std::size_t>(pos) < y.size()) per[c] = roc_auc(s, y);
  }
  return ClassScores::from(std::move(per));
}

/// F1 from true positive, false positive and false negative counts; empty
/// when all three are zero, 0 when precision + recall is 0.
inline std::optional<double> f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp + fp + fn == 0) return std::nullopt;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

/// Per-class F1 of argmax predictions against single labels.
inline ClassScores f1_per_class(const ProbabilityRows& probs, const std::vector<std::size_t>& truth,
                                std::size_t classes) {
  const auto m = confusion_matrix(probs, truth, classes);
  std::vector<std::optional<double>> per(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < classes; ++o) {
      if (o == c) continue;
      fp += m[o][c];
      fn += m[c][o];
    }
    per[c] = f1_from_counts(m[c][c], fp, fn);
  }
  return ClassScores::from(std::move(per));
}

}  // namespace crosstask
