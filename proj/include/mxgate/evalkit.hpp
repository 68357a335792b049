// Copyright 2026 The mxgate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/text_io.hpp"

namespace mxgate {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(std::size_t classes = 14) : k_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return k_; }
  std::uint64_t at(std::size_t t, std::size_t p) const { return counts_.at(t * k_ + p); }

  void add(int truth, int predicted, std::uint64_t n = 1) {
    if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= k_ || static_cast<std::size_t>(predicted) >= k_)
      throw LabelOutOfRange("pair (" + std::to_string(truth) + ", " + std::to_string(predicted) + ") outside [0, " +
                            std::to_string(k_) + ")");
    counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted)] += n;
  }

  void merge(const ConfusionMatrix& o) {
    if (o.k_ != k_) throw DimensionMismatch("confusion matrix");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  std::uint64_t row_sum(std::size_t t) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < k_; ++p) s += at(t, p);
    return s;
  }

  std::uint64_t col_sum(std::size_t p) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < k_; ++t) s += at(t, p);
    return s;
  }

  bool operator==(const ConfusionMatrix&) const = default;

private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion_from_predictions(std::span<const std::pair<int, int>> pairs, std::size_t classes = 14) {
  ConfusionMatrix cm(classes);
  for (const auto& [t, p] : pairs) cm.add(t, p);
  return cm;
}

enum class Metric { Ppv, Npv, Prevalence, Accuracy };
inline constexpr std::array<Metric, 4> kMetrics{Metric::Ppv, Metric::Npv, Metric::Prevalence, Metric::Accuracy};

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::Ppv: return "ppv";
    case Metric::Npv: return "npv";
    case Metric::Prevalence: return "prevalence";
    case Metric::Accuracy: return "accuracy";
  }
  return "?";
}

struct OneVsRest {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  bool operator==(const OneVsRest&) const = default;
};

/// Per-class one-vs-rest metrics. Accuracy is per-class recall. Undefined
/// values (zero denominators) are empty optionals.
struct ClassMetrics {
  std::vector<OneVsRest> counts;
  std::vector<std::optional<double>> ppv, npv, prevalence, accuracy;
  std::uint64_t total = 0;

  const std::vector<std::optional<double>>& of(Metric m) const {
    switch (m) {
      case Metric::Ppv: return ppv;
      case Metric::Npv: return npv;
      case Metric::Prevalence: return prevalence;
      case Metric::Accuracy: return accuracy;
    }
    return ppv;
  }

  std::size_t classes() const noexcept { return counts.size(); }
};

inline ClassMetrics class_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t n = cm.total();
  if (n == 0) throw EmptyMatrix();
  ClassMetrics m;
  m.total = n;
  auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    OneVsRest o;
    o.tp = cm.at(c, c);
    o.fp = cm.col_sum(c) - o.tp;
    o.fn = cm.row_sum(c) - o.tp;
    o.tn = n - o.tp - o.fp - o.fn;
    m.counts.push_back(o);
    m.ppv.push_back(ratio(o.tp, o.tp + o.fp));
    m.npv.push_back(ratio(o.tn, o.tn + o.fn));
    m.prevalence.push_back(ratio(o.tp + o.fn, n));
    m.accuracy.push_back(ratio(o.tp, o.tp + o.fn));
  }
  return m;
}

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> std;  // sample (n-1) deviation; needs 2 defined folds
  int n_folds = 0;            // folds with a defined value
  int n_excluded = 0;         // folds where the value was undefined
};

struct CrossFoldSummary {
  std::vector<std::string> classes;
  int folds = 0;
  // [class][metric in kMetrics order]
  std::vector<std::array<MetricSummary, 4>> values;

  const MetricSummary& get(std::size_t cls, Metric m) const { return values.at(cls)[static_cast<std::size_t>(m)]; }
};

inline MetricSummary summarize(std::span<const std::optional<double>> values) {
  MetricSummary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) {
      ++s.n_excluded;
      continue;
    }
    ++s.n_folds;
    sum += *v;
  }
  if (s.n_folds == 0) return s;
  const double mean = sum / s.n_folds;
  s.mean = mean;
  if (s.n_folds >= 2) {
    double ss = 0.0;
    for (const auto& v : values)
      if (v) ss += (*v - mean) * (*v - mean);
    s.std = std::sqrt(ss / (s.n_folds - 1));
  }
  return s;
}

inline CrossFoldSummary aggregate_folds(std::span<const ClassMetrics> folds, std::vector<std::string> classes) {
  if (folds.size() < 2) throw InsufficientFolds(folds.size());
  const std::size_t k = folds.front().classes();
  for (const auto& f : folds)
    if (f.classes() != k) throw DimensionMismatch("fold class counts differ");
  if (classes.empty())
    for (std::size_t c = 0; c < k; ++c) classes.push_back("class" + std::to_string(c));
  if (classes.size() != k) throw DimensionMismatch("class names");

  CrossFoldSummary out;
  out.classes = std::move(classes);
  out.folds = static_cast<int>(folds.size());
  out.values.resize(k);
  std::vector<std::optional<double>> column(folds.size());
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t mi = 0; mi < kMetrics.size(); ++mi) {
      for (std::size_t f = 0; f < folds.size(); ++f) column[f] = folds[f].of(kMetrics[mi])[c];
      out.values[c][mi] = summarize(column);
    }
  return out;
}

/// Mean PPV defined and at least the cutoff.
inline bool flag_learned(const CrossFoldSummary& s, std::size_t cls, double cutoff) {
  const auto& m = s.get(cls, Metric::Ppv).mean;
  return m && *m >= cutoff;
}

inline std::string report_csv(const CrossFoldSummary& s, double cutoff = 0.3) {
  std::ostringstream os;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  os << "class,metric,mean,std,n_folds,n_excluded,flag_learned\n";
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    const bool learned = flag_learned(s, c, cutoff);
    for (Metric m : kMetrics) {
      const auto& v = s.get(c, m);
      os << csv_field(s.classes[c]) << ',' << to_string(m) << ',' << opt(v.mean) << ',' << opt(v.std) << ','
         << v.n_folds << ',' << v.n_excluded << ',' << (learned ? "true" : "false") << '\n';
    }
  }
  return os.str();
}

inline nlohmann::json report_json(const CrossFoldSummary& s, double cutoff = 0.3) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json j;
  j["folds"] = s.folds;
  j["ppv_cutoff"] = cutoff;
  j["classes"] = nlohmann::json::array();
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    nlohmann::json e;
    e["class"] = s.classes[c];
    e["flag_learned"] = flag_learned(s, c, cutoff);
    for (Metric m : kMetrics) {
      const auto& v = s.get(c, m);
      e[to_string(m)] = {{"mean", opt(v.mean)}, {"std", opt(v.std)}, {"n_folds", v.n_folds}, {"n_excluded", v.n_excluded}};
    }
    j["classes"].push_back(e);
  }
  return j;
}

/// Writes `<stem>.csv` and `<stem>.json`.
inline void emit_report(const CrossFoldSummary& s, const std::filesystem::path& stem, double cutoff = 0.3) {
  auto csv = stem;
  csv += ".csv";
  auto json = stem;
  json += ".json";
  write_text_file(csv, report_csv(s, cutoff));
  write_text_file(json, report_json(s, cutoff).dump(2) + "\n");
}

}  // namespace mxgate
