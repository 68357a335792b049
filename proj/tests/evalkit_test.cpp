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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "mxgate/evalkit.hpp"
#include "mxgate/rng.hpp"

using namespace mxgate;

namespace {

ClassMetrics metrics_with_ppv(std::vector<std::optional<double>> ppv) {
  ClassMetrics m;
  const std::size_t k = ppv.size();
  m.counts.resize(k);
  m.ppv = std::move(ppv);
  m.npv.assign(k, 0.5);
  m.prevalence.assign(k, 1.0 / static_cast<double>(k));
  m.accuracy.assign(k, 0.5);
  return m;
}

}  // namespace

TEST(Confusion, Examples) {
  const ConfusionMatrix empty = confusion_from_predictions({});
  EXPECT_EQ(empty.total(), 0u);
  const std::vector<std::pair<int, int>> pairs{{0, 0}, {0, 1}, {1, 1}};
  const auto cm = confusion_from_predictions(pairs);
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(1, 1), 1u);
  EXPECT_EQ(cm.total(), 3u);
  const std::vector<std::pair<int, int>> bad{{0, 14}};
  EXPECT_THROW(confusion_from_predictions(bad), LabelOutOfRange);
  const std::vector<std::pair<int, int>> neg{{-1, 0}};
  EXPECT_THROW(confusion_from_predictions(neg), LabelOutOfRange);
}

TEST(Confusion, RowSumsAreTrueCounts) {
  Rng rng(5);
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::uint64_t> truth(14, 0);
  for (int i = 0; i < 5000; ++i) {
    const int t = static_cast<int>(rng.uniform_index(14));
    pairs.emplace_back(t, static_cast<int>(rng.uniform_index(14)));
    ++truth[static_cast<std::size_t>(t)];
  }
  const auto cm = confusion_from_predictions(pairs);
  for (std::size_t c = 0; c < 14; ++c) EXPECT_EQ(cm.row_sum(c), truth[c]);
  // order independence
  rng.shuffle(std::span(pairs));
  EXPECT_EQ(confusion_from_predictions(pairs), cm);
}

TEST(Metrics, FormulaExamples) {
  ConfusionMatrix cm(3);
  cm.add(0, 0, 3);
  cm.add(1, 0, 1);  // FP for class 0
  cm.add(1, 1, 5);
  cm.add(2, 2, 4);
  cm.add(0, 2, 1);  // FN for class 0
  const auto m = class_metrics(cm);
  EXPECT_DOUBLE_EQ(*m.ppv[0], 0.75);
  // class 0: TN = 14 - 3 - 1 - 1 = 9, FN = 1
  EXPECT_EQ(m.counts[0].tn, 9u);
  EXPECT_DOUBLE_EQ(*m.npv[0], 0.9);
  EXPECT_DOUBLE_EQ(*m.accuracy[0], 0.75);
  EXPECT_DOUBLE_EQ(*m.prevalence[0], 4.0 / 14.0);
  EXPECT_THROW(class_metrics(ConfusionMatrix(3)), EmptyMatrix);
}

TEST(Metrics, PerfectDiagonal) {
  ConfusionMatrix cm(14);
  for (int c = 0; c < 14; ++c) cm.add(c, c, static_cast<std::uint64_t>(c + 1));
  const auto m = class_metrics(cm);
  for (std::size_t c = 0; c < 14; ++c) {
    EXPECT_EQ(*m.ppv[c], 1.0);
    EXPECT_EQ(*m.npv[c], 1.0);
    EXPECT_EQ(*m.accuracy[c], 1.0);
  }
}

TEST(Metrics, UndefinedWhenDenominatorZero) {
  ConfusionMatrix cm(3);
  cm.add(0, 0, 2);
  const auto m = class_metrics(cm);
  EXPECT_FALSE(m.ppv[1].has_value());
  EXPECT_FALSE(m.accuracy[1].has_value());
  EXPECT_EQ(*m.prevalence[1], 0.0);
  EXPECT_FALSE(m.npv[0].has_value());  // TN + FN = 0
}

TEST(Metrics, RandomMatricesMatchRecordLevelRecount) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionMatrix cm(14);
    std::vector<std::pair<int, int>> records;
    const auto n = 1 + rng.uniform_index(300);
    for (std::uint64_t i = 0; i < n; ++i) {
      const int t = static_cast<int>(rng.uniform_index(14));
      const int p = rng.uniform01() < 0.4 ? t : static_cast<int>(rng.uniform_index(14));
      records.emplace_back(t, p);
      cm.add(t, p);
    }
    const auto m = class_metrics(cm);
    std::uint64_t prevalence_num = 0;
    for (int c = 0; c < 14; ++c) {
      std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
      for (const auto& [t, p] : records) {
        if (t == c && p == c) ++tp;
        else if (t != c && p == c) ++fp;
        else if (t == c && p != c) ++fn;
        else ++tn;
      }
      const auto& o = m.counts[static_cast<std::size_t>(c)];
      ASSERT_EQ(o, (OneVsRest{tp, fp, fn, tn}));
      auto expect = [](const std::optional<double>& got, std::uint64_t num, std::uint64_t den) {
        if (den == 0) {
          ASSERT_FALSE(got.has_value());
        } else {
          ASSERT_TRUE(got.has_value());
          ASSERT_EQ(*got, static_cast<double>(num) / static_cast<double>(den));
        }
      };
      expect(m.ppv[static_cast<std::size_t>(c)], tp, tp + fp);
      expect(m.npv[static_cast<std::size_t>(c)], tn, tn + fn);
      expect(m.prevalence[static_cast<std::size_t>(c)], tp + fn, n);
      expect(m.accuracy[static_cast<std::size_t>(c)], tp, tp + fn);
      if (tp + fp > 0) ASSERT_EQ(tp, o.tp);
      prevalence_num += tp + fn;
    }
    ASSERT_EQ(prevalence_num, n);
    double sum = 0;
    for (const auto& p : m.prevalence) sum += *p;
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Aggregate, ArithmeticExample) {
  std::vector<ClassMetrics> folds;
  for (double v : {0.2, 0.3, 0.4, 0.3, 0.3}) folds.push_back(metrics_with_ppv({v}));
  const auto s = aggregate_folds(folds, {"helper T"});
  const auto& ppv = s.get(0, Metric::Ppv);
  EXPECT_NEAR(*ppv.mean, 0.3, 1e-15);
  EXPECT_NEAR(*ppv.std, 0.07071067811865477, 1e-15);
  EXPECT_EQ(ppv.n_folds, 5);
  EXPECT_EQ(s.get(0, Metric::Npv).std, 0.0);  // identical folds
}

TEST(Aggregate, UndefinedExcluded) {
  std::vector<ClassMetrics> folds;
  for (auto v : std::vector<std::optional<double>>{0.2, std::nullopt, 0.4, 0.3, 0.3}) folds.push_back(metrics_with_ppv({v}));
  const auto s = aggregate_folds(folds, {});
  const auto& ppv = s.get(0, Metric::Ppv);
  EXPECT_NEAR(*ppv.mean, 0.3, 1e-15);
  EXPECT_EQ(ppv.n_folds, 4);
  EXPECT_EQ(ppv.n_excluded, 1);
  EXPECT_EQ(s.classes[0], "class0");
  std::vector<ClassMetrics> one{metrics_with_ppv({0.5})};
  EXPECT_THROW(aggregate_folds(one, {}), InsufficientFolds);
  std::vector<ClassMetrics> sparse{metrics_with_ppv({std::nullopt}), metrics_with_ppv({0.5})};
  const auto t = aggregate_folds(sparse, {});
  EXPECT_EQ(*t.get(0, Metric::Ppv).mean, 0.5);
  EXPECT_FALSE(t.get(0, Metric::Ppv).std.has_value());
}

TEST(Report, LearnedFlagCutoffs) {
  std::vector<ClassMetrics> folds;
  for (int f = 0; f < 5; ++f) folds.push_back(metrics_with_ppv({0.34, 0.1, std::nullopt, 0.3}));
  const auto s = aggregate_folds(folds, {"helper T", "B", "x", "y"});
  EXPECT_TRUE(flag_learned(s, 0, 0.3));
  EXPECT_FALSE(flag_learned(s, 1, 0.3));
  EXPECT_FALSE(flag_learned(s, 2, 0.3));
  EXPECT_TRUE(flag_learned(s, 3, 0.3));
  for (std::size_t c : {0u, 1u, 3u}) {
    EXPECT_TRUE(flag_learned(s, c, 0.0));
    EXPECT_FALSE(flag_learned(s, c, 1.01));
  }
}

TEST(Report, CsvAndJsonFiles) {
  std::vector<ClassMetrics> folds;
  for (double v : {0.2, 0.4}) folds.push_back(metrics_with_ppv({v, std::nullopt}));
  const auto s = aggregate_folds(folds, {"helper T", "B"});
  const auto stem = std::filesystem::temp_directory_path() / "mxgate_report";
  emit_report(s, stem);
  const auto lines = split_lines(read_text_file(stem.string() + ".csv"));
  ASSERT_EQ(lines.size(), 9u);
  EXPECT_EQ(lines[0], "class,metric,mean,std,n_folds,n_excluded,flag_learned");
  EXPECT_EQ(lines[1].substr(0, 16), "helper T,ppv,0.3");
  EXPECT_EQ(lines[5], "B,ppv,,,0,2,false");
  const auto j = nlohmann::json::parse(read_text_file(stem.string() + ".json"));
  EXPECT_TRUE(j["classes"][0]["flag_learned"].get<bool>());
  EXPECT_TRUE(j["classes"][1]["ppv"]["mean"].is_null());
  EXPECT_THROW(emit_report(s, "/nonexistent-dir/x/report"), IoError);
}
