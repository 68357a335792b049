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

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "mxgate/synthgen.hpp"
#include "mxgate/trainkit.hpp"

using namespace mxgate;

TEST(Softmax, Examples) {
  const auto p = softmax(std::vector<double>{0, 0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  const auto q = softmax(std::vector<double>{1000, 0});
  EXPECT_TRUE(std::isfinite(q[0]) && std::isfinite(q[1]));
  EXPECT_NEAR(q[0], 1.0, 1e-15);
  EXPECT_NEAR(q[1], 0.0, 1e-300);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> z(14), zs(14);
    const double c = rng.uniform(-50, 50);
    for (std::size_t i = 0; i < 14; ++i) {
      z[i] = rng.uniform(-10, 10);
      zs[i] = z[i] + c;
    }
    const auto a = softmax(z), b = softmax(zs);
    double sum = 0;
    for (std::size_t i = 0; i < 14; ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      sum += a[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Crossentropy, UniformLogitsGiveLn14) {
  const auto lg = crossentropy(std::vector<double>(14, 0.0), 3);
  EXPECT_NEAR(lg.loss, 2.6390573296152584, 1e-15);
  EXPECT_THROW(crossentropy(std::vector<double>(14, 0.0), 14), LabelOutOfRange);
}

TEST(Crossentropy, GradientSumsToZeroAndMatchesFiniteDifferences) {
  Rng rng(2);
  constexpr double h = 1e-5;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(14);
    for (auto& v : z) v = rng.uniform(-3, 3);
    const auto y = rng.uniform_index(14);
    const auto lg = crossentropy(z, y);
    double sum = 0;
    for (double g : lg.grad) sum += g;
    EXPECT_NEAR(sum, 0.0, 1e-14);
    for (std::size_t i = 0; i < 14; ++i) {
      auto zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (crossentropy(zp, y).loss - crossentropy(zm, y).loss) / (2 * h);
      EXPECT_LE(std::abs(fd - lg.grad[i]), 1e-6 * std::max(1.0, std::abs(lg.grad[i])));
    }
  }
}

TEST(OneCycle, Endpoints) {
  const int T = 20000;
  EXPECT_DOUBLE_EQ(one_cycle_lr(0, T, 1e-3), 4e-5);
  EXPECT_DOUBLE_EQ(one_cycle_lr(6000, T, 1e-3), 1e-3);
  const double last = one_cycle_lr(T - 1, T, 1e-3);
  EXPECT_DOUBLE_EQ(last, 4e-9);
  const double increment = std::abs(one_cycle_lr(T - 2, T, 1e-3) - last);
  EXPECT_LE(std::abs(last - 1e-3 / 250000), increment + 1e-24);
  EXPECT_DOUBLE_EQ(one_cycle_lr(0, 1, 1e-3), 4e-5);
  EXPECT_THROW(one_cycle_lr(T, T, 1e-3), InvalidArgument);
}

TEST(OneCycle, RisesThenFalls) {
  const int T = 1000;
  for (int s = 1; s <= 300; ++s) EXPECT_GE(one_cycle_lr(s, T, 1e-3), one_cycle_lr(s - 1, T, 1e-3));
  for (int s = 301; s < T; ++s) EXPECT_LE(one_cycle_lr(s, T, 1e-3), one_cycle_lr(s - 1, T, 1e-3));
}

TEST(Adam, FirstStepClosedForm) {
  std::vector<double> p(5, 0.5), g(5, 1.0);
  AdamState st(5);
  adam_step(p, g, st, 1e-3);
  for (double v : p) EXPECT_NEAR(v, 0.5 - 1e-3 / (1 + 1e-8), 1e-15);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, ZeroGradientLeavesParams) {
  std::vector<double> p{1, -2, 3}, g(3, 0.0);
  AdamState st(3);
  adam_step(p, g, st, 1e-3);
  EXPECT_EQ(p, (std::vector<double>{1, -2, 3}));
}

TEST(Adam, DescendsQuadratic) {
  auto run = [](double lr) {
    std::vector<double> th{1.0}, g(1);
    AdamState st(1);
    double prev = 1.0;
    for (int i = 0; i < 100; ++i) {
      g[0] = 2 * th[0];
      adam_step(th, g, st, lr);
      EXPECT_LT(std::abs(th[0]), prev);
      prev = std::abs(th[0]);
    }
    return th[0];
  };
  // each step moves at most ~lr, so 1e-3 cannot leave [0.9, 1)
  EXPECT_NEAR(run(1e-3), 0.9017, 1e-3);
  EXPECT_LT(std::abs(run(1e-2)), 0.9);
}

namespace {

double full_model_gradient_error(int hidden, std::uint64_t seed) {
  Rng rng(seed);
  const int d = 7, c = 4, n = 5;
  auto m = ModelParams::init(d, c, hidden, seed);
  for (auto& v : m.params) v = rng.uniform(-0.5, 0.5);
  std::vector<double> xs(static_cast<std::size_t>(n * d));
  for (auto& v : xs) v = rng.uniform(0, 1);
  std::vector<std::size_t> ys(n);
  for (auto& y : ys) y = rng.uniform_index(c);
  std::vector<double> grad;
  loss_and_gradient(m, xs, ys, &grad);
  double worst = 0;
  constexpr double h = 1e-5;
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const double orig = m.params[i];
    m.params[i] = orig + h;
    const double lp = loss_and_gradient(m, xs, ys, nullptr);
    m.params[i] = orig - h;
    const double lm = loss_and_gradient(m, xs, ys, nullptr);
    m.params[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1e-3, std::abs(fd) + std::abs(grad[i])));
  }
  return worst;
}

}  // namespace

TEST(Model, LinearGradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_LT(full_model_gradient_error(0, s), 1e-5);
}

TEST(Model, HiddenLayerGradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_LT(full_model_gradient_error(6, s), 1e-5);
}

TEST(Model, ZeroLinearModelLossIsLn14) {
  const auto m = ModelParams::init(static_cast<int>(kPatchValues), 14, 0, 0);
  std::vector<double> xs(14 * kPatchValues, 0.3);
  std::vector<std::size_t> ys(14);
  for (std::size_t i = 0; i < 14; ++i) ys[i] = i;
  EXPECT_NEAR(loss_and_gradient(m, xs, ys, nullptr), std::log(14.0), 1e-12);
}

TEST(Predict, ZeroModelTiesToClassZero) {
  const auto m = ModelParams::init(static_cast<int>(kPatchValues), 14, 0, 0);
  std::vector<Patch> patches(3);
  patches[1].pixels.fill(200);
  for (const auto& p : predict(m, patches)) {
    EXPECT_EQ(p.label, 0);
    double sum = 0;
    for (double v : p.probabilities) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  const auto small = ModelParams::init(10, 14, 0, 0);
  EXPECT_THROW(predict(small, patches), DimensionMismatch);
}

TEST(Train, RejectsZeroSteps) {
  const auto ds = make_separable_dataset({"a", "b"}, 5, 5, 5, 1);
  TrainConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(train(ds, 0, cfg), InvalidArgument);
}

TEST(Train, TwoSeparableClasses) {
  const auto ds = make_separable_dataset({"a", "b"}, 50, 50, 50, 2);
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.batch_size = 8;
  cfg.seed = 3;
  const auto t = train(ds, 0, cfg);
  EXPECT_GE(t.best_val_accuracy, 0.99);
  for (const auto& v : t.validation) EXPECT_LE(t.best_val_loss, v.loss);
  const auto test = records_with_role(ds, 0, Role::Test);
  const auto preds = predict(t.model, ds, test);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < test.size(); ++i) ok += preds[i].label == ds.records[test[i]].label;
  EXPECT_GE(static_cast<double>(ok) / test.size(), 0.99);
}

TEST(Train, DeterministicCurvesAndThreadIndependent) {
  const auto ds = make_separable_dataset({"a", "b", "c"}, 10, 10, 2, 4);
  TrainConfig cfg;
  cfg.steps = 60;
  cfg.batch_size = 6;
  cfg.validate_every = 20;
  cfg.hidden = 4;
  cfg.seed = 9;
  const auto a = train(ds, 0, cfg);
  cfg.threads = 3;
  const auto b = train(ds, 0, cfg);
  EXPECT_EQ(a.train_loss, b.train_loss);
  ASSERT_EQ(a.validation.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.validation[i].loss, b.validation[i].loss);
  EXPECT_EQ(a.model, b.model);
}

TEST(Train, EmptyClassPropagates) {
  auto ds = make_separable_dataset({"a", "b"}, 3, 3, 3, 1);
  std::erase_if(ds.records, [](const PatchRecord& r) { return r.label == 1 && r.slide_index == 1; });
  TrainConfig cfg;
  cfg.steps = 5;
  EXPECT_THROW(train(ds, 0, cfg), EmptyClass);
}

TEST(Serialization, ModelRoundTrip) {
  const auto ds = make_separable_dataset({"a", "b", "c"}, 4, 4, 4, 1);
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.batch_size = 4;
  cfg.validate_every = 5;
  cfg.hidden = 3;
  const auto t = train(ds, 0, cfg);
  const auto path = std::filesystem::temp_directory_path() / "mxgate_model_rt.nucm";
  save_model(path, t);
  const auto back = load_model(path);
  EXPECT_EQ(back.model, t.model);
  EXPECT_EQ(back.best_step, t.best_step);
  EXPECT_EQ(back.best_val_loss, t.best_val_loss);
  EXPECT_EQ(back.classes, t.classes);
  EXPECT_EQ(back.config.hidden, 3);
  auto bytes = encode_model(t);
  bytes.pop_back();
  EXPECT_THROW(decode_model(bytes), DecodeError);
}

TEST(Serialization, PredictionsCsv) {
  const auto ds = make_separable_dataset({"a", "b"}, 1, 1, 2, 1);
  const auto m = ModelParams::init(static_cast<int>(kPatchValues), 2, 0, 0);
  const auto idx = records_with_role(ds, 0, Role::Test);
  const auto preds = predict(m, ds, idx);
  std::ostringstream os;
  write_predictions_csv(os, ds, idx, preds);
  const auto lines = split_lines(os.str());
  EXPECT_EQ(lines[0], "nucleus_id,slide_id,true_label,pred_label,p0,p1");
  EXPECT_EQ(lines[1], "1,SEP-PE,0,0,0.5,0.5");
  const auto rows = read_predictions_csv(os.str());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[3].true_label, 1);
}
