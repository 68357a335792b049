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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/patchset.hpp"
#include "mxgate/phenotype.hpp"
#include "mxgate/rng.hpp"
#include "mxgate/text_io.hpp"

namespace mxgate {

// ---------------------------------------------------------------------------
// Loss

/// Numerically stable softmax (max subtraction).
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= sum;
  return p;
}

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logits
};

/// -log softmax(z)[y] and its gradient softmax(z) - onehot(y).
inline LossGrad crossentropy(std::span<const double> logits, std::size_t true_class) {
  if (true_class >= logits.size()) throw LabelOutOfRange("class " + std::to_string(true_class) + " of " + std::to_string(logits.size()));
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  LossGrad out;
  out.loss = std::log(sum) - (logits[true_class] - mx);
  out.grad = softmax(logits);
  out.grad[true_class] -= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct TrainConfig {
  int steps = 20000;
  int batch_size = 256;
  double peak_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_fraction = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  int validate_every = 250;
  int hidden = 0;  // 0: multinomial logistic regression
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    if (steps < 1) throw InvalidArgument("steps must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (!(peak_lr > 0.0)) throw InvalidArgument("peak learning rate must be positive");
    if (validate_every < 1) throw InvalidArgument("validation interval must be >= 1");
    if (hidden < 0) throw InvalidArgument("hidden width must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw InvalidArgument("warmup fraction must be in [0, 1]");
    if (!(div_factor > 0.0) || !(final_div_factor > 0.0)) throw InvalidArgument("division factors must be positive");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps}, {"batch_size", c.batch_size}, {"peak_lr", c.peak_lr}, {"beta1", c.beta1},
          {"beta2", c.beta2}, {"eps", c.eps}, {"warmup_fraction", c.warmup_fraction}, {"div_factor", c.div_factor},
          {"final_div_factor", c.final_div_factor}, {"validate_every", c.validate_every}, {"hidden", c.hidden},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.peak_lr = j.value("peak_lr", c.peak_lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.div_factor = j.value("div_factor", c.div_factor);
    c.final_div_factor = j.value("final_div_factor", c.final_div_factor);
    c.validate_every = j.value("validate_every", c.validate_every);
    c.hidden = j.value("hidden", c.hidden);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("<train config>", e.what());
  }
  return c;
}

/// Cosine one-cycle schedule. Rises from peak/div to peak at step
/// round(warmup*T), then anneals to peak/(div*final_div) at step T-1.
inline double one_cycle_lr(int step, int total, double peak, const TrainConfig& cfg = {}) {
  if (total < 1 || step < 0 || step >= total) throw InvalidArgument("step outside [0, T)");
  const double initial = peak / cfg.div_factor;
  const double final = initial / cfg.final_div_factor;
  const int boundary = std::min(total - 1, static_cast<int>(std::lround(cfg.warmup_fraction * total)));
  auto cosine = [](double from, double to, double t) { return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)); };
  if (step <= boundary) {
    if (boundary == 0) return total == 1 ? initial : peak;
    return cosine(initial, peak, static_cast<double>(step) / boundary);
  }
  return cosine(peak, final, static_cast<double>(step - boundary) / (total - 1 - boundary));
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update; increments state.t first.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                      const TrainConfig& cfg = {}) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw DimensionMismatch("adam state");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Reference model

/// Linear softmax classifier, or one ReLU hidden layer when hidden > 0.
/// All parameters live in one flat vector:
///   linear: W[input][classes], b[classes]
///   mlp:    W1[input][hidden], b1[hidden], W2[hidden][classes], b2[classes]
struct ModelParams {
  int input_dim = static_cast<int>(kPatchValues);
  int classes = 14;
  int hidden = 0;
  std::vector<double> params;

  static std::size_t param_count(int input_dim, int classes, int hidden) {
    const auto d = static_cast<std::size_t>(input_dim), c = static_cast<std::size_t>(classes),
               h = static_cast<std::size_t>(hidden);
    return hidden == 0 ? d * c + c : d * h + h + h * c + c;
  }

  /// Zero weights for the linear model; seeded uniform +-1/sqrt(fan_in)
  /// weights and zero biases for the hidden-layer variant.
  static ModelParams init(int input_dim, int classes, int hidden, std::uint64_t seed) {
    if (input_dim < 1 || classes < 1 || hidden < 0) throw InvalidArgument("model dimensions must be positive");
    ModelParams m;
    m.input_dim = input_dim;
    m.classes = classes;
    m.hidden = hidden;
    m.params.assign(param_count(input_dim, classes, hidden), 0.0);
    if (hidden > 0) {
      Rng rng(seed);
      const auto d = static_cast<std::size_t>(input_dim), h = static_cast<std::size_t>(hidden);
      const double a1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
      const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
      for (std::size_t i = 0; i < d * h; ++i) m.params[i] = rng.uniform(-a1, a1);
      const std::size_t w2 = d * h + h;
      for (std::size_t i = 0; i < h * static_cast<std::size_t>(classes); ++i) m.params[w2 + i] = rng.uniform(-a2, a2);
    }
    return m;
  }

  void check() const {
    if (params.size() != param_count(input_dim, classes, hidden)) throw DimensionMismatch("model parameters");
    for (double v : params)
      if (!std::isfinite(v)) throw InvalidArgument("model has non-finite parameters");
  }

  bool operator==(const ModelParams&) const = default;
};

namespace detail {

struct Scratch {
  std::vector<double> pre;     // hidden pre-activations
  std::vector<double> act;     // hidden activations
  std::vector<double> logits;
  std::vector<double> gh;      // gradient wrt hidden activations
};

inline void forward(const ModelParams& m, const double* x, Scratch& s) {
  const auto d = static_cast<std::size_t>(m.input_dim), c = static_cast<std::size_t>(m.classes),
             h = static_cast<std::size_t>(m.hidden);
  const double* p = m.params.data();
  s.logits.assign(c, 0.0);
  if (h == 0) {
    const double* b = p + d * c;
    for (std::size_t k = 0; k < c; ++k) s.logits[k] = b[k];
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      const double* w = p + i * c;
      for (std::size_t k = 0; k < c; ++k) s.logits[k] += xi * w[k];
    }
    return;
  }
  const double* b1 = p + d * h;
  const double* w2 = b1 + h;
  const double* b2 = w2 + h * c;
  s.pre.assign(b1, b1 + h);
  for (std::size_t i = 0; i < d; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* w = p + i * h;
    for (std::size_t j = 0; j < h; ++j) s.pre[j] += xi * w[j];
  }
  s.act.resize(h);
  for (std::size_t j = 0; j < h; ++j) s.act[j] = s.pre[j] > 0.0 ? s.pre[j] : 0.0;
  for (std::size_t k = 0; k < c; ++k) s.logits[k] = b2[k];
  for (std::size_t j = 0; j < h; ++j) {
    const double a = s.act[j];
    if (a == 0.0) continue;
    const double* w = w2 + j * c;
    for (std::size_t k = 0; k < c; ++k) s.logits[k] += a * w[k];
  }
}

// Adds scale * d loss / d params for one sample to grad.
inline double backward(const ModelParams& m, const double* x, std::size_t label, double scale, Scratch& s,
                       std::vector<double>& grad) {
  forward(m, x, s);
  const auto lg = crossentropy(s.logits, label);
  const auto d = static_cast<std::size_t>(m.input_dim), c = static_cast<std::size_t>(m.classes),
             h = static_cast<std::size_t>(m.hidden);
  double* g = grad.data();
  if (h == 0) {
    double* gb = g + d * c;
    for (std::size_t k = 0; k < c; ++k) gb[k] += scale * lg.grad[k];
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = scale * x[i];
      if (xi == 0.0) continue;
      double* gw = g + i * c;
      for (std::size_t k = 0; k < c; ++k) gw[k] += xi * lg.grad[k];
    }
    return lg.loss;
  }
  const double* w2 = m.params.data() + d * h + h;
  double* gb1 = g + d * h;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + h * c;
  for (std::size_t k = 0; k < c; ++k) gb2[k] += scale * lg.grad[k];
  s.gh.assign(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    const double a = s.act[j];
    const double* w = w2 + j * c;
    double* gw = gw2 + j * c;
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      gw[k] += scale * a * lg.grad[k];
      acc += w[k] * lg.grad[k];
    }
    s.gh[j] = s.pre[j] > 0.0 ? scale * acc : 0.0;
  }
  for (std::size_t j = 0; j < h; ++j) gb1[j] += s.gh[j];
  for (std::size_t i = 0; i < d; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* gw = g + i * h;
    for (std::size_t j = 0; j < h; ++j) gw[j] += xi * s.gh[j];
  }
  return lg.loss;
}

}  // namespace detail

inline std::vector<double> model_logits(const ModelParams& m, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(m.input_dim)) throw DimensionMismatch("model input");
  detail::Scratch s;
  detail::forward(m, x.data(), s);
  return s.logits;
}

/// Mean crossentropy over the samples (rows of `xs`, `input_dim` wide) and
/// its gradient with respect to every parameter.
inline double loss_and_gradient(const ModelParams& m, std::span<const double> xs, std::span<const std::size_t> labels,
                                std::vector<double>* grad) {
  const auto d = static_cast<std::size_t>(m.input_dim);
  if (labels.empty() || xs.size() != labels.size() * d) throw DimensionMismatch("batch");
  std::vector<double> local;
  std::vector<double>& g = grad ? *grad : local;
  g.assign(m.params.size(), 0.0);
  detail::Scratch s;
  const double scale = 1.0 / static_cast<double>(labels.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) loss += detail::backward(m, xs.data() + i * d, labels[i], scale, s, g);
  return loss * scale;
}

// ---------------------------------------------------------------------------
// Training

struct ValidationPoint {
  int step = 0;  // number of optimizer steps completed
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainedModel {
  ModelParams model;
  int best_step = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_accuracy = 0.0;
  std::vector<double> train_loss;  // per step
  std::vector<ValidationPoint> validation;
  std::vector<std::string> classes;
  TrainConfig config;
};

namespace detail {

inline void gather_patch(const PatchRecord& r, double* out) {
  for (std::size_t i = 0; i < kPatchValues; ++i) out[i] = r.pixels[i] / 255.0;
}

}  // namespace detail

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

/// Argmax of softmax(logits); ties go to the lower class index.
inline Prediction predict_one(const ModelParams& m, std::span<const double> x) {
  Prediction p;
  p.probabilities = softmax(model_logits(m, x));
  p.label = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
  return p;
}

/// Predictions for the given records, in order.
inline std::vector<Prediction> predict(const ModelParams& m, const Dataset& ds, std::span<const std::size_t> indices,
                                       std::size_t threads = 1) {
  if (m.input_dim != static_cast<int>(kPatchValues)) throw DimensionMismatch("model input " + std::to_string(m.input_dim));
  std::vector<Prediction> out(indices.size());
  detail::parallel_ranges(indices.size(), resolve_threads(threads), 1, [&](std::size_t b, std::size_t e, std::size_t) {
    std::vector<double> x(kPatchValues);
    for (std::size_t i = b; i < e; ++i) {
      detail::gather_patch(ds.records.at(indices[i]), x.data());
      out[i] = predict_one(m, x);
    }
  });
  return out;
}

inline std::vector<Prediction> predict(const ModelParams& m, std::span<const Patch> patches) {
  std::vector<Prediction> out;
  std::vector<double> x(kPatchValues);
  for (const auto& p : patches) {
    p.values(x);
    out.push_back(predict_one(m, x));
  }
  return out;
}

namespace detail {

// Mean loss and accuracy over the records; per-record results are summed in
// index order so the value is independent of the thread count.
inline std::pair<double, double> evaluate_records(const ModelParams& m, const Dataset& ds,
                                                  std::span<const std::size_t> idx, std::size_t threads) {
  std::vector<double> losses(idx.size());
  std::vector<char> correct(idx.size());
  parallel_ranges(idx.size(), resolve_threads(threads), 1, [&](std::size_t b, std::size_t e, std::size_t) {
    std::vector<double> x(kPatchValues);
    Scratch s;
    for (std::size_t i = b; i < e; ++i) {
      const auto& r = ds.records[idx[i]];
      gather_patch(r, x.data());
      forward(m, x.data(), s);
      losses[i] = crossentropy(s.logits, r.label).loss;
      const auto arg = static_cast<std::size_t>(std::max_element(s.logits.begin(), s.logits.end()) - s.logits.begin());
      correct[i] = arg == r.label;
    }
  });
  double loss = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    loss += losses[i];
    acc += correct[i];
  }
  const double n = static_cast<double>(idx.size());
  return {loss / n, acc / n};
}

}  // namespace detail

/// Trains on the fold's training patients with class-balanced batches and
/// keeps the parameters from the evaluation with the lowest validation loss.
inline TrainedModel train(const Dataset& ds, std::size_t fold, const TrainConfig& cfg) {
  cfg.validate();
  for (const auto& s : ds.manifest.slides)
    if (fold >= s.roles.size()) throw InvalidArgument("fold " + std::to_string(fold) + " does not exist");
  BalancedSampler sampler(ds, fold, Role::Train, Rng::derive(cfg.seed, 1));
  BalancedSampler(ds, fold, Role::Val, 0);  // every class must be present in validation
  const auto val = records_with_role(ds, fold, Role::Val);

  const int classes = static_cast<int>(ds.manifest.classes.size());
  TrainedModel out;
  out.classes = ds.manifest.classes;
  out.config = cfg;
  ModelParams model = ModelParams::init(static_cast<int>(kPatchValues), classes, cfg.hidden, Rng::derive(cfg.seed, 2));
  AdamState adam(model.params.size());
  std::vector<double> xs(static_cast<std::size_t>(cfg.batch_size) * kPatchValues);
  std::vector<std::size_t> labels(static_cast<std::size_t>(cfg.batch_size));
  std::vector<double> grad;
  out.train_loss.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < labels.size(); ++b) {
      const auto& r = ds.records[sampler.next()];
      detail::gather_patch(r, xs.data() + b * kPatchValues);
      labels[b] = r.label;
    }
    out.train_loss.push_back(loss_and_gradient(model, xs, labels, &grad));
    adam_step(model.params, grad, adam, one_cycle_lr(step, cfg.steps, cfg.peak_lr, cfg), cfg);

    const int done = step + 1;
    if (done % cfg.validate_every == 0 || done == cfg.steps) {
      const auto [loss, acc] = detail::evaluate_records(model, ds, val, cfg.threads);
      out.validation.push_back({done, loss, acc});
      if (loss < out.best_val_loss) {
        out.best_val_loss = loss;
        out.best_val_accuracy = acc;
        out.best_step = done;
        out.model = model;
      }
    }
  }
  if (out.model.params.empty()) out.model = model;  // non-finite validation loss throughout
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: "NUCM", u32 header length, JSON header, f64 little-endian
// parameters.

inline std::vector<std::uint8_t> encode_model(const TrainedModel& t) {
  nlohmann::json header = {{"input_dim", t.model.input_dim}, {"classes", t.model.classes}, {"hidden", t.model.hidden},
                           {"class_names", t.classes}, {"best_step", t.best_step},
                           {"best_val_loss", std::isfinite(t.best_val_loss) ? nlohmann::json(t.best_val_loss) : nlohmann::json()},
                           {"best_val_accuracy", t.best_val_accuracy}, {"config", to_json(t.config)},
                           {"param_count", t.model.params.size()}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out{'N', 'U', 'C', 'M'};
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (double v : t.model.params) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    detail::put_le<std::uint64_t>(out, bits);
  }
  return out;
}

inline TrainedModel decode_model(std::span<const std::uint8_t> bytes, const std::string& context = "<model>") {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "NUCM", 4) != 0) throw DecodeError(context, "missing NUCM header");
  const auto len = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw DecodeError(context, "truncated header");
  TrainedModel t;
  try {
    const auto h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    t.model.input_dim = h.at("input_dim").get<int>();
    t.model.classes = h.at("classes").get<int>();
    t.model.hidden = h.at("hidden").get<int>();
    t.classes = h.at("class_names").get<std::vector<std::string>>();
    t.best_step = h.at("best_step").get<int>();
    t.best_val_loss = h.at("best_val_loss").is_null() ? std::numeric_limits<double>::infinity() : h.at("best_val_loss").get<double>();
    t.best_val_accuracy = h.at("best_val_accuracy").get<double>();
    t.config = train_config_from_json(h.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(context, e.what());
  }
  const std::size_t n = ModelParams::param_count(t.model.input_dim, t.model.classes, t.model.hidden);
  if (bytes.size() != 8 + static_cast<std::size_t>(len) + 8 * n) throw DecodeError(context, "parameter block size mismatch");
  t.model.params.resize(n);
  const std::uint8_t* p = bytes.data() + 8 + len;
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = detail::get_le<std::uint64_t>(p + 8 * i);
    std::memcpy(&t.model.params[i], &bits, sizeof(double));
  }
  return t;
}

inline void save_model(const std::filesystem::path& path, const TrainedModel& t) {
  const auto bytes = encode_model(t);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  const std::string raw = read_text_file(path);
  return decode_model(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()), path.string());
}

/// `nucleus_id,slide_id,true_label,pred_label,p0..pK`
inline void write_predictions_csv(std::ostream& os, const Dataset& ds, std::span<const std::size_t> indices,
                                  std::span<const Prediction> preds) {
  if (indices.size() != preds.size()) throw DimensionMismatch("predictions");
  os << "nucleus_id,slide_id,true_label,pred_label";
  const std::size_t k = preds.empty() ? ds.manifest.classes.size() : preds.front().probabilities.size();
  for (std::size_t c = 0; c < k; ++c) os << ",p" << c;
  os << '\n';
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& r = ds.records.at(indices[i]);
    os << r.nucleus_id << ',' << csv_field(ds.manifest.slides.at(r.slide_index).slide_id) << ','
       << static_cast<int>(r.label) << ',' << preds[i].label;
    for (double p : preds[i].probabilities) os << ',' << format_double(p);
    os << '\n';
  }
}

struct PredictionRow {
  std::uint32_t nucleus_id = 0;
  std::string slide_id;
  int true_label = 0;
  int pred_label = 0;
  std::vector<double> probabilities;
};

inline std::vector<PredictionRow> read_predictions_csv(const std::string& text, const std::string& context = "<predictions>") {
  const auto lines = split_lines(text);
  if (lines.empty() || split_csv_line(lines[0]).size() < 4) throw DecodeError(context, "missing header");
  std::vector<PredictionRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() < 4) throw DecodeError(context, "line " + std::to_string(i + 1) + ": too few fields");
    PredictionRow r;
    r.nucleus_id = static_cast<std::uint32_t>(parse_uint(f[0], context));
    r.slide_id = f[1];
    r.true_label = static_cast<int>(parse_uint(f[2], context));
    r.pred_label = static_cast<int>(parse_uint(f[3], context));
    for (std::size_t c = 4; c < f.size(); ++c) r.probabilities.push_back(parse_double(f[c], context));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace mxgate
