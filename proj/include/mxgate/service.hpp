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

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/image.hpp"
#include "mxgate/nucleus.hpp"
#include "mxgate/phenotype.hpp"
#include "mxgate/png_io.hpp"
#include "mxgate/pseudo_he.hpp"
#include "mxgate/rulelang.hpp"
#include "mxgate/slide_io.hpp"
#include "mxgate/text_io.hpp"

namespace mxgate {

// ---------------------------------------------------------------------------
// Session state

struct SlideData {
  SlideManifest manifest;
  NucleusTable features;
  ThresholdSet thresholds;
  std::optional<InstanceMask> mask;
  std::optional<RgbImage> he;
  std::optional<std::map<std::uint32_t, int>> predictions;  // nucleus id -> predicted class
  std::filesystem::path thresholds_path;                    // rewritten after each accepted update
};

/// One immutable gating result. Every response is built from exactly one.
struct Snapshot {
  std::uint64_t version = 0;
  ThresholdSet thresholds;
  LabelTable labels;
  ClassCounts counts;
  double regate_ms = 0.0;
};

class SlideSession {
public:
  SlideSession(SlideData data, const RuleProgram& program, const CompiledProgram& compiled, std::size_t threads)
      : data_(std::move(data)), program_(program), compiled_(compiled), threads_(threads) {
    for (std::size_t i = 0; i < data_.features.records.size(); ++i) index_[data_.features.records[i].id] = i;
    seed_missing_thresholds();
    data_.thresholds.slide_id = data_.manifest.slide_id;
    snap_ = std::make_shared<const Snapshot>(regate(data_.thresholds, nullptr));
  }

  const SlideData& data() const noexcept { return data_; }
  const std::string& id() const noexcept { return data_.manifest.slide_id; }

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
  }

  /// Optimistic update: `base_version` must equal the current version.
  /// Markers not named in `changes` keep their thresholds.
  std::shared_ptr<const Snapshot> update_thresholds(std::uint64_t base_version,
                                                    const std::map<std::string, double>& changes) {
    std::lock_guard write(write_mu_);
    const auto current = snapshot();
    if (base_version != current->version) throw VersionConflict(base_version, current->version);
    ThresholdSet next = current->thresholds;
    for (const auto& [marker, value] : changes) {
      if (!data_.features.channel_index(marker)) throw NotFound("slide " + id() + " has no channel " + marker);
      if (!std::isfinite(value) || value < 0.0) throw InvalidArgument("threshold for " + marker + " must be a finite value >= 0");
      next.thresholds[marker] = value;
    }
    next.version = current->version + 1;
    auto snap = std::make_shared<const Snapshot>(regate(next, current.get()));
    {
      std::lock_guard lock(snap_mu_);
      snap_ = snap;
    }
    if (!data_.thresholds_path.empty()) save_thresholds(data_.thresholds_path, snap->thresholds);
    return snap;
  }

  std::optional<std::size_t> nucleus_index(std::uint32_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

private:
  void seed_missing_thresholds() {
    std::optional<ThresholdSet> suggested;
    for (const auto& m : program_.referenced_markers()) {
      if (data_.thresholds.get(m.name) || !data_.features.channel_index(m.name)) continue;
      if (!suggested) suggested = suggest_thresholds(data_.features, ThresholdMethod::otsu());
      data_.thresholds.thresholds[m.name] = *suggested->get(m.name);
    }
  }

  // Gate bits are recomputed only for markers whose threshold changed.
  Snapshot regate(const ThresholdSet& next, const Snapshot* prev) const {
    const auto t0 = std::chrono::steady_clock::now();
    const GatingPlan plan = GatingPlan::make(program_, data_.features.channels, next);
    const auto& records = data_.features.records;
    std::vector<GateVector> gates(records.size());

    std::vector<std::size_t> changed;
    for (std::size_t k = 0; k < plan.marker_channel.size(); ++k) {
      const auto& name = data_.features.channels[plan.marker_channel[k].second];
      if (!prev || prev->thresholds.get(name) != next.get(name)) changed.push_back(k);
    }
    std::uint64_t keep = ~std::uint64_t{0};
    for (auto k : changed) keep &= ~(std::uint64_t{1} << plan.marker_channel[k].first);

    detail::parallel_ranges(records.size(), resolve_threads(threads_), 1024, [&](std::size_t b, std::size_t e, std::size_t) {
      for (std::size_t i = b; i < e; ++i) {
        GateVector g{prev ? prev->labels.entries[i].gates.bits & keep : 0};
        for (auto k : changed)
          if (records[i].means[plan.marker_channel[k].second] > plan.threshold[k]) g.set(plan.marker_channel[k].first);
        gates[i] = g;
      }
    });
    const auto outcomes = evaluate_batch(compiled_, gates, threads_);

    Snapshot s;
    s.version = next.version;
    s.thresholds = next;
    s.labels.classes = program_.classes();
    s.labels.entries.resize(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) s.labels.entries[i] = {records[i].id, gates[i], outcomes[i]};
    s.counts = count_classes(s.labels);
    s.regate_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return s;
  }

  SlideData data_;
  const RuleProgram& program_;
  const CompiledProgram& compiled_;
  std::size_t threads_;
  std::unordered_map<std::uint32_t, std::size_t> index_;
  mutable std::mutex snap_mu_;
  std::mutex write_mu_;
  std::shared_ptr<const Snapshot> snap_;
};

class SessionState {
public:
  SessionState(RuleProgram program, std::string rules_text, std::size_t threads = 1)
      : program_(std::move(program)), compiled_(compile_program(program_)), rules_text_(std::move(rules_text)),
        threads_(threads) {}

  SlideSession& add_slide(SlideData data) {
    const std::string id = data.manifest.slide_id;
    if (slides_.count(id)) throw InvalidArgument("slide " + id + " loaded twice");
    auto s = std::make_unique<SlideSession>(std::move(data), program_, compiled_, threads_);
    return *slides_.emplace(id, std::move(s)).first->second;
  }

  SlideSession& slide(const std::string& id) const {
    auto it = slides_.find(id);
    if (it == slides_.end()) throw NotFound("unknown slide " + id);
    return *it->second;
  }

  std::vector<std::string> slide_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, s] : slides_) out.push_back(id);
    return out;
  }

  const RuleProgram& program() const noexcept { return program_; }
  const std::string& rules_text() const noexcept { return rules_text_; }

private:
  RuleProgram program_;
  CompiledProgram compiled_;
  std::string rules_text_;
  std::size_t threads_;
  std::map<std::string, std::unique_ptr<SlideSession>> slides_;
};

/// Loads images, computes features and renders the pseudo-H&E backdrop.
/// Thresholds come from `thresholds_path` when it exists.
inline SlideData load_slide_data(const std::filesystem::path& manifest_path, const std::filesystem::path& thresholds_path = {},
                                 std::size_t threads = 1) {
  SlideData d;
  d.manifest = load_manifest(manifest_path);
  auto images = load_slide(d.manifest);
  d.features = compute_nucleus_features(images, threads);
  d.he = render_pseudo_he(images, StainMixSpec::defaults_for(images.markers), threads);
  d.mask = std::move(images.mask);
  if (!thresholds_path.empty()) {
    d.thresholds_path = thresholds_path;
    if (std::filesystem::exists(thresholds_path)) d.thresholds = load_thresholds(thresholds_path);
  }
  return d;
}


// ---------------------------------------------------------------------------
// Queries shared by the HTTP layer and tests

struct Histogram {
  double min = 0.0;
  double max = 0.0;
  std::vector<std::uint64_t> counts;
  std::uint64_t outside = 0;
};

/// Equal-width bins over [lo, hi]; the top edge falls in the last bin.
inline Histogram histogram(const NucleusTable& t, std::size_t channel, int bins, std::optional<double> lo = {},
                           std::optional<double> hi = {}) {
  if (bins < 1 || bins > 65536) throw InvalidArgument("bins must be in [1, 65536]");
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  if (t.records.empty()) return h;
  double mn = t.records.front().means[channel], mx = mn;
  for (const auto& r : t.records) {
    mn = std::min(mn, r.means[channel]);
    mx = std::max(mx, r.means[channel]);
  }
  h.min = lo.value_or(mn);
  h.max = hi.value_or(mx);
  if (!(h.max >= h.min)) throw InvalidArgument("histogram max must be >= min");
  const double width = (h.max - h.min) / bins;
  for (const auto& r : t.records) {
    const double v = r.means[channel];
    if (v < h.min || v > h.max) {
      ++h.outside;
      continue;
    }
    auto b = width > 0.0 ? static_cast<std::int64_t>((v - h.min) / width) : 0;
    b = std::clamp<std::int64_t>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

struct Viewport {
  double x = 0, y = 0, w = 0, h = 0;

  bool contains(double px, double py) const { return px >= x && px < x + w && py >= y && py < y + h; }
};

inline Viewport parse_bbox(const std::string& text) {
  const auto parts = split_csv_line(text);
  if (parts.size() != 4) throw InvalidArgument("bbox must be x,y,w,h");
  Viewport v{parse_double(parts[0], "bbox"), parse_double(parts[1], "bbox"), parse_double(parts[2], "bbox"),
             parse_double(parts[3], "bbox")};
  if (!(v.w >= 0.0) || !(v.h >= 0.0)) throw InvalidArgument("bbox width and height must be >= 0");
  return v;
}

inline constexpr std::array<std::array<std::uint8_t, 3>, 14> kClassPalette{{
    {230, 25, 75}, {60, 180, 75}, {255, 225, 25}, {0, 130, 200}, {245, 130, 48}, {145, 30, 180}, {70, 240, 240},
    {240, 50, 230}, {210, 245, 60}, {250, 190, 212}, {0, 128, 128}, {220, 190, 255}, {170, 110, 40}, {128, 0, 0}}};
inline constexpr std::array<std::uint8_t, 3> kExcludedColor{96, 96, 96};
inline constexpr std::array<std::uint8_t, 3> kUnassignedColor{255, 255, 255};
inline constexpr std::array<std::uint8_t, 3> kGatePositive{0, 200, 0};
inline constexpr std::array<std::uint8_t, 3> kGateNegative{150, 150, 150};

inline std::array<std::uint8_t, 3> class_color(int cls) {
  return kClassPalette[static_cast<std::size_t>(cls) % kClassPalette.size()];
}

enum class OverlayLayer { ClassLabels, Gate, Predictions };

struct OverlayRequest {
  OverlayLayer layer = OverlayLayer::ClassLabels;
  std::string marker;  // gate layer
  std::optional<Viewport> bbox;
  double scale = 1.0;
};

/// Layer names: `class-labels` (or `class`), `gate(MARKER)` / `gate:MARKER`
/// / `gate` with a separate marker, `predictions`.
inline OverlayRequest parse_overlay_layer(const std::string& layer, const std::string& marker = {}) {
  OverlayRequest r;
  if (layer.empty() || layer == "class-labels" || layer == "class" || layer == "classes") {
    r.layer = OverlayLayer::ClassLabels;
  } else if (layer == "predictions") {
    r.layer = OverlayLayer::Predictions;
  } else if (layer.rfind("gate", 0) == 0) {
    r.layer = OverlayLayer::Gate;
    std::string rest = layer.substr(4);
    if (rest.size() >= 2 && rest.front() == '(' && rest.back() == ')') rest = rest.substr(1, rest.size() - 2);
    else if (!rest.empty() && rest.front() == ':') rest = rest.substr(1);
    else if (!rest.empty()) throw InvalidArgument("unknown layer " + layer);
    r.marker = rest.empty() ? marker : rest;
    if (r.marker.empty()) throw InvalidArgument("gate layer needs a marker");
  } else {
    throw InvalidArgument("unknown layer " + layer);
  }
  return r;
}

inline constexpr int kMaxOverlaySide = 4096;

/// Nuclei painted with their layer tint over the pseudo-H&E image; pixels
/// outside the slide are fully transparent.
inline RgbaImage render_overlay(const SlideSession& slide, const Snapshot& snap, const OverlayRequest& req) {
  const auto& d = slide.data();
  if (!d.mask || !d.he) throw NotFound("slide " + slide.id() + " has no images loaded; overlay unavailable");
  if (req.layer == OverlayLayer::Predictions && !d.predictions) throw NotFound("slide " + slide.id() + " has no predictions");
  std::optional<std::size_t> gate_channel;
  std::optional<double> gate_threshold;
  if (req.layer == OverlayLayer::Gate) {
    gate_channel = d.features.channel_index(req.marker);
    gate_threshold = snap.thresholds.get(req.marker);
    if (!gate_channel || !gate_threshold) throw NotFound("no gate layer for marker " + req.marker);
  }
  if (!(req.scale > 0.0) || !std::isfinite(req.scale)) throw InvalidArgument("scale must be positive");
  const Viewport vp = req.bbox.value_or(Viewport{0, 0, static_cast<double>(d.mask->width()), static_cast<double>(d.mask->height())});
  const long ow = std::max(1L, std::lround(vp.w * req.scale));
  const long oh = std::max(1L, std::lround(vp.h * req.scale));
  if (ow > kMaxOverlaySide || oh > kMaxOverlaySide) throw InvalidArgument("overlay larger than 4096 pixels per side");

  RgbaImage out(static_cast<int>(ow), static_cast<int>(oh));
  for (int v = 0; v < out.height(); ++v)
    for (int u = 0; u < out.width(); ++u) {
      const double sx = vp.x + (u + 0.5) / req.scale;
      const double sy = vp.y + (v + 0.5) / req.scale;
      if (sx < 0 || sy < 0 || sx >= d.mask->width() || sy >= d.mask->height()) continue;
      const int x = static_cast<int>(sx), y = static_cast<int>(sy);
      std::array<std::uint8_t, 3> rgb{d.he->at(x, y, 0), d.he->at(x, y, 1), d.he->at(x, y, 2)};
      if (const auto id = d.mask->at(x, y); id != 0) {
        if (const auto i = slide.nucleus_index(id)) {
          const auto& e = snap.labels.entries[*i];
          switch (req.layer) {
            case OverlayLayer::ClassLabels:
              rgb = e.outcome.is_assigned() ? class_color(e.outcome.class_index)
                                            : (e.outcome.is_excluded() ? kExcludedColor : kUnassignedColor);
              break;
            case OverlayLayer::Gate:
              rgb = d.features.records[*i].means[*gate_channel] > *gate_threshold ? kGatePositive : kGateNegative;
              break;
            case OverlayLayer::Predictions:
              if (auto it = d.predictions->find(id); it != d.predictions->end()) rgb = class_color(it->second);
              break;
          }
        }
      }
      out.at(u, v, 0) = rgb[0];
      out.at(u, v, 1) = rgb[1];
      out.at(u, v, 2) = rgb[2];
      out.at(u, v, 3) = 255;
    }
  return out;
}

// ---------------------------------------------------------------------------
// JSON views

inline nlohmann::json thresholds_json(const Snapshot& s) { return to_json(s.thresholds); }

inline nlohmann::json class_counts_json(const std::string& slide_id, const Snapshot& s) {
  nlohmann::json classes = nlohmann::json::array();
  std::uint64_t total = s.counts.excluded + s.counts.unassigned;
  for (std::size_t c = 0; c < s.labels.classes.size(); ++c) {
    classes.push_back({{"class", s.labels.classes[c]}, {"count", s.counts.per_class[c]}});
    total += s.counts.per_class[c];
  }
  return {{"slide_id", slide_id}, {"version", s.version}, {"classes", classes}, {"excluded", s.counts.excluded},
          {"unassigned", s.counts.unassigned}, {"total", total}};
}

inline nlohmann::json nucleus_json(const NucleusRecord& r, const LabelEntry& e, const RuleProgram& program,
                                   const std::vector<std::string>& classes) {
  nlohmann::json positive = nlohmann::json::array();
  for (const auto& m : program.panel())
    if (e.gates.test(m.index)) positive.push_back(m.name);
  nlohmann::json j = {{"nucleus_id", r.id}, {"cx", r.cx}, {"cy", r.cy}, {"area", r.area},
                      {"gate_bits_hex", gate_bits_hex(e.gates)}, {"positive", positive},
                      {"outcome", to_string(e.outcome.kind)}};
  j["class"] = e.outcome.is_assigned() ? nlohmann::json(classes[static_cast<std::size_t>(e.outcome.class_index)]) : nlohmann::json();
  j["step"] = e.outcome.kind == PhenotypeOutcome::Kind::Unassigned ? nlohmann::json() : nlohmann::json(e.outcome.step);
  return j;
}

inline nlohmann::json slide_summary_json(const SlideSession& s) {
  const auto snap = s.snapshot();
  const auto& d = s.data();
  nlohmann::json layers = {"class-labels", "gate"};
  if (d.predictions) layers.push_back("predictions");
  nlohmann::json j = {{"slide_id", d.manifest.slide_id}, {"patient_id", d.manifest.patient_id},
                      {"site", to_string(d.manifest.site)}, {"disease", to_string(d.manifest.disease)},
                      {"microns_per_pixel", d.manifest.microns_per_pixel}, {"channels", d.features.channels},
                      {"nuclei", d.features.records.size()}, {"version", snap->version},
                      {"overlay", d.mask && d.he}, {"layers", layers}};
  if (d.mask) {
    j["width"] = d.mask->width();
    j["height"] = d.mask->height();
  }
  return j;
}

// ---------------------------------------------------------------------------
// HTTP

inline int http_status(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    const auto& k = err->kind();
    if (k == "NotFound") return 404;
    if (k == "VersionConflict") return 409;
    if (k == "InvalidArgument" || k == "DecodeError" || k == "MissingThreshold" || k == "SyntaxError") return 422;
    return 500;
  }
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return 422;
  return 500;
}

class Service {
public:
  explicit Service(SessionState& state) : state_(state) { routes(); }

  /// Binds to `port` (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError(host + ":" + std::to_string(port), "cannot bind");
    return bound;
  }

  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const Req& req, Res& res) {
      try {
        fn(req, res);
      } catch (const std::exception& e) {
        const int status = http_status(e);
        nlohmann::json body = {{"error", status == 500 ? "InternalError" : "Error"}, {"message", e.what()}};
        if (const auto* err = dynamic_cast<const Error*>(&e)) body["error"] = err->kind();
        if (const auto* vc = dynamic_cast<const VersionConflict*>(&e)) body["current_version"] = vc->current();
        res.status = status;
        res.set_content(body.dump(), "application/json");
      }
    };
  }

  static void json(Res& res, const nlohmann::json& j) { res.set_content(j.dump(), "application/json"); }

  static std::optional<double> opt_param(const Req& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    return parse_double(req.get_param_value(key), key);
  }

  void routes() {
    server_.Get("/api/slides", guarded([this](const Req&, Res& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& id : state_.slide_ids()) out.push_back(slide_summary_json(state_.slide(id)));
      json(res, out);
    }));
    server_.Get("/api/slides/:id", guarded([this](const Req& req, Res& res) {
      json(res, slide_summary_json(state_.slide(req.path_params.at("id"))));
    }));
    server_.Get("/api/slides/:id/channels/:marker/histogram", guarded([this](const Req& req, Res& res) {
      const auto& s = state_.slide(req.path_params.at("id"));
      const auto& marker = req.path_params.at("marker");
      const auto ch = s.data().features.channel_index(marker);
      if (!ch) throw NotFound("slide " + s.id() + " has no channel " + marker);
      int bins = 256;
      if (req.has_param("bins")) {
        const auto b = parse_uint(req.get_param_value("bins"), "bins");
        if (b < 1 || b > 65536) throw InvalidArgument("bins must be in [1, 65536]");
        bins = static_cast<int>(b);
      }
      const auto snap = s.snapshot();
      const auto h = histogram(s.data().features, *ch, bins, opt_param(req, "min"), opt_param(req, "max"));
      const auto thr = snap->thresholds.get(marker);
      json(res, {{"slide_id", s.id()}, {"marker", marker}, {"bins", bins}, {"min", h.min}, {"max", h.max},
                 {"counts", h.counts}, {"outside", h.outside}, {"version", snap->version},
                 {"threshold", thr ? nlohmann::json(*thr) : nlohmann::json()}});
    }));
    server_.Get("/api/slides/:id/thresholds", guarded([this](const Req& req, Res& res) {
      json(res, thresholds_json(*state_.slide(req.path_params.at("id")).snapshot()));
    }));
    server_.Put("/api/slides/:id/thresholds", guarded([this](const Req& req, Res& res) {
      auto& s = state_.slide(req.path_params.at("id"));
      const auto body = nlohmann::json::parse(req.body);
      if (!body.is_object() || !body.contains("version") || !body.contains("thresholds") || !body["thresholds"].is_object())
        throw InvalidArgument("body must be {\"version\": n, \"thresholds\": {marker: value}}");
      std::map<std::string, double> changes;
      for (const auto& [k, v] : body["thresholds"].items()) {
        if (!v.is_number()) throw InvalidArgument("threshold for " + k + " is not a number");
        changes[k] = v.get<double>();
      }
      const auto snap = s.update_thresholds(body["version"].get<std::uint64_t>(), changes);
      auto out = thresholds_json(*snap);
      out["class_counts"] = class_counts_json(s.id(), *snap);
      out["regate_ms"] = snap->regate_ms;
      json(res, out);
    }));
    server_.Get("/api/slides/:id/classes", guarded([this](const Req& req, Res& res) {
      const auto& s = state_.slide(req.path_params.at("id"));
      json(res, class_counts_json(s.id(), *s.snapshot()));
    }));
    server_.Get("/api/slides/:id/labels", guarded([this](const Req& req, Res& res) {
      std::ostringstream os;
      write_label_csv(os, state_.slide(req.path_params.at("id")).snapshot()->labels);
      res.set_content(os.str(), "text/csv");
    }));
    server_.Get("/api/slides/:id/nuclei", guarded([this](const Req& req, Res& res) {
      const auto& s = state_.slide(req.path_params.at("id"));
      const auto snap = s.snapshot();
      std::optional<Viewport> bbox;
      if (req.has_param("bbox")) bbox = parse_bbox(req.get_param_value("bbox"));
      nlohmann::json nuclei = nlohmann::json::array();
      const auto& recs = s.data().features.records;
      for (std::size_t i = 0; i < recs.size(); ++i)
        if (!bbox || bbox->contains(recs[i].cx, recs[i].cy))
          nuclei.push_back(nucleus_json(recs[i], snap->labels.entries[i], state_.program(), snap->labels.classes));
      json(res, {{"slide_id", s.id()}, {"version", snap->version}, {"nuclei", nuclei}});
    }));
    server_.Get("/api/slides/:id/overlay", guarded([this](const Req& req, Res& res) {
      const auto& s = state_.slide(req.path_params.at("id"));
      auto r = parse_overlay_layer(req.has_param("layer") ? req.get_param_value("layer") : "",
                                   req.has_param("marker") ? req.get_param_value("marker") : "");
      if (req.has_param("bbox")) r.bbox = parse_bbox(req.get_param_value("bbox"));
      if (req.has_param("scale")) r.scale = parse_double(req.get_param_value("scale"), "scale");
      const auto snap = s.snapshot();
      const auto png = encode_png(render_overlay(s, *snap, r));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
      res.set_header("X-Mxgate-Version", std::to_string(snap->version));
    }));
    server_.Get("/api/rules", guarded([this](const Req&, Res& res) { res.set_content(state_.rules_text(), "text/plain"); }));
  }

  SessionState& state_;
  httplib::Server server_;
};

}  // namespace mxgate
