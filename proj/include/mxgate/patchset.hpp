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
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/image.hpp"
#include "mxgate/nucleus.hpp"
#include "mxgate/phenotype.hpp"
#include "mxgate/rng.hpp"
#include "mxgate/slide_io.hpp"
#include "mxgate/text_io.hpp"

namespace mxgate {

inline constexpr int kPatchSize = 41;
inline constexpr int kPatchChannels = 3;
inline constexpr std::size_t kPatchValues = kPatchSize * kPatchSize * kPatchChannels;  // 5043
inline constexpr double kTargetMicronsPerPixel = 0.5;

/// Resampling factor from source to target resolution (0.32 -> 0.64).
inline double resample_scale(double source_mpp, double target_mpp = kTargetMicronsPerPixel) {
  if (!(source_mpp > 0.0) || !(target_mpp > 0.0)) throw InvalidArgument("microns per pixel must be positive");
  return source_mpp / target_mpp;
}

/// A 41x41 RGB patch centred on a nucleus. Samples are stored as 8-bit and
/// read back as value/255, so they are always in [0, 1].
struct Patch {
  std::array<std::uint8_t, kPatchValues> pixels{};
  int label = -1;
  std::uint32_t nucleus_id = 0;
  std::string slide_id;
  bool edge_padded = false;

  double value(int x, int y, int c) const {
    return pixels[static_cast<std::size_t>((y * kPatchSize + x) * kPatchChannels + c)] / 255.0;
  }

  void values(std::span<double> out) const {
    for (std::size_t i = 0; i < kPatchValues; ++i) out[i] = pixels[i] / 255.0;
  }
};

namespace detail {

inline double sample_bilinear(const RgbImage& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
  const double bottom = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

// Nearest pixel with ties toward negative infinity.
inline int round_half_down(double v) { return static_cast<int>(std::ceil(v - 0.5)); }

}  // namespace detail

/// Extracts the patch from the image as if it had been bilinearly resampled
/// to the target resolution. Only the 41x41 window is computed. Pixels that
/// fall outside the resampled image replicate the nearest edge.
inline Patch extract_patch(const RgbImage& image, double cx, double cy, double source_mpp,
                           double target_mpp = kTargetMicronsPerPixel) {
  const double s = resample_scale(source_mpp, target_mpp);
  if (image.empty() || !(cx >= 0.0 && cx < image.width() && cy >= 0.0 && cy < image.height()))
    throw OutOfBounds("centroid (" + format_double(cx) + ", " + format_double(cy) + ") outside image");

  const int tw = std::max(1, static_cast<int>(std::lround(image.width() * s)));
  const int th = std::max(1, static_cast<int>(std::lround(image.height() * s)));
  const int ucenter = detail::round_half_down((cx + 0.5) * s - 0.5);
  const int vcenter = detail::round_half_down((cy + 0.5) * s - 0.5);
  constexpr int half = kPatchSize / 2;

  Patch p;
  for (int j = 0; j < kPatchSize; ++j) {
    int v = vcenter - half + j;
    if (v < 0 || v >= th) {
      p.edge_padded = true;
      v = std::clamp(v, 0, th - 1);
    }
    const double sy = (v + 0.5) / s - 0.5;
    for (int i = 0; i < kPatchSize; ++i) {
      int u = ucenter - half + i;
      if (u < 0 || u >= tw) {
        p.edge_padded = true;
        u = std::clamp(u, 0, tw - 1);
      }
      const double sx = (u + 0.5) / s - 0.5;
      for (int c = 0; c < kPatchChannels; ++c) {
        const double val = detail::sample_bilinear(image, sx, sy, c);
        p.pixels[static_cast<std::size_t>((j * kPatchSize + i) * kPatchChannels + c)] =
            static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
      }
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Patient-level folds

struct PatientInfo {
  std::string id;
  std::set<Site> sites;
  std::set<Disease> diseases;
};

/// Groups slide manifests by patient.
inline std::vector<PatientInfo> patients_from_manifests(std::span<const SlideManifest> slides) {
  std::map<std::string, PatientInfo> by_id;
  for (const auto& m : slides) {
    auto& p = by_id[m.patient_id];
    p.id = m.patient_id;
    p.sites.insert(m.site);
    p.diseases.insert(m.disease);
  }
  std::vector<PatientInfo> out;
  for (auto& [id, p] : by_id) out.push_back(std::move(p));
  return out;
}

struct FoldSizes {
  int k = 5;
  int train = 12;
  int val = 4;
  int test = 4;

  bool operator==(const FoldSizes&) const = default;
};

enum class Role { Train, Val, Test, None };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::Train: return "train";
    case Role::Val: return "val";
    case Role::Test: return "test";
    case Role::None: return "none";
  }
  return "?";
}

struct Fold {
  std::vector<std::string> train, val, test;
  bool operator==(const Fold&) const = default;
};

struct FoldPlan {
  FoldSizes sizes;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;

  Role role_of(const std::string& patient, std::size_t fold) const {
    const auto& f = folds.at(fold);
    auto has = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), patient) != v.end(); };
    if (has(f.train)) return Role::Train;
    if (has(f.val)) return Role::Val;
    if (has(f.test)) return Role::Test;
    return Role::None;
  }

  bool operator==(const FoldPlan&) const = default;
};

namespace detail {

inline bool stratified(std::span<const PatientInfo* const> set) {
  bool ac = false, ti = false, normal = false, diseased = false;
  for (const auto* p : set) {
    ac = ac || p->sites.count(Site::AscendingColon);
    ti = ti || p->sites.count(Site::TerminalIleum);
    for (auto d : p->diseases) (is_diseased(d) ? diseased : normal) = true;
  }
  return ac && ti && normal && diseased;
}

inline std::vector<std::string> ids_sorted(std::span<const PatientInfo* const> set) {
  std::vector<std::string> out;
  for (const auto* p : set) out.push_back(p->id);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Lists every violated fold-plan invariant; empty means the plan is valid.
inline std::vector<std::string> fold_plan_violations(const FoldPlan& plan, std::span<const PatientInfo> patients) {
  std::vector<std::string> bad;
  std::map<std::string, const PatientInfo*> by_id;
  for (const auto& p : patients) by_id[p.id] = &p;
  if (static_cast<int>(plan.folds.size()) != plan.sizes.k) bad.push_back("fold count differs from k");

  std::map<std::string, int> tested;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto& fold = plan.folds[f];
    const std::string tag = "fold " + std::to_string(f) + ": ";
    if (static_cast<int>(fold.train.size()) != plan.sizes.train) bad.push_back(tag + "train size");
    if (static_cast<int>(fold.val.size()) != plan.sizes.val) bad.push_back(tag + "val size");
    if (static_cast<int>(fold.test.size()) != plan.sizes.test) bad.push_back(tag + "test size");

    std::set<std::string> seen;
    for (const auto* set : {&fold.train, &fold.val, &fold.test}) {
      std::vector<const PatientInfo*> members;
      for (const auto& id : *set) {
        if (!seen.insert(id).second) bad.push_back(tag + "patient " + id + " appears twice");
        auto it = by_id.find(id);
        if (it == by_id.end()) {
          bad.push_back(tag + "unknown patient " + id);
          continue;
        }
        members.push_back(it->second);
      }
      if (!detail::stratified(members)) bad.push_back(tag + "set lacks a site or disease stratum");
    }
    for (const auto& id : fold.test) ++tested[id];
  }
  for (const auto& p : patients)
    if (tested[p.id] != 1) bad.push_back("patient " + p.id + " tested " + std::to_string(tested[p.id]) + " times");
  return bad;
}

/// Rejection sampling over seeded shuffles: test groups partition the
/// patients; each fold draws its validation set from the non-test patients.
inline FoldPlan make_folds(std::span<const PatientInfo> patients, std::uint64_t seed, FoldSizes sizes = {},
                           int max_attempts = 20000) {
  const int n = static_cast<int>(patients.size());
  if (sizes.k < 1 || sizes.test < 1 || sizes.val < 1 || sizes.train < 1)
    throw InvalidArgument("fold sizes must be positive");
  if (n != sizes.k * sizes.test || sizes.train + sizes.val + sizes.test != n)
    throw Unsatisfiable("cannot split " + std::to_string(n) + " patients into " + std::to_string(sizes.k) +
                        " folds of " + std::to_string(sizes.train) + "/" + std::to_string(sizes.val) + "/" +
                        std::to_string(sizes.test));
  {
    std::set<std::string> ids;
    for (const auto& p : patients)
      if (!ids.insert(p.id).second) throw InvalidArgument("duplicate patient id " + p.id);
  }

  std::vector<const PatientInfo*> order;
  for (const auto& p : patients) order.push_back(&p);
  Rng rng(seed);
  constexpr int kValAttempts = 200;

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    rng.shuffle(std::span(order));
    bool ok = true;
    for (int f = 0; f < sizes.k && ok; ++f)
      ok = detail::stratified(std::span(order).subspan(static_cast<std::size_t>(f * sizes.test),
                                                       static_cast<std::size_t>(sizes.test)));
    if (!ok) continue;

    FoldPlan plan;
    plan.sizes = sizes;
    plan.seed = seed;
    for (int f = 0; f < sizes.k && ok; ++f) {
      const auto test = std::span(order).subspan(static_cast<std::size_t>(f * sizes.test),
                                                 static_cast<std::size_t>(sizes.test));
      std::vector<const PatientInfo*> rest;
      for (int i = 0; i < n; ++i)
        if (i / sizes.test != f) rest.push_back(order[static_cast<std::size_t>(i)]);
      bool found = false;
      for (int a = 0; a < kValAttempts && !found; ++a) {
        rng.shuffle(std::span(rest));
        auto val = std::span(rest).first(static_cast<std::size_t>(sizes.val));
        auto train = std::span(rest).subspan(static_cast<std::size_t>(sizes.val));
        if (detail::stratified(val) && detail::stratified(train)) {
          plan.folds.push_back({detail::ids_sorted(train), detail::ids_sorted(val), detail::ids_sorted(test)});
          found = true;
        }
      }
      ok = found;
    }
    if (ok) return plan;
  }
  throw Unsatisfiable("no fold plan satisfies the site/disease constraints after " + std::to_string(max_attempts) +
                      " attempts");
}

inline nlohmann::json to_json(const FoldPlan& plan) {
  nlohmann::json j;
  j["seed"] = plan.seed;
  j["k"] = plan.sizes.k;
  j["sizes"] = {{"train", plan.sizes.train}, {"val", plan.sizes.val}, {"test", plan.sizes.test}};
  j["folds"] = nlohmann::json::array();
  for (const auto& f : plan.folds) j["folds"].push_back({{"train", f.train}, {"val", f.val}, {"test", f.test}});
  return j;
}

inline FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  FoldPlan p;
  try {
    p.seed = j.at("seed").get<std::uint64_t>();
    p.sizes.k = j.at("k").get<int>();
    p.sizes.train = j.at("sizes").at("train").get<int>();
    p.sizes.val = j.at("sizes").at("val").get<int>();
    p.sizes.test = j.at("sizes").at("test").get<int>();
    for (const auto& f : j.at("folds"))
      p.folds.push_back({f.at("train").get<std::vector<std::string>>(), f.at("val").get<std::vector<std::string>>(),
                         f.at("test").get<std::vector<std::string>>()});
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("<fold plan>", e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Dataset

struct PatchRecord {
  std::uint16_t slide_index = 0;
  std::uint32_t nucleus_id = 0;
  std::uint8_t label = 0;
  std::uint8_t flags = 0;  // bit0: edge padded
  std::array<std::uint8_t, kPatchValues> pixels{};

  bool edge_padded() const noexcept { return (flags & 1U) != 0; }
  bool operator==(const PatchRecord&) const = default;
};

struct SlideProvenance {
  std::string slide_id;
  std::string patient_id;
  Site site = Site::AscendingColon;
  Disease disease = Disease::Normal;
  double source_mpp = 0.0;
  std::uint64_t records = 0;
  std::vector<Role> roles;  // per fold

  bool operator==(const SlideProvenance&) const = default;
};

struct DatasetManifest {
  std::string record_file;
  std::vector<std::string> classes;
  std::vector<std::uint64_t> class_counts;
  std::vector<SlideProvenance> slides;
  FoldPlan plan;
  double target_mpp = kTargetMicronsPerPixel;
  std::uint64_t record_count = 0;

  Role role_of(const PatchRecord& r, std::size_t fold) const { return slides.at(r.slide_index).roles.at(fold); }

  void verify() const {
    std::uint64_t total = 0;
    for (auto c : class_counts) total += c;
    if (total != record_count) throw LabelTableMismatch("class counts do not sum to the record count");
  }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PatchRecord> records;
};

struct SlideInput {
  SlideManifest manifest;
  const NucleusTable* features = nullptr;
  const LabelTable* labels = nullptr;
  const RgbImage* image = nullptr;
};

/// One record per assigned nucleus, slides ordered by id and nuclei by id.
inline Dataset build_dataset(std::span<const SlideInput> inputs, const FoldPlan& plan, std::size_t threads = 1) {
  std::vector<const SlideInput*> slides;
  for (const auto& s : inputs) slides.push_back(&s);
  std::sort(slides.begin(), slides.end(),
            [](const auto* a, const auto* b) { return a->manifest.slide_id < b->manifest.slide_id; });
  if (slides.size() > 65535) throw CapacityError("more than 65535 slides");

  Dataset ds;
  ds.manifest.plan = plan;
  for (std::size_t si = 0; si < slides.size(); ++si) {
    const auto& in = *slides[si];
    if (!in.image || in.image->empty()) throw MissingImage(in.manifest.slide_id);
    if (!in.labels || !in.features) throw LabelTableMismatch("slide " + in.manifest.slide_id + " lacks labels or features");
    if (ds.manifest.classes.empty()) {
      ds.manifest.classes = in.labels->classes;
    } else if (ds.manifest.classes != in.labels->classes) {
      throw LabelTableMismatch("slide " + in.manifest.slide_id + " uses a different class list");
    }

    SlideProvenance prov{in.manifest.slide_id, in.manifest.patient_id, in.manifest.site, in.manifest.disease,
                         in.manifest.microns_per_pixel, 0, {}};
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
      const Role r = plan.role_of(in.manifest.patient_id, f);
      if (r == Role::None) throw InvalidArgument("patient " + in.manifest.patient_id + " is not in the fold plan");
      prov.roles.push_back(r);
    }

    std::map<std::uint32_t, const NucleusRecord*> by_id;
    for (const auto& r : in.features->records) by_id[r.id] = &r;
    std::vector<std::pair<const LabelEntry*, const NucleusRecord*>> todo;
    for (const auto& e : in.labels->entries) {
      auto it = by_id.find(e.nucleus_id);
      if (it == by_id.end())
        throw LabelTableMismatch("slide " + in.manifest.slide_id + ": nucleus " + std::to_string(e.nucleus_id) +
                                 " has a label but no features");
      if (e.outcome.is_assigned()) todo.emplace_back(&e, it->second);
    }
    std::sort(todo.begin(), todo.end(), [](const auto& a, const auto& b) { return a.first->nucleus_id < b.first->nucleus_id; });

    const std::size_t base = ds.records.size();
    ds.records.resize(base + todo.size());
    detail::parallel_ranges(todo.size(), resolve_threads(threads), 16, [&](std::size_t b, std::size_t e, std::size_t) {
      for (std::size_t i = b; i < e; ++i) {
        const auto& [label, nucleus] = todo[i];
        const Patch p = extract_patch(*in.image, nucleus->cx, nucleus->cy, in.manifest.microns_per_pixel);
        auto& rec = ds.records[base + i];
        rec.slide_index = static_cast<std::uint16_t>(si);
        rec.nucleus_id = label->nucleus_id;
        rec.label = static_cast<std::uint8_t>(label->outcome.class_index);
        rec.flags = p.edge_padded ? 1 : 0;
        rec.pixels = p.pixels;
      }
    });
    prov.records = todo.size();
    ds.manifest.slides.push_back(std::move(prov));
  }

  ds.manifest.class_counts.assign(ds.manifest.classes.size(), 0);
  for (const auto& r : ds.records) ++ds.manifest.class_counts.at(r.label);
  ds.manifest.record_count = ds.records.size();
  ds.manifest.verify();
  return ds;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["record_file"] = m.record_file;
  j["record_count"] = m.record_count;
  j["classes"] = m.classes;
  j["class_counts"] = m.class_counts;
  j["resolution"] = {{"target_mpp", m.target_mpp}};
  j["slides"] = nlohmann::json::array();
  for (const auto& s : m.slides) {
    nlohmann::json roles = nlohmann::json::array();
    for (auto r : s.roles) roles.push_back(to_string(r));
    j["slides"].push_back({{"slide_id", s.slide_id}, {"patient_id", s.patient_id}, {"site", to_string(s.site)},
                           {"disease", to_string(s.disease)}, {"source_mpp", s.source_mpp}, {"records", s.records},
                           {"fold_roles", roles}});
  }
  j["fold_plan"] = to_json(m.plan);
  return j;
}

inline DatasetManifest dataset_manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.record_file = j.at("record_file").get<std::string>();
    m.record_count = j.at("record_count").get<std::uint64_t>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.class_counts = j.at("class_counts").get<std::vector<std::uint64_t>>();
    m.target_mpp = j.at("resolution").at("target_mpp").get<double>();
    for (const auto& s : j.at("slides")) {
      SlideProvenance p;
      p.slide_id = s.at("slide_id").get<std::string>();
      p.patient_id = s.at("patient_id").get<std::string>();
      p.site = parse_site(s.at("site").get<std::string>());
      p.disease = parse_disease(s.at("disease").get<std::string>());
      p.source_mpp = s.at("source_mpp").get<double>();
      p.records = s.at("records").get<std::uint64_t>();
      for (const auto& r : s.at("fold_roles")) {
        const auto t = r.get<std::string>();
        p.roles.push_back(t == "train" ? Role::Train : t == "val" ? Role::Val : t == "test" ? Role::Test : Role::None);
      }
      m.slides.push_back(std::move(p));
    }
    m.plan = fold_plan_from_json(j.at("fold_plan"));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("<dataset manifest>", e.what());
  }
  m.verify();
  return m;
}

// Record file, little-endian:
//   "NUCP" u16 version=1 u32 count u8 classes
//   per record: u16 slide, u32 nucleus, u8 label, u8 flags, 5043 pixel bytes
namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

inline constexpr std::size_t kRecordHeaderBytes = 4 + 2 + 4 + 1;
inline constexpr std::size_t kRecordBytes = 2 + 4 + 1 + 1 + kPatchValues;

inline std::vector<std::uint8_t> encode_records(std::span<const PatchRecord> records, std::size_t class_count) {
  if (records.size() > UINT32_MAX) throw CapacityError("too many records");
  if (class_count > 255) throw CapacityError("too many classes");
  std::vector<std::uint8_t> out;
  out.reserve(kRecordHeaderBytes + records.size() * kRecordBytes);
  for (char c : {'N', 'U', 'C', 'P'}) out.push_back(static_cast<std::uint8_t>(c));
  detail::put_le<std::uint16_t>(out, 1);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  out.push_back(static_cast<std::uint8_t>(class_count));
  for (const auto& r : records) {
    detail::put_le<std::uint16_t>(out, r.slide_index);
    detail::put_le<std::uint32_t>(out, r.nucleus_id);
    out.push_back(r.label);
    out.push_back(r.flags);
    out.insert(out.end(), r.pixels.begin(), r.pixels.end());
  }
  return out;
}

struct DecodedRecords {
  std::size_t class_count = 0;
  std::vector<PatchRecord> records;
};

inline DecodedRecords decode_records(std::span<const std::uint8_t> bytes, const std::string& context = "<records>") {
  if (bytes.size() < kRecordHeaderBytes || std::memcmp(bytes.data(), "NUCP", 4) != 0)
    throw DecodeError(context, "missing NUCP header");
  const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
  if (version != 1) throw DecodeError(context, "unsupported record version " + std::to_string(version));
  const auto count = detail::get_le<std::uint32_t>(bytes.data() + 6);
  DecodedRecords out;
  out.class_count = bytes[10];
  if (bytes.size() != kRecordHeaderBytes + static_cast<std::size_t>(count) * kRecordBytes)
    throw DecodeError(context, "record file size does not match its count");
  out.records.resize(count);
  const std::uint8_t* p = bytes.data() + kRecordHeaderBytes;
  for (auto& r : out.records) {
    r.slide_index = detail::get_le<std::uint16_t>(p);
    r.nucleus_id = detail::get_le<std::uint32_t>(p + 2);
    r.label = p[6];
    r.flags = p[7];
    std::memcpy(r.pixels.data(), p + 8, kPatchValues);
    if (r.label >= out.class_count) throw DecodeError(context, "label out of range");
    p += kRecordBytes;
  }
  return out;
}

inline void save_dataset(const std::filesystem::path& manifest_path, Dataset& ds) {
  const auto record_path = manifest_path.parent_path() / (manifest_path.stem().string() + ".nucp");
  ds.manifest.record_file = record_path.filename().string();
  const auto bytes = encode_records(ds.records, ds.manifest.classes.size());
  std::ofstream out(record_path, std::ios::binary);
  if (!out) throw IoError(record_path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(record_path.string(), "write failed");
  write_text_file(manifest_path, to_json(ds.manifest).dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds;
  try {
    ds.manifest = dataset_manifest_from_json(nlohmann::json::parse(read_text_file(manifest_path)));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(manifest_path.string(), e.what());
  }
  const auto record_path = manifest_path.parent_path() / ds.manifest.record_file;
  const std::string raw = read_text_file(record_path);
  auto decoded = decode_records(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()),
                                record_path.string());
  if (decoded.records.size() != ds.manifest.record_count || decoded.class_count != ds.manifest.classes.size())
    throw DecodeError(record_path.string(), "record file disagrees with its manifest");
  ds.records = std::move(decoded.records);
  return ds;
}

// ---------------------------------------------------------------------------
// Class-balanced sampling

/// Infinite stream of record indices: a class uniformly at random, then a
/// record of that class uniformly with replacement.
class BalancedSampler {
public:
  BalancedSampler(const Dataset& ds, std::size_t fold, Role role, std::uint64_t seed) : rng_(seed) {
    by_class_.assign(ds.manifest.classes.size(), {});
    for (std::size_t i = 0; i < ds.records.size(); ++i)
      if (ds.manifest.role_of(ds.records[i], fold) == role) by_class_.at(ds.records[i].label).push_back(i);
    for (std::size_t c = 0; c < by_class_.size(); ++c)
      if (by_class_[c].empty()) throw EmptyClass(ds.manifest.classes[c]);
  }

  std::size_t next() {
    const auto& members = by_class_[rng_.uniform_index(by_class_.size())];
    return members[rng_.uniform_index(members.size())];
  }

  const std::vector<std::vector<std::size_t>>& members() const noexcept { return by_class_; }

private:
  Rng rng_;
  std::vector<std::vector<std::size_t>> by_class_;
};

/// Indices of every record with `role` in `fold`, in record order.
inline std::vector<std::size_t> records_with_role(const Dataset& ds, std::size_t fold, Role role) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    if (ds.manifest.role_of(ds.records[i], fold) == role) out.push_back(i);
  return out;
}

}  // namespace mxgate
