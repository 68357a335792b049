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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/image.hpp"
#include "mxgate/patchset.hpp"
#include "mxgate/phenotype.hpp"
#include "mxgate/rng.hpp"
#include "mxgate/rulelang.hpp"
#include "mxgate/slide_io.hpp"
#include "mxgate/table1.hpp"
#include "mxgate/tiff_io.hpp"

namespace mxgate {

/// Witness gate words per class, over the program's referenced markers.
class WitnessTable {
public:
  explicit WitnessTable(const RuleProgram& program) : classes_(program.classes()) {
    auto report = enumerate_rule_space(program, true);
    witnesses_ = std::move(report.witnesses);
  }

  const std::vector<std::uint64_t>& of(std::size_t cls) const {
    if (cls >= witnesses_.size()) throw InvalidArgument("class index " + std::to_string(cls) + " out of range");
    if (witnesses_[cls].empty()) throw NoWitness(classes_[cls]);
    return witnesses_[cls];
  }

  std::size_t class_count() const noexcept { return classes_.size(); }
  const std::vector<std::string>& classes() const noexcept { return classes_; }

private:
  std::vector<std::string> classes_;
  std::vector<std::vector<std::uint64_t>> witnesses_;
};

inline const WitnessTable& canonical_witnesses() {
  static const WitnessTable table(canonical_table1_program());
  return table;
}

/// A gate vector drawn uniformly from the class's witness set.
inline GateVector plant_gate_vector(std::size_t cls, Rng& rng, const WitnessTable& witnesses = canonical_witnesses()) {
  const auto& w = witnesses.of(cls);
  return GateVector{w[rng.uniform_index(w.size())]};
}

struct SynthSpec {
  std::string slide_id = "SYN-0";
  std::string patient_id = "P00";
  Site site = Site::AscendingColon;
  Disease disease = Disease::Normal;
  double microns_per_pixel = 0.32;
  int width = 512;
  int height = 512;
  int nuclei = 100;
  std::vector<double> proportions;  // per class; empty means uniform
  int radius_min = 3;
  int radius_max = 5;
  double positive_mean = 200.0;
  double positive_sd = 10.0;
  double negative_mean = 50.0;
  double negative_sd = 10.0;
  double threshold = 125.0;
  std::uint64_t seed = 0;
  int placement_attempts = 2000;  // per nucleus

  void validate(std::size_t classes) const {
    if (width < 1 || height < 1) throw InvalidArgument("image size must be positive");
    if (nuclei < 0) throw InvalidArgument("nucleus count must be >= 0");
    if (radius_min < 0 || radius_max < radius_min) throw InvalidArgument("invalid radius range");
    if (positive_sd < 0 || negative_sd < 0) throw InvalidArgument("intensity spread must be >= 0");
    if (!proportions.empty()) {
      if (proportions.size() != classes) throw InvalidArgument("one proportion per class required");
      double sum = 0.0;
      for (double p : proportions) {
        if (!(p >= 0.0)) throw InvalidArgument("proportions must be nonnegative");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("proportions must sum to 1");
    }
  }

  bool high_snr() const {
    return positive_mean - 3 * positive_sd > threshold && threshold > negative_mean + 3 * negative_sd;
  }
};

struct TruthEntry {
  std::uint32_t nucleus_id = 0;
  int class_index = 0;
  GateVector gates;
};

struct SyntheticSlide {
  SynthSpec spec;
  SlideManifest manifest;  // paths empty until written
  SlideImages images;
  std::vector<TruthEntry> truth;  // sorted by id

  /// Truth as the LabelTable the canonical pipeline should produce.
  LabelTable truth_labels(const RuleProgram& program = canonical_table1_program()) const {
    const auto compiled = compile_program(program);
    LabelTable t;
    t.classes = program.classes();
    for (const auto& e : truth) {
      const auto outcome = evaluate(compiled, e.gates);
      if (!outcome.is_assigned() || outcome.class_index != e.class_index)
        throw InvalidArgument("planted gate vector does not reproduce its class");
      t.entries.push_back({e.nucleus_id, e.gates, outcome});
    }
    return t;
  }

  /// Thresholds at the planted value for every channel.
  ThresholdSet planted_thresholds() const {
    ThresholdSet t;
    t.slide_id = manifest.slide_id;
    for (const auto& m : images.markers) t.thresholds[m] = spec.threshold;
    return t;
  }
};

namespace detail {

inline std::size_t draw_class(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform01();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  auto idx = static_cast<std::size_t>(it - cumulative.begin());
  // never select a zero-probability class sitting at the end of the table
  while (idx > 0 && cumulative[idx] == cumulative[idx - 1]) --idx;
  return idx;
}

inline std::uint16_t draw_intensity(double mean, double sd, Rng& rng) {
  const double v = sd > 0.0 ? rng.normal(mean, sd) : mean;
  return static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L));
}

}  // namespace detail

/// Non-overlapping disks on a negative background. Each nucleus gets one
/// intensity per channel, constant over its pixels: drawn from the positive
/// distribution where its planted gate bit is set (always for DAPI) and from
/// the negative one otherwise.
inline SyntheticSlide generate_synthetic_slide(const SynthSpec& spec, const RuleProgram& program = canonical_table1_program(),
                                               const WitnessTable* witnesses = nullptr) {
  std::optional<WitnessTable> local;
  const WitnessTable* wtp = witnesses;
  if (!wtp) wtp = &program == &canonical_table1_program() ? &canonical_witnesses() : &local.emplace(program);
  const WitnessTable& wt = *wtp;
  spec.validate(program.classes().size());

  SyntheticSlide out;
  out.spec = spec;
  out.manifest.slide_id = spec.slide_id;
  out.manifest.patient_id = spec.patient_id;
  out.manifest.site = spec.site;
  out.manifest.disease = spec.disease;
  out.manifest.microns_per_pixel = spec.microns_per_pixel;

  const auto& panel = program.panel();
  auto& img = out.images;
  img.mask = InstanceMask(spec.width, spec.height);
  const auto background = static_cast<std::uint16_t>(std::clamp(std::lround(spec.negative_mean), 0L, 65535L));
  for (const auto& m : panel) {
    img.markers.push_back(m.name);
    img.channels.emplace_back(spec.width, spec.height, background);
    out.manifest.channels.push_back({m.name, {}});
  }

  std::vector<double> cumulative(program.classes().size());
  if (spec.proportions.empty()) {
    for (std::size_t c = 0; c < cumulative.size(); ++c) cumulative[c] = static_cast<double>(c + 1) / cumulative.size();
  } else {
    std::partial_sum(spec.proportions.begin(), spec.proportions.end(), cumulative.begin());
  }

  Rng place_rng(Rng::derive(spec.seed, 1));
  Rng class_rng(Rng::derive(spec.seed, 2));
  Rng intensity_rng(Rng::derive(spec.seed, 3));
  const auto dapi = program.marker_index("DAPI");

  for (int n = 0; n < spec.nuclei; ++n) {
    const int r = spec.radius_min + static_cast<int>(place_rng.uniform_index(static_cast<std::uint64_t>(spec.radius_max - spec.radius_min + 1)));
    bool placed = false;
    int cx = 0, cy = 0;
    for (int attempt = 0; attempt < spec.placement_attempts && !placed; ++attempt) {
      if (2 * r + 1 > spec.width || 2 * r + 1 > spec.height) break;
      cx = r + static_cast<int>(place_rng.uniform_index(static_cast<std::uint64_t>(spec.width - 2 * r)));
      cy = r + static_cast<int>(place_rng.uniform_index(static_cast<std::uint64_t>(spec.height - 2 * r)));
      placed = true;
      // require a one-pixel gap to every other nucleus
      for (int y = std::max(0, cy - r - 1); y <= std::min(spec.height - 1, cy + r + 1) && placed; ++y)
        for (int x = std::max(0, cx - r - 1); x <= std::min(spec.width - 1, cx + r + 1); ++x)
          if (img.mask.at(x, y) != 0) {
            placed = false;
            break;
          }
    }
    if (!placed)
      throw PlacementFailure("could not place nucleus " + std::to_string(n + 1) + " of " + std::to_string(spec.nuclei));

    const auto id = static_cast<std::uint32_t>(n + 1);
    const std::size_t cls = detail::draw_class(cumulative, class_rng);
    const GateVector gates = plant_gate_vector(cls, class_rng, wt);
    std::vector<std::uint16_t> values(panel.size());
    for (std::size_t k = 0; k < panel.size(); ++k) {
      const bool positive = gates.test(static_cast<int>(k)) || (dapi && static_cast<std::size_t>(*dapi) == k);
      values[k] = positive ? detail::draw_intensity(spec.positive_mean, spec.positive_sd, intensity_rng)
                           : detail::draw_intensity(spec.negative_mean, spec.negative_sd, intensity_rng);
    }
    for (int y = cy - r; y <= cy + r; ++y)
      for (int x = cx - r; x <= cx + r; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
        img.mask.at(x, y) = id;
        for (std::size_t k = 0; k < panel.size(); ++k) img.channels[k].at(x, y) = values[k];
      }
    out.truth.push_back({id, static_cast<int>(cls), gates});
  }
  return out;
}

/// `nucleus_id,class,gate_bits_hex`
inline void write_truth_csv(std::ostream& os, const std::vector<TruthEntry>& truth, const std::vector<std::string>& classes) {
  os << "nucleus_id,class,gate_bits_hex\n";
  for (const auto& e : truth)
    os << e.nucleus_id << ',' << csv_field(classes.at(static_cast<std::size_t>(e.class_index))) << ','
       << gate_bits_hex(e.gates) << '\n';
}

/// Writes channel and mask TIFFs, `<slide>.json` and `truth.csv` into `dir`
/// and returns the manifest path.
inline std::filesystem::path write_synthetic_slide(const std::filesystem::path& dir, SyntheticSlide& slide,
                                                   const std::vector<std::string>& classes = canonical_table1_program().classes()) {
  std::filesystem::create_directories(dir);
  auto& m = slide.manifest;
  for (std::size_t k = 0; k < slide.images.channels.size(); ++k) {
    const auto name = slide.images.markers[k] + ".tif";
    write_tiff(dir / name, slide.images.channels[k]);
    m.channels[k].path = name;
  }
  write_tiff(dir / "mask.tif", slide.images.mask);
  m.mask_path = "mask.tif";
  const auto manifest_path = dir / (m.slide_id + ".json");
  save_manifest(manifest_path, m);
  for (auto& c : m.channels) c.path = dir / c.path;
  m.mask_path = dir / m.mask_path;
  std::ostringstream truth;
  write_truth_csv(truth, slide.truth, classes);
  write_text_file(dir / "truth.csv", truth.str());
  return manifest_path;
}

// ---------------------------------------------------------------------------
// Cohort

struct CohortSpec {
  int patients = 20;
  int two_slide_patients = 8;  // the first N patients get a slide from each site
  SynthSpec slide;             // template; ids, site, disease and seed are overwritten
  std::uint64_t seed = 0;
};

struct SyntheticCohort {
  std::vector<PatientInfo> patients;
  std::vector<SyntheticSlide> slides;
};

/// Patient i: normal when i % 3 == 0, otherwise inactive or active CD;
/// ascending colon when i is even, terminal ileum otherwise.
inline std::vector<SlideManifest> cohort_manifests(const CohortSpec& spec) {
  std::vector<SlideManifest> out;
  for (int i = 0; i < spec.patients; ++i) {
    char pid[16];
    std::snprintf(pid, sizeof pid, "P%02d", i);
    const Disease disease = i % 3 == 0 ? Disease::Normal : (i % 3 == 1 ? Disease::InactiveCd : Disease::ActiveCd);
    const Site first = i % 2 == 0 ? Site::AscendingColon : Site::TerminalIleum;
    std::vector<Site> sites{first};
    if (i < spec.two_slide_patients) sites.push_back(first == Site::AscendingColon ? Site::TerminalIleum : Site::AscendingColon);
    for (Site s : sites) {
      SlideManifest m;
      m.patient_id = pid;
      m.slide_id = std::string(pid) + (s == Site::AscendingColon ? "-AC" : "-TI");
      m.site = s;
      m.disease = disease;
      m.microns_per_pixel = spec.slide.microns_per_pixel;
      out.push_back(m);
    }
  }
  return out;
}

inline SyntheticCohort generate_synthetic_cohort(const CohortSpec& spec, std::size_t threads = 1) {
  if (spec.patients < 1) throw InvalidArgument("cohort needs at least one patient");
  SyntheticCohort c;
  const auto manifests = cohort_manifests(spec);
  c.patients = patients_from_manifests(manifests);
  c.slides.resize(manifests.size());
  const auto& wt = canonical_witnesses();
  detail::parallel_ranges(manifests.size(), resolve_threads(threads), 1, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      SynthSpec s = spec.slide;
      s.slide_id = manifests[i].slide_id;
      s.patient_id = manifests[i].patient_id;
      s.site = manifests[i].site;
      s.disease = manifests[i].disease;
      s.seed = Rng::derive(spec.seed, i);
      c.slides[i] = generate_synthetic_slide(s, canonical_table1_program(), &wt);
    }
  });
  return c;
}

// ---------------------------------------------------------------------------
// Linearly separable patch set

/// Class c patches are dim noise with one bright 8x8 block whose position
/// encodes c. Three slides hold the train, validation and test patients of a
/// single fold.
inline Dataset make_separable_dataset(const std::vector<std::string>& classes, int train_per_class, int val_per_class,
                                      int test_per_class, std::uint64_t seed) {
  if (classes.empty() || classes.size() > 16) throw InvalidArgument("1 to 16 classes supported");
  Dataset ds;
  ds.manifest.classes = classes;
  ds.manifest.plan.sizes = {1, 1, 1, 1};
  ds.manifest.plan.seed = seed;
  ds.manifest.plan.folds.push_back({{"PT"}, {"PV"}, {"PE"}});
  const Role roles[3] = {Role::Train, Role::Val, Role::Test};
  const int counts[3] = {train_per_class, val_per_class, test_per_class};
  const char* ids[3] = {"PT", "PV", "PE"};
  Rng rng(seed);
  for (std::uint16_t s = 0; s < 3; ++s) {
    ds.manifest.slides.push_back({std::string("SEP-") + ids[s], ids[s], Site::AscendingColon, Disease::Normal,
                                  kTargetMicronsPerPixel, 0, {roles[s]}});
    std::uint32_t id = 1;
    for (int n = 0; n < counts[s]; ++n)
      for (std::size_t c = 0; c < classes.size(); ++c) {
        PatchRecord r;
        r.slide_index = s;
        r.nucleus_id = id++;
        r.label = static_cast<std::uint8_t>(c);
        for (auto& v : r.pixels) v = static_cast<std::uint8_t>(40 + rng.uniform_index(60));
        const int bx = 2 + 10 * static_cast<int>(c % 4), by = 2 + 10 * static_cast<int>(c / 4);
        for (int y = by; y < by + 8; ++y)
          for (int x = bx; x < bx + 8; ++x)
            for (int ch = 0; ch < kPatchChannels; ++ch)
              r.pixels[static_cast<std::size_t>((y * kPatchSize + x) * kPatchChannels + ch)] =
                  static_cast<std::uint8_t>(180 + rng.uniform_index(60));
        ds.records.push_back(r);
      }
    ds.manifest.slides.back().records = static_cast<std::uint64_t>(counts[s]) * classes.size();
  }
  ds.manifest.class_counts.assign(classes.size(), 0);
  for (const auto& r : ds.records) ++ds.manifest.class_counts[r.label];
  ds.manifest.record_count = ds.records.size();
  return ds;
}

}  // namespace mxgate
