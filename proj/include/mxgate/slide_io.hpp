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
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/image.hpp"
#include "mxgate/nucleus.hpp"
#include "mxgate/phenotype.hpp"
#include "mxgate/text_io.hpp"
#include "mxgate/tiff_io.hpp"

namespace mxgate {

enum class Site { AscendingColon, TerminalIleum };
enum class Disease { Normal, InactiveCd, ActiveCd };

inline const char* to_string(Site s) { return s == Site::AscendingColon ? "ascending-colon" : "terminal-ileum"; }

inline const char* to_string(Disease d) {
  switch (d) {
    case Disease::Normal: return "normal";
    case Disease::InactiveCd: return "inactive-cd";
    case Disease::ActiveCd: return "active-cd";
  }
  return "?";
}

inline Site parse_site(const std::string& s) {
  if (s == "ascending-colon") return Site::AscendingColon;
  if (s == "terminal-ileum") return Site::TerminalIleum;
  throw DecodeError("<manifest>", "unknown site '" + s + "'");
}

inline Disease parse_disease(const std::string& s) {
  if (s == "normal") return Disease::Normal;
  if (s == "inactive-cd") return Disease::InactiveCd;
  if (s == "active-cd") return Disease::ActiveCd;
  throw DecodeError("<manifest>", "unknown disease status '" + s + "'");
}

inline bool is_diseased(Disease d) { return d != Disease::Normal; }

struct ChannelRef {
  std::string marker;
  std::filesystem::path path;

  bool operator==(const ChannelRef&) const = default;
};

struct SlideManifest {
  std::string slide_id;
  std::string patient_id;
  Site site = Site::AscendingColon;
  Disease disease = Disease::Normal;
  double microns_per_pixel = 0.32;
  std::vector<ChannelRef> channels;
  std::filesystem::path mask_path;

  std::vector<std::string> markers() const {
    std::vector<std::string> out;
    for (const auto& c : channels) out.push_back(c.marker);
    return out;
  }

  void validate() const {
    if (!(microns_per_pixel > 0.0) || !std::isfinite(microns_per_pixel))
      throw InvalidArgument("slide " + slide_id + ": microns_per_pixel must be positive");
    for (std::size_t i = 0; i < channels.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (channels[i].marker == channels[j].marker)
          throw InvalidArgument("slide " + slide_id + ": duplicate channel '" + channels[i].marker + "'");
  }

  bool operator==(const SlideManifest&) const = default;
};

inline nlohmann::json to_json(const SlideManifest& m) {
  nlohmann::json j;
  j["slide_id"] = m.slide_id;
  j["patient_id"] = m.patient_id;
  j["site"] = to_string(m.site);
  j["disease"] = to_string(m.disease);
  j["microns_per_pixel"] = m.microns_per_pixel;
  j["channels"] = nlohmann::json::array();
  for (const auto& c : m.channels) j["channels"].push_back({{"marker", c.marker}, {"path", c.path.string()}});
  j["mask_path"] = m.mask_path.string();
  return j;
}

/// Parses a manifest; relative paths resolve against `base_dir`.
inline SlideManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  SlideManifest m;
  try {
    m.slide_id = j.at("slide_id").get<std::string>();
    m.patient_id = j.at("patient_id").get<std::string>();
    m.site = parse_site(j.at("site").get<std::string>());
    m.disease = parse_disease(j.at("disease").get<std::string>());
    m.microns_per_pixel = j.at("microns_per_pixel").get<double>();
    for (const auto& c : j.at("channels"))
      m.channels.push_back({c.at("marker").get<std::string>(), resolve(c.at("path").get<std::string>())});
    m.mask_path = resolve(j.at("mask_path").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("<manifest>", e.what());
  }
  m.validate();
  return m;
}

inline SlideManifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(path.string(), e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

inline void save_manifest(const std::filesystem::path& path, const SlideManifest& m) {
  write_text_file(path, to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------

struct SlideImages {
  std::vector<std::string> markers;
  std::vector<ChannelImage> channels;
  InstanceMask mask;

  int width() const noexcept { return mask.width(); }
  int height() const noexcept { return mask.height(); }

  const ChannelImage* channel(const std::string& marker) const {
    for (std::size_t i = 0; i < markers.size(); ++i)
      if (markers[i] == marker) return &channels[i];
    return nullptr;
  }

  void check_dimensions() const {
    for (std::size_t i = 0; i < channels.size(); ++i)
      if (!channels[i].same_size(mask.width(), mask.height()))
        throw DimensionMismatch(markers[i]);
  }
};

inline SlideImages load_slide(const SlideManifest& manifest) {
  manifest.validate();
  for (const auto& c : manifest.channels)
    if (!std::filesystem::exists(c.path)) throw IoError(c.path.string(), "channel file not found");
  if (!std::filesystem::exists(manifest.mask_path)) throw IoError(manifest.mask_path.string(), "mask file not found");

  SlideImages s;
  s.mask = read_tiff<std::uint32_t>(manifest.mask_path);
  for (const auto& c : manifest.channels) {
    s.markers.push_back(c.marker);
    s.channels.push_back(read_tiff<std::uint16_t>(c.path));
    if (!s.channels.back().same_size(s.mask.width(), s.mask.height())) throw DimensionMismatch(c.marker);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Per-nucleus features

namespace detail {

// Integer partial sums for a set of nuclei; merging is associative.
class FeatureAccumulator {
public:
  explicit FeatureAccumulator(std::size_t channels) : k_(channels) {}

  // Accumulates rows [y0, y0+rows) given row pointers for the mask and each
  // channel (channel_rows[c][r] is row r of channel c relative to y0).
  void add_rows(int y0, int rows, int width, const std::uint32_t* const* mask_rows,
                const std::vector<const std::uint16_t* const*>& channel_rows) {
    std::vector<std::int64_t> slot_of(static_cast<std::size_t>(width));
    for (int r = 0; r < rows; ++r) {
      const std::uint32_t* m = mask_rows[r];
      const auto y = static_cast<std::uint64_t>(y0 + r);
      std::uint32_t last_id = 0;
      std::int64_t last_slot = -1;
      for (int x = 0; x < width; ++x) {
        const std::uint32_t id = m[x];
        if (id == 0) {
          slot_of[static_cast<std::size_t>(x)] = -1;
          continue;
        }
        if (id != last_id) {
          last_id = id;
          last_slot = slot(id);
        }
        auto* acc = &sums_[static_cast<std::size_t>(last_slot) * stride()];
        acc[0] += 1;
        acc[1] += static_cast<std::uint64_t>(x);
        acc[2] += y;
        slot_of[static_cast<std::size_t>(x)] = last_slot;
      }
      for (std::size_t c = 0; c < k_; ++c) {
        const std::uint16_t* v = channel_rows[c][r];
        for (int x = 0; x < width; ++x) {
          const std::int64_t s = slot_of[static_cast<std::size_t>(x)];
          if (s >= 0) sums_[static_cast<std::size_t>(s) * stride() + 3 + c] += v[x];
        }
      }
    }
  }

  void merge(const FeatureAccumulator& other) {
    for (const auto& [id, s] : other.slots_) {
      const std::size_t dst = static_cast<std::size_t>(slot(id)) * stride();
      const std::size_t src = s * stride();
      for (std::size_t i = 0; i < stride(); ++i) sums_[dst + i] += other.sums_[src + i];
    }
  }

  std::vector<NucleusRecord> records() const {
    std::vector<NucleusRecord> out;
    out.reserve(slots_.size());
    for (const auto& [id, s] : slots_) {
      const std::uint64_t* a = &sums_[s * stride()];
      NucleusRecord r;
      r.id = id;
      r.area = a[0];
      const double area = static_cast<double>(a[0]);
      r.cx = static_cast<double>(a[1]) / area;
      r.cy = static_cast<double>(a[2]) / area;
      r.means.resize(k_);
      for (std::size_t c = 0; c < k_; ++c) r.means[c] = static_cast<double>(a[3 + c]) / area;
      out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

  std::uint64_t channel_total(std::size_t c) const {
    std::uint64_t t = 0;
    for (const auto& [id, s] : slots_) t += sums_[s * stride() + 3 + c];
    return t;
  }

private:
  std::size_t stride() const noexcept { return 3 + k_; }

  std::int64_t slot(std::uint32_t id) {
    auto [it, inserted] = slots_.try_emplace(id, slots_.size());
    if (inserted) sums_.resize(sums_.size() + stride(), 0);
    return static_cast<std::int64_t>(it->second);
  }

  std::size_t k_;
  std::unordered_map<std::uint32_t, std::size_t> slots_;
  std::vector<std::uint64_t> sums_;
};

}  // namespace detail

/// One record per nonzero mask id, sorted by id. Rows are split into bands
/// processed in parallel and merged with exact integer sums.
inline NucleusTable compute_nucleus_features(const SlideImages& slide, std::size_t threads = 1) {
  slide.check_dimensions();
  const int w = slide.width();
  const int h = slide.height();
  const std::size_t k = slide.channels.size();
  const std::size_t bands = std::max<std::size_t>(1, std::min<std::size_t>(resolve_threads(threads),
                                                                          static_cast<std::size_t>(std::max(h, 1))));

  std::vector<detail::FeatureAccumulator> partial(bands, detail::FeatureAccumulator(k));
  auto work = [&](std::size_t band) {
    const int y0 = static_cast<int>(static_cast<std::size_t>(h) * band / bands);
    const int y1 = static_cast<int>(static_cast<std::size_t>(h) * (band + 1) / bands);
    std::vector<const std::uint32_t*> mrows;
    std::vector<std::vector<const std::uint16_t*>> crows(k);
    for (int y = y0; y < y1; ++y) {
      mrows.push_back(slide.mask.row(y).data());
      for (std::size_t c = 0; c < k; ++c) crows[c].push_back(slide.channels[c].row(y).data());
    }
    std::vector<const std::uint16_t* const*> cptr;
    for (auto& v : crows) cptr.push_back(v.data());
    partial[band].add_rows(y0, y1 - y0, w, mrows.data(), cptr);
  };
  if (bands == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t b = 0; b < bands; ++b) pool.emplace_back([&work, b] { work(b); });
    for (auto& t : pool) t.join();
  }
  for (std::size_t b = 1; b < bands; ++b) partial[0].merge(partial[b]);

  NucleusTable table;
  table.channels = slide.markers;
  table.records = partial[0].records();
  if (table.records.empty()) throw EmptyMask();
  return table;
}

/// Same result as load_slide + compute_nucleus_features, but reads the TIFF
/// files in row bands so only `band_rows` rows per channel are resident.
inline NucleusTable compute_nucleus_features_streaming(const SlideManifest& manifest, int band_rows = 256,
                                                       std::size_t threads = 1) {
  manifest.validate();
  TiffRowReader<std::uint32_t> mask(manifest.mask_path);
  std::vector<TiffRowReader<std::uint16_t>> channels;
  for (const auto& c : manifest.channels) {
    channels.emplace_back(c.path);
    if (channels.back().width() != mask.width() || channels.back().height() != mask.height())
      throw DimensionMismatch(c.marker);
  }
  const int w = mask.width();
  const int h = mask.height();
  const std::size_t k = channels.size();
  band_rows = std::max(1, band_rows);
  threads = resolve_threads(threads);

  std::vector<std::uint32_t> mbuf(static_cast<std::size_t>(w) * static_cast<std::size_t>(band_rows));
  std::vector<std::vector<std::uint16_t>> cbuf(k, std::vector<std::uint16_t>(mbuf.size()));
  detail::FeatureAccumulator total(k);

  for (int y0 = 0; y0 < h; y0 += band_rows) {
    const int rows = std::min(band_rows, h - y0);
    for (int r = 0; r < rows; ++r) {
      mask.read_row(y0 + r, mbuf.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(w));
      for (std::size_t c = 0; c < k; ++c)
        channels[c].read_row(y0 + r, cbuf[c].data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(w));
    }
    const std::size_t parts = std::min<std::size_t>(threads, static_cast<std::size_t>(rows));
    std::vector<detail::FeatureAccumulator> partial(parts, detail::FeatureAccumulator(k));
    auto work = [&](std::size_t p) {
      const int r0 = static_cast<int>(static_cast<std::size_t>(rows) * p / parts);
      const int r1 = static_cast<int>(static_cast<std::size_t>(rows) * (p + 1) / parts);
      std::vector<const std::uint32_t*> mrows;
      std::vector<std::vector<const std::uint16_t*>> crows(k);
      for (int r = r0; r < r1; ++r) {
        mrows.push_back(mbuf.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(w));
        for (std::size_t c = 0; c < k; ++c)
          crows[c].push_back(cbuf[c].data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(w));
      }
      std::vector<const std::uint16_t* const*> cptr;
      for (auto& v : crows) cptr.push_back(v.data());
      partial[p].add_rows(y0 + r0, r1 - r0, w, mrows.data(), cptr);
    };
    if (parts == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t p = 0; p < parts; ++p) pool.emplace_back([&work, p] { work(p); });
      for (auto& t : pool) t.join();
    }
    for (auto& p : partial) total.merge(p);
  }

  NucleusTable table;
  table.channels = manifest.markers();
  table.records = total.records();
  if (table.records.empty()) throw EmptyMask();
  return table;
}

// ---------------------------------------------------------------------------
// Threshold suggestion over per-nucleus means

struct ThresholdMethod {
  enum class Kind { Otsu, Percentile };
  Kind kind = Kind::Otsu;
  double percentile = 50.0;

  static ThresholdMethod otsu() { return {}; }
  static ThresholdMethod at_percentile(double p) { return {Kind::Percentile, p}; }
};

/// Otsu's threshold on a 256-bin histogram spanning [min, max] of `values`.
/// When several splits tie for the maximal between-class variance, the
/// middle of the tied run is used.
inline double otsu_threshold(const std::vector<double>& values) {
  if (values.empty()) throw EmptyMask();
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn, hi = *mx;
  if (!(hi > lo)) return lo;
  constexpr int bins = 256;
  const double width = (hi - lo) / bins;
  std::array<double, bins> hist{};
  for (double v : values) {
    int b = static_cast<int>((v - lo) / width);
    hist[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int i = 0; i < bins; ++i) sum_all += i * hist[static_cast<std::size_t>(i)];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int first = 0, last = 0;
  for (int k = 0; k < bins - 1; ++k) {
    w0 += hist[static_cast<std::size_t>(k)];
    sum0 += k * hist[static_cast<std::size_t>(k)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (var > best * (1.0 + 1e-12)) {
      best = var;
      first = last = k;
    } else if (var >= best * (1.0 - 1e-12)) {
      last = k;
    }
  }
  const int split = (first + last) / 2;
  return lo + (split + 1) * width;
}

/// Nearest-rank percentile: the smallest value with at least p% of the data
/// at or below it.
inline double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw EmptyMask();
  if (!(p >= 0.0 && p <= 100.0)) throw InvalidArgument("percentile must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

inline ThresholdSet suggest_thresholds(const NucleusTable& table, ThresholdMethod method,
                                       const std::string& slide_id = {}) {
  if (table.records.empty()) throw EmptyMask();
  ThresholdSet out;
  out.slide_id = slide_id;
  for (std::size_t c = 0; c < table.channels.size(); ++c) {
    std::vector<double> v;
    v.reserve(table.records.size());
    for (const auto& r : table.records) v.push_back(r.means[c]);
    out.thresholds[table.channels[c]] =
        method.kind == ThresholdMethod::Kind::Otsu ? otsu_threshold(v) : percentile_nearest_rank(std::move(v), method.percentile);
  }
  return out;
}

inline ThresholdSet suggest_thresholds(const SlideImages& slide, ThresholdMethod method,
                                       const std::string& slide_id = {}) {
  return suggest_thresholds(compute_nucleus_features(slide), method, slide_id);
}

// ---------------------------------------------------------------------------
// File formats

inline nlohmann::json to_json(const ThresholdSet& t) {
  nlohmann::json j;
  j["slide_id"] = t.slide_id;
  j["version"] = t.version;
  j["thresholds"] = nlohmann::json::object();
  for (const auto& [m, v] : t.thresholds) j["thresholds"][m] = v;
  return j;
}

inline ThresholdSet thresholds_from_json(const nlohmann::json& j) {
  ThresholdSet t;
  try {
    t.slide_id = j.at("slide_id").get<std::string>();
    t.version = j.value("version", std::uint64_t{0});
    for (const auto& [m, v] : j.at("thresholds").items()) {
      const double value = v.get<double>();
      if (!(value >= 0.0) || !std::isfinite(value))
        throw DecodeError("<thresholds>", "threshold for " + m + " must be a finite value >= 0");
      t.thresholds[m] = value;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("<thresholds>", e.what());
  }
  return t;
}

inline ThresholdSet load_thresholds(const std::filesystem::path& path) {
  try {
    return thresholds_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(path.string(), e.what());
  }
}

inline void save_thresholds(const std::filesystem::path& path, const ThresholdSet& t) {
  write_text_file(path, to_json(t).dump(2) + "\n");
}

inline void write_nucleus_csv(std::ostream& os, const NucleusTable& table) {
  os << "nucleus_id,cx,cy,area";
  for (const auto& c : table.channels) os << ',' << csv_field(c);
  os << '\n';
  for (const auto& r : table.records) {
    os << r.id << ',' << format_double(r.cx) << ',' << format_double(r.cy) << ',' << r.area;
    for (double m : r.means) os << ',' << format_double(m);
    os << '\n';
  }
}

inline NucleusTable read_nucleus_csv(const std::string& text, const std::string& context = "<features>") {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DecodeError(context, "empty features file");
  const auto header = split_csv_line(lines[0]);
  if (header.size() < 4 || header[0] != "nucleus_id" || header[1] != "cx" || header[2] != "cy" || header[3] != "area")
    throw DecodeError(context, "bad header");
  NucleusTable t;
  t.channels.assign(header.begin() + 4, header.end());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != header.size()) throw DecodeError(context, "line " + std::to_string(i + 1) + ": wrong field count");
    NucleusRecord r;
    r.id = static_cast<std::uint32_t>(parse_uint(f[0], context));
    r.cx = parse_double(f[1], context);
    r.cy = parse_double(f[2], context);
    r.area = parse_uint(f[3], context);
    for (std::size_t c = 4; c < f.size(); ++c) r.means.push_back(parse_double(f[c], context));
    t.records.push_back(std::move(r));
  }
  std::sort(t.records.begin(), t.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return t;
}

}  // namespace mxgate
