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

// Deterministic H&E-like rendering from fluorescence channels via
// Beer-Lambert mixing of two stain optical densities. This is a stand-in
// so the patch pipeline has an RGB input; it is not a learned translation.

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/image.hpp"
#include "mxgate/phenotype.hpp"
#include "mxgate/slide_io.hpp"

namespace mxgate {

struct StainMixSpec {
  std::vector<std::pair<std::string, double>> hematoxylin{{"DAPI", 1.0}};
  std::vector<std::pair<std::string, double>> eosin;
  std::array<double, 3> od_hematoxylin{0.65, 0.704, 0.286};
  std::array<double, 3> od_eosin{0.07, 0.99, 0.11};
  double gain = 2.0;
  double normalize_percentile = 99.0;

  /// DAPI drives hematoxylin; every other available marker contributes
  /// equally to eosin.
  static StainMixSpec defaults_for(const std::vector<std::string>& markers) {
    StainMixSpec s;
    for (const auto& m : markers)
      if (m != "DAPI") s.eosin.emplace_back(m, 1.0);
    return s;
  }

  void validate() const {
    auto check = [](const auto& mix, const char* which) {
      bool positive = false;
      for (const auto& [m, w] : mix) {
        if (!(w >= 0.0)) throw InvalidArgument(std::string(which) + " weight for " + m + " is negative");
        positive = positive || w > 0.0;
      }
      if (!positive) throw InvalidArgument(std::string(which) + " needs at least one positive weight");
    };
    check(hematoxylin, "hematoxylin");
    check(eosin, "eosin");
    for (double v : od_hematoxylin)
      if (!(v >= 0.0)) throw InvalidArgument("hematoxylin optical density must be nonnegative");
    for (double v : od_eosin)
      if (!(v >= 0.0)) throw InvalidArgument("eosin optical density must be nonnegative");
    if (!(gain > 0.0)) throw InvalidArgument("gain must be positive");
  }
};

inline nlohmann::json to_json(const StainMixSpec& s) {
  auto mix = [](const auto& v) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [m, w] : v) j.push_back({{"marker", m}, {"weight", w}});
    return j;
  };
  return {{"hematoxylin", mix(s.hematoxylin)}, {"eosin", mix(s.eosin)},
          {"od_hematoxylin", s.od_hematoxylin}, {"od_eosin", s.od_eosin},
          {"gain", s.gain}, {"normalize_percentile", s.normalize_percentile}};
}

inline StainMixSpec stain_spec_from_json(const nlohmann::json& j) {
  StainMixSpec s;
  auto mix = [](const nlohmann::json& a) {
    std::vector<std::pair<std::string, double>> v;
    for (const auto& e : a) v.emplace_back(e.at("marker").get<std::string>(), e.at("weight").get<double>());
    return v;
  };
  try {
    if (j.contains("hematoxylin")) s.hematoxylin = mix(j.at("hematoxylin"));
    if (j.contains("eosin")) s.eosin = mix(j.at("eosin"));
    if (j.contains("od_hematoxylin")) s.od_hematoxylin = j.at("od_hematoxylin").get<std::array<double, 3>>();
    if (j.contains("od_eosin")) s.od_eosin = j.at("od_eosin").get<std::array<double, 3>>();
    s.gain = j.value("gain", s.gain);
    s.normalize_percentile = j.value("normalize_percentile", s.normalize_percentile);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("<stain spec>", e.what());
  }
  return s;
}

/// RGB of one pixel given normalized stain amounts.
inline std::array<std::uint8_t, 3> beer_lambert_rgb(double a_h, double a_e, const StainMixSpec& spec) {
  std::array<std::uint8_t, 3> rgb;
  for (int c = 0; c < 3; ++c) {
    const double od = a_h * spec.od_hematoxylin[static_cast<std::size_t>(c)] + a_e * spec.od_eosin[static_cast<std::size_t>(c)];
    rgb[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::lround(255.0 * std::exp(-spec.gain * od)));
  }
  return rgb;
}

namespace detail {

inline std::vector<double> weighted_mix(const SlideImages& slide,
                                        const std::vector<std::pair<std::string, double>>& weights) {
  const std::size_t n = static_cast<std::size_t>(slide.width()) * static_cast<std::size_t>(slide.height());
  std::vector<double> mix(n, 0.0);
  for (const auto& [marker, w] : weights) {
    if (w == 0.0) continue;
    const ChannelImage* ch = slide.channel(marker);
    if (!ch) throw MissingChannel(marker);
    const auto& px = ch->data();
    for (std::size_t i = 0; i < n; ++i) mix[i] += w * px[i];
  }
  return mix;
}

// Nearest-rank percentile used as the normalizer; falls back to the max
// when the percentile is zero.
inline double mix_scale(const std::vector<double>& mix, double percentile) {
  if (mix.empty()) return 0.0;
  std::vector<double> copy = mix;
  const double n = static_cast<double>(copy.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, copy.size());
  std::nth_element(copy.begin(), copy.begin() + static_cast<std::ptrdiff_t>(rank - 1), copy.end());
  const double p = copy[rank - 1];
  if (p > 0.0) return p;
  return *std::max_element(mix.begin(), mix.end());
}

}  // namespace detail

inline RgbImage render_pseudo_he(const SlideImages& slide, const StainMixSpec& spec, std::size_t threads = 1) {
  spec.validate();
  slide.check_dimensions();
  const auto h_mix = detail::weighted_mix(slide, spec.hematoxylin);
  const auto e_mix = detail::weighted_mix(slide, spec.eosin);
  const double h_scale = detail::mix_scale(h_mix, spec.normalize_percentile);
  const double e_scale = detail::mix_scale(e_mix, spec.normalize_percentile);

  RgbImage out(slide.width(), slide.height());
  auto& px = out.data();
  detail::parallel_ranges(h_mix.size(), resolve_threads(threads), 4096, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      const double a_h = h_scale > 0.0 ? std::clamp(h_mix[i] / h_scale, 0.0, 1.0) : 0.0;
      const double a_e = e_scale > 0.0 ? std::clamp(e_mix[i] / e_scale, 0.0, 1.0) : 0.0;
      const auto rgb = beer_lambert_rgb(a_h, a_e, spec);
      px[3 * i] = rgb[0];
      px[3 * i + 1] = rgb[1];
      px[3 * i + 2] = rgb[2];
    }
  });
  return out;
}

}  // namespace mxgate
