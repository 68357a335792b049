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

#include "mxgate/png_io.hpp"
#include "mxgate/pseudo_he.hpp"
#include "mxgate/rng.hpp"

using namespace mxgate;

namespace {

SlideImages he_slide(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  SlideImages s;
  s.mask = InstanceMask(w, h);
  for (const char* m : {"DAPI", "PanCK", "CD45"}) {
    s.markers.emplace_back(m);
    ChannelImage img(w, h);
    for (auto& v : img.data()) v = static_cast<std::uint16_t>(rng.uniform_index(30000));
    s.channels.push_back(std::move(img));
  }
  return s;
}

}  // namespace

TEST(PseudoHe, ZeroChannelsRenderWhite) {
  SlideImages s;
  s.mask = InstanceMask(5, 3);
  s.markers = {"DAPI", "CD4"};
  s.channels = {ChannelImage(5, 3), ChannelImage(5, 3)};
  const auto img = render_pseudo_he(s, StainMixSpec::defaults_for(s.markers));
  EXPECT_EQ(img.width(), 5);
  EXPECT_EQ(img.height(), 3);
  for (auto v : img.data()) EXPECT_EQ(v, 255);
}

TEST(PseudoHe, BeerLambertFixtures) {
  StainMixSpec spec;
  EXPECT_EQ(beer_lambert_rgb(1, 0, spec), (std::array<std::uint8_t, 3>{69, 62, 144}));
  EXPECT_EQ(beer_lambert_rgb(0, 1, spec), (std::array<std::uint8_t, 3>{222, 35, 205}));
  EXPECT_EQ(beer_lambert_rgb(0.5, 0.5, spec), (std::array<std::uint8_t, 3>{124, 47, 172}));
  EXPECT_EQ(beer_lambert_rgb(0, 0, spec), (std::array<std::uint8_t, 3>{255, 255, 255}));
}

TEST(PseudoHe, DoublingIntensitiesIsInvariant) {
  auto s = he_slide(37, 29, 3);
  const auto spec = StainMixSpec::defaults_for(s.markers);
  const auto a = render_pseudo_he(s, spec);
  for (auto& ch : s.channels)
    for (auto& v : ch.data()) v = static_cast<std::uint16_t>(v * 2);
  EXPECT_EQ(render_pseudo_he(s, spec), a);
}

TEST(PseudoHe, HematoxylinMonotone) {
  Rng rng(9);
  auto s = he_slide(23, 19, 5);
  const auto spec = StainMixSpec::defaults_for(s.markers);
  for (int trial = 0; trial < 200; ++trial) {
    const auto before = render_pseudo_he(s, spec);
    const int x = static_cast<int>(rng.uniform_index(23));
    const int y = static_cast<int>(rng.uniform_index(19));
    auto& v = s.channels[0].at(x, y);
    v = static_cast<std::uint16_t>(std::min<std::uint64_t>(65535, v + 1 + rng.uniform_index(20000)));
    const auto after = render_pseudo_he(s, spec);
    for (int c = 0; c < 3; ++c) EXPECT_LE(after.at(x, y, c), before.at(x, y, c));
  }
}

TEST(PseudoHe, DeterministicAcrossThreads) {
  const auto s = he_slide(211, 97, 1);
  const auto spec = StainMixSpec::defaults_for(s.markers);
  const auto a = render_pseudo_he(s, spec, 1);
  EXPECT_EQ(render_pseudo_he(s, spec, 4), a);
  EXPECT_EQ(render_pseudo_he(s, spec, 1), a);
}

TEST(PseudoHe, Errors) {
  auto s = he_slide(8, 8, 1);
  auto spec = StainMixSpec::defaults_for(s.markers);
  spec.eosin.push_back({"Muc2", 1.0});
  EXPECT_THROW(render_pseudo_he(s, spec), MissingChannel);
  spec = StainMixSpec::defaults_for(s.markers);
  spec.eosin = {{"CD45", 0.0}};
  EXPECT_THROW(render_pseudo_he(s, spec), InvalidArgument);
  spec = StainMixSpec::defaults_for(s.markers);
  s.channels[1] = ChannelImage(4, 8);
  EXPECT_THROW(render_pseudo_he(s, spec), DimensionMismatch);
}

TEST(PseudoHe, SpecJsonRoundTrip) {
  auto spec = StainMixSpec::defaults_for({"DAPI", "CD4", "SMA"});
  spec.gain = 1.5;
  const auto back = stain_spec_from_json(to_json(spec));
  EXPECT_EQ(back.eosin, spec.eosin);
  EXPECT_EQ(back.hematoxylin, spec.hematoxylin);
  EXPECT_EQ(back.gain, 1.5);
}

TEST(PseudoHe, PngRoundTrip) {
  const auto img = render_pseudo_he(he_slide(31, 17, 2), StainMixSpec::defaults_for({"DAPI", "PanCK", "CD45"}));
  const auto path = std::filesystem::temp_directory_path() / "mxgate_he_roundtrip.png";
  write_png(path, img);
  EXPECT_EQ(read_png_rgb(path), img);
}
