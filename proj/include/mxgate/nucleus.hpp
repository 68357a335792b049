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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mxgate {

/// One segmented nucleus. `means[k]` is the mean intensity of channel k of
/// the owning table.
struct NucleusRecord {
  std::uint32_t id = 0;
  double cx = 0.0;
  double cy = 0.0;
  std::uint64_t area = 0;
  std::vector<double> means;

  bool operator==(const NucleusRecord&) const = default;
};

/// Per-nucleus features of one slide, records sorted by id.
struct NucleusTable {
  std::vector<std::string> channels;
  std::vector<NucleusRecord> records;

  std::optional<std::size_t> channel_index(const std::string& marker) const {
    for (std::size_t i = 0; i < channels.size(); ++i)
      if (channels[i] == marker) return i;
    return std::nullopt;
  }

  bool operator==(const NucleusTable&) const = default;
};

/// Per-slide positivity thresholds in raw channel units.
struct ThresholdSet {
  std::string slide_id;
  std::uint64_t version = 0;
  std::map<std::string, double> thresholds;

  std::optional<double> get(const std::string& marker) const {
    auto it = thresholds.find(marker);
    if (it == thresholds.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const ThresholdSet&) const = default;
};

}  // namespace mxgate
