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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mxgate {

/// Row-major interleaved image with `C` samples per pixel.
template <typename T, int C = 1>
class Image {
public:
  using value_type = T;
  static constexpr int channels = C;

  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * C, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }
  bool same_size(int w, int h) const noexcept { return width_ == w && height_ == h; }

  T& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<T> row(int y) { return {data_.data() + index(0, y, 0), static_cast<std::size_t>(width_) * C}; }
  std::span<const T> row(int y) const {
    return {data_.data() + index(0, y, 0), static_cast<std::size_t>(width_) * C};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool operator==(const Image&) const = default;

private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * C +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ChannelImage = Image<std::uint16_t>;
using InstanceMask = Image<std::uint32_t>;
using RgbImage = Image<std::uint8_t, 3>;
using RgbaImage = Image<std::uint8_t, 4>;

}  // namespace mxgate
