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

// Minimal strip/tile TIFF codec over libtiff for the formats the pipeline
// uses: 16-bit gray channels, 32-bit label masks and 8-bit RGB renders.

#include <tiffio.h>

#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/image.hpp"

namespace mxgate {

namespace detail {

inline std::string& tiff_last_error() {
  thread_local std::string msg;
  return msg;
}

inline void tiff_error_handler(const char* module, const char* fmt, va_list ap) {
  char buf[512];
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  tiff_last_error() = (module ? std::string(module) + ": " : std::string()) + buf;
}

inline void tiff_silence() {
  static const bool once = [] {
    TIFFSetErrorHandler(tiff_error_handler);
    TIFFSetWarningHandler(nullptr);
    return true;
  }();
  (void)once;
}

struct TiffCloser {
  void operator()(TIFF* t) const noexcept {
    if (t) TIFFClose(t);
  }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

inline TiffHandle tiff_open(const std::filesystem::path& path, const char* mode) {
  tiff_silence();
  if (mode[0] == 'r' && !std::filesystem::exists(path)) throw IoError(path.string(), "file not found");
  tiff_last_error().clear();
  TiffHandle h(TIFFOpen(path.string().c_str(), mode));
  if (!h) {
    if (mode[0] == 'r') throw DecodeError(path.string(), "not a readable TIFF: " + tiff_last_error());
    throw IoError(path.string(), "cannot create TIFF: " + tiff_last_error());
  }
  return h;
}

template <typename T>
constexpr std::uint16_t tiff_sample_format() {
  return std::is_floating_point_v<T> ? SAMPLEFORMAT_IEEEFP
                                     : (std::is_signed_v<T> ? SAMPLEFORMAT_INT : SAMPLEFORMAT_UINT);
}

struct TiffLayout {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint16_t bits = 0;
  std::uint16_t samples = 1;
  std::uint16_t format = SAMPLEFORMAT_UINT;
  std::uint16_t planar = PLANARCONFIG_CONTIG;
  bool tiled = false;
};

inline TiffLayout tiff_layout(TIFF* t) {
  TiffLayout l;
  TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &l.width);
  TIFFGetField(t, TIFFTAG_IMAGELENGTH, &l.height);
  TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &l.bits);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &l.samples);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &l.format);
  TIFFGetFieldDefaulted(t, TIFFTAG_PLANARCONFIG, &l.planar);
  l.tiled = TIFFIsTiled(t) != 0;
  return l;
}

template <typename T, int C>
void check_layout(const TiffLayout& l, const std::filesystem::path& path) {
  if (l.bits != 8 * sizeof(T) || l.samples != C || l.format != tiff_sample_format<T>())
    throw DecodeError(path.string(), "expected " + std::to_string(8 * sizeof(T)) + "-bit " + std::to_string(C) +
                                         "-sample image, found " + std::to_string(l.bits) + "-bit " +
                                         std::to_string(l.samples) + "-sample");
  if (l.samples > 1 && l.planar != PLANARCONFIG_CONTIG)
    throw DecodeError(path.string(), "planar-separate TIFF not supported");
}

}  // namespace detail

/// Width and height of a TIFF without decoding pixels.
inline std::pair<int, int> tiff_dimensions(const std::filesystem::path& path) {
  auto t = detail::tiff_open(path, "r");
  const auto l = detail::tiff_layout(t.get());
  return {static_cast<int>(l.width), static_cast<int>(l.height)};
}

template <typename T, int C = 1>
Image<T, C> read_tiff(const std::filesystem::path& path) {
  auto t = detail::tiff_open(path, "r");
  const auto l = detail::tiff_layout(t.get());
  detail::check_layout<T, C>(l, path);
  Image<T, C> img(static_cast<int>(l.width), static_cast<int>(l.height));
  if (!l.tiled) {
    for (std::uint32_t y = 0; y < l.height; ++y)
      if (TIFFReadScanline(t.get(), img.row(static_cast<int>(y)).data(), y, 0) < 0)
        throw DecodeError(path.string(), "scanline " + std::to_string(y) + ": " + detail::tiff_last_error());
    return img;
  }
  std::uint32_t tw = 0, th = 0;
  TIFFGetField(t.get(), TIFFTAG_TILEWIDTH, &tw);
  TIFFGetField(t.get(), TIFFTAG_TILELENGTH, &th);
  std::vector<T> tile(static_cast<std::size_t>(TIFFTileSize(t.get())) / sizeof(T));
  for (std::uint32_t ty = 0; ty < l.height; ty += th)
    for (std::uint32_t tx = 0; tx < l.width; tx += tw) {
      if (TIFFReadTile(t.get(), tile.data(), tx, ty, 0, 0) < 0)
        throw DecodeError(path.string(), "tile read failed: " + detail::tiff_last_error());
      for (std::uint32_t y = ty; y < std::min(ty + th, l.height); ++y)
        for (std::uint32_t x = tx; x < std::min(tx + tw, l.width); ++x)
          for (int c = 0; c < C; ++c)
            img.at(static_cast<int>(x), static_cast<int>(y), c) =
                tile[((y - ty) * tw + (x - tx)) * C + static_cast<std::uint32_t>(c)];
    }
  return img;
}

template <typename T, int C>
void write_tiff(const std::filesystem::path& path, const Image<T, C>& img) {
  auto t = detail::tiff_open(path, "w");
  TIFF* h = t.get();
  TIFFSetField(h, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(img.width()));
  TIFFSetField(h, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(img.height()));
  TIFFSetField(h, TIFFTAG_BITSPERSAMPLE, static_cast<std::uint16_t>(8 * sizeof(T)));
  TIFFSetField(h, TIFFTAG_SAMPLESPERPIXEL, static_cast<std::uint16_t>(C));
  TIFFSetField(h, TIFFTAG_SAMPLEFORMAT, detail::tiff_sample_format<T>());
  TIFFSetField(h, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(h, TIFFTAG_PHOTOMETRIC, C == 3 ? PHOTOMETRIC_RGB : PHOTOMETRIC_MINISBLACK);
  TIFFSetField(h, TIFFTAG_COMPRESSION,
               TIFFIsCODECConfigured(COMPRESSION_ADOBE_DEFLATE) ? COMPRESSION_ADOBE_DEFLATE : COMPRESSION_NONE);
  TIFFSetField(h, TIFFTAG_ROWSPERSTRIP, std::uint32_t{64});
  std::vector<T> row(static_cast<std::size_t>(img.width()) * C);
  for (int y = 0; y < img.height(); ++y) {
    auto src = img.row(y);
    std::copy(src.begin(), src.end(), row.begin());
    if (TIFFWriteScanline(h, row.data(), static_cast<std::uint32_t>(y), 0) < 0)
      throw IoError(path.string(), "scanline write failed: " + detail::tiff_last_error());
  }
}

/// Sequential scanline reader used for band-wise streaming over slides that
/// do not fit in memory.
template <typename T>
class TiffRowReader {
public:
  explicit TiffRowReader(const std::filesystem::path& path) : path_(path), handle_(detail::tiff_open(path, "r")) {
    layout_ = detail::tiff_layout(handle_.get());
    detail::check_layout<T, 1>(layout_, path);
    if (layout_.tiled) throw DecodeError(path.string(), "tiled TIFF cannot be streamed by rows");
  }

  int width() const noexcept { return static_cast<int>(layout_.width); }
  int height() const noexcept { return static_cast<int>(layout_.height); }

  void read_row(int y, T* dst) {
    if (TIFFReadScanline(handle_.get(), dst, static_cast<std::uint32_t>(y), 0) < 0)
      throw DecodeError(path_.string(), "scanline " + std::to_string(y) + ": " + detail::tiff_last_error());
  }

private:
  std::filesystem::path path_;
  detail::TiffHandle handle_;
  detail::TiffLayout layout_;
};

}  // namespace mxgate
