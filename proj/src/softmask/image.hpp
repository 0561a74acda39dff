// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace softmask {

// Channel-last RGB image with float samples, nominally in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * kChannels, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Lossless float64 storage in the NumPy .npy layout, shape (H, W, 3).
void write_npy(const std::filesystem::path& path, const Image& image);
Image read_npy(const std::filesystem::path& path);

// 8-bit RGB PNG. Samples are clamped to [0, 1] and rounded on write.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

// Dispatches on the file extension (.npy or .png).
Image read_image(const std::filesystem::path& path);

}  // namespace softmask
