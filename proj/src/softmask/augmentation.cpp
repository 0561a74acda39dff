// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/augmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "softmask/errors.hpp"

namespace softmask {

const std::vector<std::string>& randaugment_op_names() {
  static const std::vector<std::string> names = {"rotate",   "translate", "brightness",
                                                 "contrast", "posterize", "equalize"};
  return names;
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augment.") + name + " must lie in [0, 1]");
  };
  prob(grayscale_prob, "grayscale_prob");
  prob(blur_prob, "blur_prob");
  if (crop_size < 1) throw ConfigError("augment.crop_size must be >= 1");
  if (jitter_strength < 0.0 || jitter_strength >= 1.0) throw ConfigError("augment.jitter_strength must lie in [0, 1)");
  if (blur_sigma_min <= 0.0 || blur_sigma_max < blur_sigma_min) {
    throw ConfigError("augment.blur sigma range must satisfy 0 < min <= max");
  }
  if (randaugment_num_ops < 0) throw ConfigError("augment.randaugment_num_ops must be >= 0");
  if (randaugment_num_ops > 0 && randaugment_ops.empty()) throw ConfigError("augment.randaugment_ops is empty");
  for (const RandAugmentOp& op : randaugment_ops) {
    const auto& names = randaugment_op_names();
    if (std::find(names.begin(), names.end(), op.name) == names.end()) {
      throw ConfigError("augment: unknown RandAugment op '" + op.name + "'");
    }
    prob(op.magnitude, "randaugment magnitude");
  }
}

namespace {

void clamp01(Image& img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
}

double sample_bilinear(const Image& img, double y, double x, int c, double fill) {
  if (y < -0.5 || x < -0.5 || y > img.height() - 0.5 || x > img.width() - 0.5) return fill;
  const double yc = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  const int y0 = static_cast<int>(std::floor(yc));
  const int x0 = static_cast<int>(std::floor(xc));
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const double fy = yc - y0;
  const double fx = xc - x0;
  return (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
         fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
}

// Inverse-maps every output pixel through (dy, dx) -> source coordinates.
template <typename Map>
Image warp(const Image& img, Map map) {
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto [sy, sx] = map(static_cast<double>(y), static_cast<double>(x));
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = sample_bilinear(img, sy, sx, c, 0.0);
    }
  }
  return out;
}

double luminance(const Image& img, int y, int x) {
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

Image blend(const Image& a, const Image& b, double factor) {
  // a + factor * (b - a)
  Image out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] + factor * (b.data()[i] - a.data()[i]);
  clamp01(out);
  return out;
}

Image adjust_brightness(const Image& img, double factor) {
  Image out = img;
  for (double& v : out.data()) v *= factor;
  clamp01(out);
  return out;
}

Image adjust_contrast(const Image& img, double factor) {
  double mean = 0.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) mean += luminance(img, y, x);
  }
  mean /= static_cast<double>(img.height()) * img.width();
  Image gray(img.height(), img.width(), mean);
  return blend(gray, img, factor);
}

Image adjust_saturation(const Image& img, double factor) { return blend(to_grayscale(img), img, factor); }

Image posterize(const Image& img, int bits) {
  Image out = img;
  const int shift = 8 - std::clamp(bits, 1, 8);
  for (double& v : out.data()) {
    const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    v = ((q >> shift) << shift) / 255.0;
  }
  return out;
}

Image equalize(const Image& img) {
  Image out = img;
  const int pixels = img.height() * img.width();
  for (int c = 0; c < Image::kChannels; ++c) {
    std::array<int, 256> hist{};
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) ++hist[std::lround(std::clamp(img.at(y, x, c), 0.0, 1.0) * 255.0)];
    }
    std::array<int, 256> cdf{};
    int running = 0;
    for (int i = 0; i < 256; ++i) cdf[i] = running += hist[i];
    int cdf_min = 0;
    for (int i = 0; i < 256; ++i) {
      if (hist[i] > 0) {
        cdf_min = cdf[i];
        break;
      }
    }
    if (pixels == cdf_min) continue;  // single level
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const int level = static_cast<int>(std::lround(std::clamp(img.at(y, x, c), 0.0, 1.0) * 255.0));
        out.at(y, x, c) = static_cast<double>(cdf[level] - cdf_min) / (pixels - cdf_min);
      }
    }
  }
  return out;
}

}  // namespace

Image resize_bilinear(const Image& img, int height, int width) {
  Image out(height, width);
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double src_y = (y + 0.5) * sy - 0.5;
      const double src_x = (x + 0.5) * sx - 0.5;
      for (int c = 0; c < Image::kChannels; ++c) {
        out.at(y, x, c) = sample_bilinear(img, std::clamp(src_y, 0.0, img.height() - 1.0),
                                          std::clamp(src_x, 0.0, img.width() - 1.0), c, 0.0);
      }
    }
  }
  return out;
}

Image crop(const Image& img, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > img.height() || left + width > img.width()) {
    throw ShapeError("crop window outside the image");
  }
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
    }
  }
  return out;
}

Image to_grayscale(const Image& img) {
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double l = std::clamp(luminance(img, y, x), 0.0, 1.0);
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = l;
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& k : kernel) k /= total;
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  Image tmp(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * img.at(y, reflect(x + i, img.width()), c);
        tmp.at(y, x, c) = acc;
      }
    }
  }
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(reflect(y + i, img.height()), x, c);
        out.at(y, x, c) = acc;
      }
    }
  }
  clamp01(out);
  return out;
}

Image apply_randaugment_op(const Image& img, const RandAugmentOp& op, bool negate) {
  const double sign = negate ? -1.0 : 1.0;
  const double m = op.magnitude;
  if (op.name == "rotate") {
    const double angle = sign * m * 30.0 * std::numbers::pi / 180.0;
    const double cy = (img.height() - 1) / 2.0;
    const double cx = (img.width() - 1) / 2.0;
    const double cs = std::cos(angle);
    const double sn = std::sin(angle);
    return warp(img, [=](double y, double x) {
      const double dy = y - cy;
      const double dx = x - cx;
      return std::pair{cy + cs * dy - sn * dx, cx + sn * dy + cs * dx};
    });
  }
  if (op.name == "translate") {
    const double ty = sign * m * 0.3 * img.height();
    const double tx = sign * m * 0.3 * img.width();
    return warp(img, [=](double y, double x) { return std::pair{y - ty, x - tx}; });
  }
  if (op.name == "brightness") return adjust_brightness(img, 1.0 + sign * 0.9 * m);
  if (op.name == "contrast") return adjust_contrast(img, 1.0 + sign * 0.9 * m);
  if (op.name == "posterize") return posterize(img, 8 - static_cast<int>(std::lround(4.0 * m)));
  if (op.name == "equalize") return equalize(img);
  throw ConfigError("unknown RandAugment op '" + op.name + "'");
}

Image augment_image(const Image& image, const AugmentConfig& config, std::uint64_t seed) {
  if (!config.enabled) return image;
  config.validate();
  if (config.crop_size > image.height() || config.crop_size > image.width()) {
    throw ConfigError("augment.crop_size " + std::to_string(config.crop_size) + " exceeds image size " +
                      std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::uniform_int_distribution<int> top_dist(0, image.height() - config.crop_size);
  std::uniform_int_distribution<int> left_dist(0, image.width() - config.crop_size);
  const int top = top_dist(rng);
  const int left = left_dist(rng);
  Image out = resize_bilinear(crop(image, top, left, config.crop_size, config.crop_size), image.height(),
                              image.width());

  if (!config.randaugment_ops.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, config.randaugment_ops.size() - 1);
    for (int i = 0; i < config.randaugment_num_ops; ++i) {
      const RandAugmentOp& op = config.randaugment_ops[pick(rng)];
      const bool negate = unit(rng) < 0.5;
      out = apply_randaugment_op(out, op, negate);
    }
  }

  if (config.jitter_strength > 0.0) {
    const double s = config.jitter_strength;
    std::uniform_real_distribution<double> factor(1.0 - s, 1.0 + s);
    const double b = factor(rng);
    const double c = factor(rng);
    const double sat = factor(rng);
    out = adjust_saturation(adjust_contrast(adjust_brightness(out, b), c), sat);
  }
  if (unit(rng) < config.grayscale_prob) out = to_grayscale(out);
  if (unit(rng) < config.blur_prob) {
    std::uniform_real_distribution<double> sigma(config.blur_sigma_min, config.blur_sigma_max);
    out = gaussian_blur(out, sigma(rng));
  }
  clamp01(out);
  return out;
}

MmdaSample make_mmda_pair(const ImageTextPair& pair, const AugmentConfig& config, bool mmda, double mask_rate,
                          std::uint64_t image_seed, std::uint64_t text_seed, const Vocabulary& vocab,
                          int max_text_len, int patch_size) {
  MmdaSample sample;
  const Image image = mmda ? augment_image(pair.image, config, image_seed) : pair.image;
  sample.patches = patchify(image, patch_size);
  sample.clean = tokenize(pair.caption, vocab, max_text_len);
  sample.masked = mask_text(sample.clean, mask_rate, text_seed);
  return sample;
}

}  // namespace softmask
