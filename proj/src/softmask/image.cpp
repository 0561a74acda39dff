// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <regex>
#include <string>

#include "softmask/errors.hpp"

namespace softmask {

namespace {

constexpr char kNpyMagic[] = "\x93NUMPY";

std::string npy_header(int h, int w) {
  std::string dict = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(h) + ", " +
                     std::to_string(w) + ", 3), }";
  // magic(6) + version(2) + len(2) + dict + padding + '\n' must be a multiple of 64.
  const std::size_t unpadded = 10 + dict.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');
  return dict;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_npy(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string dict = npy_header(image.height(), image.width());
  out.write(kNpyMagic, 6);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(dict.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  static_assert(std::endian::native == std::endian::little, "npy writer assumes little-endian host");
  out.write(reinterpret_cast<const char*>(image.data().data()),
            static_cast<std::streamsize>(image.data().size() * sizeof(double)));
  if (!out) throw IoError("short write to " + path.string());
}

Image read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[6];
  char version[2];
  in.read(magic, 6);
  in.read(version, 2);
  if (!in || std::memcmp(magic, kNpyMagic, 6) != 0) throw IoError(path.string() + ": not an npy file");
  std::size_t header_len = 0;
  if (version[0] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::size_t>(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError(path.string() + ": truncated npy header");

  std::smatch m;
  if (!std::regex_search(header, m, std::regex("'descr':\\s*'([<|>]?[a-z][0-9]+)'"))) {
    throw IoError(path.string() + ": npy header without descr");
  }
  const std::string descr = m[1];
  if (header.find("'fortran_order': False") == std::string::npos) {
    throw IoError(path.string() + ": fortran-ordered npy not supported");
  }
  if (!std::regex_search(header, m, std::regex("'shape':\\s*\\((\\d+),\\s*(\\d+),\\s*(\\d+)\\s*,?\\)"))) {
    throw IoError(path.string() + ": npy image must have shape (H, W, 3)");
  }
  const int h = std::stoi(m[1]);
  const int w = std::stoi(m[2]);
  if (std::stoi(m[3]) != Image::kChannels) throw IoError(path.string() + ": expected 3 channels");

  Image image(h, w);
  const std::size_t count = image.data().size();
  if (descr == "<f8") {
    in.read(reinterpret_cast<char*>(image.data().data()), static_cast<std::streamsize>(count * sizeof(double)));
  } else if (descr == "<f4") {
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
    std::copy(buf.begin(), buf.end(), image.data().begin());
  } else if (descr == "|u1") {
    std::vector<unsigned char> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
    std::transform(buf.begin(), buf.end(), image.data().begin(), [](unsigned char v) { return v / 255.0; });
  } else {
    throw IoError(path.string() + ": unsupported npy dtype " + descr);
  }
  if (!in) throw IoError(path.string() + ": truncated npy payload");
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> rows(static_cast<std::size_t>(image.height()) * image.width() * 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double v = std::clamp(image.data()[i], 0.0, 1.0);
    rows[i] = static_cast<png_byte>(std::lround(v * 255.0));
  }
  std::vector<png_bytep> row_ptrs(image.height());
  for (int y = 0; y < image.height(); ++y) row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * image.width() * 3;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot read " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  std::vector<png_byte> rows(static_cast<std::size_t>(h) * w * 3);
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image image(h, w);
  std::transform(rows.begin(), rows.end(), image.data().begin(), [](png_byte v) { return v / 255.0; });
  return image;
}

Image read_image(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".npy") return read_npy(path);
  if (ext == ".png") return read_png(path);
  throw IoError("unsupported image format: " + path.string());
}

}  // namespace softmask
