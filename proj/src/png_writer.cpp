#include "acs/png_writer.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace acs {

std::vector<std::uint8_t> to_gray8(const RealImage& img) {
  std::vector<std::uint8_t> px(img.size(), 0);
  if (img.size() == 0) return px;
  const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return px;
  for (std::size_t i = 0; i < img.size(); ++i)
    px[i] = static_cast<std::uint8_t>(std::lround(255.0 * (img[i] - *lo) / range));
  return px;
}

void write_png(const std::string& path, const RealImage& img) {
  const auto px = to_gray8(img);
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < img.height(); ++r)
    png_write_row(png, const_cast<png_bytep>(px.data() + r * img.width()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace acs
