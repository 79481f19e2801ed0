#include "matte/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace matte {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool has_extension(const fs::path& p, const char* ext) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return e == ext;
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError(path.string() + ": only binary PGM (P5) is supported");
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    long v = -1;
    in >> v;
    return v;
  };
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError(path.string() + ": unsupported PGM header");
  in.get();
  std::vector<unsigned char> buf(static_cast<std::size_t>(w * h));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw DataError(path.string() + ": truncated PGM data");
  Image img(static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1);
  for (std::size_t i = 0; i < buf.size(); ++i) img[i] = buf[i] / 255.0;
  return img;
}

Image read_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows;
  std::vector<unsigned char> pixels;
  png_uint_32 w = 0;
  png_uint_32 h = 0;
  int channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS) != 0) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t out_c = channels >= 3 ? 3 : 1;
  Image img(h, w, out_c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const unsigned char* px = pixels.data() + y * stride + x * static_cast<std::size_t>(channels);
      for (std::size_t c = 0; c < out_c; ++c) img(y, x, c) = px[c] / 255.0;
    }
  }
  return img;
}

void write_png_file(const fs::path& path, const Image& image) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  const std::size_t c = image.channels();
  std::vector<unsigned char> pixels(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) pixels[i] = quantize(image[i]);
  std::vector<png_bytep> rows(image.height());
  for (std::size_t y = 0; y < image.height(); ++y) rows[y] = pixels.data() + y * image.width() * c;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8,
               c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pgm_file(const fs::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  for (std::size_t i = 0; i < image.size(); ++i) out.put(static_cast<char>(quantize(image[i])));
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

std::uint8_t quantize(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

Image read_image(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing file " + path.string());
  return has_extension(path, ".pgm") ? read_pgm(path) : read_png(path);
}

Image read_trimap(const fs::path& path) {
  Image raw = read_image(path);
  if (raw.channels() != 1) throw DataError(path.string() + ": trimap must be single-channel");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const long b = std::lround(raw[i] * 255.0);
    if (b == 0) {
      raw[i] = 0.0;
    } else if (b == 255) {
      raw[i] = 1.0;
    } else if (b >= 127 && b <= 129) {
      raw[i] = 0.5;
    } else {
      throw DataError(path.string() + ": value " + std::to_string(b) + " is not a trimap level");
    }
  }
  return raw;
}

void write_image(const fs::path& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ShapeError("write_image: expected 1 or 3 channels, got " + image.shape().str());
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  if (has_extension(path, ".pgm")) {
    if (image.channels() != 1) throw ShapeError("write_image: PGM requires a single channel");
    write_pgm_file(tmp, image);
  } else {
    write_png_file(tmp, image);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace matte
