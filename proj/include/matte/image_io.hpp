#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "matte/tensor.hpp"

namespace matte {

/// File missing, unreadable or not in the expected format.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit quantisation used for every stored plane: round(v * 255), clamped.
std::uint8_t quantize(double v);

/// Reads an 8-bit PNG (gray, gray+alpha, RGB, RGBA) or binary PGM into [0, 1].
/// Alpha channels in the file are dropped.
Image read_image(const std::filesystem::path& path);

/// Reads a trimap file, snapping 0 -> 0.0, 127..129 -> 0.5, 255 -> 1.0.
Image read_trimap(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as 8-bit PNG (or PGM when the extension is
/// .pgm). The file appears atomically via write-then-rename.
void write_image(const std::filesystem::path& path, const Image& image);

}  // namespace matte
