#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gridfield/types.hpp"

namespace gridfield::png {

using Bytes = std::vector<unsigned char>;
using Gray8 = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 8-bit RGB, values quantised as round(255 v).
Bytes encode_rgb(const ImageRGB& image);
/// 8-bit RGB from interleaved bytes (width * height * 3).
Bytes encode_rgb8(int width, int height, const std::vector<std::uint8_t>& rgb);
/// 1-bit grayscale.
Bytes encode_mask(const Bitmap& mask);
/// 8-bit grayscale.
Bytes encode_gray(const Gray8& gray);

ImageRGB decode_rgb(const Bytes& bytes);
/// Any nonzero gray value counts as set.
Bitmap decode_mask(const Bytes& bytes);
Gray8 decode_gray(const Bytes& bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);

}  // namespace gridfield::png
