#include "gridfield/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gridfield/errors.hpp"

namespace gridfield::png {

namespace {

void append_bytes(png_structp png_ptr, png_bytep data, png_size_t length) {
    auto* out = static_cast<Bytes*>(png_get_io_ptr(png_ptr));
    out->insert(out->end(), data, data + length);
}

void no_flush(png_structp) {}

// rows: height rows of already-packed scanlines.
Bytes encode(int width, int height, int bit_depth, int color_type, const std::vector<Bytes>& rows) {
    png_structp png_ptr = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png_ptr) throw FormatError("png: cannot create write struct");
    png_infop info_ptr = png_create_info_struct(png_ptr);
    if (!info_ptr) {
        png_destroy_write_struct(&png_ptr, nullptr);
        throw FormatError("png: cannot create info struct");
    }
    Bytes out;
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) row_ptrs[y] = const_cast<png_bytep>(rows[y].data());
    if (setjmp(png_jmpbuf(png_ptr))) {
        png_destroy_write_struct(&png_ptr, &info_ptr);
        throw FormatError("png: encode failed");
    }
    png_set_write_fn(png_ptr, &out, append_bytes, no_flush);
    png_set_IHDR(png_ptr, info_ptr, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png_ptr, info_ptr);
    png_write_image(png_ptr, row_ptrs.data());
    png_write_end(png_ptr, nullptr);
    png_destroy_write_struct(&png_ptr, &info_ptr);
    return out;
}

struct Decoded {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

Decoded decode(const Bytes& bytes, png_uint_32 format) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw FormatError(std::string("png: ") + image.message);
    }
    image.format = format;
    Decoded out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError(std::string("png: ") + image.message);
    }
    return out;
}

}  // namespace

Bytes encode_rgb8(int width, int height, const std::vector<std::uint8_t>& rgb) {
    std::vector<Bytes> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        auto begin = rgb.begin() + static_cast<std::ptrdiff_t>(y) * width * 3;
        rows[y].assign(begin, begin + width * 3);
    }
    return encode(width, height, 8, PNG_COLOR_TYPE_RGB, rows);
}

Bytes encode_rgb(const ImageRGB& image) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(image.width) * image.height * 3);
    for (Eigen::Index i = 0; i < image.data.rows(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const float v = std::clamp(image.data(i, c), 0.0f, 1.0f);
            rgb[static_cast<std::size_t>(i) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    return encode_rgb8(image.width, image.height, rgb);
}

Bytes encode_mask(const Bitmap& mask) {
    const int height = static_cast<int>(mask.rows());
    const int width = static_cast<int>(mask.cols());
    std::vector<Bytes> rows(static_cast<std::size_t>(height), Bytes(static_cast<std::size_t>((width + 7) / 8), 0));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (mask(y, x)) rows[y][x / 8] |= static_cast<unsigned char>(0x80u >> (x % 8));
        }
    }
    return encode(width, height, 1, PNG_COLOR_TYPE_GRAY, rows);
}

Bytes encode_gray(const Gray8& gray) {
    const int height = static_cast<int>(gray.rows());
    const int width = static_cast<int>(gray.cols());
    std::vector<Bytes> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[y].assign(gray.row(y).data(), gray.row(y).data() + width);
    return encode(width, height, 8, PNG_COLOR_TYPE_GRAY, rows);
}

ImageRGB decode_rgb(const Bytes& bytes) {
    const Decoded d = decode(bytes, PNG_FORMAT_RGB);
    ImageRGB image(d.width, d.height);
    for (Eigen::Index i = 0; i < image.data.rows(); ++i) {
        for (int c = 0; c < 3; ++c) image.data(i, c) = static_cast<float>(d.pixels[i * 3 + c]) / 255.0f;
    }
    return image;
}

Gray8 decode_gray(const Bytes& bytes) {
    const Decoded d = decode(bytes, PNG_FORMAT_GRAY);
    Gray8 gray(d.height, d.width);
    std::memcpy(gray.data(), d.pixels.data(), d.pixels.size());
    return gray;
}

Bitmap decode_mask(const Bytes& bytes) {
    const Gray8 gray = decode_gray(bytes);
    return (gray != 0).cast<std::uint8_t>();
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace gridfield::png
