#include "nrenet/geometry.hpp"
#include "nrenet/ten_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace nrenet
{

namespace
{

std::uint8_t quantize(float component)
{
    const double scaled = (static_cast<double>(component) + 1.0) / 2.0 * 255.0;
    return static_cast<std::uint8_t>(std::clamp(std::lround(scaled), 0L, 255L));
}

float dequantize(std::uint8_t code) { return static_cast<float>(code / 255.0 * 2.0 - 1.0); }

struct FileCloser
{
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_warn(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; these helpers keep only trivially
// destructible locals between setjmp and the libpng calls.
bool write_rows(png_structp png, png_infop info, std::FILE* file, const RgbImage& image)
{
    if (setjmp(png_jmpbuf(png)))
    {
        return false;
    }
    png_init_io(png, file);
    png_set_IHDR(png,
                 info,
                 static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height),
                 8,
                 PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t row = 0; row < image.height; ++row)
    {
        png_write_row(png, image.pixels.data() + row * image.width * 3);
    }
    png_write_end(png, nullptr);
    return true;
}

bool read_header(png_structp png, png_infop info, std::FILE* file, png_uint_32& width, png_uint_32& height, bool& rgb8)
{
    if (setjmp(png_jmpbuf(png)))
    {
        return false;
    }
    png_init_io(png, file);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    rgb8 = png_get_bit_depth(png, info) == 8 && png_get_color_type(png, info) == PNG_COLOR_TYPE_RGB;
    return true;
}

bool read_rows(png_structp png, std::uint8_t* pixels, png_uint_32 width, png_uint_32 height)
{
    if (setjmp(png_jmpbuf(png)))
    {
        return false;
    }
    for (png_uint_32 row = 0; row < height; ++row)
    {
        png_read_row(png, pixels + static_cast<std::size_t>(row) * width * 3, nullptr);
    }
    png_read_end(png, nullptr);
    return true;
}

} // namespace

RgbImage encode_normal_png(const NormalMap& normals)
{
    RgbImage image{normals.width, normals.height, std::vector<std::uint8_t>(normals.width * normals.height * 3, 0)};
    for (std::size_t i = 0; i < normals.normal.size(); ++i)
    {
        if (!normals.valid[i])
        {
            continue;
        }
        for (std::size_t k = 0; k < 3; ++k)
        {
            image.pixels[3 * i + k] = quantize(normals.normal[i][static_cast<Eigen::Index>(k)]);
        }
    }
    return image;
}

NormalMap decode_normal_png(const RgbImage& image)
{
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3)
    {
        throw ShapeError("normal image: pixel buffer does not match " + std::to_string(image.width) + " x " +
                         std::to_string(image.height) + " x 3");
    }
    NormalMap out(image.width, image.height);
    for (std::size_t i = 0; i < out.normal.size(); ++i)
    {
        const std::uint8_t* px = &image.pixels[3 * i];
        if (px[0] == 0 && px[1] == 0 && px[2] == 0)
        {
            continue;
        }
        const Eigen::Vector3f n(dequantize(px[0]), dequantize(px[1]), dequantize(px[2]));
        if (n.norm() == 0.0f)
        {
            continue;
        }
        out.normal[i] = n.normalized();
        out.valid[i] = 1;
    }
    return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image)
{
    if (image.pixels.size() != image.width * image.height * 3 || image.width == 0 || image.height == 0)
    {
        throw ShapeError("write_png: malformed image dimensions");
    }
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file)
    {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
    png_infop info = png_create_info_struct(png);
    const bool ok = write_rows(png, info, file.get(), image);
    png_destroy_write_struct(&png, &info);
    if (!ok)
    {
        throw FormatError("failed encoding png " + path.string());
    }
}

RgbImage read_png(const std::filesystem::path& path)
{
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file)
    {
        throw FormatError("cannot open " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
    png_infop info = png_create_info_struct(png);
    png_uint_32 width = 0, height = 0;
    bool rgb8 = false;
    if (!read_header(png, info, file.get(), width, height, rgb8) || !rgb8)
    {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path.string() + ": expected an 8-bit RGB png");
    }
    RgbImage image{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
    const bool ok = read_rows(png, image.pixels.data(), width, height);
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok)
    {
        throw FormatError(path.string() + ": corrupt png data");
    }
    return image;
}

} // namespace nrenet
