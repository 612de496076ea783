#include "par/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "par/errors.hpp"

namespace par {

bool is_binary(const Image& mask) {
    for (float v : mask.pixels) {
        if (v != 0.0f && v != 1.0f) return false;
    }
    return true;
}

double foreground_fraction(const Image& mask) {
    if (mask.pixels.empty()) return 0.0;
    double on = 0;
    for (float v : mask.pixels) on += v;
    return on / static_cast<double>(mask.pixels.size());
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

namespace {

// Returns false when libpng reports an error. Kept free of objects with
// destructors because of setjmp.
bool encode_png(png_structp png, png_infop info, std::FILE* file, const Image& image, png_byte* row) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_init_io(png, file);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = image.width * image.channels;
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t i = 0; i < stride; ++i) {
            const float v = std::clamp(image.pixels[y * stride + i], 0.0f, 1.0f);
            row[i] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    return true;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw std::runtime_error("write_png: need 1 or 3 channels");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng initialization failed");
    }
    std::vector<png_byte> row(image.width * image.channels);
    const bool ok = encode_png(png, info, file.get(), image, row.data());
    png_destroy_write_struct(&png, &info);
    if (!ok) throw std::runtime_error("failed writing " + path.string());
}

Image read_png(const std::filesystem::path& path, std::size_t channels) {
    if (channels != 1 && channels != 3) throw std::runtime_error("read_png: need 1 or 3 channels");
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw std::runtime_error("cannot open " + path.string());
    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw std::runtime_error(path.string() + " is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng initialization failed");
    }
    Image image;
    std::vector<png_byte> row;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed decoding " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    const bool source_gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
    if (channels == 3 && source_gray) png_set_gray_to_rgb(png);
    if (channels == 1 && !source_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    image = Image(png_get_image_height(png, info), png_get_image_width(png, info), channels);
    if (png_get_channels(png, info) != channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path.string() + ": unexpected channel layout");
    }
    row.resize(image.width * channels);
    for (std::size_t y = 0; y < image.height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (std::size_t i = 0; i < row.size(); ++i) image.pixels[y * row.size() + i] = row[i] / 255.0f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

Image read_mask_png(const std::filesystem::path& path) {
    auto mask = read_png(path, 1);
    for (auto& v : mask.pixels) v = v >= 0.5f ? 1.0f : 0.0f;
    return mask;
}

template <typename T>
Tensor<T> stack_images(const std::vector<const Image*>& images) {
    if (images.empty()) throw DimensionError("stack_images: no images");
    const auto& first = *images.front();
    std::vector<T> values;
    values.reserve(images.size() * first.pixels.size());
    for (const auto* img : images) {
        if (img->height != first.height || img->width != first.width || img->channels != first.channels) {
            throw DimensionError("stack_images: images differ in size");
        }
        values.insert(values.end(), img->pixels.begin(), img->pixels.end());
    }
    return Tensor<T>({images.size(), first.height, first.width, first.channels}, std::move(values));
}

template Tensor<float> stack_images(const std::vector<const Image*>&);
template Tensor<double> stack_images(const std::vector<const Image*>&);

}  // namespace par
