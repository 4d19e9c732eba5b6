#include "pvo/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace pvo {

double Image::sample(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = std::min(static_cast<int>(x), width - 2 >= 0 ? width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), height - 2 >= 0 ? height - 2 : 0);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double ax = x - x0;
    const double ay = y - y0;
    return (1 - ax) * (1 - ay) * at(x0, y0) + ax * (1 - ay) * at(x1, y0) +
           (1 - ax) * ay * at(x0, y1) + ax * ay * at(x1, y1);
}

Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);

    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error(path + ": not a binary PGM (P5) file");

    auto next_token = [&in, &path]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error(path + ": truncated PGM header");
    };

    const int width = std::stoi(next_token());
    const int height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
        throw std::runtime_error(path + ": unsupported PGM header");
    }
    in.get();  // single whitespace after maxval

    std::vector<uint8_t> raw(static_cast<size_t>(width) * height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error(path + ": truncated PGM data");

    Image image(width, height);
    for (size_t i = 0; i < raw.size(); ++i) {
        image.pixels[i] = static_cast<float>(raw[i]) / static_cast<float>(maxval);
    }
    return image;
}

void write_pgm(const std::string& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    std::vector<uint8_t> raw(image.pixels.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
        raw[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("short write to " + path);
}

Image read_png(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw std::runtime_error("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": PNG decode error");
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize everything to 8-bit gray.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if ((png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) != 0) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));

    std::vector<uint8_t> raw(static_cast<size_t>(width) * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = raw.data() + static_cast<size_t>(y) * width;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image image(width, height);
    for (size_t i = 0; i < raw.size(); ++i) image.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
    return image;
}

Image read_image(const std::string& path) {
    if (path.size() >= 4) {
        const std::string ext = path.substr(path.size() - 4);
        if (ext == ".png" || ext == ".PNG") return read_png(path);
    }
    return read_pgm(path);
}

}  // namespace pvo
