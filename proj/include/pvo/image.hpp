#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pvo {

// Grayscale image with float pixels in [0, 1], row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h, 0.0f) {}

    float at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
    float& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }

    // Bilinear sample with clamped borders.
    double sample(double x, double y) const;
};

// 8-bit binary PGM (P5).
Image read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Image& image);

// 8-bit PNG; color inputs are converted to luminance.
Image read_png(const std::string& path);

// Dispatch on file extension (.pgm / .png).
Image read_image(const std::string& path);

}  // namespace pvo
