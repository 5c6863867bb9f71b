#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace forge {

/// 8-bit RGB raster, row-major, interleaved.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    bool empty() const { return rgb.empty(); }
    std::uint8_t* at(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const {
        return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

/// Decodes any raster format OpenCV understands. Returns nullopt on
/// unreadable or undecodable input.
std::optional<Image> load_image(const std::filesystem::path& path);

/// Writes PNG (lossless, so a reload reproduces content_hash).
void save_png(const Image& img, const std::filesystem::path& path);

/// SHA-256 over the decoded pixel bytes, prefixed with the dimensions so
/// that a reshaped buffer never collides with the original.
std::string content_hash(const Image& img);

/// Center-crop to a square on the short side, then bilinear resize.
Image center_crop_resize(const Image& img, int side);

/// Bilinear resize without cropping.
Image resize(const Image& img, int width, int height);

/// Pixels mapped to [-1, 1], layout height x width x 3.
std::vector<double> to_unit_range(const Image& img);
Image from_unit_range(const std::vector<double>& values, int width, int height);

Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);

bool is_image_extension(const std::filesystem::path& path);

} // namespace forge
