#include "forge/image.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

namespace forge {

namespace fs = std::filesystem;

std::optional<Image> load_image(const fs::path& path) {
    cv::Mat bgr;
    try {
        bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    } catch (const cv::Exception&) {
        return std::nullopt;
    }
    if (bgr.empty()) return std::nullopt;
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Image img(rgb.cols, rgb.rows);
    for (int y = 0; y < rgb.rows; ++y) {
        std::memcpy(img.at(0, y), rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3);
    }
    return img;
}

void save_png(const Image& img, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.rgb.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw ForgeError("cannot write image " + path.string());
}

std::string content_hash(const Image& img) {
    std::string buf = "rgb8:" + std::to_string(img.width) + "x" + std::to_string(img.height) + "\n";
    buf.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
    return sha256_hex(buf);
}

Image center_crop_resize(const Image& img, int side) {
    const int s = std::min(img.width, img.height);
    const int x0 = (img.width - s) / 2;
    const int y0 = (img.height - s) / 2;
    cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.rgb.data()));
    cv::Mat crop = rgb(cv::Rect(x0, y0, s, s));
    cv::Mat resized;
    if (s == side) {
        resized = crop.clone();
    } else {
        cv::resize(crop, resized, cv::Size(side, side), 0, 0, cv::INTER_LINEAR);
    }
    Image out(side, side);
    for (int y = 0; y < side; ++y) {
        std::memcpy(out.at(0, y), resized.ptr<std::uint8_t>(y), static_cast<std::size_t>(side) * 3);
    }
    return out;
}

Image resize(const Image& img, int width, int height) {
    cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.rgb.data()));
    cv::Mat resized;
    cv::resize(rgb, resized, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        std::memcpy(out.at(0, y), resized.ptr<std::uint8_t>(y), static_cast<std::size_t>(width) * 3);
    }
    return out;
}

std::vector<double> to_unit_range(const Image& img) {
    std::vector<double> out(img.rgb.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.rgb[i] / 127.5 - 1.0;
    return out;
}

Image from_unit_range(const std::vector<double>& values, int width, int height) {
    Image img(width, height);
    if (values.size() != img.rgb.size()) throw ValidationError("from_unit_range: size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp((values[i] + 1.0) * 127.5, 0.0, 255.0);
        img.rgb[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return img;
}

Image flip_horizontal(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) std::memcpy(out.at(img.width - 1 - x, y), img.at(x, y), 3);
    }
    return out;
}

Image flip_vertical(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        std::memcpy(out.at(0, img.height - 1 - y), img.at(0, y), static_cast<std::size_t>(img.width) * 3);
    }
    return out;
}

bool is_image_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    static const char* kExts[] = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp", ".ppm", ".pgm"};
    return std::any_of(std::begin(kExts), std::end(kExts), [&](const char* e) { return ext == e; });
}

} // namespace forge
