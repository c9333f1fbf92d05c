#pragma once

#include <string>
#include <vector>

namespace keybot {

/// Grayscale radiograph, row-major, intensities normalized to [0, 1].
class Image {
public:
    Image() = default;
    Image(int height, int width, float fill = 0.0f, std::string source_id = {});
    Image(int height, int width, std::vector<float> pixels, std::string source_id = {});

    int height() const { return height_; }
    int width() const { return width_; }
    bool empty() const { return pixels_.empty(); }
    const std::string& source_id() const { return source_id_; }
    void set_source_id(std::string id) { source_id_ = std::move(id); }

    float at(int r, int c) const { return pixels_[static_cast<std::size_t>(r) * width_ + c]; }
    float& at(int r, int c) { return pixels_[static_cast<std::size_t>(r) * width_ + c]; }
    const std::vector<float>& pixels() const { return pixels_; }
    std::vector<float>& pixels() { return pixels_; }

    /// Bilinear sample at a continuous coordinate; zero outside the image.
    float sample(double row, double col) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> pixels_;
    std::string source_id_;
};

/// Area-average downscale by an integer factor in both axes.
Image downscale(const Image& image, int factor);

/// Bilinear resize with pixel-center alignment.
Image resize(const Image& image, int height, int width);

}  // namespace keybot
