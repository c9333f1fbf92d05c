#include "keybot/core/image.hpp"

#include <algorithm>
#include <cmath>

#include "keybot/core/error.hpp"

namespace keybot {

Image::Image(int height, int width, float fill, std::string source_id)
    : height_(height), width_(width), source_id_(std::move(source_id))
{
    require(height >= 1 && width >= 1, Errc::invalid_argument, "image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(height) * width, fill);
}

Image::Image(int height, int width, std::vector<float> pixels, std::string source_id)
    : height_(height), width_(width), pixels_(std::move(pixels)), source_id_(std::move(source_id))
{
    require(height >= 1 && width >= 1, Errc::invalid_argument, "image dimensions must be positive");
    require(pixels_.size() == static_cast<std::size_t>(height) * width, Errc::invalid_argument,
            "pixel buffer does not match dimensions");
    for (float v : pixels_) require(std::isfinite(v), Errc::invalid_argument, "image intensities must be finite");
}

float Image::sample(double row, double col) const
{
    double r0 = std::floor(row), c0 = std::floor(col);
    double fr = row - r0, fc = col - c0;
    int ir = static_cast<int>(r0), ic = static_cast<int>(c0);
    auto px = [&](int r, int c) -> double {
        if (r < 0 || c < 0 || r >= height_ || c >= width_) return 0.0;
        return pixels_[static_cast<std::size_t>(r) * width_ + c];
    };
    double top = px(ir, ic) * (1 - fc) + px(ir, ic + 1) * fc;
    double bottom = px(ir + 1, ic) * (1 - fc) + px(ir + 1, ic + 1) * fc;
    return static_cast<float>(top * (1 - fr) + bottom * fr);
}

Image downscale(const Image& image, int factor)
{
    require(factor >= 1 && image.height() % factor == 0 && image.width() % factor == 0, Errc::invalid_argument,
            "downscale factor must divide the image dimensions");
    if (factor == 1) return image;
    int h = image.height() / factor, w = image.width() / factor;
    std::vector<float> out(static_cast<std::size_t>(h) * w, 0.0f);
    const float norm = 1.0f / static_cast<float>(factor * factor);
    for (int r = 0; r < image.height(); ++r)
        for (int c = 0; c < image.width(); ++c) out[(r / factor) * w + c / factor] += image.at(r, c);
    for (float& v : out) v *= norm;
    return Image(h, w, std::move(out), image.source_id());
}

Image resize(const Image& image, int height, int width)
{
    require(height >= 1 && width >= 1, Errc::invalid_argument, "resize target must be positive");
    Image out(height, width, 0.0f, image.source_id());
    double sr = static_cast<double>(image.height()) / height;
    double sc = static_cast<double>(image.width()) / width;
    for (int r = 0; r < height; ++r) {
        double src_r = std::clamp((r + 0.5) * sr - 0.5, 0.0, image.height() - 1.0);
        for (int c = 0; c < width; ++c) {
            double src_c = std::clamp((c + 0.5) * sc - 0.5, 0.0, image.width() - 1.0);
            out.at(r, c) = image.sample(src_r, src_c);
        }
    }
    return out;
}

}  // namespace keybot
