#pragma once

#include <string>
#include <vector>

#include "licsec/tensor.hpp"

namespace licsec {

// Planar RGB image with values in [0,1]; on disk it is 8-bit binary PPM (P6).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> rgb;  // [3][H][W] planar

    Image() = default;
    Image(int h, int w) : height(h), width(w), rgb(size_t(3) * h * w, 0.0) {}

    double& at(int c, int y, int x) { return rgb[size_t((c * height + y)) * width + x]; }
    double at(int c, int y, int x) const { return rgb[size_t((c * height + y)) * width + x]; }

    // [1,3,H,W] tensor for the codec.
    nn::Tensor to_tensor() const;
    static Image from_tensor(const nn::Tensor& t, int batch_index = 0);
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// 8-bit quantized copy (the pipeline treats inputs as 8-bit content).
Image snap_to_8bit(const Image& img);

Image crop(const Image& img, int y0, int x0, int h, int w);
// Replicate-pad on bottom/right to the requested size.
Image pad_to(const Image& img, int h, int w);

}  // namespace licsec
