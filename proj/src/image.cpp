#include "licsec/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "licsec/common.hpp"

namespace licsec {

nn::Tensor Image::to_tensor() const {
    nn::Tensor t({1, 3, height, width});
    std::copy(rgb.begin(), rgb.end(), t.raw().begin());
    return t;
}

Image Image::from_tensor(const nn::Tensor& t, int batch_index) {
    if (t.ndim() != 4 || t.dim(1) != 3)
        raise(ErrorClass::Numeric, "image tensor must be [B,3,H,W], got " + t.shape_str());
    Image img(t.dim(2), t.dim(3));
    const double* src = t.data() + int64_t(batch_index) * 3 * t.dim(2) * t.dim(3);
    std::copy(src, src + img.rgb.size(), img.rgb.begin());
    return img;
}

namespace {
int read_pnm_token(std::istream& in) {
    // skips whitespace and # comments
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    if (!(in >> v)) raise(ErrorClass::Format, "malformed PPM header");
    return v;
}
}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorClass::Format, "cannot open image: " + path);
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    if (m0 != 'P' || m1 != '6') raise(ErrorClass::Format, path + ": not a binary PPM (P6)");
    int w = read_pnm_token(f);
    int h = read_pnm_token(f);
    int maxval = read_pnm_token(f);
    if (w <= 0 || h <= 0 || maxval != 255)
        raise(ErrorClass::Format, path + ": unsupported PPM dimensions or maxval");
    f.get();  // single whitespace after maxval
    std::vector<uint8_t> buf(size_t(3) * h * w);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (!f) raise(ErrorClass::Format, path + ": truncated PPM payload");
    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = buf[(size_t(y) * w + x) * 3 + c] / 255.0;
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorClass::Format, "cannot write image: " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> buf(size_t(3) * img.height * img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::round(img.at(c, y, x) * 255.0);
                buf[(size_t(y) * img.width + x) * 3 + c] =
                    uint8_t(std::min(255.0, std::max(0.0, v)));
            }
    f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!f) raise(ErrorClass::Format, "failed to write image: " + path);
}

Image snap_to_8bit(const Image& img) {
    Image out(img.height, img.width);
    for (size_t i = 0; i < img.rgb.size(); ++i)
        out.rgb[i] = std::min(255.0, std::max(0.0, std::round(img.rgb[i] * 255.0))) / 255.0;
    return out;
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width)
        raise(ErrorClass::Numeric, "crop out of bounds");
    Image out(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

Image pad_to(const Image& img, int h, int w) {
    if (h < img.height || w < img.width) raise(ErrorClass::Numeric, "pad_to shrinks image");
    Image out(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(c, y, x) = img.at(c, std::min(y, img.height - 1),
                                         std::min(x, img.width - 1));
    return out;
}

}  // namespace licsec
