#pragma once

#include <vector>

#include "licsec/image.hpp"

namespace licsec::metrics {

// 10*log10(1/MSE) for unit-range images; exact matches report the 100 dB cap
// so CSVs stay finite.
constexpr double kDbCap = 100.0;
double psnr(const nn::Tensor& a, const nn::Tensor& b);
double psnr(const Image& a, const Image& b);

// 5-scale MS-SSIM with the conventional weights; RGB channels averaged.
// Windows shrink below 11 when a scale is smaller than the window.
double ms_ssim(const Image& a, const Image& b);
double msssim_db(double score);  // -10*log10(1-score), capped

struct RDPoint {
    double bpp = 0;
    double psnr = 0;
    double msssim = 0;
};

struct RDCurve {
    std::vector<RDPoint> points;
    // sorted by bpp ascending, strictly increasing, >= minimum size
    void validate(size_t min_points = 4) const;
};

enum class BdFit { Cubic, PiecewiseCubic };

// Bjontegaard deltas of curve b relative to curve a over their shared
// log10(rate) range: average vertical quality gap (dB) and average
// horizontal rate gap (%).
double bd_quality(const std::vector<double>& bpp_a, const std::vector<double>& q_a,
                  const std::vector<double>& bpp_b, const std::vector<double>& q_b,
                  BdFit fit = BdFit::Cubic);
double bd_rate(const std::vector<double>& bpp_a, const std::vector<double>& q_a,
               const std::vector<double>& bpp_b, const std::vector<double>& q_b,
               BdFit fit = BdFit::Cubic);

double bd_psnr(const RDCurve& a, const RDCurve& b, BdFit fit = BdFit::Cubic);
double bd_rate(const RDCurve& a, const RDCurve& b, BdFit fit = BdFit::Cubic);

// Test oracle: same fits, dense trapezoidal integration instead of the
// closed-form antiderivative.
double bd_quality_trapezoid(const std::vector<double>& bpp_a, const std::vector<double>& q_a,
                            const std::vector<double>& bpp_b, const std::vector<double>& q_b,
                            int grid_points = 200000, BdFit fit = BdFit::Cubic);

}  // namespace licsec::metrics
