#pragma once

#include <limits>
#include <span>

#include "dnmp/io/image.hpp"

namespace dnmp::io {

// Returned by psnr for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// 10 log10(1 / MSE) over all channels.
double psnr(std::span<const double> a, std::span<const double> b);
double psnr(const Image& a, const Image& b);

// Single-scale SSIM on luma (0.299, 0.587, 0.114) with an 11 x 11 Gaussian
// window, sigma 1.5, K1 0.01, K2 0.03 and unit dynamic range. Only windows
// fully inside the image are averaged.
double ssim(const Image& a, const Image& b);

}  // namespace dnmp::io
