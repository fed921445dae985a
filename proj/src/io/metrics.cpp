#include "dnmp/io/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dnmp::io {

double psnr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("psnr: images differ in size");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  if (se == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("psnr: images differ in size");
  return psnr(a.rgb, b.rgb);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> luma(const Image& img) {
  std::vector<double> y(img.pixel_count());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.299 * img.rgb[3 * i] + 0.587 * img.rgb[3 * i + 1] + 0.114 * img.rgb[3 * i + 2];
  }
  return y;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("ssim: images differ in size");
  if (a.width < kWindow || a.height < kWindow) throw std::invalid_argument("ssim: image is smaller than the 11x11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double g[kWindow], gsum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    gsum += g[i];
  }
  for (auto& v : g) v /= gsum;
  const auto ya = luma(a), yb = luma(b);
  const int w = a.width, h = a.height;
  double total = 0.0;
  std::size_t count = 0;
  for (int y0 = 0; y0 + kWindow <= h; ++y0) {
    for (int x0 = 0; x0 + kWindow <= w; ++x0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < kWindow; ++dy) {
        for (int dx = 0; dx < kWindow; ++dx) {
          const double wgt = g[dy] * g[dx];
          const std::size_t p = static_cast<std::size_t>(y0 + dy) * w + (x0 + dx);
          ma += wgt * ya[p];
          mb += wgt * yb[p];
          saa += wgt * ya[p] * ya[p];
          sbb += wgt * yb[p] * yb[p];
          sab += wgt * ya[p] * yb[p];
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace dnmp::io
