#include "dnmp/io/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dnmp::io {

namespace {

std::string number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "iteration,stage,loss,psnr\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << r.stage << ',' << number(r.loss) << ',';
    if (!std::isnan(r.psnr)) out << number(r.psnr);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace dnmp::io
