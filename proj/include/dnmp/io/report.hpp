#pragma once

#include <filesystem>
#include <vector>

#include "dnmp/train.hpp"

namespace dnmp::io {

// iteration,stage,loss,psnr  (psnr empty when not measured)
void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

}  // namespace dnmp::io
