#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dnmp/raster.hpp"
#include "dnmp/scene.hpp"
#include "dnmp/train.hpp"

namespace dnmp::io {

// A scene directory as written by write_synthetic_scene.
struct Dataset {
  PointCloud cloud;
  std::vector<Camera> cameras;
  std::vector<ImageView> images;
  std::vector<DepthView> depths;  // from the requested depth set
};

Dataset load_dataset(const std::filesystem::path& dir, const std::string& depth_set = "gt_depth");

std::string view_name(std::size_t index);

// Splits views into (train, held out) by index.
template <typename T>
void split_views(const std::vector<T>& all, const std::vector<std::size_t>& held_out, std::vector<T>& train,
                 std::vector<T>& test) {
  for (std::size_t i = 0; i < all.size(); ++i) {
    bool held = false;
    for (auto h : held_out) held = held || h == i;
    (held ? test : train).push_back(all[i]);
  }
}

}  // namespace dnmp::io
