#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"
#include "dnmp/raster.hpp"
#include "dnmp/scene.hpp"

namespace dnmp {

struct DepthView {
  Camera camera;
  std::vector<double> depth;         // H W, meters
  std::vector<std::uint8_t> valid;   // H W

  void validate() const;
};

struct ImageView {
  Camera camera;
  std::vector<double> rgb;  // H W 3 in [0, 1]
};

struct LossRecord {
  std::size_t iteration = 0;
  std::string stage;
  double loss = 0.0;
  double psnr = std::numeric_limits<double>::quiet_NaN();
};

// Mean |rendered - target| over pixels that are valid and covered. Returns
// an undefined tensor (and warns) when no pixel qualifies.
ad::Tensor geometry_loss(const DepthRender& rendered, const DepthView& view);

struct ShapeFitConfig {
  std::size_t iterations = 500;
  double lr = 1e-3;
  std::size_t log_every = 10;
};

struct FitResult {
  std::vector<LossRecord> history;
  bool aborted = false;
};

// Fits each level independently: Adam over that level's latents (offsets in
// direct mode) minimising the depth loss summed over views. Latents are
// renormalised after every step. A non-finite loss restores the last good
// parameters and stops.
FitResult fit_shapes(SceneModel& scene, const std::vector<DepthView>& views, const ShapeFitConfig& cfg);

// Mean |D_hat - D| over covered and valid pixels of all views, for one level.
double depth_error(const SceneModel& scene, std::size_t level, const std::vector<DepthView>& views);

// Sum of squared RGB errors; predicted R x 3, target R x 3 values.
ad::Tensor radiance_loss(const ad::Tensor& predicted, const std::vector<double>& target);

struct RadianceTrainConfig {
  std::size_t iterations = 2000;
  double lr = 5e-4;
  std::size_t batch = 1024;
  std::uint64_t seed = 1;
  std::size_t log_every = 100;
  // PSNR on the held-out views every this many iterations; 0 disables.
  std::size_t eval_every = 0;
};

// Sets the background to the mean colour of training rays that miss every
// level; leaves it unchanged when every ray hits something. Returns the
// number of such rays.
std::size_t estimate_background(SceneModel& scene, const std::vector<ImageView>& views);

// Adam over vertex features, radiance parameters and background on random
// ray batches drawn from the training views. Geometry is frozen: hits are
// traced once up front.
FitResult train_radiance(SceneModel& scene, const std::vector<ImageView>& train, const std::vector<ImageView>& held_out,
                         const RadianceTrainConfig& cfg);

}  // namespace dnmp
