#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"
#include "dnmp/mesh.hpp"
#include "dnmp/nn.hpp"

namespace dnmp {

inline constexpr std::size_t kLatentDim = 8;
inline constexpr double kUnitNormTolerance = 1e-9;

// Permutation-invariant point encoder: shared per-point MLP 3 -> 64 -> 128,
// channel-wise max over points, linear head 128 -> 8, unit normalisation.
struct EncoderParams {
  Mlp point_mlp;
  Mlp head;

  static EncoderParams create(std::uint64_t seed);
  std::vector<ad::Tensor> parameters() const;
};

// Decoder 8 -> 128 -> 256 -> 3N predicting per-vertex offsets from the unit
// sphere template. The last layer starts at zero so untrained shapes are
// exactly the template.
struct DecoderParams {
  Mlp mlp;
  std::size_t vertex_count = 0;

  static DecoderParams create(std::size_t vertex_count, std::uint64_t seed);
  std::vector<ad::Tensor> parameters() const;
  DecoderParams clone() const;
};

// Projects every row of z onto the unit sphere, in place. Idempotent up to
// rounding.
void renormalize_rows(ad::Tensor& z);
double max_unit_norm_error(const ad::Tensor& z);

// Unchecked batched decoder: B x 8 codes -> B x 3N offsets.
ad::Tensor decode_offsets(const ad::Tensor& z, const DecoderParams& dec);

// Single unit-norm code -> mesh on the template's connectivity. Rejects codes
// with | |z| - 1 | > kUnitNormTolerance.
TriangleMesh decode_latent(const ad::Tensor& z, const DecoderParams& dec, const IcosphereTemplate& tmpl);

// k x 3 points -> 1 x 8 unit code. Differentiable in the encoder weights.
ad::Tensor encode_patch(const ad::Tensor& points, const EncoderParams& enc);

enum class PatchFamily { kPlane = 0, kDihedral, kCylinder, kSphereCap, kSaddle };
inline constexpr std::size_t kPatchFamilyCount = 5;
std::string_view family_name(PatchFamily f);

struct PatchEntry {
  PatchFamily family;
  std::uint64_t seed;
  TriangleMesh mesh;
};

struct PatchDatabase {
  std::vector<PatchEntry> entries;
};

// Procedural local-structure meshes inside the unit ball. Each entry picks a
// family uniformly, samples its parameters, a random rotation and an offset.
PatchDatabase generate_patch_database(std::size_t n, std::uint64_t seed);
// Same as above restricted to one family.
PatchDatabase generate_patch_database(std::size_t n, std::uint64_t seed, PatchFamily only);
TriangleMesh generate_patch(PatchFamily family, std::uint64_t seed);

struct AutoencoderConfig {
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t batch_size = 4;
  std::size_t samples = 256;
  RegularizerWeights regularizer{};
  std::uint64_t seed = 7;
};

struct AutoencoderHistory {
  // Entry 0 evaluates the untrained model; entry e >= 1 is the mean training
  // loss over epoch e.
  std::vector<double> loss;
  std::vector<double> chamfer;
  bool diverged = false;
};

// Seeds of the surface samples for (epoch, entry). which = 0 draws the
// target patch points, which = 1 the decoded-mesh points.
std::uint64_t autoencoder_sample_seed(std::uint64_t base, std::size_t epoch, std::size_t entry, int which);

struct AutoencoderEval {
  double loss = 0.0;
  double chamfer = 0.0;
};

// Mean L_ae and mean chamfer over the database with the epoch-0 seeds.
AutoencoderEval evaluate_autoencoder(const PatchDatabase& db, const EncoderParams& enc, const DecoderParams& dec,
                                     const IcosphereTemplate& tmpl, const AutoencoderConfig& cfg);

// Minimises chamfer(decoded, patch) + regularizer(decoded) with Adam over
// encoder and decoder. Batch entries run on separate tapes; their gradients
// are reduced in entry order. On a non-finite loss the parameters are
// restored to the start of the failing epoch and training stops.
AutoencoderHistory train_autoencoder(const PatchDatabase& db, EncoderParams& enc, DecoderParams& dec,
                                     const IcosphereTemplate& tmpl, const AutoencoderConfig& cfg);

}  // namespace dnmp
