#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "dnmp/autodiff/ops.hpp"
#include "dnmp/render.hpp"
#include "dnmp/scene.hpp"
#include "scene_fixture.hpp"
#include "test_util.hpp"

using namespace dnmp;
using ad::Tensor;

namespace {

PointCloud cloud_of(std::vector<double> xyz) {
  const std::size_t n = xyz.size() / 3;
  return {Tensor({n, 3}, std::move(xyz))};
}

std::set<VoxelKey> as_set(const VoxelGrid& g) { return {g.occupied.begin(), g.occupied.end()}; }

RenderOutput render(const SceneModel& s) { return render_image(s, test::tiny_camera()); }

}  // namespace

TEST(Voxelize, FloorDivision) {
  const auto g = voxelize(cloud_of({0.1, 0.1, 0.1, 0.9, 0.1, 0.1}), 0.5);
  EXPECT_EQ(g.occupied, (std::vector<VoxelKey>{{0, 0, 0}, {1, 0, 0}}));
  EXPECT_EQ(voxelize(cloud_of({0.5, 0.0, -0.2}), 0.5).occupied, (std::vector<VoxelKey>{{1, 0, -1}}));
}

TEST(Voxelize, SortedUniqueAndMatchesOracle) {
  const auto pts = test::random_values(3 * 500, 3, -3, 3);
  const auto g = voxelize(cloud_of(pts), 0.7);
  std::set<VoxelKey> oracle;
  for (std::size_t i = 0; i < 500; ++i) {
    oracle.insert({static_cast<std::int64_t>(std::floor(pts[3 * i] / 0.7)),
                   static_cast<std::int64_t>(std::floor(pts[3 * i + 1] / 0.7)),
                   static_cast<std::int64_t>(std::floor(pts[3 * i + 2] / 0.7))});
  }
  EXPECT_EQ(g.occupied, std::vector<VoxelKey>(oracle.begin(), oracle.end()));
}

TEST(Voxelize, ScaleInvariant) {
  const auto pts = test::random_values(3 * 300, 4, -5, 5);
  const auto base = as_set(voxelize(cloud_of(pts), 0.5));
  for (double lambda : {0.25, 2.0, 8.0, 3.7}) {
    auto scaled = pts;
    for (auto& v : scaled) v *= lambda;
    EXPECT_EQ(as_set(voxelize(cloud_of(scaled), 0.5 * lambda)), base) << lambda;
  }
}

TEST(Voxelize, RejectsBadInput) {
  EXPECT_THROW(voxelize(cloud_of({0, 0, 0}), 0.0), std::invalid_argument);
  EXPECT_THROW(voxelize(cloud_of({0, NAN, 0}), 0.5), std::invalid_argument);
  EXPECT_TRUE(voxelize(PointCloud{}, 0.5).occupied.empty());
}

TEST(InitScene, SinglePointGivesOnePrimitivePerLevel) {
  const auto s = test::tiny_scene(ShapeMode::kLatent, cloud_of({0.3, 0.3, 0.3}));
  ASSERT_EQ(s.levels.size(), 2u);
  for (const auto& lv : s.levels) {
    ASSERT_EQ(lv.primitive_count(), 1u);
    const double h = lv.voxel_size / 2;
    EXPECT_EQ(lv.records[0].center, Vec3(h, h, h));
    EXPECT_DOUBLE_EQ(lv.records[0].radius, std::sqrt(3.0) / 2 * lv.voxel_size);
  }
}

TEST(InitScene, FinerLevelHasAtLeastAsManyPrimitives) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = test::tiny_scene(ShapeMode::kLatent, cloud_of(test::random_values(3 * 200, seed, -2, 2)));
    EXPECT_GE(s.levels[0].primitive_count(), s.levels[1].primitive_count());
  }
}

TEST(InitScene, FreshPrimitivesAreScaledTemplates) {
  const auto s = test::tiny_scene();
  const auto& v = s.tmpl.mesh.vertices;
  const std::size_t n = s.tmpl.mesh.vertex_count();
  for (std::size_t li = 0; li < s.levels.size(); ++li) {
    const auto w = s.world_vertices(li);
    const auto& lv = s.levels[li];
    EXPECT_LE(max_unit_norm_error(lv.latents), 1e-12);
    for (std::size_t p = 0; p < lv.primitive_count(); ++p) {
      const auto& r = lv.records[p];
      for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(w.at(p * n + i, k), r.center[k] + r.radius * v.at(i, k), 1e-12);
      }
    }
  }
}

TEST(InitScene, DirectModeMatchesLatentModeAtStart) {
  const auto a = test::tiny_scene(ShapeMode::kLatent);
  const auto b = test::tiny_scene(ShapeMode::kDirect);
  for (std::size_t li = 0; li < 2; ++li) {
    EXPECT_EQ(test::values(a.world_vertices(li)), test::values(b.world_vertices(li)));
  }
  EXPECT_EQ(render(a).rgb, render(b).rgb);
}

TEST(InitScene, EmptyCloudRejected) { EXPECT_THROW(test::tiny_scene(ShapeMode::kLatent, PointCloud{}), std::invalid_argument); }

TEST(FeatureInit, TwentyOneDimsAndOriginPattern) {
  SceneBounds b{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  const Tensor w({2, 3}, {0, 0, 0, 0, 0, 0});
  const auto f = init_vertex_features(w, b, 3, 21);
  ASSERT_EQ(f.shape(), (ad::Shape{2, 21}));
  const std::vector<double> pattern{0, 0, 1, 0, 1, 0, 1};
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t i = 0; i < 21; ++i) EXPECT_EQ(f.at(r, i), pattern[i % 7]);
  }
  EXPECT_THROW(init_vertex_features(w, b, 3, 20), std::invalid_argument);
}

TEST(FeatureInit, CoincidentVerticesShareFeatures) {
  SceneBounds b{Vec3(0, 0, 0), Vec3(4, 2, 1)};
  const Tensor w({3, 3}, {1.5, 0.2, 0.7, 3.0, 1.0, 0.0, 1.5, 0.2, 0.7});
  const auto f = init_vertex_features(w, b, 3, 21);
  for (std::size_t i = 0; i < 21; ++i) EXPECT_EQ(f.at(0, i), f.at(2, i));
}

TEST(GeometryCache, RebuildsAfterLatentChange) {
  auto s = test::tiny_scene();
  const auto g1 = s.geometry(0);
  EXPECT_EQ(g1, s.geometry(0));
  s.levels[0].latents.mutable_data()[0] += 0.0;
  EXPECT_NE(g1, s.geometry(0));
}

TEST(Clone, SharesNoStorage) {
  const auto s = test::tiny_scene();
  auto c = s.clone();
  c.levels[0].features.mutable_data()[0] = 123.0;
  c.radiance.trunk.layers[0].weight.mutable_data()[0] = 7.0;
  EXPECT_NE(s.levels[0].features[0], 123.0);
  EXPECT_NE(s.radiance.trunk.layers[0].weight[0], 7.0);
  EXPECT_NE(c.background.id(), s.background.id());
}

TEST(Remove, EverythingLeavesPureBackground) {
  auto s = test::tiny_scene();
  const auto total = s.total_primitives();
  EXPECT_EQ(remove_primitives(s, Region::everything()), total);
  EXPECT_EQ(s.total_primitives(), 0u);
  const auto r = render(s);
  for (std::size_t p = 0; p < r.rgb.size() / 3; ++p) {
    for (int k = 0; k < 3; ++k) EXPECT_EQ(r.rgb[3 * p + k], s.background[k]);
    EXPECT_EQ(r.depth[p], kNoDepth);
  }
}

TEST(Remove, EmptyRegionIsNoOp) {
  auto s = test::tiny_scene();
  const auto before = render(s);
  EXPECT_EQ(remove_primitives(s, {Vec3(50, 50, 50), Vec3(51, 51, 51)}), 0u);
  EXPECT_EQ(render(s).rgb, before.rgb);
}

TEST(Remove, OneVoxelCountsPerLevel) {
  auto s = test::tiny_scene();
  // The box around the level-0 voxel (0, 0, 6) also holds the centre of level-1 voxel (0, 0, 3).
  const Region box{Vec3(0.1, 0.1, 3.05), Vec3(0.6, 0.6, 3.55)};
  std::size_t expected = 0;
  std::vector<std::size_t> before;
  for (const auto& lv : s.levels) {
    before.push_back(lv.primitive_count());
    for (const auto& r : lv.records) expected += box.contains(r.center) ? 1 : 0;
  }
  ASSERT_EQ(expected, 2u);
  EXPECT_EQ(remove_primitives(s, box), expected);
  EXPECT_EQ(s.levels[0].primitive_count(), before[0] - 1);
  EXPECT_EQ(s.levels[1].primitive_count(), before[1] - 1);
  EXPECT_EQ(s.levels[1].features.rows(), s.levels[1].primitive_count() * s.tmpl.mesh.vertex_count());
}

TEST(Insert, RemoveThenReinsertIsBitIdentical) {
  auto s = test::tiny_scene();
  const auto donor = s.clone();
  const auto before = render(s);
  const Region box{Vec3(-0.6, -0.6, 2.0), Vec3(0.4, 0.3, 4.0)};
  const auto removed = remove_primitives(s, box);
  ASSERT_GT(removed, 0u);
  EXPECT_NE(render(s).rgb, before.rgb);
  EXPECT_EQ(insert_primitives(s, donor, box, Vec3::Zero()), removed);
  const auto after = render(s);
  EXPECT_EQ(after.rgb, before.rgb);
  EXPECT_EQ(after.depth, before.depth);
}

TEST(Insert, InsertThenRemoveShiftedCopyIsBitIdentical) {
  auto s = test::tiny_scene();
  const auto donor = s.clone();
  const auto before = render(s);
  const Region box{Vec3(-0.6, -0.6, 2.0), Vec3(0.4, 0.3, 4.0)};
  const Vec3 offset(0.0, 0.0, -1.5);
  const auto inserted = insert_primitives(s, donor, box, offset);
  ASSERT_GT(inserted, 0u);
  EXPECT_NE(render(s).rgb, before.rgb);
  EXPECT_EQ(remove_primitives(s, {box.lo + offset, box.hi + offset}), inserted);
  EXPECT_EQ(render(s).rgb, before.rgb);
}

TEST(Insert, EmptyRegionIsNoOp) {
  auto s = test::tiny_scene();
  const auto before = render(s);
  EXPECT_EQ(insert_primitives(s, s.clone(), {Vec3(50, 50, 50), Vec3(51, 51, 51)}, Vec3::Zero()), 0u);
  EXPECT_EQ(render(s).rgb, before.rgb);
}

TEST(Insert, ShiftedCopyAppearsWhereRaysHitIt) {
  // A small patch around the origin; its copy lands one metre to the right.
  auto s = test::tiny_scene(ShapeMode::kLatent, test::plane_cloud(3.1, 0.2, 5));
  const auto donor = s.clone();
  const Camera cam = test::tiny_camera(48, 36);
  const auto before = render_image(s, cam);
  insert_primitives(s, donor, Region::everything(), Vec3(1.0, 0.0, 0.0));
  const auto after = render_image(s, cam);
  const Bvh& bvh = s.bvh(0);
  std::size_t changed = 0, checked = 0;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const auto ray = cam.pixel_ray(x, y);
      const auto hits = bvh.intersect(ray, 1);
      const auto p = static_cast<std::size_t>(y * cam.width + x);
      if (hits.empty() || s.levels[0].records[hits[0].primitive].center.x() < 0.9) continue;
      ++checked;
      if (before.depth[p] == kNoDepth) {
        EXPECT_NE(after.depth[p], kNoDepth);
        ++changed;
      }
    }
  }
  EXPECT_GT(checked, 0u);
  EXPECT_GT(changed, 0u);
}

TEST(EditFeatures, IdentityAndOutsideAreNoOps) {
  auto s = test::tiny_scene();
  const auto before = render(s);
  EXPECT_GT(edit_features(s, Region::everything(), FeatureTransform::identity(s.feature_dim())), 0u);
  EXPECT_EQ(render(s).rgb, before.rgb);
  EXPECT_EQ(edit_features(s, {Vec3(50, 50, 50), Vec3(51, 51, 51)}, FeatureTransform::zero(s.feature_dim())), 0u);
  EXPECT_EQ(render(s).rgb, before.rgb);
}

TEST(EditFeatures, ZeroingChangesAffectedPixels) {
  auto s = test::tiny_scene();
  const auto before = render(s);
  const Region box{Vec3(-0.5, -0.5, 2.0), Vec3(0.5, 0.5, 4.0)};
  EXPECT_GT(edit_features(s, box, FeatureTransform::zero(s.feature_dim())), 0u);
  const auto after = render(s);
  EXPECT_NE(after.rgb, before.rgb);
  // Geometry is untouched.
  EXPECT_EQ(after.depth, before.depth);
}

TEST(EditFeatures, RejectsWrongDimension) {
  auto s = test::tiny_scene();
  EXPECT_THROW(edit_features(s, Region::everything(), FeatureTransform::identity(3)), std::invalid_argument);
}

TEST(SphereCode, ZeroDecoderKeepsFirstAxis) {
  const auto tmpl = build_icosphere(1);
  const auto dec = DecoderParams::create(tmpl.mesh.vertex_count(), 1);
  const auto z = find_sphere_code(dec);
  EXPECT_EQ(z[0], 1.0);
  for (std::size_t i = 1; i < kLatentDim; ++i) EXPECT_EQ(z[i], 0.0);
}

TEST(SphereCode, ReducesDecodedOffsets) {
  const auto tmpl = build_icosphere(1);
  auto dec = DecoderParams::create(tmpl.mesh.vertex_count(), 1);
  auto w = dec.mlp.layers.back().weight.mutable_data();
  const auto r = test::random_values(w.size(), 2, -0.05, 0.05);
  std::copy(r.begin(), r.end(), w.begin());
  Tensor e1 = Tensor::zeros({1, kLatentDim});
  e1.mutable_data()[0] = 1.0;
  const auto z = find_sphere_code(dec);
  EXPECT_LE(max_unit_norm_error(z), 1e-9);
  const double at_e1 = ad::sum(ad::square(decode_offsets(e1, dec))).item();
  const double at_z = ad::sum(ad::square(decode_offsets(z, dec))).item();
  EXPECT_LT(at_z, at_e1);
}
