#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"

namespace dnmp {

using Face = std::array<std::uint32_t, 3>;
using Edge = std::array<std::uint32_t, 2>;

// Fixed connectivity shared by every mesh built on it.
struct MeshTopology {
  std::size_t vertex_count = 0;
  std::vector<Face> faces;
  // Unique undirected edges, (lo, hi), sorted.
  std::vector<Edge> edges;
  // Face pairs that share an edge.
  std::vector<Edge> adjacent_faces;
  // CSR vertex -> neighbour list.
  std::vector<std::uint32_t> neighbor_offsets;
  std::vector<std::uint32_t> neighbors;
  // Every edge is shared by exactly two faces.
  bool closed_manifold = false;

  std::size_t degree(std::size_t v) const { return neighbor_offsets[v + 1] - neighbor_offsets[v]; }
};

// Throws if an index is out of range or a face repeats a vertex.
std::shared_ptr<const MeshTopology> build_topology(std::size_t vertex_count, std::vector<Face> faces);

struct TriangleMesh {
  ad::Tensor vertices;  // N x 3
  std::shared_ptr<const MeshTopology> topology;

  std::size_t vertex_count() const { return topology->vertex_count; }
  std::size_t face_count() const { return topology->faces.size(); }
  const std::vector<Face>& faces() const { return topology->faces; }
};

TriangleMesh make_mesh(std::vector<double> vertices_xyz, std::vector<Face> faces);

// Unit-radius icosphere. Level 0 is the icosahedron; each level splits every
// face in four and projects the new vertices onto the sphere.
struct IcosphereTemplate {
  int level = 0;
  TriangleMesh mesh;
};

IcosphereTemplate build_icosphere(int level);

inline constexpr double kDegenerateArea = 1e-12;

// Face areas computed from the current vertex values (not differentiable).
std::vector<double> face_areas(const TriangleMesh& mesh);

// Area-weighted unit vertex normals. Faces with area <= kDegenerateArea are
// skipped with a warning.
ad::Tensor vertex_normals(const TriangleMesh& mesh);

// k points drawn area-weighted over faces and uniformly in barycentric
// coordinates. The face choice and barycentric weights depend only on the
// seed and the current areas; the points are differentiable in the vertices.
ad::Tensor sample_surface(const TriangleMesh& mesh, std::size_t k, std::uint64_t seed);

// Symmetric chamfer distance with squared distances and mean reduction:
// mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2. Nearest-neighbour
// assignment is frozen per call.
ad::Tensor chamfer_distance(const ad::Tensor& a, const ad::Tensor& b);

// v_i - mean(neighbours(v_i)), N x 3.
ad::Tensor laplacian_offsets(const TriangleMesh& mesh);

struct RegularizerWeights {
  double normal = 0.1;
  double laplacian = 0.1;
};

// w_normal * mean over adjacent face pairs of (1 - cos(n_f, n_g))
//   + w_lap * mean over vertices of |laplacian offset|^2
ad::Tensor regularization_loss(const TriangleMesh& mesh, RegularizerWeights weights);

}  // namespace dnmp
