#include "dnmp/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "dnmp/autodiff/ops.hpp"
#include "dnmp/log.hpp"

namespace dnmp {

std::shared_ptr<const MeshTopology> build_topology(std::size_t vertex_count, std::vector<Face> faces) {
  auto topo = std::make_shared<MeshTopology>();
  topo->vertex_count = vertex_count;
  std::map<Edge, std::vector<std::uint32_t>> edge_faces;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& face = faces[f];
    for (auto v : face) {
      if (v >= vertex_count) {
        throw std::invalid_argument("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                                    " of " + std::to_string(vertex_count));
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw std::invalid_argument("face " + std::to_string(f) + " is degenerate");
    }
    for (int k = 0; k < 3; ++k) {
      const auto a = face[k], b = face[(k + 1) % 3];
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(static_cast<std::uint32_t>(f));
    }
  }
  topo->faces = std::move(faces);

  std::vector<std::vector<std::uint32_t>> nbrs(vertex_count);
  topo->closed_manifold = !edge_faces.empty();
  for (const auto& [edge, fs] : edge_faces) {
    topo->edges.push_back(edge);
    nbrs[edge[0]].push_back(edge[1]);
    nbrs[edge[1]].push_back(edge[0]);
    if (fs.size() != 2) topo->closed_manifold = false;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      for (std::size_t j = i + 1; j < fs.size(); ++j) topo->adjacent_faces.push_back({fs[i], fs[j]});
    }
  }
  topo->neighbor_offsets.assign(vertex_count + 1, 0);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    std::sort(nbrs[v].begin(), nbrs[v].end());
    topo->neighbor_offsets[v + 1] = topo->neighbor_offsets[v] + static_cast<std::uint32_t>(nbrs[v].size());
    topo->neighbors.insert(topo->neighbors.end(), nbrs[v].begin(), nbrs[v].end());
  }
  return topo;
}

TriangleMesh make_mesh(std::vector<double> vertices_xyz, std::vector<Face> faces) {
  if (vertices_xyz.size() % 3 != 0) throw std::invalid_argument("vertex buffer is not N x 3");
  const std::size_t n = vertices_xyz.size() / 3;
  TriangleMesh mesh;
  mesh.topology = build_topology(n, std::move(faces));
  mesh.vertices = ad::Tensor({n, 3}, std::move(vertices_xyz));
  return mesh;
}

IcosphereTemplate build_icosphere(int level) {
  if (level < 0 || level > 2) {
    throw std::invalid_argument("icosphere level must be 0, 1 or 2 (got " + std::to_string(level) + ")");
  }
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<std::array<double, 3>> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
  };
  std::vector<Face> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
  };
  auto project = [](std::array<double, 3> p) {
    const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    return std::array<double, 3>{p[0] / n, p[1] / n, p[2] / n};
  };
  for (auto& v : verts) v = project(v);

  for (int l = 0; l < level; ++l) {
    std::map<Edge, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const Edge key{std::min(a, b), std::max(a, b)};
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      const auto& pa = verts[a];
      const auto& pb = verts[b];
      verts.push_back(project({(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2, (pa[2] + pb[2]) / 2}));
      const auto idx = static_cast<std::uint32_t>(verts.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const auto a = mid(f[0], f[1]);
      const auto b = mid(f[1], f[2]);
      const auto c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }

  std::vector<double> flat;
  flat.reserve(verts.size() * 3);
  for (const auto& v : verts) flat.insert(flat.end(), v.begin(), v.end());
  return {level, make_mesh(std::move(flat), std::move(faces))};
}

std::vector<double> face_areas(const TriangleMesh& mesh) {
  const auto& v = mesh.vertices.data();
  std::vector<double> areas;
  areas.reserve(mesh.face_count());
  for (const auto& f : mesh.faces()) {
    const double* p0 = &v[f[0] * 3];
    const double* p1 = &v[f[1] * 3];
    const double* p2 = &v[f[2] * 3];
    const double e1[3] = {p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]};
    const double e2[3] = {p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]};
    const double c[3] = {e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                         e1[0] * e2[1] - e1[1] * e2[0]};
    areas.push_back(0.5 * std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]));
  }
  return areas;
}

namespace {

struct FaceCorners {
  std::vector<std::size_t> i0, i1, i2;
  std::vector<std::size_t> kept;  // face ids
};

FaceCorners non_degenerate_faces(const TriangleMesh& mesh, const char* who) {
  const auto areas = face_areas(mesh);
  FaceCorners fc;
  std::size_t skipped = 0;
  for (std::size_t f = 0; f < areas.size(); ++f) {
    if (!(areas[f] > kDegenerateArea)) {
      ++skipped;
      continue;
    }
    const auto& face = mesh.faces()[f];
    fc.i0.push_back(face[0]);
    fc.i1.push_back(face[1]);
    fc.i2.push_back(face[2]);
    fc.kept.push_back(f);
  }
  if (skipped) {
    log::warn(std::string(who) + ": skipped " + std::to_string(skipped) + " zero-area face(s)");
  }
  return fc;
}

ad::Tensor face_normal_vectors(const TriangleMesh& mesh, const FaceCorners& fc) {
  const auto p0 = ad::gather_rows(mesh.vertices, fc.i0);
  const auto p1 = ad::gather_rows(mesh.vertices, fc.i1);
  const auto p2 = ad::gather_rows(mesh.vertices, fc.i2);
  return ad::cross_rows(ad::sub(p1, p0), ad::sub(p2, p0));
}

}  // namespace

ad::Tensor vertex_normals(const TriangleMesh& mesh) {
  const auto fc = non_degenerate_faces(mesh, "vertex_normals");
  const std::size_t n = mesh.vertex_count();
  if (fc.kept.empty()) return ad::Tensor::zeros({n, 3});
  // |cross| is twice the face area, so summing raw cross products is the
  // area-weighted average up to normalisation.
  const auto fn = face_normal_vectors(mesh, fc);
  std::vector<std::size_t> rows;
  rows.reserve(fc.kept.size() * 3);
  rows.insert(rows.end(), fc.i0.begin(), fc.i0.end());
  rows.insert(rows.end(), fc.i1.begin(), fc.i1.end());
  rows.insert(rows.end(), fc.i2.begin(), fc.i2.end());
  const ad::Tensor stacked[] = {fn, fn, fn};
  const auto accum = ad::scatter_add_rows(ad::concat(stacked, 0), rows, n);
  return ad::normalize_rows(accum);
}

ad::Tensor sample_surface(const TriangleMesh& mesh, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("sample_surface: k must be >= 1");
  const auto areas = face_areas(mesh);
  std::vector<double> cumulative(areas.size());
  double total = 0.0;
  for (std::size_t f = 0; f < areas.size(); ++f) {
    total += areas[f];
    cumulative[f] = total;
  }
  if (!(total > kDegenerateArea)) throw std::invalid_argument("sample_surface: mesh has zero area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> i0(k), i1(k), i2(k);
  std::vector<double> b0(k), b1(k), b2(k);
  for (std::size_t s = 0; s < k; ++s) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    std::size_t f = static_cast<std::size_t>(it - cumulative.begin());
    if (f >= areas.size()) f = areas.size() - 1;
    while (areas[f] <= 0.0 && f > 0) --f;
    double r1 = unit(rng);
    double r2 = unit(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const auto& face = mesh.faces()[f];
    i0[s] = face[0];
    i1[s] = face[1];
    i2[s] = face[2];
    b0[s] = 1.0 - r1 - r2;
    b1[s] = r1;
    b2[s] = r2;
  }
  using ad::add;
  using ad::mul;
  const auto& V = mesh.vertices;
  return add(add(mul(ad::gather_rows(V, i0), ad::Tensor::column(std::move(b0))),
                 mul(ad::gather_rows(V, i1), ad::Tensor::column(std::move(b1)))),
             mul(ad::gather_rows(V, i2), ad::Tensor::column(std::move(b2))));
}

namespace {

std::vector<std::size_t> nearest_rows(const ad::Tensor& from, const ad::Tensor& to) {
  const auto& a = from.data();
  const auto& b = to.data();
  const std::size_t na = from.rows(), nb = to.rows();
  std::vector<std::size_t> nn(na);
  for (std::size_t i = 0; i < na; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    const double x = a[i * 3], y = a[i * 3 + 1], z = a[i * 3 + 2];
    for (std::size_t j = 0; j < nb; ++j) {
      const double dx = x - b[j * 3], dy = y - b[j * 3 + 1], dz = z - b[j * 3 + 2];
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    nn[i] = best_j;
  }
  return nn;
}

}  // namespace

ad::Tensor chamfer_distance(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != 3 || b.cols() != 3) {
    throw std::invalid_argument("chamfer_distance: point sets must be k x 3");
  }
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("chamfer_distance: empty point set");
  const auto nn_ab = nearest_rows(a, b);
  const auto nn_ba = nearest_rows(b, a);
  const auto da = ad::sub(a, ad::gather_rows(b, nn_ab));
  const auto db = ad::sub(b, ad::gather_rows(a, nn_ba));
  return ad::add(ad::mean(ad::dot_rows(da, da)), ad::mean(ad::dot_rows(db, db)));
}

ad::Tensor laplacian_offsets(const TriangleMesh& mesh) {
  const auto& topo = *mesh.topology;
  const std::size_t n = topo.vertex_count;
  std::vector<std::size_t> dst, src;
  dst.reserve(topo.neighbors.size());
  src.reserve(topo.neighbors.size());
  std::vector<double> inv_degree(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const auto deg = topo.degree(v);
    if (deg) inv_degree[v] = 1.0 / static_cast<double>(deg);
    for (auto o = topo.neighbor_offsets[v]; o < topo.neighbor_offsets[v + 1]; ++o) {
      dst.push_back(v);
      src.push_back(topo.neighbors[o]);
    }
  }
  const auto neighbor_sum = ad::scatter_add_rows(ad::gather_rows(mesh.vertices, src), dst, n);
  const auto neighbor_mean = ad::mul(neighbor_sum, ad::Tensor::column(std::move(inv_degree)));
  return ad::sub(mesh.vertices, neighbor_mean);
}

ad::Tensor regularization_loss(const TriangleMesh& mesh, RegularizerWeights weights) {
  const auto fc = non_degenerate_faces(mesh, "regularization_loss");
  ad::Tensor normal_term = ad::Tensor::scalar(0.0);
  if (!fc.kept.empty()) {
    std::vector<std::size_t> slot(mesh.face_count(), std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < fc.kept.size(); ++i) slot[fc.kept[i]] = i;
    std::vector<std::size_t> fa, fb;
    for (const auto& pair : mesh.topology->adjacent_faces) {
      const auto sa = slot[pair[0]], sb = slot[pair[1]];
      if (sa == std::numeric_limits<std::size_t>::max() || sb == std::numeric_limits<std::size_t>::max()) continue;
      fa.push_back(sa);
      fb.push_back(sb);
    }
    if (!fa.empty()) {
      const auto unit = ad::normalize_rows(face_normal_vectors(mesh, fc));
      const auto cosine = ad::dot_rows(ad::gather_rows(unit, fa), ad::gather_rows(unit, fb));
      normal_term = ad::add_scalar(ad::neg(ad::mean(cosine)), 1.0);
    }
  }
  const auto lap = laplacian_offsets(mesh);
  const auto lap_term = ad::mean(ad::dot_rows(lap, lap));
  return ad::add(ad::scale(normal_term, weights.normal), ad::scale(lap_term, weights.laplacian));
}

}  // namespace dnmp
