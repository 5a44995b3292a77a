#pragma once

#include "ssp4/poly.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ssp4 {

/// Oriented face of a triangulation. The global unit normal points out of
/// cell_plus; for interior faces cell_plus is the lower-indexed incident cell,
/// for boundary faces the only one (so the normal points out of the domain).
struct Face {
  int v0 = -1, v1 = -1;
  Vec2 normal = Vec2::Zero();
  double length = 0.0;
  bool boundary = true;
  int cell_plus = -1;
  int cell_minus = -1;
};

struct CellFaceRef {
  int face = -1;
  double sign = 0.0;  // n_F . n_{dT}, +1 or -1
};

struct JumpContext {
  int n_cells = 0;
  std::array<int, 2> cells{-1, -1};
  std::array<double, 2> signs{0.0, 0.0};
  Vec2 normal = Vec2::Zero();
};

/// Conforming 2D triangulation with oriented faces. Immutable once built.
class SimplicialMesh {
public:
  SimplicialMesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> cells)
      : vertices_(std::move(vertices)), cells_(std::move(cells)) {
    build_topology();
  }

  /// n x n grid of squares on (0,1)^2, each split by the diagonal running from
  /// the bottom-left to the top-right corner of the square.
  static SimplicialMesh uniform_unit_square(int n) {
    if (n < 1) throw std::invalid_argument("uniform_unit_square: n must be >= 1");
    std::vector<Vec2> verts;
    verts.reserve((n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i)
        verts.emplace_back(static_cast<double>(i) / n, static_cast<double>(j) / n);
    auto vid = [n](int i, int j) { return j * (n + 1) + i; };
    std::vector<std::array<int, 3>> cells;
    cells.reserve(2 * n * n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        int v00 = vid(i, j), v10 = vid(i + 1, j), v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
        cells.push_back({v00, v10, v11});
        cells.push_back({v00, v11, v01});
      }
    return SimplicialMesh(std::move(verts), std::move(cells));
  }

  int n_vertices() const { return static_cast<int>(vertices_.size()); }
  int n_cells() const { return static_cast<int>(cells_.size()); }
  int n_faces() const { return static_cast<int>(faces_.size()); }
  int n_boundary_faces() const { return n_boundary_; }
  int n_interior_faces() const { return n_faces() - n_boundary_; }

  const Vec2& vertex(int v) const { return vertices_[v]; }
  const std::array<int, 3>& cell(int t) const { return cells_[t]; }
  const Face& face(int f) const { return faces_[f]; }
  const std::array<CellFaceRef, 3>& cell_faces(int t) const { return cell_faces_[t]; }

  double cell_diameter(int t) const { return cell_diameters_[t]; }
  double face_length(int f) const { return faces_[f].length; }
  double max_diameter() const { return h_max_; }

  double cell_area(int t) const { return cell_areas_[t]; }
  Vec2 cell_centroid(int t) const {
    const auto& c = cells_[t];
    return (vertices_[c[0]] + vertices_[c[1]] + vertices_[c[2]]) / 3.0;
  }

  std::array<Vec2, 3> cell_vertices(int t) const {
    const auto& c = cells_[t];
    return {vertices_[c[0]], vertices_[c[1]], vertices_[c[2]]};
  }

  /// Data needed to evaluate jumps across a face: incident cells, the signs
  /// n_F . n_{dT}, and the global normal.
  JumpContext jump_context(int f) const {
    if (f < 0 || f >= n_faces()) throw std::out_of_range("jump_context: invalid face id");
    const Face& F = faces_[f];
    JumpContext ctx;
    ctx.normal = F.normal;
    ctx.cells[0] = F.cell_plus;
    ctx.signs[0] = 1.0;
    if (F.boundary) {
      ctx.n_cells = 1;
    } else {
      ctx.n_cells = 2;
      ctx.cells[1] = F.cell_minus;
      ctx.signs[1] = -1.0;
    }
    return ctx;
  }

  /// Plain-text dump: one vertex per line "x y", then one cell per line
  /// "i j k" (0-based).
  void dump(std::ostream& os) const {
    for (const auto& v : vertices_) os << v.x() << " " << v.y() << "\n";
    for (const auto& c : cells_) os << c[0] << " " << c[1] << " " << c[2] << "\n";
  }

private:
  void build_topology() {
    faces_.clear();
    cell_faces_.assign(cells_.size(), {});
    std::map<std::pair<int, int>, int> face_of;
    for (int t = 0; t < n_cells(); ++t) {
      const auto& c = cells_[t];
      double area2 = (vertices_[c[1]] - vertices_[c[0]]).x() * (vertices_[c[2]] - vertices_[c[0]]).y() -
                     (vertices_[c[1]] - vertices_[c[0]]).y() * (vertices_[c[2]] - vertices_[c[0]]).x();
      if (area2 <= 0.0) throw std::invalid_argument("SimplicialMesh: cell not counterclockwise");
      cell_areas_.push_back(0.5 * area2);
      double hT = 0.0;
      for (int e = 0; e < 3; ++e) {
        int a = c[e], b = c[(e + 1) % 3];
        Vec2 pa = vertices_[a], pb = vertices_[b];
        Vec2 edge = pb - pa;
        hT = std::max(hT, edge.norm());
        Vec2 outward(edge.y(), -edge.x());  // CCW cell: right-hand normal points out
        outward.normalize();
        auto key = std::minmax(a, b);
        auto it = face_of.find(key);
        if (it == face_of.end()) {
          Face F;
          F.v0 = key.first;
          F.v1 = key.second;
          F.length = edge.norm();
          F.normal = outward;
          F.cell_plus = t;
          int fid = static_cast<int>(faces_.size());
          faces_.push_back(F);
          face_of.emplace(key, fid);
          cell_faces_[t][e] = {fid, 1.0};
        } else {
          Face& F = faces_[it->second];
          if (!F.boundary) throw std::invalid_argument("SimplicialMesh: non-manifold face");
          F.boundary = false;
          F.cell_minus = t;
          cell_faces_[t][e] = {it->second, -1.0};
        }
      }
      cell_diameters_.push_back(hT);
      h_max_ = std::max(h_max_, hT);
    }
    n_boundary_ = 0;
    for (const auto& F : faces_)
      if (F.boundary) ++n_boundary_;
  }

  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> cells_;
  std::vector<Face> faces_;
  std::vector<std::array<CellFaceRef, 3>> cell_faces_;
  std::vector<double> cell_diameters_;
  std::vector<double> cell_areas_;
  double h_max_ = 0.0;
  int n_boundary_ = 0;
};

}  // namespace ssp4
