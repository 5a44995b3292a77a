#pragma once

#include "ssp4/schemes.hpp"

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace ssp4 {

/// Cell scalars derived from a solution: the cell-average Frobenius norm of
/// eps^-2 sigma_h (the discrete Hessian magnitude) and, for m >= 2, the cell
/// average of u0.
struct FieldExport {
  Eigen::VectorXd frob;
  Eigen::VectorXd u0avg;
  bool has_u0 = false;
};

inline FieldExport compute_field_export(const SimplicialMesh& mesh, const SchemeSolution& sol) {
  const SpaceConfig& cfg = sol.cfg;
  FieldExport out;
  out.frob.resize(mesh.n_cells());
  out.has_u0 = cfg.m >= 2 && sol.scheme != SchemeKind::FirstOrder;
  if (out.has_u0) out.u0avg.resize(mesh.n_cells());
  DofMaps maps = build_global_maps(mesh, cfg);
  double inv_eps2 = 1.0 / (sol.eps * sol.eps);
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellFrame fr = make_cell_frame(mesh, t, 2 * cfg.k + 4, 2 * cfg.k + 4);
    VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
    TensorElement sel = build_sigma_local_basis(fr, cfg, vel);
    Eigen::VectorXd scoef = inv_eps2 * sol.sigma_cellwise.row(t).transpose();
    double acc = 0.0;
    for (int q = 0; q < fr.quad.size(); ++q) {
      Vec2 xh = fr.local_pts.col(q);
      Mat2 m = Mat2::Zero();
      for (int i = 0; i < sel.dim(); ++i) m += scoef[i] * sel.members[i].eval(xh);
      acc += fr.quad.weights[q] * m.norm();
    }
    out.frob[t] = acc / fr.area;
    if (out.has_u0) {
      auto exps = monomial_exponents(cfg.m - 2);
      Poly2 u0p;
      for (size_t j = 0; j < exps.size(); ++j)
        u0p = u0p + Poly2::monomial(exps[j][0], exps[j][1],
                                    sol.u.values[maps.wg.u0_offset(t) + static_cast<int>(j)]);
      out.u0avg[t] = fr.integrate(u0p) / fr.area;
    }
  }
  return out;
}

/// Index of the cell attaining the maximum field value.
inline int max_field_cell(const Eigen::VectorXd& field) {
  int idx = 0;
  field.maxCoeff(&idx);
  return idx;
}

/// Distance of a point to the boundary of the unit square.
inline double distance_to_unit_square_boundary(const Vec2& p) {
  return std::min(std::min(p.x(), 1.0 - p.x()), std::min(p.y(), 1.0 - p.y()));
}

/// Legacy ASCII VTK unstructured grid with the given CELL_DATA scalars.
inline void write_vtk(std::ostream& os, const SimplicialMesh& mesh,
                      const std::vector<std::pair<std::string, const Eigen::VectorXd*>>& scalars,
                      const std::string& title = "ssp4 field") {
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return std::string(buf);
  };
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.n_vertices() << " double\n";
  for (int v = 0; v < mesh.n_vertices(); ++v)
    os << num(mesh.vertex(v).x()) << " " << num(mesh.vertex(v).y()) << " 0\n";
  os << "CELLS " << mesh.n_cells() << " " << 4 * mesh.n_cells() << "\n";
  for (int t = 0; t < mesh.n_cells(); ++t) {
    const auto& c = mesh.cell(t);
    os << "3 " << c[0] << " " << c[1] << " " << c[2] << "\n";
  }
  os << "CELL_TYPES " << mesh.n_cells() << "\n";
  for (int t = 0; t < mesh.n_cells(); ++t) os << "5\n";
  if (scalars.empty()) return;
  os << "CELL_DATA " << mesh.n_cells() << "\n";
  for (const auto& [name, field] : scalars) {
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (int t = 0; t < mesh.n_cells(); ++t) os << num((*field)[t]) << "\n";
  }
}

}  // namespace ssp4
