#pragma once

#include "ssp4/fespace.hpp"

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

namespace ssp4 {

using ScalarField = std::function<double(const Vec2&)>;
using VectorField = std::function<Vec2(const Vec2&)>;

/// Per-cell discrete operators: shape bases, mass matrices, and the local
/// weak-gradient / weak-Hessian maps.
///
/// Local unknown layout: [u0 | ub(face 0..2) | ug(face 0..2)]. Boundary faces
/// keep their slots here; assembly drops them (the data is identically zero).
class CellOperators {
public:
  CellOperators(const SimplicialMesh& mesh, int cell, const SpaceConfig& cfg)
      : cfg_(cfg),
        frame_(make_cell_frame(mesh, cell, 2 * cfg.k + 4, 2 * cfg.k + 4)),
        V_(build_v_local_basis(frame_, cfg.k, cfg.m)),
        S_(build_sigma_local_basis(frame_, cfg, V_)) {
    n0_ = poly_dim(cfg.m - 2);
    nb_ = cfg.k;
    ng_ = 2 * (cfg.r + 1);
    build_operators();
  }

  const SpaceConfig& cfg() const { return cfg_; }
  const CellFrame& frame() const { return frame_; }
  const VectorElement& v_basis() const { return V_; }
  const TensorElement& sigma_basis() const { return S_; }

  int n0() const { return n0_; }
  int nb() const { return nb_; }
  int ng() const { return ng_; }
  int n_grad_unknowns() const { return n0_ + 3 * nb_; }
  int n_all_unknowns() const { return n0_ + 3 * (nb_ + ng_); }

  const Eigen::MatrixXd& mass_v() const { return MV_; }
  const Eigen::MatrixXd& mass_sigma() const { return MS_; }
  /// H1-seminorm matrix of the V basis (physical gradients).
  const Eigen::MatrixXd& stiff_v() const { return SV_; }
  /// Weak gradient map, dim V x (n0 + 3 nb).
  const Eigen::MatrixXd& weak_gradient_map() const { return BG_; }
  /// Weak Hessian map, dim Sigma x (n0 + 3 nb + 3 ng).
  const Eigen::MatrixXd& weak_hessian_map() const { return BH_; }

  /// V-basis values at the cell quadrature points, one matrix per component.
  const Eigen::MatrixXd& v_values(int comp) const { return Vvals_[comp]; }
  const Eigen::MatrixXd& sigma_values(int a, int b) const { return Svals_[a][b]; }

  Eigen::VectorXd stack_grad_unknowns(const Eigen::VectorXd& v0,
                                      const std::array<Eigen::VectorXd, 3>& vb) const {
    Eigen::VectorXd x(n_grad_unknowns());
    x.head(n0_) = v0;
    for (int e = 0; e < 3; ++e) x.segment(n0_ + e * nb_, nb_) = vb[e];
    return x;
  }

  Eigen::VectorXd stack_all_unknowns(const Eigen::VectorXd& v0,
                                     const std::array<Eigen::VectorXd, 3>& vb,
                                     const std::array<Eigen::VectorXd, 3>& vg) const {
    Eigen::VectorXd x(n_all_unknowns());
    x.head(n0_) = v0;
    for (int e = 0; e < 3; ++e) x.segment(n0_ + e * nb_, nb_) = vb[e];
    for (int e = 0; e < 3; ++e) x.segment(n0_ + 3 * nb_ + e * ng_, ng_) = vg[e];
    return x;
  }

private:
  void build_operators() {
    const int nq = frame_.quad.size();
    const int dv = V_.dim();
    const int ds = S_.dim();

    for (int c = 0; c < 2; ++c) Vvals_[c].resize(dv, nq);
    divVvals_.resize(dv, nq);
    for (int i = 0; i < dv; ++i) {
      for (int q = 0; q < nq; ++q) {
        Vec2 xh = frame_.local_pts.col(q);
        Vvals_[0](i, q) = V_.members[i].x.eval(xh);
        Vvals_[1](i, q) = V_.members[i].y.eval(xh);
        divVvals_(i, q) = V_.div_local[i].eval(xh) / frame_.h;
      }
    }
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        Svals_[a][b].resize(ds, nq);
        for (int i = 0; i < ds; ++i)
          for (int q = 0; q < nq; ++q)
            Svals_[a][b](i, q) = S_.members[i].e[a][b].eval(frame_.local_pts.col(q));
      }

    Eigen::VectorXd w = frame_.quad.weights;
    MV_ = Vvals_[0] * w.asDiagonal() * Vvals_[0].transpose() +
          Vvals_[1] * w.asDiagonal() * Vvals_[1].transpose();
    MS_.setZero(ds, ds);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        MS_ += Svals_[a][b] * w.asDiagonal() * Svals_[a][b].transpose();

    // physical H1 seminorm of V members
    SV_.setZero(dv, dv);
    {
      Eigen::MatrixXd gx[2], gy[2];
      for (int c = 0; c < 2; ++c) {
        gx[c].resize(dv, nq);
        gy[c].resize(dv, nq);
      }
      for (int i = 0; i < dv; ++i) {
        Poly2 pxx = V_.members[i].x.dx(), pxy = V_.members[i].x.dy();
        Poly2 pyx = V_.members[i].y.dx(), pyy = V_.members[i].y.dy();
        for (int q = 0; q < nq; ++q) {
          Vec2 xh = frame_.local_pts.col(q);
          gx[0](i, q) = pxx.eval(xh) / frame_.h;
          gx[1](i, q) = pxy.eval(xh) / frame_.h;
          gy[0](i, q) = pyx.eval(xh) / frame_.h;
          gy[1](i, q) = pyy.eval(xh) / frame_.h;
        }
      }
      for (int c = 0; c < 2; ++c)
        SV_ += gx[c] * w.asDiagonal() * gx[c].transpose() + gy[c] * w.asDiagonal() * gy[c].transpose();
    }

    MV_llt_.compute(MV_);
    MS_llt_.compute(MS_);
    if (MV_llt_.info() != Eigen::Success || MS_llt_.info() != Eigen::Success)
      throw std::runtime_error("CellOperators: mass matrix not SPD");

    // Weak gradient: (grad_w v, q)_T = -(v0, div q)_T + sum_F sign (vb, q.n_F)_F
    Eigen::MatrixXd rhsG = Eigen::MatrixXd::Zero(dv, n_grad_unknowns());
    if (n0_ > 0) {
      Eigen::MatrixXd m0vals(n0_, nq);
      auto exps = monomial_exponents(cfg_.m - 2);
      for (int j = 0; j < n0_; ++j)
        for (int q = 0; q < nq; ++q) {
          Vec2 xh = frame_.local_pts.col(q);
          m0vals(j, q) = std::pow(xh.x(), exps[j][0]) * std::pow(xh.y(), exps[j][1]);
        }
      rhsG.leftCols(n0_) = -divVvals_ * w.asDiagonal() * m0vals.transpose();
      m0vals_ = m0vals;
    }
    for (int e = 0; e < 3; ++e) {
      const CellFaceFrame& ff = frame_.faces[e];
      int nqf = ff.quad.size();
      Eigen::MatrixXd vn(dv, nqf);
      for (int i = 0; i < dv; ++i)
        for (int q = 0; q < nqf; ++q)
          vn(i, q) = V_.members[i].eval(frame_.local(ff.quad.points.col(q))).dot(ff.normal);
      Eigen::MatrixXd sb(nb_, nqf);
      for (int j = 0; j < nb_; ++j)
        for (int q = 0; q < nqf; ++q) sb(j, q) = std::pow(ff.sparam[q], j);
      rhsG.block(0, n0_ + e * nb_, dv, nb_) =
          ff.sign * vn * ff.quad.weights.asDiagonal() * sb.transpose();
      face_vn_[e] = vn;
      face_sb_[e] = sb;
    }
    BG_ = MV_llt_.solve(rhsG);

    // Weak Hessian: (hess_w v, tau)_T = -(grad_w(v0,vb), div tau)_T
    //                                   + sum_F sign (vg, tau n_F)_F
    Eigen::MatrixXd rhsH = Eigen::MatrixXd::Zero(ds, n_all_unknowns());
    rhsH.leftCols(n_grad_unknowns()) = -S_.div_in_v.transpose() * MV_ * BG_;
    for (int e = 0; e < 3; ++e) {
      const CellFaceFrame& ff = frame_.faces[e];
      int nqf = ff.quad.size();
      // tau n_F components at face quadrature points
      Eigen::MatrixXd tn0(ds, nqf), tn1(ds, nqf);
      for (int i = 0; i < ds; ++i)
        for (int q = 0; q < nqf; ++q) {
          Vec2 tn = S_.members[i].eval(frame_.local(ff.quad.points.col(q))) * ff.normal;
          tn0(i, q) = tn[0];
          tn1(i, q) = tn[1];
        }
      face_tn_[e][0] = tn0;
      face_tn_[e][1] = tn1;
      Eigen::MatrixXd sg(ng_, nqf);
      for (int j = 0; j <= cfg_.r; ++j)
        for (int c = 0; c < 2; ++c)
          for (int q = 0; q < nqf; ++q)
            sg(2 * j + c, q) = std::pow(ff.sparam[q], j);
      Eigen::MatrixXd blk(ds, ng_);
      for (int j = 0; j <= cfg_.r; ++j) {
        blk.col(2 * j) = tn0 * (ff.quad.weights.array() * sg.row(2 * j).transpose().array()).matrix();
        blk.col(2 * j + 1) =
            tn1 * (ff.quad.weights.array() * sg.row(2 * j + 1).transpose().array()).matrix();
      }
      rhsH.block(0, n_grad_unknowns() + e * ng_, ds, ng_) = ff.sign * blk;
    }
    BH_ = MS_llt_.solve(rhsH);
  }

  SpaceConfig cfg_;
  CellFrame frame_;
  VectorElement V_;
  TensorElement S_;
  int n0_ = 0, nb_ = 0, ng_ = 0;
  Eigen::MatrixXd MV_, MS_, SV_, BG_, BH_;
  Eigen::LLT<Eigen::MatrixXd> MV_llt_, MS_llt_;
  Eigen::MatrixXd Vvals_[2], Svals_[2][2], divVvals_, m0vals_;

public:
  // face caches reused by assembly and error evaluation
  std::array<Eigen::MatrixXd, 3> face_vn_;          // V.n_F at face points
  std::array<Eigen::MatrixXd, 3> face_sb_;          // s^j at face points
  std::array<std::array<Eigen::MatrixXd, 2>, 3> face_tn_;  // (tau n_F)_c at face points

  const Eigen::MatrixXd& scalar_values() const { return m0vals_; }
  const Eigen::MatrixXd& div_v_values() const { return divVvals_; }

  Eigen::VectorXd solve_mass_v(const Eigen::VectorXd& rhs) const { return MV_llt_.solve(rhs); }
  Eigen::VectorXd solve_mass_sigma(const Eigen::VectorXd& rhs) const { return MS_llt_.solve(rhs); }
};

// ---------------------------------------------------------------------------
// Weak operators (cell-local)
// ---------------------------------------------------------------------------

/// Weak gradient of (v0, vb) on one cell, returned as V-basis coefficients.
inline Eigen::VectorXd weak_gradient(const CellOperators& ops, const Eigen::VectorXd& v0,
                                     const std::array<Eigen::VectorXd, 3>& vb) {
  return ops.weak_gradient_map() * ops.stack_grad_unknowns(v0, vb);
}

/// Weak Hessian of (v0, vb, vg) on one cell, returned as Sigma coefficients.
inline Eigen::VectorXd weak_hessian(const CellOperators& ops, const Eigen::VectorXd& v0,
                                    const std::array<Eigen::VectorXd, 3>& vb,
                                    const std::array<Eigen::VectorXd, 3>& vg) {
  return ops.weak_hessian_map() * ops.stack_all_unknowns(v0, vb, vg);
}

/// L2 projection Q_T^div of a vector field onto V_{k-1,m-1}(T).
inline Eigen::VectorXd project_to_v(const CellOperators& ops, const VectorField& g,
                                    int quad_degree) {
  const CellFrame& fr = ops.frame();
  auto rule = triangle_quadrature(quad_degree);
  auto mq = map_to_triangle(rule, fr.verts[0], fr.verts[1], fr.verts[2]);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ops.v_basis().dim());
  for (int q = 0; q < mq.size(); ++q) {
    Vec2 x = mq.points.col(q);
    Vec2 gx = g(x);
    Vec2 xh = fr.local(x);
    for (int i = 0; i < ops.v_basis().dim(); ++i)
      rhs[i] += mq.weights[q] * gx.dot(ops.v_basis().members[i].eval(xh));
  }
  return ops.solve_mass_v(rhs);
}

/// L2 projection Q_{deg,T} of a scalar field onto P_deg(T), monomial coords.
inline Eigen::VectorXd project_scalar(const CellFrame& fr, const ScalarField& s, int deg,
                                      int quad_degree) {
  int n = poly_dim(deg);
  if (n == 0) return Eigen::VectorXd();
  auto rule = triangle_quadrature(quad_degree);
  auto mq = map_to_triangle(rule, fr.verts[0], fr.verts[1], fr.verts[2]);
  auto exps = monomial_exponents(deg);
  Eigen::MatrixXd mv(n, mq.size());
  for (int j = 0; j < n; ++j)
    for (int q = 0; q < mq.size(); ++q) {
      Vec2 xh = fr.local(mq.points.col(q));
      mv(j, q) = std::pow(xh.x(), exps[j][0]) * std::pow(xh.y(), exps[j][1]);
    }
  Eigen::MatrixXd M = mv * mq.weights.asDiagonal() * mv.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int q = 0; q < mq.size(); ++q) rhs += mq.weights[q] * s(mq.points.col(q)) * mv.col(q);
  return M.llt().solve(rhs);
}

// ---------------------------------------------------------------------------
// Canonical interpolation onto V^div (m >= 2)
// ---------------------------------------------------------------------------

/// Face/interior DoF values of a smooth vector field under DoFs of V^div.
/// Face moments are computed once per face with the global normal and edge
/// parameterization, so both incident cells address identical values.
inline CoefficientField canonical_interp_v(const SimplicialMesh& mesh, const VectorField& w,
                                           const SpaceConfig& cfg, const DofMaps& maps,
                                           int quad_degree) {
  if (cfg.m < 2) throw std::invalid_argument("canonical_interp_v: requires m >= 2");
  CoefficientField field{SpaceTag::VDiv, Eigen::VectorXd::Zero(maps.vdiv.total)};
  auto erule = edge_quadrature(quad_degree);
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const Face& F = mesh.face(f);
    EdgeMonomialBasis eb(mesh.vertex(F.v0), mesh.vertex(F.v1), cfg.k - 1);
    auto mq = map_to_edge(erule, mesh.vertex(F.v0), mesh.vertex(F.v1));
    for (int j = 0; j < cfg.k; ++j) {
      double s = 0.0;
      for (int q = 0; q < mq.size(); ++q)
        s += mq.weights[q] * w(mq.points.col(q)).dot(F.normal) *
             std::pow(eb.param(mq.points.col(q)), j);
      field.values[maps.vdiv.face_offset(f) + j] = s / F.length;
    }
  }
  auto rule = triangle_quadrature(quad_degree);
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellFrame fr = make_cell_frame(mesh, t, 2 * cfg.k + 4, 2 * cfg.k + 4);
    auto mq = map_to_triangle(rule, fr.verts[0], fr.verts[1], fr.verts[2]);
    int off = maps.vdiv.cell_offset(t);
    int idx = 0;
    auto exps = monomial_exponents(cfg.m - 2);
    for (size_t g = 1; g < exps.size(); ++g, ++idx) {
      Poly2 mg = Poly2::monomial(exps[g][0], exps[g][1]);
      Poly2 gx = mg.dx(), gy = mg.dy();
      double s = 0.0;
      for (int q = 0; q < mq.size(); ++q) {
        Vec2 xh = fr.local(mq.points.col(q));
        s += mq.weights[q] * w(mq.points.col(q)).dot(Vec2(gx.eval(xh), gy.eval(xh)));
      }
      field.values[off + idx] = s / fr.area;
    }
    for (const auto& qk : ker_dot_x_basis(cfg.k - 2)) {
      double s = 0.0;
      for (int q = 0; q < mq.size(); ++q) {
        Vec2 xh = fr.local(mq.points.col(q));
        s += mq.weights[q] * w(mq.points.col(q)).dot(qk.eval(xh));
      }
      field.values[off + idx] = s / fr.area;
      ++idx;
    }
  }
  return field;
}

/// Local V-basis coefficients of a V^div field on one cell.
inline Eigen::VectorXd gather_vdiv_local(const SimplicialMesh& mesh, const VectorElement& vel,
                                         const DofMaps& maps, const CoefficientField& field,
                                         int cell) {
  int ndof = vel.dim();
  Eigen::VectorXd dofs(ndof);
  const auto& cf = mesh.cell_faces(cell);
  int k = vel.k;
  for (int e = 0; e < 3; ++e)
    dofs.segment(e * k, k) = field.values.segment(maps.vdiv.face_offset(cf[e].face), k);
  dofs.tail(maps.vdiv.per_cell) =
      field.values.segment(maps.vdiv.cell_offset(cell), maps.vdiv.per_cell);
  return vel.dual * dofs;
}

// ---------------------------------------------------------------------------
// Nonconforming reconstruction for k = 1 and the load functional
// ---------------------------------------------------------------------------

/// Reconstruction matrix for k=1: maps (u0, ub on the 3 faces) to coefficients
/// of the explicit shape space P_1 (m=1) or P_1 + span{|x|^2} (m=2).
/// Shape basis order: 1, x, y[, |x|^2], in local coordinates.
inline Eigen::MatrixXd nc_reconstruction_matrix(const CellFrame& fr, int k, int m) {
  if (k != 1) throw std::invalid_argument("nc_reconstruction: only k = 1 has an explicit space");
  if (m != 1 && m != 2) throw std::invalid_argument("nc_reconstruction: m must be 1 or 2");
  int nc = (m == 1) ? 3 : 4;
  std::vector<Poly2> shapes = {Poly2::monomial(0, 0), Poly2::monomial(1, 0), Poly2::monomial(0, 1)};
  if (m == 2)
    shapes.push_back(Poly2::monomial(2, 0) + Poly2::monomial(0, 2));  // |x|^2 (local)
  Eigen::MatrixXd N(nc, nc);
  for (int e = 0; e < 3; ++e) {
    const CellFaceFrame& ff = fr.faces[e];
    for (int j = 0; j < nc; ++j) {
      double s = 0.0;
      for (int q = 0; q < ff.quad.size(); ++q)
        s += ff.quad.weights[q] * shapes[j].eval(fr.local(ff.quad.points.col(q)));
      N(e, j) = s / ff.length;
    }
  }
  if (m == 2)
    for (int j = 0; j < nc; ++j) N(3, j) = fr.integrate(shapes[j]) / fr.area;

  // unknown order: [u0 (m=2 only) | ub f0 f1 f2]; DoF rows: f0 f1 f2 [cell]
  int nunk = (m == 2 ? 1 : 0) + 3;
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(nc, nunk);
  int u0n = (m == 2) ? 1 : 0;
  for (int e = 0; e < 3; ++e) E(e, u0n + e) = 1.0;
  if (m == 2) E(3, 0) = 1.0;
  return N.partialPivLu().solve(E);
}

/// The explicit k=1 function matching face averages (and the cell average for
/// m=2), as a polynomial in local coordinates.
inline Poly2 reconstruct_nc(const CellFrame& fr, const Eigen::VectorXd& v0,
                            const std::array<Eigen::VectorXd, 3>& vb, int k, int m) {
  Eigen::MatrixXd R = nc_reconstruction_matrix(fr, k, m);
  Eigen::VectorXd unk(R.cols());
  int u0n = (m == 2) ? 1 : 0;
  if (m == 2) unk[0] = v0[0];
  for (int e = 0; e < 3; ++e) unk[u0n + e] = vb[e][0];
  Eigen::VectorXd c = R * unk;
  Poly2 p = Poly2::monomial(0, 0, c[0]) + Poly2::monomial(1, 0, c[1]) + Poly2::monomial(0, 1, c[2]);
  if (m == 2) p = p + (Poly2::monomial(2, 0) + Poly2::monomial(0, 2)) * c[3];
  return p;
}

/// Local load vector (f, .)_T over [u0 | ub x3]: k=1 pairs f with the
/// nonconforming reconstruction, k>=2 with the cell polynomial component only.
inline Eigen::VectorXd local_load(const CellOperators& ops, const ScalarField& f,
                                  int quad_degree) {
  const CellFrame& fr = ops.frame();
  const SpaceConfig& cfg = ops.cfg();
  auto rule = triangle_quadrature(quad_degree);
  auto mq = map_to_triangle(rule, fr.verts[0], fr.verts[1], fr.verts[2]);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(ops.n_grad_unknowns());
  if (cfg.k >= 2) {
    auto exps = monomial_exponents(cfg.m - 2);
    for (int q = 0; q < mq.size(); ++q) {
      Vec2 xh = fr.local(mq.points.col(q));
      double fq = f(mq.points.col(q));
      for (int j = 0; j < ops.n0(); ++j)
        b[j] += mq.weights[q] * fq * std::pow(xh.x(), exps[j][0]) * std::pow(xh.y(), exps[j][1]);
    }
    return b;
  }
  Eigen::MatrixXd R = nc_reconstruction_matrix(fr, cfg.k, cfg.m);
  int nc = static_cast<int>(R.rows());
  std::vector<Poly2> shapes = {Poly2::monomial(0, 0), Poly2::monomial(1, 0), Poly2::monomial(0, 1)};
  if (cfg.m == 2) shapes.push_back(Poly2::monomial(2, 0) + Poly2::monomial(0, 2));
  Eigen::VectorXd g = Eigen::VectorXd::Zero(nc);
  for (int q = 0; q < mq.size(); ++q) {
    Vec2 xh = fr.local(mq.points.col(q));
    double fq = f(mq.points.col(q));
    for (int j = 0; j < nc; ++j) g[j] += mq.weights[q] * fq * shapes[j].eval(xh);
  }
  return R.transpose() * g;  // unknown order matches [u0 | ub x3]
}

/// Global load vector on the WG unknowns; u_g entries are zero by definition.
inline Eigen::VectorXd load_vector(const SimplicialMesh& mesh, const ScalarField& f,
                                   const SpaceConfig& cfg, const DofMaps& maps, int quad_degree) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(maps.wg.total);
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellOperators ops(mesh, t, cfg);
    Eigen::VectorXd bl = local_load(ops, f, quad_degree);
    for (int j = 0; j < maps.wg.n0; ++j) b[maps.wg.u0_offset(t) + j] += bl[j];
    const auto& cf = mesh.cell_faces(t);
    for (int e = 0; e < 3; ++e) {
      int idx = maps.wg.iface_index[cf[e].face];
      if (idx < 0) continue;
      for (int j = 0; j < maps.wg.nb; ++j)
        b[maps.wg.ub_offset(idx) + j] += bl[maps.wg.n0 + e * maps.wg.nb + j];
    }
  }
  return b;
}

}  // namespace ssp4
