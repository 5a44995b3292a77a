#pragma once

#include "ssp4/weakops.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <random>
#include <utility>
#include <vector>

namespace ssp4 {

enum class SchemeKind { PrimalWg, SaddleWg, FirstOrder };

inline const char* scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::PrimalWg: return "primal-wg";
    case SchemeKind::SaddleWg: return "saddle-wg";
    case SchemeKind::FirstOrder: return "first-order";
  }
  return "?";
}

struct SparseSystem {
  bool symmetric = false;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd rhs;
  std::vector<std::pair<int, int>> entity_blocks;  // (offset, size) spans for block-Jacobi
};

/// Test hook: scales one element matrix during assembly.
struct AssemblyHook {
  int cell = -1;
  double scale = 1.0;
};

struct SolveOptions {
  bool condense = false;
  int quad_degree = -1;  // data-term quadrature; defaults to 2k+8
  AssemblyHook hook;
};

struct SchemeSolution {
  SchemeKind scheme = SchemeKind::PrimalWg;
  double eps = 1.0;
  SpaceConfig cfg;
  CoefficientField u;              // WG layout (u0 | per-iface ub,ug); ug only for primal
  CoefficientField sigma;          // global Sigma^div DoF values
  Eigen::MatrixXd sigma_cellwise;  // n_cells x dim Sigma, spanning coordinates
  CoefficientField phi, p;         // first-order extras (V^div / broken V)
  double residual = 0.0;
  double sigma_face_jump = 0.0;
};

// ---------------------------------------------------------------------------
// Linear solvers
// ---------------------------------------------------------------------------

/// Normwise backward error |Ax-b| / (|A| |x| + |b|) in infinity norms.
inline double backward_error(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& b) {
  Eigen::VectorXd r = A * x - b;
  Eigen::VectorXd rowsums = Eigen::VectorXd::Zero(A.rows());
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      rowsums[it.row()] += std::abs(it.value());
  double denom = rowsums.maxCoeff() * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>();
  if (denom == 0.0) return r.lpNorm<Eigen::Infinity>();
  return r.lpNorm<Eigen::Infinity>() / denom;
}

inline Eigen::SparseMatrix<double> symmetric_scaling(const Eigen::SparseMatrix<double>& A,
                                                     Eigen::VectorXd& d) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(A.rows());
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      m[it.row()] = std::max(m[it.row()], std::abs(it.value()));
  d.resize(A.rows());
  for (int i = 0; i < A.rows(); ++i) d[i] = m[i] > 0.0 ? 1.0 / std::sqrt(m[i]) : 1.0;
  Eigen::SparseMatrix<double> S = d.asDiagonal() * A * d.asDiagonal();
  S.makeCompressed();
  return S;
}

/// Block-Jacobi preconditioner over per-entity diagonal blocks.
class BlockJacobi {
public:
  BlockJacobi(const Eigen::SparseMatrix<double>& A,
              const std::vector<std::pair<int, int>>& blocks) {
    if (blocks.empty()) {
      diag_ = A.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseInverse();
      return;
    }
    for (const auto& [off, size] : blocks) {
      Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(size, size);
      for (int c = 0; c < size; ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, off + c); it; ++it) {
          int r = static_cast<int>(it.row()) - off;
          if (r >= 0 && r < size) dense(r, c) = it.value();
        }
      blocks_.emplace_back(off, size, Eigen::LLT<Eigen::MatrixXd>(dense));
    }
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& r) const {
    if (blocks_.empty()) return diag_.cwiseProduct(r);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(r.size());
    for (const auto& [off, size, llt] : blocks_)
      z.segment(off, size) = llt.solve(r.segment(off, size));
    return z;
  }

private:
  std::vector<std::tuple<int, int, Eigen::LLT<Eigen::MatrixXd>>> blocks_;
  Eigen::VectorXd diag_;
};

inline Eigen::VectorXd pcg_solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                                 const BlockJacobi& prec, double tol, int maxit) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  double bnorm = b.norm();
  if (bnorm == 0.0) return x;
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = prec.apply(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  for (int it = 0; it < maxit; ++it) {
    Eigen::VectorXd Ap = A * p;
    double alpha = rz / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    if (r.norm() < tol * bnorm) break;
    Eigen::VectorXd z1 = prec.apply(r);
    double rz1 = r.dot(z1);
    p = z1 + (rz1 / rz) * p;
    rz = rz1;
  }
  return x;
}

/// Sparse LDL^T with symmetric equilibration; block-Jacobi CG fallback.
/// Throws when the matrix is not SPD.
inline Eigen::VectorXd solve_spd(const SparseSystem& sys, double* residual_out = nullptr) {
  if (!sys.symmetric) throw std::invalid_argument("solve_spd: symmetric flag not set");
  Eigen::VectorXd d;
  Eigen::SparseMatrix<double> S = symmetric_scaling(sys.A, d);
  Eigen::VectorXd bs = d.asDiagonal() * sys.rhs;
  Eigen::VectorXd x;
  bool ok = false;
  {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(S);
    if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) {
      x = d.asDiagonal() * ldlt.solve(bs);
      ok = backward_error(sys.A, x, sys.rhs) < 1e-10;
    }
  }
  if (!ok) {
    BlockJacobi prec(S, sys.entity_blocks);
    Eigen::VectorXd xs = pcg_solve(S, bs, prec, 1e-13, 20 * static_cast<int>(S.rows()));
    x = d.asDiagonal() * xs;
    double be = backward_error(sys.A, x, sys.rhs);
    if (!(be <= 1e-9))
      throw std::runtime_error("solve_spd: factorization and CG fallback both failed (non-SPD?)");
  }
  if (residual_out) *residual_out = backward_error(sys.A, x, sys.rhs);
  return x;
}

/// Sparse LU with symmetric equilibration for the indefinite systems.
inline Eigen::VectorXd solve_indefinite(const SparseSystem& sys, double* residual_out = nullptr) {
  Eigen::VectorXd d;
  Eigen::SparseMatrix<double> S = symmetric_scaling(sys.A, d);
  Eigen::VectorXd bs = d.asDiagonal() * sys.rhs;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(S);
  lu.factorize(S);
  if (lu.info() != Eigen::Success) throw std::runtime_error("solve_indefinite: singular matrix");
  Eigen::VectorXd x = d.asDiagonal() * lu.solve(bs);
  double be = backward_error(sys.A, x, sys.rhs);
  if (!(be <= 1e-9)) throw std::runtime_error("solve_indefinite: residual too large");
  if (residual_out) *residual_out = be;
  return x;
}

/// SPD probe: Cholesky on the equilibrated matrix plus the smallest Ritz
/// value of a short Lanczos recurrence.
struct SpdProbe {
  bool cholesky_ok = false;
  double min_ritz = 0.0;
};

inline SpdProbe spd_probe(const Eigen::SparseMatrix<double>& A, unsigned seed = 42,
                          int steps = 20) {
  SpdProbe probe;
  Eigen::VectorXd d;
  Eigen::SparseMatrix<double> S = symmetric_scaling(A, d);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(S);
  probe.cholesky_ok = llt.info() == Eigen::Success;

  int n = static_cast<int>(S.rows());
  steps = std::min(steps, n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = unif(rng);
  v.normalize();
  Eigen::VectorXd v_prev = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd alpha(steps), beta(steps);
  double b_prev = 0.0;
  int m = 0;
  for (int j = 0; j < steps; ++j) {
    Eigen::VectorXd w = S * v;
    alpha[j] = v.dot(w);
    w -= alpha[j] * v + b_prev * v_prev;
    double b = w.norm();
    m = j + 1;
    if (b < 1e-14) break;
    beta[j] = b;
    v_prev = v;
    v = w / b;
    b_prev = b;
  }
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j) {
    T(j, j) = alpha[j];
    if (j + 1 < m) T(j, j + 1) = T(j + 1, j) = beta[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  probe.min_ritz = es.eigenvalues().minCoeff();
  return probe;
}

// ---------------------------------------------------------------------------
// Local-to-global indexing
// ---------------------------------------------------------------------------

/// Global indices of a cell's local WG unknowns [u0 | ub x3 | ug x3];
/// boundary-face slots yield -1 (their data is identically zero).
inline std::vector<int> wg_global_indices(const SimplicialMesh& mesh, const WgDofMap& wg,
                                          int cell) {
  std::vector<int> idx(wg.n0 + 3 * (wg.nb + wg.ng), -1);
  for (int j = 0; j < wg.n0; ++j) idx[j] = wg.u0_offset(cell) + j;
  const auto& cf = mesh.cell_faces(cell);
  for (int e = 0; e < 3; ++e) {
    int fi = wg.iface_index[cf[e].face];
    if (fi < 0) continue;
    for (int j = 0; j < wg.nb; ++j) idx[wg.n0 + e * wg.nb + j] = wg.ub_offset(fi) + j;
    for (int j = 0; j < wg.ng; ++j)
      idx[wg.n0 + 3 * wg.nb + e * wg.ng + j] = wg.ug_offset(fi) + j;
  }
  return idx;
}

inline Eigen::VectorXd gather_local(const std::vector<int>& idx, const Eigen::VectorXd& global) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<int>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i)
    if (idx[i] >= 0) x[static_cast<int>(i)] = global[idx[i]];
  return x;
}

/// Global indices of a cell's local Sigma^div DoFs [faces | interior].
inline std::vector<int> sigma_global_indices(const SimplicialMesh& mesh, const SigmaDofMap& sm,
                                             int cell) {
  std::vector<int> idx;
  idx.reserve(3 * sm.per_face + sm.per_cell);
  const auto& cf = mesh.cell_faces(cell);
  for (int e = 0; e < 3; ++e)
    for (int j = 0; j < sm.per_face; ++j) idx.push_back(sm.face_offset(cf[e].face) + j);
  for (int j = 0; j < sm.per_cell; ++j) idx.push_back(sm.cell_offset(cell) + j);
  return idx;
}

inline std::vector<int> vdiv_global_indices(const SimplicialMesh& mesh, const VdivDofMap& vm,
                                            int cell) {
  std::vector<int> idx;
  idx.reserve(3 * vm.per_face + vm.per_cell);
  const auto& cf = mesh.cell_faces(cell);
  for (int e = 0; e < 3; ++e)
    for (int j = 0; j < vm.per_face; ++j) idx.push_back(vm.face_offset(cf[e].face) + j);
  for (int j = 0; j < vm.per_cell; ++j) idx.push_back(vm.cell_offset(cell) + j);
  return idx;
}

inline int default_data_degree(const SpaceConfig& cfg, const SolveOptions& opts) {
  return opts.quad_degree > 0 ? opts.quad_degree : 2 * cfg.k + 8;
}

// ---------------------------------------------------------------------------
// Element contributions
// ---------------------------------------------------------------------------

struct PrimalElement {
  Eigen::MatrixXd K;      // over [u0 | ub x3 | ug x3]
  Eigen::VectorXd b;
  std::vector<int> idx;
  int n0 = 0;
};

inline PrimalElement primal_element(const SimplicialMesh& mesh, int cell, const SpaceConfig& cfg,
                                    double eps, const ScalarField& f, const DofMaps& maps,
                                    const SolveOptions& opts) {
  CellOperators ops(mesh, cell, cfg);
  PrimalElement el;
  el.n0 = ops.n0();
  int nall = ops.n_all_unknowns(), ngrad = ops.n_grad_unknowns();
  Eigen::MatrixXd BGext = Eigen::MatrixXd::Zero(ops.v_basis().dim(), nall);
  BGext.leftCols(ngrad) = ops.weak_gradient_map();
  el.K = eps * eps * ops.weak_hessian_map().transpose() * ops.mass_sigma() *
             ops.weak_hessian_map() +
         BGext.transpose() * ops.mass_v() * BGext;
  if (cell == opts.hook.cell) el.K *= opts.hook.scale;
  el.b = Eigen::VectorXd::Zero(nall);
  el.b.head(ngrad) = local_load(ops, f, default_data_degree(cfg, opts));
  el.idx = wg_global_indices(mesh, maps.wg, cell);
  return el;
}

struct SaddleElement {
  // Full local block over [sigma (faces+interior) | u0 | ub x3].
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<int> gidx;  // saddle-system indices; -1 for dropped boundary slots
  int ns = 0, n0 = 0;
};

/// Saddle numbering: [sigma dofs | u0 by cell | ub by interior face].
inline int saddle_u_index(const WgDofMap& wg, int n_sigma, int wg_index) {
  if (wg_index < 0) return -1;
  if (wg_index < wg.n_cells * wg.n0) return n_sigma + wg_index;
  int rest = wg_index - wg.n_cells * wg.n0;
  int face = rest / (wg.nb + wg.ng);
  int off = rest % (wg.nb + wg.ng);
  if (off >= wg.nb) return -1;  // no ug unknowns in the saddle form
  return n_sigma + wg.n_cells * wg.n0 + face * wg.nb + off;
}

inline SaddleElement saddle_element(const SimplicialMesh& mesh, int cell, const SpaceConfig& cfg,
                                    double eps, const ScalarField& f, const DofMaps& maps,
                                    const SolveOptions& opts) {
  CellOperators ops(mesh, cell, cfg);
  const WgDofMap& wg = maps.wg;
  const Eigen::MatrixXd& dual = ops.sigma_basis().dual;
  Eigen::MatrixXd Mdual = dual.transpose() * ops.mass_sigma() * dual;
  Eigen::MatrixXd Dd = ops.sigma_basis().div_in_v * dual;
  Eigen::MatrixXd B = Dd.transpose() * ops.mass_v() * ops.weak_gradient_map();
  Eigen::MatrixXd C =
      ops.weak_gradient_map().transpose() * ops.mass_v() * ops.weak_gradient_map();
  Eigen::VectorXd bl = local_load(ops, f, default_data_degree(cfg, opts));

  SaddleElement el;
  el.ns = static_cast<int>(Mdual.rows());
  el.n0 = ops.n0();
  int nu = ops.n_grad_unknowns();
  int n = el.ns + nu;
  el.A = Eigen::MatrixXd::Zero(n, n);
  el.A.topLeftCorner(el.ns, el.ns) = Mdual / (eps * eps);
  el.A.topRightCorner(el.ns, nu) = B;
  el.A.bottomLeftCorner(nu, el.ns) = B.transpose();
  el.A.bottomRightCorner(nu, nu) = -C;
  if (cell == opts.hook.cell) el.A *= opts.hook.scale;
  el.b = Eigen::VectorXd::Zero(n);
  el.b.tail(nu) = -bl;

  auto sidx = sigma_global_indices(mesh, maps.sigma, cell);
  auto wgidx = wg_global_indices(mesh, wg, cell);
  el.gidx.resize(n);
  for (int i = 0; i < el.ns; ++i) el.gidx[i] = sidx[i];
  for (int i = 0; i < nu; ++i) el.gidx[el.ns + i] = saddle_u_index(wg, maps.sigma.total, wgidx[i]);
  return el;
}

// ---------------------------------------------------------------------------
// Assembly of the three discretizations
// ---------------------------------------------------------------------------

/// SPD system of the fully weak Galerkin method over (u0, u_b, u_g):
/// eps^2 (hess_w u, hess_w v) + (grad_w u, grad_w v) = <<f, I^NC v>>.
inline SparseSystem assemble_primal_wg(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                       double eps, const ScalarField& f, const DofMaps& maps,
                                       const SolveOptions& opts = {}) {
  const WgDofMap& wg = maps.wg;
  SparseSystem sys;
  sys.symmetric = true;
  sys.rhs = Eigen::VectorXd::Zero(wg.total);
  std::vector<Eigen::Triplet<double>> trips;
  for (int t = 0; t < mesh.n_cells(); ++t) {
    PrimalElement el = primal_element(mesh, t, cfg, eps, f, maps, opts);
    int n = static_cast<int>(el.idx.size());
    for (int i = 0; i < n; ++i) {
      if (el.idx[i] < 0) continue;
      sys.rhs[el.idx[i]] += el.b[i];
      for (int j = 0; j < n; ++j)
        if (el.idx[j] >= 0) trips.emplace_back(el.idx[i], el.idx[j], el.K(i, j));
    }
  }
  sys.A.resize(wg.total, wg.total);
  sys.A.setFromTriplets(trips.begin(), trips.end());
  if (wg.n0 > 0)
    for (int c = 0; c < wg.n_cells; ++c) sys.entity_blocks.push_back({wg.u0_offset(c), wg.n0});
  for (int i = 0; i < wg.n_ifaces; ++i)
    sys.entity_blocks.push_back({wg.ub_offset(i), wg.nb + wg.ng});
  return sys;
}

/// Symmetric indefinite block system of the stabilization-free WG method over
/// (sigma, u0, u_b).
inline SparseSystem assemble_saddle_wg(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                       double eps, const ScalarField& f, const DofMaps& maps,
                                       const SolveOptions& opts = {}) {
  const WgDofMap& wg = maps.wg;
  int n = maps.sigma.total + wg.n_cells * wg.n0 + wg.n_ifaces * wg.nb;
  SparseSystem sys;
  sys.symmetric = true;
  sys.rhs = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> trips;
  for (int t = 0; t < mesh.n_cells(); ++t) {
    SaddleElement el = saddle_element(mesh, t, cfg, eps, f, maps, opts);
    int m = static_cast<int>(el.gidx.size());
    for (int i = 0; i < m; ++i) {
      if (el.gidx[i] < 0) continue;
      sys.rhs[el.gidx[i]] += el.b[i];
      for (int j = 0; j < m; ++j)
        if (el.gidx[j] >= 0) trips.emplace_back(el.gidx[i], el.gidx[j], el.A(i, j));
    }
  }
  sys.A.resize(n, n);
  sys.A.setFromTriplets(trips.begin(), trips.end());
  return sys;
}

/// Symmetric indefinite 4-field system of the first-order mixed FEM over
/// (sigma, phi, p, u). Requires m >= 2 so that V^div carries DoFs.
inline SparseSystem assemble_first_order(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                         double eps, const ScalarField& f, const DofMaps& maps,
                                         const SolveOptions& opts = {}) {
  if (cfg.m < 2) throw std::invalid_argument("assemble_first_order: m >= 2 required");
  const SigmaDofMap& sm = maps.sigma;
  const VdivDofMap& vm = maps.vdiv;
  int off_phi = sm.total;
  int off_p = off_phi + vm.total;
  int off_u = off_p + maps.broken_v.total;
  int n = off_u + maps.broken_scalar.total;
  SparseSystem sys;
  sys.symmetric = true;
  sys.rhs = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> trips;
  int qdeg = default_data_degree(cfg, opts);
  auto rule = triangle_quadrature(qdeg);
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellOperators ops(mesh, t, cfg);
    const Eigen::MatrixXd& dualS = ops.sigma_basis().dual;
    const Eigen::MatrixXd& dualV = ops.v_basis().dual;
    int dv = ops.v_basis().dim();
    int n0 = ops.n0();

    Eigen::MatrixXd Mss = dualS.transpose() * ops.mass_sigma() * dualS;
    Eigen::MatrixXd Dsig = ops.mass_v() * (ops.sigma_basis().div_in_v * dualS);  // dv x ns
    Eigen::MatrixXd Mphip = ops.mass_v() * dualV;                                // dv x nphi
    Eigen::MatrixXd G = ops.scalar_values() * ops.frame().quad.weights.asDiagonal() *
                        ops.div_v_values().transpose();  // n0 x dv
    Eigen::MatrixXd Dphi = G * dualV;                    // n0 x nphi
    const Eigen::MatrixXd& Mp = ops.mass_v();

    auto sidx = sigma_global_indices(mesh, sm, t);
    auto phidx = vdiv_global_indices(mesh, vm, t);
    for (int& g : phidx) g += off_phi;
    int ns = static_cast<int>(sidx.size()), nphi = static_cast<int>(phidx.size());
    std::vector<int> pidx(dv), uidx(n0);
    for (int j = 0; j < dv; ++j) pidx[j] = off_p + maps.broken_v.offset(t) + j;
    for (int j = 0; j < n0; ++j) uidx[j] = off_u + maps.broken_scalar.offset(t) + j;

    for (int i = 0; i < ns; ++i)
      for (int j = 0; j < ns; ++j) trips.emplace_back(sidx[i], sidx[j], Mss(i, j) / (eps * eps));
    for (int i = 0; i < ns; ++i)
      for (int j = 0; j < dv; ++j) {
        trips.emplace_back(sidx[i], pidx[j], Dsig(j, i));
        trips.emplace_back(pidx[j], sidx[i], Dsig(j, i));
      }
    for (int i = 0; i < nphi; ++i)
      for (int j = 0; j < dv; ++j) {
        trips.emplace_back(phidx[i], pidx[j], -Mphip(j, i));
        trips.emplace_back(pidx[j], phidx[i], -Mphip(j, i));
      }
    for (int i = 0; i < nphi; ++i)
      for (int j = 0; j < n0; ++j) {
        trips.emplace_back(phidx[i], uidx[j], -Dphi(j, i));
        trips.emplace_back(uidx[j], phidx[i], -Dphi(j, i));
      }
    for (int i = 0; i < dv; ++i)
      for (int j = 0; j < dv; ++j) trips.emplace_back(pidx[i], pidx[j], -Mp(i, j));

    auto mq = map_to_triangle(rule, ops.frame().verts[0], ops.frame().verts[1],
                              ops.frame().verts[2]);
    auto exps = monomial_exponents(cfg.m - 2);
    for (int q = 0; q < mq.size(); ++q) {
      Vec2 xh = ops.frame().local(mq.points.col(q));
      double fq = f(mq.points.col(q));
      for (int j = 0; j < n0; ++j)
        sys.rhs[uidx[j]] -=
            mq.weights[q] * fq * std::pow(xh.x(), exps[j][0]) * std::pow(xh.y(), exps[j][1]);
    }
  }
  sys.A.resize(n, n);
  sys.A.setFromTriplets(trips.begin(), trips.end());
  return sys;
}

// ---------------------------------------------------------------------------
// Condensed solves (static condensation of cell-local unknowns)
// ---------------------------------------------------------------------------

/// Primal path with the u0 block eliminated element-wise. Agrees with the
/// uncondensed solve to solver tolerance.
inline Eigen::VectorXd solve_primal_condensed(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                              double eps, const ScalarField& f,
                                              const DofMaps& maps, const SolveOptions& opts,
                                              double* residual_out) {
  const WgDofMap& wg = maps.wg;
  int shift = wg.n_cells * wg.n0;
  int n_red = wg.total - shift;
  SparseSystem red;
  red.symmetric = true;
  red.rhs = Eigen::VectorXd::Zero(n_red);
  std::vector<Eigen::Triplet<double>> trips;
  for (int t = 0; t < mesh.n_cells(); ++t) {
    PrimalElement el = primal_element(mesh, t, cfg, eps, f, maps, opts);
    int n = static_cast<int>(el.idx.size());
    int n0 = el.n0;
    Eigen::MatrixXd Kff = el.K.bottomRightCorner(n - n0, n - n0);
    Eigen::VectorXd bf = el.b.tail(n - n0);
    if (n0 > 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(el.K.topLeftCorner(n0, n0));
      Eigen::MatrixXd W = llt.solve(el.K.topRightCorner(n0, n - n0));
      Kff -= el.K.topRightCorner(n0, n - n0).transpose() * W;
      bf -= W.transpose() * el.b.head(n0);
    }
    for (int i = 0; i < n - n0; ++i) {
      int gi = el.idx[n0 + i];
      if (gi < 0) continue;
      red.rhs[gi - shift] += bf[i];
      for (int j = 0; j < n - n0; ++j) {
        int gj = el.idx[n0 + j];
        if (gj >= 0) trips.emplace_back(gi - shift, gj - shift, Kff(i, j));
      }
    }
  }
  red.A.resize(n_red, n_red);
  red.A.setFromTriplets(trips.begin(), trips.end());
  for (int i = 0; i < wg.n_ifaces; ++i)
    red.entity_blocks.push_back({wg.ub_offset(i) - shift, wg.nb + wg.ng});
  Eigen::VectorXd xf = solve_spd(red, residual_out);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(wg.total);
  x.tail(n_red) = xf;
  if (wg.n0 > 0) {
    for (int t = 0; t < mesh.n_cells(); ++t) {
      PrimalElement el = primal_element(mesh, t, cfg, eps, f, maps, opts);
      int n = static_cast<int>(el.idx.size());
      int n0 = el.n0;
      Eigen::VectorXd xloc = Eigen::VectorXd::Zero(n - n0);
      for (int i = 0; i < n - n0; ++i)
        if (el.idx[n0 + i] >= 0) xloc[i] = x[el.idx[n0 + i]];
      Eigen::LLT<Eigen::MatrixXd> llt(el.K.topLeftCorner(n0, n0));
      x.segment(wg.u0_offset(t), n0) =
          llt.solve(el.b.head(n0) - el.K.topRightCorner(n0, n - n0) * xloc);
    }
  }
  return x;
}

/// Saddle path with cell-interior sigma DoFs and u0 eliminated element-wise.
inline Eigen::VectorXd solve_saddle_condensed(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                              double eps, const ScalarField& f,
                                              const DofMaps& maps, const SolveOptions& opts,
                                              double* residual_out) {
  const WgDofMap& wg = maps.wg;
  const SigmaDofMap& sm = maps.sigma;
  int n_full = sm.total + wg.n_cells * wg.n0 + wg.n_ifaces * wg.nb;
  int nsf = 3 * sm.per_face;  // retained sigma dofs per cell

  // Reduced numbering: sigma face dofs keep their ids; ub blocks follow.
  int n_sigma_faces = sm.n_faces * sm.per_face;
  int n_red = n_sigma_faces + wg.n_ifaces * wg.nb;
  auto reduce_index = [&](int g) -> int {
    if (g < 0) return -1;
    if (g < n_sigma_faces) return g;                       // sigma face dof
    if (g < sm.total) return -2;                           // sigma interior: eliminated
    int u = g - sm.total;
    if (u < wg.n_cells * wg.n0) return -2;                 // u0: eliminated
    return n_sigma_faces + (u - wg.n_cells * wg.n0);       // ub
  };

  SparseSystem red;
  red.symmetric = true;
  red.rhs = Eigen::VectorXd::Zero(n_red);
  std::vector<Eigen::Triplet<double>> trips;
  for (int t = 0; t < mesh.n_cells(); ++t) {
    SaddleElement el = saddle_element(mesh, t, cfg, eps, f, maps, opts);
    int n = static_cast<int>(el.gidx.size());
    // partition: eliminated = interior sigma + u0, retained = face sigma + ub
    std::vector<int> elim, keep;
    for (int i = 0; i < n; ++i) {
      bool e = (i >= nsf && i < el.ns) || (i >= el.ns && i < el.ns + el.n0);
      (e ? elim : keep).push_back(i);
    }
    int ne = static_cast<int>(elim.size()), nk = static_cast<int>(keep.size());
    Eigen::MatrixXd Kee(ne, ne), Kek(ne, nk), Kkk(nk, nk);
    Eigen::VectorXd be(ne), bk(nk);
    for (int i = 0; i < ne; ++i) {
      be[i] = el.b[elim[i]];
      for (int j = 0; j < ne; ++j) Kee(i, j) = el.A(elim[i], elim[j]);
      for (int j = 0; j < nk; ++j) Kek(i, j) = el.A(elim[i], keep[j]);
    }
    for (int i = 0; i < nk; ++i) {
      bk[i] = el.b[keep[i]];
      for (int j = 0; j < nk; ++j) Kkk(i, j) = el.A(keep[i], keep[j]);
    }
    if (ne > 0) {
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(Kee);
      Eigen::MatrixXd W = lu.solve(Kek);
      Kkk -= Kek.transpose() * W;
      bk -= W.transpose() * be;
    }
    for (int i = 0; i < nk; ++i) {
      int gi = reduce_index(el.gidx[keep[i]]);
      if (gi < 0) continue;
      red.rhs[gi] += bk[i];
      for (int j = 0; j < nk; ++j) {
        int gj = reduce_index(el.gidx[keep[j]]);
        if (gj >= 0) trips.emplace_back(gi, gj, Kkk(i, j));
      }
    }
  }
  red.A.resize(n_red, n_red);
  red.A.setFromTriplets(trips.begin(), trips.end());
  Eigen::VectorXd xr = solve_indefinite(red, residual_out);

  // Expand to the full saddle vector and recover eliminated unknowns per cell.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n_full);
  x.head(n_sigma_faces) = xr.head(n_sigma_faces);
  for (int i = 0; i < wg.n_ifaces * wg.nb; ++i)
    x[sm.total + wg.n_cells * wg.n0 + i] = xr[n_sigma_faces + i];
  for (int t = 0; t < mesh.n_cells(); ++t) {
    SaddleElement el = saddle_element(mesh, t, cfg, eps, f, maps, opts);
    int n = static_cast<int>(el.gidx.size());
    std::vector<int> elim, keep;
    for (int i = 0; i < n; ++i) {
      bool e = (i >= nsf && i < el.ns) || (i >= el.ns && i < el.ns + el.n0);
      (e ? elim : keep).push_back(i);
    }
    int ne = static_cast<int>(elim.size()), nk = static_cast<int>(keep.size());
    if (ne == 0) continue;
    Eigen::MatrixXd Kee(ne, ne), Kek(ne, nk);
    Eigen::VectorXd be(ne), xk(nk);
    for (int i = 0; i < ne; ++i) {
      be[i] = el.b[elim[i]];
      for (int j = 0; j < ne; ++j) Kee(i, j) = el.A(elim[i], elim[j]);
      for (int j = 0; j < nk; ++j) Kek(i, j) = el.A(elim[i], keep[j]);
    }
    for (int j = 0; j < nk; ++j) {
      int g = el.gidx[keep[j]];
      xk[j] = g >= 0 ? x[g] : 0.0;
    }
    Eigen::VectorXd xe = Eigen::PartialPivLU<Eigen::MatrixXd>(Kee).solve(be - Kek * xk);
    for (int i = 0; i < ne; ++i) x[el.gidx[elim[i]]] = xe[i];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Sigma recovery and scheme drivers
// ---------------------------------------------------------------------------

struct SigmaRecovery {
  CoefficientField field;    // global Sigma^div DoFs
  Eigen::MatrixXd cellwise;  // n_cells x dim Sigma spanning coords
  double max_rel_jump = 0.0;
};

/// sigma_h = eps^2 hess_w(u_h), emitted as a global Sigma^div field after
/// verifying that the face DoFs are single-valued.
inline SigmaRecovery recover_sigma(const SimplicialMesh& mesh, const SpaceConfig& cfg, double eps,
                                   const Eigen::VectorXd& u_full, const DofMaps& maps,
                                   double jump_tol = 1e-9) {
  const SigmaDofMap& sm = maps.sigma;
  SigmaRecovery rec;
  rec.field.tag = SpaceTag::SigmaDiv;
  rec.field.values = Eigen::VectorXd::Zero(sm.total);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(sm.total);
  Eigen::VectorXd first = Eigen::VectorXd::Zero(sm.total);
  rec.cellwise.resize(mesh.n_cells(), sigma_space_dim(cfg));
  double max_abs = 0.0, max_diff = 0.0;
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellOperators ops(mesh, t, cfg);
    Eigen::VectorXd ul = gather_local(wg_global_indices(mesh, maps.wg, t), u_full);
    Eigen::VectorXd scoef = eps * eps * ops.weak_hessian_map() * ul;
    rec.cellwise.row(t) = scoef.transpose();
    Eigen::VectorXd dofvals = ops.sigma_basis().dof_matrix * scoef;
    auto sidx = sigma_global_indices(mesh, sm, t);
    for (size_t i = 0; i < sidx.size(); ++i) {
      double v = dofvals[static_cast<int>(i)];
      max_abs = std::max(max_abs, std::abs(v));
      if (counts[sidx[i]] == 0.0) {
        first[sidx[i]] = v;
        rec.field.values[sidx[i]] = v;
        counts[sidx[i]] = 1.0;
      } else {
        max_diff = std::max(max_diff, std::abs(v - first[sidx[i]]));
        rec.field.values[sidx[i]] = 0.5 * (first[sidx[i]] + v);
      }
    }
  }
  rec.max_rel_jump = max_abs > 0.0 ? max_diff / max_abs : 0.0;
  if (rec.max_rel_jump > jump_tol)
    throw std::runtime_error("recover_sigma: normal-trace jump exceeds tolerance");
  return rec;
}

/// Spanning-coordinate representation of a global Sigma^div field.
inline Eigen::MatrixXd sigma_cellwise_from_field(const SimplicialMesh& mesh,
                                                 const SpaceConfig& cfg, const DofMaps& maps,
                                                 const CoefficientField& sigma) {
  Eigen::MatrixXd out(mesh.n_cells(), sigma_space_dim(cfg));
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellFrame fr = make_cell_frame(mesh, t, 2 * cfg.k + 4, 2 * cfg.k + 4);
    VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
    TensorElement sel = build_sigma_local_basis(fr, cfg, vel);
    auto sidx = sigma_global_indices(mesh, maps.sigma, t);
    Eigen::VectorXd dofs(static_cast<int>(sidx.size()));
    for (size_t i = 0; i < sidx.size(); ++i) dofs[static_cast<int>(i)] = sigma.values[sidx[i]];
    out.row(t) = (sel.dual * dofs).transpose();
  }
  return out;
}

/// Solves one of the three equivalent discretizations.
inline SchemeSolution solve_scheme(const SimplicialMesh& mesh, const SpaceConfig& cfg, double eps,
                                   const ScalarField& f, SchemeKind kind,
                                   const SolveOptions& opts = {}) {
  DofMaps maps = build_global_maps(mesh, cfg);
  SchemeSolution sol;
  sol.scheme = kind;
  sol.eps = eps;
  sol.cfg = cfg;
  sol.u.tag = SpaceTag::WgUnknowns;

  if (kind == SchemeKind::PrimalWg) {
    Eigen::VectorXd x;
    if (opts.condense) {
      x = solve_primal_condensed(mesh, cfg, eps, f, maps, opts, &sol.residual);
    } else {
      SparseSystem sys = assemble_primal_wg(mesh, cfg, eps, f, maps, opts);
      x = solve_spd(sys, &sol.residual);
    }
    sol.u.values = x;
    SigmaRecovery rec = recover_sigma(mesh, cfg, eps, x, maps,
                                      opts.hook.cell >= 0 ? 1e30 : 1e-9);
    sol.sigma = rec.field;
    sol.sigma_cellwise = rec.cellwise;
    sol.sigma_face_jump = rec.max_rel_jump;
    return sol;
  }

  if (kind == SchemeKind::SaddleWg) {
    Eigen::VectorXd x;
    if (opts.condense) {
      x = solve_saddle_condensed(mesh, cfg, eps, f, maps, opts, &sol.residual);
    } else {
      SparseSystem sys = assemble_saddle_wg(mesh, cfg, eps, f, maps, opts);
      x = solve_indefinite(sys, &sol.residual);
    }
    int n_sigma = maps.sigma.total;
    const WgDofMap& wg = maps.wg;
    sol.sigma.tag = SpaceTag::SigmaDiv;
    sol.sigma.values = x.head(n_sigma);
    sol.u.values = Eigen::VectorXd::Zero(wg.total);
    sol.u.values.head(wg.n_cells * wg.n0) = x.segment(n_sigma, wg.n_cells * wg.n0);
    for (int i = 0; i < wg.n_ifaces; ++i)
      sol.u.values.segment(wg.ub_offset(i), wg.nb) =
          x.segment(n_sigma + wg.n_cells * wg.n0 + i * wg.nb, wg.nb);
    sol.sigma_cellwise = sigma_cellwise_from_field(mesh, cfg, maps, sol.sigma);
    return sol;
  }

  SparseSystem sys = assemble_first_order(mesh, cfg, eps, f, maps, opts);
  Eigen::VectorXd x = solve_indefinite(sys, &sol.residual);
  int off_phi = maps.sigma.total;
  int off_p = off_phi + maps.vdiv.total;
  int off_u = off_p + maps.broken_v.total;
  sol.sigma.tag = SpaceTag::SigmaDiv;
  sol.sigma.values = x.head(maps.sigma.total);
  sol.phi.tag = SpaceTag::VDiv;
  sol.phi.values = x.segment(off_phi, maps.vdiv.total);
  sol.p.tag = SpaceTag::BrokenV;
  sol.p.values = x.segment(off_p, maps.broken_v.total);
  sol.u.tag = SpaceTag::BrokenScalar;
  sol.u.values = x.segment(off_u, maps.broken_scalar.total);
  sol.sigma_cellwise = sigma_cellwise_from_field(mesh, cfg, maps, sol.sigma);
  return sol;
}

}  // namespace ssp4
