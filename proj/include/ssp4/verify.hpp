#pragma once

#include "ssp4/schemes.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace ssp4 {

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

namespace example1 {
inline double u(const Vec2& p) {
  double sx = std::sin(M_PI * p.x()), sy = std::sin(M_PI * p.y());
  return sx * sx * sy * sy;
}
inline Vec2 grad_u(const Vec2& p) {
  double sx = std::sin(M_PI * p.x()), sy = std::sin(M_PI * p.y());
  return Vec2(M_PI * std::sin(2 * M_PI * p.x()) * sy * sy,
              M_PI * std::sin(2 * M_PI * p.y()) * sx * sx);
}
inline Mat2 hess_u(const Vec2& p) {
  double c2x = std::cos(2 * M_PI * p.x()), c2y = std::cos(2 * M_PI * p.y());
  double s2x = std::sin(2 * M_PI * p.x()), s2y = std::sin(2 * M_PI * p.y());
  double sx = std::sin(M_PI * p.x()), sy = std::sin(M_PI * p.y());
  Mat2 h;
  h(0, 0) = 2 * M_PI * M_PI * c2x * sy * sy;
  h(0, 1) = h(1, 0) = M_PI * M_PI * s2x * s2y;
  h(1, 1) = 2 * M_PI * M_PI * c2y * sx * sx;
  return h;
}
inline double lap_u(const Vec2& p) { return hess_u(p).trace(); }
inline double bilap_u(const Vec2& p) {
  double c2x = std::cos(2 * M_PI * p.x()), c2y = std::cos(2 * M_PI * p.y());
  double pi4 = M_PI * M_PI * M_PI * M_PI;
  return 4.0 * pi4 * (4.0 * c2x * c2y - c2x - c2y);
}
}  // namespace example1

namespace example3 {
inline double ubar(const Vec2& p) { return std::sin(M_PI * p.x()) * std::sin(M_PI * p.y()); }
inline Vec2 grad_ubar(const Vec2& p) {
  return M_PI * Vec2(std::cos(M_PI * p.x()) * std::sin(M_PI * p.y()),
                     std::sin(M_PI * p.x()) * std::cos(M_PI * p.y()));
}
inline double f(const Vec2& p) { return 2.0 * M_PI * M_PI * ubar(p); }
}  // namespace example3

/// A manufactured test problem: example1 has a closed-form solution of the
/// full problem, example3 prescribes the limit (Poisson) solution and an
/// eps-independent right-hand side that induces boundary layers.
struct ManufacturedCase {
  enum class Id { Example1, Example3 };
  Id id = Id::Example1;

  static ManufacturedCase make_example1() { return {Id::Example1}; }
  static ManufacturedCase make_example3() { return {Id::Example3}; }
  static std::optional<ManufacturedCase> from_name(const std::string& s) {
    if (s == "example1") return make_example1();
    if (s == "example3") return make_example3();
    return std::nullopt;
  }
  const char* name() const { return id == Id::Example1 ? "example1" : "example3"; }

  bool has_exact_solution() const { return id == Id::Example1; }

  ScalarField forcing(double eps) const {
    if (id == Id::Example1)
      return [eps](const Vec2& x) {
        return eps * eps * example1::bilap_u(x) - example1::lap_u(x);
      };
    return [](const Vec2& x) { return example3::f(x); };
  }

  /// grad u (example1) or grad ubar (example3).
  VectorField reference_gradient() const {
    if (id == Id::Example1) return [](const Vec2& x) { return example1::grad_u(x); };
    return [](const Vec2& x) { return example3::grad_ubar(x); };
  }
};

// ---------------------------------------------------------------------------
// Error norms
// ---------------------------------------------------------------------------

enum class NormId { Err1, ErrSigma, ErrU, Err3 };

inline const char* norm_name(NormId n) {
  switch (n) {
    case NormId::Err1: return "err1";
    case NormId::ErrSigma: return "errsigma";
    case NormId::ErrU: return "erru";
    case NormId::Err3: return "err3";
  }
  return "?";
}

inline std::vector<NormId> default_norms(ManufacturedCase::Id id) {
  if (id == ManufacturedCase::Id::Example1)
    return {NormId::Err1, NormId::ErrSigma, NormId::ErrU};
  return {NormId::Err3};
}

/// Cellwise representation of a discrete solution: the weak gradient field
/// (V coordinates per cell) and the stress field (Sigma coordinates).
struct DiscreteState {
  Eigen::MatrixXd wcoef;  // n_cells x dim V
  Eigen::MatrixXd sigma;  // n_cells x dim Sigma
};

inline DiscreteState state_from_solution(const SimplicialMesh& mesh, const SchemeSolution& sol) {
  DiscreteState st;
  DofMaps maps = build_global_maps(mesh, sol.cfg);
  st.sigma = sol.sigma_cellwise;
  st.wcoef.resize(mesh.n_cells(), v_space_dim(sol.cfg.k, sol.cfg.m));
  if (sol.scheme == SchemeKind::FirstOrder) {
    for (int t = 0; t < mesh.n_cells(); ++t)
      st.wcoef.row(t) =
          sol.p.values.segment(maps.broken_v.offset(t), maps.broken_v.per_cell).transpose();
    return st;
  }
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellOperators ops(mesh, t, sol.cfg);
    Eigen::VectorXd ul = gather_local(wg_global_indices(mesh, maps.wg, t), sol.u.values);
    st.wcoef.row(t) = (ops.weak_gradient_map() * ul.head(ops.n_grad_unknowns())).transpose();
  }
  return st;
}

/// WG data over all faces (boundary rows included); used to build states from
/// exact samples where no boundary condition is implied.
struct WgDataArrays {
  Eigen::MatrixXd u0;  // n_cells x n0
  Eigen::MatrixXd ub;  // n_faces x nb
  Eigen::MatrixXd ug;  // n_faces x ng
};

inline DiscreteState state_from_wg_arrays(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                          const WgDataArrays& data, double eps) {
  DiscreteState st;
  st.wcoef.resize(mesh.n_cells(), v_space_dim(cfg.k, cfg.m));
  st.sigma.resize(mesh.n_cells(), sigma_space_dim(cfg));
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellOperators ops(mesh, t, cfg);
    const auto& cf = mesh.cell_faces(t);
    Eigen::VectorXd v0 = data.u0.cols() > 0 ? Eigen::VectorXd(data.u0.row(t).transpose())
                                            : Eigen::VectorXd();
    std::array<Eigen::VectorXd, 3> vb, vg;
    for (int e = 0; e < 3; ++e) {
      vb[e] = data.ub.row(cf[e].face).transpose();
      vg[e] = data.ug.row(cf[e].face).transpose();
    }
    st.wcoef.row(t) = weak_gradient(ops, v0, vb).transpose();
    st.sigma.row(t) = (eps * eps * weak_hessian(ops, v0, vb, vg)).transpose();
  }
  return st;
}

struct ErrorReport {
  double eps = 1.0;
  int n = 0;
  SpaceConfig cfg;
  std::optional<double> err1, err_sigma, err_u, err3;
  // components
  double h2_seminorm = 0.0;       // |||u - u_h|||_{2,h}
  double l2_grad_diff = 0.0;      // |grad u - grad_w u_h|_0
  double l2_proj_grad_diff = 0.0; // |Q grad u - grad_w u_h|_0
  double l2_sigma_diff = 0.0;     // |sigma - sigma_h|_0
  double h1_proj_diff = 0.0;      // |Q grad - grad_w u_h|_{1,h}

  std::optional<double> value(NormId id) const {
    switch (id) {
      case NormId::Err1: return err1;
      case NormId::ErrSigma: return err_sigma;
      case NormId::ErrU: return err_u;
      case NormId::Err3: return err3;
    }
    return std::nullopt;
  }
};

/// Exact references to measure against: a gradient and, when available, the
/// Hessian of the exact solution (sigma = eps^2 hess).
struct ReferenceFunctions {
  VectorField grad;
  std::function<Mat2(const Vec2&)> hess;
  bool has_hess = false;
};

/// All error ingredients in one sweep over cells plus a face sweep for the
/// jump terms of the discrete H2 seminorm.
inline ErrorReport error_norms_ref(const SimplicialMesh& mesh, const ReferenceFunctions& ref,
                                   const SpaceConfig& cfg, const DiscreteState& state, double eps,
                                   int quad_degree = -1) {
  ErrorReport rep;
  rep.eps = eps;
  rep.cfg = cfg;
  int qd = quad_degree > 0 ? quad_degree : 2 * cfg.k + 8;
  auto rule = triangle_quadrature(qd);
  const VectorField& gref = ref.grad;
  bool ex1 = ref.has_hess;

  int dv = v_space_dim(cfg.k, cfg.m);
  int ds = sigma_space_dim(cfg);
  double h1_acc = 0.0, jump_acc = 0.0, l2_grad = 0.0, l2_proj = 0.0, l2_sig = 0.0;
  std::vector<std::array<Eigen::Matrix2Xd, 3>> gface(mesh.n_cells());

  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellOperators ops(mesh, t, cfg);
    Eigen::VectorXd w = state.wcoef.row(t).transpose();
    Eigen::VectorXd qg = project_to_v(ops, gref, qd);
    Eigen::VectorXd g = qg - w;
    h1_acc += g.dot(ops.stiff_v() * g);
    l2_proj += g.dot(ops.mass_v() * g);

    auto mq = map_to_triangle(rule, ops.frame().verts[0], ops.frame().verts[1],
                              ops.frame().verts[2]);
    Eigen::VectorXd scoef = state.sigma.row(t).transpose();
    for (int q = 0; q < mq.size(); ++q) {
      Vec2 x = mq.points.col(q), xh = ops.frame().local(x);
      Vec2 wh = Vec2::Zero();
      for (int i = 0; i < dv; ++i) wh += w[i] * ops.v_basis().members[i].eval(xh);
      l2_grad += mq.weights[q] * (gref(x) - wh).squaredNorm();
      if (ex1) {
        Mat2 sh = Mat2::Zero();
        for (int i = 0; i < ds; ++i) sh += scoef[i] * ops.sigma_basis().members[i].eval(xh);
        Mat2 sig = eps * eps * ref.hess(x);
        l2_sig += mq.weights[q] * (sig - sh).squaredNorm();
      }
    }
    for (int e = 0; e < 3; ++e) {
      const CellFaceFrame& ff = ops.frame().faces[e];
      gface[t][e].resize(2, ff.quad.size());
      for (int q = 0; q < ff.quad.size(); ++q) {
        Vec2 xh = ops.frame().local(ff.quad.points.col(q));
        Vec2 val = Vec2::Zero();
        for (int i = 0; i < dv; ++i) val += g[i] * ops.v_basis().members[i].eval(xh);
        gface[t][e].col(q) = val;
      }
    }
  }

  // jump terms over all faces (trace on boundary faces)
  std::vector<std::array<int, 2>> side_cell(mesh.n_faces(), {-1, -1});
  std::vector<std::array<int, 2>> side_edge(mesh.n_faces(), {-1, -1});
  for (int t = 0; t < mesh.n_cells(); ++t)
    for (int e = 0; e < 3; ++e) {
      const auto& cf = mesh.cell_faces(t)[e];
      int s = cf.sign > 0 ? 0 : 1;
      side_cell[cf.face][s] = t;
      side_edge[cf.face][s] = e;
    }
  for (int fid = 0; fid < mesh.n_faces(); ++fid) {
    const Face& F = mesh.face(fid);
    int nq = side_cell[fid][0] >= 0 ? gface[side_cell[fid][0]][side_edge[fid][0]].cols()
                                    : gface[side_cell[fid][1]][side_edge[fid][1]].cols();
    double acc = 0.0;
    // both sides sampled the same mapped edge rule, in the same order
    Eigen::VectorXd wts;
    {
      auto erule = edge_quadrature(2 * cfg.k + 4);
      auto mq = map_to_edge(erule, mesh.vertex(F.v0), mesh.vertex(F.v1));
      wts = mq.weights;
    }
    for (int q = 0; q < nq; ++q) {
      Vec2 jump = Vec2::Zero();
      if (side_cell[fid][0] >= 0) jump += gface[side_cell[fid][0]][side_edge[fid][0]].col(q);
      if (side_cell[fid][1] >= 0) jump -= gface[side_cell[fid][1]][side_edge[fid][1]].col(q);
      acc += wts[q] * jump.squaredNorm();
    }
    jump_acc += acc / F.length;
  }

  rep.h2_seminorm = std::sqrt(h1_acc + jump_acc);
  rep.h1_proj_diff = std::sqrt(h1_acc);
  rep.l2_grad_diff = std::sqrt(l2_grad);
  rep.l2_proj_grad_diff = std::sqrt(l2_proj);
  rep.l2_sigma_diff = std::sqrt(l2_sig);

  double eh2 = eps * rep.h2_seminorm;
  if (ex1) {
    rep.err_sigma = rep.l2_sigma_diff / eps;
    rep.err1 = *rep.err_sigma + std::sqrt(eh2 * eh2 + l2_grad);
    rep.err_u = std::sqrt(eh2 * eh2 + l2_proj);
  } else {
    rep.err3 = eps * rep.h1_proj_diff + rep.l2_grad_diff;
  }
  return rep;
}

inline ReferenceFunctions case_references(const ManufacturedCase& cse) {
  ReferenceFunctions ref;
  ref.grad = cse.reference_gradient();
  if (cse.id == ManufacturedCase::Id::Example1) {
    ref.hess = [](const Vec2& x) { return example1::hess_u(x); };
    ref.has_hess = true;
  }
  return ref;
}

inline ErrorReport error_norms(const SimplicialMesh& mesh, const ManufacturedCase& cse,
                               const SpaceConfig& cfg, const DiscreteState& state, double eps,
                               int quad_degree = -1) {
  return error_norms_ref(mesh, case_references(cse), cfg, state, eps, quad_degree);
}

/// |||u - u_h|||_{2,h} alone, for a given exact gradient.
inline double discrete_h2_seminorm_diff(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                        const VectorField& grad_exact, const DiscreteState& state,
                                        int quad_degree = -1) {
  int qd = quad_degree > 0 ? quad_degree : 2 * cfg.k + 8;
  int dv = v_space_dim(cfg.k, cfg.m);
  double h1_acc = 0.0, jump_acc = 0.0;
  std::vector<std::array<Eigen::Matrix2Xd, 3>> gface(mesh.n_cells());
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellOperators ops(mesh, t, cfg);
    Eigen::VectorXd w = state.wcoef.row(t).transpose();
    Eigen::VectorXd g = project_to_v(ops, grad_exact, qd) - w;
    h1_acc += g.dot(ops.stiff_v() * g);
    for (int e = 0; e < 3; ++e) {
      const CellFaceFrame& ff = ops.frame().faces[e];
      gface[t][e].resize(2, ff.quad.size());
      for (int q = 0; q < ff.quad.size(); ++q) {
        Vec2 xh = ops.frame().local(ff.quad.points.col(q));
        Vec2 val = Vec2::Zero();
        for (int i = 0; i < dv; ++i) val += g[i] * ops.v_basis().members[i].eval(xh);
        gface[t][e].col(q) = val;
      }
    }
  }
  std::vector<std::array<int, 2>> side_cell(mesh.n_faces(), {-1, -1});
  std::vector<std::array<int, 2>> side_edge(mesh.n_faces(), {-1, -1});
  for (int t = 0; t < mesh.n_cells(); ++t)
    for (int e = 0; e < 3; ++e) {
      const auto& cf = mesh.cell_faces(t)[e];
      int s = cf.sign > 0 ? 0 : 1;
      side_cell[cf.face][s] = t;
      side_edge[cf.face][s] = e;
    }
  auto erule = edge_quadrature(2 * cfg.k + 4);
  for (int fid = 0; fid < mesh.n_faces(); ++fid) {
    const Face& F = mesh.face(fid);
    auto mq = map_to_edge(erule, mesh.vertex(F.v0), mesh.vertex(F.v1));
    double acc = 0.0;
    for (int q = 0; q < mq.size(); ++q) {
      Vec2 jump = Vec2::Zero();
      if (side_cell[fid][0] >= 0) jump += gface[side_cell[fid][0]][side_edge[fid][0]].col(q);
      if (side_cell[fid][1] >= 0) jump -= gface[side_cell[fid][1]][side_edge[fid][1]].col(q);
      acc += mq.weights[q] * jump.squaredNorm();
    }
    jump_acc += acc / F.length;
  }
  return std::sqrt(h1_acc + jump_acc);
}

// ---------------------------------------------------------------------------
// Convergence studies
// ---------------------------------------------------------------------------

struct ConvergenceRow {
  int n = 0;
  double h = 0.0;
  double error = 0.0;
  double rate = 0.0;
  bool has_rate = false;
};

struct ConvergenceTable {
  ManufacturedCase::Id case_id;
  SpaceConfig cfg;
  double eps = 1.0;
  NormId norm;
  std::vector<ConvergenceRow> rows;
};

/// Solve one (eps, n) instance and measure its error norms.
inline ErrorReport run_case(const ManufacturedCase& cse, const SpaceConfig& cfg, double eps,
                            int n, SchemeKind scheme, const SolveOptions& opts = {}) {
  SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(n);
  SchemeSolution sol = solve_scheme(mesh, cfg, eps, cse.forcing(eps), scheme, opts);
  DiscreteState st = state_from_solution(mesh, sol);
  ErrorReport rep = error_norms(mesh, cse, cfg, st, eps, opts.quad_degree);
  rep.n = n;
  return rep;
}

struct StudyRequest {
  ManufacturedCase cse;
  SpaceConfig cfg;
  std::vector<double> eps;
  std::vector<int> ns;
  std::vector<NormId> norms;  // empty: defaults for the case
  SchemeKind scheme = SchemeKind::PrimalWg;
  SolveOptions opts;
  int threads = 1;
};

/// One table per (eps, norm); rates are log2 ratios between successive rows.
inline std::vector<ConvergenceTable> convergence_study(const StudyRequest& req) {
  std::vector<NormId> norms = req.norms.empty() ? default_norms(req.cse.id) : req.norms;
  int njobs = static_cast<int>(req.eps.size() * req.ns.size());
  std::vector<ErrorReport> reports(njobs);
  std::vector<std::exception_ptr> errors(njobs);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      int j = next.fetch_add(1);
      if (j >= njobs) break;
      int ei = j / static_cast<int>(req.ns.size());
      int ni = j % static_cast<int>(req.ns.size());
      try {
        reports[j] = run_case(req.cse, req.cfg, req.eps[ei], req.ns[ni], req.scheme, req.opts);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  int nthreads = std::max(1, std::min<int>(req.threads, njobs));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (int j = 0; j < njobs; ++j)
    if (errors[j]) {
      int ei = j / static_cast<int>(req.ns.size());
      int ni = j % static_cast<int>(req.ns.size());
      try {
        std::rethrow_exception(errors[j]);
      } catch (const std::exception& e) {
        throw std::runtime_error("solver failure at eps=" + std::to_string(req.eps[ei]) +
                                 ", n=" + std::to_string(req.ns[ni]) + ": " + e.what());
      }
    }

  std::vector<ConvergenceTable> tables;
  for (size_t ei = 0; ei < req.eps.size(); ++ei)
    for (NormId nid : norms) {
      ConvergenceTable tb;
      tb.case_id = req.cse.id;
      tb.cfg = req.cfg;
      tb.eps = req.eps[ei];
      tb.norm = nid;
      for (size_t ni = 0; ni < req.ns.size(); ++ni) {
        const ErrorReport& rep = reports[ei * req.ns.size() + ni];
        auto val = rep.value(nid);
        if (!val) continue;
        ConvergenceRow row;
        row.n = req.ns[ni];
        row.h = 1.0 / req.ns[ni];
        row.error = *val;
        if (!tb.rows.empty()) {
          row.rate = std::log2(tb.rows.back().error / row.error);
          row.has_rate = true;
        }
        tb.rows.push_back(row);
      }
      tables.push_back(std::move(tb));
    }
  return tables;
}

// ---------------------------------------------------------------------------
// Dense-quadrature oracles (reference path, independent of CellOperators)
// ---------------------------------------------------------------------------

inline Eigen::VectorXd weak_gradient_oracle(const CellFrame& fr, const SpaceConfig& cfg,
                                            const Eigen::VectorXd& v0,
                                            const std::array<Eigen::VectorXd, 3>& vb) {
  VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
  int dv = vel.dim();
  auto rule = triangle_quadrature(2 * cfg.k + 4);
  auto mq = map_to_triangle(rule, fr.verts[0], fr.verts[1], fr.verts[2]);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dv, dv);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dv);
  auto exps = monomial_exponents(cfg.m - 2);
  for (int q = 0; q < mq.size(); ++q) {
    Vec2 xh = fr.local(mq.points.col(q));
    Eigen::MatrixXd vals(dv, 2);
    for (int i = 0; i < dv; ++i) vals.row(i) = vel.members[i].eval(xh).transpose();
    M += mq.weights[q] * vals * vals.transpose();
    double v0x = 0.0;
    for (int j = 0; j < v0.size(); ++j)
      v0x += v0[j] * std::pow(xh.x(), exps[j][0]) * std::pow(xh.y(), exps[j][1]);
    for (int i = 0; i < dv; ++i)
      rhs[i] -= mq.weights[q] * v0x * vel.div_local[i].eval(xh) / fr.h;
  }
  auto erule = edge_quadrature(2 * cfg.k + 4);
  for (int e = 0; e < 3; ++e) {
    const CellFaceFrame& ff = fr.faces[e];
    auto emq = map_to_edge(erule, fr.verts[e], fr.verts[(e + 1) % 3]);
    // use the frame's global parameterization for vb
    for (int q = 0; q < emq.size(); ++q) {
      Vec2 x = emq.points.col(q);
      Vec2 xh = fr.local(x);
      double s = ff.basis.param(x);
      double vbx = 0.0;
      for (int j = 0; j < vb[e].size(); ++j) vbx += vb[e][j] * std::pow(s, j);
      for (int i = 0; i < dv; ++i)
        rhs[i] += ff.sign * emq.weights[q] * vbx * vel.members[i].eval(xh).dot(ff.normal);
    }
  }
  return M.colPivHouseholderQr().solve(rhs);
}

inline Eigen::VectorXd weak_hessian_oracle(const CellFrame& fr, const SpaceConfig& cfg,
                                           const Eigen::VectorXd& v0,
                                           const std::array<Eigen::VectorXd, 3>& vb,
                                           const std::array<Eigen::VectorXd, 3>& vg) {
  VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
  TensorElement sel = build_sigma_local_basis(fr, cfg, vel);
  Eigen::VectorXd w = weak_gradient_oracle(fr, cfg, v0, vb);
  int ds = sel.dim(), dv = vel.dim();
  auto rule = triangle_quadrature(2 * cfg.k + 6);
  auto mq = map_to_triangle(rule, fr.verts[0], fr.verts[1], fr.verts[2]);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(ds, ds);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ds);
  for (int q = 0; q < mq.size(); ++q) {
    Vec2 xh = fr.local(mq.points.col(q));
    std::vector<Mat2> tv(ds);
    for (int i = 0; i < ds; ++i) tv[i] = sel.members[i].eval(xh);
    for (int i = 0; i < ds; ++i)
      for (int j = 0; j <= i; ++j) {
        double v = mq.weights[q] * tv[i].cwiseProduct(tv[j]).sum();
        M(i, j) += v;
        if (i != j) M(j, i) += v;
      }
    Vec2 wx = Vec2::Zero();
    for (int i = 0; i < dv; ++i) wx += w[i] * vel.members[i].eval(xh);
    for (int i = 0; i < ds; ++i) {
      VecPoly dloc = sel.members[i].div_local();
      rhs[i] -= mq.weights[q] * wx.dot(dloc.eval(xh)) / fr.h;
    }
  }
  auto erule = edge_quadrature(2 * cfg.k + 6);
  for (int e = 0; e < 3; ++e) {
    const CellFaceFrame& ff = fr.faces[e];
    auto emq = map_to_edge(erule, fr.verts[e], fr.verts[(e + 1) % 3]);
    for (int q = 0; q < emq.size(); ++q) {
      Vec2 x = emq.points.col(q);
      Vec2 xh = fr.local(x);
      double s = ff.basis.param(x);
      Vec2 vgx = Vec2::Zero();
      for (int j = 0; j <= cfg.r; ++j)
        for (int c = 0; c < 2; ++c) vgx[c] += vg[e][2 * j + c] * std::pow(s, j);
      for (int i = 0; i < ds; ++i)
        rhs[i] += ff.sign * emq.weights[q] * vgx.dot(sel.members[i].eval(xh) * ff.normal);
    }
  }
  return M.colPivHouseholderQr().solve(rhs);
}

// ---------------------------------------------------------------------------
// Equivalence suite
// ---------------------------------------------------------------------------

inline double rel_dev(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

struct EquivalenceReport {
  double dev_primal_saddle = 0.0;
  double dev_first_order = -1.0;  // < 0 means skipped (k = 1)
  bool pass = false;
};

/// Cross-solves the three formulations and reports maximal relative
/// deviations under the equivalence mappings.
inline EquivalenceReport equivalence_suite(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                           double eps, const ScalarField& f, double tol = 1e-8,
                                           const SolveOptions& primal_opts = {}) {
  EquivalenceReport rep;
  DofMaps maps = build_global_maps(mesh, cfg);
  SchemeSolution pri = solve_scheme(mesh, cfg, eps, f, SchemeKind::PrimalWg, primal_opts);
  SchemeSolution sad = solve_scheme(mesh, cfg, eps, f, SchemeKind::SaddleWg);

  double dev = rel_dev(pri.sigma.values, sad.sigma.values);
  // u0 and ub blocks only (the saddle form has no ug unknowns)
  const WgDofMap& wg = maps.wg;
  double uscale = std::max({pri.u.values.cwiseAbs().maxCoeff(),
                            sad.u.values.cwiseAbs().maxCoeff(), 1e-300});
  double du = 0.0;
  for (int i = 0; i < wg.n_cells * wg.n0; ++i)
    du = std::max(du, std::abs(pri.u.values[i] - sad.u.values[i]));
  for (int fi = 0; fi < wg.n_ifaces; ++fi)
    for (int j = 0; j < wg.nb; ++j)
      du = std::max(du, std::abs(pri.u.values[wg.ub_offset(fi) + j] -
                                 sad.u.values[wg.ub_offset(fi) + j]));
  rep.dev_primal_saddle = std::max(dev, du / uscale);

  if (cfg.k >= 2) {
    SchemeSolution fo = solve_scheme(mesh, cfg, eps, f, SchemeKind::FirstOrder);
    double d = rel_dev(pri.sigma.values, fo.sigma.values);

    // phi = div sigma_h - grad_w u_h, mapped through the V^div DoFs
    DiscreteState pst = state_from_solution(mesh, pri);
    Eigen::VectorXd phi_pri = Eigen::VectorXd::Zero(maps.vdiv.total);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(maps.vdiv.total);
    Eigen::VectorXd p_pri = Eigen::VectorXd::Zero(maps.broken_v.total);
    for (int t = 0; t < mesh.n_cells(); ++t) {
      CellFrame fr = make_cell_frame(mesh, t, 2 * cfg.k + 4, 2 * cfg.k + 4);
      VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
      TensorElement sel = build_sigma_local_basis(fr, cfg, vel);
      Eigen::VectorXd dcoef = sel.div_in_v * pst.sigma.row(t).transpose() -
                              pst.wcoef.row(t).transpose();
      Eigen::VectorXd dofs = vel.dof_matrix * dcoef;
      auto idx = vdiv_global_indices(mesh, maps.vdiv, t);
      for (size_t i = 0; i < idx.size(); ++i) {
        if (counts[idx[i]] == 0.0) {
          phi_pri[idx[i]] = dofs[static_cast<int>(i)];
          counts[idx[i]] = 1.0;
        } else {
          phi_pri[idx[i]] = 0.5 * (phi_pri[idx[i]] + dofs[static_cast<int>(i)]);
        }
      }
      p_pri.segment(maps.broken_v.offset(t), maps.broken_v.per_cell) = pst.wcoef.row(t);
    }
    d = std::max(d, rel_dev(phi_pri, fo.phi.values));
    d = std::max(d, rel_dev(p_pri, fo.p.values));
    Eigen::VectorXd u0_pri = pri.u.values.head(wg.n_cells * wg.n0);
    d = std::max(d, rel_dev(u0_pri, fo.u.values));
    rep.dev_first_order = d;
  }

  rep.pass = rep.dev_primal_saddle < tol &&
             (rep.dev_first_order < 0 || rep.dev_first_order < tol);
  return rep;
}

/// Max relative normal-trace jump of the field div sigma_h - grad_w u_h
/// across interior faces (vanishes for k >= 2 by the conformity theorem).
inline double divsigma_grad_jump(const SimplicialMesh& mesh, const SpaceConfig& cfg,
                                 const DiscreteState& state) {
  int dv = v_space_dim(cfg.k, cfg.m);
  std::vector<std::array<Eigen::VectorXd, 3>> traces(mesh.n_cells());
  double scale = 0.0;
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellFrame fr = make_cell_frame(mesh, t, 2 * cfg.k + 4, 2 * cfg.k + 4);
    VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
    TensorElement sel = build_sigma_local_basis(fr, cfg, vel);
    Eigen::VectorXd dcoef =
        sel.div_in_v * state.sigma.row(t).transpose() - state.wcoef.row(t).transpose();
    for (int e = 0; e < 3; ++e) {
      const CellFaceFrame& ff = fr.faces[e];
      traces[t][e].resize(ff.quad.size());
      for (int q = 0; q < ff.quad.size(); ++q) {
        Vec2 xh = fr.local(ff.quad.points.col(q));
        Vec2 val = Vec2::Zero();
        for (int i = 0; i < dv; ++i) val += dcoef[i] * vel.members[i].eval(xh);
        traces[t][e][q] = val.dot(ff.normal);
        scale = std::max(scale, std::abs(traces[t][e][q]));
      }
    }
  }
  double jump = 0.0;
  std::vector<std::array<int, 2>> sc(mesh.n_faces(), {-1, -1}), se(mesh.n_faces(), {-1, -1});
  for (int t = 0; t < mesh.n_cells(); ++t)
    for (int e = 0; e < 3; ++e) {
      const auto& cf = mesh.cell_faces(t)[e];
      int s = cf.sign > 0 ? 0 : 1;
      sc[cf.face][s] = t;
      se[cf.face][s] = e;
    }
  for (int fid = 0; fid < mesh.n_faces(); ++fid) {
    if (mesh.face(fid).boundary) continue;
    const auto& a = traces[sc[fid][0]][se[fid][0]];
    const auto& b = traces[sc[fid][1]][se[fid][1]];
    for (int q = 0; q < a.size(); ++q) jump = std::max(jump, std::abs(a[q] - b[q]));
  }
  return scale > 0.0 ? jump / scale : 0.0;
}

// ---------------------------------------------------------------------------
// Property suite
// ---------------------------------------------------------------------------

struct PropertyCheck {
  std::string name;
  bool pass = false;
  double deviation = 0.0;
};

struct PropertyReport {
  std::vector<PropertyCheck> checks;
  bool all_pass = true;

  void add(const std::string& name, double deviation, double tol) {
    bool ok = deviation < tol;
    checks.push_back({name, ok, deviation});
    all_pass = all_pass && ok;
  }
};

struct PropertyOptions {
  unsigned long long seed = 42;
  bool inject_perturbation = false;  // test hook: scales one element matrix by 1+1e-3
};

inline const std::array<SpaceConfig, 9>& all_configs_k_le_3() {
  static const std::array<SpaceConfig, 9> cfgs = {
      SpaceConfig(0, 1, 1), SpaceConfig(1, 1, 1), SpaceConfig(1, 1, 2),
      SpaceConfig(1, 2, 2), SpaceConfig(2, 2, 2), SpaceConfig(2, 2, 3),
      SpaceConfig(2, 3, 3), SpaceConfig(3, 3, 3), SpaceConfig(3, 3, 4)};
  return cfgs;
}

/// A one-cell mesh over a given (counterclockwise) triangle.
inline SimplicialMesh single_triangle_mesh(Vec2 a, Vec2 b, Vec2 c) {
  double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  if (area2 < 0) std::swap(b, c);
  return SimplicialMesh({a, b, c}, {{0, 1, 2}});
}

inline SimplicialMesh random_triangle_mesh(std::mt19937_64& rng, double min_area = 0.02) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (true) {
    Vec2 a(unif(rng), unif(rng)), b(unif(rng), unif(rng)), c(unif(rng), unif(rng));
    double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area2) < 2.0 * min_area) continue;
    return single_triangle_mesh(a, b, c);
  }
}

/// Runs the operator/scheme invariant checks with fixed tolerances.
inline PropertyReport property_suite(const PropertyOptions& opts = {}) {
  PropertyReport rep;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  // mesh invariants
  {
    double closure = 0.0, unit = 0.0, euler = 0.0, pairs = 0.0;
    for (int n : {1, 2, 3, 4, 7}) {
      SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(n);
      euler = std::max(euler, std::abs(static_cast<double>(
                                  mesh.n_vertices() - mesh.n_faces() + mesh.n_cells() - 1)));
      for (int f = 0; f < mesh.n_faces(); ++f)
        unit = std::max(unit, std::abs(mesh.face(f).normal.norm() - 1.0));
      for (int t = 0; t < mesh.n_cells(); ++t) {
        Vec2 s = Vec2::Zero();
        for (const auto& cf : mesh.cell_faces(t))
          s += mesh.face(cf.face).length * cf.sign * mesh.face(cf.face).normal;
        closure = std::max(closure, s.norm());
      }
      for (int f = 0; f < mesh.n_faces(); ++f) {
        const Face& F = mesh.face(f);
        if (F.boundary) continue;
        for (int t : {F.cell_plus, F.cell_minus}) {
          const auto& c = mesh.cell(t);
          int shared = 0;
          for (int v : c)
            if (v == F.v0 || v == F.v1) ++shared;
          if (shared != 2) pairs = 1.0;
        }
      }
    }
    rep.add("mesh-closure", closure, 1e-14);
    rep.add("mesh-normals-unit", unit, 1e-14);
    rep.add("mesh-euler", euler, 0.5);
    rep.add("mesh-face-pairs", pairs, 0.5);
  }

  // quadrature exactness against the monomial formula a! b! / (a+b+2)!
  {
    double dev = 0.0;
    for (int deg = 0; deg <= 20; ++deg) {
      auto rule = triangle_quadrature(deg);
      for (int a = 0; a + 0 <= deg; ++a)
        for (int b = 0; a + b <= deg; ++b) {
          double exact = 1.0;
          for (int i = 1; i <= a; ++i) exact *= i;
          for (int i = 1; i <= b; ++i) exact *= i;
          double denom = 1.0;
          for (int i = 1; i <= a + b + 2; ++i) denom *= i;
          exact /= denom;
          double got = 0.0;
          for (int q = 0; q < rule.size(); ++q)
            got += rule.weights[q] * std::pow(rule.bary(q, 1), a) * std::pow(rule.bary(q, 2), b);
          dev = std::max(dev, std::abs(got - exact) / exact);
        }
      auto erule = edge_quadrature(deg);
      for (int a = 0; a <= deg; ++a) {
        double got = 0.0;
        for (int q = 0; q < erule.size(); ++q) got += erule.w[q] * std::pow(erule.t[q], a);
        dev = std::max(dev, std::abs(got - 1.0 / (a + 1)) * (a + 1));
      }
    }
    rep.add("quadrature-exactness", dev, 1e-13);
  }

  // unisolvence scan: 100 random triangles x all configs with k <= 3
  {
    double max_cond = 0.0, duality = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      SimplicialMesh mesh = random_triangle_mesh(rng);
      CellFrame fr = make_cell_frame(mesh, 0, 10, 10);
      for (const SpaceConfig& cfg : all_configs_k_le_3()) {
        VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
        TensorElement sel = build_sigma_local_basis(fr, cfg, vel);
        max_cond = std::max(max_cond, sel.dof_condition);
        if (cfg.m >= 2) max_cond = std::max(max_cond, vel.dof_condition);
        if (trial < 5) {
          int nd = sel.dim();
          duality = std::max(duality, (sel.dof_matrix * sel.dual -
                                       Eigen::MatrixXd::Identity(nd, nd))
                                          .cwiseAbs()
                                          .maxCoeff());
          if (cfg.m >= 2) {
            int nv = vel.dim();
            duality = std::max(duality, (vel.dof_matrix * vel.dual -
                                         Eigen::MatrixXd::Identity(nv, nv))
                                            .cwiseAbs()
                                            .maxCoeff());
          }
        }
      }
    }
    rep.add("unisolvence-scan", max_cond, 1e10);
    rep.add("dof-duality", duality, 1e-10);
  }

  // tau n restricted to each face lies in P_r(F;R^2)
  {
    double dev = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      SimplicialMesh mesh = random_triangle_mesh(rng);
      CellFrame fr = make_cell_frame(mesh, 0, 10, 10);
      for (const SpaceConfig& cfg : all_configs_k_le_3()) {
        VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
        TensorElement sel = build_sigma_local_basis(fr, cfg, vel);
        int npt = cfg.r + 3;
        for (int e = 0; e < 3; ++e) {
          const CellFaceFrame& ff = fr.faces[e];
          Eigen::MatrixXd vand(npt, cfg.r + 1);
          Eigen::MatrixXd vals(npt, 2 * sel.dim());
          for (int p = 0; p < npt; ++p) {
            double s = -0.5 + static_cast<double>(p) / (npt - 1);
            for (int j = 0; j <= cfg.r; ++j) vand(p, j) = std::pow(s, j);
            Vec2 x = ff.basis.point(s);
            Vec2 xh = fr.local(x);
            for (int i = 0; i < sel.dim(); ++i) {
              Vec2 tn = sel.members[i].eval(xh) * ff.normal;
              vals(p, 2 * i) = tn[0];
              vals(p, 2 * i + 1) = tn[1];
            }
          }
          Eigen::MatrixXd fit = vand.colPivHouseholderQr().solve(vals);
          dev = std::max(dev, (vand * fit - vals).cwiseAbs().maxCoeff() /
                                  std::max(1.0, vals.cwiseAbs().maxCoeff()));
        }
      }
    }
    rep.add("face-trace-degree", dev, 1e-10);
  }

  // div Sigma_{r,k,m}(T) = V_{k-1,m-1}(T): surjectivity via the rank of the
  // divergence matrix
  {
    double deficiency = 0.0;
    SimplicialMesh mesh = random_triangle_mesh(rng);
    CellFrame fr = make_cell_frame(mesh, 0, 10, 10);
    for (const SpaceConfig& cfg : all_configs_k_le_3()) {
      VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
      TensorElement sel = build_sigma_local_basis(fr, cfg, vel);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(sel.div_in_v);
      int rank = 0;
      double smax = svd.singularValues()(0);
      for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-10 * smax) ++rank;
      deficiency = std::max(deficiency, static_cast<double>(vel.dim() - rank));
    }
    rep.add("divergence-surjectivity", deficiency, 0.5);
  }

  // shared-face consistency: the same global Sigma DoF evaluated from either
  // incident cell on a smooth tensor polynomial
  {
    double dev = 0.0;
    SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(2);
    for (const SpaceConfig& cfg : all_configs_k_le_3()) {
      // random global tensor polynomial of degree r (contained in Sigma on every cell)
      auto exps = monomial_exponents(cfg.r);
      Eigen::MatrixXd coef(4, exps.size());
      for (int i = 0; i < coef.size(); ++i) coef(i / coef.cols(), i % coef.cols()) = unif(rng);
      auto tau = [&](const Vec2& x) {
        Mat2 m = Mat2::Zero();
        for (size_t j = 0; j < exps.size(); ++j) {
          double v = std::pow(x.x(), exps[j][0]) * std::pow(x.y(), exps[j][1]);
          m(0, 0) += coef(0, j) * v;
          m(0, 1) += coef(1, j) * v;
          m(1, 0) += coef(2, j) * v;
          m(1, 1) += coef(3, j) * v;
        }
        return m;
      };
      DofMaps maps = build_global_maps(mesh, cfg);
      Eigen::VectorXd vals = Eigen::VectorXd::Zero(maps.sigma.total);
      Eigen::VectorXd seen = Eigen::VectorXd::Zero(maps.sigma.total);
      for (int t = 0; t < mesh.n_cells(); ++t) {
        CellFrame fr = make_cell_frame(mesh, t, 2 * cfg.k + 4, 2 * cfg.k + 4);
        auto sidx = sigma_global_indices(mesh, maps.sigma, t);
        int row = 0;
        for (int e = 0; e < 3; ++e) {
          const CellFaceFrame& ff = fr.faces[e];
          for (int j = 0; j <= cfg.r; ++j)
            for (int c = 0; c < 2; ++c, ++row) {
              double s = 0.0;
              for (int q = 0; q < ff.quad.size(); ++q) {
                Vec2 tn = tau(ff.quad.points.col(q)) * ff.normal;
                s += ff.quad.weights[q] * tn[c] * std::pow(ff.sparam[q], j);
              }
              s /= ff.length;
              int g = sidx[row];
              if (seen[g] == 0.0) {
                vals[g] = s;
                seen[g] = 1.0;
              } else {
                dev = std::max(dev, std::abs(vals[g] - s));
              }
            }
        }
      }
    }
    rep.add("shared-face-consistency", dev, 1e-12);
  }

  // weak gradient: polynomial exactness and the divergence-theorem kernel
  {
    double dev_exact = 0.0, dev_kernel = 0.0;
    SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(2);
    for (const SpaceConfig& cfg : all_configs_k_le_3()) {
      auto exps = monomial_exponents(cfg.k);
      Eigen::VectorXd pc(exps.size());
      for (int i = 0; i < pc.size(); ++i) pc[i] = unif(rng);
      auto p = [&](const Vec2& x) {
        double v = 0.0;
        for (size_t j = 0; j < exps.size(); ++j)
          v += pc[j] * std::pow(x.x(), exps[j][0]) * std::pow(x.y(), exps[j][1]);
        return v;
      };
      auto gp = [&](const Vec2& x) {
        Vec2 g = Vec2::Zero();
        for (size_t j = 0; j < exps.size(); ++j) {
          int a = exps[j][0], b = exps[j][1];
          if (a > 0) g[0] += pc[j] * a * std::pow(x.x(), a - 1) * std::pow(x.y(), b);
          if (b > 0) g[1] += pc[j] * b * std::pow(x.x(), a) * std::pow(x.y(), b - 1);
        }
        return g;
      };
      for (int t = 0; t < mesh.n_cells(); ++t) {
        CellOperators ops(mesh, t, cfg);
        Eigen::VectorXd v0 = project_scalar(ops.frame(), p, cfg.m - 2, 2 * cfg.k + 4);
        std::array<Eigen::VectorXd, 3> vb, vbc;
        for (int e = 0; e < 3; ++e) {
          const CellFaceFrame& ff = ops.frame().faces[e];
          // face L2 projection of p onto P_{k-1}(F)
          int nb = cfg.k;
          Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nb, nb);
          Eigen::VectorXd r = Eigen::VectorXd::Zero(nb);
          for (int q = 0; q < ff.quad.size(); ++q) {
            Eigen::VectorXd sv(nb);
            for (int j = 0; j < nb; ++j) sv[j] = std::pow(ff.sparam[q], j);
            M += ff.quad.weights[q] * sv * sv.transpose();
            r += ff.quad.weights[q] * p(ff.quad.points.col(q)) * sv;
          }
          vb[e] = M.llt().solve(r);
          vbc[e] = Eigen::VectorXd::Zero(nb);
          vbc[e][0] = 1.0;
        }
        Eigen::VectorXd w = weak_gradient(ops, v0, vb);
        Eigen::VectorXd gcoef = project_to_v(ops, gp, 2 * cfg.k + 4);
        Eigen::VectorXd diff = w - gcoef;
        double l2diff = std::sqrt(diff.dot(ops.mass_v() * diff));
        double l2ref = std::sqrt(std::max(gcoef.dot(ops.mass_v() * gcoef), 1e-300));
        dev_exact = std::max(dev_exact, l2diff / std::max(l2ref, 1.0));

        Eigen::VectorXd c0 = Eigen::VectorXd::Zero(ops.n0());
        if (ops.n0() > 0) c0[0] = 1.0;
        Eigen::VectorXd wk = weak_gradient(ops, c0, vbc);
        dev_kernel = std::max(dev_kernel, std::sqrt(wk.dot(ops.mass_v() * wk)));
      }
    }
    rep.add("weak-gradient-exactness", dev_exact, 1e-11);
    rep.add("weak-gradient-kernel", dev_kernel, 1e-13);
  }

  // dense-quadrature oracles for the weak operators
  {
    double dev_g = 0.0, dev_h = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      SimplicialMesh mesh = random_triangle_mesh(rng);
      for (const SpaceConfig& cfg : all_configs_k_le_3()) {
        CellOperators ops(mesh, 0, cfg);
        Eigen::VectorXd v0(ops.n0());
        for (int i = 0; i < v0.size(); ++i) v0[i] = unif(rng);
        std::array<Eigen::VectorXd, 3> vb, vg;
        for (int e = 0; e < 3; ++e) {
          vb[e].resize(ops.nb());
          for (int i = 0; i < ops.nb(); ++i) vb[e][i] = unif(rng);
          vg[e].resize(ops.ng());
          for (int i = 0; i < ops.ng(); ++i) vg[e][i] = unif(rng);
        }
        Eigen::VectorXd w = weak_gradient(ops, v0, vb);
        Eigen::VectorXd wo = weak_gradient_oracle(ops.frame(), cfg, v0, vb);
        dev_g = std::max(dev_g,
                         (w - wo).cwiseAbs().maxCoeff() / std::max(1.0, wo.cwiseAbs().maxCoeff()));
        Eigen::VectorXd hh = weak_hessian(ops, v0, vb, vg);
        Eigen::VectorXd ho = weak_hessian_oracle(ops.frame(), cfg, v0, vb, vg);
        dev_h = std::max(dev_h,
                         (hh - ho).cwiseAbs().maxCoeff() / std::max(1.0, ho.cwiseAbs().maxCoeff()));
      }
    }
    rep.add("weak-gradient-oracle", dev_g, 1e-10);
    rep.add("weak-hessian-oracle", dev_h, 1e-10);
  }

  // commuting identity div(I^div w) = Q_{m-2,h} div w
  {
    double dev = 0.0;
    struct Fld {
      VectorField w;
      ScalarField divw;
    };
    std::vector<Fld> fields = {
        {[](const Vec2& x) { return Vec2(2.0 * x.x() * x.y(), x.x() * x.x()); },
         [](const Vec2& x) { return 2.0 * x.y(); }},
        {[](const Vec2& x) { return Vec2(std::sin(M_PI * x.y()), std::sin(M_PI * x.x())); },
         [](const Vec2&) { return 0.0; }}};
    for (int k : {2, 3})
      for (int m : {k, k + 1})
        for (int n : {2, 4}) {
          SpaceConfig cfg(k, k, m);
          SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(n);
          DofMaps maps = build_global_maps(mesh, cfg);
          for (const auto& fld : fields) {
            CoefficientField I = canonical_interp_v(mesh, fld.w, cfg, maps, 2 * k + 8);
            for (int t = 0; t < mesh.n_cells(); ++t) {
              CellFrame fr = make_cell_frame(mesh, t, 2 * k + 4, 2 * k + 4);
              VectorElement vel = build_v_local_basis(fr, cfg.k, cfg.m);
              Eigen::VectorXd c = gather_vdiv_local(mesh, vel, maps, I, t);
              Poly2 divp;
              for (int i = 0; i < vel.dim(); ++i) divp = divp + vel.div_local[i] * (c[i] / fr.h);
              Eigen::VectorXd qd = project_scalar(fr, fld.divw, cfg.m - 2, 2 * k + 8);
              auto exps = monomial_exponents(cfg.m - 2);
              Poly2 qp;
              for (size_t j = 0; j < exps.size(); ++j)
                qp = qp + Poly2::monomial(exps[j][0], exps[j][1], qd[static_cast<int>(j)]);
              Poly2 diff = divp - qp;
              dev = std::max(dev, std::sqrt(std::abs(fr.integrate_product(diff, diff))));
            }
          }
        }
    rep.add("commuting-identity", dev, 1e-10);
  }

  // weak-Hessian norm equivalence: ratios on n=2 bound those on n=4,8
  {
    double violation = 0.0;
    for (const SpaceConfig& cfg : all_configs_k_le_3()) {
      double lo2 = 1e300, hi2 = 0.0;
      for (int n : {2, 4, 8}) {
        SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(n);
        DofMaps maps = build_global_maps(mesh, cfg);
        for (int trial = 0; trial < 6; ++trial) {
          Eigen::VectorXd v(maps.wg.total);
          for (int i = 0; i < v.size(); ++i) v[i] = unif(rng);
          double num = 0.0, den = 0.0;
          for (int t = 0; t < mesh.n_cells(); ++t) {
            CellOperators ops(mesh, t, cfg);
            Eigen::VectorXd ul = gather_local(wg_global_indices(mesh, maps.wg, t), v);
            Eigen::VectorXd hcoef = ops.weak_hessian_map() * ul;
            num += hcoef.dot(ops.mass_sigma() * hcoef);
            Eigen::VectorXd w = ops.weak_gradient_map() * ul.head(ops.n_grad_unknowns());
            den += w.dot(ops.stiff_v() * w);
            double face_term = 0.0;
            for (int e = 0; e < 3; ++e) {
              const CellFaceFrame& ff = ops.frame().faces[e];
              Eigen::VectorXd ugl =
                  ul.segment(ops.n0() + 3 * ops.nb() + e * ops.ng(), ops.ng());
              for (int q = 0; q < ff.quad.size(); ++q) {
                Vec2 xh = ops.frame().local(ff.quad.points.col(q));
                Vec2 wv = Vec2::Zero();
                for (int i = 0; i < ops.v_basis().dim(); ++i)
                  wv += w[i] * ops.v_basis().members[i].eval(xh);
                Vec2 gv = Vec2::Zero();
                for (int j = 0; j <= cfg.r; ++j)
                  for (int c = 0; c < 2; ++c)
                    gv[c] += ugl[2 * j + c] * std::pow(ff.sparam[q], j);
                face_term += ff.quad.weights[q] * (wv - gv).squaredNorm();
              }
            }
            den += face_term / ops.frame().h;
          }
          double ratio = num / std::max(den, 1e-300);
          if (n == 2) {
            lo2 = std::min(lo2, ratio);
            hi2 = std::max(hi2, ratio);
          } else {
            violation = std::max(violation, std::max(lo2 * 0.9 - ratio, ratio - hi2 * 1.1));
          }
        }
      }
    }
    rep.add("hessian-norm-equivalence", std::max(violation, 0.0), 1e-12);
  }

  // |grad_w v| = 0 implies v = 0 on the constrained space (Gram-matrix rank)
  {
    double min_rel_eig = 1e300;
    SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(2);
    for (const SpaceConfig& cfg : all_configs_k_le_3()) {
      DofMaps maps = build_global_maps(mesh, cfg);
      int nu = maps.wg.n_cells * maps.wg.n0 + maps.wg.n_ifaces * maps.wg.nb;
      Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nu, nu);
      for (int t = 0; t < mesh.n_cells(); ++t) {
        CellOperators ops(mesh, t, cfg);
        Eigen::MatrixXd C =
            ops.weak_gradient_map().transpose() * ops.mass_v() * ops.weak_gradient_map();
        auto wgidx = wg_global_indices(mesh, maps.wg, t);
        int ng = ops.n_grad_unknowns();
        for (int i = 0; i < ng; ++i) {
          int gi = saddle_u_index(maps.wg, 0, wgidx[i]);
          if (gi < 0) continue;
          for (int j = 0; j < ng; ++j) {
            int gj = saddle_u_index(maps.wg, 0, wgidx[j]);
            if (gj >= 0) G(gi, gj) += C(i, j);
          }
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
      min_rel_eig = std::min(min_rel_eig,
                             es.eigenvalues().minCoeff() / es.eigenvalues().maxCoeff());
    }
    rep.add("gradient-norm-kernel", min_rel_eig > 1e-10 ? 0.0 : 1.0, 0.5);
  }

  // scheme equivalence, H(div) conformity, SPD probe, linearity
  {
    double dev_eq = 0.0, dev_sigma_jump = 0.0, dev_div_jump = 0.0;
    bool first_combo = true;
    for (const SpaceConfig& cfg : all_configs_k_le_3())
      for (int n : {2, 4})
        for (double eps : {1.0, 1e-3}) {
          SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(n);
          ManufacturedCase cse = ManufacturedCase::make_example1();
          SolveOptions popts;
          if (opts.inject_perturbation && first_combo) popts.hook = {0, 1.0 + 1e-3};
          first_combo = false;
          EquivalenceReport er =
              equivalence_suite(mesh, cfg, eps, cse.forcing(eps), 1e-8, popts);
          dev_eq = std::max(dev_eq, er.dev_primal_saddle);
          if (er.dev_first_order >= 0) dev_eq = std::max(dev_eq, er.dev_first_order);

          SchemeSolution pri =
              solve_scheme(mesh, cfg, eps, cse.forcing(eps), SchemeKind::PrimalWg, popts);
          dev_sigma_jump = std::max(dev_sigma_jump, pri.sigma_face_jump);
          if (cfg.k >= 2) {
            DiscreteState st = state_from_solution(mesh, pri);
            dev_div_jump = std::max(dev_div_jump, divsigma_grad_jump(mesh, cfg, st));
          }
        }
    rep.add("scheme-equivalence", dev_eq, 1e-8);
    rep.add("hdiv-sigma-jump", dev_sigma_jump, 1e-9);
    rep.add("hdiv-divsigma-jump", dev_div_jump, 1e-9);
  }

  {
    SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(4);
    SpaceConfig cfg(2, 2, 2);
    ManufacturedCase cse = ManufacturedCase::make_example1();
    DofMaps maps = build_global_maps(mesh, cfg);
    SparseSystem sys = assemble_primal_wg(mesh, cfg, 1e-3, cse.forcing(1e-3), maps);
    SpdProbe probe = spd_probe(sys.A, static_cast<unsigned>(opts.seed));
    rep.add("spd-probe", (probe.cholesky_ok && probe.min_ritz > 0.0) ? 0.0 : 1.0, 0.5);

    auto f1 = cse.forcing(1.0);
    auto f2 = [&f1](const Vec2& x) { return 2.0 * f1(x); };
    SchemeSolution s1 = solve_scheme(mesh, cfg, 1.0, f1, SchemeKind::PrimalWg);
    SchemeSolution s2 = solve_scheme(mesh, cfg, 1.0, f2, SchemeKind::PrimalWg);
    double dev = (2.0 * s1.u.values - s2.u.values).cwiseAbs().maxCoeff() /
                 std::max(s2.u.values.cwiseAbs().maxCoeff(), 1e-300);
    rep.add("solution-linearity", dev, 1e-12);
  }

  return rep;
}

}  // namespace ssp4
