#pragma once

#include "ssp4/mesh.hpp"
#include "ssp4/poly.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace ssp4 {

/// The triple (r,k,m) selecting a member of the method family.
struct SpaceConfig {
  int r = 1, k = 1, m = 1;

  SpaceConfig() = default;
  SpaceConfig(int r_, int k_, int m_) : r(r_), k(k_), m(m_) {
    if (!valid()) throw std::invalid_argument("SpaceConfig: (r,k,m) not in the admissible families");
  }

  bool valid() const {
    return k >= 1 && (r == k || r == k - 1) && (m == k || m == k + 1) && r <= m && m <= r + 1;
  }

  bool is_full_tensor() const { return r == k && m == k; }        // P_k(T;M)
  bool is_tensor_enriched() const { return r == k && m == k + 1; } // P_k(T;M) + (x@x)H_{k-1}
  bool is_rowwise_rt() const { return r == k - 1; }                // R^2 @ RT rows

  std::string tag() const {
    return "k" + std::to_string(k) + "r" + std::to_string(r) + "m" + std::to_string(m);
  }
};

/// dim V_{k-1,m-1}(T;R^2) = P_{k-1}(T;R^2) + x H_{m-2}(T).
inline int v_space_dim(int k, int m) {
  return 2 * poly_dim(k - 1) + (m == k + 1 ? homog_dim(m - 2) : 0);
}

inline int sigma_space_dim(const SpaceConfig& c) {
  if (c.is_rowwise_rt()) return 2 * (2 * poly_dim(c.k - 1) + homog_dim(c.k - 1));
  int d = 4 * poly_dim(c.k);
  if (c.is_tensor_enriched()) d += homog_dim(c.k - 1);
  return d;
}

// ---------------------------------------------------------------------------
// Cell frame: local geometry plus quadrature caches shared by basis builders
// ---------------------------------------------------------------------------

struct CellFaceFrame {
  int face = -1;
  double sign = 0.0;      // n_F . n_{dT}
  Vec2 normal;            // global n_F
  double length = 0.0;
  EdgeMonomialBasis basis;        // global parameterization (sorted vertices)
  MappedQuadrature quad;          // physical points/weights on the face
  Eigen::VectorXd sparam;         // s parameter of quad points
};

struct CellFrame {
  int cell = -1;
  Vec2 centroid;
  double h = 0.0;
  double area = 0.0;
  std::array<Vec2, 3> verts;
  std::array<CellFaceFrame, 3> faces;
  MappedQuadrature quad;          // physical points/weights on the cell
  Eigen::Matrix2Xd local_pts;     // quad points in (x - x_c)/h coordinates

  Vec2 local(const Vec2& x) const { return (x - centroid) / h; }

  double integrate(const Poly2& p) const {
    double s = 0.0;
    for (int q = 0; q < quad.size(); ++q) s += quad.weights[q] * p.eval(local_pts.col(q));
    return s;
  }
  double integrate_product(const Poly2& a, const Poly2& b) const {
    double s = 0.0;
    for (int q = 0; q < quad.size(); ++q) {
      Vec2 xh = local_pts.col(q);
      s += quad.weights[q] * a.eval(xh) * b.eval(xh);
    }
    return s;
  }
};

inline CellFrame make_cell_frame(const SimplicialMesh& mesh, int cell, int cell_quad_degree,
                                 int face_quad_degree) {
  CellFrame fr;
  fr.cell = cell;
  fr.verts = mesh.cell_vertices(cell);
  fr.centroid = mesh.cell_centroid(cell);
  fr.h = mesh.cell_diameter(cell);
  fr.area = mesh.cell_area(cell);
  if (fr.area <= 0.0) throw std::invalid_argument("make_cell_frame: degenerate cell");
  auto rule = triangle_quadrature(cell_quad_degree);
  fr.quad = map_to_triangle(rule, fr.verts[0], fr.verts[1], fr.verts[2]);
  fr.local_pts.resize(2, fr.quad.size());
  for (int q = 0; q < fr.quad.size(); ++q) fr.local_pts.col(q) = fr.local(fr.quad.points.col(q));
  auto erule = edge_quadrature(face_quad_degree);
  const auto& cf = mesh.cell_faces(cell);
  for (int e = 0; e < 3; ++e) {
    CellFaceFrame& ff = fr.faces[e];
    const Face& F = mesh.face(cf[e].face);
    ff.face = cf[e].face;
    ff.sign = cf[e].sign;
    ff.normal = F.normal;
    ff.length = F.length;
    ff.basis = EdgeMonomialBasis(mesh.vertex(F.v0), mesh.vertex(F.v1), std::max(cell_quad_degree, 1));
    ff.quad = map_to_edge(erule, mesh.vertex(F.v0), mesh.vertex(F.v1));
    ff.sparam.resize(ff.quad.size());
    for (int q = 0; q < ff.quad.size(); ++q) ff.sparam[q] = ff.basis.param(ff.quad.points.col(q));
  }
  return fr;
}

// ---------------------------------------------------------------------------
// Local shape spaces
// ---------------------------------------------------------------------------

/// Basis of P_j(T;R^2) ^ ker(.x), the rotational complement used by the
/// interior DoFs. Computed as the null space of the "dot with x" map on
/// scaled monomial coefficients, then orthonormalized.
inline std::vector<VecPoly> ker_dot_x_basis(int j) {
  std::vector<VecPoly> out;
  if (j < 0) return out;
  int np = poly_dim(j);
  auto ex = monomial_exponents(j);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(poly_dim(j + 1), 2 * np);
  for (int i = 0; i < np; ++i) {
    K(monomial_index(ex[i][0] + 1, ex[i][1]), 2 * i) = 1.0;      // x * (e1 m_i)
    K(monomial_index(ex[i][0], ex[i][1] + 1), 2 * i + 1) = 1.0;  // y * (e2 m_i)
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  lu.setThreshold(1e-12);
  Eigen::MatrixXd ker = lu.kernel();
  if (ker.cols() == 1 && ker.isZero(0.0)) return out;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ker);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(ker.rows(), ker.cols());
  for (int c = 0; c < Q.cols(); ++c) {
    VecPoly v;
    v.x = Poly2(j);
    v.y = Poly2(j);
    Poly2 px(j), py(j);
    for (int i = 0; i < np; ++i) {
      px = px + Poly2::monomial(ex[i][0], ex[i][1], Q(2 * i, c));
      py = py + Poly2::monomial(ex[i][0], ex[i][1], Q(2 * i + 1, c));
    }
    v.x = px;
    v.y = py;
    out.push_back(v);
  }
  return out;
}

/// Local basis of V_{k-1,m-1}(T;R^2) with its DoF-dual representation
/// (for m >= 2) and exact local divergences.
struct VectorElement {
  int cell = -1;
  int k = 1, m = 1;
  double h = 1.0;
  std::vector<VecPoly> members;   // spanning set; a basis by construction
  std::vector<Poly2> div_local;   // local divergence of each member
  Eigen::MatrixXd dual;           // columns: DoF-dual members over `members` (m >= 2)
  Eigen::MatrixXd dof_matrix;     // DoF_i(member_j)
  double dof_condition = 0.0;
  int n_face_dofs = 0;            // per face: k
  int n_interior_dofs = 0;

  int dim() const { return static_cast<int>(members.size()); }
};

/// Express a vector polynomial in the coordinates of `members`. The target
/// must lie in the span; the residual is checked.
inline Eigen::VectorXd coords_in_span(const std::vector<VecPoly>& members, const VecPoly& target,
                                      int max_deg) {
  int np = poly_dim(max_deg);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * np, members.size());
  auto put = [&](const Poly2& p, int row0, int col, Eigen::MatrixXd& M) {
    if (p.degree() < 0) return;
    for (int i = 0; i < poly_dim(p.degree()); ++i) M(row0 + i, col) = p.coeffs()[i];
  };
  for (size_t j = 0; j < members.size(); ++j) {
    put(members[j].x, 0, static_cast<int>(j), A);
    put(members[j].y, np, static_cast<int>(j), A);
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * np);
  Eigen::MatrixXd bm(2 * np, 1);
  bm.setZero();
  put(target.x, 0, 0, bm);
  put(target.y, np, 0, bm);
  b = bm.col(0);
  Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  double res = (A * c - b).norm();
  if (res > 1e-10 * (1.0 + b.norm()))
    throw std::runtime_error("coords_in_span: target not representable in the space");
  return c;
}

inline VectorElement build_v_local_basis(const CellFrame& fr, int k, int m) {
  if (k < 1 || (m != k && m != k + 1)) throw std::invalid_argument("build_v_local_basis: bad (k,m)");
  VectorElement el;
  el.cell = fr.cell;
  el.k = k;
  el.m = m;
  el.h = fr.h;

  auto exs = monomial_exponents(k - 1);
  for (const auto& e : exs) {
    VecPoly vx, vy;
    vx.x = Poly2::monomial(e[0], e[1]);
    vy.y = Poly2::monomial(e[0], e[1]);
    el.members.push_back(vx);
    el.members.push_back(vy);
  }
  if (m == k + 1) {
    for (const auto& b : homogeneous_exponents(m - 2)) {
      VecPoly v;
      Poly2 mb = Poly2::monomial(b[0], b[1]);
      v.x = Poly2::monomial(1, 0) * mb;
      v.y = Poly2::monomial(0, 1) * mb;
      el.members.push_back(v);
    }
  }
  for (const auto& v : el.members) el.div_local.push_back(v.div_local());

  if (m >= 2) {
    el.n_face_dofs = k;
    auto kerb = ker_dot_x_basis(k - 2);
    int n_grad = poly_dim(m - 2) - 1;
    el.n_interior_dofs = n_grad + static_cast<int>(kerb.size());
    int ndof = 3 * el.n_face_dofs + el.n_interior_dofs;
    if (ndof != el.dim())
      throw std::runtime_error("build_v_local_basis: DoF count mismatch for (k,m)=(" +
                               std::to_string(k) + "," + std::to_string(m) + ")");
    Eigen::MatrixXd A(ndof, el.dim());
    int row = 0;
    for (int e = 0; e < 3; ++e) {
      const CellFaceFrame& ff = fr.faces[e];
      for (int j = 0; j < k; ++j, ++row) {
        for (int col = 0; col < el.dim(); ++col) {
          double s = 0.0;
          for (int q = 0; q < ff.quad.size(); ++q) {
            Vec2 xh = fr.local(ff.quad.points.col(q));
            double vn = el.members[col].eval(xh).dot(ff.normal);
            s += ff.quad.weights[q] * vn * std::pow(ff.sparam[q], j);
          }
          A(row, col) = s / ff.length;
        }
      }
    }
    auto m2ex = monomial_exponents(m - 2);
    for (size_t g = 1; g < m2ex.size(); ++g, ++row) {
      Poly2 mg = Poly2::monomial(m2ex[g][0], m2ex[g][1]);
      VecPoly q{mg.dx(), mg.dy()};
      for (int col = 0; col < el.dim(); ++col)
        A(row, col) = (fr.integrate_product(el.members[col].x, q.x) +
                       fr.integrate_product(el.members[col].y, q.y)) /
                      fr.area;
    }
    for (const auto& q : kerb) {
      for (int col = 0; col < el.dim(); ++col)
        A(row, col) = (fr.integrate_product(el.members[col].x, q.x) +
                       fr.integrate_product(el.members[col].y, q.y)) /
                      fr.area;
      ++row;
    }
    el.dof_matrix = A;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    el.dof_condition = svd.singularValues()(0) / svd.singularValues().tail(1)(0);
    if (!(el.dof_condition < 1e12))
      throw std::runtime_error("build_v_local_basis: ill-conditioned DoF matrix");
    el.dual = A.partialPivLu().solve(Eigen::MatrixXd::Identity(ndof, ndof));
  }
  return el;
}

/// Local basis of Sigma_{r,k,m}(T;M): spanning members, exact divergence
/// expressed in V coordinates, and the DoF-dual representation.
struct TensorElement {
  int cell = -1;
  SpaceConfig cfg;
  double h = 1.0;
  std::vector<MatPoly> members;
  Eigen::MatrixXd div_in_v;   // dimV x dimS, physical divergence in V coordinates
  Eigen::MatrixXd dual;       // columns: DoF-dual members over `members`
  Eigen::MatrixXd dof_matrix;
  double dof_condition = 0.0;
  int n_face_dofs = 0;        // per face: 2(r+1)
  int n_interior_dofs = 0;

  int dim() const { return static_cast<int>(members.size()); }
};

inline TensorElement build_sigma_local_basis(const CellFrame& fr, const SpaceConfig& cfg,
                                             const VectorElement& vel) {
  TensorElement el;
  el.cell = fr.cell;
  el.cfg = cfg;
  el.h = fr.h;

  if (cfg.is_rowwise_rt()) {
    // rows are Raviart-Thomas fields P_{k-1}(R^2) + x H_{k-1}
    std::vector<VecPoly> rows;
    for (const auto& e : monomial_exponents(cfg.k - 1)) {
      VecPoly vx, vy;
      vx.x = Poly2::monomial(e[0], e[1]);
      vy.y = Poly2::monomial(e[0], e[1]);
      rows.push_back(vx);
      rows.push_back(vy);
    }
    for (const auto& b : homogeneous_exponents(cfg.k - 1)) {
      VecPoly v;
      Poly2 mb = Poly2::monomial(b[0], b[1]);
      v.x = Poly2::monomial(1, 0) * mb;
      v.y = Poly2::monomial(0, 1) * mb;
      rows.push_back(v);
    }
    for (int a = 0; a < 2; ++a)
      for (const auto& rw : rows) {
        MatPoly t;
        t.e[a][0] = rw.x;
        t.e[a][1] = rw.y;
        el.members.push_back(t);
      }
  } else {
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (const auto& e : monomial_exponents(cfg.k)) {
          MatPoly t;
          t.e[a][b] = Poly2::monomial(e[0], e[1]);
          el.members.push_back(t);
        }
    if (cfg.is_tensor_enriched()) {
      Poly2 xm = Poly2::monomial(1, 0), ym = Poly2::monomial(0, 1);
      for (const auto& b : homogeneous_exponents(cfg.k - 1)) {
        Poly2 mb = Poly2::monomial(b[0], b[1]);
        MatPoly t;
        t.e[0][0] = xm * xm * mb;
        t.e[0][1] = xm * ym * mb;
        t.e[1][0] = ym * xm * mb;
        t.e[1][1] = ym * ym * mb;
        el.members.push_back(t);
      }
    }
  }
  if (el.dim() != sigma_space_dim(cfg))
    throw std::runtime_error("build_sigma_local_basis: dimension mismatch");

  // Physical divergence of every member lies in V_{k-1,m-1}(T).
  int vmax = std::max(cfg.k - 1, cfg.m - 1);
  el.div_in_v.resize(vel.dim(), el.dim());
  for (int j = 0; j < el.dim(); ++j) {
    VecPoly d = el.members[j].div_local();
    el.div_in_v.col(j) = coords_in_span(vel.members, d, vmax) / fr.h;
  }

  // DoF matrix: face normal moments, grad(V) moments, rotational moments.
  auto kerb = ker_dot_x_basis(cfg.r - 1);
  el.n_face_dofs = 2 * (cfg.r + 1);
  int n_grad = vel.dim() - 2;
  el.n_interior_dofs = n_grad + 2 * static_cast<int>(kerb.size());
  int ndof = 3 * el.n_face_dofs + el.n_interior_dofs;
  if (ndof != el.dim())
    throw std::runtime_error("build_sigma_local_basis: DoF count mismatch for " + cfg.tag());

  Eigen::MatrixXd A(ndof, el.dim());
  int row = 0;
  for (int e = 0; e < 3; ++e) {
    const CellFaceFrame& ff = fr.faces[e];
    for (int j = 0; j <= cfg.r; ++j)
      for (int c = 0; c < 2; ++c, ++row) {
        for (int col = 0; col < el.dim(); ++col) {
          double s = 0.0;
          for (int q = 0; q < ff.quad.size(); ++q) {
            Vec2 xh = fr.local(ff.quad.points.col(q));
            Vec2 tn = el.members[col].eval(xh) * ff.normal;
            s += ff.quad.weights[q] * tn[c] * std::pow(ff.sparam[q], j);
          }
          A(row, col) = s / ff.length;
        }
      }
  }
  for (size_t g = 2; g < vel.members.size(); ++g, ++row) {
    const VecPoly& v = vel.members[g];
    MatPoly grad;  // (grad v)_{ab} = d_b v_a, in local coordinates
    grad.e[0][0] = v.x.dx();
    grad.e[0][1] = v.x.dy();
    grad.e[1][0] = v.y.dx();
    grad.e[1][1] = v.y.dy();
    for (int col = 0; col < el.dim(); ++col) {
      double s = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          s += fr.integrate_product(el.members[col].e[a][b], grad.e[a][b]);
      A(row, col) = s / fr.area;
    }
  }
  for (const auto& q : kerb)
    for (int a = 0; a < 2; ++a, ++row)
      for (int col = 0; col < el.dim(); ++col) {
        double s = fr.integrate_product(el.members[col].e[a][0], q.x) +
                   fr.integrate_product(el.members[col].e[a][1], q.y);
        A(row, col) = s / fr.area;
      }

  el.dof_matrix = A;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  el.dof_condition = svd.singularValues()(0) / svd.singularValues().tail(1)(0);
  if (!(el.dof_condition < 1e12))
    throw std::runtime_error("build_sigma_local_basis: ill-conditioned DoF matrix (degenerate cell or basis bug)");
  el.dual = A.partialPivLu().solve(Eigen::MatrixXd::Identity(ndof, ndof));
  return el;
}

/// Matrix mapping Sigma coefficients to V_{k-1,m-1} coefficients of the
/// (physical) row-wise divergence.
inline const Eigen::MatrixXd& divergence_local(const TensorElement& el) { return el.div_in_v; }

// ---------------------------------------------------------------------------
// Global DoF maps
// ---------------------------------------------------------------------------

enum class SpaceTag { SigmaDiv, WgUnknowns, WgGradUnknowns, VDiv, BrokenV, BrokenScalar };

struct CoefficientField {
  SpaceTag tag;
  Eigen::VectorXd values;
};

/// Normal-continuous tensor space Sigma^div: shared face DoFs plus per-cell
/// interior DoFs.
struct SigmaDofMap {
  int per_face = 0;
  int per_cell = 0;
  int n_faces = 0, n_cells = 0;
  int total = 0;

  int face_offset(int f) const { return f * per_face; }
  int cell_offset(int t) const { return n_faces * per_face + t * per_cell; }
};

/// WG unknowns (u0, u_b, u_g): u0 blocks by cell, then per interior face its
/// u_b block followed by its u_g block. Boundary faces carry no unknowns.
struct WgDofMap {
  SpaceConfig cfg;
  int n0 = 0, nb = 0, ng = 0;  // per-cell / per-interior-face dims
  int n_cells = 0, n_ifaces = 0;
  std::vector<int> iface_index;  // face id -> compact interior index, -1 on boundary
  int total = 0;

  int u0_offset(int cell) const { return cell * n0; }
  int ub_offset(int iface) const { return n_cells * n0 + iface * (nb + ng); }
  int ug_offset(int iface) const { return ub_offset(iface) + nb; }
};

/// Normal-continuous vector space V^div (m >= 2).
struct VdivDofMap {
  int per_face = 0;
  int per_cell = 0;
  int n_faces = 0, n_cells = 0;
  int total = 0;

  int face_offset(int f) const { return f * per_face; }
  int cell_offset(int t) const { return n_faces * per_face + t * per_cell; }
};

struct BrokenMap {
  int per_cell = 0;
  int n_cells = 0;
  int total = 0;

  int offset(int t) const { return t * per_cell; }
};

struct DofMaps {
  SpaceConfig cfg;
  SigmaDofMap sigma;
  WgDofMap wg;
  VdivDofMap vdiv;
  BrokenMap broken_v;
  BrokenMap broken_scalar;
};

inline int ker_dot_x_dim(int j) { return j < 1 ? 0 : j * (j + 1) / 2; }

inline DofMaps build_global_maps(const SimplicialMesh& mesh, const SpaceConfig& cfg) {
  DofMaps maps;
  maps.cfg = cfg;

  int dimV = v_space_dim(cfg.k, cfg.m);
  maps.sigma.per_face = 2 * (cfg.r + 1);
  maps.sigma.per_cell = (dimV - 2) + 2 * ker_dot_x_dim(cfg.r - 1);
  maps.sigma.n_faces = mesh.n_faces();
  maps.sigma.n_cells = mesh.n_cells();
  maps.sigma.total = maps.sigma.n_faces * maps.sigma.per_face + maps.sigma.n_cells * maps.sigma.per_cell;

  maps.wg.cfg = cfg;
  maps.wg.n0 = poly_dim(cfg.m - 2);
  maps.wg.nb = cfg.k;
  maps.wg.ng = 2 * (cfg.r + 1);
  maps.wg.n_cells = mesh.n_cells();
  maps.wg.iface_index.assign(mesh.n_faces(), -1);
  int idx = 0;
  for (int f = 0; f < mesh.n_faces(); ++f)
    if (!mesh.face(f).boundary) maps.wg.iface_index[f] = idx++;
  maps.wg.n_ifaces = idx;
  maps.wg.total = maps.wg.n_cells * maps.wg.n0 + maps.wg.n_ifaces * (maps.wg.nb + maps.wg.ng);

  if (cfg.m >= 2) {
    maps.vdiv.per_face = cfg.k;
    maps.vdiv.per_cell = (poly_dim(cfg.m - 2) - 1) + ker_dot_x_dim(cfg.k - 2);
    maps.vdiv.n_faces = mesh.n_faces();
    maps.vdiv.n_cells = mesh.n_cells();
    maps.vdiv.total = maps.vdiv.n_faces * maps.vdiv.per_face + maps.vdiv.n_cells * maps.vdiv.per_cell;
  }

  maps.broken_v.per_cell = dimV;
  maps.broken_v.n_cells = mesh.n_cells();
  maps.broken_v.total = dimV * mesh.n_cells();

  maps.broken_scalar.per_cell = poly_dim(cfg.m - 2);
  maps.broken_scalar.n_cells = mesh.n_cells();
  maps.broken_scalar.total = maps.broken_scalar.per_cell * mesh.n_cells();

  return maps;
}

}  // namespace ssp4
