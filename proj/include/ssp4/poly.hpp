#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ssp4 {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// dim P_k on a triangle; 0 for negative k.
constexpr int poly_dim(int k) { return k < 0 ? 0 : (k + 1) * (k + 2) / 2; }

/// dim H_k (homogeneous polynomials of exact degree k); 0 for negative k.
constexpr int homog_dim(int k) { return k < 0 ? 0 : k + 1; }

/// Graded-lexicographic index of the monomial x^ax y^ay.
constexpr int monomial_index(int ax, int ay) {
  int d = ax + ay;
  return d * (d + 1) / 2 + ay;
}

/// Exponent pairs (ax, ay) of all monomials of total degree <= k, graded-lex.
inline std::vector<std::array<int, 2>> monomial_exponents(int k) {
  std::vector<std::array<int, 2>> e;
  e.reserve(poly_dim(k));
  for (int d = 0; d <= k; ++d)
    for (int ay = 0; ay <= d; ++ay) e.push_back({d - ay, ay});
  return e;
}

/// Exponent pairs of the monomial basis of H_k.
inline std::vector<std::array<int, 2>> homogeneous_exponents(int k) {
  std::vector<std::array<int, 2>> e;
  if (k < 0) return e;
  e.reserve(k + 1);
  for (int ay = 0; ay <= k; ++ay) e.push_back({k - ay, ay});
  return e;
}

/// Bivariate polynomial in local (centered, scaled) coordinates, stored as a
/// dense coefficient vector over the graded-lex monomial basis.
class Poly2 {
public:
  Poly2() = default;
  explicit Poly2(int degree) : deg_(degree), c_(Eigen::VectorXd::Zero(poly_dim(degree))) {}

  static Poly2 monomial(int ax, int ay, double coef = 1.0) {
    Poly2 p(ax + ay);
    p.c_[monomial_index(ax, ay)] = coef;
    return p;
  }

  bool is_zero() const { return deg_ < 0 || c_.isZero(0.0); }
  int degree() const { return deg_; }
  const Eigen::VectorXd& coeffs() const { return c_; }
  double coeff(int ax, int ay) const {
    if (ax < 0 || ay < 0 || ax + ay > deg_) return 0.0;
    return c_[monomial_index(ax, ay)];
  }

  double eval(const Vec2& xh) const {
    if (deg_ < 0) return 0.0;
    double s = 0.0;
    int idx = 0;
    for (int d = 0; d <= deg_; ++d)
      for (int ay = 0; ay <= d; ++ay, ++idx)
        s += c_[idx] * ipow(xh.x(), d - ay) * ipow(xh.y(), ay);
    return s;
  }

  /// Derivative with respect to the first local coordinate.
  Poly2 dx() const { return derive(0); }
  /// Derivative with respect to the second local coordinate.
  Poly2 dy() const { return derive(1); }

  Poly2 operator*(double s) const {
    Poly2 r = *this;
    r.c_ *= s;
    return r;
  }

  Poly2 operator+(const Poly2& o) const {
    if (deg_ < 0) return o;
    if (o.deg_ < 0) return *this;
    Poly2 r(std::max(deg_, o.deg_));
    r.c_.head(c_.size()) = c_;
    r.c_.head(o.c_.size()) += o.c_;
    return r;
  }

  Poly2 operator-(const Poly2& o) const { return *this + o * (-1.0); }

  friend Poly2 operator*(const Poly2& a, const Poly2& b) {
    if (a.deg_ < 0 || b.deg_ < 0) return Poly2();
    Poly2 r(a.deg_ + b.deg_);
    auto ea = monomial_exponents(a.deg_);
    auto eb = monomial_exponents(b.deg_);
    for (int i = 0; i < a.c_.size(); ++i) {
      if (a.c_[i] == 0.0) continue;
      for (int j = 0; j < b.c_.size(); ++j) {
        if (b.c_[j] == 0.0) continue;
        r.c_[monomial_index(ea[i][0] + eb[j][0], ea[i][1] + eb[j][1])] += a.c_[i] * b.c_[j];
      }
    }
    return r;
  }

private:
  static double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
  }

  Poly2 derive(int dir) const {
    if (deg_ <= 0) return Poly2();
    Poly2 r(deg_ - 1);
    auto ex = monomial_exponents(deg_);
    for (int i = 0; i < c_.size(); ++i) {
      int a = ex[i][dir];
      if (a == 0 || c_[i] == 0.0) continue;
      int nx = ex[i][0] - (dir == 0 ? 1 : 0);
      int ny = ex[i][1] - (dir == 1 ? 1 : 0);
      r.c_[monomial_index(nx, ny)] += a * c_[i];
    }
    return r;
  }

  int deg_ = -1;
  Eigen::VectorXd c_;
};

/// 2-component polynomial field in local coordinates.
struct VecPoly {
  Poly2 x, y;

  double eval_comp(int c, const Vec2& xh) const { return c == 0 ? x.eval(xh) : y.eval(xh); }
  Vec2 eval(const Vec2& xh) const { return Vec2(x.eval(xh), y.eval(xh)); }
  /// Divergence in local coordinates (physical divergence carries a 1/h factor).
  Poly2 div_local() const { return x.dx() + y.dy(); }
};

/// 2x2 tensor polynomial field, row-major entries.
struct MatPoly {
  Poly2 e[2][2];

  Mat2 eval(const Vec2& xh) const {
    Mat2 m;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) m(i, j) = e[i][j].eval(xh);
    return m;
  }
  /// Row-wise divergence in local coordinates.
  VecPoly div_local() const {
    VecPoly v;
    v.x = e[0][0].dx() + e[0][1].dy();
    v.y = e[1][0].dx() + e[1][1].dy();
    return v;
  }
};

// ---------------------------------------------------------------------------
// Scaled monomial bases
// ---------------------------------------------------------------------------

/// Scaled monomial basis ((x - x_c)/h)^a ((y - y_c)/h)^b of P_k on a triangle.
class TriMonomialBasis {
public:
  TriMonomialBasis() = default;
  TriMonomialBasis(const Vec2& center, double h, int degree)
      : center_(center), h_(h), deg_(degree) {}

  int degree() const { return deg_; }
  int size() const { return poly_dim(deg_); }
  const Vec2& center() const { return center_; }
  double scale() const { return h_; }

  Vec2 local(const Vec2& x) const { return (x - center_) / h_; }

  /// Values of all members at a physical point.
  Eigen::VectorXd eval(const Vec2& x) const {
    Eigen::VectorXd v(size());
    Vec2 xh = local(x);
    int idx = 0;
    for (int d = 0; d <= deg_; ++d)
      for (int ay = 0; ay <= d; ++ay, ++idx)
        v[idx] = std::pow(xh.x(), d - ay) * std::pow(xh.y(), ay);
    return v;
  }

  /// Physical gradients of all members at a physical point (2 x size).
  Eigen::Matrix2Xd grad(const Vec2& x) const {
    Eigen::Matrix2Xd g(2, size());
    Vec2 xh = local(x);
    int idx = 0;
    for (int d = 0; d <= deg_; ++d)
      for (int ay = 0; ay <= d; ++ay, ++idx) {
        int ax = d - ay;
        g(0, idx) = ax == 0 ? 0.0 : ax * std::pow(xh.x(), ax - 1) * std::pow(xh.y(), ay) / h_;
        g(1, idx) = ay == 0 ? 0.0 : ay * std::pow(xh.x(), ax) * std::pow(xh.y(), ay - 1) / h_;
      }
    return g;
  }

  Poly2 poly(int i) const {
    auto ex = monomial_exponents(deg_)[i];
    return Poly2::monomial(ex[0], ex[1]);
  }

private:
  Vec2 center_ = Vec2::Zero();
  double h_ = 1.0;
  int deg_ = 0;
};

/// Scaled monomial basis s^j on an edge, with s = t.(x - mid)/|F| in [-1/2, 1/2]
/// and the tangent t fixed from the lower-indexed vertex to the higher one.
class EdgeMonomialBasis {
public:
  EdgeMonomialBasis() = default;
  EdgeMonomialBasis(const Vec2& a, const Vec2& b, int degree)
      : mid_(0.5 * (a + b)), h_((b - a).norm()), tangent_((b - a).normalized()), deg_(degree) {}

  int degree() const { return deg_; }
  int size() const { return deg_ + 1; }
  double length() const { return h_; }
  const Vec2& midpoint() const { return mid_; }
  const Vec2& tangent() const { return tangent_; }

  double param(const Vec2& x) const { return tangent_.dot(x - mid_) / h_; }
  Vec2 point(double s) const { return mid_ + s * h_ * tangent_; }

  Eigen::VectorXd eval_param(double s) const {
    Eigen::VectorXd v(size());
    double p = 1.0;
    for (int j = 0; j <= deg_; ++j) {
      v[j] = p;
      p *= s;
    }
    return v;
  }

private:
  Vec2 mid_ = Vec2::Zero();
  double h_ = 1.0;
  Vec2 tangent_ = Vec2::UnitX();
  int deg_ = 0;
};

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

inline constexpr int kMaxQuadratureDegree = 50;

/// Gauss-Legendre nodes/weights on [0,1], computed by Newton iteration.
inline void gauss_legendre_01(int n, Eigen::VectorXd& x, Eigen::VectorXd& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    // initial guess on [-1,1]
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2 * j - 1) * t * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    double p0 = 1.0, p1 = t;
    for (int j = 2; j <= n; ++j) {
      double p2 = ((2 * j - 1) * t * p1 - (j - 1) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (t * p1 - p0) / (t * t - 1.0);
    x[n - 1 - i] = 0.5 * (1.0 + t);
    w[n - 1 - i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
}

/// Quadrature on the reference triangle {x,y >= 0, x+y <= 1}: barycentric
/// points and weights in reference area measure (weights sum to 1/2).
struct QuadratureRule {
  Eigen::Matrix<double, Eigen::Dynamic, 3> bary;
  Eigen::VectorXd weights;
  int degree = 0;

  int size() const { return static_cast<int>(weights.size()); }
};

/// Rule exact for all polynomials of total degree <= `degree`, built from a
/// Duffy-collapsed tensor Gauss rule.
inline QuadratureRule triangle_quadrature(int degree) {
  if (degree < 0 || degree > kMaxQuadratureDegree)
    throw std::invalid_argument("triangle_quadrature: unsupported degree");
  int p = degree / 2 + 2;  // covers the extra Jacobian power
  Eigen::VectorXd gx, gw;
  gauss_legendre_01(p, gx, gw);
  QuadratureRule rule;
  rule.degree = degree;
  rule.bary.resize(p * p, 3);
  rule.weights.resize(p * p);
  int q = 0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j, ++q) {
      double u = gx[i], v = gx[j];
      double x = u * (1.0 - v), y = u * v;
      rule.bary(q, 0) = 1.0 - x - y;
      rule.bary(q, 1) = x;
      rule.bary(q, 2) = y;
      rule.weights[q] = gw[i] * gw[j] * u;
    }
  return rule;
}

/// Quadrature on [0,1] (affine edge parameter), weights sum to 1.
struct EdgeQuadratureRule {
  Eigen::VectorXd t;
  Eigen::VectorXd w;
  int degree = 0;

  int size() const { return static_cast<int>(w.size()); }
};

inline EdgeQuadratureRule edge_quadrature(int degree) {
  if (degree < 0 || degree > kMaxQuadratureDegree)
    throw std::invalid_argument("edge_quadrature: unsupported degree");
  EdgeQuadratureRule rule;
  rule.degree = degree;
  gauss_legendre_01(degree / 2 + 1, rule.t, rule.w);
  return rule;
}

/// Rule mapped onto a physical triangle: points and area-measure weights.
struct MappedQuadrature {
  Eigen::Matrix2Xd points;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(weights.size()); }
};

inline MappedQuadrature map_to_triangle(const QuadratureRule& rule, const Vec2& v0,
                                        const Vec2& v1, const Vec2& v2) {
  MappedQuadrature m;
  int n = rule.size();
  m.points.resize(2, n);
  m.weights.resize(n);
  double area2 = std::abs((v1 - v0).x() * (v2 - v0).y() - (v1 - v0).y() * (v2 - v0).x());
  for (int q = 0; q < n; ++q) {
    m.points.col(q) = rule.bary(q, 0) * v0 + rule.bary(q, 1) * v1 + rule.bary(q, 2) * v2;
    m.weights[q] = rule.weights[q] * area2;  // ref weights sum to 1/2
  }
  return m;
}

inline MappedQuadrature map_to_edge(const EdgeQuadratureRule& rule, const Vec2& a, const Vec2& b) {
  MappedQuadrature m;
  int n = rule.size();
  m.points.resize(2, n);
  m.weights.resize(n);
  double len = (b - a).norm();
  for (int q = 0; q < n; ++q) {
    m.points.col(q) = a + rule.t[q] * (b - a);
    m.weights[q] = rule.w[q] * len;
  }
  return m;
}

}  // namespace ssp4
