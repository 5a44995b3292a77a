#include "ssp4/poly.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>

using namespace ssp4;

namespace {

// Reference-triangle monomial integral: int x^a y^b = a! b! / (a+b+2)!.
double ref_tri_integral(int a, int b) {
  double v = 1.0;
  for (int i = 1; i <= a; ++i) v *= i;
  for (int i = 1; i <= b; ++i) v *= i;
  for (int i = 1; i <= a + b + 2; ++i) v /= i;
  return v;
}

// Analytic integral of ((x-c)/h)^a ((y-c)/h)^b over a physical triangle,
// via exact expansion in barycentric coordinates. Independent of the
// quadrature machinery.
struct BaryPoly {
  // coefficients over lambda1^i lambda2^j
  std::map<std::pair<int, int>, double> c;

  static BaryPoly constant(double v) {
    BaryPoly p;
    p.c[{0, 0}] = v;
    return p;
  }
  BaryPoly mul(const BaryPoly& o) const {
    BaryPoly r;
    for (const auto& [ea, va] : c)
      for (const auto& [eb, vb] : o.c)
        r.c[{ea.first + eb.first, ea.second + eb.second}] += va * vb;
    return r;
  }
  BaryPoly add_scaled(const BaryPoly& o, double s) const {
    BaryPoly r = *this;
    for (const auto& [e, v] : o.c) r.c[e] += s * v;
    return r;
  }
  double integrate_physical(double area) const {
    double s = 0.0;
    for (const auto& [e, v] : c) s += v * ref_tri_integral(e.first, e.second);
    return s * 2.0 * area;  // physical measure
  }
};

double analytic_monomial_integral(const Vec2& v0, const Vec2& v1, const Vec2& v2,
                                  const Vec2& center, double h, int a, int b) {
  // xhat and yhat are affine in (lambda1, lambda2)
  BaryPoly xh = BaryPoly::constant((v0.x() - center.x()) / h);
  xh.c[{1, 0}] += (v1.x() - v0.x()) / h;
  xh.c[{0, 1}] += (v2.x() - v0.x()) / h;
  BaryPoly yh = BaryPoly::constant((v0.y() - center.y()) / h);
  yh.c[{1, 0}] += (v1.y() - v0.y()) / h;
  yh.c[{0, 1}] += (v2.y() - v0.y()) / h;
  BaryPoly p = BaryPoly::constant(1.0);
  for (int i = 0; i < a; ++i) p = p.mul(xh);
  for (int i = 0; i < b; ++i) p = p.mul(yh);
  double area =
      0.5 * std::abs((v1 - v0).x() * (v2 - v0).y() - (v1 - v0).y() * (v2 - v0).x());
  return p.integrate_physical(area);
}

}  // namespace

TEST_CASE("monomial basis dimensions") {
  CHECK(poly_dim(0) == 1);
  CHECK(poly_dim(3) == 10);
  CHECK(poly_dim(-1) == 0);
  TriMonomialBasis b0(Vec2(0.3, 0.4), 0.5, 0);
  CHECK(b0.size() == 1);
  TriMonomialBasis b3(Vec2(0.3, 0.4), 0.5, 3);
  CHECK(b3.size() == 10);

  CHECK(homog_dim(0) == 1);
  CHECK(homog_dim(2) == 3);
  // P_k decomposes into homogeneous layers
  for (int k = 0; k <= 5; ++k) {
    int sum = 0;
    for (int j = 0; j <= k; ++j) sum += homog_dim(j);
    CHECK(sum == poly_dim(k));
    CHECK(static_cast<int>(homogeneous_exponents(k).size()) == homog_dim(k));
  }
}

TEST_CASE("scaled monomial gradient") {
  Vec2 c(0.3, 0.7);
  double h = 0.25;
  TriMonomialBasis basis(c, h, 2);
  Vec2 x(0.4, 0.6);
  auto g = basis.grad(x);
  // member 1 is ((x-cx)/h)^1: gradient (1/h, 0)
  CHECK(g(0, 1) == Catch::Approx(1.0 / h).epsilon(1e-14));
  CHECK(g(1, 1) == Catch::Approx(0.0).margin(1e-14));
  // member 2 is ((y-cy)/h)^1
  CHECK(g(0, 2) == Catch::Approx(0.0).margin(1e-14));
  CHECK(g(1, 2) == Catch::Approx(1.0 / h).epsilon(1e-14));
}

TEST_CASE("Poly2 arithmetic") {
  Poly2 p = Poly2::monomial(2, 1, 3.0) + Poly2::monomial(0, 1, -1.0);
  Vec2 x(0.7, -0.4);
  CHECK(p.eval(x) == Catch::Approx(3.0 * 0.49 * -0.4 + 0.4).epsilon(1e-14));
  Poly2 dx = p.dx();
  CHECK(dx.eval(x) == Catch::Approx(6.0 * 0.7 * -0.4).epsilon(1e-14));
  Poly2 dy = p.dy();
  CHECK(dy.eval(x) == Catch::Approx(3.0 * 0.49 - 1.0).epsilon(1e-14));
  Poly2 prod = p * Poly2::monomial(1, 0, 2.0);
  CHECK(prod.eval(x) == Catch::Approx(p.eval(x) * 2.0 * 0.7).epsilon(1e-13));
}

TEST_CASE("triangle quadrature spot values") {
  auto rule = triangle_quadrature(4);
  // reference area
  CHECK(rule.weights.sum() == Catch::Approx(0.5).epsilon(1e-14));
  // int x^2 y over the reference triangle = 2! 1! / 5! = 1/60
  double v = 0.0;
  for (int q = 0; q < rule.size(); ++q)
    v += rule.weights[q] * rule.bary(q, 1) * rule.bary(q, 1) * rule.bary(q, 2);
  CHECK(v == Catch::Approx(1.0 / 60.0).epsilon(1e-13));

  auto erule = edge_quadrature(4);
  double e = 0.0;
  for (int q = 0; q < erule.size(); ++q) e += erule.w[q] * std::pow(erule.t[q], 4);
  CHECK(e == Catch::Approx(0.2).epsilon(1e-13));
}

TEST_CASE("quadrature exactness up to degree 20") {
  double dev = 0.0;
  for (int deg = 0; deg <= 20; ++deg) {
    auto rule = triangle_quadrature(deg);
    for (int a = 0; a <= deg; ++a)
      for (int b = 0; a + b <= deg; ++b) {
        double got = 0.0;
        for (int q = 0; q < rule.size(); ++q)
          got += rule.weights[q] * std::pow(rule.bary(q, 1), a) * std::pow(rule.bary(q, 2), b);
        dev = std::max(dev, std::abs(got - ref_tri_integral(a, b)) / ref_tri_integral(a, b));
      }
  }
  CHECK(dev < 1e-13);
}

TEST_CASE("quadrature rejects unsupported degree") {
  CHECK_THROWS_AS(triangle_quadrature(kMaxQuadratureDegree + 1), std::invalid_argument);
  CHECK_THROWS_AS(edge_quadrature(-1), std::invalid_argument);
}

TEST_CASE("mass matrix: quadrature equals analytic integration") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec2 v0(unif(rng), unif(rng)), v1(v0 + Vec2(0.4, 0.1)), v2(v0 + Vec2(0.1, 0.5));
  Vec2 c = (v0 + v1 + v2) / 3.0;
  double h = std::max({(v1 - v0).norm(), (v2 - v1).norm(), (v0 - v2).norm()});
  int k = 3;
  TriMonomialBasis basis(c, h, k);
  auto exps = monomial_exponents(k);

  auto rule = triangle_quadrature(2 * k);
  auto mq = map_to_triangle(rule, v0, v1, v2);
  Eigen::MatrixXd Mq = Eigen::MatrixXd::Zero(basis.size(), basis.size());
  for (int q = 0; q < mq.size(); ++q) {
    Eigen::VectorXd vals = basis.eval(mq.points.col(q));
    Mq += mq.weights[q] * vals * vals.transpose();
  }
  for (int i = 0; i < basis.size(); ++i)
    for (int j = 0; j < basis.size(); ++j) {
      double exact = analytic_monomial_integral(v0, v1, v2, c, h, exps[i][0] + exps[j][0],
                                                exps[i][1] + exps[j][1]);
      CHECK(Mq(i, j) == Catch::Approx(exact).epsilon(1e-12).margin(1e-15));
    }
}

TEST_CASE("mass matrix condition number is invariant under rescaling") {
  Vec2 a(0.0, 0.0), b(1.0, 0.2), c(0.3, 0.9);
  auto cond_of = [](Vec2 a, Vec2 b, Vec2 c) {
    Vec2 ctr = (a + b + c) / 3.0;
    double h = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
    TriMonomialBasis basis(ctr, h, 3);
    auto rule = triangle_quadrature(6);
    auto mq = map_to_triangle(rule, a, b, c);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(basis.size(), basis.size());
    for (int q = 0; q < mq.size(); ++q) {
      Eigen::VectorXd vals = basis.eval(mq.points.col(q));
      M += mq.weights[q] * vals * vals.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    CHECK(es.eigenvalues().minCoeff() > 0.0);  // SPD
    return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  };
  double c1 = cond_of(a, b, c);
  for (double s : {1e-3, 1e3}) {
    double cs = cond_of(s * a, s * b, s * c);
    CHECK(cs == Catch::Approx(c1).epsilon(1e-8));
  }
}

TEST_CASE("edge basis parameterization") {
  Vec2 a(0.2, 0.1), b(0.8, 0.9);
  EdgeMonomialBasis eb(a, b, 3);
  CHECK(eb.param(a) == Catch::Approx(-0.5).epsilon(1e-14));
  CHECK(eb.param(b) == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(eb.param(0.5 * (a + b)) == Catch::Approx(0.0).margin(1e-14));
  CHECK((eb.point(0.25) - (a + 0.75 * (b - a))).norm() < 1e-14);
}
