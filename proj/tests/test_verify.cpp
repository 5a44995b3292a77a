#include "ssp4/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace ssp4;

namespace {

double fd_partial(const std::function<double(const Vec2&)>& f, const Vec2& x, int dir, double h) {
  Vec2 e = dir == 0 ? Vec2(h, 0) : Vec2(0, h);
  return (f(x + e) - f(x - e)) / (2 * h);
}

std::string format_report(const PropertyReport& rep) {
  std::ostringstream os;
  char buf[64];
  for (const auto& c : rep.checks) {
    std::snprintf(buf, sizeof(buf), "%.6e", c.deviation);
    os << c.name << " " << (c.pass ? "PASS" : "FAIL") << " " << buf << "\n";
  }
  return os.str();
}

}  // namespace

TEST_CASE("manufactured closed forms match finite differences") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  double h = 1e-4;
  for (int i = 0; i < 20; ++i) {
    Vec2 x(unif(rng), unif(rng));
    // gradient of example1
    Vec2 g = example1::grad_u(x);
    CHECK(fd_partial(example1::u, x, 0, h) == Catch::Approx(g[0]).epsilon(1e-6).margin(1e-6));
    CHECK(fd_partial(example1::u, x, 1, h) == Catch::Approx(g[1]).epsilon(1e-6).margin(1e-6));
    // Hessian from the gradient
    Mat2 H = example1::hess_u(x);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        double fd = fd_partial([&](const Vec2& y) { return example1::grad_u(y)[a]; }, x, b, h);
        CHECK(fd == Catch::Approx(H(a, b)).epsilon(1e-6).margin(1e-5));
      }
    CHECK(example1::lap_u(x) == Catch::Approx(H.trace()).epsilon(1e-12));
    // bilaplacian as the FD laplacian of lap_u
    double fdlap = 0.0;
    for (int d = 0; d < 2; ++d) {
      Vec2 e = d == 0 ? Vec2(h, 0) : Vec2(0, h);
      fdlap += (example1::lap_u(x + e) - 2 * example1::lap_u(x) + example1::lap_u(x - e)) / (h * h);
    }
    CHECK(fdlap == Catch::Approx(example1::bilap_u(x)).epsilon(1e-6).margin(1e-3));
    // example3
    Vec2 g3 = example3::grad_ubar(x);
    CHECK(fd_partial(example3::ubar, x, 0, h) == Catch::Approx(g3[0]).epsilon(1e-6).margin(1e-6));
    CHECK(fd_partial(example3::ubar, x, 1, h) == Catch::Approx(g3[1]).epsilon(1e-6).margin(1e-6));
    double fdlap3 = 0.0;
    for (int d = 0; d < 2; ++d) {
      Vec2 e = d == 0 ? Vec2(h, 0) : Vec2(0, h);
      fdlap3 += (example3::ubar(x + e) - 2 * example3::ubar(x) + example3::ubar(x - e)) / (h * h);
    }
    CHECK(-fdlap3 == Catch::Approx(example3::f(x)).epsilon(1e-6).margin(1e-4));
  }
}

TEST_CASE("example1 satisfies the clamped boundary conditions") {
  for (double t : {0.0, 0.17, 0.5, 0.83, 1.0}) {
    for (Vec2 x : {Vec2(t, 0.0), Vec2(t, 1.0), Vec2(0.0, t), Vec2(1.0, t)}) {
      CHECK(std::abs(example1::u(x)) < 1e-14);
      CHECK(example1::grad_u(x).norm() < 1e-12);
    }
  }
}

TEST_CASE("example3 forcing is independent of eps") {
  ManufacturedCase cse = ManufacturedCase::make_example3();
  Vec2 x(0.3, 0.6);
  CHECK(cse.forcing(1e-6)(x) == cse.forcing(1e-10)(x));
}

TEST_CASE("discrete H2 seminorm") {
  SpaceConfig cfg(1, 1, 1);
  auto mesh = SimplicialMesh::uniform_unit_square(1);
  int dv = v_space_dim(cfg.k, cfg.m);

  SECTION("hand-computed value on the two-cell mesh") {
    // g = c1 on cell 0 (lower: boundary edges bottom+right), c2 on cell 1
    double c1 = 0.75, c2 = -0.4;
    DiscreteState st;
    st.wcoef.resize(2, dv);
    st.wcoef.setZero();
    st.wcoef(0, 0) = -c1;  // wcoef enters as g = Q grad - w; use grad_exact = 0
    st.wcoef(1, 0) = -c2;
    st.sigma.resize(2, sigma_space_dim(cfg));
    st.sigma.setZero();
    auto zero_grad = [](const Vec2&) { return Vec2::Zero(); };
    double got = discrete_h2_seminorm_diff(mesh, cfg, zero_grad, st);
    // |g|_{1,h} = 0; jumps: interior diagonal (length sqrt2): (c1-c2)^2 * sqrt2 / sqrt2,
    // boundary faces (length 1): two with c1^2, two with c2^2
    double expected = std::sqrt((c1 - c2) * (c1 - c2) + 2 * c1 * c1 + 2 * c2 * c2);
    CHECK(got == Catch::Approx(expected).epsilon(1e-12));

    SECTION("continuous piecewise-constant interior jump vanishes") {
      st.wcoef(1, 0) = -c1;
      double same = discrete_h2_seminorm_diff(mesh, cfg, zero_grad, st);
      CHECK(same == Catch::Approx(std::sqrt(4 * c1 * c1)).epsilon(1e-12));
    }
  }

  SECTION("exact polynomial data gives zero") {
    SpaceConfig c22(2, 2, 2);
    auto m2 = SimplicialMesh::uniform_unit_square(2);
    auto gp = [](const Vec2& x) { return Vec2(2.0 * x.x() * x.y(), x.x() * x.x()); };
    DiscreteState st;
    st.wcoef.resize(m2.n_cells(), v_space_dim(2, 2));
    st.sigma.resize(m2.n_cells(), sigma_space_dim(c22));
    st.sigma.setZero();
    for (int t = 0; t < m2.n_cells(); ++t) {
      CellOperators ops(m2, t, c22);
      st.wcoef.row(t) = project_to_v(ops, gp, 10).transpose();
    }
    CHECK(discrete_h2_seminorm_diff(m2, c22, gp, st) < 1e-11);
  }
}

TEST_CASE("zero-error consistency for exact polynomial data") {
  // exact DoF samples of u in P_k with exact sigma coefficients: all norms vanish
  SpaceConfig cfg(2, 2, 2);
  auto mesh = SimplicialMesh::uniform_unit_square(2);
  auto u = [](const Vec2& x) {
    return x.x() * x.x() + 0.5 * x.y() * x.y() - x.x() * x.y() + x.x();
  };
  auto gu = [](const Vec2& x) {
    return Vec2(2 * x.x() - x.y() + 1, x.y() - x.x());
  };
  auto hu = [](const Vec2&) {
    Mat2 h;
    h << 2.0, -1.0, -1.0, 1.0;
    return h;
  };
  double eps = 0.7;
  WgDataArrays arrays;
  DofMaps maps = build_global_maps(mesh, cfg);
  arrays.u0.resize(mesh.n_cells(), maps.wg.n0);
  arrays.ub.resize(mesh.n_faces(), maps.wg.nb);
  arrays.ug.resize(mesh.n_faces(), maps.wg.ng);
  for (int t = 0; t < mesh.n_cells(); ++t) {
    CellFrame fr = make_cell_frame(mesh, t, 10, 10);
    arrays.u0.row(t) = project_scalar(fr, u, cfg.m - 2, 10).transpose();
  }
  auto erule = edge_quadrature(10);
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const Face& F = mesh.face(f);
    EdgeMonomialBasis eb(mesh.vertex(F.v0), mesh.vertex(F.v1), cfg.k);
    auto mq = map_to_edge(erule, mesh.vertex(F.v0), mesh.vertex(F.v1));
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(cfg.k, cfg.k);
    Eigen::VectorXd rb = Eigen::VectorXd::Zero(cfg.k);
    Eigen::MatrixXd Mg = Eigen::MatrixXd::Zero(cfg.r + 1, cfg.r + 1);
    Eigen::MatrixXd rg = Eigen::MatrixXd::Zero(cfg.r + 1, 2);
    for (int q = 0; q < mq.size(); ++q) {
      double s = eb.param(mq.points.col(q));
      Eigen::VectorXd sb(cfg.k), sg(cfg.r + 1);
      for (int j = 0; j < cfg.k; ++j) sb[j] = std::pow(s, j);
      for (int j = 0; j <= cfg.r; ++j) sg[j] = std::pow(s, j);
      M += mq.weights[q] * sb * sb.transpose();
      rb += mq.weights[q] * u(mq.points.col(q)) * sb;
      Mg += mq.weights[q] * sg * sg.transpose();
      rg += mq.weights[q] * sg * gu(mq.points.col(q)).transpose();
    }
    arrays.ub.row(f) = M.llt().solve(rb).transpose();
    Eigen::MatrixXd gc = Mg.llt().solve(rg);
    for (int j = 0; j <= cfg.r; ++j)
      for (int c = 0; c < 2; ++c) arrays.ug(f, 2 * j + c) = gc(j, c);
  }
  DiscreteState st = state_from_wg_arrays(mesh, cfg, arrays, eps);
  ReferenceFunctions ref;
  ref.grad = gu;
  ref.hess = hu;
  ref.has_hess = true;
  ErrorReport rep = error_norms_ref(mesh, ref, cfg, st, eps);
  CHECK(*rep.err1 < 1e-9);
  CHECK(*rep.err_sigma < 1e-9);
  CHECK(*rep.err_u < 1e-9);
}

TEST_CASE("error norms reproduce published values") {
  SECTION("example3, k=1, eps=1e-6, n=16") {
    ErrorReport rep = run_case(ManufacturedCase::make_example3(), SpaceConfig(1, 1, 1), 1e-6, 16,
                               SchemeKind::PrimalWg);
    CHECK(*rep.err3 == Catch::Approx(1.624e-01).epsilon(0.10));
  }
  SECTION("example1, k=3, eps=1, n=4") {
    ErrorReport rep = run_case(ManufacturedCase::make_example1(), SpaceConfig(3, 3, 3), 1.0, 4,
                               SchemeKind::PrimalWg);
    CHECK(*rep.err1 == Catch::Approx(5.079e-01).epsilon(0.10));
  }
  SECTION("Err_1 >= the eps^-1 sigma component") {
    ErrorReport rep = run_case(ManufacturedCase::make_example1(), SpaceConfig(1, 1, 1), 1.0, 8,
                               SchemeKind::PrimalWg);
    CHECK(*rep.err1 >= *rep.err_sigma);
    CHECK(*rep.err1 >= 0.0);
  }
  SECTION("saddle path, example1, k=1, eps=1, n=16") {
    ErrorReport rep = run_case(ManufacturedCase::make_example1(), SpaceConfig(1, 1, 1), 1.0, 16,
                               SchemeKind::SaddleWg);
    CHECK(*rep.err_sigma == Catch::Approx(1.959e-01).epsilon(0.10));
    CHECK(*rep.err_u == Catch::Approx(9.855e-02).epsilon(0.10));
  }
  SECTION("first-order path, example1, k=2, eps=1, n=8 reproduces Err_1") {
    ErrorReport rep = run_case(ManufacturedCase::make_example1(), SpaceConfig(2, 2, 2), 1.0, 8,
                               SchemeKind::FirstOrder);
    CHECK(*rep.err1 == Catch::Approx(1.453).epsilon(0.10));
  }
}

TEST_CASE("convergence studies reproduce published rates") {
  SECTION("example1, k=2, eps=1: rates 1.95, 1.99") {
    StudyRequest req;
    req.cse = ManufacturedCase::make_example1();
    req.cfg = SpaceConfig(2, 2, 2);
    req.eps = {1.0};
    req.ns = {8, 16, 32};
    req.norms = {NormId::Err1};
    auto tables = convergence_study(req);
    REQUIRE(tables.size() == 1);
    const auto& rows = tables[0].rows;
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].error == Catch::Approx(1.453).epsilon(0.10));
    CHECK(rows[1].rate == Catch::Approx(1.95).margin(0.1));
    CHECK(rows[2].rate == Catch::Approx(1.99).margin(0.1));
  }
  SECTION("example3, k=1, eps=1e-6: rates 1.00") {
    StudyRequest req;
    req.cse = ManufacturedCase::make_example3();
    req.cfg = SpaceConfig(1, 1, 1);
    req.eps = {1e-6};
    req.ns = {16, 32, 64};
    req.threads = 2;
    auto tables = convergence_study(req);
    REQUIRE(tables.size() == 1);
    CHECK(tables[0].rows[1].rate == Catch::Approx(1.00).margin(0.1));
    CHECK(tables[0].rows[2].rate == Catch::Approx(1.00).margin(0.1));
  }
  SECTION("example1, (r,k,m)=(2,2,3), eps=1: Err_sigma 5.020e-02 -> 6.541e-03") {
    StudyRequest req;
    req.cse = ManufacturedCase::make_example1();
    req.cfg = SpaceConfig(2, 2, 3);
    req.eps = {1.0};
    req.ns = {8, 16};
    req.norms = {NormId::ErrSigma};
    auto tables = convergence_study(req);
    REQUIRE(tables.size() == 1);
    CHECK(tables[0].rows[0].error == Catch::Approx(5.020e-02).epsilon(0.10));
    CHECK(tables[0].rows[1].error == Catch::Approx(6.541e-03).epsilon(0.10));
    CHECK(tables[0].rows[1].rate == Catch::Approx(2.94).margin(0.1));
  }
}

TEST_CASE("equivalence suite spot cases") {
  ManufacturedCase cse = ManufacturedCase::make_example1();
  SECTION("zero forcing passes trivially") {
    auto mesh = SimplicialMesh::uniform_unit_square(2);
    EquivalenceReport rep =
        equivalence_suite(mesh, SpaceConfig(2, 2, 2), 1.0, [](const Vec2&) { return 0.0; });
    CHECK(rep.pass);
  }
  SECTION("example1 data, k=2, n=4, eps=1") {
    auto mesh = SimplicialMesh::uniform_unit_square(4);
    EquivalenceReport rep = equivalence_suite(mesh, SpaceConfig(2, 2, 2), 1.0, cse.forcing(1.0));
    CHECK(rep.pass);
    CHECK(rep.dev_first_order >= 0.0);
  }
  SECTION("example1 data, k=1, n=4, eps=1e-3: first-order skipped") {
    auto mesh = SimplicialMesh::uniform_unit_square(4);
    EquivalenceReport rep =
        equivalence_suite(mesh, SpaceConfig(1, 1, 1), 1e-3, cse.forcing(1e-3));
    CHECK(rep.pass);
    CHECK(rep.dev_first_order < 0.0);
  }
}

TEST_CASE("property suite is deterministic and passes") {
  PropertyOptions opts;
  opts.seed = 42;
  PropertyReport a = property_suite(opts);
  CHECK(a.all_pass);
  PropertyReport b = property_suite(opts);
  CHECK(format_report(a) == format_report(b));
}
