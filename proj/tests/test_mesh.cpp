#include "ssp4/mesh.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace ssp4;

TEST_CASE("uniform mesh entity counts") {
  auto m1 = SimplicialMesh::uniform_unit_square(1);
  CHECK(m1.n_cells() == 2);
  CHECK(m1.n_faces() == 5);
  CHECK(m1.n_vertices() == 4);

  auto m2 = SimplicialMesh::uniform_unit_square(2);
  CHECK(m2.n_cells() == 8);
  CHECK(m2.n_faces() == 16);
  CHECK(m2.n_vertices() == 9);
  CHECK(m2.n_vertices() - m2.n_faces() + m2.n_cells() == 1);  // Euler

  auto m4 = SimplicialMesh::uniform_unit_square(4);
  CHECK(m4.n_cells() == 32);
  CHECK(m4.n_faces() == 56);
  CHECK(m4.n_boundary_faces() == 16);
}

TEST_CASE("uniform mesh rejects n = 0") {
  CHECK_THROWS_AS(SimplicialMesh::uniform_unit_square(0), std::invalid_argument);
}

TEST_CASE("jump context") {
  auto mesh = SimplicialMesh::uniform_unit_square(2);
  int interior = -1, boundary = -1;
  for (int f = 0; f < mesh.n_faces(); ++f)
    (mesh.face(f).boundary ? boundary : interior) = f;
  REQUIRE(interior >= 0);
  REQUIRE(boundary >= 0);

  auto ic = mesh.jump_context(interior);
  CHECK(ic.n_cells == 2);
  CHECK(ic.signs[0] == 1.0);
  CHECK(ic.signs[1] == -1.0);
  CHECK(ic.cells[0] < ic.cells[1]);  // normal points from lower to higher cell index

  auto bc = mesh.jump_context(boundary);
  CHECK(bc.n_cells == 1);
  CHECK(bc.signs[0] == 1.0);

  // constant field: jump = c (+1) + c (-1) = 0 on interior faces
  double c = 3.7;
  CHECK(c * ic.signs[0] + c * ic.signs[1] == 0.0);

  CHECK_THROWS_AS(mesh.jump_context(-1), std::out_of_range);
  CHECK_THROWS_AS(mesh.jump_context(mesh.n_faces()), std::out_of_range);
}

TEST_CASE("mesh geometric invariants") {
  for (int n : {1, 2, 3, 4, 7}) {
    auto mesh = SimplicialMesh::uniform_unit_square(n);
    for (int f = 0; f < mesh.n_faces(); ++f)
      CHECK(std::abs(mesh.face(f).normal.norm() - 1.0) < 1e-14);
    for (int t = 0; t < mesh.n_cells(); ++t) {
      Vec2 s = Vec2::Zero();
      for (const auto& cf : mesh.cell_faces(t))
        s += mesh.face(cf.face).length * cf.sign * mesh.face(cf.face).normal;
      CHECK(s.norm() < 1e-14);
      CHECK(mesh.cell_area(t) == Catch::Approx(0.5 / (n * n)).epsilon(1e-13));
      CHECK(mesh.cell_diameter(t) == Catch::Approx(std::sqrt(2.0) / n).epsilon(1e-13));
    }
    // interior face pairs share exactly the two face vertices
    for (int f = 0; f < mesh.n_faces(); ++f) {
      const Face& F = mesh.face(f);
      if (F.boundary) {
        CHECK(F.cell_minus == -1);
        continue;
      }
      for (int t : {F.cell_plus, F.cell_minus}) {
        int shared = 0;
        for (int v : mesh.cell(t))
          if (v == F.v0 || v == F.v1) ++shared;
        CHECK(shared == 2);
      }
    }
  }
}

TEST_CASE("boundary normals point outward") {
  auto mesh = SimplicialMesh::uniform_unit_square(3);
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const Face& F = mesh.face(f);
    if (!F.boundary) continue;
    Vec2 mid = 0.5 * (mesh.vertex(F.v0) + mesh.vertex(F.v1));
    Vec2 outside = mid + 1e-3 * F.normal;
    bool out = outside.x() < 0 || outside.x() > 1 || outside.y() < 0 || outside.y() > 1;
    CHECK(out);
  }
}

TEST_CASE("mesh dump round-trips") {
  auto mesh = SimplicialMesh::uniform_unit_square(2);
  std::ostringstream os;
  mesh.dump(os);
  std::istringstream is(os.str());
  std::vector<Vec2> verts;
  std::vector<std::array<int, 3>> cells;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string t;
    while (ls >> t) toks.push_back(t);
    if (toks.size() == 2)
      verts.emplace_back(std::stod(toks[0]), std::stod(toks[1]));
    else if (toks.size() == 3)
      cells.push_back({std::stoi(toks[0]), std::stoi(toks[1]), std::stoi(toks[2])});
  }
  REQUIRE(static_cast<int>(verts.size()) == mesh.n_vertices());
  REQUIRE(static_cast<int>(cells.size()) == mesh.n_cells());
  for (int v = 0; v < mesh.n_vertices(); ++v) CHECK((verts[v] - mesh.vertex(v)).norm() < 1e-12);
  for (int t = 0; t < mesh.n_cells(); ++t) CHECK(cells[t] == mesh.cell(t));
}
