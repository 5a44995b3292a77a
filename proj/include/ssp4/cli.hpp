#pragma once

#include "ssp4/verify.hpp"
#include "ssp4/vtk.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ssp4 {

/// Parsed command-line / config-file state for one invocation.
struct RunConfig {
  std::string command;
  std::string case_name = "example1";
  int k = 1, r = -1, m = -1;  // r, m default to k
  std::vector<double> eps;
  std::vector<int> ns;
  std::string scheme = "primal-wg";
  std::string outdir = ".";
  std::string field_out = "field.vtk";
  std::string mesh_out;
  int quad_degree = -1;
  unsigned long long seed = 42;
  bool condense = false;
  bool inject_perturbation = false;
  std::vector<std::string> norms;

  std::string config_file;

  SpaceConfig space_config() const {
    return SpaceConfig(r < 0 ? k : r, k, m < 0 ? k : m);
  }
  SchemeKind scheme_kind() const {
    if (scheme == "primal-wg") return SchemeKind::PrimalWg;
    if (scheme == "saddle-wg") return SchemeKind::SaddleWg;
    if (scheme == "first-order") return SchemeKind::FirstOrder;
    throw CLI::ValidationError("--scheme", "unknown scheme '" + scheme + "'");
  }
  SolveOptions solve_options() const {
    SolveOptions o;
    o.condense = condense;
    o.quad_degree = quad_degree;
    return o;
  }
};

inline int env_thread_limit() {
  if (const char* s = std::getenv("SSP4_THREADS")) {
    int v = std::atoi(s);
    if (v >= 1) return std::min(v, 64);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 64u));
}

inline std::string fmt_sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

inline std::string fmt_eps(double eps) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", eps);
  return buf;
}

inline std::string table_basename(const ConvergenceTable& tb) {
  const char* cname = tb.case_id == ManufacturedCase::Id::Example1 ? "example1" : "example3";
  std::ostringstream os;
  os << cname << "_k" << tb.cfg.k << "r" << tb.cfg.r << "m" << tb.cfg.m << "_eps"
     << fmt_eps(tb.eps) << "_" << norm_name(tb.norm);
  return os.str();
}

inline std::string table_csv(const ConvergenceTable& tb) {
  std::ostringstream os;
  os << "n,h,error,rate\n";
  for (const auto& row : tb.rows) {
    char rate[16] = "";
    if (row.has_rate) std::snprintf(rate, sizeof(rate), "%.2f", row.rate);
    os << row.n << "," << fmt_sci(row.h) << "," << fmt_sci(row.error) << "," << rate << "\n";
  }
  return os.str();
}

inline std::string table_markdown(const ConvergenceTable& tb) {
  std::vector<std::array<std::string, 4>> cells;
  cells.push_back({"n", "h", "error", "rate"});
  for (const auto& row : tb.rows) {
    char rate[16] = "";
    if (row.has_rate) std::snprintf(rate, sizeof(rate), "%.2f", row.rate);
    cells.push_back({std::to_string(row.n), fmt_sci(row.h), fmt_sci(row.error), rate});
  }
  std::array<size_t, 4> width{};
  for (const auto& r : cells)
    for (int c = 0; c < 4; ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  auto emit = [&](const std::array<std::string, 4>& r) {
    os << "|";
    for (int c = 0; c < 4; ++c)
      os << " " << std::string(width[c] - r[c].size(), ' ') << r[c] << " |";
    os << "\n";
  };
  emit(cells[0]);
  os << "|";
  for (int c = 0; c < 4; ++c) os << " " << std::string(width[c] > 0 ? width[c] - 1 : 0, '-') << ": |";
  os << "\n";
  for (size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return os.str();
}

inline std::vector<NormId> parse_norms(const std::vector<std::string>& names) {
  std::vector<NormId> out;
  for (const auto& s : names) {
    if (s == "err1") out.push_back(NormId::Err1);
    else if (s == "errsigma") out.push_back(NormId::ErrSigma);
    else if (s == "erru") out.push_back(NormId::ErrU);
    else if (s == "err3") out.push_back(NormId::Err3);
    else throw CLI::ValidationError("--norms", "unknown norm '" + s + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_convergence(const RunConfig& rc) {
  auto cse = ManufacturedCase::from_name(rc.case_name);
  if (!cse) {
    std::fprintf(stderr, "unknown case '%s'\n", rc.case_name.c_str());
    return 2;
  }
  StudyRequest req;
  req.cse = *cse;
  req.cfg = rc.space_config();
  req.eps = rc.eps.empty() ? std::vector<double>{1.0} : rc.eps;
  req.ns = rc.ns;
  req.norms = parse_norms(rc.norms);
  for (NormId nid : req.norms) {
    auto avail = default_norms(cse->id);
    if (std::find(avail.begin(), avail.end(), nid) == avail.end())
      throw CLI::ValidationError("--norms", std::string(norm_name(nid)) +
                                                " is not defined for case " + cse->name());
  }
  req.scheme = RunConfig(rc).scheme_kind();
  req.opts = rc.solve_options();
  req.threads = env_thread_limit();
  auto tables = convergence_study(req);

  std::filesystem::create_directories(rc.outdir);
  for (const auto& tb : tables) {
    std::string base = (std::filesystem::path(rc.outdir) / table_basename(tb)).string();
    {
      std::ofstream os(base + ".csv", std::ios::binary);
      os << table_csv(tb);
    }
    {
      std::ofstream os(base + ".md", std::ios::binary);
      os << table_markdown(tb);
    }
    std::printf("# %s (case %s, eps %s)\n%s", norm_name(tb.norm), cse->name(),
                fmt_eps(tb.eps).c_str(), table_markdown(tb).c_str());
    std::printf("wrote %s.csv\n", base.c_str());
  }
  return 0;
}

inline int cmd_solve(const RunConfig& rc) {
  auto cse = ManufacturedCase::from_name(rc.case_name);
  if (!cse) {
    std::fprintf(stderr, "unknown case '%s'\n", rc.case_name.c_str());
    return 2;
  }
  double eps = rc.eps.empty() ? 1.0 : rc.eps.front();
  int n = rc.ns.front();
  SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(n);
  if (!rc.mesh_out.empty()) {
    std::ofstream os(rc.mesh_out, std::ios::binary);
    mesh.dump(os);
  }
  SchemeSolution sol =
      solve_scheme(mesh, rc.space_config(), eps, cse->forcing(eps), rc.scheme_kind(),
                   rc.solve_options());
  DiscreteState st = state_from_solution(mesh, sol);
  ErrorReport rep = error_norms(mesh, *cse, rc.space_config(), st, eps, rc.quad_degree);
  if (rep.err1) std::printf("Err_1 %s\n", fmt_sci(*rep.err1).c_str());
  if (rep.err_sigma) std::printf("Err_sigma %s\n", fmt_sci(*rep.err_sigma).c_str());
  if (rep.err_u) std::printf("Err_u %s\n", fmt_sci(*rep.err_u).c_str());
  if (rep.err3) std::printf("Err_3 %s\n", fmt_sci(*rep.err3).c_str());
  std::printf("residual %s\n", fmt_sci(sol.residual).c_str());
  return 0;
}

inline int cmd_verify(const RunConfig& rc) {
  PropertyOptions opts;
  opts.seed = rc.seed;
  opts.inject_perturbation = rc.inject_perturbation;
  PropertyReport rep = property_suite(opts);
  for (const auto& c : rep.checks)
    std::printf("CHECK %s %s %s\n", c.name.c_str(), c.pass ? "PASS" : "FAIL",
                fmt_sci(c.deviation).c_str());
  return rep.all_pass ? 0 : 1;
}

inline int cmd_export_field(const RunConfig& rc) {
  auto cse = ManufacturedCase::from_name(rc.case_name);
  if (!cse) {
    std::fprintf(stderr, "unknown case '%s'\n", rc.case_name.c_str());
    return 2;
  }
  double eps = rc.eps.empty() ? 1.0 : rc.eps.front();
  int n = rc.ns.front();
  SimplicialMesh mesh = SimplicialMesh::uniform_unit_square(n);
  SchemeSolution sol =
      solve_scheme(mesh, rc.space_config(), eps, cse->forcing(eps), rc.scheme_kind(),
                   rc.solve_options());
  FieldExport fe = compute_field_export(mesh, sol);
  std::vector<std::pair<std::string, const Eigen::VectorXd*>> scalars;
  scalars.emplace_back("frob_sigma_over_eps2", &fe.frob);
  if (fe.has_u0) scalars.emplace_back("u0", &fe.u0avg);
  std::filesystem::path path(rc.field_out);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    std::fprintf(stderr, "cannot open '%s' for writing\n", rc.field_out.c_str());
    return 1;
  }
  write_vtk(os, mesh, scalars);
  int mc = max_field_cell(fe.frob);
  std::printf("max frob_sigma_over_eps2 %s in cell %d (centroid %s %s)\n",
              fmt_sci(fe.frob[mc]).c_str(), mc, fmt_sci(mesh.cell_centroid(mc).x()).c_str(),
              fmt_sci(mesh.cell_centroid(mc).y()).c_str());
  std::printf("wrote %s\n", rc.field_out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

inline void add_space_options(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--k", rc.k, "polynomial degree k (>= 1)");
  cmd->add_option("--r", rc.r, "face-moment degree r (default k)");
  cmd->add_option("--m", rc.m, "cell-moment degree m (default k)");
}

inline void add_common_options(CLI::App* cmd, RunConfig& rc, bool with_scheme = true) {
  cmd->add_option("--case", rc.case_name, "manufactured case: example1 | example3");
  cmd->add_option("--eps", rc.eps, "singular perturbation parameter(s)")->delimiter(',');
  cmd->add_option("--quad-degree", rc.quad_degree, "override data quadrature degree");
  cmd->add_option("--seed", rc.seed, "RNG seed");
  cmd->add_flag("--condense", rc.condense, "statically condense cell-local unknowns");
  if (with_scheme)
    cmd->add_option("--scheme", rc.scheme, "primal-wg | saddle-wg | first-order");
  cmd->add_option("--config", rc.config_file,
                  "plain key=value option file (flags win on conflict)");
}

/// Plain key=value config file whose keys mirror the long flags; explicit
/// command-line flags take precedence.
inline void apply_config_file(const CLI::App* cmd, RunConfig& rc) {
  if (rc.config_file.empty()) return;
  std::ifstream is(rc.config_file);
  if (!is) throw CLI::ValidationError("--config", "cannot read '" + rc.config_file + "'");
  auto given = [&](const std::string& flag) {
    const CLI::Option* opt = cmd->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  };
  auto split_list = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
  };
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--config", "line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    try {
      if (key == "case") {
        if (!given("--case")) rc.case_name = val;
      } else if (key == "k") {
        if (!given("--k")) rc.k = std::stoi(val);
      } else if (key == "r") {
        if (!given("--r")) rc.r = std::stoi(val);
      } else if (key == "m") {
        if (!given("--m")) rc.m = std::stoi(val);
      } else if (key == "eps") {
        if (!given("--eps")) {
          rc.eps.clear();
          for (const auto& t : split_list(val)) rc.eps.push_back(std::stod(t));
        }
      } else if (key == "n") {
        if (!given("--n")) {
          rc.ns.clear();
          for (const auto& t : split_list(val)) rc.ns.push_back(std::stoi(t));
        }
      } else if (key == "scheme") {
        if (!given("--scheme")) rc.scheme = val;
      } else if (key == "out") {
        if (!given("--out")) {
          rc.outdir = val;
          rc.field_out = val;
        }
      } else if (key == "norms") {
        if (!given("--norms")) rc.norms = split_list(val);
      } else if (key == "quad-degree") {
        if (!given("--quad-degree")) rc.quad_degree = std::stoi(val);
      } else if (key == "seed") {
        if (!given("--seed")) rc.seed = std::stoull(val);
      } else if (key == "condense") {
        if (!given("--condense")) rc.condense = (val == "1" || val == "true");
      } else if (key == "mesh-out") {
        if (!given("--mesh-out")) rc.mesh_out = val;
      } else {
        throw CLI::ValidationError("--config", "unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw CLI::ValidationError("--config", "bad value for '" + key + "'");
    }
  }
}

inline int validate_run(const RunConfig& rc, bool powers_of_two) {
  SpaceConfig probe(rc.r < 0 ? rc.k : rc.r, rc.k, rc.m < 0 ? rc.k : rc.m);  // throws if invalid
  (void)probe;
  for (int n : rc.ns) {
    if (n < 1) throw CLI::ValidationError("--n", "mesh sizes must be positive");
    if (powers_of_two && ((n & (n - 1)) != 0 || n > 256))
      throw CLI::ValidationError("--n", "convergence runs need powers of two <= 256");
  }
  for (double e : rc.eps)
    if (!(e > 0.0)) throw CLI::ValidationError("--eps", "eps must be positive");
  return 0;
}

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Mixed / weak Galerkin solver for eps^2 biharmonic - Laplace problems on the unit square"};
  app.require_subcommand(1);
  RunConfig rc;

  CLI::App* conv = app.add_subcommand("convergence", "run a convergence study and emit tables");
  add_space_options(conv, rc);
  add_common_options(conv, rc);
  conv->add_option("--n", rc.ns, "mesh sizes (powers of two <= 256)")->delimiter(',');
  conv->add_option("--out", rc.outdir, "output directory for CSV/markdown tables");
  conv->add_option("--norms", rc.norms, "subset of err1,errsigma,erru,err3")->delimiter(',');

  CLI::App* solve = app.add_subcommand("solve", "single solve; prints error norms");
  add_space_options(solve, rc);
  add_common_options(solve, rc);
  solve->add_option("--n", rc.ns, "mesh size")->delimiter(',');
  solve->add_option("--mesh-out", rc.mesh_out, "write a plain-text mesh dump");

  CLI::App* verify = app.add_subcommand("verify", "run the operator/scheme property suites");
  verify->add_option("--seed", rc.seed, "RNG seed");
  verify->add_flag("--inject-perturbation", rc.inject_perturbation,
                   "test hook: perturb one element matrix to force a failure");
  verify->add_option("--config", rc.config_file, "plain key=value option file");

  CLI::App* expf = app.add_subcommand("export-field", "solve and export a VTK cell field");
  add_space_options(expf, rc);
  add_common_options(expf, rc);
  expf->add_option("--n", rc.ns, "mesh size")->delimiter(',');
  expf->add_option("--out", rc.field_out, "output VTK path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (conv->parsed()) {
      rc.command = "convergence";
      apply_config_file(conv, rc);
      if (rc.ns.empty()) throw CLI::ValidationError("--n", "at least one mesh size is required");
      validate_run(rc, true);
      return cmd_convergence(rc);
    }
    if (solve->parsed()) {
      rc.command = "solve";
      apply_config_file(solve, rc);
      if (rc.ns.empty()) throw CLI::ValidationError("--n", "a mesh size is required");
      validate_run(rc, false);
      return cmd_solve(rc);
    }
    if (verify->parsed()) {
      rc.command = "verify";
      apply_config_file(verify, rc);
      return cmd_verify(rc);
    }
    rc.command = "export-field";
    apply_config_file(expf, rc);
    if (rc.ns.empty()) throw CLI::ValidationError("--n", "a mesh size is required");
    validate_run(rc, false);
    return cmd_export_field(rc);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace ssp4
