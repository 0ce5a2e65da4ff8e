#include <cmath>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "qdlab/convergence_lab.hpp"
#include "qdlab/foliation_tree.hpp"
#include "qdlab/harmonic_metric.hpp"
#include "qdlab/io.hpp"
#include "qdlab/qd_core.hpp"
#include "qdlab/support.hpp"

using namespace qdlab;

namespace {

std::vector<double> parse_t_list(const std::string& spec) {
  std::vector<double> out;
  std::istringstream in(spec);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) throw ConfigError("empty entry in t list '" + spec + "'");
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad t value '" + tok + "'");
    }
    if (used != tok.size() || !std::isfinite(v))
      throw ConfigError("bad t value '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty t list");
  return out;
}

int fail(const std::exception& e, const char* type, int code) {
  std::cerr << "error (" << type << "): " << e.what() << "\n";
  return code;
}

struct TreeArgs {
  std::string phi, out = "tree.json";
};

struct SolveArgs {
  std::string phi, out = "field.bin", csv;
  double t = 1, R = 0;
  int n = 257;
};

struct DistArgs {
  std::string phi, pairs, out = "dist.csv";
  double t = 1, R = 0;
  int n = 257;
};

struct BoundsArgs {
  std::string phi, pairs, out = "bounds.csv";
  std::string t_spec = "1,4,16,64";
  double epsilon = 0;
};

struct ConvergeArgs {
  std::string phi, out = "report.json", csv = "report.csv";
  std::string t_spec = "1,4,16,64";
  int samples = 50, grid = 512;
  std::uint64_t seed = 7;
  double radius = 3.0, epsilon = 0, ledger_epsilon = 0, R = 0;
};

double auto_radius(const PolyQD& qd, double wanted, double sample_radius) {
  return wanted > 0 ? wanted : suggest_domain_radius(qd, sample_radius);
}

double pair_radius(const std::vector<std::pair<cplx, cplx>>& pairs) {
  double r = 1.0;
  for (const auto& pr : pairs)
    r = std::max({r, std::abs(pr.first), std::abs(pr.second)});
  return r;
}

int run_tree(const TreeArgs& a) {
  PolyQD qd(read_phi_json(a.phi));
  MetricTree tree = build_tree(qd);
  write_tree_json(a.out, tree);
  std::cout << "tree: " << tree.vertices.size() << " vertices, "
            << tree.edges.size() << " edges, " << tree.ends.size()
            << " ends -> " << a.out << "\n";
  return 0;
}

int run_solve(const SolveArgs& a) {
  PolyQD qd(read_phi_json(a.phi));
  double R = auto_radius(qd, a.R, 1.0);
  GField field = solve_field(qd, a.t, R, a.n);
  write_field(a.out, field);
  if (!a.csv.empty()) write_field_csv(a.csv, field);
  std::cout << "solved t=" << fmt17(a.t) << " R_dom=" << fmt17(R)
            << " n=" << a.n << " residual_rms=" << fmt17(field.residual_rms())
            << " newton_iterations=" << field.newton_iterations()
            << " min_raw_G=" << fmt17(field.min_raw_G()) << " -> " << a.out
            << "\n";
  return 0;
}

int run_dist(const DistArgs& a) {
  PolyQD qd(read_phi_json(a.phi));
  auto pairs = read_pairs_csv(a.pairs);
  double R = auto_radius(qd, a.R, pair_radius(pairs));
  GField field = solve_field(qd, a.t, R, a.n);
  std::vector<DistanceResult> rows(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), [&](int i) {
    rows[i] = distance_gt(field, pairs[i].first, pairs[i].second);
  });
  std::ostringstream os;
  os << "x1_re,x1_im,x2_re,x2_im,d_t,err_estimate\n";
  for (std::size_t i = 0; i < pairs.size(); ++i)
    os << fmt17(pairs[i].first.real()) << "," << fmt17(pairs[i].first.imag())
       << "," << fmt17(pairs[i].second.real()) << ","
       << fmt17(pairs[i].second.imag()) << "," << fmt17(rows[i].value) << ","
       << fmt17(rows[i].error_estimate) << "\n";
  atomic_write(a.out, os.str());
  std::cout << "dist: " << pairs.size() << " pairs at t=" << fmt17(a.t)
            << " -> " << a.out << "\n";
  return 0;
}

int run_bounds(const BoundsArgs& a) {
  PolyQD qd(read_phi_json(a.phi));
  auto pairs = read_pairs_csv(a.pairs);
  std::vector<double> ts = parse_t_list(a.t_spec);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] < 1) throw TBelowOne("t values must be >= 1");
    if (i > 0 && ts[i] <= ts[i - 1])
      throw ConfigError("t list must be strictly ascending");
  }
  LedgerOptions lopt;
  lopt.epsilon = a.epsilon;
  ConstantsLedger ledger = build_ledger(qd, lopt);
  MetricTree tree = build_tree(qd);
  std::vector<StaircasePath> stairs(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    stairs[i] =
        staircase(tree, pairs[i].first, pairs[i].second, ledger.epsilon);
  std::ostringstream os;
  os << "t,x1_re,x1_im,x2_re,x2_im,lower,upper,horizontal_term,"
        "vertical_term,ball_term\n";
  for (double t : ts)
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CertBound cb = certify(ledger, stairs[i], t);
      os << fmt17(t) << "," << fmt17(pairs[i].first.real()) << ","
         << fmt17(pairs[i].first.imag()) << ","
         << fmt17(pairs[i].second.real()) << ","
         << fmt17(pairs[i].second.imag()) << "," << fmt17(cb.lower) << ","
         << fmt17(cb.upper) << "," << fmt17(cb.horizontal_term) << ","
         << fmt17(cb.vertical_term) << "," << fmt17(cb.ball_term) << "\n";
    }
  atomic_write(a.out, os.str());
  std::cout << "bounds: " << pairs.size() << " pairs x " << ts.size()
            << " times (epsilon=" << fmt17(ledger.epsilon) << ") -> " << a.out
            << "\n";
  return 0;
}

int run_converge(const ConvergeArgs& a) {
  PolyQD qd(read_phi_json(a.phi));
  ReportOptions opts;
  opts.t_list = parse_t_list(a.t_spec);
  opts.samples = a.samples;
  opts.sample_radius = a.radius;
  opts.seed = a.seed;
  opts.epsilon = a.epsilon;
  opts.R_dom = a.R;
  opts.grid_n = a.grid;
  opts.ledger_epsilon = a.ledger_epsilon;
  Report rep = convergence_report(qd, opts);
  write_report_json(a.out, rep);
  if (!a.csv.empty()) write_report_csv(a.csv, rep);
  std::cout << "converge: " << rep.samples << " pairs, t=" << a.t_spec
            << ", sup_gap";
  for (const TimeSlice& sl : rep.slices) std::cout << " " << fmt17(sl.sup_gap);
  std::cout << ", fit_slope=" << fmt17(rep.fit_slope) << " -> " << a.out
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "metric trees, harmonic-map ray metrics, and certified convergence "
      "bounds for polynomial quadratic differentials"};
  app.require_subcommand(1);

  TreeArgs ta;
  CLI::App* tree_cmd =
      app.add_subcommand("tree", "build the dual metric tree as JSON");
  tree_cmd->add_option("--phi", ta.phi, "polynomial coefficients JSON")
      ->required();
  tree_cmd->add_option("--out", ta.out, "output JSON path");

  SolveArgs sa;
  CLI::App* solve_cmd =
      app.add_subcommand("solve", "solve the tension field at one t");
  solve_cmd->add_option("--phi", sa.phi, "polynomial coefficients JSON")
      ->required();
  solve_cmd->add_option("--t", sa.t, "ray time (>= some positive value)");
  solve_cmd->add_option("--R", sa.R, "domain radius (0: auto)");
  solve_cmd->add_option("--n", sa.n, "grid nodes per side");
  solve_cmd->add_option("--out", sa.out, "output field binary");
  solve_cmd->add_option("--csv", sa.csv, "optional CSV dump of the field");

  DistArgs da;
  CLI::App* dist_cmd =
      app.add_subcommand("dist", "g_t distances for a CSV of pairs");
  dist_cmd->add_option("--phi", da.phi, "polynomial coefficients JSON")
      ->required();
  dist_cmd->add_option("--pairs", da.pairs, "pairs CSV")->required();
  dist_cmd->add_option("--t", da.t, "ray time");
  dist_cmd->add_option("--R", da.R, "domain radius (0: auto)");
  dist_cmd->add_option("--n", da.n, "grid nodes per side");
  dist_cmd->add_option("--out", da.out, "output CSV");

  BoundsArgs ba;
  CLI::App* bounds_cmd = app.add_subcommand(
      "bounds", "certified two-sided d_t bounds for a CSV of pairs");
  bounds_cmd->add_option("--phi", ba.phi, "polynomial coefficients JSON")
      ->required();
  bounds_cmd->add_option("--pairs", ba.pairs, "pairs CSV")->required();
  bounds_cmd->add_option("--t", ba.t_spec, "comma-separated t list");
  bounds_cmd->add_option("--epsilon", ba.epsilon, "ball radius (0: auto)");
  bounds_cmd->add_option("--out", ba.out, "output CSV");

  ConvergeArgs ca;
  CLI::App* conv_cmd = app.add_subcommand(
      "converge", "full convergence experiment: report JSON + CSV");
  conv_cmd->add_option("--phi", ca.phi, "polynomial coefficients JSON")
      ->required();
  conv_cmd->add_option("--t", ca.t_spec, "comma-separated t list");
  conv_cmd->add_option("--samples", ca.samples, "sample pair count");
  conv_cmd->add_option("--seed", ca.seed, "RNG seed");
  conv_cmd->add_option("--radius", ca.radius, "sample disk radius");
  conv_cmd->add_option("--grid", ca.grid, "grid nodes per side");
  conv_cmd->add_option("--epsilon", ca.epsilon,
                       "eps-approximation threshold (0: auto)");
  conv_cmd->add_option("--ledger-epsilon", ca.ledger_epsilon,
                       "ledger ball radius (0: auto)");
  conv_cmd->add_option("--R", ca.R, "domain radius (0: auto)");
  conv_cmd->add_option("--out", ca.out, "report JSON path");
  conv_cmd->add_option("--csv", ca.csv, "report CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (tree_cmd->parsed()) return run_tree(ta);
    if (solve_cmd->parsed()) return run_solve(sa);
    if (dist_cmd->parsed()) return run_dist(da);
    if (bounds_cmd->parsed()) return run_bounds(ba);
    if (conv_cmd->parsed()) return run_converge(ca);
    std::cerr << "error (ConfigError): no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    return fail(e, "ConfigError", 2);
  } catch (const EpsilonTooLarge& e) {
    return fail(e, "EpsilonTooLarge", 2);
  } catch (const TBelowOne& e) {
    return fail(e, "TBelowOne", 2);
  } catch (const ZeroDifferential& e) {
    return fail(e, "ZeroDifferential", 2);
  } catch (const NewtonDiverged& e) {
    return fail(e, "NewtonDiverged", 3);
  } catch (const SingularBoundary& e) {
    return fail(e, "SingularBoundary", 3);
  } catch (const OutOfGrid& e) {
    return fail(e, "OutOfGrid", 3);
  } catch (const NoPath& e) {
    return fail(e, "NoPath", 3);
  } catch (const Error& e) {
    return fail(e, "Error", 3);
  } catch (const std::exception& e) {
    return fail(e, "std::exception", 3);
  }
}
