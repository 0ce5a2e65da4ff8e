#include "qdlab/io.hpp"

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qdlab/support.hpp"

namespace qdlab {

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void put_f64(std::string& out, double v) {
  static_assert(sizeof(double) == 8);
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

double get_f64(const std::string& in, std::size_t& off) {
  if (off + 8 > in.size()) throw ConfigError("field file truncated");
  double v;
  std::memcpy(&v, in.data() + off, 8);
  off += 8;
  return v;
}

std::uint32_t get_u32(const std::string& in, std::size_t& off) {
  if (off + 4 > in.size()) throw ConfigError("field file truncated");
  std::uint32_t v;
  std::memcpy(&v, in.data() + off, 4);
  off += 4;
  return v;
}

std::string pair_json(cplx z) {
  return "[" + fmt17(z.real()) + "," + fmt17(z.imag()) + "]";
}

double parse_double(const std::string& tok, const std::string& where) {
  const char* s = tok.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s, &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (end == s || (end && *end != '\0') || errno == ERANGE ||
      !std::isfinite(v))
    throw ConfigError("bad number '" + tok + "' in " + where);
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
  static std::atomic<int> counter{0};
  fs::path target(path);
  fs::path dir = target.parent_path();
  if (dir.empty()) dir = ".";
  fs::path tmp = dir / (target.filename().string() + ".tmp" +
                        std::to_string(counter.fetch_add(1)));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot move temp file onto " + path);
  }
}

std::vector<cplx> read_phi_json(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(slurp(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!doc.is_array() || doc.empty())
    throw ConfigError(path + ": expected a nonempty JSON array of [re, im]");
  std::vector<cplx> coeffs;
  for (const auto& item : doc) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number() ||
        !item[1].is_number())
      throw ConfigError(path + ": each coefficient must be [re, im]");
    double re = item[0].get<double>(), im = item[1].get<double>();
    if (!std::isfinite(re) || !std::isfinite(im))
      throw ConfigError(path + ": coefficients must be finite");
    coeffs.emplace_back(re, im);
  }
  return coeffs;
}

std::string phi_to_json(const std::vector<cplx>& coeffs) {
  std::string out = "[";
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (i) out += ",";
    out += pair_json(coeffs[i]);
  }
  return out + "]";
}

std::string tree_to_json(const MetricTree& tree) {
  std::ostringstream os;
  os << "{\n  \"phi\": " << phi_to_json(tree.qd.coeffs()) << ",\n";
  os << "  \"line_tree\": " << (tree.line_tree ? "true" : "false") << ",\n";
  os << "  \"vertices\": [";
  for (std::size_t i = 0; i < tree.vertices.size(); ++i) {
    const TreeVertex& v = tree.vertices[i];
    os << (i ? ",\n    " : "\n    ");
    os << "{\"zero_indices\": [";
    for (std::size_t z = 0; z < v.zero_indices.size(); ++z)
      os << (z ? "," : "") << v.zero_indices[z];
    os << "], \"anchor\": " << pair_json(v.anchor)
       << ", \"valence\": " << v.valence << "}";
  }
  os << "\n  ],\n  \"edges\": [";
  for (std::size_t i = 0; i < tree.edges.size(); ++i) {
    const TreeEdge& e = tree.edges[i];
    os << (i ? ",\n    " : "\n    ");
    os << "{\"v\": " << e.v << ", \"w\": " << e.w
       << ", \"length\": " << fmt17(e.length) << "}";
  }
  os << (tree.edges.empty() ? "],\n" : "\n  ],\n");
  os << "  \"ends\": [";
  for (std::size_t i = 0; i < tree.ends.size(); ++i) {
    const TreeEnd& e = tree.ends[i];
    os << (i ? ",\n    " : "\n    ");
    os << "{\"vertex\": " << e.vertex << ", \"sector\": " << e.sector << "}";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

void write_tree_json(const std::string& path, const MetricTree& tree) {
  atomic_write(path, tree_to_json(tree));
}

void write_field(const std::string& path, const GField& field) {
  std::string out;
  out.reserve(40 + field.u_data().size() * 8);
  out += "QDGFLD01";
  put_f64(out, field.t());
  put_f64(out, field.R_dom());
  put_f64(out, field.h());
  put_f64(out, field.rotation());
  put_u32(out, static_cast<std::uint32_t>(field.nx()));
  put_u32(out, static_cast<std::uint32_t>(field.ny()));
  for (double v : field.u_data()) put_f64(out, v);
  atomic_write(path, out);
}

GField read_field(const std::string& path, const PolyQD& qd) {
  std::string in = slurp(path);
  if (in.size() < 8 || in.compare(0, 8, "QDGFLD01") != 0)
    throw ConfigError(path + ": not a QDGFLD01 field file");
  std::size_t off = 8;
  double t = get_f64(in, off);
  double R_dom = get_f64(in, off);
  double h = get_f64(in, off);
  double rotation = get_f64(in, off);
  std::uint32_t nx = get_u32(in, off);
  std::uint32_t ny = get_u32(in, off);
  if (nx != ny || nx < 2 || nx > 100000)
    throw ConfigError(path + ": bad grid dimensions");
  if (!(t > 0) || !(R_dom > 0))
    throw ConfigError(path + ": bad field header");
  GField field(qd, t, R_dom, static_cast<int>(nx), rotation);
  if (std::abs(field.h() - h) > 1e-12 * (1 + std::abs(h)))
    throw ConfigError(path + ": header spacing inconsistent with n and R");
  std::vector<double>& u = field.u_mut();
  if (in.size() - off != u.size() * 8)
    throw ConfigError(path + ": field payload size mismatch");
  std::memcpy(u.data(), in.data() + off, u.size() * 8);
  field.set_diags(0.0, 0.0, 0);
  return field;
}

void write_field_csv(const std::string& path, const GField& field) {
  std::ostringstream os;
  os << "x,y,u,G\n";
  for (int j = 0; j < field.ny(); ++j)
    for (int i = 0; i < field.nx(); ++i) {
      cplx z = field.node(i, j);
      os << fmt17(z.real()) << "," << fmt17(z.imag()) << ","
         << fmt17(field.u(i, j)) << "," << fmt17(field.G(i, j)) << "\n";
    }
  atomic_write(path, os.str());
}

std::vector<std::pair<cplx, cplx>> read_pairs_csv(const std::string& path) {
  std::istringstream in(slurp(path));
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError(path + ": empty pairs file");
  {
    auto head = split_csv(line);
    const char* want[] = {"x1_re", "x1_im", "x2_re", "x2_im"};
    if (head.size() != 4 || head[0] != want[0] || head[1] != want[1] ||
        head[2] != want[2] || head[3] != want[3])
      throw ConfigError(path + ": header must be x1_re,x1_im,x2_re,x2_im");
  }
  std::vector<std::pair<cplx, cplx>> pairs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto tok = split_csv(line);
    if (tok.size() != 4)
      throw ConfigError(path + ": line " + std::to_string(lineno) +
                        " needs 4 fields");
    std::string where = path + " line " + std::to_string(lineno);
    pairs.emplace_back(
        cplx(parse_double(tok[0], where), parse_double(tok[1], where)),
        cplx(parse_double(tok[2], where), parse_double(tok[3], where)));
  }
  if (pairs.empty()) throw ConfigError(path + ": no pairs");
  return pairs;
}

std::string report_to_json(const Report& report) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"phi\": " << phi_to_json(report.phi) << ",\n";
  os << "  \"seed\": " << report.seed << ",\n";
  os << "  \"samples\": " << report.samples << ",\n";
  os << "  \"sample_radius\": " << fmt17(report.sample_radius) << ",\n";
  os << "  \"epsilon\": " << fmt17(report.epsilon) << ",\n";
  os << "  \"R_dom\": " << fmt17(report.R_dom) << ",\n";
  os << "  \"grid_n\": " << report.grid_n << ",\n";
  os << "  \"ledger_epsilon\": " << fmt17(report.ledger_epsilon) << ",\n";
  os << "  \"fit_slope\": " << fmt17(report.fit_slope) << ",\n";
  os << "  \"fit_r2\": " << fmt17(report.fit_r2) << ",\n";
  os << "  \"slices\": [";
  for (std::size_t s = 0; s < report.slices.size(); ++s) {
    const TimeSlice& sl = report.slices[s];
    os << (s ? ",\n    " : "\n    ");
    os << "{\"t\": " << fmt17(sl.t) << ", \"sup_gap\": " << fmt17(sl.sup_gap)
       << ", \"eps_fraction\": " << fmt17(sl.eps_fraction)
       << ", \"residual_rms\": " << fmt17(sl.residual_rms)
       << ", \"min_raw_G\": " << fmt17(sl.min_raw_G) << ",\n     \"pairs\": [";
    for (std::size_t p = 0; p < sl.pairs.size(); ++p) {
      const PairResult& pr = sl.pairs[p];
      os << (p ? ",\n      " : "\n      ");
      os << "{\"x1\": " << pair_json(pr.x1) << ", \"x2\": " << pair_json(pr.x2)
         << ", \"I_phi\": " << fmt17(pr.I_phi)
         << ", \"d_t\": " << fmt17(pr.d_t)
         << ", \"lower\": " << fmt17(pr.lower)
         << ", \"upper\": " << fmt17(pr.upper)
         << ", \"solver_err\": " << fmt17(pr.solver_err) << "}";
    }
    os << "\n     ]}";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

void write_report_json(const std::string& path, const Report& report) {
  atomic_write(path, report_to_json(report));
}

void write_report_csv(const std::string& path, const Report& report) {
  std::ostringstream os;
  os << "t,x1_re,x1_im,x2_re,x2_im,I_phi,d_t,lower,upper,solver_err\n";
  for (const TimeSlice& sl : report.slices)
    for (const PairResult& pr : sl.pairs)
      os << fmt17(sl.t) << "," << fmt17(pr.x1.real()) << ","
         << fmt17(pr.x1.imag()) << "," << fmt17(pr.x2.real()) << ","
         << fmt17(pr.x2.imag()) << "," << fmt17(pr.I_phi) << ","
         << fmt17(pr.d_t) << "," << fmt17(pr.lower) << "," << fmt17(pr.upper)
         << "," << fmt17(pr.solver_err) << "\n";
  atomic_write(path, os.str());
}

int thread_budget(int jobs) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("QDLAB_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) hw = std::min<long>(hw, v);
  }
  return std::max(1, std::min(hw, jobs));
}

void parallel_for(int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 0) return;
  int workers = thread_budget(jobs);
  if (workers <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto run = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= jobs) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (std::thread& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace qdlab
