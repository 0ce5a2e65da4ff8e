#pragma once

#include <string>
#include <vector>

#include "qdlab/convergence_lab.hpp"
#include "qdlab/foliation_tree.hpp"
#include "qdlab/harmonic_metric.hpp"
#include "qdlab/qd_core.hpp"

// File formats.  All writers go through an atomic temp-file + rename, all
// floating point is printed with 17 significant digits, field files are
// little-endian binary with a fixed-layout header.

namespace qdlab {

struct ConfigError : Error {
  using Error::Error;
};

// Formats a double with 17 significant digits (round-trip exact).
std::string fmt17(double v);

// Writes content to path atomically (temp file in the same directory, then
// rename).
void atomic_write(const std::string& path, const std::string& content);

// --- polynomial input -------------------------------------------------------
// JSON array of [re, im] pairs, ascending degree: z^3 - 1 is
// [[-1,0],[0,0],[0,0],[1,0]].
std::vector<cplx> read_phi_json(const std::string& path);
std::string phi_to_json(const std::vector<cplx>& coeffs);

// --- tree -------------------------------------------------------------------
std::string tree_to_json(const MetricTree& tree);
void write_tree_json(const std::string& path, const MetricTree& tree);

// --- solved field -----------------------------------------------------------
// Layout: magic "QDGFLD01" (8 bytes), then little-endian f64 t, R_dom, h,
// rotation, u32 nx, ny, then nx*ny f64 u values in row-major order
// (j outer, i inner).
void write_field(const std::string& path, const GField& field);
GField read_field(const std::string& path, const PolyQD& qd);

// CSV dump of a field: header x,y,u,G then one row per node.
void write_field_csv(const std::string& path, const GField& field);

// --- pairs ------------------------------------------------------------------
// CSV with header x1_re,x1_im,x2_re,x2_im; throws ConfigError on malformed
// rows.
std::vector<std::pair<cplx, cplx>> read_pairs_csv(const std::string& path);

// --- reports ----------------------------------------------------------------
std::string report_to_json(const Report& report);
void write_report_json(const std::string& path, const Report& report);
// Columns: t,x1_re,x1_im,x2_re,x2_im,I_phi,d_t,lower,upper,solver_err.
void write_report_csv(const std::string& path, const Report& report);

}  // namespace qdlab
