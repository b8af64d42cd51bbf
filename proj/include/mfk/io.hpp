#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfk/adjoint.hpp"
#include "mfk/config.hpp"
#include "mfk/fpe.hpp"
#include "mfk/measure.hpp"
#include "mfk/particles.hpp"

namespace mfk {

/// "%.17g": round-trips every double.
std::string fmt(double x);

/// Rows of one particle each: run_id, t, i, u_1..u_m, v_1..v_m.
class SnapshotCsvWriter {
 public:
  SnapshotCsvWriter(const std::string& path, std::string run_id, std::size_t m);
  void write(const Ensemble& ens);

 private:
  std::string run_id_;
  std::size_t m_;
  std::unique_ptr<std::ofstream> out_;
};

/// Compact frame: "MFKF", u64 N, u64 m, f64 t, then per particle u_1..u_m,
/// v_1..v_m; all little-endian.
void write_frame(std::ostream& out, const Ensemble& ens);

struct Frame {
  std::uint64_t n = 0;
  std::uint64_t m = 0;
  double t = 0.0;
  std::vector<double> data;
};
/// Returns false at a clean end of stream; throws Error on a truncated frame.
bool read_frame(std::istream& in, Frame& frame);

struct W1Row {
  std::string run_id;
  double t = 0.0;
  std::size_t n = 0;
  W1Report report;
};
void write_w1_csv(const std::string& path, const std::vector<W1Row>& rows);

/// t, u-index, v-index, mass.
void write_density_csv(const std::string& path, const std::vector<DensityField>& fields);
/// gnuplot "nonuniform matrix": first row n_v then v centers; each next row is
/// u_i followed by the densities (mass / cell area).
void write_density_matrix(const std::string& path, const DensityField& field);
void write_fpe_diagnostics(const std::string& path, const std::vector<FpeDiagnostics>& diag);

void write_duality_csv(const std::string& path, const DualityReport& rep);

/// Plain CSV table.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  void write(const std::string& path) const;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal SVG line chart with axes, ticks and a legend.
void write_svg_chart(const std::string& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series, bool log_y = false);

/// meta.json: config digest and text, seed, build identifier, constants and
/// any extra fields.
void write_meta(const std::string& path, const RunConfig& cfg, const std::map<std::string, double>& constants,
                const nlohmann::json& extra = nlohmann::json::object());

/// Library version string baked in at build time.
std::string build_id();

}  // namespace mfk
