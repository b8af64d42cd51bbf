#include "mfk/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfk/error.hpp"

#ifndef MFK_VERSION
#define MFK_VERSION "dev"
#endif

namespace mfk {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string build_id() {
  return std::string("mfk ") + MFK_VERSION + " (" + __VERSION__ + ")";
}

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, mode);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  return out;
}

template <class T>
void put_le(std::ostream& out, T value) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.write(reinterpret_cast<const char*>(bits.data()), sizeof(T));
}

template <class T>
bool get_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> bits;
  if (!in.read(reinterpret_cast<char*>(bits.data()), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  value = std::bit_cast<T>(bits);
  return true;
}

}  // namespace

SnapshotCsvWriter::SnapshotCsvWriter(const std::string& path, std::string run_id, std::size_t m)
    : run_id_(std::move(run_id)), m_(m), out_(std::make_unique<std::ofstream>(open_out(path))) {
  *out_ << "run_id,t,i";
  for (std::size_t k = 1; k <= m_; ++k) *out_ << ",u" << k;
  for (std::size_t k = 1; k <= m_; ++k) *out_ << ",v" << k;
  *out_ << "\n";
}

void SnapshotCsvWriter::write(const Ensemble& ens) {
  if (ens.modes() != m_) throw InvalidArgument("snapshot writer: mode count changed");
  std::string line;
  const std::string t = fmt(ens.time);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    line = run_id_ + "," + t + "," + std::to_string(i);
    for (double x : ens.u(i)) line += "," + fmt(x);
    for (double x : ens.v(i)) line += "," + fmt(x);
    line += "\n";
    *out_ << line;
  }
  out_->flush();
}

void write_frame(std::ostream& out, const Ensemble& ens) {
  out.write("MFKF", 4);
  put_le<std::uint64_t>(out, ens.size());
  put_le<std::uint64_t>(out, ens.modes());
  put_le<double>(out, ens.time);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    for (double x : ens.u(i)) put_le<double>(out, x);
    for (double x : ens.v(i)) put_le<double>(out, x);
  }
}

bool read_frame(std::istream& in, Frame& frame) {
  char magic[4];
  if (!in.read(magic, 4)) return false;
  if (std::memcmp(magic, "MFKF", 4) != 0) throw Error("read_frame: bad magic");
  if (!get_le(in, frame.n) || !get_le(in, frame.m) || !get_le(in, frame.t)) throw Error("read_frame: truncated header");
  frame.data.resize(frame.n * 2 * frame.m);
  for (double& x : frame.data) {
    if (!get_le(in, x)) throw Error("read_frame: truncated body");
  }
  return true;
}

void write_w1_csv(const std::string& path, const std::vector<W1Row>& rows) {
  auto out = open_out(path);
  out << "run_id,t,N,method,value,stat_error\n";
  for (const auto& r : rows) {
    out << r.run_id << "," << fmt(r.t) << "," << r.n << "," << to_string(r.report.method) << ","
        << fmt(r.report.value) << "," << fmt(r.report.stat_error) << "\n";
  }
}

void write_density_csv(const std::string& path, const std::vector<DensityField>& fields) {
  auto out = open_out(path);
  out << "t,i,j,mass\n";
  for (const auto& f : fields) {
    const std::string t = fmt(f.time);
    for (std::size_t i = 0; i < f.grid.n_u; ++i) {
      for (std::size_t j = 0; j < f.grid.n_v; ++j) out << t << "," << i << "," << j << "," << fmt(f.at(i, j)) << "\n";
    }
  }
}

void write_density_matrix(const std::string& path, const DensityField& field) {
  auto out = open_out(path);
  const PhaseGrid& g = field.grid;
  const double area = g.cell_area();
  out << g.n_v;
  for (std::size_t j = 0; j < g.n_v; ++j) out << " " << fmt(g.v_center(j));
  out << "\n";
  for (std::size_t i = 0; i < g.n_u; ++i) {
    out << fmt(g.u_center(i));
    for (std::size_t j = 0; j < g.n_v; ++j) out << " " << fmt(field.at(i, j) / area);
    out << "\n";
  }
}

void write_fpe_diagnostics(const std::string& path, const std::vector<FpeDiagnostics>& diag) {
  auto out = open_out(path);
  out << "t,mass,boundary_mass,v_moment,picard_iterations,clipped_cells,mass_defect\n";
  for (const auto& d : diag) {
    out << fmt(d.t) << "," << fmt(d.mass) << "," << fmt(d.boundary_mass) << "," << fmt(d.v_moment) << ","
        << d.picard_iterations << "," << d.clipped_cells << "," << fmt(d.mass_defect) << "\n";
  }
}

void write_duality_csv(const std::string& path, const DualityReport& rep) {
  auto out = open_out(path);
  out << "s,I,stderr\n";
  for (const auto& p : rep.trace) out << fmt(p.s) << "," << fmt(p.I) << "," << fmt(p.stderr) << "\n";
}

void Table::write(const std::string& path) const {
  auto out = open_out(path);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << "\n";
  }
}

namespace {

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string short_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

}  // namespace

void write_svg_chart(const std::string& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series, bool log_y) {
  constexpr double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  auto ty = [&](double y) { return log_y ? std::log10(std::max(y, 1e-300)) : y; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return T + ph - (ty(y) - y0) / (y1 - y0) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0;
    const double fy = y0 + (y1 - y0) * k / 4.0;
    const double X = L + pw * k / 4.0, Y = T + ph - ph * k / 4.0;
    os << "<text x=\"" << X << "\" y=\"" << T + ph + 15 << "\" text-anchor=\"middle\">" << short_num(fx) << "</text>\n";
    os << "<text x=\"" << L - 5 << "\" y=\"" << Y + 4 << "\" text-anchor=\"end\">"
       << short_num(log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << svg_escape(xlabel) << "</text>\n";
  os << "<text x=\"15\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << T + ph / 2
     << ")\">" << svg_escape(ylabel) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 7];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      if (!std::isfinite(series[s].y[i]) || (log_y && series[s].y[i] <= 0.0)) continue;
      os << short_num(px(series[s].x[i])) << "," << short_num(py(series[s].y[i])) << " ";
    }
    os << "\"/>\n";
    const double ly = T + 10 + 16.0 * static_cast<double>(s);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << svg_escape(series[s].name) << "</text>\n";
  }
  os << "</svg>\n";
  auto out = open_out(path);
  out << os.str();
}

void write_meta(const std::string& path, const RunConfig& cfg, const std::map<std::string, double>& constants,
                const nlohmann::json& extra) {
  nlohmann::json j;
  j["config_digest"] = cfg.digest();
  j["config"] = cfg.canonical();
  j["seed"] = cfg.seed();
  j["build"] = build_id();
  nlohmann::json c = nlohmann::json::object();
  for (const auto& [k, v] : constants) c[k] = v;
  j["constants"] = c;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace mfk
