#pragma once

// Per-sample trace rows and their CSV form.

#include <array>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cdpm/geometry.hpp"

namespace cdpm {

struct TraceRecord {
  double t_s = 0.0;
  Vec4 commanded_L_mm = Vec4::Zero();
  Vec4 T_true_N = Vec4::Zero();
  Vec4 T_meas_N = Vec4::Zero();
  Vec4 loadcell_F_N = Vec4::Zero();
  double cf_cal_N = 0.0;
  double cf_true_N = 0.0;
  TubePose pose;
  std::string phase;
  double quality = 0.0;
  Vec4 dT = Vec4::Zero();
  double P = 0.0;
  Vec4 Q = Vec4::Zero();
  Vec4 R = Vec4::Zero();
};

inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c{"t_s"};
    auto quad = [&c](const char* name) {
      for (int i = 1; i <= kTendons; ++i) c.push_back(std::string(name) + "_" + std::to_string(i));
    };
    quad("commanded_L_mm");
    quad("T_true_N");
    quad("T_meas_N");
    quad("loadcell_F_N");
    for (const char* s : {"cf_cal_N", "cf_true_N", "pose_x_mm", "pose_z_mm", "pose_phi_rad",
                          "phase", "quality"}) {
      c.emplace_back(s);
    }
    quad("dT");
    c.emplace_back("P");
    quad("Q");
    quad("R");
    return c;
  }();
  return cols;
}

namespace detail {

// Shortest round-trip representation keeps the CSV exact and reproducible.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_csv_header(std::ostream& os) {
  const auto& cols = trace_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
}

inline void write_csv_row(std::ostream& os, const TraceRecord& r) {
  using detail::fmt_double;
  os << fmt_double(r.t_s);
  auto quad = [&os](const Vec4& v) {
    for (int i = 0; i < kTendons; ++i) os << ',' << fmt_double(v[i]);
  };
  quad(r.commanded_L_mm);
  quad(r.T_true_N);
  quad(r.T_meas_N);
  quad(r.loadcell_F_N);
  os << ',' << fmt_double(r.cf_cal_N) << ',' << fmt_double(r.cf_true_N) << ','
     << fmt_double(r.pose.x) << ',' << fmt_double(r.pose.z) << ',' << fmt_double(r.pose.phi)
     << ',' << r.phase << ',' << fmt_double(r.quality);
  quad(r.dT);
  os << ',' << fmt_double(r.P);
  quad(r.Q);
  quad(r.R);
  os << '\n';
}

inline void write_csv(std::ostream& os, const std::vector<TraceRecord>& rows) {
  write_csv_header(os);
  for (const auto& r : rows) write_csv_row(os, r);
}

}  // namespace cdpm
