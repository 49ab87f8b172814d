#pragma once

#include "entrofact/common.hpp"
#include "entrofact/exact.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace entrofact::io {

// 17 significant digits: enough to round-trip any double.
inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);  // binary: LF line endings everywhere
  require(out.good(), "cannot open output file " + path.string());
  return out;
}

inline void write_matrix_csv(const std::filesystem::path& path, const Mat& m) {
  auto out = open_out(path);
  for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << "c" << c;
  out << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << fmt(m(r, c));
    out << "\n";
  }
}

inline void write_distribution_csv(const std::filesystem::path& path,
                                   const exact::Distribution& d) {
  auto out = open_out(path);
  out << "index,prob,logw\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    out << i << "," << fmt(d.probs[i]) << "," << fmt(d.logw[i]) << "\n";
}

inline void write_witness_csv(const std::filesystem::path& path, const Vec& f,
                              double ratio) {
  auto out = open_out(path);
  out << "index,f,ratio\n";
  for (Eigen::Index i = 0; i < f.size(); ++i)
    out << i << "," << fmt(f[i]) << "," << fmt(ratio) << "\n";
}

// Generic column series, e.g. mixing curves (t, d_tv).
inline void write_series_csv(const std::filesystem::path& path,
                             const std::vector<std::string>& header,
                             const std::vector<std::vector<double>>& rows) {
  auto out = open_out(path);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << fmt(row[c]);
    out << "\n";
  }
}

}  // namespace entrofact::io
