#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tsvarsel/synth.hpp"
#include "tsvarsel/trajectory.hpp"

namespace tsvarsel {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr double kHeatmapAlpha = 0.05;

namespace detail {

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t\r");
    const auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string{} : c.substr(b, e - b + 1);
  }
  return cells;
}

inline bool try_parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline double parse_cell(const std::string& s, std::size_t row, std::size_t col) {
  double v = 0.0;
  if (!try_parse_double(s, v))
    throw InputError("row " + std::to_string(row) + ", column " + std::to_string(col) + ": non-numeric cell '" + s + "'");
  if (!std::isfinite(v))
    throw InputError("row " + std::to_string(row) + ", column " + std::to_string(col) + ": non-finite value");
  return v;
}

/// Non-empty lines as (1-based line number, cells).
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.emplace_back(lineno, split_csv_line(line));
  }
  return rows;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

inline bool looks_like_header(const std::vector<std::string>& cells) {
  double v = 0.0;
  return !cells.empty() && !try_parse_double(cells.front(), v);
}

}  // namespace detail

struct TimeSeriesTable {
  Matrix values;  // D x T
  std::vector<std::string> labels;
};

/// Reads `t,var_1,...,var_D` rows into a D x T matrix. t must be strictly
/// increasing; its values are otherwise ignored.
inline TimeSeriesTable read_timeseries_csv(const std::string& path, bool has_header = true) {
  auto rows = detail::read_csv_rows(path);
  std::vector<std::string> labels;
  std::size_t first = 0;
  if (has_header) {
    if (rows.empty()) throw InputError(path + ": missing header row");
    const auto& h = rows.front().second;
    if (h.size() < 2) throw InputError(path + ": header needs t and at least one variable");
    labels.assign(h.begin() + 1, h.end());
    first = 1;
  }
  if (rows.size() <= first) throw InputError(path + ": no data rows");
  const std::size_t width = has_header ? labels.size() + 1 : rows[first].second.size();
  if (width < 2) throw InputError(path + ": rows need t and at least one variable");
  if (!has_header)
    for (std::size_t d = 1; d < width; ++d) labels.push_back("var_" + std::to_string(d));

  const auto T = static_cast<Eigen::Index>(rows.size() - first);
  const auto D = static_cast<Eigen::Index>(width - 1);
  Matrix m(D, T);
  double prev_t = -std::numeric_limits<double>::infinity();
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& [lineno, cells] = rows[r];
    if (cells.size() != width)
      throw InputError("row " + std::to_string(lineno) + ": expected " + std::to_string(width) + " cells, got " +
                       std::to_string(cells.size()));
    const double t = detail::parse_cell(cells[0], lineno, 1);
    if (t == prev_t) throw InputError("row " + std::to_string(lineno) + ": duplicate t");
    if (t < prev_t) throw InputError("row " + std::to_string(lineno) + ": t not ascending");
    prev_t = t;
    for (std::size_t c = 1; c < width; ++c)
      m(static_cast<Eigen::Index>(c - 1), static_cast<Eigen::Index>(r - first)) = detail::parse_cell(cells[c], lineno, c + 1);
  }
  return {std::move(m), std::move(labels)};
}

/// Writes a D x T matrix with a `t,...` header, t = 1..T, values as %.17g.
inline void write_timeseries_csv(const std::string& path, const Matrix& series,
                                 const std::vector<std::string>& labels = {}) {
  detail::require(labels.empty() || labels.size() == static_cast<std::size_t>(series.rows()),
                  "label count must match the number of variables");
  auto out = detail::open_output(path);
  out << 't';
  for (Eigen::Index d = 0; d < series.rows(); ++d)
    out << ',' << (labels.empty() ? "var_" + std::to_string(d + 1) : labels[static_cast<std::size_t>(d)]);
  out << '\n';
  for (Eigen::Index t = 0; t < series.cols(); ++t) {
    out << (t + 1);
    for (Eigen::Index d = 0; d < series.rows(); ++d) out << ',' << detail::format_g17(series(d, t));
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

inline TimeSeriesPair read_timeseries_pair(const std::string& x_path, const std::string& y_path, bool has_header = true) {
  auto x = read_timeseries_csv(x_path, has_header);
  auto y = read_timeseries_csv(y_path, has_header);
  return TimeSeriesPair(std::move(x.values), std::move(y.values), std::move(x.labels));
}

// ---------------------------------------------------------------------------
// Rasterizer
// ---------------------------------------------------------------------------

struct GridBounds {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
};

struct PointRecord {
  int frame = 1;  // 1-based
  double x = 0.0;
  double y = 0.0;
};

/// Particle counts per grid cell and frame: a G^2 x frames matrix with cell
/// d = gy * G + gx + 1. Points on the upper bound fall in the last cell.
inline Matrix rasterize_points(const std::vector<PointRecord>& points, int frames, int grid, const GridBounds& bounds,
                               bool clip = false) {
  detail::require(grid >= 1, "grid size must be positive");
  detail::require(frames >= 1, "need at least one frame");
  detail::require(bounds.xmax > bounds.xmin && bounds.ymax > bounds.ymin, "bounds must have positive extent");
  Matrix counts = Matrix::Zero(static_cast<Eigen::Index>(grid) * grid, frames);
  auto cell = [grid](double v, double lo, double hi) {
    const int g = static_cast<int>(std::floor((v - lo) / (hi - lo) * grid));
    return std::min(g, grid - 1);
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    detail::require(p.frame >= 1 && p.frame <= frames, "point " + std::to_string(i + 1) + ": frame out of range");
    const bool inside = p.x >= bounds.xmin && p.x <= bounds.xmax && p.y >= bounds.ymin && p.y <= bounds.ymax;
    if (!inside) {
      if (clip) continue;
      throw InputError("point " + std::to_string(i + 1) + " lies outside the bounds (use --clip to drop it)");
    }
    const int gx = cell(p.x, bounds.xmin, bounds.xmax);
    const int gy = cell(p.y, bounds.ymin, bounds.ymax);
    counts(static_cast<Eigen::Index>(gy) * grid + gx, p.frame - 1) += 1.0;
  }
  return counts;
}

/// Reads `frame,x,y` rows (header optional).
inline std::vector<PointRecord> read_points_csv(const std::string& path) {
  auto rows = detail::read_csv_rows(path);
  std::vector<PointRecord> pts;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [lineno, cells] = rows[r];
    if (r == 0 && detail::looks_like_header(cells)) continue;
    if (cells.size() != 3)
      throw InputError("row " + std::to_string(lineno) + ": expected frame,x,y");
    const double f = detail::parse_cell(cells[0], lineno, 1);
    if (f < 1 || f != std::floor(f)) throw InputError("row " + std::to_string(lineno) + ": frame must be a positive integer");
    pts.push_back({static_cast<int>(f), detail::parse_cell(cells[1], lineno, 2), detail::parse_cell(cells[2], lineno, 3)});
  }
  if (pts.empty()) throw InputError(path + ": no points");
  return pts;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Reads `agent,t,c_1,...,c_C` rows (1-based agent and t, header optional).
/// Every (agent, t) pair in 1..A x 1..T must appear exactly once.
inline Trajectory read_trajectory_csv(const std::string& path) {
  auto rows = detail::read_csv_rows(path);
  struct Rec {
    int agent, t;
    std::vector<double> c;
  };
  std::vector<Rec> recs;
  std::size_t width = 0;
  int A = 0, T = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [lineno, cells] = rows[r];
    if (r == 0 && detail::looks_like_header(cells)) continue;
    if (width == 0) width = cells.size();
    if (width < 3) throw InputError("row " + std::to_string(lineno) + ": expected agent,t and coordinates");
    if (cells.size() != width)
      throw InputError("row " + std::to_string(lineno) + ": expected " + std::to_string(width) + " cells");
    Rec rec{};
    const double a = detail::parse_cell(cells[0], lineno, 1), t = detail::parse_cell(cells[1], lineno, 2);
    if (a < 1 || a != std::floor(a) || t < 1 || t != std::floor(t))
      throw InputError("row " + std::to_string(lineno) + ": agent and t must be positive integers");
    rec.agent = static_cast<int>(a);
    rec.t = static_cast<int>(t);
    for (std::size_t c = 2; c < width; ++c) rec.c.push_back(detail::parse_cell(cells[c], lineno, c + 1));
    A = std::max(A, rec.agent);
    T = std::max(T, rec.t);
    recs.push_back(std::move(rec));
  }
  if (recs.empty()) throw InputError(path + ": no trajectory rows");
  const int C = static_cast<int>(width - 2);
  if (recs.size() != static_cast<std::size_t>(A) * T)
    throw InputError(path + ": expected one row per agent and step (" + std::to_string(A) + " x " + std::to_string(T) + ")");
  Trajectory traj(A, T, C);
  std::vector<char> seen(static_cast<std::size_t>(A) * T, 0);
  for (const auto& rec : recs) {
    auto& s = seen[static_cast<std::size_t>(rec.agent - 1) * T + static_cast<std::size_t>(rec.t - 1)];
    if (s) throw InputError(path + ": duplicate row for agent " + std::to_string(rec.agent) + ", t " + std::to_string(rec.t));
    s = 1;
    for (int c = 0; c < C; ++c) traj(rec.agent - 1, rec.t - 1, c) = rec.c[static_cast<std::size_t>(c)];
  }
  return traj;
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  auto out = detail::open_output(path);
  out << "agent,t";
  for (int c = 1; c <= traj.coords(); ++c) out << ",c" << c;
  out << '\n';
  for (int a = 0; a < traj.agents(); ++a)
    for (int t = 0; t < traj.steps(); ++t) {
      out << (a + 1) << ',' << (t + 1);
      for (int c = 0; c < traj.coords(); ++c) out << ',' << detail::format_g17(traj(a, t, c));
      out << '\n';
    }
  if (!out) throw Error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline Json report_to_json(const RunReport& r) {
  Json buckets = Json::array();
  for (const auto& b : r.per_bucket) {
    const Vector& w = b.weights.values();
    buckets.push_back({{"bucket", b.bucket_index},
                       {"selected", b.selected},
                       {"weights", std::vector<double>(w.data(), w.data() + w.size())},
                       {"p_value", b.p_value},
                       {"h0_accepted_by_fallback", b.h0_accepted_by_fallback},
                       {"diagnostics", b.diagnostics}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"method", std::string(to_string(r.method))},
          {"plan",
           {{"split_points", r.plan.split_points()}, {"train_ratio", r.plan.train_ratio()}, {"seed", r.plan.seed()}}},
          {"variable_labels", r.variable_labels},
          {"config", r.config},
          {"buckets", std::move(buckets)}};
}

inline RunReport report_from_json(const Json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kReportSchemaVersion) throw InputError("unsupported report schema version " + std::to_string(version));
    const auto& p = j.at("plan");
    BucketPlan plan(p.at("split_points").get<std::vector<int>>(), p.at("train_ratio").get<double>(),
                    p.at("seed").get<std::uint64_t>());
    RunReport r{{}, std::move(plan), parse_method(j.at("method").get<std::string>()), j.at("config"),
                j.at("variable_labels").get<std::vector<std::string>>()};
    for (const auto& b : j.at("buckets")) {
      SelectionResult s;
      s.bucket_index = b.at("bucket").get<int>();
      s.selected = b.at("selected").get<VariableSet>();
      const auto w = b.at("weights").get<std::vector<double>>();
      s.weights = WeightVector(Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size())));
      s.p_value = b.at("p_value").get<double>();
      s.h0_accepted_by_fallback = b.at("h0_accepted_by_fallback").get<bool>();
      s.diagnostics = b.at("diagnostics");
      r.per_bucket.push_back(std::move(s));
    }
    return r;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed report: ") + e.what());
  }
}

inline std::string report_json_string(const RunReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline void write_report(const RunReport& r, const std::string& path) {
  auto out = detail::open_output(path);
  out << report_json_string(r);
  if (!out) throw Error("write failed: " + path);
}

inline RunReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return report_from_json(j);
}

/// D x B matrix of weights normalized to max 1 per bucket; columns with
/// p > alpha or an empty selection are zero.
inline Matrix heatmap_matrix(const RunReport& r, double alpha = kHeatmapAlpha) {
  detail::require(!r.per_bucket.empty(), "report has no buckets");
  const Eigen::Index D = r.per_bucket.front().weights.size();
  Matrix h = Matrix::Zero(D, static_cast<Eigen::Index>(r.per_bucket.size()));
  for (std::size_t b = 0; b < r.per_bucket.size(); ++b) {
    const auto& br = r.per_bucket[b];
    if (br.p_value > alpha || br.selected.empty() || br.weights.size() != D) continue;
    const double mx = br.weights.values().maxCoeff();
    if (mx > 0.0) h.col(static_cast<Eigen::Index>(b)) = br.weights.values() / mx;
  }
  return h;
}

inline void write_heatmap_csv(const RunReport& r, const std::string& path, double alpha = kHeatmapAlpha) {
  const Matrix h = heatmap_matrix(r, alpha);
  auto out = detail::open_output(path);
  out << "variable";
  for (const auto& br : r.per_bucket) out << ",bucket_" << br.bucket_index;
  out << '\n';
  for (Eigen::Index d = 0; d < h.rows(); ++d) {
    const auto idx = static_cast<std::size_t>(d);
    out << (idx < r.variable_labels.size() ? r.variable_labels[idx] : "var_" + std::to_string(d + 1));
    for (Eigen::Index b = 0; b < h.cols(); ++b) out << ',' << detail::format_g17(h(d, b));
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

/// One row per (method, bucket). Precision and recall are empty for buckets
/// that do not overlap the changed period.
inline void write_experiment_csv(const ExperimentResult& res, const std::string& path) {
  auto out = detail::open_output(path);
  out << "method,bucket,overlaps_change,p_mean,p_std,precision_mean,precision_std,recall_mean,recall_std\n";
  for (const auto& row : res.rows) {
    out << to_string(row.method) << ',' << row.bucket << ',' << (row.overlaps_change ? 1 : 0) << ','
        << detail::format_g17(row.p_mean) << ',' << detail::format_g17(row.p_std);
    if (row.overlaps_change)
      out << ',' << detail::format_g17(row.precision_mean) << ',' << detail::format_g17(row.precision_std) << ','
          << detail::format_g17(row.recall_mean) << ',' << detail::format_g17(row.recall_std);
    else
      out << ",,,,";
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

}  // namespace tsvarsel
