#include "mergelab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mergelab::io {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return std::string(buf);
}

double parse_double(std::string_view s, const std::string& source, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    raise(ErrorKind::format,
          source + ":" + std::to_string(line_no) + ": bad numeric field '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

constexpr std::string_view kRowsHeader = "protocol,scenario,eval_condition,alpha,seed,accuracy";
constexpr std::string_view kAggregateHeader =
    "protocol,scenario,eval_condition,alpha,mean,stderr,n_seeds";

}  // namespace

void write_rows_csv(const lab::SweepResult& result, std::ostream& out) {
  out << kRowsHeader << "\n";
  for (const lab::ResultRow& r : result.rows) {
    out << r.protocol << ',' << r.scenario << ',' << r.condition << ',' << fmt("%.2f", r.alpha)
        << ',' << r.seed << ',' << fmt("%.6f", r.accuracy) << "\n";
  }
}

lab::SweepResult read_rows_csv(std::istream& in, const std::string& source_name) {
  lab::SweepResult result;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) raise(ErrorKind::format, source_name + ": empty file");
  ++line_no;
  if (line != kRowsHeader) {
    raise(ErrorKind::format, source_name + ": unexpected header '" + line + "'");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 6) {
      raise(ErrorKind::format, source_name + ":" + std::to_string(line_no) + ": expected 6 fields, got " +
                                   std::to_string(fields.size()));
    }
    lab::ResultRow r;
    r.protocol = std::string(fields[0]);
    r.scenario = std::string(fields[1]);
    r.condition = std::string(fields[2]);
    r.alpha = parse_double(fields[3], source_name, line_no);
    r.seed = static_cast<std::uint64_t>(parse_double(fields[4], source_name, line_no));
    r.accuracy = parse_double(fields[5], source_name, line_no);
    result.rows.push_back(std::move(r));
  }
  if (!result.rows.empty()) result.protocol = result.rows.front().protocol;
  lab::aggregate(result);
  return result;
}

void write_aggregate_csv(const lab::SweepResult& result, std::ostream& out) {
  out << kAggregateHeader << "\n";
  for (const auto& [key, cell] : result.aggregates) {
    out << result.protocol << ',' << key.scenario << ',' << key.condition << ','
        << fmt("%.2f", key.alpha) << ',' << fmt("%.4f", 100.0 * cell.mean) << ',';
    if (cell.stderr_.has_value()) out << fmt("%.4f", 100.0 * *cell.stderr_);
    out << ',' << cell.n << "\n";
  }
}

std::filesystem::path write_run(const lab::SweepResult& result,
                                const std::filesystem::path& out_dir) {
  if (result.rows.empty()) raise(ErrorKind::input, "write_run: result has no rows");
  const std::filesystem::path run_dir = out_dir / ("run-" + result.run_id);
  std::filesystem::create_directories(run_dir);
  {
    std::ofstream f(run_dir / "rows.csv", std::ios::trunc);
    if (!f) raise(ErrorKind::io, "cannot write " + (run_dir / "rows.csv").string());
    write_rows_csv(result, f);
  }
  {
    std::ofstream f(run_dir / "aggregate.csv", std::ios::trunc);
    write_aggregate_csv(result, f);
  }
  {
    nlohmann::json meta;
    meta["protocol"] = result.protocol;
    meta["run_id"] = result.run_id;
    meta["rows"] = result.rows.size();
    std::ofstream f(run_dir / "meta.json", std::ios::trunc);
    f << meta.dump(2) << "\n";
  }
  return run_dir;
}

std::vector<lab::SweepResult> read_runs(const std::filesystem::path& results_dir) {
  std::vector<std::filesystem::path> row_files;
  if (std::filesystem::exists(results_dir / "rows.csv")) {
    row_files.push_back(results_dir / "rows.csv");
  } else if (std::filesystem::is_directory(results_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(results_dir)) {
      if (entry.is_directory() && entry.path().filename().string().starts_with("run-") &&
          std::filesystem::exists(entry.path() / "rows.csv")) {
        row_files.push_back(entry.path() / "rows.csv");
      }
    }
  }
  if (row_files.empty()) {
    raise(ErrorKind::input, "no run results (rows.csv) found under " + results_dir.string());
  }
  std::sort(row_files.begin(), row_files.end());
  std::vector<lab::SweepResult> runs;
  for (const auto& p : row_files) {
    std::ifstream f(p);
    if (!f) raise(ErrorKind::io, "cannot open " + p.string());
    lab::SweepResult r = read_rows_csv(f, p.string());
    const std::string dir_name = p.parent_path().filename().string();
    if (dir_name.starts_with("run-")) r.run_id = dir_name.substr(4);
    runs.push_back(std::move(r));
  }
  return runs;
}

namespace {

struct Series {
  std::string scenario;
  std::vector<double> alphas;
  std::vector<double> mean;
  std::vector<double> lo;  // mean - stderr (mean when stderr absent)
  std::vector<double> hi;
};

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 64, kRight = 20, kTop = 34, kBottom = 48;

double map_x(double alpha) { return kLeft + alpha * (kWidth - kLeft - kRight); }
double map_y(double acc) { return kHeight - kBottom - acc * (kHeight - kTop - kBottom); }

const char* scenario_color(const std::string& scenario) {
  if (scenario == "incremental") return "#1f77b4";
  if (scenario == "parallel") return "#ff7f0e";
  return "#555555";
}

std::string polyline_points(const Series& s) {
  std::string pts;
  for (std::size_t i = 0; i < s.alphas.size(); ++i) {
    if (i) pts += " ";
    pts += fmt("%.2f", map_x(s.alphas[i])) + "," + fmt("%.2f", map_y(s.mean[i]));
  }
  return pts;
}

std::string band_points(const Series& s) {
  // Closed polygon: upper edge forward, lower edge backward.
  std::string pts;
  for (std::size_t i = 0; i < s.alphas.size(); ++i) {
    if (i) pts += " ";
    pts += fmt("%.2f", map_x(s.alphas[i])) + "," + fmt("%.2f", map_y(s.hi[i]));
  }
  for (std::size_t i = s.alphas.size(); i-- > 0;) {
    pts += " " + fmt("%.2f", map_x(s.alphas[i])) + "," + fmt("%.2f", map_y(s.lo[i]));
  }
  return pts;
}

}  // namespace

std::string render_curves_svg(const lab::SweepResult& result, const std::string& condition) {
  if (result.aggregates.empty()) {
    raise(ErrorKind::input, "render_curves_svg: result has no aggregates");
  }
  std::map<std::string, Series> by_scenario;
  for (const auto& [key, cell] : result.aggregates) {
    if (key.condition != condition) continue;
    Series& s = by_scenario[key.scenario];
    s.scenario = key.scenario;
    s.alphas.push_back(key.alpha);
    s.mean.push_back(cell.mean);
    const double se = cell.stderr_.value_or(0.0);
    s.lo.push_back(cell.mean - se);
    s.hi.push_back(cell.mean + se);
  }
  if (by_scenario.empty()) {
    raise(ErrorKind::input, "render_curves_svg: no aggregates for condition '" + condition + "'");
  }

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", kWidth) +
         "\" height=\"" + fmt("%.0f", kHeight) + "\" viewBox=\"0 0 " + fmt("%.0f", kWidth) + " " +
         fmt("%.0f", kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt("%.2f", kWidth / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         result.protocol + " / " + condition + "</text>\n";

  // axes
  svg += "<line x1=\"" + fmt("%.2f", kLeft) + "\" y1=\"" + fmt("%.2f", kHeight - kBottom) +
         "\" x2=\"" + fmt("%.2f", kWidth - kRight) + "\" y2=\"" + fmt("%.2f", kHeight - kBottom) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt("%.2f", kLeft) + "\" y1=\"" + fmt("%.2f", kTop) + "\" x2=\"" +
         fmt("%.2f", kLeft) + "\" y2=\"" + fmt("%.2f", kHeight - kBottom) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 10; i += 2) {
    const double a = static_cast<double>(i) / 10.0;
    svg += "<line x1=\"" + fmt("%.2f", map_x(a)) + "\" y1=\"" + fmt("%.2f", kHeight - kBottom) +
           "\" x2=\"" + fmt("%.2f", map_x(a)) + "\" y2=\"" + fmt("%.2f", kHeight - kBottom + 5) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", map_x(a)) + "\" y=\"" + fmt("%.2f", kHeight - kBottom + 20) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           fmt("%.1f", a) + "</text>\n";
    svg += "<line x1=\"" + fmt("%.2f", kLeft - 5) + "\" y1=\"" + fmt("%.2f", map_y(a)) + "\" x2=\"" +
           fmt("%.2f", kLeft) + "\" y2=\"" + fmt("%.2f", map_y(a)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", kLeft - 10) + "\" y=\"" + fmt("%.2f", map_y(a) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt("%.1f", a) +
           "</text>\n";
  }
  svg += "<text x=\"" + fmt("%.2f", (kLeft + kWidth - kRight) / 2) + "\" y=\"" +
         fmt("%.2f", kHeight - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">interpolation "
         "coefficient alpha</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt("%.2f", (kTop + kHeight - kBottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 "
         "16 " +
         fmt("%.2f", (kTop + kHeight - kBottom) / 2) + ")\">accuracy</text>\n";

  double legend_y = kTop + 14;
  for (const auto& [scenario, series] : by_scenario) {
    const char* color = scenario_color(scenario);
    svg += "<polygon points=\"" + band_points(series) + "\" fill=\"" + color +
           "\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
    svg += "<polyline points=\"" + polyline_points(series) + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<line x1=\"" + fmt("%.2f", kWidth - kRight - 150) + "\" y1=\"" + fmt("%.2f", legend_y) +
           "\" x2=\"" + fmt("%.2f", kWidth - kRight - 126) + "\" y2=\"" + fmt("%.2f", legend_y) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", kWidth - kRight - 120) + "\" y=\"" + fmt("%.2f", legend_y + 4) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + scenario + "</text>\n";
    legend_y += 18;
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> emit_curves(const lab::SweepResult& result,
                                               const std::filesystem::path& out_dir) {
  if (result.rows.empty() && result.aggregates.empty()) {
    raise(ErrorKind::input, "emit_curves: empty result");
  }
  std::set<std::string> conditions;
  for (const auto& [key, _] : result.aggregates) conditions.insert(key.condition);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const std::string& c : conditions) {
    const std::string svg = render_curves_svg(result, c);
    const std::filesystem::path p = out_dir / (result.protocol + "_" + c + ".svg");
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorKind::io, "cannot write " + p.string());
    f.write(svg.data(), static_cast<std::streamsize>(svg.size()));
    written.push_back(p);
  }
  return written;
}

}  // namespace mergelab::io
