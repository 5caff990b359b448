#include "ivrl/metrics_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ivrl/errors.hpp"

namespace ivrl {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<double> moving_average(const std::vector<double>& v, std::size_t window) {
  if (window <= 1) return v;
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= window) sum -= v[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

constexpr const char* kPalette[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

MetricsRecord aggregate(std::span<const EpisodeSummary> episodes, std::uint64_t step) {
  if (episodes.empty()) throw InvalidInput("aggregate: no episodes");
  long won = 0, dead_allies = 0, dead_enemies = 0;
  std::vector<double> returns;
  returns.reserve(episodes.size());
  for (const auto& e : episodes) {
    won += e.outcome == Outcome::Won ? 1 : 0;
    dead_allies += e.dead_allies;
    dead_enemies += e.dead_enemies;
    returns.push_back(e.innate_return);
  }
  // Summing in sorted order makes the floating-point result independent of
  // episode order.
  std::sort(returns.begin(), returns.end());
  double return_sum = 0.0;
  for (double r : returns) return_sum += r;
  const double n = static_cast<double>(episodes.size());
  MetricsRecord m;
  m.step = step;
  m.battle_won_mean = static_cast<double>(won) / n;
  m.dead_allies_mean = static_cast<double>(dead_allies) / n;
  m.dead_enemies_mean = static_cast<double>(dead_enemies) / n;
  m.mean_innate_return = return_sum / n;
  m.n_episodes = episodes.size();
  return m;
}

std::string format_csv_row(const MetricsRecord& r) {
  return std::to_string(r.step) + "," + fixed6(r.battle_won_mean) + "," + fixed6(r.dead_allies_mean) + "," +
         fixed6(r.dead_enemies_mean) + "," + fixed6(r.mean_innate_return) + "," + std::to_string(r.n_episodes);
}

std::string to_csv(std::span<const MetricsRecord> records) {
  std::string out(kMetricsCsvHeader);
  out += '\n';
  for (const auto& r : records) {
    out += format_csv_row(r);
    out += '\n';
  }
  return out;
}

void write_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string text = to_csv(records);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<MetricsRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader) throw CorruptFile(path.string() + ": unexpected CSV header");
  std::vector<MetricsRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw CorruptFile(path.string() + ":" + std::to_string(line_no) + ": expected 6 fields");
    try {
      MetricsRecord r;
      r.step = std::stoull(cells[0]);
      r.battle_won_mean = std::stod(cells[1]);
      r.dead_allies_mean = std::stod(cells[2]);
      r.dead_enemies_mean = std::stod(cells[3]);
      r.mean_innate_return = std::stod(cells[4]);
      r.n_episodes = std::stoull(cells[5]);
      records.push_back(r);
    } catch (const std::logic_error&) {
      throw CorruptFile(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return records;
}

bool is_metric_name(std::string_view name) {
  return std::find(std::begin(kMetricNames), std::end(kMetricNames), name) != std::end(kMetricNames);
}

double metric_value(const MetricsRecord& r, std::string_view metric) {
  if (metric == "battle_won_mean") return r.battle_won_mean;
  if (metric == "dead_allies_mean") return r.dead_allies_mean;
  if (metric == "dead_enemies_mean") return r.dead_enemies_mean;
  if (metric == "mean_innate_return") return r.mean_innate_return;
  throw InvalidInput("unknown metric '" + std::string(metric) + "'");
}

std::string render_chart_svg(const std::map<std::string, std::vector<MetricsRecord>>& series, std::string_view metric,
                             const ChartOptions& options) {
  if (!is_metric_name(metric)) throw InvalidInput("unknown metric '" + std::string(metric) + "'");
  if (series.empty()) throw InvalidInput("render_chart: no series");

  constexpr double kWidth = 640, kHeight = 400;
  constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> data;
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& [label, records] : series) {
    std::vector<double> xs, ys;
    for (const auto& r : records) {
      xs.push_back(static_cast<double>(r.step));
      ys.push_back(metric_value(r, metric));
    }
    ys = moving_average(ys, options.smoothing_window);
    for (double x : xs) x_min = std::min(x_min, x), x_max = std::max(x_max, x);
    for (double y : ys) y_min = std::min(y_min, y), y_max = std::max(y_max, y);
    data[label] = {std::move(xs), std::move(ys)};
  }
  if (!std::isfinite(x_min)) x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_min -= 0.5, y_max += 0.5;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const std::string title = options.title.empty() ? std::string(metric) : options.title;
  svg << "<text x=\"" << fixed2(kLeft + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x_min + (x_max - x_min) * k / 4.0;
    const double yv = y_min + (y_max - y_min) * k / 4.0;
    svg << "<text x=\"" << fixed2(px(xv)) << "\" y=\"" << fixed2(kTop + plot_h + 18)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << static_cast<long long>(std::llround(xv)) << "</text>\n";
    svg << "<text x=\"" << fixed2(kLeft - 6) << "\" y=\"" << fixed2(py(yv) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << fixed2(yv) << "</text>\n";
  }
  svg << "<text x=\"" << fixed2(kLeft + plot_w / 2) << "\" y=\"" << fixed2(kHeight - 10)
      << "\" text-anchor=\"middle\" font-size=\"12\">environment steps</text>\n";
  svg << "<text x=\"16\" y=\"" << fixed2(kTop + plot_h / 2) << "\" text-anchor=\"middle\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << fixed2(kTop + plot_h / 2) << ")\">" << xml_escape(metric) << "</text>\n";

  std::size_t idx = 0;
  for (const auto& [label, xy] : data) {
    const char* color = kPalette[idx % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xy.first.size(); ++i) {
      if (i) svg << ' ';
      svg << fixed2(px(xy.first[i])) << ',' << fixed2(py(xy.second[i]));
    }
    svg << "\"/>\n";
    const double ly = kTop + 16.0 + 20.0 * static_cast<double>(idx);
    svg << "<line x1=\"" << fixed2(kLeft + plot_w + 12) << "\" y1=\"" << fixed2(ly) << "\" x2=\""
        << fixed2(kLeft + plot_w + 32) << "\" y2=\"" << fixed2(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fixed2(kLeft + plot_w + 38) << "\" y=\"" << fixed2(ly + 4) << "\" font-size=\"12\">"
        << xml_escape(label) << "</text>\n";
    ++idx;
  }
  svg << "</svg>\n";
  return svg.str();
}

void render_chart(const std::map<std::string, std::vector<MetricsRecord>>& series, std::string_view metric,
                  const std::filesystem::path& path, const ChartOptions& options) {
  const std::string text = render_chart_svg(series, metric, options);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace ivrl
