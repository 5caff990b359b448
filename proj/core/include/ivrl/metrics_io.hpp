#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivrl/battle_env.hpp"

namespace ivrl {

struct MetricsRecord {
  std::uint64_t step = 0;
  double battle_won_mean = 0.0;
  double dead_allies_mean = 0.0;
  double dead_enemies_mean = 0.0;
  double mean_innate_return = 0.0;
  std::size_t n_episodes = 0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

// What one evaluation episode contributes to a MetricsRecord.
struct EpisodeSummary {
  Outcome outcome = Outcome::Ongoing;
  int dead_allies = 0;
  int dead_enemies = 0;
  double innate_return = 0.0;  // undiscounted, averaged over agents
};

// Plain means over the episodes. Result does not depend on episode order.
MetricsRecord aggregate(std::span<const EpisodeSummary> episodes, std::uint64_t step);

inline constexpr std::string_view kMetricsCsvHeader =
    "step,battle_won_mean,dead_allies_mean,dead_enemies_mean,mean_innate_return,n_episodes";

std::string format_csv_row(const MetricsRecord& record);
std::string to_csv(std::span<const MetricsRecord> records);
void write_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path);
std::vector<MetricsRecord> read_csv(const std::filesystem::path& path);

inline constexpr std::string_view kMetricNames[] = {"battle_won_mean", "dead_allies_mean", "dead_enemies_mean",
                                                    "mean_innate_return"};
bool is_metric_name(std::string_view name);
double metric_value(const MetricsRecord& record, std::string_view metric);

struct ChartOptions {
  std::string title;
  std::size_t smoothing_window = 1;  // trailing moving average; 1 = raw
};

// Series label -> records. Emits one polyline per series (ordered by label)
// with a legend and axis labels. Throws InvalidInput on an unknown metric
// or an empty series map.
std::string render_chart_svg(const std::map<std::string, std::vector<MetricsRecord>>& series,
                             std::string_view metric, const ChartOptions& options = {});
void render_chart(const std::map<std::string, std::vector<MetricsRecord>>& series, std::string_view metric,
                  const std::filesystem::path& path, const ChartOptions& options = {});

}  // namespace ivrl
