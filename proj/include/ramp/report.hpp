#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "ramp/eval.hpp"

namespace ramp {

enum class Metric { Mae, Rmse, Mape };
std::string_view to_string(Metric m);  // "mae", "rmse", "mape"

// First line of every CSV artifact: `# seed=<seed> config_hash=<hash>`.
std::string provenance_line(std::uint64_t seed, const std::string& config_hash);

// Rows = sections (plus a trailing `mean` row), columns = `<target>:<model>`.
void write_metric_table(std::ostream& out, const MetricReport& r, Metric m);
// Long format for plotting: target,model,section,value.
void write_plot_data(std::ostream& out, const MetricReport& r, Metric m);
// Wall-clock per fold; kept apart from the reproducible report files.
void write_timing_csv(std::ostream& out, const MetricReport& r);

std::string report_to_json(const MetricReport& r);
MetricReport report_from_json(const std::string& text);

// Writes metrics_<m>.csv, plot_<m>.csv and summary.json into dir. Throws
// EmptyInput for an empty report and IoFailure when a file cannot be written.
std::vector<std::filesystem::path> emit_report(const MetricReport& r, const std::filesystem::path& dir);

// One row per combination: model,max_depth,n_estimators,k,mean_mae,<section>...
void write_grid_table(std::ostream& out, const GridResult& g, std::uint64_t seed, const std::string& config_hash);
std::string grid_to_json(const GridResult& g, std::uint64_t seed, const std::string& config_hash);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ramp
