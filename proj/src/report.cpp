#include "ramp/report.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ramp/csv.hpp"

namespace ramp {

using nlohmann::json;

namespace {

constexpr Metric kMetrics[] = {Metric::Mae, Metric::Rmse, Metric::Mape};

std::optional<double> metric_value(const Metrics& m, Metric which) {
    switch (which) {
    case Metric::Mae: return m.mae;
    case Metric::Rmse: return m.rmse;
    case Metric::Mape: return m.mape;
    }
    return std::nullopt;
}

std::string cell(std::optional<double> v) { return v ? csv::format_real(*v) : std::string(); }

}  // namespace

std::string_view to_string(Metric m) {
    switch (m) {
    case Metric::Mae: return "mae";
    case Metric::Rmse: return "rmse";
    case Metric::Mape: return "mape";
    }
    return "?";
}

std::string provenance_line(std::uint64_t seed, const std::string& config_hash) {
    return "# seed=" + std::to_string(seed) + " config_hash=" + config_hash;
}

void write_metric_table(std::ostream& out, const MetricReport& r, Metric m) {
    std::vector<std::string> columns;
    std::set<SectionId> sections;
    std::map<std::pair<SectionId, std::string>, std::optional<double>> values;
    for (const FoldResult& f : r.folds) {
        std::string col = f.target + ":" + f.model;
        if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
        sections.insert(f.section);
        values[{f.section, col}] = metric_value(f.metrics, m);
    }
    out << provenance_line(r.seed, r.config_hash) << '\n' << "section";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    std::vector<double> sums(columns.size(), 0.0);
    std::vector<std::size_t> counts(columns.size(), 0);
    for (const SectionId& s : sections) {
        out << s.str();
        for (std::size_t c = 0; c < columns.size(); ++c) {
            auto it = values.find({s, columns[c]});
            std::optional<double> v = it == values.end() ? std::nullopt : it->second;
            if (v) {
                sums[c] += *v;
                ++counts[c];
            }
            out << ',' << cell(v);
        }
        out << '\n';
    }
    out << "mean";
    for (std::size_t c = 0; c < columns.size(); ++c)
        out << ',' << cell(counts[c] ? std::optional<double>(sums[c] / static_cast<double>(counts[c])) : std::nullopt);
    out << '\n';
}

void write_plot_data(std::ostream& out, const MetricReport& r, Metric m) {
    out << provenance_line(r.seed, r.config_hash) << '\n' << "target,model,section," << to_string(m) << '\n';
    for (const FoldResult& f : r.folds)
        out << f.target << ',' << f.model << ',' << f.section.str() << ',' << cell(metric_value(f.metrics, m)) << '\n';
}

void write_timing_csv(std::ostream& out, const MetricReport& r) {
    out << "target,model,section,seconds\n";
    for (const FoldResult& f : r.folds)
        out << f.target << ',' << f.model << ',' << f.section.str() << ',' << csv::format_real(f.seconds) << '\n';
}

std::string report_to_json(const MetricReport& r) {
    json folds = json::array();
    for (const FoldResult& f : r.folds) {
        json j = {{"section", f.section.str()},
                  {"target", f.target},
                  {"model", f.model},
                  {"rows", f.rows},
                  {"mae", f.metrics.mae},
                  {"rmse", f.metrics.rmse},
                  {"mape", f.metrics.mape ? json(*f.metrics.mape) : json(nullptr)},
                  {"mape_skipped", f.metrics.mape_skipped},
                  {"columns", f.columns}};
        if (f.model == "TRA") j["selected_step"] = f.selected_step;
        folds.push_back(std::move(j));
    }
    json j = {{"format_version", 1}, {"seed", r.seed}, {"config_hash", r.config_hash}, {"folds", folds}};
    return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        MetricReport r;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_hash = j.at("config_hash").get<std::string>();
        for (const json& f : j.at("folds")) {
            FoldResult x;
            x.section = SectionId(f.at("section").get<std::string>());
            x.target = f.at("target").get<std::string>();
            x.model = f.at("model").get<std::string>();
            x.rows = f.at("rows").get<std::size_t>();
            x.metrics.mae = f.at("mae").get<double>();
            x.metrics.rmse = f.at("rmse").get<double>();
            if (!f.at("mape").is_null()) x.metrics.mape = f.at("mape").get<double>();
            x.metrics.mape_skipped = f.at("mape_skipped").get<std::size_t>();
            x.columns = f.at("columns").get<std::vector<std::string>>();
            x.selected_step = f.value("selected_step", 0);
            r.folds.push_back(std::move(x));
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("report: ") + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
    out << content;
    out.close();
    if (!out) throw Error(ErrorKind::IoFailure, "failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingPath, "cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::filesystem::path> emit_report(const MetricReport& r, const std::filesystem::path& dir) {
    if (r.folds.empty()) throw Error(ErrorKind::EmptyInput, "report: no folds to emit");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    for (Metric m : kMetrics) {
        std::ostringstream table, plot;
        write_metric_table(table, r, m);
        write_plot_data(plot, r, m);
        auto a = dir / ("metrics_" + std::string(to_string(m)) + ".csv");
        auto b = dir / ("plot_" + std::string(to_string(m)) + ".csv");
        write_text_file(a, table.str());
        write_text_file(b, plot.str());
        written.push_back(a);
        written.push_back(b);
    }
    auto s = dir / "summary.json";
    write_text_file(s, report_to_json(r));
    written.push_back(s);
    return written;
}

void write_grid_table(std::ostream& out, const GridResult& g, std::uint64_t seed, const std::string& config_hash) {
    out << provenance_line(seed, config_hash) << '\n' << "model,max_depth,n_estimators,k,mean_mae";
    for (const SectionId& s : g.sections) out << ',' << s.str();
    out << '\n';
    for (const GridPoint& p : g.table) {
        out << p.spec.label() << ',' << p.spec.max_depth << ',' << p.spec.n_estimators << ',' << p.spec.k << ','
            << csv::format_real(p.mean_mae);
        for (double v : p.fold_mae) out << ',' << csv::format_real(v);
        out << '\n';
    }
}

std::string grid_to_json(const GridResult& g, std::uint64_t seed, const std::string& config_hash) {
    json table = json::array();
    for (const GridPoint& p : g.table)
        table.push_back({{"max_depth", p.spec.max_depth},
                         {"n_estimators", p.spec.n_estimators},
                         {"k", p.spec.k},
                         {"mean_mae", p.mean_mae}});
    json j = {{"seed", seed},
              {"config_hash", config_hash},
              {"model", g.best.spec.label()},
              {"best",
               {{"max_depth", g.best.spec.max_depth},
                {"n_estimators", g.best.spec.n_estimators},
                {"k", g.best.spec.k},
                {"mean_mae", g.best.mean_mae}}},
              {"table", table}};
    return j.dump(2) + "\n";
}

}  // namespace ramp
