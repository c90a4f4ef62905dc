#include "ramp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include "CLI11.hpp"
#include "json.hpp"
#include "ramp/csv.hpp"
#include "ramp/model_io.hpp"
#include "ramp/report.hpp"

namespace ramp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { Quiet, Warn, Info, Debug };

LogLevel log_level() {
    const char* v = std::getenv("RAMP_TRANSFER_LOG");
    if (!v) return LogLevel::Info;
    std::string s(v);
    if (s == "quiet" || s == "off" || s == "0") return LogLevel::Quiet;
    if (s == "warn" || s == "warning") return LogLevel::Warn;
    if (s == "debug" || s == "trace") return LogLevel::Debug;
    return LogLevel::Info;
}

struct Context {
    const RunConfig& cfg;
    std::ostream& out;
    std::ostream& err;
    std::string hash;
    LogLevel level = log_level();

    void log(LogLevel at, const std::string& msg) const {
        if (at <= level && level != LogLevel::Quiet) err << "[ramp-transfer] " << msg << '\n';
    }
    fs::path path(const std::string& name) const { return fs::path(cfg.out) / name; }
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string kind_key(TargetKind k) { return std::string(to_string(k)); }

// Artifacts start with a provenance comment; readers skip leading '#' lines.
std::string read_artifact(const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorKind::MissingPath, "missing input file " + p.string());
    std::string text = read_text_file(p);
    std::size_t pos = 0;
    while (pos < text.size() && text[pos] == '#') {
        std::size_t nl = text.find('\n', pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
    }
    return text.substr(pos);
}

void write_csv_artifact(const Context& ctx, const fs::path& p, const std::string& body) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    write_text_file(p, provenance_line(ctx.cfg.seed, ctx.hash) + "\n" + body);
}

void write_json_artifact(const Context& ctx, const fs::path& p, json j) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    j["seed"] = ctx.cfg.seed;
    j["config_hash"] = ctx.hash;
    write_text_file(p, j.dump(2) + "\n");
}

std::vector<std::string> resolve_targets(const RunConfig& cfg, const Dataset& d) {
    if (cfg.targets.empty()) return d.target_names();
    for (const auto& t : cfg.targets)
        if (!d.target_index(t)) throw Error(ErrorKind::InvalidConfig, "unknown target " + t);
    return cfg.targets;
}

SectionId resolve_held_out(const RunConfig& cfg, const Dataset& d) {
    auto sections = d.sections();
    if (sections.size() < 2) throw Error(ErrorKind::TooFewSections, "need at least 2 sections, found " +
                                                                         std::to_string(sections.size()));
    if (cfg.held_out.empty()) return sections.back();
    SectionId s(cfg.held_out);
    if (std::find(sections.begin(), sections.end(), s) == sections.end())
        throw Error(ErrorKind::InvalidConfig, "held-out section " + cfg.held_out + " is not in the dataset");
    return s;
}

Dataset load_dataset(const Context& ctx) {
    std::istringstream in(read_artifact(ctx.path("dataset.csv")));
    return read_dataset_csv(in);
}

RidgeConfig ridge_config(const RunConfig& cfg) {
    RidgeConfig r = cfg.ridge;
    r.seed = derive_seed(cfg.seed, 11);
    return r;
}

EvalConfig eval_config(const RunConfig& cfg) {
    EvalConfig e;
    e.transfer = cfg.transfer;
    e.ridge = cfg.ridge;
    e.thresholds = cfg.thresholds;
    e.runs = cfg.runs;
    e.jobs = cfg.jobs;
    e.seed = cfg.seed;
    return e;
}

std::vector<ModelSpec> model_specs(const RunConfig& cfg) {
    std::vector<ModelSpec> specs;
    for (ModelKind k : cfg.models) specs.push_back({k, cfg.transfer.max_depth, cfg.transfer.n_estimators, cfg.knn_k});
    return specs;
}

// ---------------------------------------------------------------------------
// Stages

void stage_synth(const Context& ctx) {
    SynthConfig sc = ctx.cfg.synth;
    sc.seed = ctx.cfg.seed;
    SynthCorpus corpus = generate(sc);
    if (ctx.cfg.synth_raw) {
        auto files = write_raw(corpus, ctx.cfg.raw_dir());
        ctx.out << "synth: " << corpus.latents.size() << " sections, " << files.size() << " files -> "
                << ctx.cfg.raw_dir() << '\n';
    } else {
        std::ostringstream s;
        write_samples_csv(s, corpus.samples);
        write_csv_artifact(ctx, ctx.path("samples.csv"), s.str());
        write_text_file(ctx.path("site_map.json"), corpus.map.to_json());
        write_text_file(ctx.path("manifest.json"), corpus.manifest_json());
        ctx.out << "synth: " << corpus.latents.size() << " sections, " << corpus.samples.size() << " samples -> "
                << ctx.path("samples.csv").string() << '\n';
    }
}

void stage_ingest(const Context& ctx) {
    const fs::path raw = ctx.cfg.raw_dir();
    const fs::path map_path = ctx.cfg.site_map_path();
    if (!fs::exists(map_path)) throw Error(ErrorKind::MissingPath, "site map not found: " + map_path.string());
    SiteMap map = SiteMap::load(map_path.string());
    if (!fs::is_directory(raw)) throw Error(ErrorKind::MissingPath, "raw data directory not found: " + raw.string());

    std::vector<TrafficSample> samples;
    std::ostringstream skipped;
    skipped << "file,line,reason\n";
    std::size_t skip_count = 0, omitted_count = 0, files = 0;
    for (Period period : {Period::Before, Period::After}) {
        const fs::path dir = raw / std::string(to_string(period));
        if (!fs::is_directory(dir)) throw Error(ErrorKind::MissingPath, "missing directory " + dir.string());
        std::vector<fs::path> loops;
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("loop_", 0) == 0 && e.path().extension() == ".csv") loops.push_back(e.path());
        }
        std::sort(loops.begin(), loops.end());
        if (loops.empty()) throw Error(ErrorKind::MissingPath, "no loop_*.csv files in " + dir.string());
        for (const fs::path& lp : loops) {
            const fs::path pp = dir / ("probe_" + lp.filename().string().substr(5));
            if (!fs::exists(pp)) throw Error(ErrorKind::MissingPath, "missing probe file " + pp.string());
            std::ifstream lin(lp, std::ios::binary), pin(pp, std::ios::binary);
            if (!lin || !pin) throw Error(ErrorKind::IoFailure, "cannot read " + lp.string());
            LoopParseResult loops_parsed;
            ProbeParseResult probes_parsed;
            try {
                loops_parsed = parse_loop_csv(lin, map);
            } catch (const Error& e) {
                throw Error(e.kind(), lp.string() + ": " + e.what());
            }
            try {
                probes_parsed = parse_probe_csv(pin, map);
            } catch (const Error& e) {
                throw Error(e.kind(), pp.string() + ": " + e.what());
            }
            for (const auto& [path, rep] : {std::pair{lp, &loops_parsed.skipped}, std::pair{pp, &probes_parsed.skipped}})
                for (const auto& s : rep->rows) {
                    skipped << path.filename().string() << ',' << s.line << ',' << s.reason << '\n';
                    ++skip_count;
                }
            AggregateResult agg = aggregate(loops_parsed.records, probes_parsed.records, map, period, ctx.cfg.aggregate);
            omitted_count += agg.omitted.size();
            for (const auto& o : agg.omitted)
                ctx.log(LogLevel::Debug, "omitted " + o.section.str() + " " + std::string(to_string(o.position)) +
                                             " week " + std::to_string(o.week_index) + ": " + o.reason);
            samples.insert(samples.end(), agg.samples.begin(), agg.samples.end());
            files += 2;
        }
    }
    std::sort(samples.begin(), samples.end(), [](const TrafficSample& a, const TrafficSample& b) {
        return std::tie(a.section, a.period, a.position, a.week_index, a.key) <
               std::tie(b.section, b.period, b.position, b.week_index, b.key);
    });
    std::ostringstream s;
    write_samples_csv(s, samples);
    write_csv_artifact(ctx, ctx.path("samples.csv"), s.str());
    write_csv_artifact(ctx, ctx.path("ingest_skipped.csv"), skipped.str());
    if (skip_count) ctx.log(LogLevel::Warn, std::to_string(skip_count) + " malformed or unmapped rows skipped");
    ctx.out << "ingest: " << files << " files, " << samples.size() << " samples, " << skip_count
            << " rows skipped, " << omitted_count << " slots omitted\n";
}

void stage_correct(const Context& ctx) {
    std::istringstream in(read_artifact(ctx.path("samples.csv")));
    auto samples = read_samples_csv(in);
    if (samples.empty()) throw Error(ErrorKind::EmptyInput, "samples.csv has no rows");
    auto profiles = temporal_correct_all(samples);
    std::ostringstream s;
    write_profiles_csv(s, profiles);
    write_csv_artifact(ctx, ctx.path("profiles.csv"), s.str());
    ctx.out << "correct: " << samples.size() << " samples -> " << profiles.size() << " profiles\n";
}

void stage_pair(const Context& ctx) {
    std::istringstream in(read_artifact(ctx.path("profiles.csv")));
    std::size_t dropped = 0;
    Dataset d = pair_profiles(read_profiles_csv(in), ctx.cfg.pair, &dropped);
    std::ostringstream s;
    write_dataset_csv(s, d);
    write_csv_artifact(ctx, ctx.path("dataset.csv"), s.str());
    ctx.out << "pair: " << d.size() << " rows over " << d.sections().size() << " sections, " << dropped
            << " keys dropped\n";
}

void stage_ridge(const Context& ctx) {
    Dataset all = load_dataset(ctx);
    const SectionId held = resolve_held_out(ctx.cfg, all);
    Dataset d = all.where_section(held, false);
    std::vector<AveragedCoefficients> coeffs;
    for (const auto& t : resolve_targets(ctx.cfg, d)) coeffs.push_back(averaged_fit(d, t, ridge_config(ctx.cfg)));
    SelectionResult sel = filter_variables(coeffs, ctx.cfg.thresholds);
    std::ostringstream table;
    write_coefficient_table(table, sel);
    write_csv_artifact(ctx, ctx.path("ridge/coefficients.csv"), table.str());
    json j = json::parse(selection_to_json(sel));
    j["excluded_section"] = held.str();
    write_json_artifact(ctx, ctx.path("ridge/selection.json"), j);
    for (const auto& w : sel.warnings) ctx.log(LogLevel::Warn, w);
    std::size_t chosen = 0;
    for (const auto& t : sel.targets) chosen += t.selected.size();
    ctx.out << "ridge: " << sel.targets.size() << " targets, " << chosen << " variables selected\n";
}

std::optional<SelectionResult> load_selection(const Context& ctx) {
    const fs::path p = ctx.path("ridge/selection.json");
    if (!fs::exists(p)) return std::nullopt;
    return selection_from_json(read_text_file(p));
}

std::string model_file(const std::string& target) { return "models/" + target + ".json"; }

void stage_train(const Context& ctx) {
    Dataset d = load_dataset(ctx);
    const SectionId held = resolve_held_out(ctx.cfg, d);
    Dataset source = d.where_section(held, false), target = d.where_section(held, true);
    auto selection = load_selection(ctx);
    std::size_t models = 0;
    for (const auto& t : resolve_targets(ctx.cfg, d)) {
        std::vector<std::string> columns = d.input_names();
        if (selection) {
            if (const TargetSelection* s = selection->find(t)) columns = s->selected;
        }
        Eigen::MatrixXd Xs = source.inputs(columns), Xt = target.inputs(columns);
        const std::vector<std::string>& sim_cols = ctx.cfg.transfer.substitute_all_inputs ? d.input_names() : columns;
        Substitute sub = build_substitute(source.inputs(sim_cols), target.inputs(sim_cols), ctx.cfg.transfer.theta,
                                          ctx.cfg.transfer.comparator);
        TransferConfig tc = ctx.cfg.transfer;
        tc.seed = derive_seed(ctx.cfg.seed, 21);
        TransferModel m = two_stage_fit(Xs, source.target(t), sub.indices, columns, tc);
        json j = json::parse(transfer_model_to_json(m, t));
        j["held_out_section"] = held.str();
        write_json_artifact(ctx, ctx.path(model_file(t)), j);
        ctx.log(LogLevel::Info, t + ": substitute " + std::to_string(sub.indices.size()) + "/" +
                                    std::to_string(source.size()) + " rows, selected step " +
                                    std::to_string(m.selected_step));
        ++models;
    }
    ctx.out << "train: " << models << " models for held-out section " << held.str() << '\n';
}

void stage_predict(const Context& ctx) {
    Dataset d = load_dataset(ctx);
    const SectionId held = resolve_held_out(ctx.cfg, d);
    Dataset rows = d.where_section(held, true);
    std::ostringstream s;
    s << "section,dow,hod,moh,target,prediction,actual\n";
    std::size_t count = 0;
    for (const auto& t : resolve_targets(ctx.cfg, d)) {
        const fs::path p = ctx.path(model_file(t));
        if (!fs::exists(p)) throw Error(ErrorKind::MissingPath, "no trained model " + p.string() + "; run train first");
        TransferModel m = transfer_model_from_json(read_text_file(p));
        Eigen::VectorXd pred = transfer_predict(m, rows.inputs(m.columns), m.columns);
        Eigen::VectorXd actual = rows.target(t);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const FeatureRow& r = rows.rows()[i];
            const auto e = static_cast<Eigen::Index>(i);
            s << r.section.str() << ',' << r.key.dow << ',' << r.key.hod << ',' << r.key.moh << ',' << t << ','
              << csv::format_real(pred(e)) << ',' << csv::format_real(actual(e)) << '\n';
            ++count;
        }
    }
    write_csv_artifact(ctx, ctx.path("predictions.csv"), s.str());
    ctx.out << "predict: " << count << " predictions for section " << held.str() << '\n';
}

void stage_evaluate(const Context& ctx) {
    Dataset d = load_dataset(ctx);
    EvalConfig ec = eval_config(ctx.cfg);
    MetricReport all;
    all.seed = ctx.cfg.seed;
    all.config_hash = ctx.hash;
    for (const auto& t : resolve_targets(ctx.cfg, d)) {
        ctx.log(LogLevel::Info, "evaluating " + t);
        MetricReport r = loso_cv(d, t, model_specs(ctx.cfg), ec);
        all.folds.insert(all.folds.end(), r.folds.begin(), r.folds.end());
    }
    all.normalize();
    std::error_code ec_dir;
    fs::create_directories(ctx.cfg.out, ec_dir);
    write_text_file(ctx.path("evaluation.json"), report_to_json(all));
    std::ostringstream timing;
    write_timing_csv(timing, all);
    write_text_file(ctx.path("timing.csv"), timing.str());
    ctx.out << "evaluate: " << all.folds.size() << " fold results over " << d.sections().size() << " sections\n";
}

void stage_report(const Context& ctx) {
    MetricReport r = report_from_json(read_artifact(ctx.path("evaluation.json")));
    auto files = emit_report(r, ctx.path("report"));
    ctx.out << "report: " << files.size() << " files -> " << ctx.path("report").string() << '\n';
}

void stage_grid(const Context& ctx) {
    Dataset d = load_dataset(ctx);
    GridResult g = grid_search(d, ctx.cfg.grid_target, ctx.cfg.grid_model, ctx.cfg.grid, eval_config(ctx.cfg),
                               ctx.cfg.budget);
    const std::string stem = "grid/" + ctx.cfg.grid_target + "_" + std::string(to_string(ctx.cfg.grid_model));
    std::ostringstream table;
    write_grid_table(table, g, ctx.cfg.seed, ctx.hash);
    std::error_code ec;
    fs::create_directories(ctx.path("grid"), ec);
    write_text_file(ctx.path(stem + ".csv"), table.str());
    write_text_file(ctx.path(stem + ".json"), grid_to_json(g, ctx.cfg.seed, ctx.hash));
    ctx.out << "grid-search: " << g.table.size() << " combinations, best max_depth=" << g.best.spec.max_depth
            << " n_estimators=" << g.best.spec.n_estimators;
    if (ctx.cfg.grid_model == ModelKind::Knn) ctx.out << " k=" << g.best.spec.k;
    ctx.out << " mean MAE " << csv::format_real(g.best.mean_mae) << '\n';
}

void stage_pipeline(const Context& ctx) {
    for (auto stage : {stage_ingest, stage_correct, stage_pair, stage_ridge, stage_train, stage_predict,
                       stage_evaluate, stage_report})
        stage(ctx);
}

// ---------------------------------------------------------------------------
// Parsing helpers

std::vector<double> parse_real_list(const std::string& text, const char* what) {
    std::vector<double> out;
    for (const auto& f : csv::split_line(text)) {
        auto v = csv::parse_real(f);
        if (!v) throw Error(ErrorKind::InvalidConfig, std::string(what) + ": cannot parse '" + f + "'");
        out.push_back(*v);
    }
    if (out.empty()) throw Error(ErrorKind::InvalidConfig, std::string(what) + ": empty list");
    return out;
}

ThresholdMap parse_thresholds(const std::string& text) {
    ThresholdMap m = default_thresholds();
    for (const auto& item : csv::split_line(text)) {
        auto colon = item.find(':');
        if (colon == std::string::npos) throw Error(ErrorKind::InvalidConfig, "thresholds: expected kind:value in '" + item + "'");
        std::string kind = item.substr(0, colon);
        auto v = csv::parse_real(item.substr(colon + 1));
        if (!v || *v < 0.0) throw Error(ErrorKind::InvalidConfig, "thresholds: bad value in '" + item + "'");
        if (kind == "speed") m[TargetKind::Speed] = *v;
        else if (kind == "occupancy") m[TargetKind::Occupancy] = *v;
        else if (kind == "flow") m[TargetKind::Flow] = *v;
        else throw Error(ErrorKind::InvalidConfig, "thresholds: unknown kind '" + kind + "'");
    }
    return m;
}

template <class T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config: " + where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
            throw Error(ErrorKind::InvalidConfig, "config: unknown key '" + k + "' in " + where);
}

std::vector<HourWindow> hours_from(const json& j) {
    std::vector<HourWindow> out;
    for (const auto& h : j) {
        auto v = h.get<std::vector<int>>();
        if (v.size() != 2) throw Error(ErrorKind::InvalidConfig, "config: hour windows are [begin, end] pairs");
        out.push_back({v[0], v[1]});
    }
    return out;
}

json hours_json(const std::vector<HourWindow>& hs) {
    json a = json::array();
    for (const auto& h : hs) a.push_back({h.begin_hour, h.end_hour});
    return a;
}

void validate(const RunConfig& cfg) {
    if (cfg.jobs < 1) throw Error(ErrorKind::InvalidConfig, "--jobs must be >= 1");
    if (cfg.runs < 1) throw Error(ErrorKind::InvalidConfig, "--runs must be >= 1");
    if (cfg.knn_k < 1) throw Error(ErrorKind::InvalidConfig, "knn k must be >= 1");
    if (cfg.ridge.folds < 2) throw Error(ErrorKind::InvalidConfig, "ridge folds must be >= 2");
    if (cfg.ridge.runs < 1) throw Error(ErrorKind::InvalidConfig, "ridge runs must be >= 1");
    if (cfg.ridge.lambda_grid.empty()) throw Error(ErrorKind::InvalidConfig, "lambda grid must be non-empty");
    for (double l : cfg.ridge.lambda_grid)
        if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::InvalidConfig, "lambda values must be >= 0");
    if (!(cfg.aggregate.min_loop_coverage >= 0.0 && cfg.aggregate.min_loop_coverage <= 1.0))
        throw Error(ErrorKind::InvalidConfig, "min_loop_coverage must lie in [0, 1]");
    if (cfg.aggregate.min_probe_minutes < 0 || cfg.aggregate.min_probe_minutes > kProbeMinutesPerSlot)
        throw Error(ErrorKind::InvalidConfig, "min_probe_minutes must lie in [0, 15]");
    if (cfg.models.empty()) throw Error(ErrorKind::InvalidConfig, "at least one model is required");
    cfg.transfer.validate();
    cfg.grid.validate();
    cfg.synth.validate();
}

}  // namespace

std::string RunConfig::raw_dir() const { return raw.empty() ? (fs::path(out) / "raw").string() : raw; }

std::string RunConfig::site_map_path() const {
    return site_map.empty() ? (fs::path(raw_dir()) / "site_map.json").string() : site_map;
}

std::string canonical_config(const RunConfig& c) {
    json thresholds = json::object();
    for (const auto& [k, v] : c.thresholds) thresholds[kind_key(k)] = v;
    std::vector<std::string> models;
    for (ModelKind m : c.models) models.emplace_back(to_string(m));
    json transfer = {{"steps", c.transfer.steps},
                     {"folds", c.transfer.folds},
                     {"theta", c.transfer.theta},
                     {"comparator", std::string(to_string(c.transfer.comparator))},
                     {"n_estimators", c.transfer.n_estimators},
                     {"max_depth", c.transfer.max_depth},
                     {"cv_exclude_twins", c.transfer.cv_exclude_twins},
                     {"substitute_all_inputs", c.transfer.substitute_all_inputs}};
    if (c.transfer.min_leaf_weight) transfer["min_leaf_weight"] = *c.transfer.min_leaf_weight;
    json j = {
        {"seed", c.seed},
        {"aggregate",
         {{"min_loop_coverage", c.aggregate.min_loop_coverage},
          {"min_probe_minutes", c.aggregate.min_probe_minutes},
          {"weekdays", c.aggregate.weekdays},
          {"hours", hours_json(c.aggregate.hours)}}},
        {"pair", {{"include_down_occupancy", c.pair.include_down_occupancy}}},
        {"ridge",
         {{"lambda_grid", c.ridge.lambda_grid},
          {"folds", c.ridge.folds},
          {"runs", c.ridge.runs},
          {"subsample", c.ridge.subsample},
          {"thresholds", thresholds}}},
        {"transfer", transfer},
        {"eval",
         {{"targets", c.targets}, {"models", models}, {"knn_k", c.knn_k}, {"runs", c.runs}, {"held_out", c.held_out}}},
        {"grid",
         {{"max_depth", c.grid.max_depth},
          {"n_estimators", c.grid.n_estimators},
          {"n_neighbors", c.grid.n_neighbors},
          {"model", std::string(to_string(c.grid_model))},
          {"target", c.grid_target},
          {"budget", c.budget ? json(*c.budget) : json(nullptr)}}},
        {"synth",
         {{"n_sections", c.synth.n_sections},
          {"weeks", c.synth.weeks},
          {"weekdays", c.synth.weekdays},
          {"hours", hours_json(c.synth.hours)},
          {"regime", std::string(to_string(c.synth.regime))},
          {"week_noise", c.synth.week_noise},
          {"slot_noise", c.synth.slot_noise},
          {"target_noise", c.synth.target_noise},
          {"domain_shift", c.synth.domain_shift},
          {"gap_weeks", c.synth.gap_weeks},
          {"raw", c.synth_raw}}},
    };
    return j.dump();
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(canonical_config(cfg))); }

void apply_config_json(RunConfig& c, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
    }
    try {
        check_keys(j, {"paths", "seed", "jobs", "aggregate", "pair", "ridge", "transfer", "eval", "grid", "synth"},
                   "config");
        take(j, "seed", c.seed);
        take(j, "jobs", c.jobs);
        if (j.contains("paths")) {
            const json& p = j["paths"];
            check_keys(p, {"out", "raw", "site_map"}, "paths");
            take(p, "out", c.out);
            take(p, "raw", c.raw);
            take(p, "site_map", c.site_map);
        }
        if (j.contains("aggregate")) {
            const json& a = j["aggregate"];
            check_keys(a, {"min_loop_coverage", "min_probe_minutes", "weekdays", "hours"}, "aggregate");
            take(a, "min_loop_coverage", c.aggregate.min_loop_coverage);
            take(a, "min_probe_minutes", c.aggregate.min_probe_minutes);
            take(a, "weekdays", c.aggregate.weekdays);
            if (a.contains("hours")) c.aggregate.hours = hours_from(a["hours"]);
        }
        if (j.contains("pair")) {
            check_keys(j["pair"], {"include_down_occupancy"}, "pair");
            take(j["pair"], "include_down_occupancy", c.pair.include_down_occupancy);
        }
        if (j.contains("ridge")) {
            const json& r = j["ridge"];
            check_keys(r, {"lambda_grid", "folds", "runs", "subsample", "thresholds"}, "ridge");
            take(r, "lambda_grid", c.ridge.lambda_grid);
            take(r, "folds", c.ridge.folds);
            take(r, "runs", c.ridge.runs);
            take(r, "subsample", c.ridge.subsample);
            if (r.contains("thresholds")) {
                check_keys(r["thresholds"], {"speed", "occupancy", "flow"}, "ridge.thresholds");
                for (const auto& [k, v] : r["thresholds"].items())
                    c.thresholds[k == "speed" ? TargetKind::Speed
                                              : k == "occupancy" ? TargetKind::Occupancy : TargetKind::Flow] =
                        v.get<double>();
            }
        }
        if (j.contains("transfer")) {
            const json& t = j["transfer"];
            check_keys(t, {"steps", "folds", "theta", "comparator", "n_estimators", "max_depth", "min_leaf_weight",
                           "cv_exclude_twins", "substitute_all_inputs"},
                       "transfer");
            take(t, "steps", c.transfer.steps);
            take(t, "folds", c.transfer.folds);
            take(t, "theta", c.transfer.theta);
            take(t, "n_estimators", c.transfer.n_estimators);
            take(t, "max_depth", c.transfer.max_depth);
            take(t, "cv_exclude_twins", c.transfer.cv_exclude_twins);
            take(t, "substitute_all_inputs", c.transfer.substitute_all_inputs);
            if (t.contains("min_leaf_weight")) c.transfer.min_leaf_weight = t["min_leaf_weight"].get<double>();
            if (t.contains("comparator")) {
                auto cmp = parse_comparator(t["comparator"].get<std::string>());
                if (!cmp) throw Error(ErrorKind::InvalidConfig, "config: comparator must be 'le' or 'ge'");
                c.transfer.comparator = *cmp;
            }
        }
        if (j.contains("eval")) {
            const json& e = j["eval"];
            check_keys(e, {"targets", "models", "knn_k", "runs", "held_out"}, "eval");
            take(e, "targets", c.targets);
            take(e, "knn_k", c.knn_k);
            take(e, "runs", c.runs);
            take(e, "held_out", c.held_out);
            if (e.contains("models")) {
                c.models.clear();
                for (const auto& m : e["models"]) {
                    auto k = parse_model_kind(m.get<std::string>());
                    if (!k) throw Error(ErrorKind::InvalidConfig, "config: unknown model " + m.get<std::string>());
                    c.models.push_back(*k);
                }
            }
        }
        if (j.contains("grid")) {
            const json& g = j["grid"];
            check_keys(g, {"max_depth", "n_estimators", "n_neighbors", "model", "target", "budget"}, "grid");
            take(g, "max_depth", c.grid.max_depth);
            take(g, "n_estimators", c.grid.n_estimators);
            take(g, "n_neighbors", c.grid.n_neighbors);
            take(g, "target", c.grid_target);
            if (g.contains("budget") && !g["budget"].is_null()) c.budget = g["budget"].get<std::size_t>();
            if (g.contains("model")) {
                auto k = parse_model_kind(g["model"].get<std::string>());
                if (!k) throw Error(ErrorKind::InvalidConfig, "config: unknown grid model");
                c.grid_model = *k;
            }
        }
        if (j.contains("synth")) {
            const json& s = j["synth"];
            check_keys(s, {"n_sections", "weeks", "weekdays", "hours", "regime", "week_noise", "slot_noise",
                           "target_noise", "domain_shift", "gap_weeks", "raw"},
                       "synth");
            take(s, "n_sections", c.synth.n_sections);
            take(s, "weeks", c.synth.weeks);
            take(s, "weekdays", c.synth.weekdays);
            if (s.contains("hours")) c.synth.hours = hours_from(s["hours"]);
            take(s, "week_noise", c.synth.week_noise);
            take(s, "slot_noise", c.synth.slot_noise);
            take(s, "target_noise", c.synth.target_noise);
            take(s, "domain_shift", c.synth.domain_shift);
            take(s, "gap_weeks", c.synth.gap_weeks);
            take(s, "raw", c.synth_raw);
            if (s.contains("regime")) {
                auto r = parse_regime(s["regime"].get<std::string>());
                if (!r) throw Error(ErrorKind::InvalidConfig, "config: regime must be 'linear' or 'piecewise'");
                c.synth.regime = *r;
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Predict after-period freeway traffic for ramp-metering changes with transfer boosting",
                 "ramp-transfer"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path, out_dir, raw_dir, site_map, lambda_grid, thresholds, comparator, models, targets;
    std::string regime;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs, runs, steps, folds, max_depth, n_estimators, knn_k, n_sections;
    std::optional<std::size_t> budget;
    std::optional<double> theta, domain_shift;
    std::string held_out, grid_target, grid_model;
    bool samples_only = false;

    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_option("--seed", seed, "Master random seed");
    app.add_option("--jobs", jobs, "Worker threads");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--raw", raw_dir, "Raw data directory (default <out>/raw)");
    app.add_option("--site-map", site_map, "Site map JSON (default <raw>/site_map.json)");
    app.add_option("--budget", budget, "Cap on grid combinations (seeded subsample)");
    app.add_option("--runs", runs, "Evaluation repeats with incremented seeds");
    app.add_option("--theta", theta, "Cosine-similarity threshold for the target substitute");
    app.add_option("--comparator", comparator, "Substitute rule: le or ge");
    app.add_option("--steps", steps, "Two-stage steps S");
    app.add_option("--folds", folds, "Cross-validation folds F");
    app.add_option("--max-depth", max_depth, "Tree depth");
    app.add_option("--n-estimators", n_estimators, "Boosting rounds");
    app.add_option("--lambda-grid", lambda_grid, "Comma-separated ridge penalties");
    app.add_option("--thresholds", thresholds, "Selection thresholds, e.g. speed:0.5,occupancy:0.5,flow:50");
    app.add_option("--models", models, "Comma-separated models to evaluate (TRA,ADA,KNN)");
    app.add_option("--k", knn_k, "KNN neighbours");
    app.add_option("--targets", targets, "Comma-separated after-period targets (default all)");
    app.add_option("--section", held_out, "Held-out section for train and predict (default last)");
    app.add_option("--target", grid_target, "Target for grid-search");
    app.add_option("--grid-model", grid_model, "Model for grid-search (TRA or KNN)");
    app.add_option("--n-sections", n_sections, "Synthetic sections");
    app.add_option("--regime", regime, "Synthetic after-period regime: piecewise or linear");
    app.add_option("--domain-shift", domain_shift, "Synthetic held-out section shift, in latent sd");
    app.add_flag("--samples-only", samples_only, "synth: write samples.csv instead of raw feeds");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"ingest", "Parse raw loop/probe feeds into 15-minute samples"},
        {"correct", "Average samples across weeks per time key"},
        {"pair", "Join before and after profiles into the feature dataset"},
        {"ridge", "Ridge coefficients and variable selection"},
        {"train", "Fit transfer models for the held-out section"},
        {"predict", "Predict the held-out section with trained models"},
        {"evaluate", "Leave-one-section-out evaluation"},
        {"grid-search", "Hyperparameter grid search by LOSO MAE"},
        {"synth", "Generate a synthetic corpus"},
        {"report", "Emit metric tables, plot data and summary"},
        {"pipeline", "ingest, correct, pair, ridge, train, predict, evaluate, report"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            if (!fs::exists(config_path)) throw Error(ErrorKind::MissingPath, "config file not found: " + config_path);
            apply_config_json(cfg, read_text_file(config_path));
        }
        if (!out_dir.empty()) cfg.out = out_dir;
        if (!raw_dir.empty()) cfg.raw = raw_dir;
        if (!site_map.empty()) cfg.site_map = site_map;
        if (seed) cfg.seed = *seed;
        if (jobs) cfg.jobs = *jobs;
        if (runs) cfg.runs = *runs;
        if (budget) cfg.budget = *budget;
        if (theta) cfg.transfer.theta = *theta;
        if (steps) cfg.transfer.steps = *steps;
        if (folds) cfg.transfer.folds = *folds;
        if (max_depth) cfg.transfer.max_depth = *max_depth;
        if (n_estimators) cfg.transfer.n_estimators = *n_estimators;
        if (knn_k) cfg.knn_k = *knn_k;
        if (!comparator.empty()) {
            auto c = parse_comparator(comparator);
            if (!c) throw Error(ErrorKind::InvalidConfig, "--comparator must be 'le' or 'ge'");
            cfg.transfer.comparator = *c;
        }
        if (!lambda_grid.empty()) cfg.ridge.lambda_grid = parse_real_list(lambda_grid, "--lambda-grid");
        if (!thresholds.empty()) cfg.thresholds = parse_thresholds(thresholds);
        if (!models.empty()) {
            cfg.models.clear();
            for (const auto& m : csv::split_line(models)) {
                auto k = parse_model_kind(m);
                if (!k) throw Error(ErrorKind::InvalidConfig, "--models: unknown model '" + m + "'");
                cfg.models.push_back(*k);
            }
        }
        if (!targets.empty()) cfg.targets = csv::split_line(targets);
        if (!held_out.empty()) cfg.held_out = held_out;
        if (!grid_target.empty()) cfg.grid_target = grid_target;
        if (!grid_model.empty()) {
            auto k = parse_model_kind(grid_model);
            if (!k || *k == ModelKind::AdaBoost) throw Error(ErrorKind::InvalidConfig, "--grid-model must be TRA or KNN");
            cfg.grid_model = *k;
        }
        if (n_sections) cfg.synth.n_sections = *n_sections;
        if (domain_shift) cfg.synth.domain_shift = *domain_shift;
        if (!regime.empty()) {
            auto r = parse_regime(regime);
            if (!r) throw Error(ErrorKind::InvalidConfig, "--regime must be 'piecewise' or 'linear'");
            cfg.synth.regime = *r;
        }
        if (samples_only) cfg.synth_raw = false;
        validate(cfg);

        Context ctx{cfg, out, err, config_hash(cfg)};
        const std::string command = app.get_subcommands().front()->get_name();
        ctx.log(LogLevel::Debug, "command " + command + ", config hash " + ctx.hash);
        if (command == "synth") stage_synth(ctx);
        else if (command == "ingest") stage_ingest(ctx);
        else if (command == "correct") stage_correct(ctx);
        else if (command == "pair") stage_pair(ctx);
        else if (command == "ridge") stage_ridge(ctx);
        else if (command == "train") stage_train(ctx);
        else if (command == "predict") stage_predict(ctx);
        else if (command == "evaluate") stage_evaluate(ctx);
        else if (command == "grid-search") stage_grid(ctx);
        else if (command == "report") stage_report(ctx);
        else if (command == "pipeline") stage_pipeline(ctx);
        return 0;
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return e.is_validation() ? 1 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace ramp::cli
