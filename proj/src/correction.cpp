#include "ramp/correction.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "ramp/csv.hpp"

namespace ramp {

CorrectedProfile temporal_correct(std::span<const TrafficSample> samples) {
    if (samples.empty()) throw Error(ErrorKind::EmptyInput, "temporal correction: no samples");
    CorrectedProfile profile;
    profile.section = samples.front().section;
    profile.position = samples.front().position;
    profile.period = samples.front().period;

    struct Sum {
        double speed = 0.0, occ = 0.0, flow = 0.0, density = 0.0;
        int n = 0, n_density = 0;
    };
    std::map<TimeKey, Sum> sums;
    for (const auto& s : samples) {
        if (s.section != profile.section || s.position != profile.position || s.period != profile.period)
            throw Error(ErrorKind::InvalidConfig,
                        "temporal correction: samples span more than one section/position/period");
        Sum& acc = sums[s.key];
        acc.speed += s.mean_speed;
        acc.occ += s.occupancy;
        acc.flow += s.flow_rate;
        ++acc.n;
        if (s.density) {
            acc.density += *s.density;
            ++acc.n_density;
        }
    }
    for (const auto& [key, acc] : sums) {
        ProfileEntry e;
        e.mean_speed = acc.speed / acc.n;
        e.occupancy = acc.occ / acc.n;
        e.flow_rate = acc.flow / acc.n;
        if (acc.n_density > 0 && profile.period == Period::Before) e.density = acc.density / acc.n_density;
        e.weeks_used = acc.n;
        profile.entries.emplace(key, e);
    }
    return profile;
}

std::vector<CorrectedProfile> temporal_correct_all(std::span<const TrafficSample> samples) {
    using GroupKey = std::tuple<SectionId, SegmentPosition, Period>;
    std::map<GroupKey, std::vector<TrafficSample>> groups;
    for (const auto& s : samples) groups[{s.section, s.position, s.period}].push_back(s);
    std::vector<CorrectedProfile> out;
    out.reserve(groups.size());
    for (const auto& [k, group] : groups) out.push_back(temporal_correct(group));
    return out;
}

// ---------------------------------------------------------------------------
// Variable roster

const std::vector<std::string>& default_input_names() {
    static const std::vector<std::string> names{
        "DOW",
        "HOD",
        "MOH",
        "Before_up_mean_speed",
        "Before_ramp_mean_speed",
        "Before_down_mean_speed",
        "Before_up_occupancy",
        "Before_ramp_occupancy",
        "Before_up_flow",
        "Before_ramp_flow",
        "Before_down_flow",
        "Before_up_density",
        "Before_ramp_density",
        "Before_down_density",
    };
    return names;
}

const std::vector<std::string>& default_target_names() {
    static const std::vector<std::string> names{
        "After_up_mean_speed", "After_ramp_mean_speed", "After_down_mean_speed",
        "After_up_occupancy",  "After_ramp_occupancy",  "After_up_flow",
        "After_ramp_flow",     "After_down_flow",
    };
    return names;
}

TargetKind target_kind(const std::string& name) {
    if (name.find("speed") != std::string::npos) return TargetKind::Speed;
    if (name.find("occupancy") != std::string::npos) return TargetKind::Occupancy;
    if (name.find("flow") != std::string::npos) return TargetKind::Flow;
    throw Error(ErrorKind::InvalidConfig, "cannot infer target kind of '" + name + "'");
}

std::string_view to_string(TargetKind kind) {
    switch (kind) {
        case TargetKind::Speed: return "speed";
        case TargetKind::Occupancy: return "occupancy";
        case TargetKind::Flow: return "flow";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset() : Dataset(default_input_names(), default_target_names()) {}

Dataset::Dataset(std::vector<std::string> input_names, std::vector<std::string> target_names)
    : input_names_(std::move(input_names)),
      target_names_(std::move(target_names)),
      running_(input_names_.size() + target_names_.size()),
      stats_(running_.size()) {}

void Dataset::accumulate(const FeatureRow& row) {
    const double n = static_cast<double>(rows_.size());
    auto push = [&](std::size_t col, double x) {
        Running& r = running_[col];
        double delta = x - r.mean;
        r.mean += delta / n;
        r.m2 += delta * (x - r.mean);
        stats_[col].mean = r.mean;
        stats_[col].sd = n > 1 ? std::sqrt(r.m2 / (n - 1)) : 0.0;
    };
    for (std::size_t j = 0; j < row.inputs.size(); ++j) push(j, row.inputs[j]);
    for (std::size_t j = 0; j < row.targets.size(); ++j) push(input_names_.size() + j, row.targets[j]);
}

void Dataset::add_row(FeatureRow row) {
    if (row.inputs.size() != input_names_.size() || row.targets.size() != target_names_.size())
        throw Error(ErrorKind::RosterMismatch, "dataset row does not match the column roster");
    rows_.push_back(std::move(row));
    accumulate(rows_.back());
}

void Dataset::append(const Dataset& other) {
    if (other.input_names_ != input_names_ || other.target_names_ != target_names_)
        throw Error(ErrorKind::RosterMismatch, "cannot append datasets with different rosters");
    for (const auto& r : other.rows_) add_row(r);
}

std::optional<std::size_t> Dataset::input_index(const std::string& name) const {
    auto it = std::find(input_names_.begin(), input_names_.end(), name);
    if (it == input_names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - input_names_.begin());
}

std::optional<std::size_t> Dataset::target_index(const std::string& name) const {
    auto it = std::find(target_names_.begin(), target_names_.end(), name);
    if (it == target_names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - target_names_.begin());
}

std::vector<double> Dataset::column(const std::string& name) const {
    std::vector<double> out;
    out.reserve(rows_.size());
    if (auto i = input_index(name)) {
        for (const auto& r : rows_) out.push_back(r.inputs[*i]);
    } else if (auto t = target_index(name)) {
        for (const auto& r : rows_) out.push_back(r.targets[*t]);
    } else {
        throw Error(ErrorKind::RosterMismatch, "no column named '" + name + "'");
    }
    return out;
}

const ColumnStats& Dataset::stats(const std::string& name) const {
    if (auto i = input_index(name)) return stats_[*i];
    if (auto t = target_index(name)) return stats_[input_names_.size() + *t];
    throw Error(ErrorKind::RosterMismatch, "no column named '" + name + "'");
}

Eigen::MatrixXd Dataset::inputs(const std::vector<std::string>& columns) const {
    std::vector<std::size_t> idx;
    for (const auto& c : columns) {
        auto i = input_index(c);
        if (!i) throw Error(ErrorKind::RosterMismatch, "no input column named '" + c + "'");
        idx.push_back(*i);
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows_.size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < rows_.size(); ++r)
        for (std::size_t j = 0; j < idx.size(); ++j)
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows_[r].inputs[idx[j]];
    return X;
}

Eigen::VectorXd Dataset::target(const std::string& name) const {
    auto t = target_index(name);
    if (!t) throw Error(ErrorKind::RosterMismatch, "no target column named '" + name + "'");
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t r = 0; r < rows_.size(); ++r) y(static_cast<Eigen::Index>(r)) = rows_[r].targets[*t];
    return y;
}

std::vector<SectionId> Dataset::sections() const {
    std::set<SectionId> s;
    for (const auto& r : rows_) s.insert(r.section);
    return {s.begin(), s.end()};
}

Dataset Dataset::where_section(const SectionId& s, bool keep) const {
    Dataset out(input_names_, target_names_);
    for (const auto& r : rows_)
        if ((r.section == s) == keep) out.add_row(r);
    return out;
}

Dataset Dataset::select_rows(std::span<const std::size_t> indices) const {
    Dataset out(input_names_, target_names_);
    for (std::size_t i : indices) out.add_row(rows_.at(i));
    return out;
}

// ---------------------------------------------------------------------------
// Pairing

PairResult pair_before_after(const PositionProfiles& before, const PositionProfiles& after,
                             const SectionId& section, const PairOptions& opt) {
    using P = SegmentPosition;
    for (P p : kAllPositions) {
        if (!before.contains(p))
            throw Error(ErrorKind::InvalidConfig,
                        "pairing " + section.str() + ": missing before profile for " + std::string(to_string(p)));
        if (!after.contains(p))
            throw Error(ErrorKind::InvalidConfig,
                        "pairing " + section.str() + ": missing after profile for " + std::string(to_string(p)));
    }
    const auto& bu = before.at(P::Upstream).entries;
    const auto& br = before.at(P::OnRamp).entries;
    const auto& bd = before.at(P::Downstream).entries;
    const auto& au = after.at(P::Upstream).entries;
    const auto& ar = after.at(P::OnRamp).entries;
    const auto& ad = after.at(P::Downstream).entries;

    std::set<TimeKey> all_keys;
    for (const auto* m : {&bu, &br, &bd, &au, &ar, &ad})
        for (const auto& [k, e] : *m) all_keys.insert(k);

    PairResult result;
    for (const TimeKey& k : all_keys) {
        auto iu = bu.find(k), ir = br.find(k), id = bd.find(k);
        auto ju = au.find(k), jr = ar.find(k), jd = ad.find(k);
        if (iu == bu.end() || ir == br.end() || id == bd.end() || ju == au.end() || jr == ar.end() ||
            jd == ad.end() || !iu->second.density || !ir->second.density || !id->second.density) {
            ++result.dropped_keys;
            continue;
        }
        const ProfileEntry &u = iu->second, &r = ir->second, &d = id->second;
        FeatureRow row;
        row.section = section;
        row.key = k;
        // Before_down_occupancy is collected upstream but not part of the roster.
        row.inputs = {static_cast<double>(k.dow), static_cast<double>(k.hod), static_cast<double>(k.moh),
                      u.mean_speed, r.mean_speed, d.mean_speed,
                      u.occupancy, r.occupancy,
                      u.flow_rate, r.flow_rate, d.flow_rate,
                      *u.density, *r.density, *d.density};
        row.targets = {ju->second.mean_speed, jr->second.mean_speed, jd->second.mean_speed,
                       ju->second.occupancy,  jr->second.occupancy,
                       ju->second.flow_rate,  jr->second.flow_rate,  jd->second.flow_rate};
        if (opt.include_down_occupancy) row.targets.push_back(jd->second.occupancy);
        result.rows.push_back(std::move(row));
    }
    return result;
}

Dataset pair_profiles(const std::vector<CorrectedProfile>& profiles, const PairOptions& opt,
                      std::size_t* dropped_keys) {
    auto targets = default_target_names();
    if (opt.include_down_occupancy) targets.push_back("After_down_occupancy");
    Dataset dataset(default_input_names(), targets);

    std::map<SectionId, std::pair<PositionProfiles, PositionProfiles>> by_section;
    for (const auto& profile : profiles) {
        auto& slot = by_section[profile.section];
        auto& side = profile.period == Period::Before ? slot.first : slot.second;
        if (!side.emplace(profile.position, profile).second)
            throw Error(ErrorKind::InvalidConfig, "pairing " + profile.section.str() + ": duplicate " +
                                                      std::string(to_string(profile.position)) + " profile");
    }
    std::size_t dropped = 0;
    for (const auto& [section, pp] : by_section) {
        auto paired = pair_before_after(pp.first, pp.second, section, opt);
        dropped += paired.dropped_keys;
        for (auto& row : paired.rows) dataset.add_row(std::move(row));
    }
    if (dropped_keys) *dropped_keys = dropped;
    return dataset;
}

Dataset build_dataset(std::span<const TrafficSample> samples, const PairOptions& opt,
                      std::size_t* dropped_keys) {
    return pair_profiles(temporal_correct_all(samples), opt, dropped_keys);
}

// ---------------------------------------------------------------------------
// CSV

void write_profiles_csv(std::ostream& out, const std::vector<CorrectedProfile>& profiles) {
    out << kProfilesHeader << '\n';
    for (const auto& p : profiles)
        for (const auto& [k, e] : p.entries)
            out << p.section.str() << ',' << to_string(p.position) << ',' << to_string(p.period) << ',' << k.dow
                << ',' << k.hod << ',' << k.moh << ',' << csv::format_real(e.mean_speed) << ','
                << csv::format_real(e.occupancy) << ',' << csv::format_real(e.flow_rate) << ','
                << (e.density ? csv::format_real(*e.density) : "") << ',' << e.weeks_used << '\n';
}

std::vector<CorrectedProfile> read_profiles_csv(std::istream& in) {
    std::string line;
    if (!csv::read_line(in, line)) throw Error(ErrorKind::MalformedHeader, "profiles csv: missing header row");
    if (line != kProfilesHeader)
        throw Error(ErrorKind::MalformedHeader, std::string("profiles csv: header must be ") + kProfilesHeader);
    std::map<std::tuple<SectionId, SegmentPosition, Period>, CorrectedProfile> groups;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto bad = [&](const char* what) {
            return Error(ErrorKind::MalformedInput, "profiles csv line " + std::to_string(line_no) + ": " + what);
        };
        auto f = csv::split_line(line);
        if (f.size() != 11) throw bad("field count");
        auto pos = parse_position(f[1]);
        auto per = parse_period(f[2]);
        auto dow = csv::parse_integer(f[3]), hod = csv::parse_integer(f[4]), moh = csv::parse_integer(f[5]);
        auto sp = csv::parse_real(f[6]), oc = csv::parse_real(f[7]), fl = csv::parse_real(f[8]);
        auto wk = csv::parse_integer(f[10]);
        if (f[0].empty() || !pos || !per) throw bad("section/position/period");
        if (!dow || !hod || !moh) throw bad("time key");
        if (!sp || !oc || !fl || !wk) throw bad("value");
        TimeKey key{static_cast<int>(*dow), static_cast<int>(*hod), static_cast<int>(*moh)};
        if (!key.valid()) throw bad("time key");
        ProfileEntry e;
        e.mean_speed = *sp;
        e.occupancy = *oc;
        e.flow_rate = *fl;
        e.weeks_used = static_cast<int>(*wk);
        if (!f[9].empty()) {
            auto dn = csv::parse_real(f[9]);
            if (!dn) throw bad("density");
            e.density = *dn;
        }
        SectionId section(f[0]);
        auto& prof = groups[{section, *pos, *per}];
        prof.section = section;
        prof.position = *pos;
        prof.period = *per;
        prof.entries[key] = e;
    }
    std::vector<CorrectedProfile> out;
    for (auto& [k, p] : groups) out.push_back(std::move(p));
    return out;
}

void write_dataset_csv(std::ostream& out, const Dataset& d) {
    out << "section,dow,hod,moh";
    for (const auto& n : d.input_names()) out << ',' << n;
    for (const auto& n : d.target_names()) out << ',' << n;
    out << '\n';
    for (const auto& r : d.rows()) {
        out << r.section.str() << ',' << r.key.dow << ',' << r.key.hod << ',' << r.key.moh;
        for (double v : r.inputs) out << ',' << csv::format_real(v);
        for (double v : r.targets) out << ',' << csv::format_real(v);
        out << '\n';
    }
}

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!csv::read_line(in, line)) throw Error(ErrorKind::MalformedHeader, "dataset csv: missing header row");
    auto names = csv::split_line(line);
    if (names.size() < 4 || names[0] != "section" || names[1] != "dow" || names[2] != "hod" || names[3] != "moh")
        throw Error(ErrorKind::MalformedHeader, "dataset csv: header must start with section,dow,hod,moh");
    std::vector<std::string> inputs, targets;
    std::vector<bool> is_target;
    for (std::size_t i = 4; i < names.size(); ++i) {
        bool t = names[i].rfind("After_", 0) == 0;
        (t ? targets : inputs).push_back(names[i]);
        is_target.push_back(t);
    }
    Dataset d(inputs, targets);
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = csv::split_line(line);
        if (f.size() != names.size())
            throw Error(ErrorKind::MalformedInput, "dataset csv line " + std::to_string(line_no) + ": field count");
        FeatureRow row;
        row.section = SectionId(f[0]);
        auto dow = csv::parse_integer(f[1]), hod = csv::parse_integer(f[2]), moh = csv::parse_integer(f[3]);
        if (!dow || !hod || !moh)
            throw Error(ErrorKind::MalformedInput, "dataset csv line " + std::to_string(line_no) + ": time key");
        row.key = TimeKey{static_cast<int>(*dow), static_cast<int>(*hod), static_cast<int>(*moh)};
        for (std::size_t i = 4; i < f.size(); ++i) {
            auto v = csv::parse_real(f[i]);
            if (!v)
                throw Error(ErrorKind::MalformedInput,
                            "dataset csv line " + std::to_string(line_no) + ": column " + names[i]);
            (is_target[i - 4] ? row.targets : row.inputs).push_back(*v);
        }
        d.add_row(std::move(row));
    }
    return d;
}

}  // namespace ramp
