#include "ramp/core.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ramp {

using nlohmann::json;

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MalformedHeader: return "MalformedHeader";
        case ErrorKind::MalformedInput: return "MalformedInput";
        case ErrorKind::MissingPath: return "MissingPath";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::InsufficientRows: return "InsufficientRows";
        case ErrorKind::SingularSystem: return "SingularSystem";
        case ErrorKind::AllWeightsZero: return "AllWeightsZero";
        case ErrorKind::NoUnfrozenInstances: return "NoUnfrozenInstances";
        case ErrorKind::EmptySubstitute: return "EmptySubstitute";
        case ErrorKind::GoalUnreachable: return "GoalUnreachable";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::RosterMismatch: return "RosterMismatch";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::AllTargetsZero: return "AllTargetsZero";
        case ErrorKind::TooFewSections: return "TooFewSections";
        case ErrorKind::KTooLarge: return "KTooLarge";
        case ErrorKind::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

bool Error::is_validation() const noexcept {
    switch (kind_) {
        case ErrorKind::MalformedHeader:
        case ErrorKind::MalformedInput:
        case ErrorKind::MissingPath:
        case ErrorKind::InvalidConfig:
        case ErrorKind::RosterMismatch:
        case ErrorKind::TooFewSections:
        case ErrorKind::KTooLarge:
        case ErrorKind::InsufficientRows:
        case ErrorKind::EmptySubstitute:
            return true;
        default:
            return false;
    }
}

// ---------------------------------------------------------------------------
// Calendar

namespace {

std::chrono::year_month_day to_ymd(const CivilDateTime& t) {
    return std::chrono::year{t.year} / std::chrono::month{static_cast<unsigned>(t.month)} /
           std::chrono::day{static_cast<unsigned>(t.day)};
}

bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_any(std::string_view s, std::string_view seps) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || seps.find(s[i]) != std::string_view::npos) {
            parts.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return parts;
}

bool parse_clock(std::string_view s, CivilDateTime& t) {
    auto parts = split_any(s, ":");
    if (parts.size() < 2 || parts.size() > 3) return false;
    if (!parse_int(parts[0], t.hour) || !parse_int(parts[1], t.minute)) return false;
    t.second = 0;
    if (parts.size() == 3) {
        // Fractional seconds are truncated.
        auto sec = parts[2].substr(0, parts[2].find('.'));
        if (!parse_int(sec, t.second)) return false;
    }
    return true;
}

}  // namespace

std::int64_t CivilDateTime::day_number() const {
    return std::chrono::sys_days{to_ymd(*this)}.time_since_epoch().count();
}

int CivilDateTime::weekday() const {
    return static_cast<int>(std::chrono::weekday{std::chrono::sys_days{to_ymd(*this)}}.c_encoding());
}

bool CivilDateTime::valid() const {
    return month >= 1 && month <= 12 && day >= 1 && day <= 31 && to_ymd(*this).ok() &&
           hour >= 0 && hour <= 23 && minute >= 0 && minute <= 59 && second >= 0 && second <= 60;
}

std::optional<CivilDateTime> parse_timestamp(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '"')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '"' || text.back() == '\r'))
        text.remove_suffix(1);

    CivilDateTime t;
    std::size_t sep = text.find_first_of(" T");
    if (sep == std::string_view::npos) return std::nullopt;
    std::string_view date = text.substr(0, sep);
    std::string_view clock = text.substr(sep + 1);
    // ISO zone designators are ignored; timestamps are taken as local time.
    if (!clock.empty() && clock.back() == 'Z') clock.remove_suffix(1);

    if (date.find('/') != std::string_view::npos) {
        auto parts = split_any(date, "/");
        if (parts.size() != 3 || !parse_int(parts[0], t.month) || !parse_int(parts[1], t.day) ||
            !parse_int(parts[2], t.year))
            return std::nullopt;
    } else {
        auto parts = split_any(date, "-");
        if (parts.size() != 3 || !parse_int(parts[0], t.year) || !parse_int(parts[1], t.month) ||
            !parse_int(parts[2], t.day))
            return std::nullopt;
    }
    if (!parse_clock(clock, t) || !t.valid()) return std::nullopt;
    return t;
}

std::string format_timestamp(const CivilDateTime& t) {
    char buf[32];
    if (t.second == 0) {
        std::snprintf(buf, sizeof buf, "%d/%d/%04d %d:%02d", t.month, t.day, t.year, t.hour, t.minute);
    } else {
        std::snprintf(buf, sizeof buf, "%d/%d/%04d %d:%02d:%02d", t.month, t.day, t.year, t.hour,
                      t.minute, t.second);
    }
    return buf;
}

TimeKey TimeKey::from_slot_index(int index) {
    TimeKey k;
    k.moh = index % 4 + 1;
    k.hod = (index / 4) % 24;
    k.dow = index / 96 + 1;
    return k;
}

TimeKey encode_time_key(const CivilDateTime& t) {
    return TimeKey{t.weekday() + 1, t.hour, t.minute / 15 + 1};
}

// ---------------------------------------------------------------------------
// Enumerations

std::string_view to_string(SegmentPosition p) {
    switch (p) {
        case SegmentPosition::Upstream: return "upstream";
        case SegmentPosition::Downstream: return "downstream";
        case SegmentPosition::OnRamp: return "onramp";
    }
    return "?";
}

std::string_view short_name(SegmentPosition p) {
    switch (p) {
        case SegmentPosition::Upstream: return "up";
        case SegmentPosition::Downstream: return "down";
        case SegmentPosition::OnRamp: return "ramp";
    }
    return "?";
}

std::optional<SegmentPosition> parse_position(std::string_view text) {
    if (text == "upstream" || text == "up" || text == "1") return SegmentPosition::Upstream;
    if (text == "downstream" || text == "down" || text == "2") return SegmentPosition::Downstream;
    if (text == "onramp" || text == "ramp" || text == "3") return SegmentPosition::OnRamp;
    return std::nullopt;
}

std::string_view to_string(Period p) { return p == Period::Before ? "before" : "after"; }

std::optional<Period> parse_period(std::string_view text) {
    if (text == "before") return Period::Before;
    if (text == "after") return Period::After;
    return std::nullopt;
}

SectionId::SectionId(std::string id) : id_(std::move(id)) {
    if (id_.empty()) throw Error(ErrorKind::InvalidConfig, "section id must be non-empty");
}

std::vector<std::string> validate_sample(const TrafficSample& s) {
    std::vector<std::string> v;
    if (s.section.empty()) v.emplace_back("section id empty");
    if (!s.key.valid()) v.emplace_back("time key range");
    if (s.week_index < 1) v.emplace_back("week index");
    if (!(s.mean_speed >= 0.0)) v.emplace_back("mean speed range");
    if (!(s.occupancy >= 0.0 && s.occupancy <= 100.0)) v.emplace_back("occupancy range");
    if (!(s.flow_rate >= 0.0)) v.emplace_back("flow rate range");
    if (s.density) {
        if (!(*s.density >= 0.0)) v.emplace_back("density range");
        if (s.period == Period::After) v.emplace_back("density only in Before");
    }
    if (!(s.coverage >= 0.0 && s.coverage <= 1.0)) v.emplace_back("coverage range");
    return v;
}

// ---------------------------------------------------------------------------
// SiteMap

SiteMap::SiteMap(std::vector<SectionSite> sections) : sections_(std::move(sections)) {
    for (const auto& s : sections_) {
        for (const auto& [pos, layout] : s.positions) {
            std::string where = s.section.str() + "/" + std::string(to_string(pos));
            if (layout.lanes < 1)
                throw Error(ErrorKind::InvalidConfig, "site map: lanes must be >= 1 at " + where);
            if (!(layout.length_miles > 0.0))
                throw Error(ErrorKind::InvalidConfig, "site map: length_miles must be > 0 at " + where);
            if (static_cast<int>(layout.slots.size()) != layout.lanes)
                throw Error(ErrorKind::InvalidConfig,
                            "site map: slots must list one loop slot per lane at " + where);
        }
    }
    index();
}

void SiteMap::index() {
    by_station_.clear();
    by_section_.clear();
    by_probe_.clear();
    for (std::size_t i = 0; i < sections_.size(); ++i) {
        const auto& s = sections_[i];
        if (!by_section_.emplace(s.section, i).second)
            throw Error(ErrorKind::InvalidConfig, "site map: duplicate section " + s.section.str());
        if (!by_station_.emplace(s.station_id, i).second)
            throw Error(ErrorKind::InvalidConfig, "site map: duplicate station " + s.station_id);
        for (const auto& [pos, layout] : s.positions)
            for (const auto& seg : layout.probe_segment_ids)
                if (!by_probe_.emplace(seg, std::make_pair(i, pos)).second)
                    throw Error(ErrorKind::InvalidConfig, "site map: probe segment " + seg +
                                                              " assigned twice");
    }
}

const SectionSite* SiteMap::find_station(const std::string& station_id) const {
    auto it = by_station_.find(station_id);
    return it == by_station_.end() ? nullptr : &sections_[it->second];
}

const SectionSite* SiteMap::find_section(const SectionId& id) const {
    auto it = by_section_.find(id);
    return it == by_section_.end() ? nullptr : &sections_[it->second];
}

bool SiteMap::is_excluded(const SectionSite& site, int slot) const {
    return std::find(site.excluded_slots.begin(), site.excluded_slots.end(), slot) !=
           site.excluded_slots.end();
}

std::optional<LaneSlot> SiteMap::lane_for(const SectionSite& site, int slot) const {
    if (is_excluded(site, slot)) return std::nullopt;
    for (const auto& [pos, layout] : site.positions) {
        auto it = std::find(layout.slots.begin(), layout.slots.end(), slot);
        if (it != layout.slots.end())
            return LaneSlot{pos, static_cast<int>(it - layout.slots.begin()) + 1};
    }
    return std::nullopt;
}

std::optional<SiteRef> SiteMap::find_probe_segment(const std::string& segment_id) const {
    auto it = by_probe_.find(segment_id);
    if (it == by_probe_.end()) return std::nullopt;
    return SiteRef{&sections_[it->second.first], it->second.second};
}

SiteMap SiteMap::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("site map: ") + e.what());
    }
    try {
        const json& arr = doc.is_array() ? doc : doc.at("sections");
        std::vector<SectionSite> sections;
        for (const auto& js : arr) {
            SectionSite s;
            s.section = SectionId(js.at("section_id").get<std::string>());
            const auto& station = js.at("station_id");
            s.station_id = station.is_string() ? station.get<std::string>()
                                               : std::to_string(station.get<long long>());
            for (const auto& [name, jp] : js.at("positions").items()) {
                auto pos = parse_position(name);
                if (!pos) throw Error(ErrorKind::MalformedInput, "site map: unknown position " + name);
                PositionLayout layout;
                layout.lanes = jp.at("lanes").get<int>();
                layout.length_miles = jp.at("length_miles").get<double>();
                layout.slots = jp.at("slots").get<std::vector<int>>();
                for (const auto& seg : jp.value("probe_segment_ids", json::array()))
                    layout.probe_segment_ids.push_back(
                        seg.is_string() ? seg.get<std::string>() : std::to_string(seg.get<long long>()));
                s.positions.emplace(*pos, std::move(layout));
            }
            s.excluded_slots = js.value("excluded_slots", std::vector<int>{});
            sections.push_back(std::move(s));
        }
        return SiteMap(std::move(sections));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("site map: ") + e.what());
    }
}

SiteMap SiteMap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::MissingPath, "cannot open site map: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string SiteMap::to_json() const {
    json arr = json::array();
    for (const auto& s : sections_) {
        json js;
        js["section_id"] = s.section.str();
        js["station_id"] = s.station_id;
        json positions = json::object();
        for (const auto& [pos, layout] : s.positions) {
            positions[std::string(to_string(pos))] = {
                {"lanes", layout.lanes},
                {"length_miles", layout.length_miles},
                {"slots", layout.slots},
                {"probe_segment_ids", layout.probe_segment_ids},
            };
        }
        js["positions"] = positions;
        js["excluded_slots"] = s.excluded_slots;
        arr.push_back(js);
    }
    return json{{"sections", arr}}.dump(2);
}

}  // namespace ramp
