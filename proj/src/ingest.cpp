#include "ramp/ingest.hpp"

#include <algorithm>
#include <array>
#include <bitset>
#include <chrono>
#include <limits>
#include <map>
#include <tuple>

#include "ramp/csv.hpp"

namespace ramp {

namespace {

csv::Header read_header(std::istream& in, char& sep, const std::vector<std::string>& required,
                        const char* what) {
    std::string line;
    if (!csv::read_line(in, line))
        throw Error(ErrorKind::MalformedHeader, std::string(what) + ": missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    sep = csv::detect_separator(line);
    csv::Header header(csv::split_line(line, sep));
    for (const auto& name : required)
        if (!header.find(name))
            throw Error(ErrorKind::MalformedHeader,
                        std::string(what) + ": required column '" + name + "' absent");
    return header;
}

void skip(SkipReport& report, std::size_t line, std::string reason, std::size_t SkipReport::*counter) {
    report.rows.push_back({line, std::move(reason)});
    ++(report.*counter);
}

std::string trimmed(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    return s;
}

}  // namespace

LoopParseResult parse_loop_csv(std::istream& in, const SiteMap& map) {
    static const std::vector<std::string> required{"ID",     "TimeStamp", "DetectorstationID",
                                                   "SlotNumber", "Volume", "Speed", "Occupancy"};
    char sep = ',';
    csv::Header header = read_header(in, sep, required, "loop csv");
    const std::size_t c_id = *header.find("ID"), c_ts = *header.find("TimeStamp"),
                      c_station = *header.find("DetectorstationID"),
                      c_slot = *header.find("SlotNumber"), c_vol = *header.find("Volume"),
                      c_speed = *header.find("Speed"), c_occ = *header.find("Occupancy");

    LoopParseResult result;
    std::string line;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = csv::split_line(line, sep);
        if (f.size() < header.size()) {
            skip(result.skipped, line_no, "field count", &SkipReport::malformed);
            continue;
        }
        auto ts = parse_timestamp(f[c_ts]);
        auto slot = csv::parse_integer(f[c_slot]);
        auto vol = csv::parse_integer(f[c_vol]);
        auto speed = csv::parse_real(f[c_speed]);
        auto occ = csv::parse_real(f[c_occ]);
        if (!ts) { skip(result.skipped, line_no, "timestamp", &SkipReport::malformed); continue; }
        if (!slot) { skip(result.skipped, line_no, "slot number", &SkipReport::malformed); continue; }
        if (!vol || *vol < 0) { skip(result.skipped, line_no, "volume", &SkipReport::malformed); continue; }
        if (!speed || *speed < 0) { skip(result.skipped, line_no, "speed", &SkipReport::malformed); continue; }
        if (!occ || *occ < 0 || *occ > 100) {
            skip(result.skipped, line_no, "occupancy", &SkipReport::malformed);
            continue;
        }
        std::string station = trimmed(f[c_station]);
        const SectionSite* site = map.find_station(station);
        if (!site) {
            skip(result.skipped, line_no, "unmapped station " + station, &SkipReport::unmapped);
            continue;
        }
        int slot_no = static_cast<int>(*slot);
        if (map.is_excluded(*site, slot_no)) {
            skip(result.skipped, line_no, "excluded slot " + std::to_string(slot_no), &SkipReport::excluded);
            continue;
        }
        if (!map.lane_for(*site, slot_no)) {
            skip(result.skipped, line_no, "unmapped slot " + std::to_string(slot_no), &SkipReport::unmapped);
            continue;
        }
        result.records.push_back(LoopRecord{trimmed(f[c_id]), *ts, std::move(station), slot_no, *vol,
                                            *speed, *occ});
    }
    return result;
}

ProbeParseResult parse_probe_csv(std::istream& in, const SiteMap& map) {
    static const std::vector<std::string> required{"timestamp", "SegmentID", "speed",
                                                   "travelTimeMinutes"};
    char sep = ',';
    csv::Header header = read_header(in, sep, required, "probe csv");
    const std::size_t c_ts = *header.find("timestamp"), c_seg = *header.find("SegmentID"),
                      c_speed = *header.find("speed"), c_tt = *header.find("travelTimeMinutes");
    const auto c_conf = header.find("confidenceValue");

    ProbeParseResult result;
    std::string line;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = csv::split_line(line, sep);
        if (f.size() < header.size()) {
            skip(result.skipped, line_no, "field count", &SkipReport::malformed);
            continue;
        }
        auto ts = parse_timestamp(f[c_ts]);
        auto speed = csv::parse_real(f[c_speed]);
        auto tt = csv::parse_real(f[c_tt]);
        if (!ts) { skip(result.skipped, line_no, "timestamp", &SkipReport::malformed); continue; }
        if (!speed || *speed < 0) { skip(result.skipped, line_no, "speed", &SkipReport::malformed); continue; }
        if (!tt || *tt <= 0) { skip(result.skipped, line_no, "travel time", &SkipReport::malformed); continue; }
        std::optional<double> confidence;
        if (c_conf) {
            auto c = csv::parse_real(f[*c_conf]);
            if (c) confidence = *c / 100.0;
        }
        std::string segment = trimmed(f[c_seg]);
        if (!map.find_probe_segment(segment)) {
            skip(result.skipped, line_no, "unmapped segment " + segment, &SkipReport::unmapped);
            continue;
        }
        result.records.push_back(ProbeRecord{*ts, std::move(segment), *speed, *tt, confidence});
    }
    return result;
}

void write_loop_csv(std::ostream& out, const std::vector<LoopRecord>& records) {
    out << "ID,TimeStamp,DetectorstationID,SlotNumber,Volume,Speed,Occupancy\n";
    for (const auto& r : records) {
        out << r.id << ',' << format_timestamp(r.timestamp) << ',' << r.station_id << ','
            << r.slot_number << ',' << r.volume << ',' << csv::format_real(r.speed) << ','
            << csv::format_real(r.occupancy) << '\n';
    }
}

void write_probe_csv(std::ostream& out, const std::vector<ProbeRecord>& records) {
    out << "timestamp,SegmentID,speed,confidenceValue,travelTimeMinutes\n";
    for (const auto& r : records) {
        out << format_timestamp(r.timestamp) << ',' << r.segment_id << ',' << csv::format_real(r.speed)
            << ',' << (r.confidence ? csv::format_real(*r.confidence * 100.0) : std::string()) << ','
            << csv::format_real(r.travel_time) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Aggregation

bool AggregateConfig::admits(const TimeKey& key) const {
    if (!weekdays.empty() && std::find(weekdays.begin(), weekdays.end(), key.dow) == weekdays.end())
        return false;
    if (hours.empty()) return true;
    return std::any_of(hours.begin(), hours.end(), [&](const HourWindow& w) {
        return key.hod >= w.begin_hour && key.hod < w.end_hour;
    });
}

namespace {

struct SlotKey {
    std::size_t section = 0;  // index into SiteMap::sections()
    SegmentPosition position = SegmentPosition::Upstream;
    std::int64_t day = 0;
    int hod = 0;
    int quarter = 0;

    auto operator<=>(const SlotKey&) const = default;
};

struct LoopBucket {
    std::vector<int> lane_records;
    long long volume = 0;
    double occupancy_sum = 0.0;
    int records = 0;
};

struct ProbeBucket {
    double speed_sum = 0.0;
    int records = 0;
    std::bitset<kProbeMinutesPerSlot> minutes;
};

SlotKey slot_key(std::size_t section, SegmentPosition pos, const CivilDateTime& t) {
    return SlotKey{section, pos, t.day_number(), t.hour, t.minute / 15};
}

}  // namespace

AggregateResult aggregate(const std::vector<LoopRecord>& loops, const std::vector<ProbeRecord>& probes,
                          const SiteMap& map, Period period, const AggregateConfig& cfg) {
    const auto& sections = map.sections();
    auto section_index = [&](const SectionSite* site) {
        return static_cast<std::size_t>(site - sections.data());
    };

    std::int64_t first_day = std::numeric_limits<std::int64_t>::max();
    for (const auto& r : loops) first_day = std::min(first_day, r.timestamp.day_number());
    for (const auto& r : probes) first_day = std::min(first_day, r.timestamp.day_number());

    std::map<SlotKey, LoopBucket> loop_buckets;
    std::map<SlotKey, ProbeBucket> probe_buckets;

    for (const auto& r : loops) {
        if (!cfg.admits(encode_time_key(r.timestamp))) continue;
        const SectionSite* site = map.find_station(r.station_id);
        if (!site) continue;
        auto lane = map.lane_for(*site, r.slot_number);
        if (!lane) continue;
        auto& b = loop_buckets[slot_key(section_index(site), lane->position, r.timestamp)];
        if (b.lane_records.empty())
            b.lane_records.assign(static_cast<std::size_t>(site->positions.at(lane->position).lanes), 0);
        ++b.lane_records[static_cast<std::size_t>(lane->lane - 1)];
        b.volume += r.volume;
        b.occupancy_sum += r.occupancy;
        ++b.records;
    }
    for (const auto& r : probes) {
        if (!cfg.admits(encode_time_key(r.timestamp))) continue;
        auto ref = map.find_probe_segment(r.segment_id);
        if (!ref) continue;
        auto& b = probe_buckets[slot_key(section_index(ref->site), ref->position, r.timestamp)];
        b.speed_sum += r.speed;
        ++b.records;
        b.minutes.set(static_cast<std::size_t>(r.timestamp.minute % 15));
    }

    AggregateResult result;
    auto describe = [&](const SlotKey& k) {
        CivilDateTime t;
        auto ymd = std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{k.day}}};
        t.year = static_cast<int>(ymd.year());
        t.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
        t.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
        t.hour = k.hod;
        t.minute = k.quarter * 15;
        return std::make_pair(static_cast<int>((k.day - first_day) / 7) + 1, encode_time_key(t));
    };

    auto omit = [&](const SlotKey& k, std::string reason) {
        auto [week, key] = describe(k);
        result.omitted.push_back({sections[k.section].section, k.position, week, key, std::move(reason)});
    };

    for (const auto& [k, lb] : loop_buckets) {
        auto pit = probe_buckets.find(k);
        if (pit == probe_buckets.end()) {
            omit(k, "no probe data");
            continue;
        }
        const ProbeBucket& pb = pit->second;
        const int lanes = static_cast<int>(lb.lane_records.size());
        int min_lane = *std::min_element(lb.lane_records.begin(), lb.lane_records.end());
        double loop_cov = std::min(1.0, static_cast<double>(min_lane) / kLoopRecordsPerSlot);
        int minutes = static_cast<int>(pb.minutes.count());
        double probe_cov = static_cast<double>(minutes) / kProbeMinutesPerSlot;
        if (loop_cov + 1e-12 < cfg.min_loop_coverage) {
            omit(k, "loop coverage");
            continue;
        }
        if (minutes < cfg.min_probe_minutes) {
            omit(k, "probe coverage");
            continue;
        }
        auto [week, key] = describe(k);
        TrafficSample s;
        s.section = sections[k.section].section;
        s.position = k.position;
        s.period = period;
        s.week_index = week;
        s.key = key;
        s.mean_speed = pb.speed_sum / pb.records;
        s.occupancy = lb.occupancy_sum / lb.records;
        s.flow_rate = static_cast<double>(lb.volume) * 4.0 / lanes;
        if (period == Period::Before && s.mean_speed > 0.0) s.density = s.flow_rate / s.mean_speed;
        s.coverage = std::min(loop_cov, probe_cov);
        result.samples.push_back(std::move(s));
    }
    for (const auto& [k, pb] : probe_buckets)
        if (!loop_buckets.contains(k)) omit(k, "no loop data");

    auto order = [](const TrafficSample& a, const TrafficSample& b) {
        return std::tie(a.section, a.position, a.week_index, a.key) <
               std::tie(b.section, b.position, b.week_index, b.key);
    };
    std::sort(result.samples.begin(), result.samples.end(), order);
    return result;
}

// ---------------------------------------------------------------------------
// Samples CSV

void write_samples_csv(std::ostream& out, const std::vector<TrafficSample>& samples) {
    out << kSamplesHeader << '\n';
    for (const auto& s : samples) {
        out << s.section.str() << ',' << to_string(s.position) << ',' << to_string(s.period) << ','
            << s.week_index << ',' << s.key.dow << ',' << s.key.hod << ',' << s.key.moh << ','
            << csv::format_real(s.mean_speed) << ',' << csv::format_real(s.occupancy) << ','
            << csv::format_real(s.flow_rate) << ',' << (s.density ? csv::format_real(*s.density) : "")
            << ',' << csv::format_real(s.coverage) << '\n';
    }
}

std::vector<TrafficSample> read_samples_csv(std::istream& in) {
    std::string line;
    if (!csv::read_line(in, line))
        throw Error(ErrorKind::MalformedHeader, "samples csv: missing header row");
    csv::Header header(csv::split_line(line));
    static const char* cols[] = {"section", "position", "period", "week", "dow", "hod",
                                 "moh", "mean_speed", "occupancy", "flow_rate", "density", "coverage"};
    std::array<std::size_t, 12> c{};
    for (std::size_t i = 0; i < 12; ++i) {
        auto idx = header.find(cols[i]);
        if (!idx)
            throw Error(ErrorKind::MalformedHeader,
                        std::string("samples csv: required column '") + cols[i] + "' absent");
        c[i] = *idx;
    }
    std::vector<TrafficSample> samples;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = csv::split_line(line);
        auto fail = [&](const char* what) {
            return Error(ErrorKind::MalformedInput,
                         "samples csv line " + std::to_string(line_no) + ": bad " + what);
        };
        if (f.size() < header.size()) throw fail("field count");
        TrafficSample s;
        s.section = SectionId(f[c[0]]);
        auto pos = parse_position(f[c[1]]);
        auto per = parse_period(f[c[2]]);
        auto week = csv::parse_integer(f[c[3]]);
        auto dow = csv::parse_integer(f[c[4]]);
        auto hod = csv::parse_integer(f[c[5]]);
        auto moh = csv::parse_integer(f[c[6]]);
        auto v = csv::parse_real(f[c[7]]);
        auto o = csv::parse_real(f[c[8]]);
        auto q = csv::parse_real(f[c[9]]);
        auto cov = csv::parse_real(f[c[11]]);
        if (!pos) throw fail("position");
        if (!per) throw fail("period");
        if (!week || !dow || !hod || !moh) throw fail("time fields");
        if (!v || !o || !q || !cov) throw fail("value fields");
        s.position = *pos;
        s.period = *per;
        s.week_index = static_cast<int>(*week);
        s.key = TimeKey{static_cast<int>(*dow), static_cast<int>(*hod), static_cast<int>(*moh)};
        s.mean_speed = *v;
        s.occupancy = *o;
        s.flow_rate = *q;
        if (!f[c[10]].empty()) {
            auto d = csv::parse_real(f[c[10]]);
            if (!d) throw fail("density");
            s.density = *d;
        }
        s.coverage = *cov;
        if (auto violations = validate_sample(s); !violations.empty())
            throw fail(violations.front().c_str());
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace ramp
