#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ramp/core.hpp"

namespace ramp {

// One 20-second loop detector reading for one slot (lane) of a station.
struct LoopRecord {
    std::string id;  // feed-level record id, kept for round-tripping
    CivilDateTime timestamp;
    std::string station_id;
    int slot_number = 0;
    long long volume = 0;  // vehicles in the 20 s interval
    double speed = 0.0;    // mph (time-mean, not used downstream)
    double occupancy = 0.0;  // percent
};

// One-minute probe reading for a road segment.
struct ProbeRecord {
    CivilDateTime timestamp;
    std::string segment_id;
    double speed = 0.0;        // mph, space-mean
    double travel_time = 0.0;  // minutes
    std::optional<double> confidence;  // fraction 0..1
};

struct SkippedRow {
    std::size_t line = 0;  // 1-based, header is line 1
    std::string reason;
};

struct SkipReport {
    std::vector<SkippedRow> rows;
    std::size_t malformed = 0;
    std::size_t unmapped = 0;
    std::size_t excluded = 0;

    std::size_t count() const noexcept { return rows.size(); }
    bool empty() const noexcept { return rows.empty(); }
};

struct LoopParseResult {
    std::vector<LoopRecord> records;
    SkipReport skipped;
};

struct ProbeParseResult {
    std::vector<ProbeRecord> records;
    SkipReport skipped;
};

// Throws Error(MalformedHeader) when a required column is absent. Bad rows
// are recorded in the skip report and parsing continues.
LoopParseResult parse_loop_csv(std::istream& in, const SiteMap& map);
ProbeParseResult parse_probe_csv(std::istream& in, const SiteMap& map);

void write_loop_csv(std::ostream& out, const std::vector<LoopRecord>& records);
void write_probe_csv(std::ostream& out, const std::vector<ProbeRecord>& records);

struct HourWindow {
    int begin_hour = 0;  // inclusive
    int end_hour = 24;   // exclusive
};

struct AggregateConfig {
    double min_loop_coverage = 0.8;  // fraction of 45 records per mapped lane
    int min_probe_minutes = 10;      // of the 15 minutes in the slot
    std::vector<int> weekdays{3, 4, 5};  // TimeKey dow codes; empty = all
    std::vector<HourWindow> hours{{6, 9}, {15, 19}};  // empty = all day
    // Before-period density is flow / speed; after-period density is never set.

    bool admits(const TimeKey& key) const;
};

inline constexpr int kLoopRecordsPerSlot = 45;  // 15 min / 20 s
inline constexpr int kProbeMinutesPerSlot = 15;

struct OmittedSlot {
    SectionId section;
    SegmentPosition position = SegmentPosition::Upstream;
    int week_index = 1;
    TimeKey key;
    std::string reason;
};

struct AggregateResult {
    std::vector<TrafficSample> samples;  // sorted by section, position, week, key
    std::vector<OmittedSlot> omitted;
};

// Folds raw records of one period into 15-minute samples. Week numbering
// starts at 1 on the earliest date present in the inputs.
AggregateResult aggregate(const std::vector<LoopRecord>& loops,
                          const std::vector<ProbeRecord>& probes, const SiteMap& map,
                          Period period, const AggregateConfig& cfg = {});

inline constexpr const char* kSamplesHeader =
    "section,position,period,week,dow,hod,moh,mean_speed,occupancy,flow_rate,density,coverage";

void write_samples_csv(std::ostream& out, const std::vector<TrafficSample>& samples);
std::vector<TrafficSample> read_samples_csv(std::istream& in);

}  // namespace ramp
