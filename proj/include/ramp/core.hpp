#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ramp {

// Errors split into two families: bad input (the caller can fix it) and
// everything else. The CLI maps them onto exit codes 1 and 2.
enum class ErrorKind {
    MalformedHeader,
    MalformedInput,
    MissingPath,
    InvalidConfig,
    EmptyInput,
    EmptyDataset,
    InsufficientRows,
    SingularSystem,
    AllWeightsZero,
    NoUnfrozenInstances,
    EmptySubstitute,
    GoalUnreachable,
    NoConvergence,
    RosterMismatch,
    LengthMismatch,
    AllTargetsZero,
    TooFewSections,
    KTooLarge,
    IoFailure,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    // True for problems in user-supplied inputs or parameters.
    bool is_validation() const noexcept;

private:
    ErrorKind kind_;
};

struct CivilDateTime {
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    int second = 0;

    // Days since 1970-01-01.
    std::int64_t day_number() const;
    // 0 = Sunday .. 6 = Saturday
    int weekday() const;
    bool valid() const;

    auto operator<=>(const CivilDateTime&) const = default;
};

// Accepts `M/D/YYYY H:MM[:SS]` and ISO-8601 `YYYY-MM-DD[T ]HH:MM[:SS]`.
std::optional<CivilDateTime> parse_timestamp(std::string_view text);
std::string format_timestamp(const CivilDateTime& t);

// Quarter-hour slot within the week.
struct TimeKey {
    int dow = 1;  // 1 = Sunday .. 7 = Saturday
    int hod = 0;  // 0..23
    int moh = 1;  // quarter of the hour, 1..4

    bool valid() const {
        return dow >= 1 && dow <= 7 && hod >= 0 && hod <= 23 && moh >= 1 && moh <= 4;
    }
    // 0..671, consistent with the lexicographic ordering.
    int slot_index() const { return ((dow - 1) * 24 + hod) * 4 + (moh - 1); }
    static TimeKey from_slot_index(int index);

    auto operator<=>(const TimeKey&) const = default;
};

TimeKey encode_time_key(const CivilDateTime& t);

enum class SegmentPosition : int { Upstream = 1, Downstream = 2, OnRamp = 3 };

inline constexpr SegmentPosition kAllPositions[] = {
    SegmentPosition::Upstream, SegmentPosition::Downstream, SegmentPosition::OnRamp};

// "upstream" | "downstream" | "onramp"
std::string_view to_string(SegmentPosition p);
// "up" | "down" | "ramp", as used in variable names.
std::string_view short_name(SegmentPosition p);
std::optional<SegmentPosition> parse_position(std::string_view text);

enum class Period { Before, After };

std::string_view to_string(Period p);
std::optional<Period> parse_period(std::string_view text);

class SectionId {
public:
    SectionId() = default;
    explicit SectionId(std::string id);

    const std::string& str() const noexcept { return id_; }
    bool empty() const noexcept { return id_.empty(); }

    auto operator<=>(const SectionId&) const = default;

private:
    std::string id_;
};

struct TrafficSample {
    SectionId section;
    SegmentPosition position = SegmentPosition::Upstream;
    Period period = Period::Before;
    int week_index = 1;
    TimeKey key;
    double mean_speed = 0.0;  // mph
    double occupancy = 0.0;   // percent
    double flow_rate = 0.0;   // veh/hr/ln
    std::optional<double> density;  // veh/mi/ln, before period only
    double coverage = 1.0;
};

// Names of the violated invariants; empty means the sample is valid.
std::vector<std::string> validate_sample(const TrafficSample& s);

struct LaneSlot {
    SegmentPosition position = SegmentPosition::Upstream;
    int lane = 1;
};

struct PositionLayout {
    int lanes = 1;
    double length_miles = 0.0;
    std::vector<int> slots;  // loop slot numbers, lane i -> slots[i-1]
    std::vector<std::string> probe_segment_ids;
};

struct SectionSite {
    SectionId section;
    std::string station_id;
    std::map<SegmentPosition, PositionLayout> positions;
    std::vector<int> excluded_slots;
};

struct SiteRef {
    const SectionSite* site = nullptr;
    SegmentPosition position = SegmentPosition::Upstream;
};

class SiteMap {
public:
    SiteMap() = default;
    explicit SiteMap(std::vector<SectionSite> sections);

    static SiteMap from_json(std::string_view text);
    static SiteMap load(const std::string& path);
    std::string to_json() const;

    const std::vector<SectionSite>& sections() const noexcept { return sections_; }
    const SectionSite* find_station(const std::string& station_id) const;
    const SectionSite* find_section(const SectionId& id) const;

    // Slot lookup: mapped lane, nullopt if unmapped or excluded.
    std::optional<LaneSlot> lane_for(const SectionSite& site, int slot) const;
    bool is_excluded(const SectionSite& site, int slot) const;
    std::optional<SiteRef> find_probe_segment(const std::string& segment_id) const;

private:
    void index();

    std::vector<SectionSite> sections_;
    std::map<std::string, std::size_t> by_station_;
    std::map<SectionId, std::size_t> by_section_;
    std::map<std::string, std::pair<std::size_t, SegmentPosition>> by_probe_;
};

// Deterministic sub-seed for independent random streams (splitmix64 mix).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace ramp
