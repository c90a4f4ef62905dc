#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ramp/core.hpp"

namespace ramp {

struct ProfileEntry {
    double mean_speed = 0.0;
    double occupancy = 0.0;
    double flow_rate = 0.0;
    std::optional<double> density;
    int weeks_used = 0;
};

// Time-of-week average of one section/position/period.
struct CorrectedProfile {
    SectionId section;
    SegmentPosition position = SegmentPosition::Upstream;
    Period period = Period::Before;
    std::map<TimeKey, ProfileEntry> entries;
};

// Averages each time key over the weeks in which it was observed. A key
// missing from some weeks is divided by the number of weeks present.
// Throws EmptyInput for no samples, InvalidConfig for mixed groups.
CorrectedProfile temporal_correct(std::span<const TrafficSample> samples);

// Groups samples by (section, position, period) and corrects each group.
std::vector<CorrectedProfile> temporal_correct_all(std::span<const TrafficSample> samples);

struct FeatureRow {
    SectionId section;
    TimeKey key;
    std::vector<double> inputs;
    std::vector<double> targets;
};

struct ColumnStats {
    double mean = 0.0;
    double sd = 0.0;  // sample (n-1) standard deviation; 0 for n < 2
};

const std::vector<std::string>& default_input_names();
const std::vector<std::string>& default_target_names();

// Target variable family, used to pick the selection threshold.
enum class TargetKind { Speed, Occupancy, Flow };
TargetKind target_kind(const std::string& target_name);
std::string_view to_string(TargetKind kind);

class Dataset {
public:
    Dataset();
    Dataset(std::vector<std::string> input_names, std::vector<std::string> target_names);

    void add_row(FeatureRow row);
    void append(const Dataset& other);

    const std::vector<FeatureRow>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

    const std::vector<std::string>& input_names() const noexcept { return input_names_; }
    const std::vector<std::string>& target_names() const noexcept { return target_names_; }

    std::optional<std::size_t> input_index(const std::string& name) const;
    std::optional<std::size_t> target_index(const std::string& name) const;

    // Values of an input or target column by name; throws RosterMismatch.
    std::vector<double> column(const std::string& name) const;
    const ColumnStats& stats(const std::string& name) const;

    // n x columns.size() matrix of the named input columns.
    Eigen::MatrixXd inputs(const std::vector<std::string>& columns) const;
    Eigen::VectorXd target(const std::string& name) const;

    std::vector<SectionId> sections() const;  // sorted, unique
    Dataset where_section(const SectionId& s, bool keep) const;
    Dataset select_rows(std::span<const std::size_t> indices) const;

private:
    void accumulate(const FeatureRow& row);

    std::vector<std::string> input_names_;
    std::vector<std::string> target_names_;
    std::vector<FeatureRow> rows_;
    // Welford accumulators, inputs then targets; updated on every mutation.
    struct Running {
        double mean = 0.0;
        double m2 = 0.0;
    };
    std::vector<Running> running_;
    std::vector<ColumnStats> stats_;
};

struct PairOptions {
    bool include_down_occupancy = false;  // adds After_down_occupancy as a ninth target
};

struct PairResult {
    std::vector<FeatureRow> rows;
    std::size_t dropped_keys = 0;
};

using PositionProfiles = std::map<SegmentPosition, CorrectedProfile>;

// One row per time key present in every before profile (with density) and
// every after profile.
PairResult pair_before_after(const PositionProfiles& before, const PositionProfiles& after,
                             const SectionId& section, const PairOptions& opt = {});

// Corrected profiles of any number of sections -> paired dataset.
Dataset pair_profiles(const std::vector<CorrectedProfile>& profiles, const PairOptions& opt = {},
                      std::size_t* dropped_keys = nullptr);

// Samples of any number of sections -> corrected -> paired dataset.
Dataset build_dataset(std::span<const TrafficSample> samples, const PairOptions& opt = {},
                      std::size_t* dropped_keys = nullptr);

inline constexpr const char* kProfilesHeader =
    "section,position,period,dow,hod,moh,mean_speed,occupancy,flow_rate,density,weeks_used";
void write_profiles_csv(std::ostream& out, const std::vector<CorrectedProfile>& profiles);
std::vector<CorrectedProfile> read_profiles_csv(std::istream& in);

void write_dataset_csv(std::ostream& out, const Dataset& d);
Dataset read_dataset_csv(std::istream& in);

}  // namespace ramp
