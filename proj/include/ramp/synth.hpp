#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ramp/core.hpp"
#include "ramp/correction.hpp"
#include "ramp/ingest.hpp"

namespace ramp {

enum class SynthRegime {
    Linear,     // after = intercept + standardized linear combination of before inputs
    Piecewise,  // after = before scaled by section effects inside a congestion regime
};
std::string_view to_string(SynthRegime r);
std::optional<SynthRegime> parse_regime(std::string_view text);

// Documented setting of the domain-shift knob, in standard deviations of the
// section latent distribution.
inline constexpr double kModerateShift = 1.0;

struct SynthConfig {
    std::uint64_t seed = 0;
    int n_sections = 14;
    int weeks = 4;  // per period
    std::vector<int> weekdays{3, 4, 5};
    std::vector<HourWindow> hours{{6, 9}, {15, 19}};
    SynthRegime regime = SynthRegime::Piecewise;
    double week_noise = 0.03;    // relative week-to-week variation
    double slot_noise = 0.04;    // relative persistent variation per time key
    double target_noise = 0.05;  // after-period noise as a fraction of the target sd
    double domain_shift = kModerateShift;  // held-out (last) section offset
    int gap_weeks = 4;           // between the before and after periods

    void validate() const;
};

// Latent parameters of one section.
struct SectionLatent {
    SectionId section;
    int lanes_up = 3;
    int lanes_down = 3;
    int lanes_ramp = 1;
    double demand = 0.0;       // mainline peak flow, veh/hr/ln
    double ramp_demand = 0.0;  // ramp peak flow, veh/hr/ln
    double free_speed = 0.0;   // mainline, mph
    double ramp_speed = 0.0;   // ramp free speed, mph
    double capacity = 0.0;     // mainline, veh/hr/ln
    double effect = 0.0;       // metering effect size (piecewise regime)
    double shift = 0.0;        // domain-shift offset applied, in sd units
};

// After-period function of one target.
struct TargetTruth {
    std::string target;
    // Linear regime: y = intercept + sum_j coefficients[j] * (x_j - means[j]) / sds[j].
    double intercept = 0.0;
    std::vector<double> coefficients;
    double noise_sd = 0.0;
};

struct SynthCorpus {
    SynthConfig config;
    SiteMap map;
    std::vector<SectionLatent> latents;
    SectionId target_section;  // the shifted section
    std::vector<TrafficSample> samples;  // weekly, both periods
    std::vector<std::string> input_names;
    std::vector<double> input_means;  // pooled over every section's rows
    std::vector<double> input_sds;
    std::vector<TargetTruth> truth;
    std::vector<CivilDateTime> before_days;
    std::vector<CivilDateTime> after_days;

    // Noise-free after-period targets for a row of before inputs.
    std::vector<double> expected_targets(const SectionId& section, const std::vector<double>& inputs) const;
    std::string manifest_json() const;
};

SynthCorpus generate(const SynthConfig& cfg);

// Raw feed records reproducing the corpus samples of one section and period.
std::vector<LoopRecord> loop_records(const SynthCorpus& c, const SectionId& section, Period period);
std::vector<ProbeRecord> probe_records(const SynthCorpus& c, const SectionId& section, Period period);

// Writes <dir>/site_map.json, <dir>/manifest.json and
// <dir>/<period>/{loop,probe}_<section>.csv. Returns the files written.
std::vector<std::filesystem::path> write_raw(const SynthCorpus& c, const std::filesystem::path& dir);

}  // namespace ramp
