#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ramp/correction.hpp"
#include "ramp/eval.hpp"
#include "ramp/ingest.hpp"
#include "ramp/ridge.hpp"
#include "ramp/synth.hpp"
#include "ramp/transfer.hpp"

namespace ramp::cli {

struct RunConfig {
    // Paths. raw defaults to <out>/raw, site_map to <raw>/site_map.json.
    std::string out = "out";
    std::string raw;
    std::string site_map;

    std::uint64_t seed = 0;
    int jobs = 1;

    AggregateConfig aggregate;
    PairOptions pair;
    RidgeConfig ridge;
    ThresholdMap thresholds = default_thresholds();
    TransferConfig transfer;

    std::vector<std::string> targets;  // empty = every target
    std::vector<ModelKind> models{ModelKind::Transfer, ModelKind::AdaBoost, ModelKind::Knn};
    int knn_k = 5;
    int runs = 1;
    std::string held_out;  // section used by train/predict; empty = last section

    GridSpec grid;
    ModelKind grid_model = ModelKind::Transfer;
    std::string grid_target = "After_up_mean_speed";
    std::optional<std::size_t> budget;

    SynthConfig synth;
    bool synth_raw = true;

    std::string raw_dir() const;
    std::string site_map_path() const;
};

// Effective configuration without paths or worker count; its hash tags every artifact.
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// Applies a JSON config document on top of cfg. Throws InvalidConfig.
void apply_config_json(RunConfig& cfg, const std::string& text);

// Entry point shared by the executable and the tests. Returns the exit status:
// 0 success, 1 validation error, 2 runtime error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ramp::cli
