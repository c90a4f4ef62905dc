#pragma once

#include <string>

#include "ramp/boosting.hpp"
#include "ramp/ridge.hpp"
#include "ramp/transfer.hpp"

namespace ramp {

inline constexpr int kModelFormatVersion = 1;

// JSON documents for fitted models. Numbers are written with enough digits to
// round-trip exactly. Readers throw MalformedInput on shape errors and
// InvalidConfig on an unknown format_version.
std::string ensemble_to_json(const R2Ensemble& e);
R2Ensemble ensemble_from_json(const std::string& text);

std::string transfer_model_to_json(const TransferModel& m, const std::string& target = {});
TransferModel transfer_model_from_json(const std::string& text, std::string* target = nullptr);

}  // namespace ramp
