#include "ramp/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <tuple>

#include "json.hpp"
#include "ramp/ridge.hpp"

namespace ramp {

namespace {

using nlohmann::json;

constexpr std::int64_t kBeforeStartSunday =
    std::chrono::sys_days{std::chrono::year{2019} / std::chrono::January / 6}.time_since_epoch().count();
constexpr double kOccupancyPerDensity = 0.47;       // percent per veh/mi/ln (25 ft effective length)
constexpr double kRampCapacity = 900.0;

// Input roster positions used by the ground-truth functions.
enum Input : std::size_t {
    kUpSpeed = 3, kRampSpeed, kDownSpeed, kUpOcc, kRampOcc, kUpFlow, kRampFlow, kDownFlow,
};

CivilDateTime civil_from_days(std::int64_t days, int hour = 0, int minute = 0, int second = 0) {
    auto ymd = std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days}}};
    CivilDateTime t;
    t.year = static_cast<int>(ymd.year());
    t.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
    t.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
    t.hour = hour;
    t.minute = minute;
    t.second = second;
    return t;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double quantize_flow(double flow, int lanes) {
    long long v = std::llround(std::max(0.0, flow) * lanes / 4.0);
    return static_cast<double>(v) * 4.0 / lanes;
}

long long flow_volume(double flow, int lanes) { return std::llround(flow * lanes / 4.0); }

// Integer split of total following weights, rounding residuals carried forward.
std::vector<long long> carry_split(long long total, const std::vector<double>& weights) {
    double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<long long> out(weights.size());
    double cum = 0.0;
    long long prev = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cum += weights[i];
        long long upto = i + 1 == weights.size() ? total : std::llround(static_cast<double>(total) * cum / sum);
        out[i] = upto - prev;
        prev = upto;
    }
    return out;
}

std::vector<TimeKey> calendar_keys(const SynthConfig& cfg) {
    std::vector<TimeKey> keys;
    std::vector<int> days = cfg.weekdays;
    std::sort(days.begin(), days.end());
    for (int dow : days)
        for (int slot = 0; slot < 96; ++slot) {
            TimeKey k{dow, slot / 4, slot % 4 + 1};
            bool in = cfg.hours.empty() || std::any_of(cfg.hours.begin(), cfg.hours.end(), [&](const HourWindow& w) {
                          return k.hod >= w.begin_hour && k.hod < w.end_hour;
                      });
            if (in) keys.push_back(k);
        }
    return keys;
}

std::int64_t period_start(const SynthConfig& cfg, Period p) {
    return p == Period::Before ? kBeforeStartSunday : kBeforeStartSunday + 7LL * (cfg.weeks + cfg.gap_weeks);
}

std::int64_t day_of(const SynthConfig& cfg, Period p, int week, int dow) {
    return period_start(cfg, p) + 7LL * (week - 1) + (dow - 1);
}

struct Latent {
    double speed, occupancy, flow;
};

// Before-period latent traffic state of every position at one time key.
std::map<SegmentPosition, Latent> before_state(const SectionLatent& s, const TimeKey& k, double slot_noise,
                                               std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    const double u = k.hod + (k.moh - 0.5) / 4.0;
    const double am = std::exp(-std::pow((u - 7.4) / 0.8, 2)), pm = std::exp(-std::pow((u - 17.3) / 1.0, 2));
    const double shape_main = 0.45 + 0.55 * std::max(am, 1.05 * pm);
    const double shape_ramp =
        0.4 + 0.6 * std::max(std::exp(-std::pow((u - 7.0) / 0.7, 2)), std::exp(-std::pow((u - 17.0) / 0.9, 2)));
    const double day = 1.0 + 0.02 * (k.dow - 3);
    auto jitter = [&](double scale) { return 1.0 + scale * std::clamp(z(rng), -3.0, 3.0); };

    const double flow_up = s.demand * shape_main * day * jitter(slot_noise);
    const double flow_ramp = s.ramp_demand * shape_ramp * day * jitter(slot_noise);
    const double flow_down = (flow_up * s.lanes_up + 0.95 * flow_ramp * s.lanes_ramp) / s.lanes_down * jitter(slot_noise);
    auto main_speed = [&](double f, double cap) { return s.free_speed * (1.0 - 0.42 * logistic((f / cap - 0.85) / 0.05)); };
    const double cap_down = s.capacity * (1.0 + 0.05 * (s.lanes_down - s.lanes_up));
    const double speed_up = main_speed(flow_up, s.capacity) * jitter(slot_noise);
    const double speed_down = main_speed(flow_down, cap_down) * jitter(slot_noise);
    const double speed_ramp =
        s.ramp_speed * (1.0 - 0.45 * logistic((flow_ramp / kRampCapacity - 0.7) / 0.06)) * jitter(slot_noise);
    auto occ = [&](double f, double v) { return std::min(95.0, f / v * kOccupancyPerDensity * jitter(2.0 * slot_noise)); };

    std::map<SegmentPosition, Latent> out;
    out[SegmentPosition::Upstream] = {speed_up, occ(flow_up, speed_up), flow_up};
    out[SegmentPosition::Downstream] = {speed_down, occ(flow_down, speed_down), flow_down};
    out[SegmentPosition::OnRamp] = {speed_ramp, occ(flow_ramp, speed_ramp), flow_ramp};
    return out;
}

int lanes_of(const SectionLatent& s, SegmentPosition p) {
    switch (p) {
    case SegmentPosition::Upstream: return s.lanes_up;
    case SegmentPosition::Downstream: return s.lanes_down;
    case SegmentPosition::OnRamp: return s.lanes_ramp;
    }
    return 1;
}

double threshold_for(const std::string& target) {
    return default_thresholds().at(target_kind(target));
}

// Before variable of the same position and kind as an after target.
std::size_t matching_input(const std::string& target) {
    const auto& inputs = default_input_names();
    const std::string name = "Before_" + target.substr(6);
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i] == name) return i;
    throw Error(ErrorKind::InvalidConfig, "synth: no before variable for " + target);
}

const SectionLatent& latent_of(const std::vector<SectionLatent>& all, const SectionId& id) {
    for (const auto& s : all)
        if (s.section == id) return s;
    throw Error(ErrorKind::InvalidConfig, "synth: unknown section " + id.str());
}

std::vector<double> piecewise_targets(const SectionLatent& s, const std::vector<double>& x) {
    const bool congested = x[kUpFlow] > 0.78 * s.capacity;
    const bool heavy_ramp = x[kRampFlow] > 0.6 * kRampCapacity;
    const double g = std::max(0.2, 1.0 + 0.35 * s.effect);
    if (!congested)
        return {x[kUpSpeed] + 1.0,         x[kRampSpeed] - 0.5,   x[kDownSpeed] + 0.5,
                x[kUpOcc] * 0.98,          x[kRampOcc] * 1.02,    x[kUpFlow],
                x[kRampFlow],              x[kDownFlow]};
    return {x[kUpSpeed] + 6.0 * g,
            x[kRampSpeed] - (heavy_ramp ? 8.0 : 4.0) * g,
            x[kDownSpeed] + 3.0 * g,
            x[kUpOcc] * (1.0 - 0.12 * g),
            x[kRampOcc] * (1.0 + 0.3 * g),
            x[kUpFlow] * (1.0 + 0.04 * g),
            x[kRampFlow] * (1.0 - 0.15 * g),
            x[kDownFlow] * (1.0 + 0.03 * g)};
}

double floor_for(TargetKind kind) {
    switch (kind) {
    case TargetKind::Speed: return 5.0;
    case TargetKind::Occupancy: return 0.5;
    case TargetKind::Flow: return 50.0;
    }
    return 0.0;
}

}  // namespace

std::string_view to_string(SynthRegime r) { return r == SynthRegime::Linear ? "linear" : "piecewise"; }

std::optional<SynthRegime> parse_regime(std::string_view text) {
    if (text == "linear") return SynthRegime::Linear;
    if (text == "piecewise") return SynthRegime::Piecewise;
    return std::nullopt;
}

void SynthConfig::validate() const {
    if (n_sections < 2) throw Error(ErrorKind::InvalidConfig, "synth: n_sections must be >= 2");
    if (n_sections > 999) throw Error(ErrorKind::InvalidConfig, "synth: n_sections must be <= 999");
    if (weeks < 1) throw Error(ErrorKind::InvalidConfig, "synth: weeks must be >= 1");
    if (gap_weeks < 0) throw Error(ErrorKind::InvalidConfig, "synth: gap_weeks must be >= 0");
    for (double v : {week_noise, slot_noise, target_noise})
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidConfig, "synth: noise scales must be >= 0");
    if (target_noise >= 1.0) throw Error(ErrorKind::InvalidConfig, "synth: target_noise must be < 1");
    if (!std::isfinite(domain_shift)) throw Error(ErrorKind::InvalidConfig, "synth: domain_shift must be finite");
    if (weekdays.empty()) throw Error(ErrorKind::InvalidConfig, "synth: weekdays must be non-empty");
    for (int d : weekdays)
        if (d < 1 || d > 7) throw Error(ErrorKind::InvalidConfig, "synth: weekday codes are 1..7");
    for (const auto& h : hours)
        if (h.begin_hour < 0 || h.end_hour > 24 || h.begin_hour >= h.end_hour)
            throw Error(ErrorKind::InvalidConfig, "synth: bad hour window");
}

std::vector<double> SynthCorpus::expected_targets(const SectionId& section, const std::vector<double>& inputs) const {
    if (inputs.size() != input_names.size()) throw Error(ErrorKind::RosterMismatch, "synth: input length mismatch");
    if (config.regime == SynthRegime::Piecewise) return piecewise_targets(latent_of(latents, section), inputs);
    std::vector<double> out;
    for (const TargetTruth& t : truth) {
        double y = t.intercept;
        for (std::size_t j = 0; j < inputs.size(); ++j)
            if (t.coefficients[j] != 0.0) y += t.coefficients[j] * (inputs[j] - input_means[j]) / input_sds[j];
        out.push_back(y);
    }
    return out;
}

SynthCorpus generate(const SynthConfig& cfg) {
    cfg.validate();
    SynthCorpus c;
    c.config = cfg;
    c.input_names = default_input_names();
    const auto& targets = default_target_names();
    const std::vector<TimeKey> keys = calendar_keys(cfg);
    if (keys.empty()) throw Error(ErrorKind::InvalidConfig, "synth: calendar admits no time keys");

    // Section latents and the site map.
    std::vector<SectionSite> sites;
    for (int s = 0; s < cfg.n_sections; ++s) {
        std::mt19937_64 rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(s)));
        std::normal_distribution<double> z;
        std::uniform_int_distribution<int> lanes(2, 4), ramp_lanes(1, 2);
        char id[16];
        std::snprintf(id, sizeof id, "S%02d", s + 1);
        SectionLatent L;
        L.section = SectionId(id);
        L.lanes_up = lanes(rng);
        L.lanes_down = std::clamp(L.lanes_up + std::uniform_int_distribution<int>(-1, 1)(rng), 2, 4);
        L.lanes_ramp = ramp_lanes(rng);
        L.shift = s + 1 == cfg.n_sections ? cfg.domain_shift : 0.0;
        const double zd = z(rng) + L.shift, zr = z(rng) + L.shift, zv = z(rng), zc = z(rng) - L.shift;
        const double zs = z(rng), ze = z(rng);
        L.demand = 1300.0 + 150.0 * zd;
        L.ramp_demand = 600.0 + 100.0 * zr;
        L.free_speed = 65.0 + 2.0 * zv;
        L.ramp_speed = 40.0 + 3.0 * zs;
        L.capacity = 2000.0 + 80.0 * zc;
        L.effect = 0.6 * zd + 0.8 * ze;
        c.latents.push_back(L);

        SectionSite site;
        site.section = L.section;
        site.station_id = std::to_string(4100 + s + 1);
        int slot = 1;
        for (SegmentPosition p : kAllPositions) {
            PositionLayout layout;
            layout.lanes = lanes_of(L, p);
            layout.length_miles = p == SegmentPosition::OnRamp ? 0.3 : 0.8 + 0.05 * s;
            for (int l = 0; l < layout.lanes; ++l) layout.slots.push_back(slot++);
            layout.probe_segment_ids.push_back(std::to_string(1500000 + 10 * (s + 1) + static_cast<int>(p)));
            site.positions[p] = layout;
        }
        sites.push_back(site);
    }
    c.map = SiteMap(sites);
    c.target_section = c.latents.back().section;

    std::vector<int> weekdays = cfg.weekdays;
    std::sort(weekdays.begin(), weekdays.end());
    weekdays.erase(std::unique(weekdays.begin(), weekdays.end()), weekdays.end());
    for (int w = 1; w <= cfg.weeks; ++w)
        for (int d : weekdays) {
            c.before_days.push_back(civil_from_days(day_of(cfg, Period::Before, w, d)));
            c.after_days.push_back(civil_from_days(day_of(cfg, Period::After, w, d)));
        }

    // Before period: persistent per-key state, then weekly observations.
    std::vector<TrafficSample> before;
    for (std::size_t s = 0; s < c.latents.size(); ++s) {
        const SectionLatent& L = c.latents[s];
        std::mt19937_64 rng(derive_seed(cfg.seed, 200 + s));
        std::normal_distribution<double> z;
        for (const TimeKey& k : keys) {
            auto state = before_state(L, k, cfg.slot_noise, rng);
            for (SegmentPosition p : kAllPositions) {
                const Latent& x = state[p];
                const int lanes = lanes_of(L, p);
                for (int w = 1; w <= cfg.weeks; ++w) {
                    auto jitter = [&] { return 1.0 + cfg.week_noise * std::clamp(z(rng), -3.0, 3.0); };
                    TrafficSample t;
                    t.section = L.section;
                    t.position = p;
                    t.period = Period::Before;
                    t.week_index = w;
                    t.key = k;
                    t.mean_speed = x.speed * jitter();
                    t.occupancy = std::min(100.0, x.occupancy * jitter());
                    t.flow_rate = quantize_flow(x.flow * jitter(), lanes);
                    t.density = t.flow_rate / t.mean_speed;
                    before.push_back(t);
                }
            }
        }
    }

    // Observed (corrected) before inputs, exactly as the pairing stage builds them.
    std::map<SectionId, PositionProfiles> profiles;
    for (auto& p : temporal_correct_all(before)) profiles[p.section].emplace(p.position, std::move(p));
    std::vector<FeatureRow> rows;
    for (const auto& L : c.latents) {
        auto paired = pair_before_after(profiles.at(L.section), profiles.at(L.section), L.section);
        for (auto& r : paired.rows) rows.push_back(std::move(r));
    }
    const std::size_t p = c.input_names.size();
    c.input_means.assign(p, 0.0);
    c.input_sds.assign(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (const auto& r : rows) mean += r.inputs[j];
        mean /= static_cast<double>(rows.size());
        double ss = 0.0;
        for (const auto& r : rows) ss += (r.inputs[j] - mean) * (r.inputs[j] - mean);
        c.input_means[j] = mean;
        c.input_sds[j] = rows.size() > 1 ? std::sqrt(ss / static_cast<double>(rows.size() - 1)) : 0.0;
        if (!(c.input_sds[j] > 0.0)) c.input_sds[j] = 1.0;
    }

    // Ground truth.
    std::mt19937_64 truth_rng(derive_seed(cfg.seed, 300));
    for (const std::string& t : targets) {
        TargetTruth tt;
        tt.target = t;
        tt.coefficients.assign(p, 0.0);
        c.truth.push_back(tt);
    }
    auto noiseless = [&](const FeatureRow& r) { return c.expected_targets(r.section, r.inputs); };
    if (cfg.regime == SynthRegime::Linear) {
        std::uniform_real_distribution<double> mag(2.0, 4.0);
        std::bernoulli_distribution sign;
        for (TargetTruth& tt : c.truth) {
            std::vector<std::size_t> pool(p - 3);
            std::iota(pool.begin(), pool.end(), 3);
            std::shuffle(pool.begin(), pool.end(), truth_rng);
            const double thr = threshold_for(tt.target);
            for (std::size_t a = 0; a < 3; ++a)
                tt.coefficients[pool[a]] = (sign(truth_rng) ? 1.0 : -1.0) * mag(truth_rng) * thr;
            tt.intercept = c.input_means[matching_input(tt.target)];
        }
        // Keep every target physically plausible by lifting the intercept.
        for (std::size_t i = 0; i < c.truth.size(); ++i) {
            double lo = std::numeric_limits<double>::infinity();
            for (const auto& r : rows) lo = std::min(lo, noiseless(r)[i]);
            const double floor = floor_for(target_kind(c.truth[i].target));
            if (lo < floor) c.truth[i].intercept += floor - lo;
        }
    }
    for (std::size_t i = 0; i < c.truth.size(); ++i) {
        double mean = 0.0, ss = 0.0;
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(noiseless(r)[i]);
        for (double y : v) mean += y;
        mean /= static_cast<double>(v.size());
        for (double y : v) ss += (y - mean) * (y - mean);
        const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        const double tn = cfg.target_noise;
        c.truth[i].noise_sd = tn * sd / std::sqrt(1.0 - tn * tn);
    }

    // After period: noisy targets, then demeaned weekly variation.
    std::vector<TrafficSample> after;
    std::mt19937_64 noise_rng(derive_seed(cfg.seed, 400));
    std::normal_distribution<double> z;
    auto target_of = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(targets.begin(), targets.end(), name) - targets.begin());
    };
    for (const auto& r : rows) {
        const SectionLatent& L = latent_of(c.latents, r.section);
        std::vector<double> y = noiseless(r);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += c.truth[i].noise_sd * z(noise_rng);
        const auto& before_down = profiles.at(r.section).at(SegmentPosition::Downstream).entries.at(r.key);
        const double up_ratio = y[target_of("After_up_occupancy")] / r.inputs[kUpOcc];
        for (SegmentPosition pos : kAllPositions) {
            const std::string tag(short_name(pos));
            const double speed = std::max(1.0, y[target_of("After_" + tag + "_mean_speed")]);
            const double occ = pos == SegmentPosition::Downstream
                                   ? before_down.occupancy * up_ratio
                                   : y[target_of("After_" + tag + "_occupancy")];
            const double flow = y[target_of("After_" + tag + "_flow")];
            std::vector<double> ds(static_cast<std::size_t>(cfg.weeks)), dq(ds.size()), df(ds.size());
            for (std::size_t w = 0; w < ds.size(); ++w) {
                ds[w] = z(noise_rng);
                dq[w] = z(noise_rng);
                df[w] = z(noise_rng);
            }
            for (auto* v : {&ds, &dq, &df}) {
                double m = std::accumulate(v->begin(), v->end(), 0.0) / static_cast<double>(v->size());
                for (double& e : *v) e -= m;
            }
            const int lanes = lanes_of(L, pos);
            for (int w = 1; w <= cfg.weeks; ++w) {
                const auto wi = static_cast<std::size_t>(w - 1);
                TrafficSample t;
                t.section = r.section;
                t.position = pos;
                t.period = Period::After;
                t.week_index = w;
                t.key = r.key;
                t.mean_speed = std::max(1.0, speed * (1.0 + cfg.week_noise * ds[wi]));
                t.occupancy = std::clamp(occ * (1.0 + cfg.week_noise * dq[wi]), 0.0, 100.0);
                t.flow_rate = quantize_flow(flow * (1.0 + cfg.week_noise * df[wi]), lanes);
                after.push_back(t);
            }
        }
    }

    c.samples = std::move(before);
    c.samples.insert(c.samples.end(), after.begin(), after.end());
    std::sort(c.samples.begin(), c.samples.end(), [](const TrafficSample& a, const TrafficSample& b) {
        return std::tie(a.section, a.period, a.position, a.week_index, a.key) <
               std::tie(b.section, b.period, b.position, b.week_index, b.key);
    });
    return c;
}

std::string SynthCorpus::manifest_json() const {
    json sections = json::array();
    for (const auto& L : latents)
        sections.push_back({{"section", L.section.str()},
                            {"lanes", {{"up", L.lanes_up}, {"down", L.lanes_down}, {"ramp", L.lanes_ramp}}},
                            {"demand", L.demand},
                            {"ramp_demand", L.ramp_demand},
                            {"free_speed", L.free_speed},
                            {"ramp_speed", L.ramp_speed},
                            {"capacity", L.capacity},
                            {"effect", L.effect},
                            {"shift", L.shift}});
    json truth_j = json::array();
    for (const auto& t : truth) {
        json coeffs = json::object();
        for (std::size_t j = 0; j < t.coefficients.size(); ++j)
            if (t.coefficients[j] != 0.0) coeffs[input_names[j]] = t.coefficients[j];
        truth_j.push_back({{"target", t.target}, {"intercept", t.intercept}, {"coefficients", coeffs},
                           {"noise_sd", t.noise_sd}});
    }
    std::string function;
    if (config.regime == SynthRegime::Linear) {
        function = "y = intercept + sum(coefficients[x] * (x - mean[x]) / sd[x]) + N(0, noise_sd)";
    } else {
        function =
            "congested = Before_up_flow > 0.78 * capacity; g = max(0.2, 1 + 0.35 * effect). "
            "Uncongested: up speed +1, ramp speed -0.5, down speed +0.5, up occupancy x0.98, ramp occupancy x1.02, "
            "flows unchanged. Congested: up speed +6g, ramp speed -8g if Before_ramp_flow > 540 else -4g, "
            "down speed +3g, up occupancy x(1-0.12g), ramp occupancy x(1+0.3g), up flow x(1+0.04g), "
            "ramp flow x(1-0.15g), down flow x(1+0.03g). Plus N(0, noise_sd).";
    }
    std::vector<std::vector<int>> hours;
    for (const auto& h : config.hours) hours.push_back({h.begin_hour, h.end_hour});
    json j = {{"generator", "ramp-transfer synth"},
              {"seed", config.seed},
              {"n_sections", config.n_sections},
              {"weeks", config.weeks},
              {"weekdays", config.weekdays},
              {"hours", hours},
              {"regime", std::string(to_string(config.regime))},
              {"noise", {{"week", config.week_noise}, {"slot", config.slot_noise}, {"target", config.target_noise}}},
              {"domain_shift", {{"value", config.domain_shift}, {"moderate", kModerateShift}, {"units", "latent sd"}}},
              {"target_section", target_section.str()},
              {"before_start", format_timestamp(before_days.front())},
              {"after_start", format_timestamp(after_days.front())},
              {"sections", sections},
              {"inputs", {{"names", input_names}, {"mean", input_means}, {"sd", input_sds}}},
              {"after_function", function},
              {"truth", truth_j}};
    return j.dump(2) + "\n";
}

namespace {

struct SampleIndex {
    std::map<std::tuple<SegmentPosition, int, TimeKey>, const TrafficSample*> by_key;
};

SampleIndex index_samples(const SynthCorpus& c, const SectionId& section, Period period) {
    SampleIndex idx;
    for (const auto& s : c.samples)
        if (s.section == section && s.period == period) idx.by_key[{s.position, s.week_index, s.key}] = &s;
    if (idx.by_key.empty()) throw Error(ErrorKind::InvalidConfig, "synth: no samples for " + section.str());
    return idx;
}

// Positive weights with unit mean.
std::vector<double> unit_mean_weights(std::size_t n, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    std::vector<double> w(n);
    for (double& v : w) v = 1.0 + scale * std::clamp(z(rng), -2.5, 2.5);
    double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n);
    for (double& v : w) v /= mean;
    return w;
}

}  // namespace

std::vector<LoopRecord> loop_records(const SynthCorpus& c, const SectionId& section, Period period) {
    const SectionLatent& L = latent_of(c.latents, section);
    const SectionSite* site = c.map.find_section(section);
    SampleIndex idx = index_samples(c, section, period);
    std::mt19937_64 rng(derive_seed(c.config.seed, 500 + 2 * static_cast<std::uint64_t>(site - c.map.sections().data()) +
                                                       (period == Period::After ? 1 : 0)));
    std::vector<LoopRecord> out;
    std::vector<TimeKey> keys = calendar_keys(c.config);
    std::vector<int> weekdays = c.config.weekdays;
    std::sort(weekdays.begin(), weekdays.end());
    weekdays.erase(std::unique(weekdays.begin(), weekdays.end()), weekdays.end());
    long long id = 1;
    for (int w = 1; w <= c.config.weeks; ++w)
        for (int dow : weekdays) {
            const std::int64_t day = day_of(c.config, period, w, dow);
            for (const TimeKey& k : keys) {
                if (k.dow != dow) continue;
                // Per lane, per 20-second record.
                std::map<SegmentPosition, std::vector<std::vector<long long>>> volumes;
                std::map<SegmentPosition, std::vector<double>> occ_weights;
                for (SegmentPosition p : kAllPositions) {
                    const TrafficSample& s = *idx.by_key.at({p, w, k});
                    const int lanes = lanes_of(L, p);
                    auto lane_split = carry_split(flow_volume(s.flow_rate, lanes),
                                                  unit_mean_weights(static_cast<std::size_t>(lanes), 0.08, rng));
                    for (long long lv : lane_split)
                        volumes[p].push_back(carry_split(lv, unit_mean_weights(kLoopRecordsPerSlot, 0.3, rng)));
                    occ_weights[p] = unit_mean_weights(static_cast<std::size_t>(lanes * kLoopRecordsPerSlot), 0.15, rng);
                }
                for (int r = 0; r < kLoopRecordsPerSlot; ++r) {
                    const int sec = r * 20;
                    CivilDateTime t = civil_from_days(day, k.hod, (k.moh - 1) * 15 + sec / 60, sec % 60);
                    for (SegmentPosition p : kAllPositions) {
                        const TrafficSample& s = *idx.by_key.at({p, w, k});
                        const PositionLayout& layout = site->positions.at(p);
                        for (int lane = 0; lane < layout.lanes; ++lane) {
                            LoopRecord rec;
                            rec.id = std::to_string(id++);
                            rec.timestamp = t;
                            rec.station_id = site->station_id;
                            rec.slot_number = layout.slots[static_cast<std::size_t>(lane)];
                            rec.volume = volumes[p][static_cast<std::size_t>(lane)][static_cast<std::size_t>(r)];
                            rec.speed = std::round(s.mean_speed * 10.0) / 10.0;
                            rec.occupancy =
                                s.occupancy * occ_weights[p][static_cast<std::size_t>(lane * kLoopRecordsPerSlot + r)];
                            out.push_back(std::move(rec));
                        }
                    }
                }
            }
        }
    return out;
}

std::vector<ProbeRecord> probe_records(const SynthCorpus& c, const SectionId& section, Period period) {
    const SectionSite* site = c.map.find_section(section);
    SampleIndex idx = index_samples(c, section, period);
    std::mt19937_64 rng(derive_seed(c.config.seed, 700 + 2 * static_cast<std::uint64_t>(site - c.map.sections().data()) +
                                                       (period == Period::After ? 1 : 0)));
    std::vector<ProbeRecord> out;
    std::vector<TimeKey> keys = calendar_keys(c.config);
    std::vector<int> weekdays = c.config.weekdays;
    std::sort(weekdays.begin(), weekdays.end());
    weekdays.erase(std::unique(weekdays.begin(), weekdays.end()), weekdays.end());
    for (int w = 1; w <= c.config.weeks; ++w)
        for (int dow : weekdays) {
            const std::int64_t day = day_of(c.config, period, w, dow);
            for (const TimeKey& k : keys) {
                if (k.dow != dow) continue;
                std::map<SegmentPosition, std::vector<double>> weights;
                for (SegmentPosition p : kAllPositions)
                    weights[p] = unit_mean_weights(kProbeMinutesPerSlot, 0.04, rng);
                for (int m = 0; m < kProbeMinutesPerSlot; ++m) {
                    CivilDateTime t = civil_from_days(day, k.hod, (k.moh - 1) * 15 + m, 0);
                    for (SegmentPosition p : kAllPositions) {
                        const TrafficSample& s = *idx.by_key.at({p, w, k});
                        const PositionLayout& layout = site->positions.at(p);
                        ProbeRecord rec;
                        rec.timestamp = t;
                        rec.segment_id = layout.probe_segment_ids.front();
                        rec.speed = s.mean_speed * weights[p][static_cast<std::size_t>(m)];
                        rec.travel_time = layout.length_miles / rec.speed * 60.0;
                        rec.confidence = 0.3;
                        out.push_back(std::move(rec));
                    }
                }
            }
        }
    return out;
}

std::vector<std::filesystem::path> write_raw(const SynthCorpus& c, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> written;
    auto open = [&](const fs::path& p) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + p.string() + " for writing");
        written.push_back(p);
        return out;
    };
    {
        auto out = open(dir / "site_map.json");
        out << c.map.to_json();
    }
    {
        auto out = open(dir / "manifest.json");
        out << c.manifest_json();
    }
    for (Period period : {Period::Before, Period::After}) {
        const std::string sub(to_string(period));
        for (const auto& L : c.latents) {
            {
                auto out = open(dir / sub / ("loop_" + L.section.str() + ".csv"));
                write_loop_csv(out, loop_records(c, L.section, period));
                if (!out) throw Error(ErrorKind::IoFailure, "failed writing loop records");
            }
            {
                auto out = open(dir / sub / ("probe_" + L.section.str() + ".csv"));
                write_probe_csv(out, probe_records(c, L.section, period));
                if (!out) throw Error(ErrorKind::IoFailure, "failed writing probe records");
            }
        }
    }
    return written;
}

}  // namespace ramp
