#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ramp/report.hpp"
#include "ramp/synth.hpp"

using namespace ramp;
namespace fs = std::filesystem;

namespace {

SynthConfig small(std::uint64_t seed = 4) {
    SynthConfig c;
    c.seed = seed;
    c.n_sections = 3;
    c.weeks = 2;
    return c;
}

std::vector<TrafficSample> of(const SynthCorpus& c, const SectionId& s, Period p) {
    std::vector<TrafficSample> out;
    for (const auto& x : c.samples)
        if (x.section == s && x.period == p) out.push_back(x);
    std::sort(out.begin(), out.end(), [](const TrafficSample& a, const TrafficSample& b) {
        return std::tie(a.position, a.week_index, a.key) < std::tie(b.position, b.week_index, b.key);
    });
    return out;
}

void check_close(const std::vector<TrafficSample>& got, const std::vector<TrafficSample>& want) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].key == want[i].key);
        CHECK(got[i].week_index == want[i].week_index);
        CHECK(got[i].flow_rate == doctest::Approx(want[i].flow_rate).epsilon(1e-12));
        CHECK(got[i].mean_speed == doctest::Approx(want[i].mean_speed).epsilon(1e-12));
        CHECK(got[i].occupancy == doctest::Approx(want[i].occupancy).epsilon(1e-12));
        CHECK(got[i].density.has_value() == want[i].density.has_value());
    }
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("the default corpus pairs to 14 sections of 84 rows") {
    SynthCorpus c = generate(SynthConfig{});
    Dataset d = build_dataset(c.samples);
    CHECK(d.sections().size() == 14);
    CHECK(d.size() == 1176);
    CHECK(c.target_section.str() == "S14");
    CHECK(c.before_days.size() == 12);
    for (const auto& day : c.before_days) {
        const int dow = day.weekday() + 1;
        CHECK((dow >= 3 && dow <= 5));
    }
}

TEST_CASE("identical seeds give byte-identical raw files") {
    const fs::path a = fs::temp_directory_path() / "ramp_synth_a", b = fs::temp_directory_path() / "ramp_synth_b";
    fs::remove_all(a);
    fs::remove_all(b);
    auto fa = write_raw(generate(small()), a);
    auto fb = write_raw(generate(small()), b);
    REQUIRE(fa.size() == fb.size());
    CHECK(fa.size() == 2 + 2 * 2 * 3);
    for (std::size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i].filename() == fb[i].filename());
        CHECK(slurp(fa[i]) == slurp(fb[i]));
    }
    auto fc = write_raw(generate(small(5)), b);
    bool differs = false;
    for (std::size_t i = 0; i < fa.size(); ++i) differs = differs || slurp(fa[i]) != slurp(fc[i]);
    CHECK(differs);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("aggregating the generated raw records reproduces the corpus samples") {
    SynthCorpus c = generate(small());
    for (const auto& site : c.map.sections())
        for (Period p : {Period::Before, Period::After}) {
            AggregateResult r = aggregate(loop_records(c, site.section, p), probe_records(c, site.section, p), c.map, p);
            CHECK(r.omitted.empty());
            check_close(r.samples, of(c, site.section, p));
        }
}

TEST_CASE("raw files written to disk ingest back to the same samples") {
    SynthCorpus c = generate(small(8));
    const fs::path dir = fs::temp_directory_path() / "ramp_synth_roundtrip";
    fs::remove_all(dir);
    write_raw(c, dir);
    SiteMap map = SiteMap::load(dir / "site_map.json");
    const SectionSite& site = map.sections().front();
    for (Period p : {Period::Before, Period::After}) {
        const std::string period(to_string(p));
        std::ifstream loops(dir / period / ("loop_" + site.section.str() + ".csv"));
        std::ifstream probes(dir / period / ("probe_" + site.section.str() + ".csv"));
        REQUIRE(loops);
        REQUIRE(probes);
        auto lp = parse_loop_csv(loops, map);
        auto pp = parse_probe_csv(probes, map);
        CHECK(lp.skipped.empty());
        CHECK(pp.skipped.empty());
        check_close(aggregate(lp.records, pp.records, map, p).samples, of(c, site.section, p));
    }
    fs::remove_all(dir);
}

TEST_CASE("without noise the paired targets equal the ground-truth functions") {
    for (SynthRegime regime : {SynthRegime::Linear, SynthRegime::Piecewise}) {
        SynthConfig cfg = small(6);
        cfg.regime = regime;
        cfg.week_noise = 0.0;
        cfg.slot_noise = 0.0;
        cfg.target_noise = 0.0;
        SynthCorpus c = generate(cfg);
        Dataset d = build_dataset(c.samples);
        REQUIRE(d.size() == 3 * 84);
        for (const auto& row : d.rows()) {
            auto truth = c.expected_targets(row.section, row.inputs);
            for (std::size_t i = 0; i < truth.size(); ++i) {
                const std::string& name = d.target_names()[i];
                if (target_kind(name) == TargetKind::Flow) {
                    // Flow rates are whole vehicles per slot: 4 / lanes veh/hr/ln apart.
                    CHECK(std::abs(row.targets[i] - truth[i]) <= 2.0 + 1e-9);
                } else if (name.find("speed") != std::string::npos) {
                    CHECK(std::abs(row.targets[i] - std::max(1.0, truth[i])) < 1e-9);
                } else {
                    CHECK(std::abs(row.targets[i] - std::clamp(truth[i], 0.0, 100.0)) < 1e-9);
                }
            }
        }
    }
}

TEST_CASE("the domain-shift knob moves only the held-out section") {
    SynthConfig cfg = small(9);
    cfg.domain_shift = 0.0;
    SynthCorpus none = generate(cfg);
    cfg.domain_shift = 1.0;
    SynthCorpus one = generate(cfg);
    CHECK(none.latents.back().shift == 0.0);
    CHECK(one.latents.back().shift == 1.0);
    for (std::size_t s = 0; s + 1 < none.latents.size(); ++s) {
        CHECK(none.latents[s].demand == one.latents[s].demand);
        CHECK(none.latents[s].shift == 0.0);
    }
    CHECK(one.latents.back().demand - none.latents.back().demand == doctest::Approx(150.0));
}

TEST_CASE("manifest lists sections and truth, and configs are validated") {
    SynthCorpus c = generate(small());
    std::string m = c.manifest_json();
    CHECK(m.find("\"S01\"") != std::string::npos);
    CHECK(m.find("After_up_mean_speed") != std::string::npos);
    SynthConfig bad = small();
    bad.n_sections = 1;
    CHECK_THROWS_AS(generate(bad), Error);
    bad = small();
    bad.target_noise = -0.1;
    CHECK_THROWS_AS(generate(bad), Error);
    CHECK(parse_regime("linear") == SynthRegime::Linear);
    CHECK_FALSE(parse_regime("cubic"));
}
