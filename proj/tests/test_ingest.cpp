#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ramp/ingest.hpp"

using namespace ramp;

namespace {

const char* kLoopHeader = "ID,TimeStamp,DetectorstationID,SlotNumber,Volume,Speed,Occupancy\n";
const char* kProbeHeader =
    "timestamp,SegmentID,type,speed,average,reference,score,confidenceValue,travelTimeMinutes\n";

SiteMap test_map() {
    return SiteMap::from_json(R"([
      {"section_id": "130", "station_id": "312",
       "positions": {
         "upstream": {"lanes": 3, "length_miles": 0.5, "slots": [1, 2, 3], "probe_segment_ids": ["1226240265"]},
         "downstream": {"lanes": 2, "length_miles": 0.6, "slots": [4, 5], "probe_segment_ids": ["1226240266"]},
         "onramp": {"lanes": 1, "length_miles": 0.2, "slots": [33], "probe_segment_ids": ["1226240267"]}},
       "excluded_slots": [9]}])");
}

LoopParseResult parse_loops(const std::string& body) {
    std::istringstream in(std::string(kLoopHeader) + body);
    return parse_loop_csv(in, test_map());
}

ProbeParseResult parse_probes(const std::string& body) {
    std::istringstream in(std::string(kProbeHeader) + body);
    return parse_probe_csv(in, test_map());
}

CivilDateTime at(int hour, int minute, int second = 0, int day = 11) {
    return CivilDateTime{2019, 6, day, hour, minute, second};  // June 2019: the 11th is a Tuesday
}

// One full slot of 20-second records on every upstream lane.
std::vector<LoopRecord> upstream_slot(long long volume, double occupancy, int day = 11) {
    std::vector<LoopRecord> out;
    for (int slot = 1; slot <= 3; ++slot)
        for (int i = 0; i < 15; ++i)
            out.push_back({"x", at(6, i / 3, (i % 3) * 20, day), "312", slot, volume, 60.0, occupancy});
    return out;
}

std::vector<ProbeRecord> upstream_probes(const std::vector<double>& speeds, int day = 11) {
    std::vector<ProbeRecord> out;
    int minute = 0;
    for (double v : speeds) out.push_back({at(6, minute++, 0, day), "1226240265", v, 0.5, std::nullopt});
    return out;
}

AggregateConfig lenient() {
    AggregateConfig c;
    c.min_loop_coverage = 0.0;
    c.min_probe_minutes = 0;
    return c;
}

}  // namespace

TEST_CASE("loop detector sample row parses to the shown field values") {
    auto r = parse_loops("853115071,6/11/2019 6:00,312,33,8,66,12\n");
    REQUIRE(r.records.size() == 1);
    CHECK(r.skipped.empty());
    const LoopRecord& rec = r.records.front();
    CHECK(rec.id == "853115071");
    CHECK(rec.timestamp == at(6, 0));
    CHECK(rec.station_id == "312");
    CHECK(rec.slot_number == 33);
    CHECK(rec.volume == 8);
    CHECK(rec.speed == 66.0);
    CHECK(rec.occupancy == 12.0);
}

TEST_CASE("probe sample row parses to the shown field values") {
    auto r = parse_probes("4/16/2019 6:07,1226240265,XDS,50,63,63,30,32,0.49\n");
    REQUIRE(r.records.size() == 1);
    const ProbeRecord& rec = r.records.front();
    CHECK(rec.timestamp == CivilDateTime{2019, 4, 16, 6, 7, 0});
    CHECK(rec.segment_id == "1226240265");
    CHECK(rec.speed == 50.0);
    CHECK(rec.travel_time == 0.49);
    REQUIRE(rec.confidence);
    CHECK(*rec.confidence == doctest::Approx(0.32));
}

TEST_CASE("header with only the required probe columns is accepted in any order") {
    std::istringstream in("travelTimeMinutes,speed,SegmentID,timestamp\n0.5,48,1226240265,4/16/2019 6:08\n");
    auto r = parse_probe_csv(in, test_map());
    REQUIRE(r.records.size() == 1);
    CHECK(r.records.front().speed == 48.0);
    CHECK_FALSE(r.records.front().confidence);
}

TEST_CASE("a valid header with no rows yields nothing") {
    CHECK(parse_loops("").records.empty());
    CHECK(parse_loops("").skipped.empty());
    CHECK(parse_probes("").records.empty());
}

TEST_CASE("missing required column is a header error") {
    std::istringstream in("ID,TimeStamp,DetectorstationID,SlotNumber,Volume,Speed\n");
    try {
        parse_loop_csv(in, test_map());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MalformedHeader);
        CHECK(std::string(e.what()).find("Occupancy") != std::string::npos);
    }
    std::istringstream lower("id,timestamp,detectorstationid,slotnumber,volume,speed,occupancy\n");
    CHECK_THROWS_AS(parse_loop_csv(lower, test_map()), Error);
}

TEST_CASE("malformed loop rows are skipped with their line numbers") {
    const std::string body =
        "1,6/11/2019 6:00,312,1,8,66,12\n"      // line 2 ok
        "2,not a time,312,1,8,66,12\n"          // line 3 timestamp
        "3,6/11/2019 6:00,312,1,-4,66,12\n"     // line 4 volume
        "4,6/11/2019 6:00,312,1,8,66\n"         // line 5 field count
        "5,6/11/2019 6:00,312,1,8,66,140\n"     // line 6 occupancy
        "6,6/11/2019 6:00,312,9,8,66,12\n"      // line 7 excluded slot
        "7,6/11/2019 6:00,999,1,8,66,12\n"      // line 8 unmapped station
        "8,6/11/2019 6:00,312,17,8,66,12\n"     // line 9 unmapped slot
        "9,6/11/2019 6:00,312,x,8,66,12\n"      // line 10 slot number
        "10,6/11/2019 6:00:20,312,2,7,61,10\n"; // line 11 ok
    auto r = parse_loops(body);
    CHECK(r.records.size() == 2);
    REQUIRE(r.skipped.count() == 8);
    std::vector<std::size_t> lines;
    for (const auto& s : r.skipped.rows) lines.push_back(s.line);
    CHECK(lines == std::vector<std::size_t>{3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(r.skipped.malformed == 5);
    CHECK(r.skipped.excluded == 1);
    CHECK(r.skipped.unmapped == 2);
    CHECK(r.skipped.rows[4].reason == "excluded slot 9");
}

TEST_CASE("excluded slot alone gives a skip count of one") {
    auto r = parse_loops("1,6/11/2019 6:00,312,9,8,66,12\n");
    CHECK(r.records.empty());
    CHECK(r.skipped.count() == 1);
}

TEST_CASE("malformed probe rows are skipped and unmapped segments counted") {
    const std::string body =
        "4/16/2019 6:07,1226240265,XDS,50,63,63,30,32,0.49\n"  // line 2 ok
        "4/16/2019 6:08,555,XDS,50,63,63,30,32,0.49\n"         // line 3 unmapped
        "4/16/2019 6:09,1226240265,XDS,fast,63,63,30,32,0.49\n"  // line 4 speed
        "4/16/2019 6:10,1226240265,XDS,50,63,63,30,32,0\n"     // line 5 travel time
        "4/16/2019 6:11,1226240265,XDS,0,63,63,30,32,0.8\n";   // line 6 ok, zero speed kept
    auto r = parse_probes(body);
    CHECK(r.records.size() == 2);
    REQUIRE(r.skipped.count() == 3);
    CHECK(r.skipped.rows[0].line == 3);
    CHECK(r.skipped.rows[1].line == 4);
    CHECK(r.skipped.rows[2].line == 5);
    CHECK(r.skipped.unmapped == 1);
    CHECK(r.records.back().speed == 0.0);
}

TEST_CASE("duplicated probe rows are both retained") {
    auto r = parse_probes("4/16/2019 6:07,1226240265,XDS,50,63,63,30,32,0.49\n"
                          "4/16/2019 6:07,1226240265,XDS,54,63,63,30,32,0.49\n");
    CHECK(r.records.size() == 2);
}

TEST_CASE("CRLF line endings and quoted fields parse") {
    auto r = parse_loops("\"853115071\",\"6/11/2019 6:00\",312,33,8,66,12\r\n");
    REQUIRE(r.records.size() == 1);
    CHECK(r.records.front().id == "853115071");
}

TEST_CASE("loop and probe records round-trip through their writers") {
    std::vector<LoopRecord> loops{{"853115071", at(6, 0), "312", 33, 8, 66.5, 12.25},
                                  {"853115072", at(6, 0, 20), "312", 1, 0, 0.0, 0.0}};
    std::ostringstream lo;
    write_loop_csv(lo, loops);
    std::istringstream li(lo.str());
    auto back = parse_loop_csv(li, test_map()).records;
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].id == loops[i].id);
        CHECK(back[i].timestamp == loops[i].timestamp);
        CHECK(back[i].slot_number == loops[i].slot_number);
        CHECK(back[i].volume == loops[i].volume);
        CHECK(back[i].speed == loops[i].speed);
        CHECK(back[i].occupancy == loops[i].occupancy);
    }
    std::vector<ProbeRecord> probes{{at(6, 7), "1226240265", 50.123456, 0.49, 0.32}};
    std::ostringstream po;
    write_probe_csv(po, probes);
    std::istringstream pi(po.str());
    auto pb = parse_probe_csv(pi, test_map()).records;
    REQUIRE(pb.size() == 1);
    CHECK(pb[0].speed == probes[0].speed);
    CHECK(pb[0].travel_time == probes[0].travel_time);
    CHECK(*pb[0].confidence == doctest::Approx(0.32).epsilon(1e-12));
}

TEST_CASE("flow rate is total slot volume times four over lane count") {
    auto res = aggregate(upstream_slot(5, 10.0), upstream_probes({50, 52, 54}), test_map(), Period::Before, lenient());
    REQUIRE(res.samples.size() == 1);
    const TrafficSample& s = res.samples.front();
    CHECK(s.flow_rate == doctest::Approx(300.0).epsilon(1e-15));  // 45 x 5 x 4 / 3
    CHECK(s.mean_speed == doctest::Approx(52.0).epsilon(1e-15));
    REQUIRE(s.density);
    CHECK(*s.density == doctest::Approx(300.0 / 52.0).epsilon(1e-15));
    CHECK(*s.density == doctest::Approx(5.769).epsilon(1e-4));
    CHECK(s.occupancy == doctest::Approx(10.0));
    CHECK(s.key.dow == 3);
    CHECK(s.key.hod == 6);
    CHECK(s.key.moh == 1);
    CHECK(s.week_index == 1);
    CHECK(s.section.str() == "130");
    CHECK(s.position == SegmentPosition::Upstream);
}

TEST_CASE("after-period samples carry no density") {
    auto res = aggregate(upstream_slot(5, 10.0), upstream_probes({50, 52, 54}), test_map(), Period::After, lenient());
    REQUIRE(res.samples.size() == 1);
    CHECK_FALSE(res.samples.front().density);
}

TEST_CASE("zero mean speed leaves density absent") {
    auto res = aggregate(upstream_slot(5, 10.0), upstream_probes({0, 0}), test_map(), Period::Before, lenient());
    REQUIRE(res.samples.size() == 1);
    CHECK_FALSE(res.samples.front().density);
}

TEST_CASE("duplicated probe rows each count once in the mean") {
    auto probes = upstream_probes({50, 52});
    probes.push_back(probes.front());  // 50 twice
    auto res = aggregate(upstream_slot(5, 10.0), probes, test_map(), Period::Before, lenient());
    CHECK(res.samples.front().mean_speed == doctest::Approx(152.0 / 3.0));
}

TEST_CASE("aggregation is invariant to record order") {
    auto loops = upstream_slot(5, 10.0);
    for (std::size_t i = 0; i < loops.size(); ++i) loops[i].volume = static_cast<long long>(i % 7);
    auto probes = upstream_probes({50, 51, 57, 43, 60});
    auto a = aggregate(loops, probes, test_map(), Period::Before, lenient());
    std::mt19937_64 rng(3);
    std::shuffle(loops.begin(), loops.end(), rng);
    std::shuffle(probes.begin(), probes.end(), rng);
    auto b = aggregate(loops, probes, test_map(), Period::Before, lenient());
    REQUIRE(a.samples.size() == b.samples.size());
    CHECK(a.samples.front().flow_rate == b.samples.front().flow_rate);
    CHECK(a.samples.front().mean_speed == doctest::Approx(b.samples.front().mean_speed).epsilon(1e-15));
}

TEST_CASE("halving every volume halves the flow rate exactly") {
    auto full = aggregate(upstream_slot(8, 10.0), upstream_probes({50}), test_map(), Period::Before, lenient());
    auto half = aggregate(upstream_slot(4, 10.0), upstream_probes({50}), test_map(), Period::Before, lenient());
    CHECK(half.samples.front().flow_rate * 2.0 == full.samples.front().flow_rate);
}

TEST_CASE("slots below the coverage thresholds are omitted and reported") {
    auto loops = upstream_slot(5, 10.0);
    loops.resize(loops.size() - 10);  // lane 3 keeps 5 of 15 records
    std::vector<double> speeds(15, 55.0);
    AggregateConfig strict;
    auto res = aggregate(loops, upstream_probes(speeds), test_map(), Period::Before, strict);
    CHECK(res.samples.empty());
    REQUIRE(res.omitted.size() == 1);
    CHECK(res.omitted.front().reason == "loop coverage");

    auto full = upstream_slot(5, 10.0);
    // 15 records per lane over 5 minutes is a third of 45; require none.
    strict.min_loop_coverage = 0.0;
    auto few = aggregate(full, upstream_probes({55, 55, 55}), test_map(), Period::Before, strict);
    CHECK(few.samples.empty());
    CHECK(few.omitted.front().reason == "probe coverage");
    strict.min_probe_minutes = 3;
    CHECK(aggregate(full, upstream_probes({55, 55, 55}), test_map(), Period::Before, strict).samples.size() == 1);
}

TEST_CASE("operating-hour and weekday filters drop records outside the protocol") {
    auto loops = upstream_slot(5, 10.0);
    auto probes = upstream_probes({50});
    for (auto& r : loops) r.timestamp.hour = 10;
    for (auto& r : probes) r.timestamp.hour = 10;
    CHECK(aggregate(loops, probes, test_map(), Period::Before, lenient()).samples.empty());

    auto mon_loops = upstream_slot(5, 10.0, 10);  // Monday
    auto mon_probes = upstream_probes({50}, 10);
    CHECK(aggregate(mon_loops, mon_probes, test_map(), Period::Before, lenient()).samples.empty());
    AggregateConfig all = lenient();
    all.weekdays.clear();
    CHECK(aggregate(mon_loops, mon_probes, test_map(), Period::Before, all).samples.size() == 1);
}

TEST_CASE("week index counts from the first day present") {
    auto loops = upstream_slot(5, 10.0, 11);
    auto later = upstream_slot(6, 10.0, 25);
    loops.insert(loops.end(), later.begin(), later.end());
    auto probes = upstream_probes({50}, 11);
    auto lp = upstream_probes({60}, 25);
    probes.insert(probes.end(), lp.begin(), lp.end());
    auto res = aggregate(loops, probes, test_map(), Period::Before, lenient());
    REQUIRE(res.samples.size() == 2);
    CHECK(res.samples[0].week_index == 1);
    CHECK(res.samples[1].week_index == 3);
    CHECK(res.samples[1].mean_speed == 60.0);
}

TEST_CASE("samples CSV round-trips") {
    auto res = aggregate(upstream_slot(5, 10.0), upstream_probes({50, 52, 54}), test_map(), Period::Before, lenient());
    auto after = aggregate(upstream_slot(7, 11.0), upstream_probes({51}), test_map(), Period::After, lenient());
    std::vector<TrafficSample> all = res.samples;
    all.insert(all.end(), after.samples.begin(), after.samples.end());
    std::ostringstream out;
    write_samples_csv(out, all);
    CHECK(out.str().rfind(kSamplesHeader, 0) == 0);
    std::istringstream in(out.str());
    auto back = read_samples_csv(in);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].section == all[i].section);
        CHECK(back[i].period == all[i].period);
        CHECK(back[i].key == all[i].key);
        CHECK(back[i].mean_speed == all[i].mean_speed);
        CHECK(back[i].flow_rate == all[i].flow_rate);
        CHECK(back[i].density == all[i].density);
        CHECK(back[i].coverage == all[i].coverage);
    }
}
