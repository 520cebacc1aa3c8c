#include <doctest.h>

#include <cmath>
#include <fstream>

#include "apsc/io.hpp"
#include "support/tmpdir.hpp"

using namespace apsc;
using io::Json;
namespace fs = std::filesystem;

namespace {

sim::Scenario quick() {
    sim::Scenario s;
    s.duration = 3.0;
    s.psc.mc_samples = 10;
    s.psc.generator = {3, 3};
    s.horizon.steps = 15;
    return s;
}

std::string error_path(const Json& doc) {
    try {
        io::scenario_from_json(doc);
    } catch (const io::ScenarioError& e) {
        return e.path();
    }
    return "<accepted>";
}

}  // namespace

TEST_CASE("FNV-1a reference vectors") {
    CHECK(io::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(io::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(io::fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(io::hash_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("scenario JSON round trip keeps the hash") {
    const sim::Scenario s;
    const Json j = io::to_json(s);
    const auto back = io::scenario_from_json(j);
    CHECK(io::to_json(back) == j);
    CHECK(io::scenario_hash(back) == io::scenario_hash(s));
    CHECK(io::hash_hex(io::scenario_hash(s)) == "4eebcc3d9149fc66");

    // through text as well
    const auto text = io::scenario_from_json(Json::parse(j.dump(2)));
    CHECK(io::scenario_hash(text) == io::scenario_hash(s));
}

TEST_CASE("hash ignores the worker count only") {
    sim::Scenario a, b;
    b.psc.workers = 4;
    CHECK(io::scenario_hash(a) == io::scenario_hash(b));
    b = a;
    b.psc.epsilon = 0.05;
    CHECK(io::scenario_hash(a) != io::scenario_hash(b));
    b = a;
    b.friction.hi = 0.41;
    CHECK(io::scenario_hash(a) != io::scenario_hash(b));
}

TEST_CASE("shipped scenario files load") {
    for (const char* name : {"default.json", "llm_icy.json", "dry.json"}) {
        CAPTURE(name);
        const auto s = io::load_scenario(fs::path(APSC_SOURCE_DIR) / "scenarios" / name);
        CHECK_NOTHROW(s.validate());
    }
    const auto d = io::load_scenario(fs::path(APSC_SOURCE_DIR) / "scenarios" / "default.json");
    CHECK(io::scenario_hash(d) == io::scenario_hash(sim::Scenario{}));
    const auto icy = io::load_scenario(fs::path(APSC_SOURCE_DIR) / "scenarios" / "llm_icy.json");
    CHECK(icy.friction.lo == 0.3);
    CHECK(icy.kind == sim::ControllerKind::ApscMpc);
    CHECK(icy.sensor.noise_variance == 0.0025);
}

TEST_CASE("overrides: partial documents keep the rest") {
    const auto s = io::scenario_from_json(Json::parse(R"({"safety": {"epsilon": 0.05}, "friction": {"lo": 0.7, "hi": 0.9}})"));
    CHECK(s.psc.epsilon == 0.05);
    CHECK(s.friction.lo == 0.7);
    CHECK(s.psc.mc_samples == 100);
    CHECK(s.params.mass == 1430.0);

    const auto r = io::scenario_from_json(Json::parse(R"({"road": {"segments": [{"length": 50, "curvature": 0.01}]}})"));
    REQUIRE(r.road.segments().size() == 1);
    CHECK(r.road.length() == 50.0);

    // the sensor clamp range also bounds the estimator's
    const auto c = io::scenario_from_json(Json::parse(R"({"sensor": {"clamp_lo": 0.1, "clamp_hi": 1.0}})"));
    CHECK(c.estimator.clamp_lo == 0.1);
    CHECK(c.estimator.clamp_hi == 1.0);
}

TEST_CASE("overrides: errors name the offending key") {
    CHECK(error_path(Json::parse(R"({"bogus": 1})")) == "bogus");
    CHECK(error_path(Json::parse(R"({"safety": {"epsilom": 0.1}})")) == "safety.epsilom");
    CHECK(error_path(Json::parse(R"({"vehicle": {"mass": "heavy"}})")) == "vehicle.mass");
    CHECK(error_path(Json::parse(R"({"safety": {"mc_samples": 10.5}})")) == "safety.mc_samples");
    CHECK(error_path(Json::parse(R"({"estimator": {"adaptive": 1}})")) == "estimator.adaptive");
    CHECK(error_path(Json::parse(R"({"road": {"segments": [{"length": 5}, {"length": -1}]}})")) ==
          "road.segments[1].length");
    CHECK(error_path(Json::parse(R"({"controller": {"kind": "pid"}})")) == "controller.kind");
    CHECK(error_path(Json::parse(R"({"safety": {"epsilon": 1.5}})")) == "safety");
    CHECK(error_path(Json::parse(R"({"vehicle": {"kinetic_friction": 0.9}})")) == "vehicle");
    CHECK(error_path(Json::parse(R"({"friction": {"lo": 0.9, "hi": 0.1}})")) == "scenario");
    CHECK(error_path(Json::parse(R"([1, 2])")) == "scenario");
}

TEST_CASE("load_scenario reports unreadable and malformed files") {
    support::TempDir dir("io");
    CHECK_THROWS_AS(io::load_scenario(dir / "none.json"), io::ScenarioError);
    io::write_file(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS(io::load_scenario(dir / "bad.json"), io::ScenarioError);

    sim::Scenario s;
    s.name = "saved";
    s.psc.epsilon = 0.2;
    io::save_scenario(s, dir / "s.json");
    CHECK(io::scenario_hash(io::load_scenario(dir / "s.json")) == io::scenario_hash(s));
    CHECK_FALSE(fs::exists(dir / "s.json.tmp"));
}

TEST_CASE("rows CSV round trips exactly") {
    const auto log = sim::run_episode(quick(), 4);
    const std::string csv = io::rows_to_csv(log.rows);
    const auto back = io::rows_from_csv(csv);
    REQUIRE(back.size() == log.rows.size());
    CHECK(io::rows_to_csv(back) == csv);
    CHECK(back[3].state == log.rows[3].state);
    CHECK(back[3].psi == log.rows[3].psi);

    sim::RunRow r;
    r.measurement = std::nan("");
    r.margin = std::nan("");
    r.feasible = false;
    const auto one = io::rows_from_csv(io::rows_to_csv({r}));
    CHECK(std::isnan(one[0].measurement));
    CHECK_FALSE(one[0].feasible);

    CHECK_THROWS(io::rows_from_csv(""));
    CHECK_THROWS(io::rows_from_csv(csv.substr(0, csv.find('\n') + 1) + "1,2,3\n"));
}

TEST_CASE("metrics JSON") {
    sim::RunMetrics m;
    m.steps = 3;
    m.mean_psi = 0.5;
    m.final_var = std::nan("");
    m.mean_search_time = 0.25;
    const Json j = io::to_json(m);
    CHECK(j["final_var"].is_null());
    CHECK(j["timing"]["mean_search_time"] == 0.25);
    const auto back = io::metrics_from_json(j);
    CHECK(back.steps == 3);
    CHECK(back.mean_psi == 0.5);
    CHECK(std::isnan(back.final_var));
    CHECK(back.mean_search_time == 0.25);
}

TEST_CASE("run logs replay byte for byte") {
    support::TempDir dir("replay");
    const auto s = quick();
    const auto log = io::run_hashed(s, 21);
    CHECK(log.scenario_hash == io::scenario_hash(s));
    io::write_run_log(log, dir / "r");
    CHECK(fs::exists(dir / "r" / "steps.csv"));

    const Json run = Json::parse(io::read_file(dir / "r" / "run.json"));
    CHECK(run["seed"] == 21);
    CHECK(run["scenario_hash"] == io::hash_hex(log.scenario_hash));
    CHECK(run["controller"] == "apsc-filter");

    const auto again = io::read_run_log(dir / "r");
    CHECK(again.seed == 21);
    CHECK(io::rows_to_csv(again.rows) == io::rows_to_csv(log.rows));

    const auto r = io::replay(dir / "r");
    CHECK(r.hash_matches);
    CHECK(r.rows_identical);

    // tamper with one byte of the rows
    std::string csv = io::read_file(dir / "r" / "steps.csv");
    auto pos = csv.rfind('\n', csv.size() - 2) + 1;
    while (!(csv[pos] >= '1' && csv[pos] <= '8')) ++pos;
    ++csv[pos];
    io::write_file(dir / "r" / "steps.csv", csv);
    const auto bad = io::replay(dir / "r");
    CHECK_FALSE(bad.rows_identical);
    CHECK(bad.first_difference == pos);

    // stored hash no longer matches an edited scenario
    Json edited = run;
    edited["scenario"]["safety"]["epsilon"] = 0.2;
    io::write_file(dir / "r" / "run.json", edited.dump());
    CHECK_FALSE(io::replay(dir / "r").hash_matches);
}

TEST_CASE("missing run log files are all listed") {
    support::TempDir dir("missing");
    try {
        io::read_run_log(dir.path());
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        CHECK(what.find("run.json") != std::string::npos);
        CHECK(what.find("steps.csv") != std::string::npos);
    }
}
