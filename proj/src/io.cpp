#include "apsc/io.hpp"

#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace apsc::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    // Write-then-rename so readers never see a torn file.
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, p);
}

// --- scenario <-> json ---------------------------------------------------------

Json to_json(const sim::Scenario& s) {
    const auto& p = s.params;
    Json segs = Json::array();
    for (const auto& seg : s.road.segments()) {
        segs.push_back({{"length", seg.length}, {"curvature", seg.curvature}});
    }
    Json gains = Json::array();
    for (double k : s.controller.lateral_gain) gains.push_back(k);
    return {
        {"name", s.name},
        {"vehicle",
         {{"mass", p.mass},
          {"wheel_radius", p.wheel_radius},
          {"yaw_inertia", p.yaw_inertia},
          {"wheel_inertia", p.wheel_inertia},
          {"cg_to_front", p.cg_to_front},
          {"cg_to_rear", p.cg_to_rear},
          {"track_width", p.track_width},
          {"stribeck_velocity", p.stribeck_velocity},
          {"long_stiffness", p.long_stiffness},
          {"long_damping", p.long_damping},
          {"long_load_factor", p.long_load_factor},
          {"lat_stiffness", p.lat_stiffness},
          {"lat_damping", p.lat_damping},
          {"lat_load_factor", p.lat_load_factor},
          {"static_friction", p.static_friction},
          {"kinetic_friction", p.kinetic_friction},
          {"gravity", p.gravity},
          {"normal_load", p.normal_load}}},
        {"road", {{"segments", segs}, {"e_bound", s.road.e_bound()}}},
        {"noise", {{"vx", s.noise.vx}, {"vy", s.noise.vy}, {"yaw_rate", s.noise.yaw_rate}}},
        {"integrator",
         {{"min_substeps", s.integrator.min_substeps},
          {"max_substep", s.integrator.max_substep},
          {"min_speed", s.integrator.min_speed}}},
        {"initial",
         {{"speed", s.initial.speed},
          {"lateral_error", s.initial.lateral_error},
          {"heading_error", s.initial.heading_error}}},
        {"friction", {{"lo", s.friction.lo}, {"hi", s.friction.hi}}},
        {"estimator",
         {{"prior_mean", s.prior.mean},
          {"prior_variance", s.prior.variance},
          {"noise_variance", s.estimator.noise_variance},
          {"adaptive", s.adaptive},
          {"measurement_every", s.measurement_every}}},
        {"sensor",
         {{"noise_variance", s.sensor.noise_variance},
          {"clamp_lo", s.sensor.clamp_lo},
          {"clamp_hi", s.sensor.clamp_hi}}},
        {"safety",
         {{"e_max", s.safe_set.e_max},
          {"horizon_steps", s.horizon.steps},
          {"horizon_dt", s.horizon.dt},
          {"epsilon", s.psc.epsilon},
          {"gamma_gain", s.psc.gain},
          {"dt", s.psc.dt},
          {"mc_samples", s.psc.mc_samples},
          {"propagations", s.psc.generator.propagations},
          {"rollouts_per_propagation", s.psc.generator.rollouts_per_propagation},
          {"workers", s.psc.workers}}},
        {"controller",
         {{"kind", std::string(sim::to_string(s.kind))},
          {"lateral_gain", gains},
          {"speed_gain", s.controller.speed_gain},
          {"torque_gain", s.controller.torque_gain},
          {"v_ref", s.controller.v_ref},
          {"max_steer_rate", s.controller.bounds.max_steer_rate},
          {"max_torque_rate", s.controller.bounds.max_torque_rate},
          {"steer_levels", s.steer_levels},
          {"torque_levels", s.torque_levels}}},
        {"mpc",
         {{"horizon", s.mpc.horizon},
          {"dt", s.mpc.dt},
          {"control_horizon", s.mpc.control_horizon},
          {"speed_weight", s.mpc.speed_weight},
          {"lateral_weight", s.mpc.lateral_weight},
          {"heading_weight", s.mpc.heading_weight},
          {"steer_levels", s.mpc.steer_levels},
          {"torque_levels", s.mpc.torque_levels},
          {"v_ref", s.mpc.v_ref},
          {"prediction_max_substep", s.mpc.prediction.max_substep},
          {"prediction_min_substeps", s.mpc.prediction.min_substeps}}},
        {"duration", s.duration},
        {"empirical_bound", s.empirical_bound},
    };
}

namespace {

// Reads optional keys of one JSON object and rejects the rest.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ScenarioError(path_.empty() ? "scenario" : path_, "expected an object");
    }

    void number(const char* key, double& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number()) throw ScenarioError(at(key), "expected a number");
            out = v->get<double>();
            if (!std::isfinite(out)) throw ScenarioError(at(key), "must be finite");
        }
    }
    void integer(const char* key, int& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number_integer()) throw ScenarioError(at(key), "expected an integer");
            out = v->get<int>();
        }
    }
    void boolean(const char* key, bool& out) {
        if (const Json* v = find(key)) {
            if (!v->is_boolean()) throw ScenarioError(at(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void string(const char* key, std::string& out) {
        if (const Json* v = find(key)) {
            if (!v->is_string()) throw ScenarioError(at(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    const Json* sub(const char* key) { return find(key); }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!known_.count(item.key())) throw ScenarioError(at(item.key()), "unknown key");
        }
    }
    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const Json* find(const char* key) {
        known_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const Json& j_;
    std::string path_;
    std::set<std::string> known_;
};

template <class F>
void guard(const char* path, F&& check) {
    try {
        check();
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(path, e.what());
    }
}

}  // namespace

sim::Scenario apply_overrides(const sim::Scenario& base, const Json& doc) {
    sim::Scenario s = base;
    Section top(doc, "");
    top.string("name", s.name);

    if (const Json* v = top.sub("vehicle")) {
        auto& p = s.params;
        Section sec(*v, "vehicle");
        sec.number("mass", p.mass);
        sec.number("wheel_radius", p.wheel_radius);
        sec.number("yaw_inertia", p.yaw_inertia);
        sec.number("wheel_inertia", p.wheel_inertia);
        sec.number("cg_to_front", p.cg_to_front);
        sec.number("cg_to_rear", p.cg_to_rear);
        sec.number("track_width", p.track_width);
        sec.number("stribeck_velocity", p.stribeck_velocity);
        sec.number("long_stiffness", p.long_stiffness);
        sec.number("long_damping", p.long_damping);
        sec.number("long_load_factor", p.long_load_factor);
        sec.number("lat_stiffness", p.lat_stiffness);
        sec.number("lat_damping", p.lat_damping);
        sec.number("lat_load_factor", p.lat_load_factor);
        sec.number("static_friction", p.static_friction);
        sec.number("kinetic_friction", p.kinetic_friction);
        sec.number("gravity", p.gravity);
        sec.number("normal_load", p.normal_load);
        sec.finish();
        guard("vehicle", [&] { s.params.validate(); });
    }
    if (const Json* v = top.sub("road")) {
        Section sec(*v, "road");
        double e_bound = s.road.e_bound();
        sec.number("e_bound", e_bound);
        std::vector<vehicle::RoadSegment> segs = s.road.segments();
        if (const Json* arr = sec.sub("segments")) {
            if (!arr->is_array()) throw ScenarioError("road.segments", "expected an array");
            segs.clear();
            auto ss_path = [](std::size_t i) { return "road.segments[" + std::to_string(i) + "]"; };
            for (std::size_t i = 0; i < arr->size(); ++i) {
                vehicle::RoadSegment seg;
                Section ss((*arr)[i], ss_path(i));
                ss.number("length", seg.length);
                ss.number("curvature", seg.curvature);
                ss.finish();
                if (!(seg.length > 0.0)) throw ScenarioError(ss_path(i) + ".length", "must be positive");
                segs.push_back(seg);
            }
        }
        sec.finish();
        try {
            s.road = vehicle::RoadProfile(segs, e_bound);
        } catch (const std::invalid_argument& e) {
            throw ScenarioError("road", e.what());
        }
    }
    if (const Json* v = top.sub("noise")) {
        Section sec(*v, "noise");
        sec.number("vx", s.noise.vx);
        sec.number("vy", s.noise.vy);
        sec.number("yaw_rate", s.noise.yaw_rate);
        sec.finish();
        if (s.noise.vx < 0 || s.noise.vy < 0 || s.noise.yaw_rate < 0) {
            throw ScenarioError("noise", "scales must be >= 0");
        }
    }
    if (const Json* v = top.sub("integrator")) {
        Section sec(*v, "integrator");
        sec.integer("min_substeps", s.integrator.min_substeps);
        sec.number("max_substep", s.integrator.max_substep);
        sec.number("min_speed", s.integrator.min_speed);
        sec.finish();
        if (s.integrator.min_substeps < 1 || !(s.integrator.max_substep > 0)) {
            throw ScenarioError("integrator", "needs min_substeps >= 1 and max_substep > 0");
        }
    }
    if (const Json* v = top.sub("initial")) {
        Section sec(*v, "initial");
        sec.number("speed", s.initial.speed);
        sec.number("lateral_error", s.initial.lateral_error);
        sec.number("heading_error", s.initial.heading_error);
        sec.finish();
    }
    if (const Json* v = top.sub("friction")) {
        Section sec(*v, "friction");
        sec.number("lo", s.friction.lo);
        sec.number("hi", s.friction.hi);
        sec.finish();
    }
    if (const Json* v = top.sub("estimator")) {
        Section sec(*v, "estimator");
        sec.number("prior_mean", s.prior.mean);
        sec.number("prior_variance", s.prior.variance);
        sec.number("noise_variance", s.estimator.noise_variance);
        sec.boolean("adaptive", s.adaptive);
        sec.integer("measurement_every", s.measurement_every);
        sec.finish();
    }
    if (const Json* v = top.sub("sensor")) {
        Section sec(*v, "sensor");
        sec.number("noise_variance", s.sensor.noise_variance);
        sec.number("clamp_lo", s.sensor.clamp_lo);
        sec.number("clamp_hi", s.sensor.clamp_hi);
        sec.finish();
        guard("sensor", [&] { s.sensor.validate(); });
        s.estimator.clamp_lo = s.sensor.clamp_lo;
        s.estimator.clamp_hi = s.sensor.clamp_hi;
    }
    if (const Json* v = top.sub("safety")) {
        Section sec(*v, "safety");
        sec.number("e_max", s.safe_set.e_max);
        sec.integer("horizon_steps", s.horizon.steps);
        sec.number("horizon_dt", s.horizon.dt);
        sec.number("epsilon", s.psc.epsilon);
        sec.number("gamma_gain", s.psc.gain);
        sec.number("dt", s.psc.dt);
        sec.integer("mc_samples", s.psc.mc_samples);
        sec.integer("propagations", s.psc.generator.propagations);
        sec.integer("rollouts_per_propagation", s.psc.generator.rollouts_per_propagation);
        sec.integer("workers", s.psc.workers);
        sec.finish();
        guard("safety", [&] { s.psc.validate(); });
    }
    if (const Json* v = top.sub("controller")) {
        Section sec(*v, "controller");
        std::string kind(sim::to_string(s.kind));
        sec.string("kind", kind);
        try {
            s.kind = sim::controller_from_string(kind);
        } catch (const std::invalid_argument& e) {
            throw ScenarioError("controller.kind", e.what());
        }
        if (const Json* g = sec.sub("lateral_gain")) {
            if (!g->is_array() || g->size() != 5) {
                throw ScenarioError("controller.lateral_gain", "expected an array of 5 numbers");
            }
            for (std::size_t i = 0; i < 5; ++i) {
                if (!(*g)[i].is_number()) throw ScenarioError("controller.lateral_gain", "expected numbers");
                s.controller.lateral_gain[i] = (*g)[i].get<double>();
            }
        }
        sec.number("speed_gain", s.controller.speed_gain);
        sec.number("torque_gain", s.controller.torque_gain);
        sec.number("v_ref", s.controller.v_ref);
        sec.number("max_steer_rate", s.controller.bounds.max_steer_rate);
        sec.number("max_torque_rate", s.controller.bounds.max_torque_rate);
        sec.integer("steer_levels", s.steer_levels);
        sec.integer("torque_levels", s.torque_levels);
        sec.finish();
        if (!(s.controller.bounds.max_steer_rate > 0) || !(s.controller.bounds.max_torque_rate > 0)) {
            throw ScenarioError("controller", "actuator bounds must be positive");
        }
    }
    if (const Json* v = top.sub("mpc")) {
        Section sec(*v, "mpc");
        sec.integer("horizon", s.mpc.horizon);
        sec.number("dt", s.mpc.dt);
        sec.integer("control_horizon", s.mpc.control_horizon);
        sec.number("speed_weight", s.mpc.speed_weight);
        sec.number("lateral_weight", s.mpc.lateral_weight);
        sec.number("heading_weight", s.mpc.heading_weight);
        sec.integer("steer_levels", s.mpc.steer_levels);
        sec.integer("torque_levels", s.mpc.torque_levels);
        sec.number("v_ref", s.mpc.v_ref);
        sec.number("prediction_max_substep", s.mpc.prediction.max_substep);
        sec.integer("prediction_min_substeps", s.mpc.prediction.min_substeps);
        sec.finish();
        guard("mpc", [&] { s.mpc.validate(); });
    }
    top.number("duration", s.duration);
    top.number("empirical_bound", s.empirical_bound);
    top.finish();

    try {
        s.validate();
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("scenario", e.what());
    }
    return s;
}

sim::Scenario load_scenario(const fs::path& file) {
    Json doc;
    try {
        doc = Json::parse(read_file(file));
    } catch (const Json::parse_error& e) {
        throw ScenarioError(file.string(), e.what());
    } catch (const std::runtime_error& e) {
        throw ScenarioError(file.string(), e.what());
    }
    return scenario_from_json(doc);
}

void save_scenario(const sim::Scenario& s, const fs::path& file) {
    write_file(file, to_json(s).dump(2) + "\n");
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t scenario_hash(const sim::Scenario& s) {
    Json j = to_json(s);
    j["safety"].erase("workers");
    // nlohmann objects are key-sorted, so dump() is canonical.
    return fnv1a64(j.dump());
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

// --- metrics -------------------------------------------------------------------

namespace {

// JSON has no NaN; keep it as null.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
double num_from(const Json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

sim::Termination termination_from(const std::string& s) {
    for (auto t : {sim::Termination::Duration, sim::Termination::RoadEnd, sim::Termination::InvalidState}) {
        if (sim::to_string(t) == s) return t;
    }
    throw std::invalid_argument("unknown termination '" + s + "'");
}

}  // namespace

Json to_json(const sim::RunMetrics& m) {
    return {
        {"steps", m.steps},
        {"min_psi", num(m.min_psi)},
        {"mean_psi", num(m.mean_psi)},
        {"initial_psi", num(m.initial_psi)},
        {"initial_gate_ok", m.initial_gate_ok},
        {"mean_vx", num(m.mean_vx)},
        {"std_vx", num(m.std_vx)},
        {"mean_abs_e", num(m.mean_abs_e)},
        {"std_abs_e", num(m.std_abs_e)},
        {"max_abs_e", num(m.max_abs_e)},
        {"empirical_safety", num(m.empirical_safety)},
        {"long_term_safe", m.long_term_safe},
        {"feasible", m.feasible},
        {"infeasible_steps", m.infeasible_steps},
        {"true_friction", num(m.true_friction)},
        {"final_mean", num(m.final_mean)},
        {"final_var", num(m.final_var)},
        {"termination", std::string(sim::to_string(m.termination))},
        {"timing",
         {{"wall_time", m.wall_time},
          {"mean_step_time", m.mean_step_time},
          {"mean_search_time", m.mean_search_time}}},
    };
}

sim::RunMetrics metrics_from_json(const Json& j) {
    sim::RunMetrics m;
    m.steps = j.at("steps").get<int>();
    m.min_psi = num_from(j.at("min_psi"));
    m.mean_psi = num_from(j.at("mean_psi"));
    m.initial_psi = num_from(j.at("initial_psi"));
    m.initial_gate_ok = j.at("initial_gate_ok").get<bool>();
    m.mean_vx = num_from(j.at("mean_vx"));
    m.std_vx = num_from(j.at("std_vx"));
    m.mean_abs_e = num_from(j.at("mean_abs_e"));
    m.std_abs_e = num_from(j.at("std_abs_e"));
    m.max_abs_e = num_from(j.at("max_abs_e"));
    m.empirical_safety = num_from(j.at("empirical_safety"));
    m.long_term_safe = j.at("long_term_safe").get<bool>();
    m.feasible = j.at("feasible").get<bool>();
    m.infeasible_steps = j.at("infeasible_steps").get<int>();
    m.true_friction = num_from(j.at("true_friction"));
    m.final_mean = num_from(j.at("final_mean"));
    m.final_var = num_from(j.at("final_var"));
    m.termination = termination_from(j.at("termination").get<std::string>());
    if (j.contains("timing")) {
        m.wall_time = j["timing"].value("wall_time", 0.0);
        m.mean_step_time = j["timing"].value("mean_step_time", 0.0);
        m.mean_search_time = j["timing"].value("mean_search_time", 0.0);
    }
    return m;
}

// --- rows ----------------------------------------------------------------------

namespace {

constexpr const char* kColumns[] = {
    "step", "time", "vx", "vy", "yaw_rate", "steer", "omega_fl", "omega_fr", "omega_rl",
    "omega_rr", "torque", "station", "lateral_error", "heading_error", "steer_rate",
    "torque_rate", "nominal_steer_rate", "nominal_torque_rate", "belief_mean", "belief_var",
    "measurement", "posterior_mean", "posterior_var", "psi", "psi_half_width", "margin",
    "feasible", "evaluations",
};
constexpr std::size_t kColumnCount = std::size(kColumns);

void put(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

double parse_double(std::string_view field) {
    // strtod handles "nan" and "inf"; copy to get a terminator.
    const std::string tmp(field);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size()) throw std::invalid_argument("bad number '" + tmp + "'");
    return v;
}

}  // namespace

std::string rows_to_csv(const std::vector<sim::RunRow>& rows) {
    std::string out;
    for (std::size_t i = 0; i < kColumnCount; ++i) {
        if (i) out += ',';
        out += kColumns[i];
    }
    out += '\n';
    for (const auto& r : rows) {
        out += std::to_string(r.step);
        const auto st = r.state.to_array();
        const double values[] = {
            r.time, st[0], st[1], st[2], st[3], st[4], st[5], st[6], st[7], st[8], st[9], st[10],
            st[11], r.input.steer_rate, r.input.torque_rate, r.nominal_input.steer_rate,
            r.nominal_input.torque_rate, r.belief_mean, r.belief_var, r.measurement,
            r.posterior_mean, r.posterior_var, r.psi, r.psi_half_width, r.margin,
        };
        for (double v : values) {
            out += ',';
            put(out, v);
        }
        out += r.feasible ? ",1," : ",0,";
        out += std::to_string(r.evaluations);
        out += '\n';
    }
    return out;
}

std::vector<sim::RunRow> rows_from_csv(std::string_view text) {
    std::vector<sim::RunRow> rows;
    std::size_t pos = text.find('\n');
    if (pos == std::string_view::npos) throw std::invalid_argument("steps.csv: missing header");
    ++pos;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::size_t a = 0;
        while (true) {
            const std::size_t b = line.find(',', a);
            f.push_back(line.substr(a, b == std::string_view::npos ? std::string_view::npos : b - a));
            if (b == std::string_view::npos) break;
            a = b + 1;
        }
        if (f.size() != kColumnCount) throw std::invalid_argument("steps.csv: wrong column count");
        sim::RunRow r;
        r.step = static_cast<int>(parse_double(f[0]));
        r.time = parse_double(f[1]);
        std::array<double, vehicle::kStateDim> st{};
        for (std::size_t i = 0; i < st.size(); ++i) st[i] = parse_double(f[2 + i]);
        r.state = vehicle::VehicleState::from_array(st);
        r.input = {parse_double(f[14]), parse_double(f[15])};
        r.nominal_input = {parse_double(f[16]), parse_double(f[17])};
        r.belief_mean = parse_double(f[18]);
        r.belief_var = parse_double(f[19]);
        r.measurement = parse_double(f[20]);
        r.posterior_mean = parse_double(f[21]);
        r.posterior_var = parse_double(f[22]);
        r.psi = parse_double(f[23]);
        r.psi_half_width = parse_double(f[24]);
        r.margin = parse_double(f[25]);
        r.feasible = f[26] == "1";
        r.evaluations = static_cast<int>(parse_double(f[27]));
        rows.push_back(r);
    }
    return rows;
}

// --- run directories -----------------------------------------------------------

sim::RunLog run_hashed(const sim::Scenario& s, std::uint64_t seed) {
    sim::RunLog log = sim::run_episode(s, seed);
    log.scenario_hash = scenario_hash(s);
    return log;
}

void write_run_log(const sim::RunLog& log, const fs::path& dir) {
    fs::create_directories(dir);
    write_file(dir / "steps.csv", rows_to_csv(log.rows));
    const Json run = {
        {"seed", log.seed},
        {"scenario_hash", hash_hex(log.scenario_hash)},
        {"controller", std::string(sim::to_string(log.scenario.kind))},
        {"scenario", to_json(log.scenario)},
        {"metrics", to_json(log.metrics)},
    };
    write_file(dir / "run.json", run.dump(2) + "\n");
}

sim::RunLog read_run_log(const fs::path& dir) {
    const fs::path run_file = dir / "run.json";
    const fs::path steps_file = dir / "steps.csv";
    std::vector<std::string> missing;
    if (!fs::exists(run_file)) missing.push_back(run_file.string());
    if (!fs::exists(steps_file)) missing.push_back(steps_file.string());
    if (!missing.empty()) {
        std::string msg = "missing run log files:";
        for (const auto& m : missing) msg += " " + m;
        throw std::runtime_error(msg);
    }
    const Json run = Json::parse(read_file(run_file));
    sim::RunLog log;
    log.seed = run.at("seed").get<std::uint64_t>();
    log.scenario_hash = std::stoull(run.at("scenario_hash").get<std::string>(), nullptr, 16);
    log.scenario = scenario_from_json(run.at("scenario"));
    log.metrics = metrics_from_json(run.at("metrics"));
    log.rows = rows_from_csv(read_file(steps_file));
    return log;
}

ReplayResult replay(const fs::path& dir) {
    const sim::RunLog stored = read_run_log(dir);
    ReplayResult r;
    r.stored_hash = stored.scenario_hash;
    r.recomputed_hash = scenario_hash(stored.scenario);
    r.hash_matches = r.stored_hash == r.recomputed_hash;
    const std::string original = read_file(dir / "steps.csv");
    const std::string again = rows_to_csv(sim::run_episode(stored.scenario, stored.seed).rows);
    r.rows_identical = original == again;
    if (!r.rows_identical) {
        const auto mm = std::mismatch(original.begin(), original.end(), again.begin(), again.end());
        r.first_difference = static_cast<std::size_t>(mm.first - original.begin());
    }
    return r;
}

}  // namespace apsc::io
