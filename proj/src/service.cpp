#include "apsc/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>

#include <httplib.h>

namespace apsc::service {

namespace fs = std::filesystem;

namespace {

struct StatusName {
    Status s;
    std::string_view name;
};
constexpr StatusName kStatusNames[] = {
    {Status::Idle, "idle"}, {Status::Planning, "planning"}, {Status::Running, "running"},
    {Status::Done, "done"}, {Status::Error, "error"},
};

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool busy(Status s) { return s == Status::Planning || s == Status::Running; }

Json null_if_nan(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

std::string_view to_string(Status s) {
    for (const auto& n : kStatusNames) {
        if (n.s == s) return n.name;
    }
    return "unknown";
}

Status status_from_string(std::string_view s) {
    for (const auto& n : kStatusNames) {
        if (n.name == s) return n.s;
    }
    throw std::invalid_argument("unknown status '" + std::string(s) + "'");
}

ApiResult error_result(int http_status, const std::string& code, const std::string& message,
                       Json details) {
    Json err = {{"code", code}, {"message", message}};
    if (!details.is_null()) err["details"] = std::move(details);
    return {http_status, {{"error", err}}};
}

// --- records -------------------------------------------------------------------

Json to_json(const RunRecord& r) {
    return {
        {"id", r.id},
        {"instruction", r.instruction},
        {"status", std::string(to_string(r.status))},
        {"seed", r.seed},
        {"controller", r.controller},
        {"overrides", r.overrides},
        {"mc_samples", r.mc_samples},
        {"error", r.error},
        {"executables", r.executables},
        {"rationale", r.rationale},
        {"created_at", r.created_at},
        {"finished_at", r.finished_at},
    };
}

RunRecord run_from_json(const Json& j) {
    RunRecord r;
    r.id = j.at("id").get<std::string>();
    r.instruction = j.at("instruction").get<std::string>();
    r.status = status_from_string(j.at("status").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.controller = j.at("controller").get<std::string>();
    r.overrides = j.at("overrides");
    r.mc_samples = j.at("mc_samples").get<int>();
    r.error = j.at("error");
    r.executables = j.at("executables");
    r.rationale = j.at("rationale").get<std::string>();
    r.created_at = j.at("created_at").get<std::string>();
    r.finished_at = j.at("finished_at").get<std::string>();
    return r;
}

Json to_json(const SessionRecord& s) {
    Json runs = Json::array();
    for (const auto& r : s.runs) runs.push_back(to_json(r));
    return {
        {"id", s.id},
        {"created_at", s.created_at},
        {"status", std::string(to_string(s.status))},
        {"state", s.state.to_json()},
        {"runs", runs},
    };
}

SessionRecord session_from_json(const Json& j) {
    SessionRecord s;
    s.id = j.at("id").get<std::string>();
    s.created_at = j.at("created_at").get<std::string>();
    s.status = status_from_string(j.at("status").get<std::string>());
    s.state = guidance::SessionState::from_json(j.at("state"));
    for (const auto& r : j.at("runs")) s.runs.push_back(run_from_json(r));
    return s;
}

std::vector<std::size_t> downsample(const std::vector<double>& key, std::size_t max_points) {
    const std::size_t n = key.size();
    std::vector<std::size_t> idx;
    if (n == 0) return idx;
    if (n <= std::max<std::size_t>(max_points, 2)) {
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        return idx;
    }
    const auto [lo, hi] = std::minmax_element(key.begin(), key.end());
    idx = {0, n - 1, static_cast<std::size_t>(lo - key.begin()), static_cast<std::size_t>(hi - key.begin())};
    const std::size_t k = max_points > 4 ? max_points - 4 : 0;
    for (std::size_t i = 0; k > 1 && i < k; ++i) idx.push_back(i * (n - 1) / (k - 1));
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

// --- service -------------------------------------------------------------------

SessionService::SessionService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.backend) {
        cfg_.backend = [] { return std::make_unique<guidance::MockBackend>(); };
    }
    cfg_.base.validate();
    std::random_device rd;
    id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
                static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
    fs::create_directories(cfg_.data_dir / "sessions");
    load();
}

SessionService::~SessionService() {
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mu_);
        workers.swap(workers_);
    }
    for (auto& t : workers) {
        if (t.joinable()) t.join();
    }
}

fs::path SessionService::session_dir(const std::string& id) const {
    return cfg_.data_dir / "sessions" / id;
}

void SessionService::load() {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(cfg_.data_dir / "sessions")) {
        if (entry.is_directory() && fs::exists(entry.path() / "session.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        SessionRecord s = session_from_json(Json::parse(io::read_file(dir / "session.json")));
        // Work in flight when the process stopped will never finish.
        bool changed = false;
        for (auto& r : s.runs) {
            if (busy(r.status)) {
                r.status = Status::Error;
                r.error = error_result(500, "interrupted", "service stopped before the run finished")
                              .body["error"];
                changed = true;
            }
        }
        if (busy(s.status)) {
            s.status = Status::Error;
            changed = true;
        }
        if (changed) persist(s);
        const std::string id = s.id;
        sessions_.emplace(id, std::move(s));
    }
}

void SessionService::persist(const SessionRecord& s) const {
    io::write_file(session_dir(s.id) / "session.json", to_json(s).dump(2) + "\n");
}

std::string SessionService::new_id() {
    while (true) {
        id_state_ = io::fnv1a64(std::to_string(id_state_)) ^ (id_state_ + 0x9e3779b97f4a7c15ULL);
        const std::string id = io::hash_hex(id_state_).substr(0, 12);
        if (!sessions_.count(id) && !fs::exists(session_dir(id))) return id;
    }
}

ApiResult SessionService::create_session() {
    const std::string provider = cfg_.backend()->id();
    std::lock_guard lock(mu_);
    SessionRecord s;
    s.id = new_id();
    s.created_at = now_iso();
    s.state = guidance::SessionState(provider, guidance::PromptBundle::standard().version);
    try {
        fs::create_directories(session_dir(s.id) / "runs");
        persist(s);
        sessions_.emplace(s.id, s);
    } catch (const std::exception& e) {
        sessions_.erase(s.id);
        return error_result(500, "storage-error", e.what());
    }
    return {201, to_json(s)};
}

ApiResult SessionService::health() const {
    std::lock_guard lock(mu_);
    return {200, {{"status", "ok"}, {"sessions", sessions_.size()}}};
}

ApiResult SessionService::submit(const std::string& session_id, const Json& req) {
    {
        std::lock_guard lock(mu_);
        if (!sessions_.count(session_id)) {
            return error_result(404, "session-not-found", "no session '" + session_id + "'");
        }
    }
    if (!req.is_object()) return error_result(400, "invalid-request", "body must be a JSON object");
    for (const auto& item : req.items()) {
        static const char* known[] = {"instruction", "overrides", "seed", "mc_samples", "controller"};
        if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return item.key() == k; })) {
            return error_result(400, "invalid-request", "unknown field '" + item.key() + "'",
                                {{"field", item.key()}});
        }
    }
    const auto instr = req.find("instruction");
    if (instr == req.end() || !instr->is_string() || instr->get<std::string>().empty()) {
        return error_result(400, "invalid-request", "instruction must be a non-empty string",
                            {{"field", "instruction"}});
    }
    sim::Scenario scenario = cfg_.base;
    Json overrides = req.value("overrides", Json::object());
    try {
        if (!overrides.is_object()) throw io::ScenarioError("overrides", "expected an object");
        scenario = io::apply_overrides(cfg_.base, overrides);
    } catch (const io::ScenarioError& e) {
        return error_result(400, "invalid-override", e.what(), {{"field", e.path()}});
    }
    int mc = 0;
    if (req.contains("mc_samples")) {
        const Json& v = req["mc_samples"];
        if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > 100000) {
            return error_result(400, "invalid-request", "mc_samples must be an integer in [1, 100000]",
                                {{"field", "mc_samples"}});
        }
        mc = v.get<int>();
        scenario.psc.mc_samples = mc;
    }
    if (req.contains("controller")) {
        const Json& v = req["controller"];
        try {
            if (!v.is_string()) throw std::invalid_argument("controller must be a string");
            scenario.kind = sim::controller_from_string(v.get<std::string>());
        } catch (const std::invalid_argument& e) {
            return error_result(400, "invalid-request", e.what(), {{"field", "controller"}});
        }
    }
    std::optional<std::uint64_t> seed;
    if (req.contains("seed")) {
        const Json& v = req["seed"];
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
            return error_result(400, "invalid-request", "seed must be a non-negative integer",
                                {{"field", "seed"}});
        }
        seed = v.get<std::uint64_t>();
    }

    std::lock_guard lock(mu_);
    SessionRecord& s = sessions_.at(session_id);
    if (busy(s.status)) {
        return error_result(409, "session-busy", "session already has a run in progress");
    }
    RunRecord r;
    r.id = "r" + std::to_string(s.runs.size() + 1);
    r.instruction = instr->get<std::string>();
    r.status = Status::Planning;
    r.seed = seed.value_or(s.runs.size() + 1);
    r.controller = std::string(sim::to_string(scenario.kind));
    r.overrides = overrides;
    r.mc_samples = mc;
    r.created_at = now_iso();
    s.runs.push_back(r);
    s.status = Status::Planning;
    try {
        persist(s);
    } catch (const std::exception& e) {
        s.runs.pop_back();
        s.status = Status::Error;
        return error_result(500, "storage-error", e.what());
    }
    workers_.emplace_back(&SessionService::work, this, session_id, r.id, std::move(scenario));
    return {202, {{"session_id", session_id}, {"run_id", r.id}, {"status", "planning"}}};
}

void SessionService::work(std::string session_id, std::string run_id, sim::Scenario scenario) {
    auto finish = [&](Status status, Json error) {
        std::lock_guard lock(mu_);
        SessionRecord& s = sessions_.at(session_id);
        RunRecord& r = s.runs.back();
        r.status = status;
        r.error = std::move(error);
        r.finished_at = now_iso();
        s.status = status;
        try {
            persist(s);
        } catch (const std::exception&) {
        }
        idle_cv_.notify_all();
    };

    guidance::SessionState state;
    std::string instruction;
    std::uint64_t seed = 0;
    {
        std::lock_guard lock(mu_);
        const SessionRecord& s = sessions_.at(session_id);
        state = s.state;
        instruction = s.runs.back().instruction;
        seed = s.runs.back().seed;
    }

    guidance::PlanResult plan;
    try {
        auto backend = cfg_.backend();
        plan = guidance::llm_plan(state, instruction, *backend);
    } catch (const guidance::PlanError& e) {
        Json fields = Json::array();
        for (const auto& f : e.fields()) {
            fields.push_back({{"field", f.field}, {"code", f.code}, {"message", f.message}});
        }
        finish(Status::Error, {{"code", "planning-failed"}, {"kind", e.code()}, {"message", e.what()},
                               {"fields", fields}});
        return;
    } catch (const std::exception& e) {
        finish(Status::Error, {{"code", "planning-failed"}, {"kind", "internal"}, {"message", e.what()}});
        return;
    }

    {
        std::lock_guard lock(mu_);
        SessionRecord& s = sessions_.at(session_id);
        s.state.append_turn(instruction, plan.executables);
        RunRecord& r = s.runs.back();
        r.executables = guidance::to_json(plan.executables);
        r.rationale = plan.rationale;
        r.status = Status::Running;
        s.status = Status::Running;
        try {
            persist(s);
        } catch (const std::exception&) {
        }
    }

    try {
        const sim::Scenario run_scenario = guidance::apply_executables(scenario, plan.executables);
        const sim::RunLog log = io::run_hashed(run_scenario, seed);
        const fs::path dir = session_dir(session_id) / "runs" / run_id;
        io::write_run_log(log, dir);
        const auto digest = guidance::digest_run(log, run_id);
        const int turn = static_cast<int>(state.instructions().size()) + 1;
        guidance::append_transcript(session_dir(session_id) / "transcript.jsonl", turn, instruction,
                                    plan, digest);
        {
            std::lock_guard lock(mu_);
            sessions_.at(session_id).state.append_digest(digest);
        }
        finish(Status::Done, nullptr);
    } catch (const std::exception& e) {
        const int turn = static_cast<int>(state.instructions().size()) + 1;
        try {
            guidance::append_transcript(session_dir(session_id) / "transcript.jsonl", turn,
                                        instruction, plan, std::nullopt);
        } catch (const std::exception&) {
        }
        finish(Status::Error, {{"code", "run-failed"}, {"message", e.what()}});
    }
}

void SessionService::wait_idle(const std::string& session_id) {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [&] {
        const auto it = sessions_.find(session_id);
        return it == sessions_.end() || !busy(it->second.status);
    });
}

ApiResult SessionService::get_session(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
        return error_result(404, "session-not-found", "no session '" + session_id + "'");
    }
    return {200, to_json(it->second)};
}

ApiResult SessionService::get_run(const std::string& session_id, const std::string& run_id) const {
    RunRecord rec;
    {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(session_id);
        if (it == sessions_.end()) {
            return error_result(404, "session-not-found", "no session '" + session_id + "'");
        }
        const auto& runs = it->second.runs;
        const auto r = std::find_if(runs.begin(), runs.end(), [&](const RunRecord& x) { return x.id == run_id; });
        if (r == runs.end()) return error_result(404, "run-not-found", "no run '" + run_id + "'");
        rec = *r;
    }
    Json body = to_json(rec);
    body["session_id"] = session_id;
    if (rec.status != Status::Done) return {200, body};

    sim::RunLog log;
    try {
        log = io::read_run_log(session_dir(session_id) / "runs" / run_id);
    } catch (const std::exception& e) {
        return error_result(500, "storage-error", e.what());
    }
    const auto& rows = log.rows;
    std::vector<double> abs_e;
    for (const auto& r : rows) abs_e.push_back(std::abs(r.state.lateral_error));
    const auto idx = downsample(abs_e, cfg_.max_points);

    Json step = Json::array(), time = Json::array(), station = Json::array(), lat = Json::array(),
         head = Json::array(), vx = Json::array(), gx = Json::array(), gy = Json::array(),
         psi = Json::array(), margin = Json::array(), feasible = Json::array();
    Json pmean = Json::array(), pstd = Json::array(), meas = Json::array(), ptime = Json::array(),
         pstep = Json::array();
    for (std::size_t i : idx) {
        const auto& r = rows[i];
        const auto p = log.scenario.road.to_global(r.state.station, r.state.lateral_error);
        step.push_back(r.step);
        time.push_back(r.time);
        station.push_back(r.state.station);
        lat.push_back(r.state.lateral_error);
        head.push_back(r.state.heading_error);
        vx.push_back(r.state.vx);
        gx.push_back(p.x);
        gy.push_back(p.y);
        psi.push_back(r.psi);
        margin.push_back(null_if_nan(r.margin));
        feasible.push_back(r.feasible);
    }
    // The belief series is short enough to send whole.
    for (const auto& r : rows) {
        pstep.push_back(r.step);
        ptime.push_back(r.time);
        pmean.push_back(r.belief_mean);
        pstd.push_back(std::sqrt(r.belief_var));
        meas.push_back(null_if_nan(r.measurement));
    }
    Json segs = Json::array();
    for (const auto& sgm : log.scenario.road.segments()) {
        segs.push_back({{"length", sgm.length}, {"curvature", sgm.curvature}});
    }
    body["scenario_hash"] = io::hash_hex(log.scenario_hash);
    body["e_max"] = log.scenario.safe_set.e_max;
    body["prior"] = {{"mean", log.scenario.prior.mean}, {"std", log.scenario.prior.stddev()}};
    body["posterior"] = {{"mean", rows.empty() ? 0.0 : rows.back().posterior_mean},
                         {"std", rows.empty() ? 0.0 : std::sqrt(rows.back().posterior_var)}};
    body["metrics"] = io::to_json(log.metrics);
    if (!rows.empty()) body["digest"] = guidance::to_json(guidance::digest_run(log, run_id));
    body["road"] = {{"segments", segs}, {"length", log.scenario.road.length()}};
    body["total_steps"] = rows.size();
    body["trajectory"] = {{"step", step},     {"time", time},   {"station", station},
                          {"lateral_error", lat}, {"heading_error", head}, {"vx", vx},
                          {"x", gx},          {"y", gy},        {"psi", psi},
                          {"margin", margin}, {"feasible", feasible}};
    body["belief_series"] = {{"step", pstep}, {"time", ptime}, {"mean", pmean}, {"std", pstd},
                             {"measurement", meas}};
    return {200, body};
}

void SessionService::mount(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ApiResult& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, health());
    });
    server.Post("/sessions", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, create_session());
    });
    server.Get(R"(/sessions/([A-Za-z0-9_-]+))",
               [this, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, get_session(req.matches[1]));
               });
    server.Post(R"(/sessions/([A-Za-z0-9_-]+)/runs)",
                [this, reply](const httplib::Request& req, httplib::Response& res) {
                    Json body;
                    try {
                        body = req.body.empty() ? Json::object() : Json::parse(req.body);
                    } catch (const Json::parse_error& e) {
                        reply(res, error_result(400, "malformed-json", e.what()));
                        return;
                    }
                    reply(res, submit(req.matches[1], body));
                });
    server.Get(R"(/sessions/([A-Za-z0-9_-]+)/runs/([A-Za-z0-9_-]+))",
               [this, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, get_run(req.matches[1], req.matches[2]));
               });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const auto r = error_result(res.status, res.status == 404 ? "route-not-found" : "http-error",
                                    "no handler for " + req.method + " " + req.path);
        res.set_content(r.body.dump(), "application/json");
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            if (ep) std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(error_result(500, "internal-error", what).body.dump(), "application/json");
    });
}

}  // namespace apsc::service
