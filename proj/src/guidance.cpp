#include "apsc/guidance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>

#include <httplib.h>

namespace apsc::guidance {

namespace fs = std::filesystem;

namespace {

constexpr const char* kJsonReminder =
    "Your previous reply was not valid. Output ONLY the JSON object in the exact shape requested, "
    "with every value from the allowed sets.";

template <std::size_t N>
bool in_set(double v, const std::array<double, N>& set) {
    return std::any_of(set.begin(), set.end(), [v](double a) { return std::abs(a - v) < 1e-9; });
}

template <std::size_t N>
std::string set_text(const std::array<double, N>& set) {
    std::string s = "{";
    for (std::size_t i = 0; i < N; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", set[i]);
        s += (i ? "," : "") + std::string(buf);
    }
    return s + "}";
}

std::string fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

bool GuidanceExecutables::operator==(const GuidanceExecutables& o) const {
    return e_max == o.e_max && mu_0 == o.mu_0 && sigma_0 == o.sigma_0 && bar_sigma == o.bar_sigma &&
           assumptions.style == o.assumptions.style && assumptions.road == o.assumptions.road &&
           assumptions.speed_kmh == o.assumptions.speed_kmh &&
           assumptions.lane_quality == o.assumptions.lane_quality && rationale == o.rationale;
}

Json to_json(const GuidanceExecutables& e) {
    return {
        {"e_max", e.e_max},
        {"mu_0", e.mu_0},
        {"sigma_0", e.sigma_0},
        {"bar_sigma", e.bar_sigma},
        {"assumptions",
         {{"style", e.assumptions.style},
          {"road", e.assumptions.road},
          {"speed_kmh", e.assumptions.speed_kmh},
          {"lane_quality", e.assumptions.lane_quality}}},
        {"rationale", e.rationale},
    };
}

ValidationError::ValidationError(std::vector<FieldError> errors)
    : std::runtime_error([&] {
          std::string msg = "invalid executables:";
          for (const auto& e : errors) {
              msg += " [" + (e.field.empty() ? std::string("document") : e.field) + ": " + e.code +
                     "] " + e.message + ";";
          }
          return msg;
      }()),
      errors_(std::move(errors)) {}

namespace {

struct Checker {
    std::vector<FieldError> errors;

    const Json* require(const Json& obj, const std::string& key, const std::string& path) {
        const auto it = obj.find(key);
        if (it == obj.end()) {
            errors.push_back({path, "missing-key", "required key '" + key + "' is absent"});
            return nullptr;
        }
        return &*it;
    }

    void unknown(const Json& obj, std::initializer_list<const char*> allowed, const std::string& prefix) {
        for (const auto& item : obj.items()) {
            const bool known = std::any_of(allowed.begin(), allowed.end(),
                                           [&](const char* k) { return item.key() == k; });
            if (!known) errors.push_back({prefix + item.key(), "unknown-key", "key is not part of the schema"});
        }
    }

    template <std::size_t N>
    void discrete(const Json& obj, const char* key, const std::array<double, N>& set, double& out) {
        const Json* v = require(obj, key, key);
        if (!v) return;
        if (!v->is_number()) {
            errors.push_back({key, "type-mismatch", std::string("expected a number, got ") + v->type_name()});
            return;
        }
        const double d = v->get<double>();
        if (!in_set(d, set)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%g", d);
            errors.push_back({key, "out-of-set", std::string(buf) + " not in " + set_text(set)});
            return;
        }
        out = d;
    }

    void text(const Json& obj, const char* key, const std::string& path, std::string& out) {
        const Json* v = require(obj, key, path);
        if (!v) return;
        if (!v->is_string()) {
            errors.push_back({path, "type-mismatch", std::string("expected a string, got ") + v->type_name()});
            return;
        }
        out = v->get<std::string>();
    }
};

}  // namespace

std::vector<FieldError> diagnose_executables(std::string_view raw) {
    GuidanceExecutables e;
    Checker c;
    Json doc;
    try {
        doc = Json::parse(raw);
    } catch (const Json::parse_error& ex) {
        return {{"", "malformed-json", ex.what()}};
    }
    if (!doc.is_object()) return {{"", "not-an-object", "top level must be a JSON object"}};

    c.unknown(doc, {"e_max", "mu_0", "sigma_0", "bar_sigma", "assumptions", "rationale"}, "");
    c.discrete(doc, "e_max", kEmaxSet, e.e_max);
    c.discrete(doc, "mu_0", kMu0Set, e.mu_0);
    c.discrete(doc, "sigma_0", kSigma0Set, e.sigma_0);
    c.discrete(doc, "bar_sigma", kBarSigmaSet, e.bar_sigma);
    if (const Json* a = c.require(doc, "assumptions", "assumptions")) {
        if (!a->is_object()) {
            c.errors.push_back({"assumptions", "type-mismatch", "expected an object"});
        } else {
            c.unknown(*a, {"style", "road", "speed_kmh", "lane_quality"}, "assumptions.");
            c.text(*a, "style", "assumptions.style", e.assumptions.style);
            c.text(*a, "road", "assumptions.road", e.assumptions.road);
            c.text(*a, "lane_quality", "assumptions.lane_quality", e.assumptions.lane_quality);
            if (const Json* s = c.require(*a, "speed_kmh", "assumptions.speed_kmh")) {
                if (!s->is_number()) {
                    c.errors.push_back({"assumptions.speed_kmh", "type-mismatch",
                                        std::string("expected a number, got ") + s->type_name()});
                } else if (!std::isfinite(s->get<double>()) || s->get<double>() < 0.0) {
                    c.errors.push_back({"assumptions.speed_kmh", "out-of-set", "must be >= 0"});
                }
            }
        }
    }
    c.text(doc, "rationale", "rationale", e.rationale);
    return c.errors;
}

GuidanceExecutables validate_executables(std::string_view raw) {
    auto errors = diagnose_executables(raw);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    const Json doc = Json::parse(raw);
    GuidanceExecutables e;
    e.e_max = doc["e_max"].get<double>();
    e.mu_0 = doc["mu_0"].get<double>();
    e.sigma_0 = doc["sigma_0"].get<double>();
    e.bar_sigma = doc["bar_sigma"].get<double>();
    const Json& a = doc["assumptions"];
    e.assumptions.style = a["style"].get<std::string>();
    e.assumptions.road = a["road"].get<std::string>();
    e.assumptions.speed_kmh = a["speed_kmh"].get<double>();
    e.assumptions.lane_quality = a["lane_quality"].get<std::string>();
    e.rationale = doc["rationale"].get<std::string>();
    return e;
}

sim::Scenario apply_executables(const sim::Scenario& base, const GuidanceExecutables& e) {
    sim::Scenario s = base;
    s.safe_set.e_max = e.e_max;
    s.prior = belief::GaussianBelief::from_std(e.mu_0, e.sigma_0);
    s.estimator.noise_variance = e.bar_sigma * e.bar_sigma;
    s.validate();
    return s;
}

std::string PromptBundle::reasoning_for(const std::string& feedback, const std::string& user) const {
    std::string out = reasoning;
    auto fill = [&out](const std::string& slot, const std::string& value) {
        const auto pos = out.find(slot);
        if (pos != std::string::npos) out.replace(pos, slot.size(), value);
    };
    fill("{feedback}", feedback);
    fill("{user}", user);
    return out;
}

// --- digests -------------------------------------------------------------------

std::string RunDigest::text() const {
    std::string s;
    if (!run_id.empty()) s += "Run: " + run_id + "\n";
    s += "Lateral: " + fixed(lateral_mean, 4) + " +/- " + fixed(lateral_std, 4) + " m (|e|)\n";
    s += "Speed: " + fixed(speed_mean, 4) + " +/- " + fixed(speed_std, 4) + " m/s\n";
    s += "Safety: " + fixed(safety, 4) + " (fraction of steps with |e| < 3 m)\n";
    s += "Safety probability: mean " + fixed(mean_psi, 4) + ", min " + fixed(min_psi, 4) + "\n";
    s += "e_max: " + fixed(e_max, 1) + " m\n";
    s += "Prior: " + fixed(prior_mean, 4) + " +/- " + fixed(prior_std, 4) + "\n";
    s += "Posterior: " + fixed(posterior_mean, 4) + " +/- " + fixed(posterior_std, 4) + "\n";
    s += "Steps: " + std::to_string(steps) + "\n";
    return s;
}

Json to_json(const RunDigest& d) {
    return {
        {"run_id", d.run_id},
        {"steps", d.steps},
        {"lateral_mean", d.lateral_mean},
        {"lateral_std", d.lateral_std},
        {"speed_mean", d.speed_mean},
        {"speed_std", d.speed_std},
        {"safety", d.safety},
        {"min_psi", d.min_psi},
        {"mean_psi", d.mean_psi},
        {"e_max", d.e_max},
        {"prior_mean", d.prior_mean},
        {"prior_std", d.prior_std},
        {"posterior_mean", d.posterior_mean},
        {"posterior_std", d.posterior_std},
    };
}

RunDigest digest_from_json(const Json& j) {
    RunDigest d;
    d.run_id = j.at("run_id").get<std::string>();
    d.steps = j.at("steps").get<int>();
    d.lateral_mean = j.at("lateral_mean").get<double>();
    d.lateral_std = j.at("lateral_std").get<double>();
    d.speed_mean = j.at("speed_mean").get<double>();
    d.speed_std = j.at("speed_std").get<double>();
    d.safety = j.at("safety").get<double>();
    d.min_psi = j.at("min_psi").get<double>();
    d.mean_psi = j.at("mean_psi").get<double>();
    d.e_max = j.at("e_max").get<double>();
    d.prior_mean = j.at("prior_mean").get<double>();
    d.prior_std = j.at("prior_std").get<double>();
    d.posterior_mean = j.at("posterior_mean").get<double>();
    d.posterior_std = j.at("posterior_std").get<double>();
    return d;
}

RunDigest digest_run(const sim::RunLog& log, std::string run_id) {
    if (log.rows.empty()) throw std::invalid_argument("cannot digest a run without steps");
    const auto& m = log.metrics;
    RunDigest d;
    d.run_id = std::move(run_id);
    d.steps = static_cast<int>(log.rows.size());
    d.lateral_mean = m.mean_abs_e;
    d.lateral_std = m.std_abs_e;
    d.speed_mean = m.mean_vx;
    d.speed_std = m.std_vx;
    d.safety = m.empirical_safety;
    d.min_psi = m.min_psi;
    d.mean_psi = m.mean_psi;
    d.e_max = log.scenario.safe_set.e_max;
    d.prior_mean = log.scenario.prior.mean;
    d.prior_std = log.scenario.prior.stddev();
    d.posterior_mean = log.rows.back().posterior_mean;
    d.posterior_std = std::sqrt(log.rows.back().posterior_var);
    return d;
}

// --- mock backend --------------------------------------------------------------

namespace {

// Lowercase words separated by single spaces, padded at both ends.
std::string normalise(const std::string& text) {
    std::string out = " ";
    bool gap = false;
    for (char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '\'') {
            if (gap && out.back() != ' ') out += ' ';
            gap = false;
            out += static_cast<char>(std::tolower(c));
        } else {
            gap = true;
        }
    }
    return out + " ";
}

bool mentions(const std::string& norm, std::initializer_list<const char*> phrases) {
    for (const char* p : phrases) {
        if (norm.find(" " + std::string(p) + " ") != std::string::npos) return true;
    }
    return false;
}

constexpr std::initializer_list<const char*> kConservative = {
    "conservative", "careful", "carefully", "cautious", "cautiously", "smooth", "smoother", "gentle",
    "gently", "slow", "slower", "slow down", "safe", "safer", "safely", "precise", "comfortable",
    "relaxed", "less aggressive", "not aggressive", "too aggressive", "too fast"};
constexpr std::initializer_list<const char*> kAggressive = {
    "aggressive", "aggressively", "sporty", "fast", "faster", "quick", "quickly", "hurry",
    "rush", "racing", "speed up", "push it"};
constexpr std::initializer_list<const char*> kIcy = {"icy", "ice", "frozen", "slippery", "snowy",
                                                     "snow", "black ice"};
constexpr std::initializer_list<const char*> kWet = {"wet", "rain", "rainy", "damp", "normal",
                                                     "puddles", "moist"};
constexpr std::initializer_list<const char*> kDry = {"dry", "sunny", "grippy"};
constexpr std::initializer_list<const char*> kHedge = {
    "seems", "seem", "maybe", "not sure", "probably", "perhaps", "might", "unsure", "i think",
    "i guess", "possibly"};
constexpr std::initializer_list<const char*> kSensing = {
    "fog", "foggy", "rain", "raining", "rainy", "snow", "snowing", "glare", "low light", "dark",
    "sensor fault", "faulty sensor", "sensor problem", "sensor problems", "poor visibility",
    "bad visibility", "low visibility", "estimator is bad", "don't trust the estimator"};

// Friction class of a value: icy below 0.4, wet below 0.7, dry above.
double friction_class(double mu) {
    if (mu < 0.4) return 0.3;
    if (mu < 0.7) return 0.5;
    return 0.9;
}

const char* class_name(double mu0) {
    if (mu0 == 0.3) return "icy";
    if (mu0 == 0.5) return "normal";
    return "dry";
}

// Road classes the text states, most slippery first.
std::vector<double> stated_roads(const std::string& norm) {
    std::vector<double> out;
    if (mentions(norm, kIcy)) out.push_back(0.3);
    if (mentions(norm, kWet)) out.push_back(0.5);
    if (mentions(norm, kDry)) out.push_back(0.9);
    return out;
}

std::optional<double> number_after(const std::string& text, const std::string& key) {
    const auto pos = text.rfind(key);
    if (pos == std::string::npos) return std::nullopt;
    const char* start = text.c_str() + pos + key.size();
    char* end = nullptr;
    const double v = std::strtod(start, &end);
    if (end == start) return std::nullopt;
    return v;
}

double speed_kmh_of(const std::string& text) {
    static const std::regex re(R"((\d+(?:\.\d+)?)\s*(?:km/h|kmh|kph))", std::regex::icase);
    std::smatch m;
    if (std::regex_search(text, m, re)) return std::stod(m[1].str());
    return 0.0;
}

}  // namespace

std::string MockBackend::complete(const ChatRequest& req) {
    std::string instruction;
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
        if (it->role == "user" && it->content != kJsonReminder) {
            instruction = it->content;
            break;
        }
    }
    std::optional<double> previous_emax;
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
        if (it->role != "assistant") continue;
        try {
            previous_emax = validate_executables(it->content).e_max;
        } catch (const std::exception&) {
        }
        if (previous_emax) break;
    }
    const bool reasoning = req.system.find("=== Quantitative feedback") != std::string::npos;
    const std::optional<double> posterior = number_after(req.system, "Posterior: ");

    const std::string norm = normalise(instruction);
    const bool conservative = mentions(norm, kConservative);
    const bool aggressive = !conservative && mentions(norm, kAggressive);
    const bool hedging = mentions(norm, kHedge);
    const bool sensing = mentions(norm, kSensing);
    const auto roads = stated_roads(norm);

    GuidanceExecutables e;
    std::string why;
    if (conservative) {
        e.e_max = 3.0;
        why += "Conservative wording, so a tight lane tolerance (e_max 3). ";
    } else if (aggressive) {
        e.e_max = 10.0;
        why += "Aggressive wording, so a wide lane tolerance (e_max 10). ";
    } else {
        e.e_max = previous_emax.value_or(5.0);
        why += "No explicit style cue, e_max kept at " + fixed(e.e_max, 0) + ". ";
    }

    if (reasoning && posterior) {
        const double data_class = friction_class(*posterior);
        const bool contradicts =
            !roads.empty() && std::find(roads.begin(), roads.end(), data_class) == roads.end();
        if (hedging) {
            e.mu_0 = roads.empty() ? data_class : roads.front();
            e.sigma_0 = 0.3;
            why += "The user hedges about the road; prior widened around the stated class. ";
        } else if (contradicts) {
            // the last posterior is far tighter than any prior on offer
            e.mu_0 = data_class;
            e.sigma_0 = 0.05;
            why += "The stated road contradicts the estimated friction " + fixed(*posterior, 3) +
                   "; following the data. ";
        } else {
            e.mu_0 = data_class;
            e.sigma_0 = 0.05;
            why += "Prior aligned with the previous estimate " + fixed(*posterior, 3) + ". ";
        }
    } else {
        e.mu_0 = roads.empty() ? 0.5 : roads.front();
        e.sigma_0 = (hedging || roads.size() > 1) ? 0.3 : 0.05;
        why += roads.empty() ? "No road class stated, assuming normal. "
                             : std::string("Road stated as ") + class_name(e.mu_0) + ". ";
        if (e.sigma_0 > 0.05) why += "The description is uncertain, so the prior is wide. ";
    }
    e.bar_sigma = sensing ? 0.3 : 0.05;
    if (sensing) why += "Sensing conditions are poor, so measurements are trusted less.";

    e.assumptions.style = conservative ? "conservative" : aggressive ? "aggressive" : "neutral";
    e.assumptions.road = class_name(e.mu_0);
    e.assumptions.speed_kmh = speed_kmh_of(instruction);
    e.assumptions.lane_quality = "unknown";
    while (!why.empty() && why.back() == ' ') why.pop_back();
    e.rationale = why;
    return to_json(e).dump();
}

// --- http backend --------------------------------------------------------------

std::optional<HttpBackendConfig> HttpBackendConfig::from_env() {
    auto env = [](const char* k) -> std::string {
        const char* v = std::getenv(k);
        return v ? v : "";
    };
    HttpBackendConfig c;
    c.endpoint = env("APSC_LLM_ENDPOINT");
    c.model = env("APSC_LLM_MODEL");
    c.api_key = env("APSC_LLM_API_KEY");
    if (c.endpoint.empty() || c.model.empty()) return std::nullopt;
    return c;
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.find("://") == std::string::npos) {
        throw std::invalid_argument("endpoint needs a scheme: " + cfg_.endpoint);
    }
}

std::string HttpChatBackend::complete(const ChatRequest& req) {
    cancelled_ = false;
    const auto scheme_end = cfg_.endpoint.find("://") + 3;
    const auto path_start = cfg_.endpoint.find('/', scheme_end);
    const std::string host = cfg_.endpoint.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : cfg_.endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    Json messages = Json::array();
    messages.push_back({{"role", "system"}, {"content", req.system}});
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    const Json body = {{"model", cfg_.model}, {"messages", messages}, {"temperature", 0}};

    httplib::Client cli(host);
    cli.set_connection_timeout(cfg_.timeout_seconds, 0);
    cli.set_read_timeout(cfg_.timeout_seconds, 0);
    cli.set_write_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    auto res = cli.Post(prefix + "/chat/completions", headers, body.dump(), "application/json",
                        [this](uint64_t, uint64_t) { return !cancelled_.load(); });
    if (!res) throw TransportError("chat request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status) + ": " +
                             res->body.substr(0, 500));
    }
    try {
        const Json j = Json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        throw TransportError(std::string("unexpected chat response: ") + e.what());
    }
}

// --- session -------------------------------------------------------------------

void SessionState::append_turn(std::string instruction, GuidanceExecutables e) {
    // A failed run leaves its turn without a digest; later turns still append.
    instructions_.push_back(std::move(instruction));
    executables_.push_back(std::move(e));
}

void SessionState::append_digest(RunDigest d) {
    if (digests_.size() >= instructions_.size()) {
        throw std::logic_error("no planned turn is waiting for a digest");
    }
    digests_.push_back(std::move(d));
}

Json SessionState::to_json() const {
    Json ins = instructions_;
    Json digs = Json::array();
    for (const auto& d : digests_) digs.push_back(guidance::to_json(d));
    Json exes = Json::array();
    for (const auto& e : executables_) exes.push_back(guidance::to_json(e));
    return {{"provider", provider_},
            {"prompt_version", prompt_version_},
            {"instructions", ins},
            {"digests", digs},
            {"executables", exes}};
}

SessionState SessionState::from_json(const Json& j) {
    SessionState s(j.at("provider").get<std::string>(), j.at("prompt_version").get<std::string>());
    s.instructions_ = j.at("instructions").get<std::vector<std::string>>();
    for (const auto& d : j.at("digests")) s.digests_.push_back(digest_from_json(d));
    for (const auto& e : j.at("executables")) s.executables_.push_back(validate_executables(e.dump()));
    if (s.executables_.size() != s.instructions_.size() || s.digests_.size() > s.instructions_.size()) {
        throw std::invalid_argument("inconsistent session history");
    }
    return s;
}

// --- planning ------------------------------------------------------------------

ChatRequest compose_request(const SessionState& session, const std::string& instruction,
                            const PlanOptions& opt, const PromptBundle& prompts) {
    ChatRequest req;
    const auto& ins = session.instructions();
    const auto& digs = session.digests();
    if (ins.empty()) {
        req.system = prompts.inference;
    } else {
        std::string feedback;
        if (digs.empty()) {
            feedback = "No run data available.\n";
        } else if (opt.full_history) {
            for (std::size_t i = 0; i < digs.size(); ++i) {
                feedback += "--- run " + std::to_string(i + 1) + " ---\n" + digs[i].text();
            }
        } else {
            feedback = digs.back().text();
        }
        req.system = prompts.reasoning_for(feedback, instruction);
    }
    const auto& exes = session.executables();
    for (std::size_t i = 0; i < ins.size(); ++i) {
        req.messages.push_back({"user", ins[i]});
        if (i < exes.size()) req.messages.push_back({"assistant", to_json(exes[i]).dump()});
    }
    req.messages.push_back({"user", instruction});
    return req;
}

namespace {

// Drops surrounding whitespace and one enclosing ``` fence.
std::string unfence(const std::string& s) {
    auto trim = [](std::string t) {
        const auto b = t.find_first_not_of(" \t\r\n");
        const auto e = t.find_last_not_of(" \t\r\n");
        return b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
    };
    std::string t = trim(s);
    if (t.rfind("```", 0) == 0 && t.size() >= 6 && t.compare(t.size() - 3, 3, "```") == 0) {
        const auto nl = t.find('\n');
        if (nl != std::string::npos && nl < t.size() - 3) t = trim(t.substr(nl + 1, t.size() - 3 - nl - 1));
    }
    return t;
}

}  // namespace

PlanResult llm_plan(const SessionState& session, const std::string& instruction,
                    ChatBackend& backend, const PlanOptions& opt, const PromptBundle& prompts) {
    PlanResult out;
    out.request = compose_request(session, instruction, opt, prompts);
    out.inference = session.instructions().empty();
    ChatRequest req = out.request;
    std::vector<FieldError> last;
    for (int attempt = 0; attempt <= std::max(0, opt.retries); ++attempt) {
        std::string reply;
        try {
            reply = backend.complete(req);
        } catch (const TransportError& e) {
            throw PlanError("transport", e.what());
        }
        out.responses.push_back(reply);
        last = diagnose_executables(unfence(reply));
        if (last.empty()) {
            out.executables = validate_executables(unfence(reply));
            out.rationale = out.executables.rationale;
            return out;
        }
        req.messages.push_back({"assistant", reply});
        req.messages.push_back({"user", kJsonReminder});
    }
    const bool malformed = last.size() == 1 && (last.front().code == "malformed-json" ||
                                                last.front().code == "not-an-object");
    const std::string what = std::string(malformed ? "no valid JSON" : "invalid executables") +
                             " after " + std::to_string(out.responses.size()) + " attempts: " +
                             ValidationError(last).what();
    throw PlanError(malformed ? "malformed-output" : "validation", what, last);
}

// --- transcripts ---------------------------------------------------------------

void append_transcript(const fs::path& file, int turn, const std::string& instruction,
                       const PlanResult& plan, const std::optional<RunDigest>& digest) {
    Json line = {
        {"turn", turn},
        {"instruction", instruction},
        {"prompt", plan.inference ? "inference" : "reasoning"},
        {"responses", plan.responses},
        {"executables", to_json(plan.executables)},
        {"digest", digest ? to_json(*digest) : Json(nullptr)},
    };
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::app | std::ios::binary);
    if (!out) throw std::runtime_error("cannot append to " + file.string());
    out << line.dump() << '\n';
}

std::vector<TranscriptTurn> read_transcript(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::vector<TranscriptTurn> turns;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const Json j = Json::parse(line);
        TranscriptTurn t;
        t.turn = j.at("turn").get<int>();
        t.instruction = j.at("instruction").get<std::string>();
        t.executables = validate_executables(j.at("executables").dump());
        if (!j.at("digest").is_null()) t.digest = digest_from_json(j.at("digest"));
        turns.push_back(std::move(t));
    }
    return turns;
}

std::vector<int> replay_transcript(const fs::path& file, ChatBackend& backend) {
    const auto turns = read_transcript(file);
    SessionState session(backend.id(), PromptBundle::standard().version);
    std::vector<int> differing;
    for (const auto& t : turns) {
        const auto plan = llm_plan(session, t.instruction, backend);
        if (!(plan.executables == t.executables)) differing.push_back(t.turn);
        session.append_turn(t.instruction, plan.executables);
        if (t.digest) session.append_digest(*t.digest);
    }
    return differing;
}

}  // namespace apsc::guidance
