#pragma once

// Instruction -> executables planning through a chat model, and the
// session bookkeeping around it.

#include <array>
#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apsc/episode.hpp"
#include "apsc/io.hpp"

namespace apsc::guidance {

using Json = io::Json;

inline constexpr std::array<double, 3> kEmaxSet{3.0, 5.0, 10.0};
inline constexpr std::array<double, 3> kMu0Set{0.3, 0.5, 0.9};
inline constexpr std::array<double, 2> kSigma0Set{0.05, 0.3};
inline constexpr std::array<double, 2> kBarSigmaSet{0.05, 0.3};

struct Assumptions {
    std::string style;
    std::string road;
    double speed_kmh = 0.0;  // stored, not used by the controllers
    std::string lane_quality;
};

struct GuidanceExecutables {
    double e_max = 5.0;
    double mu_0 = 0.5;
    double sigma_0 = 0.05;    // prior std of the friction belief
    double bar_sigma = 0.05;  // measurement std assumed by the estimator
    Assumptions assumptions;
    std::string rationale;

    bool operator==(const GuidanceExecutables& o) const;
};

Json to_json(const GuidanceExecutables& e);

struct FieldError {
    std::string field;  // "e_max", "assumptions.road", "" for the whole document
    std::string code;   // malformed-json, not-an-object, missing-key, unknown-key, type-mismatch, out-of-set
    std::string message;
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<FieldError> errors);
    const std::vector<FieldError>& errors() const { return errors_; }

private:
    std::vector<FieldError> errors_;
};

/// Every problem found in `raw`; empty means valid.
std::vector<FieldError> diagnose_executables(std::string_view raw);
/// Parses and checks `raw`; throws ValidationError listing every problem.
GuidanceExecutables validate_executables(std::string_view raw);

/// The executables applied to a scenario: e_max to the safe set, mu_0 and
/// sigma_0 to the prior, bar_sigma to the estimator's measurement model.
sim::Scenario apply_executables(const sim::Scenario& base, const GuidanceExecutables& e);

struct PromptBundle {
    std::string version;
    std::string inference;  // first run
    std::string reasoning;  // later runs, with {feedback} and {user} slots

    static const PromptBundle& standard();
    std::string reasoning_for(const std::string& feedback, const std::string& user) const;
};

/// Quantitative feedback about one run.
struct RunDigest {
    std::string run_id;
    int steps = 0;
    double lateral_mean = 0.0;  // |e| [m]
    double lateral_std = 0.0;
    double speed_mean = 0.0;    // v_x [m/s]
    double speed_std = 0.0;
    double safety = 0.0;        // empirical safety fraction
    double min_psi = 0.0;
    double mean_psi = 0.0;
    double e_max = 0.0;
    double prior_mean = 0.0;
    double prior_std = 0.0;
    double posterior_mean = 0.0;
    double posterior_std = 0.0;

    std::string text() const;
};

Json to_json(const RunDigest& d);
RunDigest digest_from_json(const Json& j);

/// Throws std::invalid_argument for a log without steps.
RunDigest digest_run(const sim::RunLog& log, std::string run_id = {});

struct ChatMessage {
    std::string role;  // "user" or "assistant"
    std::string content;
};

struct ChatRequest {
    std::string system;
    std::vector<ChatMessage> messages;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string id() const = 0;
    /// Returns the assistant text; throws TransportError on failure.
    virtual std::string complete(const ChatRequest& req) = 0;
};

/// Deterministic stand-in applying the prompt policies through keyword rules.
class MockBackend : public ChatBackend {
public:
    std::string id() const override { return "mock"; }
    std::string complete(const ChatRequest& req) override;
};

struct HttpBackendConfig {
    std::string endpoint;  // base URL, e.g. http://localhost:8000/v1
    std::string model;
    std::string api_key;
    int timeout_seconds = 60;

    /// APSC_LLM_ENDPOINT, APSC_LLM_MODEL, APSC_LLM_API_KEY. Nullopt when
    /// endpoint or model is unset.
    static std::optional<HttpBackendConfig> from_env();
};

/// OpenAI-compatible chat completions over HTTP(S).
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig cfg);
    std::string id() const override { return "http:" + cfg_.model; }
    std::string complete(const ChatRequest& req) override;
    /// Aborts an in-flight call from another thread.
    void cancel() { cancelled_ = true; }

private:
    HttpBackendConfig cfg_;
    std::atomic<bool> cancelled_{false};
};

/// Ordered, append-only history of a multi-turn session.
class SessionState {
public:
    SessionState() = default;
    SessionState(std::string provider, std::string prompt_version)
        : provider_(std::move(provider)), prompt_version_(std::move(prompt_version)) {}

    const std::vector<std::string>& instructions() const { return instructions_; }
    const std::vector<RunDigest>& digests() const { return digests_; }
    const std::vector<GuidanceExecutables>& executables() const { return executables_; }
    const std::string& provider() const { return provider_; }
    const std::string& prompt_version() const { return prompt_version_; }

    /// Records a planned turn; its digest follows once the run finishes.
    void append_turn(std::string instruction, GuidanceExecutables e);
    /// Throws std::logic_error when every turn already has a digest.
    void append_digest(RunDigest d);

    Json to_json() const;
    static SessionState from_json(const Json& j);

private:
    std::vector<std::string> instructions_;
    std::vector<RunDigest> digests_;
    std::vector<GuidanceExecutables> executables_;
    std::string provider_ = "mock";
    std::string prompt_version_;
};

struct PlanOptions {
    int retries = 3;            // extra attempts after malformed output
    bool full_history = false;  // all digests in the feedback block, not only the last
};

struct PlanResult {
    std::string rationale;
    GuidanceExecutables executables;
    ChatRequest request;                 // first attempt
    std::vector<std::string> responses;  // every raw reply
    bool inference = true;               // first-run prompt used
};

class PlanError : public std::runtime_error {
public:
    PlanError(std::string code, const std::string& what, std::vector<FieldError> fields = {})
        : std::runtime_error(what), code_(std::move(code)), fields_(std::move(fields)) {}
    const std::string& code() const { return code_; }  // malformed-output, validation, transport
    const std::vector<FieldError>& fields() const { return fields_; }

private:
    std::string code_;
    std::vector<FieldError> fields_;
};

/// The request for turn n = session.instructions().size() + 1.
ChatRequest compose_request(const SessionState& session, const std::string& instruction,
                            const PlanOptions& opt = {},
                            const PromptBundle& prompts = PromptBundle::standard());

PlanResult llm_plan(const SessionState& session, const std::string& instruction,
                    ChatBackend& backend, const PlanOptions& opt = {},
                    const PromptBundle& prompts = PromptBundle::standard());

/// Append-only JSON-lines transcript, one line per planned turn.
void append_transcript(const std::filesystem::path& file, int turn, const std::string& instruction,
                       const PlanResult& plan, const std::optional<RunDigest>& digest);

struct TranscriptTurn {
    int turn = 0;
    std::string instruction;
    GuidanceExecutables executables;
    std::optional<RunDigest> digest;
};
std::vector<TranscriptTurn> read_transcript(const std::filesystem::path& file);

/// Re-plans every recorded turn with `backend`, feeding the recorded
/// digests back in. Returns the turns whose executables differ.
std::vector<int> replay_transcript(const std::filesystem::path& file, ChatBackend& backend);

}  // namespace apsc::guidance
