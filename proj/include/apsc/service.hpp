#pragma once

// Multi-turn sessions over HTTP: plan with the chat backend, run the
// episode on a worker thread, persist everything under one directory.

#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "apsc/guidance.hpp"

namespace httplib {
class Server;
}

namespace apsc::service {

using Json = io::Json;

enum class Status { Idle, Planning, Running, Done, Error };
std::string_view to_string(Status s);
Status status_from_string(std::string_view s);

struct ApiResult {
    int status = 200;
    Json body;
};

/// {"error": {"code": ..., "message": ...}} plus optional extra fields.
ApiResult error_result(int http_status, const std::string& code, const std::string& message,
                       Json details = nullptr);

struct ServiceConfig {
    std::filesystem::path data_dir = "apsc-data";
    sim::Scenario base{};
    /// One backend per planning call; defaults to the mock.
    std::function<std::unique_ptr<guidance::ChatBackend>()> backend;
    std::size_t max_points = 300;  // trajectory samples per payload
};

struct RunRecord {
    std::string id;
    std::string instruction;
    Status status = Status::Planning;
    std::uint64_t seed = 0;
    std::string controller;
    Json overrides = Json::object();
    int mc_samples = 0;  // 0: scenario default
    Json error = nullptr;
    Json executables = nullptr;
    std::string rationale;
    std::string created_at;
    std::string finished_at;
};

struct SessionRecord {
    std::string id;
    std::string created_at;
    Status status = Status::Idle;
    guidance::SessionState state;
    std::vector<RunRecord> runs;
};

/// Indices of `n` samples keeping both ends and the extremes of `key`.
std::vector<std::size_t> downsample(const std::vector<double>& key, std::size_t max_points);

class SessionService {
public:
    explicit SessionService(ServiceConfig cfg);
    ~SessionService();
    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    ApiResult create_session();
    ApiResult submit(const std::string& session_id, const Json& request);
    ApiResult get_session(const std::string& session_id) const;
    ApiResult get_run(const std::string& session_id, const std::string& run_id) const;
    ApiResult health() const;

    /// Blocks until no run of the session is planning or running.
    void wait_idle(const std::string& session_id);

    /// Registers the HTTP routes.
    void mount(httplib::Server& server);

    std::filesystem::path session_dir(const std::string& id) const;

private:
    void load();
    void persist(const SessionRecord& s) const;  // caller holds mu_
    void work(std::string session_id, std::string run_id, sim::Scenario scenario);
    std::string new_id();

    ServiceConfig cfg_;
    mutable std::mutex mu_;
    std::condition_variable idle_cv_;
    std::map<std::string, SessionRecord> sessions_;
    std::vector<std::thread> workers_;
    std::uint64_t id_state_ = 0;
};

Json to_json(const RunRecord& r);
RunRecord run_from_json(const Json& j);
Json to_json(const SessionRecord& s);
SessionRecord session_from_json(const Json& j);

}  // namespace apsc::service
