#pragma once

// Scenario files, run logs on disk, hashing and replay.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "apsc/episode.hpp"

namespace apsc::io {

using Json = nlohmann::json;

/// Raised for malformed scenario documents; `path` names the offending key
/// ("safety.epsilon", "road.segments[2].length", ...).
class ScenarioError : public std::invalid_argument {
public:
    ScenarioError(std::string path, const std::string& what)
        : std::invalid_argument(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

Json to_json(const sim::Scenario& s);

/// Applies `doc` on top of `base`. Every key is optional; unknown keys and
/// wrong types raise ScenarioError. The result is validated.
sim::Scenario apply_overrides(const sim::Scenario& base, const Json& doc);
inline sim::Scenario scenario_from_json(const Json& doc) { return apply_overrides({}, doc); }

sim::Scenario load_scenario(const std::filesystem::path& file);
void save_scenario(const sim::Scenario& s, const std::filesystem::path& file);

/// FNV-1a 64 over the compact canonical JSON of the scenario. Settings
/// that cannot change results (worker count) are left out.
std::uint64_t scenario_hash(const sim::Scenario& s);
std::string hash_hex(std::uint64_t h);
std::uint64_t fnv1a64(std::string_view bytes);

Json to_json(const sim::RunMetrics& m);
sim::RunMetrics metrics_from_json(const Json& j);

/// Per-step rows as CSV; every double printed with 17 significant digits
/// so the text round-trips exactly.
std::string rows_to_csv(const std::vector<sim::RunRow>& rows);
std::vector<sim::RunRow> rows_from_csv(std::string_view text);

/// run_episode with the scenario hash filled in.
sim::RunLog run_hashed(const sim::Scenario& s, std::uint64_t seed);

/// Writes `dir/steps.csv` and `dir/run.json`.
void write_run_log(const sim::RunLog& log, const std::filesystem::path& dir);
sim::RunLog read_run_log(const std::filesystem::path& dir);

struct ReplayResult {
    bool hash_matches = false;
    bool rows_identical = false;
    std::size_t first_difference = 0;  // byte offset, when not identical
    std::uint64_t stored_hash = 0;
    std::uint64_t recomputed_hash = 0;
};

/// Re-runs the logged (scenario, seed) and compares the step rows byte for byte.
ReplayResult replay(const std::filesystem::path& dir);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);

}  // namespace apsc::io
