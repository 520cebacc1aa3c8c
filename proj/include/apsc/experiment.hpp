#pragma once

// Batch runs over scenario grids, horizon sweeps, aggregates and plots.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "apsc/episode.hpp"
#include "apsc/io.hpp"

namespace apsc::experiment {

struct RoadClass {
    std::string name;
    sim::FrictionRange range;
};

/// Named classes: icy [0.2, 0.4], icy-narrow [0.3, 0.4], wet [0.4, 0.7],
/// wet-narrow [0.5, 0.6], dry [0.7, 0.9], dry-narrow [0.8, 0.9].
RoadClass road_class(const std::string& name);
std::vector<std::string> road_class_names();

struct Cell {
    RoadClass road;
    double prior_mean = 0.3;
    double prior_std = 0.05;
    double measurement_std = 0.3;  // sensor and estimator alike
    double e_max = 3.0;
    int mpc_horizon = 10;

    std::string id() const;
};

struct ExperimentGrid {
    std::vector<RoadClass> roads;
    std::vector<double> prior_means{0.3};
    std::vector<double> prior_stds{0.05};
    std::vector<double> measurement_stds{0.3};
    std::vector<double> e_max{3.0};
    std::vector<int> mpc_horizons{10};
    int runs_per_cell = 20;
    std::uint64_t base_seed = 1;

    /// Throws std::invalid_argument on empty lists or out-of-range values.
    void validate() const;
    /// Cartesian product in a fixed order (roads outermost).
    std::vector<Cell> cells() const;
};

/// `base` with the cell and controller applied.
sim::Scenario apply_cell(const sim::Scenario& base, const Cell& cell, sim::ControllerKind kind);

struct RunOutcome {
    std::size_t cell = 0;
    sim::ControllerKind controller = sim::ControllerKind::ApscFilter;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    sim::RunMetrics metrics{};
    std::filesystem::path dir;  // empty when logs are not written
};

struct ControllerAggregate {
    sim::ControllerKind controller = sim::ControllerKind::ApscFilter;
    int runs = 0;
    int failed = 0;
    double mean_min_psi = 0.0;
    double mean_psi = 0.0;
    double mean_vx = 0.0;
    double mean_abs_e = 0.0;
    double std_abs_e = 0.0;
    double empirical_safety = 0.0;
    double feasible_fraction = 0.0;
    double mean_wall_time = 0.0;
    double mean_step_time = 0.0;
    double mean_search_time = 0.0;
};

inline constexpr double kInfeasibleBelow = 0.3;

struct CellSummary {
    Cell cell;
    std::vector<ControllerAggregate> controllers;
    /// Every controller's mean minimum safety probability is below 0.3.
    bool infeasible = false;
};

struct GridSummary {
    std::vector<CellSummary> cells;
    std::vector<RunOutcome> runs;
};

/// Mean over the successful outcomes of one (cell, controller).
ControllerAggregate aggregate(sim::ControllerKind kind, const std::vector<RunOutcome>& outcomes);
bool infeasible(const std::vector<ControllerAggregate>& aggs);

struct PoolOptions {
    int workers = 1;
    /// Called after each finished run (from worker threads, serialised).
    std::function<void(const RunOutcome&)> progress;
};

/// Runs every cell x controller x seed. Per-run logs go to
/// out_dir/runs/<cell>/<controller>/seed-<n>/, then summary.json and
/// tradeoff.csv. Failed runs are recorded and the batch continues.
/// An empty out_dir skips all writing.
GridSummary run_grid(const ExperimentGrid& grid, const sim::Scenario& base,
                     const std::vector<sim::ControllerKind>& controllers,
                     const std::filesystem::path& out_dir, const PoolOptions& pool = {});

io::Json to_json(const GridSummary& g);
std::string tradeoff_csv(const GridSummary& g);

struct HorizonRow {
    int horizon = 0;
    sim::ControllerKind controller = sim::ControllerKind::ApscMpc;
    int runs = 0;
    int failed = 0;
    double mean_psi = 0.0;
    double mean_min_psi = 0.0;
    double empirical_safety = 0.0;
    double mean_vx = 0.0;
    double mean_step_time = 0.0;    // full control decision [s]
    double mean_search_time = 0.0;  // MPC search only [s]
};

/// `base` at each MPC horizon, seeds base_seed .. base_seed + seeds - 1.
std::vector<HorizonRow> horizon_sweep(const sim::Scenario& base, const std::vector<int>& horizons,
                                      const std::vector<sim::ControllerKind>& controllers,
                                      int seeds, std::uint64_t base_seed,
                                      const std::filesystem::path& out_dir,
                                      const PoolOptions& pool = {});
std::string horizon_csv(const std::vector<HorizonRow>& rows);

struct CheckLine {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Directional checks on a horizon sweep: APSC-MPC at or above
/// 1 - eps - tolerance at every horizon and flat within `tolerance`;
/// AMPC at the shortest horizon below APSC-MPC by at least `gap`.
std::vector<CheckLine> check_horizon_sweep(const std::vector<HorizonRow>& rows, double epsilon,
                                           double tolerance = 0.05, double gap = 0.1);
/// APSC controllers at >= 1 - eps mean minimum safety in every feasible cell,
/// and strictly above every unconstrained controller in that cell.
std::vector<CheckLine> check_grid(const GridSummary& g, double epsilon);

struct PlotFiles {
    std::vector<std::filesystem::path> images;
    std::vector<std::filesystem::path> data;
};

/// Trajectory over the road with the e_max band and posterior curve per
/// log, plus one trade-off scatter; each image has a CSV with the plotted
/// points. Throws std::runtime_error naming every missing log file.
PlotFiles emit_plots(const std::vector<std::filesystem::path>& log_dirs,
                     const std::filesystem::path& out_dir);

}  // namespace apsc::experiment
