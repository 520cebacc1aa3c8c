// apsc: command line front end for episodes, sweeps, plots, replay and the service.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>

// Eigen (through the apsc headers) must precede httplib: <resolv.h> defines `_res`.
#include "apsc/experiment.hpp"
#include "apsc/io.hpp"
#include "apsc/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

namespace {

using namespace apsc;
namespace fs = std::filesystem;

struct Common {
    std::string scenario;
    std::string controller;
    int mc_samples = 0;
    int workers = 1;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-s,--scenario", c.scenario, "scenario JSON file (defaults built in)")
        ->check(CLI::ExistingFile);
    app->add_option("-c,--controller", c.controller, "nominal | apsc-filter | ampc | apsc-mpc");
    app->add_option("--mc-samples", c.mc_samples, "rollouts per safety probability estimate")
        ->check(CLI::PositiveNumber);
    app->add_option("--psc-workers", c.workers, "threads inside one certificate evaluation")
        ->check(CLI::PositiveNumber);
}

sim::Scenario scenario_of(const Common& c) {
    sim::Scenario s = c.scenario.empty() ? sim::Scenario{} : io::load_scenario(c.scenario);
    if (!c.controller.empty()) s.kind = sim::controller_from_string(c.controller);
    if (c.mc_samples > 0) s.psc.mc_samples = c.mc_samples;
    s.psc.workers = c.workers;
    s.validate();
    return s;
}

std::vector<sim::ControllerKind> kinds_of(const std::vector<std::string>& names) {
    std::vector<sim::ControllerKind> out;
    for (const auto& n : names) out.push_back(sim::controller_from_string(n));
    return out;
}

int report(const std::vector<experiment::CheckLine>& lines) {
    bool ok = true;
    for (const auto& l : lines) {
        std::printf("%s %s: %s\n", l.pass ? "PASS" : "FAIL", l.name.c_str(), l.detail.c_str());
        ok = ok && l.pass;
    }
    return ok ? 0 : 1;
}

void print_progress(const experiment::RunOutcome& o) {
    if (o.ok) {
        std::fprintf(stderr, "  %s seed %llu: mean psi %.3f min psi %.3f vx %.2f (%.1f s)\n",
                     std::string(sim::to_string(o.controller)).c_str(),
                     static_cast<unsigned long long>(o.seed), o.metrics.mean_psi, o.metrics.min_psi,
                     o.metrics.mean_vx, o.metrics.wall_time);
    } else {
        std::fprintf(stderr, "  %s seed %llu failed: %s\n",
                     std::string(sim::to_string(o.controller)).c_str(),
                     static_cast<unsigned long long>(o.seed), o.error.c_str());
    }
}

httplib::Server* g_server = nullptr;
void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive probabilistic safety certificates for a LuGre vehicle"};
    app.require_subcommand(1);

    // run
    Common run_c;
    std::uint64_t run_seed = 1;
    std::string run_out;
    bool run_check = false;
    auto* run = app.add_subcommand("run", "run one episode");
    add_common(run, run_c);
    run->add_option("--seed", run_seed, "episode seed");
    run->add_option("-o,--out", run_out, "write steps.csv and run.json here");
    run->add_flag("--check", run_check, "re-run and require byte-identical rows");

    // grid
    Common grid_c;
    experiment::ExperimentGrid grid;
    std::vector<std::string> grid_roads{"icy"};
    std::vector<std::string> grid_ctrls{"apsc-filter", "nominal"};
    std::string grid_out = "grid-out";
    int grid_pool = 1;
    bool grid_check = false;
    auto* g = app.add_subcommand("grid", "run a scenario grid");
    add_common(g, grid_c);
    g->add_option("--roads", grid_roads, "road classes")->delimiter(',');
    g->add_option("--prior-means", grid.prior_means)->delimiter(',');
    g->add_option("--prior-stds", grid.prior_stds)->delimiter(',');
    g->add_option("--measurement-stds", grid.measurement_stds)->delimiter(',');
    g->add_option("--e-max", grid.e_max)->delimiter(',');
    g->add_option("--horizons", grid.mpc_horizons)->delimiter(',');
    g->add_option("--runs", grid.runs_per_cell, "runs per cell")->check(CLI::PositiveNumber);
    g->add_option("--base-seed", grid.base_seed);
    g->add_option("--controllers", grid_ctrls)->delimiter(',');
    g->add_option("-o,--out", grid_out);
    g->add_option("-j,--jobs", grid_pool, "episodes in parallel")->check(CLI::PositiveNumber);
    g->add_flag("--check", grid_check, "apply the grid acceptance checks");

    // horizon-sweep
    Common hs_c;
    std::vector<int> hs_horizons{5, 10, 20};
    std::vector<std::string> hs_ctrls{"apsc-mpc", "ampc"};
    int hs_seeds = 20;
    std::uint64_t hs_base = 1;
    std::string hs_out;
    int hs_pool = 1;
    bool hs_check = false;
    auto* hs = app.add_subcommand("horizon-sweep", "safety and compute time against MPC horizon");
    add_common(hs, hs_c);
    hs->add_option("--horizons", hs_horizons)->delimiter(',');
    hs->add_option("--controllers", hs_ctrls)->delimiter(',');
    hs->add_option("--seeds", hs_seeds)->check(CLI::PositiveNumber);
    hs->add_option("--base-seed", hs_base);
    hs->add_option("-o,--out", hs_out);
    hs->add_option("-j,--jobs", hs_pool)->check(CLI::PositiveNumber);
    hs->add_flag("--check", hs_check, "apply the horizon acceptance checks");

    // plot
    std::vector<std::string> plot_logs;
    std::string plot_out = "plots";
    auto* plot = app.add_subcommand("plot", "SVG plots and data files from run logs");
    plot->add_option("logs", plot_logs, "run log directories")->required();
    plot->add_option("-o,--out", plot_out);

    // replay
    std::vector<std::string> replay_dirs;
    auto* rep = app.add_subcommand("replay", "re-run logged episodes and compare rows byte for byte");
    rep->add_option("logs", replay_dirs, "run log directories")->required();
    rep->add_flag("--check", "accepted for symmetry; replay always checks");

    // scenario
    Common sc_c;
    auto* sc = app.add_subcommand("scenario", "print the resolved scenario JSON and its hash");
    add_common(sc, sc_c);

    // serve
    std::string serve_data = "apsc-data";
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    std::string serve_scenario;
    std::string serve_backend = "mock";
    auto* serve = app.add_subcommand("serve", "HTTP session service");
    serve->add_option("--data-dir", serve_data);
    serve->add_option("--host", serve_host);
    serve->add_option("--port", serve_port);
    serve->add_option("-s,--scenario", serve_scenario)->check(CLI::ExistingFile);
    serve->add_option("--backend", serve_backend, "mock | http (APSC_LLM_* environment)")
        ->check(CLI::IsMember({"mock", "http"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto s = scenario_of(run_c);
            const auto log = io::run_hashed(s, run_seed);
            std::cout << io::to_json(log.metrics).dump(2) << "\n";
            if (!run_out.empty()) io::write_run_log(log, run_out);
            if (run_check) {
                const auto again = io::run_hashed(s, run_seed);
                const bool same = io::rows_to_csv(log.rows) == io::rows_to_csv(again.rows);
                return report({{"replay determinism", same, same ? "rows identical" : "rows differ"}});
            }
            return 0;
        }
        if (*g) {
            for (const auto& r : grid_roads) grid.roads.push_back(experiment::road_class(r));
            const auto s = scenario_of(grid_c);
            experiment::PoolOptions pool{grid_pool, print_progress};
            const auto summary = experiment::run_grid(grid, s, kinds_of(grid_ctrls), grid_out, pool);
            std::cout << experiment::tradeoff_csv(summary);
            if (grid_check) return report(experiment::check_grid(summary, s.psc.epsilon));
            return 0;
        }
        if (*hs) {
            const auto s = scenario_of(hs_c);
            experiment::PoolOptions pool{hs_pool, print_progress};
            const auto rows =
                experiment::horizon_sweep(s, hs_horizons, kinds_of(hs_ctrls), hs_seeds, hs_base, hs_out, pool);
            std::cout << experiment::horizon_csv(rows);
            if (hs_check) return report(experiment::check_horizon_sweep(rows, s.psc.epsilon));
            return 0;
        }
        if (*sc) {
            const auto s = scenario_of(sc_c);
            std::cout << io::to_json(s).dump(2) << "\n";
            std::cerr << "hash " << io::hash_hex(io::scenario_hash(s)) << "\n";
            return 0;
        }
        if (*plot) {
            std::vector<fs::path> dirs(plot_logs.begin(), plot_logs.end());
            const auto files = experiment::emit_plots(dirs, plot_out);
            for (const auto& f : files.images) std::cout << f.string() << "\n";
            for (const auto& f : files.data) std::cout << f.string() << "\n";
            return 0;
        }
        if (*rep) {
            std::vector<experiment::CheckLine> lines;
            for (const auto& d : replay_dirs) {
                const auto r = io::replay(d);
                lines.push_back({d + " hash", r.hash_matches,
                                 io::hash_hex(r.stored_hash) + " vs " + io::hash_hex(r.recomputed_hash)});
                lines.push_back({d + " rows", r.rows_identical,
                                 r.rows_identical ? "identical"
                                                  : "first difference at byte " +
                                                        std::to_string(r.first_difference)});
            }
            return report(lines);
        }
        if (*serve) {
            service::ServiceConfig cfg;
            cfg.data_dir = serve_data;
            if (!serve_scenario.empty()) cfg.base = io::load_scenario(serve_scenario);
            if (serve_backend == "http") {
                const auto hc = guidance::HttpBackendConfig::from_env();
                if (!hc) {
                    std::cerr << "APSC_LLM_ENDPOINT and APSC_LLM_MODEL must be set for --backend http\n";
                    return 2;
                }
                cfg.backend = [hc] { return std::make_unique<guidance::HttpChatBackend>(*hc); };
            }
            service::SessionService svc(cfg);
            httplib::Server server;
            svc.mount(server);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << serve_host << ":" << serve_port << "\n";
            if (!server.listen(serve_host, serve_port)) {
                std::cerr << "cannot listen on " << serve_host << ":" << serve_port << "\n";
                return 2;
            }
            return 0;
        }
    } catch (const io::ScenarioError& e) {
        std::cerr << "scenario error at " << e.path() << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
