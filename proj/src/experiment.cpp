#include "apsc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace apsc::experiment {

namespace fs = std::filesystem;

namespace {

struct NamedClass {
    const char* name;
    double lo, hi;
};
constexpr NamedClass kClasses[] = {
    {"icy", 0.2, 0.4}, {"icy-narrow", 0.3, 0.4}, {"wet", 0.4, 0.7},
    {"wet-narrow", 0.5, 0.6}, {"dry", 0.7, 0.9}, {"dry-narrow", 0.8, 0.9},
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Runs jobs [0, n) on `workers` threads.
void run_pool(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
    const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i = next++; i < n; i = next++) job(i);
    };
    if (w == 1) {
        loop();
        return;
    }
    std::vector<std::thread> threads;
    for (int t = 0; t < w; ++t) threads.emplace_back(loop);
    for (auto& t : threads) t.join();
}

struct Job {
    std::size_t cell;
    sim::ControllerKind kind;
    std::uint64_t seed;
    sim::Scenario scenario;
    fs::path dir;
};

std::vector<RunOutcome> execute(const std::vector<Job>& jobs, const PoolOptions& pool) {
    std::vector<RunOutcome> out(jobs.size());
    std::mutex progress_mu;
    run_pool(jobs.size(), pool.workers, [&](std::size_t i) {
        const Job& j = jobs[i];
        RunOutcome& o = out[i];
        o.cell = j.cell;
        o.controller = j.kind;
        o.seed = j.seed;
        o.dir = j.dir;
        try {
            const sim::RunLog log = io::run_hashed(j.scenario, j.seed);
            o.metrics = log.metrics;
            if (!j.dir.empty()) io::write_run_log(log, j.dir);
            o.ok = true;
        } catch (const std::exception& e) {
            o.error = e.what();
        }
        if (pool.progress) {
            std::lock_guard lock(progress_mu);
            pool.progress(o);
        }
    });
    return out;
}

}  // namespace

RoadClass road_class(const std::string& name) {
    for (const auto& c : kClasses) {
        if (name == c.name) return {c.name, {c.lo, c.hi}};
    }
    throw std::invalid_argument("unknown road class '" + name + "'");
}

std::vector<std::string> road_class_names() {
    std::vector<std::string> names;
    for (const auto& c : kClasses) names.emplace_back(c.name);
    return names;
}

std::string Cell::id() const {
    return road.name + "_m" + fmt(prior_mean) + "_s" + fmt(prior_std) + "_b" + fmt(measurement_std) +
           "_e" + fmt(e_max) + "_T" + std::to_string(mpc_horizon);
}

void ExperimentGrid::validate() const {
    if (roads.empty() || prior_means.empty() || prior_stds.empty() || measurement_stds.empty() ||
        e_max.empty() || mpc_horizons.empty()) {
        throw std::invalid_argument("experiment grid has an empty axis");
    }
    if (runs_per_cell < 1) throw std::invalid_argument("runs_per_cell must be >= 1");
    for (const auto& r : roads) {
        if (!(r.range.lo > 0.0 && r.range.lo <= r.range.hi)) {
            throw std::invalid_argument("road class '" + r.name + "' has a bad friction range");
        }
    }
    auto positive = [](const std::vector<double>& v, const char* what) {
        for (double x : v) {
            if (!(x > 0.0) || !std::isfinite(x)) {
                throw std::invalid_argument(std::string(what) + " values must be positive");
            }
        }
    };
    positive(prior_means, "prior mean");
    positive(prior_stds, "prior std");
    positive(measurement_stds, "measurement std");
    positive(e_max, "e_max");
    for (int t : mpc_horizons) {
        if (t < 1) throw std::invalid_argument("MPC horizons must be >= 1");
    }
}

std::vector<Cell> ExperimentGrid::cells() const {
    validate();
    std::vector<Cell> out;
    for (const auto& r : roads)
        for (double m : prior_means)
            for (double s : prior_stds)
                for (double b : measurement_stds)
                    for (double e : e_max)
                        for (int t : mpc_horizons) out.push_back({r, m, s, b, e, t});
    return out;
}

sim::Scenario apply_cell(const sim::Scenario& base, const Cell& cell, sim::ControllerKind kind) {
    sim::Scenario s = base;
    s.name = cell.id();
    s.friction = cell.road.range;
    s.prior = belief::GaussianBelief::from_std(cell.prior_mean, cell.prior_std);
    s.sensor.noise_variance = cell.measurement_std * cell.measurement_std;
    s.estimator.noise_variance = s.sensor.noise_variance;
    s.safe_set.e_max = cell.e_max;
    s.mpc.horizon = cell.mpc_horizon;
    s.kind = kind;
    return s;
}

ControllerAggregate aggregate(sim::ControllerKind kind, const std::vector<RunOutcome>& outcomes) {
    ControllerAggregate a;
    a.controller = kind;
    std::vector<double> min_psi, psi, vx, e, e_std, safe, wall, step, search;
    int feasible = 0;
    for (const auto& o : outcomes) {
        if (o.controller != kind) continue;
        if (!o.ok) {
            ++a.failed;
            continue;
        }
        ++a.runs;
        const auto& m = o.metrics;
        min_psi.push_back(m.min_psi);
        psi.push_back(m.mean_psi);
        vx.push_back(m.mean_vx);
        e.push_back(m.mean_abs_e);
        e_std.push_back(m.std_abs_e);
        safe.push_back(m.empirical_safety);
        wall.push_back(m.wall_time);
        step.push_back(m.mean_step_time);
        search.push_back(m.mean_search_time);
        if (m.feasible) ++feasible;
    }
    a.mean_min_psi = mean_of(min_psi);
    a.mean_psi = mean_of(psi);
    a.mean_vx = mean_of(vx);
    a.mean_abs_e = mean_of(e);
    a.std_abs_e = mean_of(e_std);
    a.empirical_safety = mean_of(safe);
    a.feasible_fraction = a.runs ? static_cast<double>(feasible) / a.runs : 0.0;
    a.mean_wall_time = mean_of(wall);
    a.mean_step_time = mean_of(step);
    a.mean_search_time = mean_of(search);
    return a;
}

bool infeasible(const std::vector<ControllerAggregate>& aggs) {
    if (aggs.empty()) return false;
    return std::all_of(aggs.begin(), aggs.end(),
                       [](const ControllerAggregate& a) { return a.mean_min_psi < kInfeasibleBelow; });
}

GridSummary run_grid(const ExperimentGrid& grid, const sim::Scenario& base,
                     const std::vector<sim::ControllerKind>& controllers, const fs::path& out_dir,
                     const PoolOptions& pool) {
    const auto cells = grid.cells();
    if (controllers.empty()) throw std::invalid_argument("no controllers given");

    std::vector<Job> jobs;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (auto kind : controllers) {
            const sim::Scenario s = apply_cell(base, cells[c], kind);
            s.validate();
            for (int i = 0; i < grid.runs_per_cell; ++i) {
                const std::uint64_t seed = grid.base_seed + static_cast<std::uint64_t>(i);
                fs::path dir;
                if (!out_dir.empty()) {
                    dir = out_dir / "runs" / cells[c].id() / std::string(sim::to_string(kind)) /
                          ("seed-" + std::to_string(seed));
                }
                jobs.push_back({c, kind, seed, s, dir});
            }
        }
    }

    GridSummary g;
    g.runs = execute(jobs, pool);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        std::vector<RunOutcome> mine;
        for (const auto& o : g.runs) {
            if (o.cell == c) mine.push_back(o);
        }
        CellSummary cs;
        cs.cell = cells[c];
        for (auto kind : controllers) cs.controllers.push_back(aggregate(kind, mine));
        cs.infeasible = infeasible(cs.controllers);
        g.cells.push_back(std::move(cs));
    }
    if (!out_dir.empty()) {
        io::write_file(out_dir / "summary.json", to_json(g).dump(2) + "\n");
        io::write_file(out_dir / "tradeoff.csv", tradeoff_csv(g));
    }
    return g;
}

io::Json to_json(const GridSummary& g) {
    io::Json cells = io::Json::array();
    for (const auto& cs : g.cells) {
        io::Json ctrls = io::Json::array();
        for (const auto& a : cs.controllers) {
            ctrls.push_back({
                {"controller", std::string(sim::to_string(a.controller))},
                {"runs", a.runs},
                {"failed", a.failed},
                {"mean_min_psi", a.mean_min_psi},
                {"mean_psi", a.mean_psi},
                {"mean_vx", a.mean_vx},
                {"mean_abs_e", a.mean_abs_e},
                {"std_abs_e", a.std_abs_e},
                {"empirical_safety", a.empirical_safety},
                {"feasible_fraction", a.feasible_fraction},
                {"mean_wall_time", a.mean_wall_time},
                {"mean_step_time", a.mean_step_time},
                {"mean_search_time", a.mean_search_time},
            });
        }
        const Cell& c = cs.cell;
        cells.push_back({
            {"id", c.id()},
            {"road", c.road.name},
            {"friction", {c.road.range.lo, c.road.range.hi}},
            {"prior_mean", c.prior_mean},
            {"prior_std", c.prior_std},
            {"measurement_std", c.measurement_std},
            {"e_max", c.e_max},
            {"mpc_horizon", c.mpc_horizon},
            {"infeasible", cs.infeasible},
            {"controllers", ctrls},
        });
    }
    io::Json failures = io::Json::array();
    for (const auto& o : g.runs) {
        if (o.ok) continue;
        failures.push_back({{"cell", g.cells.at(o.cell).cell.id()},
                            {"controller", std::string(sim::to_string(o.controller))},
                            {"seed", o.seed},
                            {"error", o.error}});
    }
    return {{"cells", cells}, {"failures", failures}};
}

std::string tradeoff_csv(const GridSummary& g) {
    std::string out = "cell,controller,mean_min_psi,mean_vx,infeasible\n";
    for (const auto& cs : g.cells) {
        for (const auto& a : cs.controllers) {
            out += cs.cell.id() + "," + std::string(sim::to_string(a.controller)) + "," +
                   full(a.mean_min_psi) + "," + full(a.mean_vx) + "," +
                   (cs.infeasible ? "1" : "0") + "\n";
        }
    }
    return out;
}

std::vector<HorizonRow> horizon_sweep(const sim::Scenario& base, const std::vector<int>& horizons,
                                      const std::vector<sim::ControllerKind>& controllers, int seeds,
                                      std::uint64_t base_seed, const fs::path& out_dir,
                                      const PoolOptions& pool) {
    if (horizons.empty()) return {};
    if (seeds < 1) throw std::invalid_argument("seeds must be >= 1");
    std::vector<Job> jobs;
    std::vector<std::pair<int, sim::ControllerKind>> keys;
    for (int t : horizons) {
        if (t < 1) throw std::invalid_argument("MPC horizons must be >= 1");
        for (auto kind : controllers) {
            sim::Scenario s = base;
            s.mpc.horizon = t;
            s.kind = kind;
            s.validate();
            const std::size_t key = keys.size();
            keys.emplace_back(t, kind);
            for (int i = 0; i < seeds; ++i) {
                const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
                fs::path dir;
                if (!out_dir.empty()) {
                    dir = out_dir / "runs" / ("T" + std::to_string(t)) /
                          std::string(sim::to_string(kind)) / ("seed-" + std::to_string(seed));
                }
                jobs.push_back({key, kind, seed, s, dir});
            }
        }
    }
    const auto outcomes = execute(jobs, pool);

    std::vector<HorizonRow> rows;
    for (std::size_t k = 0; k < keys.size(); ++k) {
        std::vector<RunOutcome> mine;
        for (const auto& o : outcomes) {
            if (o.cell == k) mine.push_back(o);
        }
        const auto a = aggregate(keys[k].second, mine);
        HorizonRow r;
        r.horizon = keys[k].first;
        r.controller = keys[k].second;
        r.runs = a.runs;
        r.failed = a.failed;
        r.mean_psi = a.mean_psi;
        r.mean_min_psi = a.mean_min_psi;
        r.empirical_safety = a.empirical_safety;
        r.mean_vx = a.mean_vx;
        r.mean_step_time = a.mean_step_time;
        r.mean_search_time = a.mean_search_time;
        rows.push_back(r);
    }
    if (!out_dir.empty()) io::write_file(out_dir / "horizon.csv", horizon_csv(rows));
    return rows;
}

std::string horizon_csv(const std::vector<HorizonRow>& rows) {
    std::string out =
        "horizon,controller,runs,failed,mean_psi,mean_min_psi,empirical_safety,mean_vx,"
        "mean_step_time,mean_search_time\n";
    for (const auto& r : rows) {
        out += std::to_string(r.horizon) + "," + std::string(sim::to_string(r.controller)) + "," +
               std::to_string(r.runs) + "," + std::to_string(r.failed) + "," + full(r.mean_psi) +
               "," + full(r.mean_min_psi) + "," + full(r.empirical_safety) + "," +
               full(r.mean_vx) + "," + full(r.mean_step_time) + "," + full(r.mean_search_time) +
               "\n";
    }
    return out;
}

std::vector<CheckLine> check_horizon_sweep(const std::vector<HorizonRow>& rows, double epsilon,
                                           double tolerance, double gap) {
    std::vector<CheckLine> out;
    std::map<int, double> apsc, ampc;
    for (const auto& r : rows) {
        if (r.controller == sim::ControllerKind::ApscMpc) apsc[r.horizon] = r.mean_psi;
        if (r.controller == sim::ControllerKind::Ampc) ampc[r.horizon] = r.mean_psi;
    }
    if (apsc.empty()) {
        out.push_back({"apsc-mpc present", false, "no apsc-mpc rows"});
        return out;
    }
    const double floor = 1.0 - epsilon - tolerance;
    double lo = 1.0, hi = 0.0;
    for (const auto& [t, v] : apsc) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        out.push_back({"apsc-mpc T=" + std::to_string(t) + " above threshold", v >= floor,
                       "mean psi " + fmt(v) + " vs " + fmt(floor)});
    }
    out.push_back({"apsc-mpc flat across horizons", hi - lo <= tolerance,
                   "spread " + fmt(hi - lo) + " vs " + fmt(tolerance)});
    if (!ampc.empty()) {
        const int t = ampc.begin()->first;
        if (apsc.count(t)) {
            const double d = apsc[t] - ampc[t];
            out.push_back({"ampc T=" + std::to_string(t) + " below apsc-mpc", d >= gap,
                           "gap " + fmt(d) + " vs " + fmt(gap)});
        }
    }
    return out;
}

std::vector<CheckLine> check_grid(const GridSummary& g, double epsilon) {
    std::vector<CheckLine> out;
    auto constrained = [](sim::ControllerKind k) {
        return k == sim::ControllerKind::ApscFilter || k == sim::ControllerKind::ApscMpc;
    };
    for (const auto& cs : g.cells) {
        if (cs.infeasible) continue;
        for (const auto& a : cs.controllers) {
            if (!constrained(a.controller)) continue;
            const std::string who = cs.cell.id() + " " + std::string(sim::to_string(a.controller));
            out.push_back({who + " min safety", a.mean_min_psi >= 1.0 - epsilon,
                           "mean min psi " + fmt(a.mean_min_psi)});
            for (const auto& b : cs.controllers) {
                if (constrained(b.controller)) continue;
                out.push_back({who + " above " + std::string(sim::to_string(b.controller)),
                               a.mean_min_psi > b.mean_min_psi,
                               fmt(a.mean_min_psi) + " vs " + fmt(b.mean_min_psi)});
            }
        }
    }
    return out;
}

// --- plots ---------------------------------------------------------------------

namespace {

struct Box {
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
};

Box bounds_of(const std::vector<std::pair<double, double>>& pts) {
    Box b{1e300, -1e300, 1e300, -1e300};
    for (auto [x, y] : pts) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        b.x0 = std::min(b.x0, x);
        b.x1 = std::max(b.x1, x);
        b.y0 = std::min(b.y0, y);
        b.y1 = std::max(b.y1, y);
    }
    if (b.x0 > b.x1) return {};
    if (b.x1 - b.x0 < 1e-9) { b.x0 -= 0.5; b.x1 += 0.5; }
    if (b.y1 - b.y0 < 1e-9) { b.y0 -= 0.5; b.y1 += 0.5; }
    return b;
}

// Minimal SVG canvas with a data-to-pixel map.
class Svg {
public:
    Svg(Box b, bool equal_aspect, std::string title) : box_(b) {
        const double w = kW - 2 * kPad, h = kH - 2 * kPad;
        sx_ = w / (b.x1 - b.x0);
        sy_ = h / (b.y1 - b.y0);
        if (equal_aspect) sx_ = sy_ = std::min(sx_, sy_);
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
             << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
             << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
             << "<text x=\"" << kPad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
             << escape(title) << "</text>\n";
    }

    void axes(const std::string& xlabel, const std::string& ylabel) {
        out_ << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kW - 2 * kPad
             << "\" height=\"" << kH - 2 * kPad << "\" fill=\"none\" stroke=\"#888\"/>\n";
        label(kW / 2.0, kH - 12, xlabel, "middle");
        out_ << "<text x=\"14\" y=\"" << kH / 2.0 << "\" font-family=\"sans-serif\" font-size=\"12\" "
             << "transform=\"rotate(-90 14 " << kH / 2.0 << ")\" text-anchor=\"middle\">"
             << escape(ylabel) << "</text>\n";
        label(kPad, kH - kPad + 16, fmt(box_.x0), "start");
        label(kW - kPad, kH - kPad + 16, fmt(box_.x1), "end");
        label(kPad - 4, kH - kPad, fmt(box_.y0), "end");
        label(kPad - 4, kPad + 10, fmt(box_.y1), "end");
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const char* colour,
                  double width = 1.5, const char* dash = nullptr) {
        out_ << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width << "\"";
        if (dash) out_ << " stroke-dasharray=\"" << dash << "\"";
        out_ << " points=\"";
        for (auto [x, y] : pts) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            out_ << px(x) << "," << py(y) << " ";
        }
        out_ << "\"/>\n";
    }

    void circle(double x, double y, const char* colour) {
        out_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"4\" fill=\"" << colour
             << "\"/>\n";
    }

    void label(double x, double y, const std::string& text, const char* anchor) {
        out_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\"12\" "
             << "text-anchor=\"" << anchor << "\">" << escape(text) << "</text>\n";
    }

    void legend(double y, const std::string& text, const char* colour) {
        out_ << "<circle cx=\"" << kW - kPad - 110 << "\" cy=\"" << y - 4 << "\" r=\"4\" fill=\""
             << colour << "\"/>\n";
        label(kW - kPad - 100, y, text, "start");
    }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    static constexpr double kW = 800, kH = 600, kPad = 60;

    double px(double x) const { return kPad + (x - box_.x0) * sx_; }
    double py(double y) const { return kH - kPad - (y - box_.y0) * sy_; }

    static std::string escape(const std::string& s) {
        std::string r;
        for (char c : s) {
            if (c == '<') r += "&lt;";
            else if (c == '>') r += "&gt;";
            else if (c == '&') r += "&amp;";
            else r += c;
        }
        return r;
    }

    Box box_;
    double sx_ = 1, sy_ = 1;
    std::ostringstream out_;
};

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

const char* colour_of(sim::ControllerKind k) { return kPalette[static_cast<int>(k) % 6]; }

}  // namespace

PlotFiles emit_plots(const std::vector<fs::path>& log_dirs, const fs::path& out_dir) {
    if (log_dirs.empty()) throw std::runtime_error("no run logs given");
    std::vector<std::string> missing;
    for (const auto& d : log_dirs) {
        for (const char* f : {"run.json", "steps.csv"}) {
            if (!fs::exists(d / f)) missing.push_back((d / f).string());
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing run logs:";
        for (const auto& m : missing) msg += " " + m;
        throw std::runtime_error(msg);
    }

    PlotFiles files;
    std::string tradeoff = "run,controller,mean_vx,min_psi,mean_psi\n";
    std::vector<std::pair<sim::ControllerKind, std::pair<double, double>>> scatter;

    for (std::size_t i = 0; i < log_dirs.size(); ++i) {
        const sim::RunLog log = io::read_run_log(log_dirs[i]);
        const std::string tag = "run" + std::to_string(i);
        const auto& road = log.scenario.road;
        const double e_max = log.scenario.safe_set.e_max;

        // Trajectory over road geometry.
        std::string data = "step,station,lateral_error,x,y\n";
        std::vector<std::pair<double, double>> path, centre, left, right;
        for (const auto& r : log.rows) {
            const auto p = road.to_global(r.state.station, r.state.lateral_error);
            path.emplace_back(p.x, p.y);
            data += std::to_string(r.step) + "," + full(r.state.station) + "," +
                    full(r.state.lateral_error) + "," + full(p.x) + "," + full(p.y) + "\n";
        }
        for (double s = 0.0; s <= road.length() + 1e-9; s += 1.0) {
            const auto c = road.to_global(s, 0.0);
            const auto l = road.to_global(s, e_max);
            const auto r = road.to_global(s, -e_max);
            centre.emplace_back(c.x, c.y);
            left.emplace_back(l.x, l.y);
            right.emplace_back(r.x, r.y);
        }
        std::vector<std::pair<double, double>> all = path;
        all.insert(all.end(), left.begin(), left.end());
        all.insert(all.end(), right.begin(), right.end());
        Svg traj(bounds_of(all), true,
                 tag + " " + std::string(sim::to_string(log.scenario.kind)) + " trajectory, e_max " +
                     fmt(e_max) + " m");
        traj.axes("x [m]", "y [m]");
        traj.polyline(left, "#aaa", 1.0, "6 4");
        traj.polyline(right, "#aaa", 1.0, "6 4");
        traj.polyline(centre, "#555", 1.0, "2 3");
        traj.polyline(path, colour_of(log.scenario.kind), 2.0);
        const fs::path traj_svg = out_dir / (tag + "_trajectory.svg");
        const fs::path traj_csv = out_dir / (tag + "_trajectory.csv");
        io::write_file(traj_svg, traj.finish());
        io::write_file(traj_csv, data);
        files.images.push_back(traj_svg);
        files.data.push_back(traj_csv);

        // Belief over time.
        std::string pdata = "step,time,mean,std\n";
        std::vector<std::pair<double, double>> mean, upper, lower;
        for (const auto& r : log.rows) {
            const double sd = std::sqrt(r.belief_var);
            mean.emplace_back(r.time, r.belief_mean);
            upper.emplace_back(r.time, r.belief_mean + sd);
            lower.emplace_back(r.time, r.belief_mean - sd);
            pdata += std::to_string(r.step) + "," + full(r.time) + "," + full(r.belief_mean) + "," +
                     full(sd) + "\n";
        }
        std::vector<std::pair<double, double>> pall = upper;
        pall.insert(pall.end(), lower.begin(), lower.end());
        pall.emplace_back(0.0, log.metrics.true_friction);
        Svg post(bounds_of(pall), false,
                 tag + " friction belief (true " + fmt(log.metrics.true_friction) + ")");
        post.axes("time [s]", "friction");
        if (!log.rows.empty()) {
            post.polyline({{log.rows.front().time, log.metrics.true_friction},
                           {log.rows.back().time, log.metrics.true_friction}},
                          "#2ca02c", 1.0, "4 4");
        }
        post.polyline(upper, "#9ecae1", 1.0);
        post.polyline(lower, "#9ecae1", 1.0);
        post.polyline(mean, "#1f77b4", 2.0);
        const fs::path post_svg = out_dir / (tag + "_posterior.svg");
        const fs::path post_csv = out_dir / (tag + "_posterior.csv");
        io::write_file(post_svg, post.finish());
        io::write_file(post_csv, pdata);
        files.images.push_back(post_svg);
        files.data.push_back(post_csv);

        scatter.push_back({log.scenario.kind, {log.metrics.mean_vx, log.metrics.min_psi}});
        tradeoff += tag + "," + std::string(sim::to_string(log.scenario.kind)) + "," +
                    full(log.metrics.mean_vx) + "," + full(log.metrics.min_psi) + "," +
                    full(log.metrics.mean_psi) + "\n";
    }

    std::vector<std::pair<double, double>> pts;
    for (const auto& s : scatter) pts.push_back(s.second);
    pts.emplace_back(pts.front().first, 0.0);
    pts.emplace_back(pts.front().first, 1.0);
    Svg sc(bounds_of(pts), false, "safety vs efficiency");
    sc.axes("mean v_x [m/s]", "min safety probability");
    for (const auto& [kind, p] : scatter) sc.circle(p.first, p.second, colour_of(kind));
    double ly = 80;
    for (auto k : {sim::ControllerKind::Nominal, sim::ControllerKind::ApscFilter,
                   sim::ControllerKind::Ampc, sim::ControllerKind::ApscMpc}) {
        sc.legend(ly, std::string(sim::to_string(k)), colour_of(k));
        ly += 16;
    }
    const fs::path sc_svg = out_dir / "tradeoff.svg";
    const fs::path sc_csv = out_dir / "tradeoff.csv";
    io::write_file(sc_svg, sc.finish());
    io::write_file(sc_csv, tradeoff);
    files.images.push_back(sc_svg);
    files.data.push_back(sc_csv);
    return files;
}

}  // namespace apsc::experiment
