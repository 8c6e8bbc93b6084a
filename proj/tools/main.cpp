#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"

namespace fs = std::filesystem;
using namespace rsmp;
using rsmp::cli::Json;

namespace {

struct Output {
    fs::path dir;
    std::string hash;
    std::vector<std::string> files;

    void write(const std::string& name, const std::string& content) {
        fs::create_directories(dir);
        const fs::path target = dir / name;
        const fs::path tmp = dir / (name + ".tmp");
        {
            std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
            if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
            os << content;
            if (!os.flush()) throw std::runtime_error("failed writing " + tmp.string());
        }
        fs::rename(tmp, target);
        files.push_back(name);
    }

    void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }
};

std::vector<PathBundle> bundles_for(const cli::Experiment& ex, unsigned threads) {
    return generate_bundles(*ex.scenario, ex.paths, ex.seed, threads);
}

McOptions mc_options(const cli::Experiment& ex, unsigned threads) {
    McOptions opt;
    opt.threads = threads;
    opt.bsde = ex.bsde;
    opt.bsde.threads = threads;
    return opt;
}

int run_simulate(const cli::Experiment& ex, Output& out, unsigned threads) {
    const auto bundles = generate_bundles(*ex.scenario, ex.simulate_paths, ex.seed, threads);
    for (std::size_t k = 0; k < bundles.size(); ++k) {
        const auto traj = simulate_forward(ex.problem.forward, ex.control, bundles[k], ex.problem.x0);
        std::ostringstream os;
        write_trajectory_csv(os, traj);
        out.write("trajectory_" + std::to_string(k) + ".csv", os.str());
    }
    std::cout << "wrote " << bundles.size() << " trajectories\n";
    return 0;
}

int run_evaluate(const cli::Experiment& ex, Output& out, unsigned threads) {
    const auto bundles = bundles_for(ex, threads);
    const Estimate e = estimate_performance(ex.problem, ex.control, bundles, mc_options(ex, threads));
    out.write_json("evaluate.json", to_json("J", e, ex.seed, out.hash));
    std::cout << "J = " << format_number(e.mean) << " (se " << format_number(e.std_error) << ")\n";
    for (const auto& w : e.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

int run_verify(const cli::Experiment& ex, Output& out, unsigned threads) {
    if (!ex.lq) throw ConfigurationError("verify-stationarity needs preset application1");
    const auto bundles = bundles_for(ex, threads);
    auto opt = ex.verifier;
    opt.threads = threads;
    const auto report = stationarity_check(ex.problem, ex.control, lq_adjoint_source(*ex.lq), bundles, opt);
    Json j;
    j["verdict"] = report.pass() ? "PASS" : "FAIL";
    j["sigmas"] = report.sigmas;
    j["floor"] = opt.floor;
    j["worst_ratio"] = report.worst_ratio();
    j["seed"] = ex.seed;
    j["config_hash"] = out.hash;
    j["buckets"] = Json::array();
    for (const auto& b : report.buckets) {
        Json row;
        row["bucket"] = b.bucket;
        row["t_lo"] = b.t_lo;
        row["t_hi"] = b.t_hi;
        row["regime"] = b.regime;
        row["mean"] = b.estimate.mean;
        row["se"] = b.estimate.std_error;
        row["n"] = b.estimate.n_paths;
        row["max_abs"] = b.max_abs;
        row["stationary"] = b.stationary;
        j["buckets"].push_back(row);
    }
    out.write_json("stationarity.json", j);
    std::cout << (report.pass() ? "PASS" : "FAIL") << " stationarity (" << report.buckets.size()
              << " strata, worst |mean|/se = " << format_number(report.worst_ratio()) << ")\n";
    return report.pass() ? 0 : 1;
}

int run_sweep(const cli::Experiment& ex, Output& out, unsigned threads) {
    if (ex.deltas.empty()) throw ConfigurationError("config key 'sweep.deltas' must not be empty");
    const auto bundles = bundles_for(ex, threads);
    const auto opt = mc_options(ex, threads);
    std::ostringstream os;
    os << "delta,J,se\n";
    for (double delta : ex.deltas) {
        const Estimate e = estimate_performance(ex.problem, scale(ex.control, 1.0 + delta), bundles, opt);
        os << format_number(delta) << ',' << format_number(e.mean) << ',' << format_number(e.std_error) << '\n';
    }
    out.write("sweep.csv", os.str());
    std::cout << "swept " << ex.deltas.size() << " scalings\n";
    return 0;
}

int run_closed_form(const cli::Experiment& ex, Output& out) {
    if (!ex.lq) throw ConfigurationError("closed-form needs preset application1");
    const auto& spec = *ex.lq;
    const std::size_t n = ex.closed_form_points;
    std::ostringstream os;
    os << "t,regime,gamma,u_star\n";
    for (std::size_t k = 0; k < n; ++k) {
        const double t = n == 1 ? 0.0 : spec.horizon * static_cast<double>(k) / static_cast<double>(n - 1);
        for (int i = 1; i <= 2; ++i) {
            const Regime r{i};
            os << format_number(t) << ',' << i << ',' << format_number(gamma(t, r, spec)) << ','
               << format_number(optimal_control_lq(t, r, spec)) << '\n';
        }
    }
    out.write("closed_form.csv", os.str());
    std::cout << "tabulated " << n << " times\n";
    return 0;
}

int run_bsde(const cli::Experiment& ex, Output& out, unsigned threads) {
    if (!ex.problem.bsde) throw ConfigurationError("bsde-solve needs a model with a backward equation");
    const auto bundles = bundles_for(ex, threads);
    auto opt = ex.bsde;
    opt.threads = threads;
    std::vector<Trajectory> paths;
    paths.reserve(bundles.size());
    for (const auto& b : bundles) paths.push_back(simulate_forward(ex.problem.forward, ex.control, b, ex.problem.x0));
    const auto sol = solve_bsde(*ex.problem.bsde, paths, opt);

    Json j = to_json("Y0", sol.y0, ex.seed, out.hash);
    j["diagnostics"] = sol.diagnostics;
    out.write_json("bsde.json", j);

    std::ostringstream os;
    os << "t,X,regime,Y\n";
    const auto& grid = ex.scenario->grid;
    for (std::size_t r = 0; r < std::min(ex.surface_paths, paths.size()); ++r)
        for (std::size_t k = 0; k <= grid.steps(); ++k) {
            const double x = paths[r].values[k];
            const Regime i = paths[r].regimes[k];
            os << format_number(grid[k]) << ',' << format_number(x) << ',' << i.id << ','
               << format_number(sol.value(k, x, i)) << '\n';
        }
    out.write("bsde_surface.csv", os.str());
    std::cout << "Y(0) = " << format_number(sol.y0.mean) << " (se " << format_number(sol.y0.std_error) << ")\n";
    return 0;
}

Json read_config(const std::string& path) {
    if (path.empty()) return Json::object();
    std::ifstream is(path);
    if (!is) throw ConfigurationError("cannot read config file " + path);
    try {
        return Json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigurationError(std::string("config file is not valid JSON: ") + e.what());
    }
}

unsigned env_threads() {
    if (const char* v = std::getenv("RSMP_THREADS")) {
        try {
            const int n = std::stoi(v);
            if (n > 0) return static_cast<unsigned>(n);
        } catch (const std::exception&) {
        }
        throw ConfigurationError("RSMP_THREADS must be a positive integer");
    }
    return default_threads();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regime-switching jump-diffusion control: simulation, evaluation and optimality checks"};
    std::string command, config_path, out_dir = "out";
    std::optional<long long> paths, seed;
    std::optional<unsigned> threads;
    app.add_option("command", command, "simulate | evaluate | verify-stationarity | sweep | closed-form | bsde-solve")
        ->required()
        ->check(CLI::IsMember({"simulate", "evaluate", "verify-stationarity", "sweep", "closed-form", "bsde-solve"}));
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--paths", paths, "number of Monte Carlo paths (overrides mc.paths)");
    app.add_option("--seed", seed, "master seed (overrides mc.seed)");
    app.add_option("--threads", threads, "worker threads (default: RSMP_THREADS or hardware)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    Output out{out_dir, {}, {}};
    cli::Experiment ex;
    unsigned n_threads = 1;
    try {
        Json user = read_config(config_path);
        if (!user.is_object()) throw ConfigurationError("config file must hold a JSON object");
        if (paths) user["mc"]["paths"] = *paths;
        if (seed) user["mc"]["seed"] = *seed;
        const Json resolved = cli::resolve_config(user);
        ex = cli::build_experiment(resolved);
        n_threads = threads ? *threads : env_threads();
        if (n_threads == 0) throw ConfigurationError("--threads must be positive");
        out.hash = cli::config_hash(resolved);
    } catch (const ConfigurationError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    }

    try {
        out.write_json("config.resolved.json", ex.resolved);
        int code = 0;
        if (command == "simulate")
            code = run_simulate(ex, out, n_threads);
        else if (command == "evaluate")
            code = run_evaluate(ex, out, n_threads);
        else if (command == "verify-stationarity")
            code = run_verify(ex, out, n_threads);
        else if (command == "sweep")
            code = run_sweep(ex, out, n_threads);
        else if (command == "closed-form")
            code = run_closed_form(ex, out);
        else
            code = run_bsde(ex, out, n_threads);
        Json manifest;
        manifest["command"] = command;
        manifest["config_hash"] = out.hash;
        manifest["seed"] = ex.seed;
        manifest["files"] = out.files;
        out.write_json("manifest.json", manifest);
        return code;
    } catch (const ConfigurationError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
