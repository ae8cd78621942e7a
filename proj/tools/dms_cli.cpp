// Command-line front end: phantom synthesis, denoising with fixed or tuned
// hyperparameters, risk maps and the PSNR table harness.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "CLI11.hpp"
#include "json.hpp"

#include "dms/dms.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dms;

namespace {

constexpr const char* kVersion = "1.0.0";

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3 };

struct CommonOptions {
    std::string config_path;
    std::string out;
    std::size_t jobs = 1;
};

RunConfig load_base(const CommonOptions& common) {
    RunConfig cfg = common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
    if (!common.out.empty()) cfg.output = common.out;
    if (common.jobs != 0) cfg.jobs = common.jobs;
    return cfg;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << std::setw(2) << j << '\n';
}

template <class Writer>
void write_text(const fs::path& path, Writer&& writer) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    writer(os);
}

json solver_json(const SolverConfig& s) {
    json j{{"gamma", s.gamma}, {"eta", s.eta}, {"xi", s.xi}, {"max_iter", s.max_iter}};
    j["fixed_iter"] = s.fixed_iter ? json(*s.fixed_iter) : json(nullptr);
    return j;
}

json stein_json(const SteinConfig& s) {
    return {{"sigma", s.sigma},
            {"alpha", s.alpha},
            {"replicates", s.replicates},
            {"seed", s.seed},
            {"replay_run_length", s.replay_run_length}};
}

json optim_json(const OptimConfig& o) {
    return {{"t_max", o.t_max},
            {"grad_tol", o.grad_tol},
            {"kappa", o.kappa},
            {"memory", o.memory},
            {"shrink", o.line_search.shrink},
            {"sufficient_decrease", o.line_search.sufficient_decrease},
            {"max_trials", o.line_search.max_trials}};
}

std::string sigma_tag(double sigma) {
    std::ostringstream os;
    os << sigma;
    return os.str();
}

/// Observed image: read from disk, or a noisy phantom synthesized from the config.
struct Observation {
    Image z;
    std::optional<Image> truth;
};

Observation observe(const RunConfig& cfg, const std::string& truth_path) {
    Observation obs;
    if (!cfg.input.empty()) {
        obs.z = read_image(cfg.input);
        if (!truth_path.empty()) obs.truth = read_image(truth_path);
    } else {
        const Phantom ph = make_phantom(cfg.geometry, cfg.size, cfg.size);
        obs.z = add_noise(ph.clean, {cfg.noise_sigma, cfg.noise_seed});
        obs.truth = ph.clean;
    }
    if (obs.truth && !obs.truth->same_shape(obs.z)) throw ShapeError("ground truth does not match the input");
    return obs;
}

double resolve_sigma(const RunConfig& cfg, const Image& z) {
    if (cfg.sigma_policy == SigmaPolicy::Mad) {
        const SigmaEstimate est = estimate_sigma_mad(z);
        if (est.cropped) std::cerr << "warning: odd image size, MAD estimate uses a cropped grid\n";
        if (!(est.sigma > 0.0)) throw DegenerateInput("MAD noise estimate is zero");
        return est.sigma;
    }
    return cfg.stein.sigma;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const CommonOptions& common, const std::string& geometry, std::size_t size,
              const std::vector<double>& sigmas, std::uint64_t seed, const std::string& format) {
    RunConfig cfg = load_base(common);
    const Geometry geom = parse_geometry(geometry);
    if (format != "pgm" && format != "png") throw ConfigError("format must be pgm or png");
    const fs::path out = cfg.output;
    fs::create_directories(out);
    const Phantom ph = make_phantom(geom, size, size);
    const std::string ext = "." + format;

    json manifest{{"version", kVersion},
                  {"command", "synth"},
                  {"geometry", to_string(geom)},
                  {"size", size},
                  {"params",
                   {{"diamond_radius", ph.params.diamond_radius},
                    {"ellipse_a", ph.params.ellipse_a},
                    {"ellipse_b", ph.params.ellipse_b},
                    {"background", ph.params.background},
                    {"foreground", ph.params.foreground},
                    {"inner", ph.params.inner},
                    {"ramp", ph.params.ramp}}}};
    // 16 bits keep the smallest noise level well above the quantization step.
    write_image(out / ("clean" + ext), ph.clean, 16);
    manifest["clean"] = "clean" + ext;
    json noisy = json::array();
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
        const std::uint64_t s = seed + k;
        const std::string name = "noisy_sigma" + sigma_tag(sigmas[k]) + ext;
        write_image(out / name, add_noise(ph.clean, {sigmas[k], s}), 16);
        noisy.push_back({{"file", name}, {"sigma", sigmas[k]}, {"seed", s}});
    }
    manifest["noisy"] = noisy;
    write_text(out / "contours.csv", [&](std::ostream& os) { write_edge_csv(os, ph.contours); });
    manifest["contours"] = "contours.csv";
    write_json(out / "manifest.json", manifest);
    std::cout << "wrote " << sigmas.size() + 2 << " files and manifest.json to " << out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- denoise

int cmd_denoise(RunConfig cfg, const std::string& truth_path) {
    cfg.validate();
    const fs::path out = cfg.output;
    fs::create_directories(out);
    const Observation obs = observe(cfg, truth_path);
    const DifferenceOperator op(obs.z.height(), obs.z.width());

    json report{{"version", kVersion}, {"command", "denoise"}, {"solver", solver_json(cfg.solver)}};
    report["input"] = cfg.input.empty() ? json{{"geometry", to_string(cfg.geometry)},
                                               {"size", cfg.size},
                                               {"noise_sigma", cfg.noise_sigma},
                                               {"noise_seed", cfg.noise_seed}}
                                        : json(cfg.input);

    HyperParams theta;
    std::optional<double> sure;
    SteinConfig stein = cfg.stein;
    bool can_score = true;
    try {
        stein.sigma = resolve_sigma(cfg, obs.z);
    } catch (const DegenerateInput&) {
        if (!cfg.theta) throw;
        can_score = false;
    }
    report["sigma_policy"] = to_string(cfg.sigma_policy);
    if (cfg.theta) {
        theta = *cfg.theta;
    } else {
        const OptimResult tuned = sugar_descent(obs.z, stein, cfg.optim, cfg.solver, cfg.jobs);
        theta = tuned.theta;
        sure = tuned.trace.iterates.back().sure;
        report["termination"] = to_string(tuned.trace.termination);
        report["optim"] = optim_json(cfg.optim);
        write_text(out / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, tuned.trace); });
    }
    if (!sure && can_score) {
        const MonteCarloSet deltas = MonteCarloSet::draw(obs.z.height(), obs.z.width(), stein.replicates, stein.seed);
        sure = averaged_sure(obs.z, theta, stein, deltas, cfg.solver, op, cfg.jobs);
    }
    if (can_score) report["stein"] = stein_json(stein);

    const SolveResult result = slpam_solve(obs.z, theta, cfg.solver, op);
    write_image(out / "denoised.pgm", result.u);
    write_image(out / "contours.pgm", contour_overlay(result.e, 0.5));
    write_text(out / "edges.csv", [&](std::ostream& os) { write_edge_csv(os, result.e); });

    report["beta"] = theta.beta;
    report["lambda"] = theta.lambda;
    report["iterations"] = result.iterations;
    report["sure"] = sure ? json(*sure) : json(nullptr);
    if (obs.truth) {
        const double p = psnr(result.u, *obs.truth);
        report["psnr"] = std::isfinite(p) ? json(p) : json("inf");
        std::cout << "psnr " << p << " dB\n";
    }
    write_json(out / "report.json", report);
    std::cout << "beta " << theta.beta << " lambda " << theta.lambda << " iterations " << result.iterations << '\n';
    return kOk;
}

// ---------------------------------------------------------------- riskmap

int cmd_riskmap(RunConfig cfg, const std::string& objective_name, const std::string& truth_path) {
    cfg.validate();
    const fs::path out = cfg.output;
    fs::create_directories(out);
    const Observation obs = observe(cfg, truth_path);
    RiskObjective objective;
    if (objective_name == "sure") objective = RiskObjective::AveragedSure;
    else if (objective_name == "true") objective = RiskObjective::TrueQuadraticError;
    else throw ConfigError("objective must be sure or true");
    if (objective == RiskObjective::TrueQuadraticError && !obs.truth) {
        throw ConfigError("the true-error objective needs --ground-truth");
    }
    SteinConfig stein = cfg.stein;
    if (objective == RiskObjective::AveragedSure) stein.sigma = resolve_sigma(cfg, obs.z);

    const auto t0 = std::chrono::steady_clock::now();
    const RiskMap map = grid_search(obs.z, cfg.grid, objective, obs.truth ? &*obs.truth : nullptr, stein,
                                    cfg.solver, cfg.jobs);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(out / "riskmap.csv", [&](std::ostream& os) { write_risk_csv(os, map); });
    json report{{"version", kVersion},
                {"command", "riskmap"},
                {"objective", objective_name},
                {"argmin", {{"beta", map.argmin.beta}, {"lambda", map.argmin.lambda}}},
                {"min_value", map.min_value},
                {"seconds", seconds},
                {"grid",
                 {{"beta_min", cfg.grid.beta_min},
                  {"beta_max", cfg.grid.beta_max},
                  {"lambda_min", cfg.grid.lambda_min},
                  {"lambda_max", cfg.grid.lambda_max},
                  {"beta_count", cfg.grid.beta_count},
                  {"lambda_count", cfg.grid.lambda_count}}},
                {"solver", solver_json(cfg.solver)}};
    if (objective == RiskObjective::AveragedSure) report["stein"] = stein_json(stein);
    write_json(out / "argmin.json", report);
    std::cout << "argmin beta " << map.argmin.beta << " lambda " << map.argmin.lambda << " value " << map.min_value
              << '\n';
    return kOk;
}

// ---------------------------------------------------------------- reproduce-table

struct Cell {
    Geometry geometry;
    double sigma;
    SigmaPolicy policy;
    std::vector<double> psnrs;
    std::vector<std::string> failures;
};

int cmd_reproduce_table(RunConfig cfg, bool full, std::size_t realizations, std::size_t size) {
    if (full) {
        if (size == 0) size = 256;
        if (realizations == 0) realizations = 10;
    }
    if (size == 0) size = 64;
    if (realizations == 0) realizations = 5;
    cfg.size = size;
    cfg.validate();
    const fs::path out = cfg.output;
    fs::create_directories(out);

    const std::vector<double> sigmas{0.01, 0.05, 0.1, 0.2, 0.3};
    std::vector<Cell> cells;
    for (Geometry g : {Geometry::Diamond, Geometry::Ellipse}) {
        for (double s : sigmas) {
            for (SigmaPolicy p : {SigmaPolicy::Given, SigmaPolicy::Mad}) {
                cells.push_back({g, s, p, std::vector<double>(realizations, std::nan("")), {}});
            }
        }
    }
    std::mutex mutex;
    const std::size_t tasks = cells.size() * realizations;
    parallel_for(tasks, cfg.jobs, [&](std::size_t t) {
        Cell& cell = cells[t / realizations];
        const std::size_t r = t % realizations;
        try {
            const Phantom ph = make_phantom(cell.geometry, size, size);
            const Image z = add_noise(ph.clean, {cell.sigma, cfg.noise_seed + r});
            RunConfig local = cfg;
            local.sigma_policy = cell.policy;
            local.stein.sigma = cell.sigma;
            SteinConfig stein = local.stein;
            stein.sigma = resolve_sigma(local, z);
            stein.seed = cfg.stein.seed + r;
            const OptimResult tuned = sugar_descent(z, stein, cfg.optim, cfg.solver, 1);
            const DifferenceOperator op(size, size);
            cell.psnrs[r] = psnr(slpam_solve(z, tuned.theta, cfg.solver, op).u, ph.clean);
        } catch (const std::exception& ex) {
            std::lock_guard lock(mutex);
            cell.failures.push_back("realization " + std::to_string(r) + ": " + ex.what());
        }
    });

    json failures = json::array();
    write_text(out / "table.csv", [&](std::ostream& os) {
        os << "geometry,sigma,policy,mean_psnr,ci95_halfwidth,realizations,failures\n";
        os << std::setprecision(6);
        for (const Cell& cell : cells) {
            std::vector<double> ok;
            for (double v : cell.psnrs)
                if (std::isfinite(v)) ok.push_back(v);
            double mean = std::nan("");
            double half = std::nan("");
            if (!ok.empty()) {
                mean = 0.0;
                for (double v : ok) mean += v;
                mean /= static_cast<double>(ok.size());
            }
            if (ok.size() > 1) {
                double var = 0.0;
                for (double v : ok) var += (v - mean) * (v - mean);
                var /= static_cast<double>(ok.size() - 1);
                const boost::math::students_t dist(static_cast<double>(ok.size() - 1));
                half = boost::math::quantile(boost::math::complement(dist, 0.025)) *
                       std::sqrt(var / static_cast<double>(ok.size()));
            }
            os << to_string(cell.geometry) << ',' << cell.sigma << ',' << to_string(cell.policy) << ',' << mean
               << ',' << half << ',' << ok.size() << ',' << cell.failures.size() << '\n';
            for (const std::string& f : cell.failures) {
                failures.push_back({{"geometry", to_string(cell.geometry)},
                                    {"sigma", cell.sigma},
                                    {"policy", to_string(cell.policy)},
                                    {"error", f}});
            }
        }
    });
    json manifest{{"version", kVersion},
                  {"command", "reproduce-table"},
                  {"size", size},
                  {"realizations", realizations},
                  {"noise_seed", cfg.noise_seed},
                  {"stein", stein_json(cfg.stein)},
                  {"solver", solver_json(cfg.solver)},
                  {"optim", optim_json(cfg.optim)},
                  {"failures", failures}};
    write_json(out / "manifest.json", manifest);
    std::cout << "wrote " << (out / "table.csv").string() << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint denoising and contour detection with automatic hyperparameter tuning"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "Run configuration file");
        sub->add_option("--out", common.out, "Output directory");
        sub->add_option("--jobs", common.jobs, "Worker threads (0 = all cores)");
    };

    // Input options shared by denoise and riskmap.
    std::string input, truth, geometry_in, sigma_policy;
    std::optional<std::size_t> size_in;
    std::optional<double> noise_sigma, sigma, beta, lambda;
    std::optional<std::uint64_t> noise_seed, probe_seed;
    std::optional<std::size_t> replicates;
    auto add_input = [&](CLI::App* sub) {
        sub->add_option("--input", input, "Noisy image (.pgm or .png); omit to synthesize a phantom");
        sub->add_option("--ground-truth", truth, "Clean reference image for PSNR");
        sub->add_option("--geometry", geometry_in, "Phantom geometry when no input is given");
        sub->add_option("--size", size_in, "Phantom size when no input is given");
        sub->add_option("--noise-sigma", noise_sigma, "Noise added to the synthesized phantom");
        sub->add_option("--noise-seed", noise_seed, "Seed of the synthesized noise");
        sub->add_option("--sigma", sigma, "Noise level used by the risk estimator");
        sub->add_option("--sigma-policy", sigma_policy, "given or mad");
        sub->add_option("--replicates", replicates, "Monte-Carlo probes");
        sub->add_option("--probe-seed", probe_seed, "Seed of the Monte-Carlo probes");
    };
    auto merged = [&]() {
        RunConfig cfg = load_base(common);
        if (!input.empty()) cfg.input = input;
        if (!geometry_in.empty()) cfg.geometry = parse_geometry(geometry_in);
        if (size_in) cfg.size = *size_in;
        if (noise_sigma) cfg.noise_sigma = *noise_sigma;
        if (noise_seed) cfg.noise_seed = *noise_seed;
        if (!sigma_policy.empty()) cfg.sigma_policy = parse_sigma_policy(sigma_policy);
        if (sigma) cfg.stein.sigma = *sigma;
        else if (cfg.input.empty() && cfg.noise_sigma > 0.0 && common.config_path.empty()) cfg.stein.sigma = cfg.noise_sigma;
        if (replicates) cfg.stein.replicates = *replicates;
        if (probe_seed) cfg.stein.seed = *probe_seed;
        if (beta.has_value() != lambda.has_value()) throw ConfigError("--beta and --lambda go together");
        if (beta) cfg.theta = HyperParams(*beta, *lambda);
        return cfg;
    };

    auto* synth = app.add_subcommand("synth", "Write a phantom, noisy versions and its contour mask");
    add_common(synth);
    std::string synth_geometry = "diamond";
    std::size_t synth_size = 64;
    std::vector<double> synth_sigmas{0.01, 0.05, 0.1, 0.2, 0.3};
    std::uint64_t synth_seed = 1;
    std::string synth_format = "pgm";
    synth->add_option("--geometry", synth_geometry, "diamond or ellipse");
    synth->add_option("--size", synth_size, "Image side in pixels");
    synth->add_option("--sigmas", synth_sigmas, "Noise levels")->delimiter(',');
    synth->add_option("--seed", synth_seed, "Base noise seed");
    synth->add_option("--format", synth_format, "pgm or png");

    auto* denoise = app.add_subcommand("denoise", "Denoise with fixed or automatically tuned hyperparameters");
    add_common(denoise);
    add_input(denoise);
    denoise->add_option("--beta", beta, "Fixed smoothness weight");
    denoise->add_option("--lambda", lambda, "Fixed contour-length weight");

    auto* riskmap = app.add_subcommand("riskmap", "Evaluate a risk on a logarithmic hyperparameter grid");
    add_common(riskmap);
    add_input(riskmap);
    std::string objective = "sure";
    std::optional<std::size_t> grid_n;
    std::optional<double> bmin, bmax, lmin, lmax;
    riskmap->add_option("--objective", objective, "sure or true");
    riskmap->add_option("--grid-size", grid_n, "Nodes per axis");
    riskmap->add_option("--beta-min", bmin);
    riskmap->add_option("--beta-max", bmax);
    riskmap->add_option("--lambda-min", lmin);
    riskmap->add_option("--lambda-max", lmax);

    auto* table = app.add_subcommand("reproduce-table", "PSNR table over geometries, noise levels and sigma policies");
    add_common(table);
    bool full = false;
    std::size_t realizations = 0;
    std::size_t table_size = 0;
    table->add_flag("--full", full, "Full scale: 256x256, 10 realizations");
    table->add_option("--realizations", realizations, "Noise realizations per cell");
    table->add_option("--size", table_size, "Image side in pixels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(common, synth_geometry, synth_size, synth_sigmas, synth_seed, synth_format);
        }
        if (denoise->parsed()) return cmd_denoise(merged(), truth);
        if (riskmap->parsed()) {
            RunConfig cfg = merged();
            if (grid_n) cfg.grid.beta_count = cfg.grid.lambda_count = *grid_n;
            if (bmin) cfg.grid.beta_min = *bmin;
            if (bmax) cfg.grid.beta_max = *bmax;
            if (lmin) cfg.grid.lambda_min = *lmin;
            if (lmax) cfg.grid.lambda_max = *lmax;
            return cmd_riskmap(cfg, objective, truth);
        }
        if (table->parsed()) return cmd_reproduce_table(load_base(common), full, realizations, table_size);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const ReplicateError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const dms::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }
    return kOk;
}
