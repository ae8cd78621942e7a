#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "dms/error.hpp"
#include "dms/hyperopt.hpp"
#include "dms/phantoms.hpp"
#include "dms/solver.hpp"
#include "dms/stein.hpp"

namespace dms {

enum class SigmaPolicy { Given, Mad };

inline SigmaPolicy parse_sigma_policy(const std::string& s) {
    if (s == "given") return SigmaPolicy::Given;
    if (s == "mad") return SigmaPolicy::Mad;
    throw ConfigError("unknown sigma policy '" + s + "' (expected given or mad)");
}

inline std::string to_string(SigmaPolicy p) { return p == SigmaPolicy::Given ? "given" : "mad"; }

/// Declarative description of one run. Every field has a default.
struct RunConfig {
    // [run]
    std::string input;                   // image path; empty means synthesize a phantom
    Geometry geometry = Geometry::Diamond;
    std::size_t size = 64;
    double noise_sigma = 0.05;           // noise added to synthesized phantoms
    std::uint64_t noise_seed = 1;
    SigmaPolicy sigma_policy = SigmaPolicy::Given;
    std::optional<HyperParams> theta;    // fixed hyperparameters; absent means auto-tune
    std::string output = "out";
    std::size_t jobs = 1;

    SolverConfig solver;
    SteinConfig stein;
    OptimConfig optim;
    LogGrid grid;

    void validate() const {
        solver.validate();
        stein.validate();
        optim.validate();
        grid.validate();
        if (size < 16) throw ConfigError("run size must be >= 16");
        if (noise_sigma < 0.0) throw ConfigError("run noise_sigma must be >= 0");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) throw ConfigError("invalid value '" + text + "' for " + key);
    return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("invalid value '" + text + "' for " + key);
}

} // namespace detail

/// Parses `[section]` headers and `key = value` lines; '#' and ';' start
/// comments. Unknown sections or keys are rejected.
inline RunConfig parse_run_config(std::istream& in) {
    using detail::parse_number;
    using detail::parse_bool;
    RunConfig cfg;
    std::optional<double> beta;
    std::optional<double> lambda;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        const std::string text = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
            section = detail::trim(std::string_view(text).substr(1, text.size() - 2));
            if (section != "run" && section != "solver" && section != "stein" && section != "optim" &&
                section != "grid") {
                throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside a section");
        const std::string key = detail::trim(std::string_view(text).substr(0, eq));
        const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
        const std::string name = section + "." + key;

        if (name == "run.input") cfg.input = value;
        else if (name == "run.geometry") cfg.geometry = parse_geometry(value);
        else if (name == "run.size") cfg.size = parse_number<std::size_t>(name, value);
        else if (name == "run.noise_sigma") cfg.noise_sigma = parse_number<double>(name, value);
        else if (name == "run.noise_seed") cfg.noise_seed = parse_number<std::uint64_t>(name, value);
        else if (name == "run.sigma_policy") cfg.sigma_policy = parse_sigma_policy(value);
        else if (name == "run.beta") beta = parse_number<double>(name, value);
        else if (name == "run.lambda") lambda = parse_number<double>(name, value);
        else if (name == "run.output") cfg.output = value;
        else if (name == "run.jobs") cfg.jobs = parse_number<std::size_t>(name, value);
        else if (name == "solver.gamma") cfg.solver.gamma = parse_number<double>(name, value);
        else if (name == "solver.eta") cfg.solver.eta = parse_number<double>(name, value);
        else if (name == "solver.xi") cfg.solver.xi = parse_number<double>(name, value);
        else if (name == "solver.max_iter") cfg.solver.max_iter = parse_number<std::size_t>(name, value);
        else if (name == "solver.fixed_iter") cfg.solver.fixed_iter = parse_number<std::size_t>(name, value);
        else if (name == "stein.sigma") cfg.stein.sigma = parse_number<double>(name, value);
        else if (name == "stein.alpha") cfg.stein.alpha = parse_number<double>(name, value);
        else if (name == "stein.replicates") cfg.stein.replicates = parse_number<std::size_t>(name, value);
        else if (name == "stein.seed") cfg.stein.seed = parse_number<std::uint64_t>(name, value);
        else if (name == "stein.replay_run_length") cfg.stein.replay_run_length = parse_bool(name, value);
        else if (name == "optim.t_max") cfg.optim.t_max = parse_number<std::size_t>(name, value);
        else if (name == "optim.grad_tol") cfg.optim.grad_tol = parse_number<double>(name, value);
        else if (name == "optim.kappa") cfg.optim.kappa = parse_number<double>(name, value);
        else if (name == "optim.memory") cfg.optim.memory = parse_number<std::size_t>(name, value);
        else if (name == "optim.beta_min") cfg.optim.beta_min = parse_number<double>(name, value);
        else if (name == "optim.lambda_min") cfg.optim.lambda_min = parse_number<double>(name, value);
        else if (name == "optim.shrink") cfg.optim.line_search.shrink = parse_number<double>(name, value);
        else if (name == "optim.sufficient_decrease")
            cfg.optim.line_search.sufficient_decrease = parse_number<double>(name, value);
        else if (name == "optim.max_trials")
            cfg.optim.line_search.max_trials = parse_number<std::size_t>(name, value);
        else if (name == "grid.beta_min") cfg.grid.beta_min = parse_number<double>(name, value);
        else if (name == "grid.beta_max") cfg.grid.beta_max = parse_number<double>(name, value);
        else if (name == "grid.lambda_min") cfg.grid.lambda_min = parse_number<double>(name, value);
        else if (name == "grid.lambda_max") cfg.grid.lambda_max = parse_number<double>(name, value);
        else if (name == "grid.beta_count") cfg.grid.beta_count = parse_number<std::size_t>(name, value);
        else if (name == "grid.lambda_count") cfg.grid.lambda_count = parse_number<std::size_t>(name, value);
        else throw ConfigError("line " + std::to_string(line_no) + ": unknown key " + name);
    }
    if (beta.has_value() != lambda.has_value()) throw ConfigError("run.beta and run.lambda must be given together");
    if (beta) cfg.theta = HyperParams(*beta, *lambda);
    cfg.validate();
    return cfg;
}

inline RunConfig parse_run_config(const std::string& text) {
    std::istringstream in(text);
    return parse_run_config(in);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    return parse_run_config(in);
}

} // namespace dms
