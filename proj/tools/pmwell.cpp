// pmwell command line: run, sweep, table and eigen on a TOML experiment file.
// Exit status: 0 success, 2 configuration or usage error, 3 numerical failure.

#include <pmwell/pmwell.hpp>

#include <CLI11.hpp>

#include <cerrno>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace {

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t next = std::min(text.find(',', pos), text.size());
        std::string item = text.substr(pos, next - pos);
        const auto a = item.find_first_not_of(" \t");
        const auto b = item.find_last_not_of(" \t");
        item = a == std::string::npos ? "" : item.substr(a, b - a + 1);
        if (item.empty()) {
            if (text.find_first_not_of(" \t") == std::string::npos) break;  // empty list
            throw pmwell::ConfigError("empty entry in --values");
        }
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(item.c_str(), &end);
        if (end != item.c_str() + item.size() || errno == ERANGE) {
            throw pmwell::ConfigError("cannot parse '" + item + "' in --values");
        }
        out.push_back(v);
        pos = next + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Doubly nonlinear porous-medium experiments with potential wells"};
    app.require_subcommand(1);

    std::string out_dir;
    std::uint64_t seed = 0;
    int workers = 1;
    auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides experiment.output_dir)");
    auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides experiment.seed)");
    auto* workers_opt = app.add_option("--workers", workers, "Concurrent workers (overrides experiment.workers)");

    std::string config_path;
    auto add = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("config", config_path, "Experiment config (TOML)")->required();
        sub->fallthrough();
        return sub;
    };
    auto* run_cmd = add("run", "Run the experiment named in the config");
    auto* sweep_cmd = add("sweep", "Run one cell per value of a parameter");
    auto* table_cmd = add("table", "Build the existence/blow-up dichotomy table");
    auto* eigen_cmd = add("eigen", "Compute the first p-Laplacian eigenvalue only");
    std::string axis, values_text;
    sweep_cmd->add_option("--axis", axis, "amplitude, q, m, p or delta")->required();
    sweep_cmd->add_option("--values", values_text, "Comma-separated values")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    pmwell::ExperimentConfig cfg;
    std::vector<double> values;
    try {
        cfg = pmwell::parse_config_file(config_path);
        if (out_opt->count()) cfg.experiment.output_dir = out_dir;
        if (seed_opt->count()) cfg.experiment.seed = seed;
        if (workers_opt->count()) cfg.experiment.workers = workers;
        if (table_cmd->parsed()) cfg.experiment.kind = pmwell::ExperimentKind::DichotomyTable;
        if (eigen_cmd->parsed()) cfg.experiment.kind = pmwell::ExperimentKind::EigenOnly;
        if (sweep_cmd->parsed()) {
            if (!pmwell::is_sweep_axis(axis)) throw pmwell::ConfigError("unknown sweep axis '" + axis + "'");
            values = parse_values(values_text);
        }
        cfg.validate();
    } catch (const pmwell::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }

    const std::filesystem::path out = cfg.experiment.output_dir;
    pmwell::RunStatus st;
    try {
        st = sweep_cmd->parsed() ? pmwell::run_sweep(cfg, axis, values, out) : pmwell::run(cfg, out);
    } catch (const std::exception& e) {
        // only reachable when the output directory itself cannot be written
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    (void)run_cmd;
    std::cout << st.status << ' ' << st.out_dir.string() << '\n';
    if (!st.message.empty()) std::cerr << st.status << ": " << st.message << '\n';
    return st.exit_code;
}
