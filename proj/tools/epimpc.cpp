// Command-line driver: closed-loop simulation, offline certification, and
// multi-run comparison for the networked-isolation MPC library.

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include <CLI11.hpp>

#include "epimpc/io.hpp"

namespace fs = std::filesystem;
using namespace epimpc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNumerical = 4;

void write_json(const fs::path& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

struct SimOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> substeps;
};

RunRecord simulate_one(const fs::path& config_path, const SimOverrides& ov,
                       LoadedConfig* loaded_out = nullptr) {
    LoadedConfig loaded = load_config(config_path);
    if (ov.seed && loaded.echo.contains("network") &&
        loaded.echo["network"].value("type", "") == "synthetic") {
        loaded.echo["network"]["seed"] = *ov.seed;
        loaded.model = synth_network(loaded.echo["network"]["n"].get<int>(), *ov.seed,
                                     loaded.model.params);
    }
    if (ov.substeps) {
        loaded.scenario.substeps = *ov.substeps;
        loaded.scenario.mpc.step.substeps = *ov.substeps;
    }
    RunRecord rec = run_closed_loop(loaded.scenario, loaded.model);
    if (loaded_out) *loaded_out = std::move(loaded);
    return rec;
}

int cmd_simulate(const fs::path& config_path, const fs::path& out_dir,
                 const SimOverrides& ov) {
    LoadedConfig loaded;
    RunRecord rec = simulate_one(config_path, ov, &loaded);
    fs::create_directories(out_dir);
    write_timeseries_csv(out_dir / "timeseries.csv", rec, loaded.model);
    write_json(out_dir / "summary.json", summary_json(rec));
    write_json(out_dir / "config.json", loaded.echo);
    std::cout << "wrote " << (out_dir / "timeseries.csv").string() << "\n"
              << "certificate " << (rec.certificate.valid ? "valid" : "invalid")
              << ", violations " << rec.metrics.violation_count << "\n";
    return 0;
}

int cmd_certify(const fs::path& timeseries_path, fs::path config_path,
                const fs::path& out_path) {
    if (config_path.empty()) config_path = timeseries_path.parent_path() / "config.json";
    LoadedConfig loaded = load_config(config_path);
    ClosedLoopTrace trace = read_timeseries_csv(timeseries_path);
    DecayCertificate cert =
        certify_decay(trace, loaded.model, terminal_config(loaded.scenario));
    nlohmann::json doc = certificate_json(cert);
    std::cout << doc.dump(2) << "\n";
    if (!out_path.empty()) write_json(out_path, doc);
    return cert.valid ? 0 : kExitInfeasible;
}

int cmd_compare(const std::vector<fs::path>& config_paths, const fs::path& out_dir,
                const SimOverrides& ov) {
    if (config_paths.size() < 2)
        throw ConfigError("compare needs at least two configs");
    std::vector<std::future<RunRecord>> futures;
    futures.reserve(config_paths.size());
    for (const fs::path& p : config_paths)
        futures.push_back(std::async(std::launch::async,
                                     [p, ov] { return simulate_one(p, ov); }));
    std::vector<RunRecord> records;
    records.reserve(futures.size());
    for (auto& f : futures) records.push_back(f.get());

    std::vector<ComparisonRow> rows = compare(records);
    fs::create_directories(out_dir);
    std::string csv = comparison_csv(rows);
    std::ofstream(out_dir / "comparison.csv") << csv;
    write_json(out_dir / "comparison.json", comparison_json(rows));
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Certificate-based MPC for networked SIQR isolation policy"};
    app.require_subcommand(1);

    std::string config, out = "out", timeseries, cert_out;
    std::vector<std::string> configs;
    SimOverrides ov;
    std::uint64_t seed_flag = 0;
    int substeps_flag = 0;

    CLI::App* sim = app.add_subcommand("simulate", "run one closed-loop scenario");
    sim->add_option("--config", config, "scenario config JSON")->required();
    sim->add_option("--out", out, "output directory");
    sim->add_option("--seed", seed_flag, "override synthetic-network seed");
    sim->add_option("--substeps", substeps_flag, "override RK4 substeps");

    CLI::App* cert = app.add_subcommand("certify", "recompute a decay certificate");
    cert->add_option("timeseries", timeseries, "timeseries.csv from simulate")
        ->required();
    cert->add_option("--config", config, "config (default: sibling config.json)");
    cert->add_option("--out", cert_out, "write certificate JSON here");

    CLI::App* cmp = app.add_subcommand("compare", "run and tabulate several configs");
    cmp->add_option("configs", configs, "two or more scenario configs")->required();
    cmp->add_option("--out", out, "output directory");
    cmp->add_option("--seed", seed_flag, "override synthetic-network seed");
    cmp->add_option("--substeps", substeps_flag, "override RK4 substeps");

    CLI11_PARSE(app, argc, argv);
    if (sim->count("--seed") || cmp->count("--seed")) ov.seed = seed_flag;
    if (sim->count("--substeps") || cmp->count("--substeps")) ov.substeps = substeps_flag;

    try {
        if (*sim) return cmd_simulate(config, out, ov);
        if (*cert) return cmd_certify(timeseries, config, cert_out);
        if (*cmp) {
            std::vector<fs::path> paths(configs.begin(), configs.end());
            return cmd_compare(paths, out, ov);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
