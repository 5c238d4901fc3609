// conescat: scenario runner and self-checks.
//
//   conescat run scenarios/single_cone_well.json --threads 4
//   conescat report out/single_cone_well
//   conescat verify-geometry --samples 10000
//
// Exit codes: 0 all checks pass, 1 some check failed, 2 bad config or usage, 3 incomplete run.

#include <CLI11.hpp>

#include <conescat/report.hpp>
#include <conescat/verify.hpp>

#include <cstdio>
#include <iostream>

namespace cs = conescat::scenario;

namespace {

int print_checks(const std::vector<cs::Check>& checks)
{
    bool ok = true;
    for (const auto& c : checks) {
        std::printf("%s %s  measured=%s  threshold: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.measured.dump().c_str(),
                    c.threshold.c_str());
        ok = ok && c.pass;
    }
    return ok ? 0 : 1;
}

void save_checks(const std::string& out, const std::string& file, const std::vector<cs::Check>& checks)
{
    if (out.empty()) return;
    std::filesystem::create_directories(out);
    std::ofstream os(std::filesystem::path(out) / file, std::ios::trunc);
    os << cs::json{{"checks", checks}, {"environment", cs::environment_fingerprint()}}.dump(2) << '\n';
}

cs::ScenarioConfig load(const std::string& path, const std::optional<std::uint64_t>& seed)
{
    auto c = cs::load_config(path);
    if (seed) c = cs::with_seed(std::move(c), *seed);
    return c;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Phase-space scattering experiments for cone potentials"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
    app.add_option("--seed", seed, "Override the config seed")->expected(1);
    app.add_option("--out", out, "Output directory (run: overrides output_dir)");
    app.add_option("--threads", threads, "Worker threads for independent states and suites")->check(CLI::Range(1, 256));

    std::string config_path, run_dir;
    int samples = 10000;

    auto* run = app.add_subcommand("run", "Run a scenario and write series, snapshots and a report");
    run->add_option("config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
    auto* report = app.add_subcommand("report", "Regenerate summary and plot files from a run directory");
    report->add_option("dir", run_dir, "Run directory")->required();
    auto* vpovm = app.add_subcommand("verify-povm", "Check POVM identities on a scenario's grid");
    vpovm->add_option("config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
    auto* vgeom = app.add_subcommand("verify-geometry", "Compare cone depth with a brute-force search");
    vgeom->add_option("--samples", samples, "Random (cone, point) pairs")->check(CLI::PositiveNumber);
    auto* enss = app.add_subcommand("enss-check", "Tabulate the Enss majorant of a scenario's potential");
    enss->add_option("config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);

    for (auto* sub : {run, report, vpovm, vgeom, enss}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            const auto cfg = load(config_path, seed);
            const std::string dir = out.empty() ? cfg.output_dir : out;
            const auto result = cs::run_scenario(cfg, dir, threads);
            const auto es = cs::emit_report(dir);
            std::cout << cs::detail::read_text(std::filesystem::path(dir) / "summary.txt");
            return es.all_pass() && result.all_pass() ? 0 : 1;
        }
        if (*report) {
            const auto es = cs::emit_report(run_dir);
            std::cout << cs::detail::read_text(std::filesystem::path(run_dir) / "summary.txt");
            return es.all_pass() ? 0 : 1;
        }
        if (*vpovm) {
            const auto checks = cs::verify_povm(load(config_path, seed), threads);
            save_checks(out, "verify_povm.json", checks);
            return print_checks(checks);
        }
        if (*vgeom) {
            const auto checks = cs::verify_geometry(samples, seed.value_or(1));
            save_checks(out, "verify_geometry.json", checks);
            return print_checks(checks);
        }
        if (*enss) {
            const auto res = cs::enss_check(load(config_path, seed));
            std::printf("%10s %14s %14s\n", "r", "lattice_sup", "claimed");
            for (const auto& r : res.report.rows) std::printf("%10.4g %14.6g %14.6g\n", r.r, r.measured, r.claimed);
            std::printf("tail integral estimate %.8g\n", res.report.tail_integral);
            save_checks(out, "enss_check.json", res.checks);
            return print_checks(res.checks);
        }
    } catch (const cs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const cs::IncompleteRun& e) {
        std::cerr << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
