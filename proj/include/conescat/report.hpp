#pragma once

// On-disk artifacts of a scenario run and the plain-text report regenerated from them.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scenario.hpp"

namespace conescat::scenario {

namespace fs = std::filesystem;

// Raised when a run directory lacks a required artifact (INCOMPLETE_RUN).
class IncompleteRun : public std::runtime_error {
public:
    explicit IncompleteRun(const std::string& what) : std::runtime_error("INCOMPLETE_RUN: " + what) {}
};

// Raised when artifacts in one directory come from different configs.
class HashMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline json environment_fingerprint()
{
#if defined(__clang__)
    const std::string compiler = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    const std::string compiler = std::string("gcc ") + __VERSION__;
#else
    const std::string compiler = "unknown";
#endif
#ifdef NDEBUG
    const bool optimized = true;
#else
    const bool optimized = false;
#endif
    return json{{"compiler", compiler},
                {"cplusplus", static_cast<long>(__cplusplus)},
                {"fft_backend", fft::backend_version()},
                {"ndebug", optimized},
                {"pointer_bits", 8 * sizeof(void*)}};
}

namespace detail {

inline std::string hash_line(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

inline void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + p.string());
}

inline std::string read_text(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IncompleteRun("missing " + p.filename().string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Two-column "t value" file.
inline std::string pairs_text(const std::vector<std::pair<double, double>>& xy)
{
    std::string s;
    for (const auto& [x, y] : xy) s += num(x) + ' ' + num(y) + '\n';
    return s;
}

inline std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s)
{
    std::istringstream is(s);
    is.imbue(std::locale::classic());
    double v = 0.0;
    is >> v;
    if (is.fail()) {
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw std::runtime_error("bad number '" + s + "'");
    }
    return v;
}

} // namespace detail

struct SeriesFile {
    std::string hash;
    std::vector<std::string> columns;
    ScatterSeries series;
};

// Reads a series CSV written by write_run (hash line, header, rows).
inline SeriesFile read_series_file(const fs::path& p)
{
    std::istringstream is(detail::read_text(p));
    SeriesFile f;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# config_hash=", 0) != 0)
        throw IncompleteRun(p.filename().string() + " has no config hash line");
    f.hash = line.substr(14);
    if (!std::getline(is, line)) throw IncompleteRun(p.filename().string() + " has no header");
    f.columns = detail::split(line, ',');
    f.series.has_mfree = f.columns.size() == 10;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto v = detail::split(line, ',');
        if (v.size() != f.columns.size()) throw IncompleteRun(p.filename().string() + " has a truncated row");
        SeriesRow r;
        r.t = detail::parse_double(v[0]);
        r.s = detail::parse_double(v[1]);
        r.i = detail::parse_double(v[2]);
        r.in = detail::parse_double(v[3]);
        r.out_mass = detail::parse_double(v[4]);
        r.in_mass = detail::parse_double(v[5]);
        r.norm = detail::parse_double(v[6]);
        r.boundary_mass = detail::parse_double(v[7]);
        r.flags = flags_from_string(v[8]);
        if (f.series.has_mfree) r.s_mfree = detail::parse_double(v[9]);
        f.series.rows.push_back(r);
    }
    return f;
}

inline json classification_json(const ClassificationReport& r)
{
    return json{{"label", to_string(r.label)},
                {"mean_s", r.mean_s},
                {"mean_i", r.mean_i},
                {"mean_in", r.mean_in},
                {"trend_s", r.trend_s},
                {"trend_i", r.trend_i},
                {"trend_in", r.trend_in},
                {"window_points", r.window_points},
                {"note", r.note}};
}

// Writes series CSVs, snapshots with a manifest, auxiliary tables and run_report.json.
// The report is written last, so a directory without it is an incomplete run.
inline void write_run(const ScenarioConfig& c, const RunResult& run, const fs::path& dir)
{
    fs::create_directories(dir / "snapshots");
    fs::remove(dir / "run_report.json");
    const std::string head = detail::hash_line(run.hash);

    json states = json::array();
    json manifest{{"config_hash", run.hash}, {"files", json::array()}};
    for (std::size_t i = 0; i < run.states.size(); ++i) {
        const auto& s = run.states[i];
        std::ostringstream csv;
        csv << head;
        write_series_csv(csv, s.series);
        const std::string series_file = "series_" + s.name + ".csv";
        detail::write_text(dir / series_file, csv.str());

        const std::string init = s.name + "_initial.bin", fin = s.name + "_final.bin";
        write_state((dir / "snapshots" / init).string(), s.initial);
        write_state((dir / "snapshots" / fin).string(), s.final_state);
        manifest["files"].push_back({{"state", s.name}, {"file", init}, {"t", 0.0}});
        manifest["files"].push_back({{"state", s.name}, {"file", fin}, {"t", c.dynamics.t_final}});

        json st{{"name", s.name},
                {"kind", to_string(c.states[i].kind)},
                {"series", series_file},
                {"flags", flags_to_string(s.series.flags())},
                {"classification", classification_json(s.report)}};
        if (s.relaxed) st["relaxation"] = {{"energy", s.relaxed->energy}, {"iterations", s.relaxed->iterations}, {"converged", s.relaxed->converged}};
        states.push_back(st);
    }
    detail::write_text(dir / "snapshots" / "manifest.json", manifest.dump(2) + "\n");

    json extra = json::object();
    if (run.enss) {
        std::string t = head + "r,measured,claimed\n";
        for (const auto& r : run.enss->rows) t += detail::num(r.r) + ',' + detail::num(r.measured) + ',' + detail::num(r.claimed) + '\n';
        detail::write_text(dir / "enss.csv", t);
        extra["enss"] = "enss.csv";
    }
    if (run.cook) {
        std::string t = head + "t,cook_integrand\n";
        for (const auto& [x, y] : run.cook->integrand) t += detail::num(x) + ',' + detail::num(y) + '\n';
        detail::write_text(dir / "cook.csv", t);
        std::string g = head + "T,cauchy_gap\n";
        for (const auto& [x, y] : run.cook->gaps) g += detail::num(x) + ',' + detail::num(y) + '\n';
        detail::write_text(dir / "gaps.csv", g);
        extra["cook"] = "cook.csv";
        extra["gaps"] = "gaps.csv";
    }

    json report{{"scenario", c.name},
                {"config_hash", run.hash},
                {"seed", c.seed},
                {"config", c.canonical},
                {"environment", environment_fingerprint()},
                {"states", states},
                {"tables", extra},
                {"checks", run.checks},
                {"all_pass", run.all_pass()}};
    detail::write_text(dir / "run_report.json", report.dump(2) + "\n");
}

// Validates, runs and writes. Nothing is written when validation fails.
inline RunResult run_scenario(const ScenarioConfig& c, const fs::path& dir, int threads = 1)
{
    RunResult run = execute(c, threads);
    write_run(c, run, dir);
    return run;
}

struct EmitSummary {
    std::size_t checks = 0;
    std::size_t passed = 0;
    bool all_pass() const { return checks == passed; }
};

// Regenerates summary.txt and plots/*.dat from a completed run directory.
inline EmitSummary emit_report(const fs::path& dir)
{
    const fs::path report_path = dir / "run_report.json";
    if (!fs::exists(report_path)) throw IncompleteRun("no run_report.json in " + dir.string());
    json rep;
    try {
        rep = json::parse(detail::read_text(report_path));
    } catch (const json::parse_error& e) {
        throw IncompleteRun(std::string("unreadable run_report.json: ") + e.what());
    }
    const std::string hash = rep.at("config_hash").get<std::string>();
    const ScenarioConfig cfg = parse_config(rep.at("config"));
    if (config_hash(cfg) != hash) throw HashMismatch("run_report.json: embedded config does not match its hash");

    fs::create_directories(dir / "plots");
    std::ostringstream sum;
    sum << "scenario " << rep.at("scenario").get<std::string>() << "\n";
    sum << "config_hash " << hash << "\n";
    sum << "seed " << rep.at("seed").get<std::uint64_t>() << "\n\n";
    sum << "states\n";
    for (const auto& st : rep.at("states")) {
        const std::string name = st.at("name").get<std::string>();
        const SeriesFile f = read_series_file(dir / st.at("series").get<std::string>());
        if (f.hash != hash) throw HashMismatch(st.at("series").get<std::string>() + ": config hash differs from run_report.json");
        if (f.series.rows.size() != cfg.dynamics.schedule.size())
            throw IncompleteRun(st.at("series").get<std::string>() + ": row count differs from the schedule");
        const auto cls = classify_state(f.series, cfg.analysis.thresholds);
        const std::string stored = st.at("classification").at("label").get<std::string>();
        if (stored != to_string(cls.label))
            throw HashMismatch(name + ": stored label " + stored + " does not follow from the stored series");

        auto column = [&](auto get) {
            std::vector<std::pair<double, double>> xy;
            for (const auto& r : f.series.rows) xy.emplace_back(r.t, get(r));
            return xy;
        };
        const std::pair<const char*, double SeriesRow::*> cols[] = {
            {"s_t", &SeriesRow::s},           {"i_t", &SeriesRow::i},         {"in_t", &SeriesRow::in},
            {"out_mass", &SeriesRow::out_mass}, {"in_mass", &SeriesRow::in_mass}, {"boundary_mass", &SeriesRow::boundary_mass}};
        for (const auto& [label, member] : cols)
            detail::write_text(dir / "plots" / (name + "_" + label + ".dat"),
                               detail::pairs_text(column([m = member](const SeriesRow& r) { return r.*m; })));
        if (f.series.has_mfree)
            detail::write_text(dir / "plots" / (name + "_s_t_mfree.dat"),
                               detail::pairs_text(column([](const SeriesRow& r) { return r.s_mfree; })));

        char line[256];
        std::snprintf(line, sizeof line, "  %-16s %-11s mean s_t %.4g  i_t %.4g  in_t %.4g  flags %s\n", name.c_str(),
                      to_string(cls.label), cls.mean_s, cls.mean_i, cls.mean_in, flags_to_string(f.series.flags()).c_str());
        sum << line;
    }

    const auto& tables = rep.at("tables");
    auto two_col = [&](const std::string& key, const std::string& out) {
        if (!tables.contains(key)) return;
        std::istringstream is(detail::read_text(dir / tables.at(key).get<std::string>()));
        std::string line;
        std::getline(is, line);
        if (line != "# config_hash=" + hash)
            throw HashMismatch(tables.at(key).get<std::string>() + ": config hash differs from run_report.json");
        std::getline(is, line); // header
        std::vector<std::pair<double, double>> xy;
        while (std::getline(is, line)) {
            const auto v = detail::split(line, ',');
            if (v.size() < 2) continue;
            xy.emplace_back(detail::parse_double(v[0]), detail::parse_double(v[1]));
        }
        detail::write_text(dir / "plots" / out, detail::pairs_text(xy));
    };
    two_col("cook", "cook_integrand.dat");
    two_col("gaps", "cauchy_gap.dat");
    two_col("enss", "enss_measured.dat");

    EmitSummary es;
    sum << "\nchecks\n";
    for (const auto& cj : rep.at("checks")) {
        const Check c = cj.get<Check>();
        ++es.checks;
        if (c.pass) ++es.passed;
        sum << (c.pass ? "PASS " : "FAIL ") << c.name << "  measured=" << c.measured.dump() << "  threshold: " << c.threshold
            << "\n";
    }
    sum << "\n" << es.passed << "/" << es.checks << " checks passed\n";
    detail::write_text(dir / "summary.txt", sum.str());
    return es;
}

} // namespace conescat::scenario
