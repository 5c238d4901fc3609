#pragma once

// JSON scenario configs and the batch runner behind the command-line tool.

#include <atomic>
#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scattering.hpp"

namespace conescat::scenario {

using nlohmann::json;

// Invalid config; the message starts with the offending field path.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct GridConfig {
    int dim = 2;
    int n = 256;
    double length = 128.0;
    GridSpec spec() const { return GridSpec(dim, n, length); }
};

struct WellConfig {
    Point center;
    double radius = 1.0;
    double depth = 1.0;
    double r0 = 0.0;
};

struct PotentialConfig {
    bool cone_decay = false;
    double g = 0.0;
    double alpha = 2.0;
    std::vector<WellConfig> wells;
};

enum class StateKind { Coneband, Gaussian, WellGround, RandomBandlimited, EdgeGaussian, Mixture };

inline const char* to_string(StateKind k)
{
    switch (k) {
    case StateKind::Coneband: return "coneband";
    case StateKind::Gaussian: return "gaussian";
    case StateKind::WellGround: return "well_ground_state";
    case StateKind::RandomBandlimited: return "random_bandlimited";
    case StateKind::EdgeGaussian: return "edge_gaussian";
    case StateKind::Mixture: return "mixture";
    }
    return "?";
}

enum class SpatialExpect { None, Outgoing, Bound };

struct StateConfig {
    std::string name;
    StateKind kind = StateKind::Gaussian;
    Point x0, p0;
    double sigma = 0.0;
    // coneband / edge_gaussian
    int cone = 0;
    double k = 0.0;
    double rho = 0.0;
    double along = 0.0, inset = 0.0, speed = 0.0;
    // random_bandlimited
    double k_max = 0.0;
    int n_waves = 0;
    // well_ground_state
    int well = 0;
    double dtau = 0.01;
    double tol = 1e-10;
    std::vector<std::string> components; // mixture
    std::optional<Label> expect;
    SpatialExpect spatial = SpatialExpect::None;
};

struct CookConfig {
    std::string state;
    std::vector<double> times;
    double t_min = 5.0;
    double max_slope = -1.5;
    std::vector<double> gap_times;
    double gap_bound = 0.05; // gap at the last T relative to the norm
};

struct AnalysisConfig {
    double v = 1.0;
    double m = 0.5;
    double delta = 0.25;
    int oversampling = 8;
    Thresholds thresholds;
    bool include_mfree = false;
    double eps_quad = 1e-3;
    double enss_r_max = 0.0; // 0: a quarter of the box
    double enss_dr = 0.0;    // 0: max(h, 0.5)
    std::optional<CookConfig> cook;
};

struct ScenarioConfig {
    std::string name;
    FamilyDescriptor geometry = ShortrangeSpec{};
    GridConfig grid;
    PotentialConfig potential;
    std::vector<StateConfig> states;
    EvolutionParams dynamics;
    AnalysisConfig analysis;
    std::uint64_t seed = 0;
    std::string output_dir;
    json canonical; // parsed document without output_dir, used for the hash
};

namespace detail {

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const
    {
        throw ConfigError(field(key) + ": " + msg);
    }
    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) const
    {
        if (!j_.contains(key)) fail(key, "missing");
        return j_.at(key);
    }
    Reader object(const std::string& key) const { return Reader(raw(key), field(key)); }

    double num(const std::string& key) const
    {
        const json& v = raw(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(key, "must be finite");
        return d;
    }
    double num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

    int integer(const std::string& key) const
    {
        const json& v = raw(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        return v.get<int>();
    }
    int integer(const std::string& key, int fallback) const { return has(key) ? integer(key) : fallback; }

    bool boolean(const std::string& key, bool fallback) const
    {
        if (!has(key)) return fallback;
        if (!raw(key).is_boolean()) fail(key, "expected true or false");
        return raw(key).get<bool>();
    }

    std::string str(const std::string& key) const
    {
        const json& v = raw(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    std::vector<double> nums(const std::string& key) const
    {
        const json& v = raw(key);
        if (!v.is_array()) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(key, "expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    Point point(const std::string& key, int dim) const
    {
        const auto v = nums(key);
        if (static_cast<int>(v.size()) != dim) fail(key, "expected " + std::to_string(dim) + " components");
        Point p(dim);
        for (int a = 0; a < dim; ++a) p[a] = v[a];
        return p;
    }

    const json& doc() const noexcept { return j_; }
    const std::string& path() const noexcept { return path_; }

private:
    const json& j_;
    std::string path_;
};

// Runs f and prefixes library argument errors with the config field.
template <class F>
auto guarded(const std::string& field, F&& f)
{
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(field + ": " + e.what());
    }
}

inline Label parse_label(const Reader& r, const std::string& key)
{
    const std::string s = r.str(key);
    for (Label l : {Label::Scattering, Label::Interacting, Label::Mixed, Label::Undecided})
        if (s == to_string(l)) return l;
    r.fail(key, "unknown label '" + s + "'");
}

inline FamilyDescriptor parse_geometry(const Reader& r, int dim)
{
    const std::string type = r.str("type");
    if (type == "single_cone") {
        const double gamma = r.num("half_angle");
        return guarded(r.path(), [&] {
            return FamilyDescriptor(SingleConeSpec{Cone::from_direction(r.point("vertex", dim), r.point("axis", dim), gamma)});
        });
    }
    if (type == "broken_subspace")
        return BrokenSubspaceSpec{r.point("v1", dim), r.point("v2", dim), r.num("r")};
    if (type == "subspace_tube") return SubspaceTubeSpec{r.point("direction", dim)};
    if (type == "shortrange_approx") return ShortrangeSpec{r.integer("n_dirs"), dim};
    r.fail("type", "unknown geometry '" + type + "'");
}

inline StateConfig parse_state(const Reader& r, int dim)
{
    StateConfig s;
    s.name = r.str("name");
    if (s.name.empty() || s.name.find_first_of("/\\ .,") != std::string::npos)
        r.fail("name", "must be non-empty without spaces, dots, commas or slashes");
    const std::string kind = r.str("kind");
    if (kind == "coneband") {
        s.kind = StateKind::Coneband;
        s.cone = r.integer("cone", 0);
        s.k = r.num("k");
        s.p0 = r.point("p0", dim);
        s.rho = r.num("rho");
        s.x0 = r.point("x0", dim);
    } else if (kind == "gaussian") {
        s.kind = StateKind::Gaussian;
        s.x0 = r.point("x0", dim);
        s.p0 = r.point("p0", dim);
        s.sigma = r.num("sigma");
    } else if (kind == "well_ground_state") {
        s.kind = StateKind::WellGround;
        s.well = r.integer("well", 0);
        s.dtau = r.num("dtau", 0.01);
        s.tol = r.num("tol", 1e-10);
        if (!(s.dtau > 0.0)) r.fail("dtau", "must be positive");
        if (!(s.tol > 0.0)) r.fail("tol", "must be positive");
    } else if (kind == "random_bandlimited") {
        s.kind = StateKind::RandomBandlimited;
        s.x0 = r.point("center", dim);
        s.sigma = r.num("sigma");
        s.k_max = r.num("k_max");
        s.n_waves = r.integer("n_waves");
    } else if (kind == "edge_gaussian") {
        s.kind = StateKind::EdgeGaussian;
        if (dim != 2) r.fail("kind", "edge_gaussian needs d = 2");
        s.cone = r.integer("cone", 0);
        s.along = r.num("along");
        s.inset = r.num("inset");
        s.speed = r.num("speed");
        s.sigma = r.num("sigma");
    } else if (kind == "mixture") {
        s.kind = StateKind::Mixture;
        const json& c = r.raw("components");
        if (!c.is_array() || c.size() < 2) r.fail("components", "expected at least two state names");
        for (const auto& e : c) {
            if (!e.is_string()) r.fail("components", "expected state names");
            s.components.push_back(e.get<std::string>());
        }
    } else {
        r.fail("kind", "unknown state kind '" + kind + "'");
    }
    if (r.has("expect")) s.expect = parse_label(r, "expect");
    if (r.has("expect_spatial")) {
        const std::string e = r.str("expect_spatial");
        if (e == "outgoing") s.spatial = SpatialExpect::Outgoing;
        else if (e == "bound") s.spatial = SpatialExpect::Bound;
        else r.fail("expect_spatial", "expected 'outgoing' or 'bound'");
    }
    return s;
}

inline std::vector<double> parse_schedule(const Reader& r)
{
    std::vector<double> sched;
    if (r.has("schedule")) {
        sched = r.nums("schedule");
    } else {
        const double tf = r.num("t_final");
        const int pts = r.integer("points");
        if (!(tf > 0.0)) r.fail("t_final", "must be positive");
        if (pts < 1) r.fail("points", "must be >= 1");
        for (int k = 1; k <= pts; ++k) sched.push_back(tf * k / pts);
    }
    if (sched.empty()) r.fail("schedule", "must not be empty");
    double prev = 0.0;
    for (double t : sched) {
        if (!(t > prev)) r.fail("schedule", "times must be positive and strictly increasing");
        prev = t;
    }
    return sched;
}

inline Cone cone_of(const ConeFamily& fam, int index, const std::string& field)
{
    if (index < 0 || index >= static_cast<int>(fam.size()))
        throw ConfigError(field + ": cone index out of range (family has " + std::to_string(fam.size()) + ")");
    return fam[static_cast<std::size_t>(index)];
}

inline Point rotate2(const Point& v, double a)
{
    return Point{std::cos(a) * v[0] - std::sin(a) * v[1], std::sin(a) * v[0] + std::cos(a) * v[1]};
}

} // namespace detail

// Gaussian straddling the boundary ray at angle -gamma: `along` from the vertex, `inset`
// towards the inside, moving out of the cone with the given speed.
inline WaveFunction make_edge_gaussian_state(const GridSpec& grid, const Cone& cone, double along, double inset,
                                             double speed, double sigma)
{
    if (grid.dim() != 2) throw std::invalid_argument("make_edge_gaussian_state: d = 2 only");
    const Point b = detail::rotate2(cone.axis(), -cone.half_angle());
    Point n = cone.axis() - b * dot(cone.axis(), b);
    if (!(norm(n) > 1e-12)) n = detail::rotate2(b, std::numbers::pi / 2);
    n = n * (1.0 / norm(n));
    return make_gaussian_state(grid, cone.vertex() + b * along + n * inset, n * (-speed), sigma);
}

// Parses and validates everything that can be checked before compute starts.
inline ScenarioConfig parse_config(const json& doc)
{
    const detail::Reader root(doc, "");
    ScenarioConfig c;
    c.name = root.str("name");

    const auto gr = root.object("grid");
    c.grid.dim = gr.integer("dim");
    c.grid.n = gr.integer("N");
    c.grid.length = gr.num("L");
    const GridSpec grid = detail::guarded("grid", [&] { return c.grid.spec(); });
    const int dim = grid.dim();

    c.geometry = detail::parse_geometry(root.object("geometry"), dim);
    const FamilyRef fam = detail::guarded("geometry", [&] { return share(build_standard_family(c.geometry)); });
    if (fam->dim() != dim) throw ConfigError("geometry: family dimension differs from grid.dim");

    const auto pr = root.object("potential");
    const std::string pk = pr.str("kind");
    if (pk == "cone_decay") {
        c.potential.cone_decay = true;
        c.potential.g = pr.num("g");
        c.potential.alpha = pr.num("alpha");
    } else if (pk != "none") {
        pr.fail("kind", "expected 'cone_decay' or 'none'");
    }
    if (pr.has("wells")) {
        const json& ws = pr.raw("wells");
        if (!ws.is_array()) pr.fail("wells", "expected an array");
        for (std::size_t i = 0; i < ws.size(); ++i) {
            const detail::Reader wr(ws[i], pr.field("wells") + "[" + std::to_string(i) + "]");
            c.potential.wells.push_back({wr.point("center", dim), wr.num("radius"), wr.num("depth"), wr.num("r0", 0.0)});
        }
    }

    const json& st = root.raw("states");
    if (!st.is_array() || st.empty()) root.fail("states", "expected a non-empty array");
    for (std::size_t i = 0; i < st.size(); ++i) {
        auto s = detail::parse_state(detail::Reader(st[i], "states[" + std::to_string(i) + "]"), dim);
        for (const auto& o : c.states)
            if (o.name == s.name) throw ConfigError("states[" + std::to_string(i) + "].name: duplicate '" + s.name + "'");
        c.states.push_back(std::move(s));
    }

    const auto dy = root.object("dynamics");
    c.dynamics.dt = dy.num("dt");
    c.dynamics.margin = dy.num("margin", 0.05);
    c.dynamics.schedule = detail::parse_schedule(dy);
    c.dynamics.t_final = c.dynamics.schedule.back();
    detail::guarded("dynamics", [&] {
        c.dynamics.validate();
        double prev = 0.0;
        for (double t : c.dynamics.schedule) {
            step_count(t - prev, c.dynamics.dt);
            prev = t;
        }
        return 0;
    });

    const auto an = root.object("analysis");
    auto& a = c.analysis;
    a.v = an.num("v");
    a.m = an.num("m");
    a.delta = an.num("delta");
    a.oversampling = an.integer("oversampling", 8);
    a.thresholds.theta = an.num("theta", a.thresholds.theta);
    a.thresholds.window_fraction = an.num("window_fraction", a.thresholds.window_fraction);
    a.thresholds.trend_tolerance = an.num("trend_tolerance", a.thresholds.trend_tolerance);
    a.include_mfree = an.boolean("include_mfree", false);
    a.eps_quad = an.num("eps_quad", a.eps_quad);
    a.enss_r_max = an.num("enss_r_max", 0.0);
    a.enss_dr = an.num("enss_dr", 0.0);
    if (!(a.v > 0.0)) an.fail("v", "must be positive");
    if (!(a.thresholds.theta > 0.0)) an.fail("theta", "must be positive");
    if (!(a.thresholds.window_fraction > 0.0 && a.thresholds.window_fraction <= 1.0))
        an.fail("window_fraction", "must lie in (0, 1]");
    if (an.has("cook")) {
        const auto cr = an.object("cook");
        CookConfig ck;
        ck.state = cr.str("state");
        ck.times = cr.nums("times");
        ck.t_min = cr.num("t_min", ck.t_min);
        ck.max_slope = cr.num("max_slope", ck.max_slope);
        ck.gap_times = cr.nums("gap_times");
        ck.gap_bound = cr.num("gap_bound", ck.gap_bound);
        if (ck.times.size() < 6) cr.fail("times", "needs at least 6 times for the fit");
        for (double t : ck.times)
            if (!(t > 0.0)) cr.fail("times", "must be positive");
        for (double t : ck.gap_times) detail::guarded(cr.field("gap_times"), [&] { return step_count(2.0 * t, c.dynamics.dt); });
        a.cook = ck;
    }

    c.seed = root.has("seed") ? root.raw("seed").get<std::uint64_t>() : 0;
    c.output_dir = root.has("output_dir") ? root.str("output_dir") : "out/" + c.name;

    // Cross-checks that only need cheap constructions.
    detail::guarded("analysis", [&] { return make_povm_params(grid, a.delta, a.oversampling); });
    if (c.potential.cone_decay)
        detail::guarded("potential", [&] { return build_cone_decay(grid, fam, c.potential.g, c.potential.alpha); });
    for (std::size_t i = 0; i < c.potential.wells.size(); ++i) {
        const auto& w = c.potential.wells[i];
        detail::guarded("potential.wells[" + std::to_string(i) + "]",
                        [&] { return build_compact_well(grid, fam, w.center, w.radius, w.depth, w.r0); });
    }
    for (std::size_t i = 0; i < c.states.size(); ++i) {
        const auto& s = c.states[i];
        const std::string f = "states[" + std::to_string(i) + "]";
        switch (s.kind) {
        case StateKind::Coneband:
            detail::guarded(f, [&] { return make_coneband_state(grid, detail::cone_of(*fam, s.cone, f + ".cone"), s.k, s.p0, s.rho, s.x0); });
            break;
        case StateKind::Gaussian:
            detail::guarded(f, [&] { return make_gaussian_state(grid, s.x0, s.p0, s.sigma); });
            break;
        case StateKind::RandomBandlimited:
            detail::guarded(f, [&] { return make_random_bandlimited_state(grid, s.x0, s.sigma, s.k_max, s.n_waves, 0); });
            break;
        case StateKind::EdgeGaussian:
            detail::guarded(f, [&] {
                return make_edge_gaussian_state(grid, detail::cone_of(*fam, s.cone, f + ".cone"), s.along, s.inset, s.speed, s.sigma);
            });
            break;
        case StateKind::WellGround:
            if (s.well < 0 || s.well >= static_cast<int>(c.potential.wells.size()))
                throw ConfigError(f + ".well: no such well");
            break;
        case StateKind::Mixture:
            for (const auto& name : s.components) {
                auto it = std::find_if(c.states.begin(), c.states.end(), [&](const StateConfig& o) { return o.name == name; });
                if (it == c.states.end()) throw ConfigError(f + ".components: unknown state '" + name + "'");
                if (it->kind == StateKind::Mixture) throw ConfigError(f + ".components: nested mixture '" + name + "'");
            }
            break;
        }
    }
    if (a.cook) {
        auto it = std::find_if(c.states.begin(), c.states.end(), [&](const StateConfig& o) { return o.name == a.cook->state; });
        if (it == c.states.end()) throw ConfigError("analysis.cook.state: unknown state '" + a.cook->state + "'");
    }

    c.canonical = doc;
    c.canonical.erase("output_dir");
    return c;
}

inline ScenarioConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError(path + ": cannot open");
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(doc);
}

inline ScenarioConfig with_seed(ScenarioConfig c, std::uint64_t seed)
{
    c.seed = seed;
    c.canonical["seed"] = seed;
    return c;
}

inline std::string config_hash(const ScenarioConfig& c)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(c.canonical.dump())));
    return buf;
}

// Everything the runs share: grid, family, potentials.
struct Setup {
    GridSpec grid;
    FamilyRef family;
    Potential potential;
    Potential wells_only;
    std::vector<Potential> wells;
};

inline Setup build_setup(const ScenarioConfig& c)
{
    const GridSpec grid = c.grid.spec();
    const FamilyRef fam = share(build_standard_family(c.geometry));
    Potential pot = c.potential.cone_decay ? build_cone_decay(grid, fam, c.potential.g, c.potential.alpha)
                                           : build_zero_potential(grid, fam);
    Potential wells_only = build_zero_potential(grid, fam);
    std::vector<Potential> wells;
    for (const auto& w : c.potential.wells) {
        wells.push_back(build_compact_well(grid, fam, w.center, w.radius, w.depth, w.r0));
        pot = pot + wells.back();
        wells_only = wells_only + wells.back();
    }
    return Setup{grid, fam, std::move(pot), std::move(wells_only), std::move(wells)};
}

struct BuiltState {
    WaveFunction psi;
    std::optional<GroundState> relaxed;
};

// Builds every state in config order; mixtures are Gram-Schmidt orthonormalized sums.
inline std::vector<BuiltState> build_states(const ScenarioConfig& c, const Setup& s)
{
    std::vector<std::optional<BuiltState>> out(c.states.size());
    auto index_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < c.states.size(); ++i)
            if (c.states[i].name == name) return i;
        throw ConfigError("states: unknown state '" + name + "'");
    };
    auto build_one = [&](std::size_t i) {
        const auto& st = c.states[i];
        switch (st.kind) {
        case StateKind::Coneband:
            return BuiltState{make_coneband_state(s.grid, (*s.family)[static_cast<std::size_t>(st.cone)], st.k, st.p0, st.rho, st.x0), {}};
        case StateKind::Gaussian: return BuiltState{make_gaussian_state(s.grid, st.x0, st.p0, st.sigma), {}};
        case StateKind::RandomBandlimited:
            return BuiltState{make_random_bandlimited_state(s.grid, st.x0, st.sigma, st.k_max, st.n_waves,
                                                            c.seed + 0x9E3779B97F4A7C15ull * (i + 1)),
                              {}};
        case StateKind::EdgeGaussian:
            return BuiltState{make_edge_gaussian_state(s.grid, (*s.family)[static_cast<std::size_t>(st.cone)], st.along, st.inset,
                                                       st.speed, st.sigma),
                              {}};
        case StateKind::WellGround: {
            const auto& w = c.potential.wells[static_cast<std::size_t>(st.well)];
            const double sigma = std::clamp(w.radius, 4.0 * s.grid.h(), s.grid.length() / 16.0);
            auto gs = relax_ground_state(make_gaussian_state(s.grid, w.center, Point(s.grid.dim()), sigma), s.wells_only,
                                         st.dtau, st.tol);
            return BuiltState{gs.state, gs};
        }
        case StateKind::Mixture: break;
        }
        throw std::logic_error("build_states: mixture handled separately");
    };
    for (std::size_t i = 0; i < c.states.size(); ++i)
        if (c.states[i].kind != StateKind::Mixture) out[i] = build_one(i);
    for (std::size_t i = 0; i < c.states.size(); ++i) {
        if (c.states[i].kind != StateKind::Mixture) continue;
        std::vector<WaveFunction> basis;
        for (const auto& name : c.states[i].components) {
            WaveFunction v = to_position(out[index_of(name)]->psi);
            for (const auto& b : basis) v = axpy(v, -inner(b, v), b);
            if (!(v.norm() > 1e-8)) throw std::runtime_error("states[" + std::to_string(i) + "]: components are linearly dependent");
            basis.push_back(normalized(v));
        }
        WaveFunction sum = basis.front();
        for (std::size_t k = 1; k < basis.size(); ++k) sum = axpy(sum, 1.0, basis[k]);
        out[i] = BuiltState{normalized(sum), {}};
    }
    std::vector<BuiltState> res;
    for (auto& o : out) res.push_back(std::move(*o));
    return res;
}

// One acceptance check in a run report.
struct Check {
    std::string name;
    json measured;
    std::string threshold;
    bool pass = false;
};

inline void to_json(json& j, const Check& c)
{
    j = json{{"name", c.name}, {"measured", c.measured}, {"threshold", c.threshold}, {"pass", c.pass}};
}
inline void from_json(const json& j, Check& c)
{
    c.name = j.at("name").get<std::string>();
    c.measured = j.at("measured");
    c.threshold = j.at("threshold").get<std::string>();
    c.pass = j.at("pass").get<bool>();
}

struct StateResult {
    std::string name;
    WaveFunction initial;
    WaveFunction final_state;
    ScatterSeries series;
    ClassificationReport report;
    std::optional<GroundState> relaxed;
};

struct CookResult {
    std::vector<std::pair<double, double>> integrand;
    FitResult fit;
    std::vector<std::pair<double, double>> gaps;
    bool wrap = false;
};

struct RunResult {
    std::string hash;
    std::optional<EnssReport> enss;
    std::vector<StateResult> states;
    std::optional<CookResult> cook;
    std::vector<Check> checks;

    bool all_pass() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
    const StateResult& state(const std::string& name) const
    {
        for (const auto& s : states)
            if (s.name == name) return s;
        throw std::out_of_range("RunResult: no state '" + name + "'");
    }
};

namespace detail {

// Runs job(i) for i in [0, n) on up to `threads` workers; results land by index.
template <class Job>
void parallel_for(std::size_t n, int threads, Job&& job)
{
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        job(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline bool wide_family(const ConeFamily& f)
{
    return std::all_of(f.cones().begin(), f.cones().end(),
                       [](const Cone& c) { return c.dim() == 1 || c.half_angle() >= std::numbers::pi / 2 - 1e-12; });
}

inline std::string lt(double v)
{
    std::ostringstream os;
    os << "< " << v;
    return os.str();
}

} // namespace detail

inline std::pair<double, double> enss_window(const ScenarioConfig& c)
{
    const GridSpec g = c.grid.spec();
    const double r_max = c.analysis.enss_r_max > 0.0 ? c.analysis.enss_r_max : 0.25 * g.length();
    const double dr = c.analysis.enss_dr > 0.0 ? c.analysis.enss_dr : std::max(g.h(), 0.5);
    return {r_max, dr};
}

// Runs the whole scenario in memory. Deterministic given the config; `threads` only changes scheduling.
inline RunResult execute(const ScenarioConfig& c, int threads = 1)
{
    RunResult run;
    run.hash = config_hash(c);
    const Setup setup = build_setup(c);
    const auto& an = c.analysis;
    const PovmParams params = make_povm_params(setup.grid, an.delta, an.oversampling);

    if (!setup.potential.is_zero()) {
        const auto [r_max, dr] = enss_window(c);
        run.enss = verify_enss(setup.potential, r_max, dr);
    }

    const auto built = build_states(c, setup);
    std::vector<std::optional<StateResult>> slots(c.states.size());
    detail::parallel_for(c.states.size(), threads, [&](std::size_t i) {
        const auto& b = built[i];
        auto series = outgoing_series(setup.potential, b.psi, setup.family, an.v, an.m, params, c.dynamics,
                                      SeriesOptions{an.include_mfree});
        auto rep = classify_state(series, an.thresholds);
        auto fin = full_evolve(b.psi, setup.potential, c.dynamics.t_final, c.dynamics.dt);
        slots[i] = StateResult{c.states[i].name, b.psi, std::move(fin), std::move(series), rep, b.relaxed};
    });
    for (auto& s : slots) run.states.push_back(std::move(*s));

    if (an.cook) {
        const auto& ck = *an.cook;
        const WaveFunction* psi = nullptr;
        for (std::size_t i = 0; i < c.states.size(); ++i)
            if (c.states[i].name == ck.state) psi = &built[i].psi;
        CookResult cr;
        for (double t : ck.times) cr.integrand.emplace_back(t, cook_integrand(setup.potential, *psi, t));
        cr.fit = decay_exponent_fit(cr.integrand, ck.t_min);
        std::vector<GapResult> gaps(ck.gap_times.size());
        detail::parallel_for(gaps.size(), threads, [&](std::size_t k) {
            gaps[k] = cauchy_gap(setup.potential, *psi, ck.gap_times[k], c.dynamics.dt, c.dynamics.margin);
        });
        for (std::size_t k = 0; k < gaps.size(); ++k) {
            cr.gaps.emplace_back(ck.gap_times[k], gaps[k].gap);
            cr.wrap = cr.wrap || gaps[k].wrap_contaminated;
        }
        run.cook = std::move(cr);
    }

    // checks, in a fixed order
    auto add = [&run](std::string name, json measured, std::string threshold, bool pass) {
        run.checks.push_back({std::move(name), std::move(measured), std::move(threshold), pass});
    };
    if (run.enss) {
        const auto& e = *run.enss;
        add("enss.integrable", std::isfinite(e.tail_integral) ? json(e.tail_integral) : json("inf"),
            "finite, majorant holds", e.pass && !e.nonintegrable);
    }
    const bool window = an.delta < an.m && an.m > 0.0 && an.m < an.v && an.delta < 0.5 * (an.v - an.m);
    add("parameter_window", json{{"v", an.v}, {"m", an.m}, {"delta", an.delta}}, "0 < m < v, delta < m, delta < (v-m)/2",
        window);
    const bool wide = detail::wide_family(*setup.family);
    const Thresholds& th = an.thresholds;
    for (std::size_t i = 0; i < run.states.size(); ++i) {
        const auto& r = run.states[i];
        const auto& cfg = c.states[i];
        const auto& rows = r.series.rows;
        double worst_bm = 0.0, worst_part = 0.0, worst_comp = std::numeric_limits<double>::infinity();
        for (const auto& row : rows) {
            worst_bm = std::max(worst_bm, row.boundary_mass);
            worst_part = std::max(worst_part, std::abs(row.out_mass * row.out_mass + row.in_mass * row.in_mass -
                                                       row.norm * row.norm));
            worst_comp = std::min(worst_comp, row.form_out + row.form_in - row.form_space);
        }
        add(r.name + ".wrap", worst_bm, "<= 0.001", worst_bm <= kWrapThreshold);
        add(r.name + ".partition", worst_part, "<= 1e-10", worst_part <= 1e-10);
        const double span = rows.size() > 1 ? rows.back().t - rows[rows.size() - r.report.window_points].t : 0.0;
        const bool in_ok = r.report.mean_in < th.theta && r.report.trend_in * span <= th.trend_tolerance * th.theta;
        add(r.name + ".incoming", json{{"mean", r.report.mean_in}, {"trend", r.report.trend_in}},
            detail::lt(th.theta) + ", nonpositive trend", in_ok);
        if (wide) add(r.name + ".complementarity", worst_comp, ">= -" + std::to_string(an.eps_quad), worst_comp >= -an.eps_quad);
        if (cfg.expect)
            add(r.name + ".label", to_string(r.report.label), to_string(*cfg.expect), r.report.label == *cfg.expect);
        if (cfg.spatial == SpatialExpect::Outgoing)
            add(r.name + ".spatial", rows.back().in_mass, detail::lt(th.theta) + " (mass outside A_vt)", rows.back().in_mass < th.theta);
        else if (cfg.spatial == SpatialExpect::Bound)
            add(r.name + ".spatial", rows.back().out_mass, detail::lt(th.theta) + " (mass inside A_vt)", rows.back().out_mass < th.theta);
    }
    if (run.cook) {
        const auto& cr = *run.cook;
        const auto& ck = *an.cook;
        add("cook.slope", cr.fit.ok ? json{{"slope", cr.fit.slope}, {"r2", cr.fit.r2}} : json("NOT_FITTABLE"),
            "<= " + std::to_string(ck.max_slope), cr.fit.ok && cr.fit.slope <= ck.max_slope);
        bool decreasing = !cr.wrap;
        for (std::size_t k = 1; k < cr.gaps.size(); ++k) decreasing = decreasing && cr.gaps[k].second < cr.gaps[k - 1].second;
        json g = json::array();
        for (const auto& [t, v] : cr.gaps) g.push_back({t, v});
        add("cook.gaps_decreasing", g, "strictly decreasing, no wrap", decreasing);
        if (!cr.gaps.empty()) {
            const double nrm = run.state(ck.state).initial.norm();
            add("cook.final_gap", cr.gaps.back().second, detail::lt(ck.gap_bound * nrm), cr.gaps.back().second < ck.gap_bound * nrm);
        }
    }
    return run;
}

} // namespace conescat::scenario
