#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"
#include "potential.hpp"
#include "povm.hpp"
#include "propagator.hpp"

namespace conescat {

enum Flag : unsigned {
    kWrapContaminated = 1u << 0,
    kParameterWindowViolated = 1u << 1,
    kNonintegrable = 1u << 2,
    kNotFittable = 1u << 3,
    kIncompleteRun = 1u << 4,
};

inline std::string flags_to_string(unsigned flags)
{
    if (flags == 0) return "none";
    static constexpr std::pair<unsigned, const char*> names[] = {
        {kWrapContaminated, "WRAP_CONTAMINATED"},
        {kParameterWindowViolated, "PARAMETER_WINDOW_VIOLATED"},
        {kNonintegrable, "NONINTEGRABLE"},
        {kNotFittable, "NOT_FITTABLE"},
        {kIncompleteRun, "INCOMPLETE_RUN"},
    };
    std::string s;
    for (const auto& [bit, name] : names)
        if (flags & bit) {
            if (!s.empty()) s += '|';
            s += name;
        }
    return s;
}

inline unsigned flags_from_string(const std::string& s)
{
    if (s == "none") return 0;
    unsigned f = 0;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t end = s.find('|', start);
        const std::string tok = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
        if (tok == "WRAP_CONTAMINATED") f |= kWrapContaminated;
        else if (tok == "PARAMETER_WINDOW_VIOLATED") f |= kParameterWindowViolated;
        else if (tok == "NONINTEGRABLE") f |= kNonintegrable;
        else if (tok == "NOT_FITTABLE") f |= kNotFittable;
        else if (tok == "INCOMPLETE_RUN") f |= kIncompleteRun;
        else throw std::invalid_argument("unknown flag '" + tok + "'");
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return f;
}

inline constexpr double kWrapThreshold = 1e-3;

// ||V e^{-itH0} psi||
inline double cook_integrand(const Potential& pot, const WaveFunction& psi, double t)
{
    if (!(psi.grid() == pot.grid())) throw std::invalid_argument("cook_integrand: grid mismatch");
    const WaveFunction f = to_position(free_evolve(psi, t));
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += pot[i] * pot[i] * std::norm(f[i]);
    return std::sqrt(s * f.grid().cell_volume());
}

struct WaveOperatorResult {
    WaveFunction state;
    double max_boundary_mass = 0.0;
    bool wrap_contaminated = false;
};

// Omega(T) psi = e^{iTH} e^{-iTH0} psi: free leg forward, then the full group backward.
// The boundary frame is monitored at the end of the free leg and every `check_every` backward steps.
inline WaveOperatorResult wave_operator_apply(const Potential& pot, const WaveFunction& psi, double T, double dt,
                                              double margin = 0.05, int check_every = 20)
{
    if (!(T >= 0.0)) throw std::invalid_argument("wave_operator_apply: T must be >= 0");
    if (!(psi.grid() == pot.grid())) throw std::invalid_argument("wave_operator_apply: grid mismatch");
    const auto steps = step_count(T, dt);
    const WaveFunction freed = to_position(free_evolve(psi, T));
    double worst = boundary_mass(freed, margin);
    std::vector<cplx> a(freed.amplitudes().begin(), freed.amplitudes().end());
    const SplitStepper back(pot, -dt);
    for (std::int64_t s = 1; s <= steps; ++s) {
        back.step(a);
        if (s % check_every == 0 || s == steps)
            worst = std::max(worst, boundary_mass(WaveFunction(psi.grid(), Representation::Position, a), margin));
    }
    WaveOperatorResult r{WaveFunction(psi.grid(), Representation::Position, std::move(a)), worst, worst > kWrapThreshold};
    return r;
}

struct GapResult {
    double gap = 0.0;
    bool wrap_contaminated = false;
};

// ||Omega(2T) psi - Omega(T) psi||
inline GapResult cauchy_gap(const Potential& pot, const WaveFunction& psi, double T, double dt, double margin = 0.05)
{
    const auto a = wave_operator_apply(pot, psi, T, dt, margin);
    const auto b = wave_operator_apply(pot, psi, 2.0 * T, dt, margin);
    return {distance(b.state, a.state), a.wrap_contaminated || b.wrap_contaminated};
}

struct SeriesRow {
    double t = 0.0;
    double s = 0.0;        // ||(P(W_out) - Id) psi_t||
    double i = 0.0;        // ||P(W_out) psi_t||
    double in = 0.0;       // ||P(W_in) psi_t||
    double out_mass = 0.0; // ||chi_{A_vt} psi_t||
    double in_mass = 0.0;  // ||chi_{A_vt^c} psi_t||
    double norm = 0.0;
    double boundary_mass = 0.0;
    unsigned flags = 0;
    double s_mfree = std::numeric_limits<double>::quiet_NaN(); // m-free outgoing set, optional
    double form_out = 0.0;
    double form_in = 0.0;
    double form_space = 0.0;
};

struct ScatterSeries {
    std::vector<SeriesRow> rows;
    double v = 0.0;
    double m = 0.0;
    double delta = 0.0;
    bool delta_below_m = false;         // delta < m
    bool incoming_window = false;       // 0 < m < v and delta < (v - m)/2
    bool has_mfree = false;

    std::vector<double> times() const
    {
        std::vector<double> t;
        for (const auto& r : rows) t.push_back(r.t);
        return t;
    }
    unsigned flags() const
    {
        unsigned f = 0;
        for (const auto& r : rows) f |= r.flags;
        return f;
    }
};

struct SeriesOptions {
    bool include_mfree = false;
};

// Evolves psi through the schedule and records the outgoing/incoming witnesses at each checkpoint.
inline ScatterSeries outgoing_series(const Potential& pot, const WaveFunction& psi, const FamilyRef& family, double v,
                                     double m, const PovmParams& params, const EvolutionParams& evo,
                                     SeriesOptions opts = {})
{
    if (!family) throw std::invalid_argument("outgoing_series: null family");
    if (!(v > 0.0)) throw std::invalid_argument("outgoing_series: v must be positive");
    ScatterSeries series;
    series.v = v;
    series.m = m;
    series.delta = params.window().delta();
    series.delta_below_m = series.delta < m;
    series.incoming_window = m > 0.0 && m < v && series.delta < 0.5 * (v - m);
    series.has_mfree = opts.include_mfree;
    const unsigned window_flag = (series.delta_below_m && series.incoming_window) ? 0u : kParameterWindowViolated;

    evolve_checkpoints(psi, pot, evo, [&](double t, const WaveFunction& st) {
        const double n = v * t;
        std::vector<PhaseRegion> regions{PhaseRegion::out_m(family, n, m), PhaseRegion::incoming(family, n, m),
                                         PhaseRegion::space_of(family, n)};
        std::vector<bool> want{true, true, false};
        if (opts.include_mfree) {
            regions.push_back(PhaseRegion::out(family, n));
            want.push_back(true);
        }
        const PovmBatch b = apply_povm_batch(regions, st, params, want);
        SeriesRow row;
        row.t = t;
        row.s = distance(b.outputs[0], st);
        row.i = b.outputs[0].norm();
        row.in = b.outputs[1].norm();
        row.form_out = b.forms[0];
        row.form_in = b.forms[1];
        row.form_space = b.forms[2];
        if (opts.include_mfree) row.s_mfree = distance(b.outputs[3], st);
        const FamilyRef& f = family;
        row.out_mass = mass_in_region(st, [&f, n](const Point& y) { return region_contains(*f, n, y); });
        row.in_mass = mass_in_region(st, [&f, n](const Point& y) { return !region_contains(*f, n, y); });
        row.norm = st.norm();
        row.boundary_mass = boundary_mass(st, evo.margin);
        row.flags = window_flag | (row.boundary_mass > kWrapThreshold ? kWrapContaminated : 0u);
        series.rows.push_back(row);
    });
    return series;
}

namespace detail {

inline void put_num(std::ostream& os, double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

} // namespace detail

inline void write_series_csv(std::ostream& os, const ScatterSeries& series)
{
    os << "t,s_t,i_t,in_t,out_mass,in_mass,norm,boundary_mass,flags";
    if (series.has_mfree) os << ",s_t_mfree";
    os << '\n';
    for (const auto& r : series.rows) {
        for (double v : {r.t, r.s, r.i, r.in, r.out_mass, r.in_mass, r.norm, r.boundary_mass}) {
            detail::put_num(os, v);
            os << ',';
        }
        os << flags_to_string(r.flags);
        if (series.has_mfree) {
            os << ',';
            detail::put_num(os, r.s_mfree);
        }
        os << '\n';
    }
}

struct FitResult {
    bool ok = false; // false means NOT_FITTABLE
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t points = 0;
    std::string reason;
};

// Least-squares slope of log(value) against log(t) over points with t >= t_min.
inline FitResult decay_exponent_fit(std::span<const std::pair<double, double>> series, double t_min)
{
    FitResult fr;
    std::vector<double> lx, ly;
    for (const auto& [t, v] : series) {
        if (t < t_min) continue;
        if (!(t > 0.0)) {
            fr.reason = "nonpositive time";
            return fr;
        }
        if (!(v > 0.0)) {
            fr.reason = "nonpositive value";
            return fr;
        }
        lx.push_back(std::log(t));
        ly.push_back(std::log(v));
    }
    fr.points = lx.size();
    if (lx.size() < 6) {
        fr.reason = "fewer than 6 points";
        return fr;
    }
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        mx += lx[k];
        my += ly[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxx += (lx[k] - mx) * (lx[k] - mx);
        sxy += (lx[k] - mx) * (ly[k] - my);
        syy += (ly[k] - my) * (ly[k] - my);
    }
    if (!(sxx > 0.0)) {
        fr.reason = "degenerate time range";
        return fr;
    }
    fr.slope = sxy / sxx;
    fr.intercept = my - fr.slope * mx;
    double ss_res = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        const double e = ly[k] - (fr.intercept + fr.slope * lx[k]);
        ss_res += e * e;
    }
    fr.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    fr.ok = true;
    return fr;
}

enum class Label { Scattering, Interacting, Mixed, Undecided };

inline const char* to_string(Label l)
{
    switch (l) {
    case Label::Scattering: return "SCATTERING";
    case Label::Interacting: return "INTERACTING";
    case Label::Mixed: return "MIXED";
    case Label::Undecided: return "UNDECIDED";
    }
    return "?";
}

struct Thresholds {
    double theta = 0.1;
    double window_fraction = 0.25;
    double mixed_factor = 1.5;
    // A fitted rise across the final window of at most trend_tolerance * theta counts as
    // nonpositive; quadrature noise on a flat series would otherwise flip the verdict.
    double trend_tolerance = 0.1;
};

struct ClassificationReport {
    Label label = Label::Undecided;
    double mean_s = 0.0, mean_i = 0.0, mean_in = 0.0;
    double trend_s = 0.0, trend_i = 0.0, trend_in = 0.0;
    std::size_t window_points = 0;
    Thresholds thresholds;
    std::string note;
};

namespace detail {

inline double linear_slope(std::span<const double> t, std::span<const double> y)
{
    if (t.size() < 2) return 0.0;
    double mt = 0.0, my = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        mt += t[k];
        my += y[k];
    }
    mt /= t.size();
    my /= t.size();
    double stt = 0.0, sty = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        stt += (t[k] - mt) * (t[k] - mt);
        sty += (t[k] - mt) * (y[k] - my);
    }
    return stt > 0.0 ? sty / stt : 0.0;
}

inline double mean(std::span<const double> y)
{
    double s = 0.0;
    for (double v : y) s += v;
    return y.empty() ? 0.0 : s / y.size();
}

} // namespace detail

inline std::size_t final_window_size(std::size_t n, double fraction)
{
    if (n == 0) return 0;
    auto w = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
    w = std::max<std::size_t>(w, std::min<std::size_t>(2, n));
    return std::min(w, n);
}

// Decision rule on the final window of the schedule. Never throws.
inline ClassificationReport classify_state(const ScatterSeries& series, const Thresholds& th = {})
{
    ClassificationReport rep;
    rep.thresholds = th;
    const std::size_t n = series.rows.size();
    if (n == 0) {
        rep.note = "empty series";
        return rep;
    }
    const std::size_t w = final_window_size(n, th.window_fraction);
    rep.window_points = w;
    std::vector<double> t, s, i, in;
    bool wrapped = false;
    for (std::size_t k = n - w; k < n; ++k) {
        const auto& r = series.rows[k];
        t.push_back(r.t);
        s.push_back(r.s);
        i.push_back(r.i);
        in.push_back(r.in);
        wrapped = wrapped || (r.flags & kWrapContaminated);
    }
    rep.mean_s = detail::mean(s);
    rep.mean_i = detail::mean(i);
    rep.mean_in = detail::mean(in);
    rep.trend_s = detail::linear_slope(t, s);
    rep.trend_i = detail::linear_slope(t, i);
    rep.trend_in = detail::linear_slope(t, in);
    if (wrapped) {
        rep.note = "wrap-contaminated checkpoints in the final window";
        return rep;
    }
    const double span = t.back() - t.front();
    const auto flat = [&](double slope) { return slope * span <= th.trend_tolerance * th.theta; };
    if (rep.mean_s < th.theta && flat(rep.trend_s)) rep.label = Label::Scattering;
    else if (rep.mean_i < th.theta && flat(rep.trend_i)) rep.label = Label::Interacting;
    else if (rep.mean_s > th.mixed_factor * th.theta && rep.mean_i > th.mixed_factor * th.theta) rep.label = Label::Mixed;
    else rep.note = "no rule matched";
    return rep;
}

} // namespace conescat
