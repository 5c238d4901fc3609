#pragma once

// Self-checks exposed by the command-line tool: geometry, POVM identities, Enss condition.

#include <random>

#include "scenario.hpp"

namespace conescat::scenario {

namespace detail {

// Nearest point to y on the two boundary rays of a planar cone, by sampling at `spacing`.
inline double sampled_depth(const Cone& cone, const Point& y, double spacing)
{
    if (!cone.contains(y)) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    const double reach = 2.0 * norm(y - cone.vertex()) + 1.0;
    for (double sgn : {1.0, -1.0}) {
        const Point b = rotate2(cone.axis(), sgn * cone.half_angle());
        for (double t = 0.0; t <= reach; t += spacing) best = std::min(best, norm(cone.vertex() + b * t - y));
    }
    return best;
}

} // namespace detail

// cone_depth against a sampled nearest-point search on random planar cones.
inline std::vector<Check> verify_geometry(int samples, std::uint64_t seed)
{
    if (samples < 1) throw std::invalid_argument("verify_geometry: samples must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double spacing = 0.01;
    double worst = 0.0, worst_shift = 0.0;
    for (int s = 0; s < samples; ++s) {
        const double a = 2.0 * std::numbers::pi * u(rng);
        const double gamma = 0.05 + (std::numbers::pi - 0.1) * u(rng);
        const Cone cone(Point{20.0 * u(rng) - 10.0, 20.0 * u(rng) - 10.0}, Point{std::cos(a), std::sin(a)}, gamma);
        const Point y{cone.vertex()[0] + 20.0 * u(rng) - 10.0, cone.vertex()[1] + 20.0 * u(rng) - 10.0};
        worst = std::max(worst, std::abs(cone.depth(y) - detail::sampled_depth(cone, y, spacing)));
        // A_r as a translated cone agrees with depth > r for acute cones
        if (gamma <= std::numbers::pi / 2) {
            const double r = 3.0 * u(rng);
            const double d = cone.depth(y);
            if (std::abs(d - r) > 1e-9 && cone.shifted(r).contains(y) != (d > r)) worst_shift = 1.0;
        }
    }
    return {Check{"geometry.depth_vs_bruteforce", worst, "< " + std::to_string(2.0 * spacing), worst < 2.0 * spacing},
            Check{"geometry.shifted_cone_region", worst_shift, "== 0", worst_shift == 0.0}};
}

// POVM identities on the scenario's grid and window, using its states plus seeded random ones.
inline std::vector<Check> verify_povm(const ScenarioConfig& c, int threads = 1)
{
    const Setup setup = build_setup(c);
    const auto& an = c.analysis;
    const PovmParams params = make_povm_params(setup.grid, an.delta, an.oversampling);
    std::vector<WaveFunction> states;
    for (auto& b : build_states(c, setup)) states.push_back(std::move(b.psi));
    const double s = std::clamp(setup.grid.length() / 24.0, 4.0 * setup.grid.h(), setup.grid.length() / 16.0);
    for (std::uint64_t k = 0; states.size() < 5; ++k)
        states.push_back(make_random_bandlimited_state(setup.grid, Point(setup.grid.dim()), s, 1.0, 6, c.seed + 101 + k));

    const PhaseRegion full = PhaseRegion::full();
    const PhaseRegion out = PhaseRegion::out_m(setup.family, 0.0, an.m);
    const PhaseRegion rest = PhaseRegion::complement(out);
    std::vector<double> deficiency(states.size()), dominance(states.size()), split(states.size());
    detail::parallel_for(states.size(), threads, [&](std::size_t i) {
        const std::vector<PhaseRegion> regions{full, out, rest};
        const auto b = apply_povm_batch(regions, states[i], params, {true, true, true});
        deficiency[i] = distance(b.outputs[0], states[i]);
        const double n = b.outputs[1].norm();
        dominance[i] = n * n - b.forms[1];
        split[i] = distance(axpy(b.outputs[1], 1.0, b.outputs[2]), b.outputs[0]);
    });
    const double d = *std::max_element(deficiency.begin(), deficiency.end());
    const double dom = *std::max_element(dominance.begin(), dominance.end());
    const double sp = *std::max_element(split.begin(), split.end());
    const std::string eps = std::to_string(an.eps_quad);
    return {Check{"povm.identity_deficiency", d, "<= " + eps, d <= an.eps_quad},
            Check{"povm.dominance", dom, "<= " + eps, dom <= an.eps_quad},
            Check{"povm.complement_split", sp, "<= 1e-10", sp <= 1e-10}};
}

struct EnssCheck {
    EnssReport report;
    std::vector<Check> checks;
};

inline EnssCheck enss_check(const ScenarioConfig& c)
{
    const Setup setup = build_setup(c);
    const auto [r_max, dr] = enss_window(c);
    EnssCheck out{verify_enss(setup.potential, r_max, dr), {}};
    const auto& e = out.report;
    out.checks.push_back({"enss.majorant", e.majorant_holds, "claimed tail >= lattice sup", e.majorant_holds});
    out.checks.push_back({"enss.integrable", std::isfinite(e.tail_integral) ? json(e.tail_integral) : json("inf"),
                          "finite", e.pass && !e.nonintegrable});
    return out;
}

} // namespace conescat::scenario
