#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "grid.hpp"
#include "potential.hpp"

namespace conescat {

struct EvolutionParams {
    double dt = 0.05;
    double t_final = 0.0;
    std::vector<double> schedule; // checkpoint times, increasing, within [0, t_final]
    double margin = 0.05;         // boundary frame width as a fraction of L

    void validate() const
    {
        if (!(dt > 0.0)) throw std::invalid_argument("EvolutionParams: dt must be positive");
        if (!(margin > 0.0 && margin < 0.25)) throw std::invalid_argument("EvolutionParams: margin must lie in (0, 1/4)");
        double prev = -1.0;
        for (double t : schedule) {
            if (!(t > prev)) throw std::invalid_argument("EvolutionParams: schedule must be increasing");
            if (t < 0.0 || t > t_final) throw std::invalid_argument("EvolutionParams: schedule outside [0, t_final]");
            prev = t;
        }
    }
};

// Whole number of dt steps in t; rejects t that dt does not divide.
inline std::int64_t step_count(double t, double dt)
{
    if (!(dt > 0.0)) throw std::invalid_argument("step_count: dt must be positive");
    const double n = std::round(t / dt);
    if (std::abs(n * dt - t) > 1e-12 * std::max(1.0, std::abs(t)))
        throw std::invalid_argument("dt does not divide t");
    return static_cast<std::int64_t>(n);
}

namespace detail {

inline double k_squared(const GridSpec& g, std::size_t flat)
{
    const auto ij = g.unflatten(flat);
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
        const double k = g.k(ij[a]);
        s += k * k;
    }
    return s;
}

} // namespace detail

// e^{-it H0}: exact multiplier on the momentum lattice. Keeps the input representation.
inline WaveFunction free_evolve(const WaveFunction& psi, double t)
{
    const auto& g = psi.grid();
    std::vector<cplx> a = std::move(to_momentum(psi)).release();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= std::polar(1.0, -0.5 * t * detail::k_squared(g, i));
    WaveFunction out(g, Representation::Momentum, std::move(a));
    return psi.representation() == Representation::Position ? to_position(out) : out;
}

// Strang step exp(-i dt V/2) exp(-i dt H0) exp(-i dt V/2) on a position buffer.
// A negative dt runs the group backwards.
class SplitStepper {
public:
    SplitStepper(const Potential& pot, double dt) : grid_(pot.grid()), dt_(dt)
    {
        const std::size_t n = grid_.size();
        half_v_.resize(n);
        kinetic_.resize(n);
        const double inv = 1.0 / static_cast<double>(n); // FFT round trip scale
        for (std::size_t i = 0; i < n; ++i) {
            half_v_[i] = std::polar(1.0, -0.5 * dt * pot[i]);
            kinetic_[i] = std::polar(inv, -0.5 * dt * detail::k_squared(grid_, i));
        }
    }

    void step(std::span<cplx> a) const
    {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] *= half_v_[i];
        fft::transform(a, grid_.dim(), grid_.n(), fft::Sign::Forward);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] *= kinetic_[i];
        fft::transform(a, grid_.dim(), grid_.n(), fft::Sign::Backward);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] *= half_v_[i];
    }

    void run(std::span<cplx> a, std::int64_t steps) const
    {
        for (std::int64_t s = 0; s < steps; ++s) step(a);
    }

    double dt() const noexcept { return dt_; }

private:
    GridSpec grid_;
    double dt_;
    std::vector<cplx> half_v_;
    std::vector<cplx> kinetic_;
};

// e^{-itH} by Strang splitting; result in position representation.
inline WaveFunction full_evolve(const WaveFunction& psi, const Potential& pot, double t, double dt)
{
    if (!(t >= 0.0)) throw std::invalid_argument("full_evolve: t must be >= 0");
    if (!(psi.grid() == pot.grid())) throw std::invalid_argument("full_evolve: grid mismatch");
    const auto steps = step_count(t, dt);
    std::vector<cplx> a = std::move(to_position(psi)).release();
    SplitStepper(pot, dt).run(a, steps);
    return WaveFunction(psi.grid(), Representation::Position, std::move(a));
}

// e^{+itH} with the same stepping, used for the backward leg of the wave operator.
inline WaveFunction full_evolve_backward(const WaveFunction& psi, const Potential& pot, double t, double dt)
{
    if (!(t >= 0.0)) throw std::invalid_argument("full_evolve_backward: t must be >= 0");
    if (!(psi.grid() == pot.grid())) throw std::invalid_argument("full_evolve_backward: grid mismatch");
    const auto steps = step_count(t, dt);
    std::vector<cplx> a = std::move(to_position(psi)).release();
    SplitStepper(pot, -dt).run(a, steps);
    return WaveFunction(psi.grid(), Representation::Position, std::move(a));
}

// True when the grid point lies within margin*L of the (periodic) box edge.
inline bool in_boundary_frame(const GridSpec& g, std::size_t flat, double margin)
{
    const auto ij = g.unflatten(flat);
    const double w = margin * g.length();
    for (int a = 0; a < g.dim(); ++a) {
        const double from_edge = std::min(ij[a] * g.h(), g.length() - ij[a] * g.h());
        if (from_edge < w) return true;
    }
    return false;
}

inline double boundary_mass(const WaveFunction& psi, double margin)
{
    if (!(margin > 0.0 && margin < 0.25)) throw std::invalid_argument("boundary_mass: margin must lie in (0, 1/4)");
    const WaveFunction p = to_position(psi);
    const auto& g = p.grid();
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (in_boundary_frame(g, i, margin)) s += std::norm(p[i]);
    return std::sqrt(s * g.cell_volume());
}

// Calls visit(t, state) at every checkpoint of the schedule, threading the state.
inline void evolve_checkpoints(const WaveFunction& psi, const Potential& pot, const EvolutionParams& params,
                               const std::function<void(double, const WaveFunction&)>& visit)
{
    params.validate();
    SplitStepper stepper(pot, params.dt);
    std::vector<cplx> a = std::move(to_position(psi)).release();
    double t = 0.0;
    for (double tc : params.schedule) {
        stepper.run(a, step_count(tc - t, params.dt));
        t = tc;
        visit(t, WaveFunction(psi.grid(), Representation::Position, a));
    }
}

struct GroundState {
    WaveFunction state;
    double energy = 0.0;
    int iterations = 0;
    bool converged = false;
};

// <psi, H psi> for a normalized state.
inline double energy_expectation(const WaveFunction& psi, const Potential& pot)
{
    const WaveFunction pos = to_position(psi);
    const WaveFunction mom = to_momentum(psi);
    const auto& g = psi.grid();
    double kin = 0.0, pe = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        kin += 0.5 * detail::k_squared(g, i) * std::norm(mom[i]);
        pe += pot[i] * std::norm(pos[i]);
    }
    const double n2 = psi.norm() * psi.norm();
    return (kin * g.momentum_cell() + pe * g.cell_volume()) / n2;
}

// Imaginary-time split-step with renormalization; stops when the energy stalls below tol.
inline GroundState relax_ground_state(const WaveFunction& initial, const Potential& pot, double dtau, double tol = 1e-10,
                                      int max_iter = 200000, int check_every = 10)
{
    if (!(dtau > 0.0)) throw std::invalid_argument("relax_ground_state: dtau must be positive");
    const auto& g = pot.grid();
    if (!(initial.grid() == g)) throw std::invalid_argument("relax_ground_state: grid mismatch");
    const std::size_t n = g.size();
    std::vector<double> half_v(n), kin(n);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        half_v[i] = std::exp(-0.5 * dtau * pot[i]);
        kin[i] = inv * std::exp(-0.5 * dtau * detail::k_squared(g, i));
    }
    std::vector<cplx> a = std::move(to_position(normalized(initial))).release();
    const double cell = g.cell_volume();
    double e_prev = std::numeric_limits<double>::infinity();
    GroundState out{WaveFunction(g, Representation::Position, a), 0.0, 0, false};
    for (int it = 1; it <= max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) a[i] *= half_v[i];
        fft::transform(a, g.dim(), g.n(), fft::Sign::Forward);
        for (std::size_t i = 0; i < n; ++i) a[i] *= kin[i];
        fft::transform(a, g.dim(), g.n(), fft::Sign::Backward);
        for (std::size_t i = 0; i < n; ++i) a[i] *= half_v[i];
        const double nrm = std::sqrt(detail::squared_norm(a, cell));
        for (auto& v : a) v /= nrm;
        if (it % check_every == 0) {
            WaveFunction cur(g, Representation::Position, a);
            const double e = energy_expectation(cur, pot);
            out = GroundState{std::move(cur), e, it, false};
            if (std::abs(e - e_prev) < tol) {
                out.converged = true;
                return out;
            }
            e_prev = e;
        }
    }
    return out;
}

} // namespace conescat
