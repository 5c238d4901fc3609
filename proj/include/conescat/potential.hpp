#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"

namespace conescat {

using TailFn = std::function<double(double)>;

// Lattice potential with the claimed Enss majorant f(r) >= sup over union A_r of |V|.
class Potential {
public:
    Potential(GridSpec grid, FamilyRef family, std::vector<double> values, TailFn tail,
              std::optional<TailFn> tail_integral, std::string description)
        : grid_(grid), family_(std::move(family)), values_(std::move(values)), tail_(std::move(tail)),
          tail_integral_(std::move(tail_integral)), description_(std::move(description))
    {
        if (values_.size() != grid_.size()) throw std::invalid_argument("Potential: value count mismatch");
        if (!family_) throw std::invalid_argument("Potential: null family");
        if (family_->dim() != grid_.dim()) throw std::invalid_argument("Potential: family dimension mismatch");
        for (double v : values_) sup_ = std::max(sup_, std::abs(v));
    }

    const GridSpec& grid() const noexcept { return grid_; }
    const FamilyRef& family() const noexcept { return family_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double sup_norm() const noexcept { return sup_; }
    double enss_tail(double r) const { return tail_(r); }
    // Closed form of the integral of f over [r, infinity), when known.
    const std::optional<TailFn>& tail_integral() const noexcept { return tail_integral_; }
    const std::string& description() const noexcept { return description_; }

    bool is_zero() const noexcept { return sup_ == 0.0; }

private:
    GridSpec grid_;
    FamilyRef family_;
    std::vector<double> values_;
    TailFn tail_;
    std::optional<TailFn> tail_integral_;
    std::string description_;
    double sup_ = 0.0;
};

inline Potential build_zero_potential(const GridSpec& grid, FamilyRef family)
{
    return Potential(grid, std::move(family), std::vector<double>(grid.size(), 0.0), [](double) { return 0.0; },
                     TailFn([](double) { return 0.0; }), "zero");
}

enum class Checks { Enforce, Bypass };

// V(y) = g (1 + max_i depth_i(y))^{-alpha}.
inline Potential build_cone_decay(const GridSpec& grid, FamilyRef family, double g, double alpha,
                                  Checks checks = Checks::Enforce)
{
    if (!family) throw std::invalid_argument("build_cone_decay: null family");
    if (checks == Checks::Enforce) {
        if (!(g >= 0.0)) throw std::invalid_argument("build_cone_decay: coupling g must be >= 0");
        if (!(alpha > 1.0)) throw std::invalid_argument("build_cone_decay: alpha must exceed 1 (Enss integral diverges)");
    }
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = g * std::pow(1.0 + family->max_depth(grid.position(i)), -alpha);
    std::optional<TailFn> integral;
    if (alpha > 1.0) integral = [g, alpha](double r) { return g * std::pow(1.0 + r, 1.0 - alpha) / (alpha - 1.0); };
    return Potential(grid, family, std::move(v), [g, alpha](double r) { return g * std::pow(1.0 + std::max(r, 0.0), -alpha); },
                     std::move(integral),
                     "cone_decay(g=" + std::to_string(g) + ", alpha=" + std::to_string(alpha) + ")");
}

// Attractive well of the given depth on a ball, rolled off smoothly over 2h.
// The caller declares r0 with the ball inside the complement of union A_{r0}; checked on the lattice.
inline Potential build_compact_well(const GridSpec& grid, FamilyRef family, const Point& center, double radius,
                                    double depth_value, double r0)
{
    if (!family) throw std::invalid_argument("build_compact_well: null family");
    if (center.dim() != grid.dim()) throw std::invalid_argument("build_compact_well: dimension mismatch");
    if (!(radius > 0.0)) throw std::invalid_argument("build_compact_well: radius must be positive");
    if (!(depth_value >= 0.0)) throw std::invalid_argument("build_compact_well: depth must be >= 0");
    if (!(r0 >= 0.0)) throw std::invalid_argument("build_compact_well: r0 must be >= 0");
    const double roll = 2.0 * grid.h();
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Point y = grid.position(i);
        const double rho = norm(y - center);
        double s = 0.0;
        if (rho <= radius) s = 1.0;
        else if (rho < radius + roll) s = 0.5 * (1.0 + std::cos(std::numbers::pi * (rho - radius) / roll));
        if (s > 0.0 && family->max_depth(y) > r0)
            throw std::invalid_argument("build_compact_well: well intersects the declared region A_r0");
        v[i] = -depth_value * s;
    }
    return Potential(grid, family, std::move(v), [depth_value, r0](double r) { return r < r0 ? depth_value : 0.0; },
                     TailFn([depth_value, r0](double r) { return r < r0 ? depth_value * (r0 - r) : 0.0; }),
                     "compact_well(depth=" + std::to_string(depth_value) + ", radius=" + std::to_string(radius) + ")");
}

inline Potential operator+(const Potential& a, const Potential& b)
{
    if (!(a.grid() == b.grid())) throw std::invalid_argument("Potential sum: grid mismatch");
    if (a.family() != b.family()) throw std::invalid_argument("Potential sum: different cone families");
    std::vector<double> v(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += b[i];
    std::optional<TailFn> integral;
    if (a.tail_integral() && b.tail_integral())
        integral = [fa = *a.tail_integral(), fb = *b.tail_integral()](double r) { return fa(r) + fb(r); };
    return Potential(a.grid(), a.family(), std::move(v),
                     [a, b](double r) { return a.enss_tail(r) + b.enss_tail(r); }, std::move(integral),
                     a.description() + " + " + b.description());
}

struct EnssRow {
    double r = 0.0;
    double measured = 0.0;
    double claimed = 0.0;
};

struct EnssReport {
    std::vector<EnssRow> rows;
    double measured_integral = 0.0; // trapezoid of the measured column over [0, r_max]
    double tail_integral = std::numeric_limits<double>::infinity(); // estimate of the integral of f over [0, inf)
    bool majorant_holds = false;
    bool nonintegrable = false;
    bool pass = false;
};

namespace detail {

// Composite Simpson on [a, b].
inline double simpson(const TailFn& f, double a, double b)
{
    if (!(b > a)) return 0.0;
    constexpr int n = 64;
    const double hs = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * hs);
    return s * hs / 3.0;
}

} // namespace detail

inline EnssReport verify_enss(const Potential& pot, double r_max, double dr)
{
    const auto& g = pot.grid();
    if (!(dr >= g.h())) throw std::invalid_argument("verify_enss: dr must be >= h");
    if (!(r_max > 0.0)) throw std::invalid_argument("verify_enss: r_max must be positive");

    // Lattice points sorted by depth; suffix maxima give sup over {depth > r}.
    const std::size_t n = g.size();
    std::vector<double> depth(n);
    for (std::size_t i = 0; i < n; ++i) depth[i] = pot.family()->max_depth(g.position(i));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });
    std::vector<double> suffix(n + 1, 0.0);
    for (std::size_t k = n; k-- > 0;) suffix[k] = std::max(suffix[k + 1], std::abs(pot[order[k]]));

    EnssReport rep;
    rep.majorant_holds = true;
    bool monotone = true;
    const int steps = static_cast<int>(std::floor(r_max / dr + 1e-9));
    for (int s = 0; s <= steps; ++s) {
        const double r = s * dr;
        const auto it = std::upper_bound(order.begin(), order.end(), r,
                                         [&](double rv, std::size_t idx) { return rv < depth[idx]; });
        const double measured = suffix[static_cast<std::size_t>(it - order.begin())];
        const double claimed = pot.enss_tail(r);
        if (measured > claimed * (1.0 + 1e-6)) rep.majorant_holds = false;
        if (!rep.rows.empty() && claimed > rep.rows.back().claimed) monotone = false;
        rep.rows.push_back({r, measured, claimed});
    }
    for (std::size_t s = 1; s < rep.rows.size(); ++s)
        rep.measured_integral += 0.5 * dr * (rep.rows[s - 1].measured + rep.rows[s].measured);

    const TailFn f = [&pot](double r) { return pot.enss_tail(r); };
    double head = 0.0;
    for (std::size_t s = 1; s < rep.rows.size(); ++s) head += detail::simpson(f, rep.rows[s - 1].r, rep.rows[s].r);
    const double r_end = rep.rows.back().r;
    if (pot.tail_integral()) {
        rep.tail_integral = head + (*pot.tail_integral())(r_end);
    } else {
        // dyadic increments of f; a ratio that does not drop below one means divergence
        const int j0 = std::max(0, static_cast<int>(std::ceil(std::log2(std::max(r_end, 1.0)))));
        double beyond = detail::simpson(f, r_end, std::ldexp(1.0, j0));
        double prev = 0.0, last = 0.0;
        for (int j = j0; j < 62; ++j) {
            prev = last;
            last = detail::simpson(f, std::ldexp(1.0, j), std::ldexp(1.0, j + 1));
            beyond += last;
        }
        if (last == 0.0) {
            rep.tail_integral = head + beyond;
        } else if (prev > 0.0 && last / prev < 1.0 - 1e-9) {
            const double q = last / prev;
            rep.tail_integral = head + beyond + last * q / (1.0 - q);
        } else {
            rep.nonintegrable = true;
        }
    }
    if (!std::isfinite(rep.tail_integral)) rep.nonintegrable = true;
    rep.pass = rep.majorant_holds && monotone && !rep.nonintegrable;
    return rep;
}

} // namespace conescat
