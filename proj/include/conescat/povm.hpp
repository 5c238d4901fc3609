#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "fft.hpp"
#include "geometry.hpp"
#include "grid.hpp"

namespace conescat {

// Momentum-space bump window eta_delta, normalized on the momentum lattice.
class Window {
public:
    struct Tap {
        int o0 = 0;
        int o1 = 0;
        double w = 0.0;
    };

    Window(const GridSpec& grid, double delta) : grid_(grid), delta_(delta)
    {
        if (!(delta >= 3.0 * grid.dk()))
            throw std::invalid_argument("build_window: delta must be >= 3 momentum steps (2 pi / L)");
        radius_ = static_cast<int>(std::floor(delta / grid.dk()));
        if (2 * radius_ + 1 > grid.n()) throw std::invalid_argument("build_window: window wider than the lattice");
        const int d = grid.dim();
        const int lo1 = d == 2 ? -radius_ : 0, hi1 = d == 2 ? radius_ : 0;
        double s = 0.0;
        for (int o0 = -radius_; o0 <= radius_; ++o0)
            for (int o1 = lo1; o1 <= hi1; ++o1) {
                const double u2 = (o0 * o0 + o1 * o1) * grid.dk() * grid.dk() / (delta * delta);
                const double b = detail::bump(u2);
                if (b > 0.0) {
                    taps_.push_back({o0, o1, b});
                    s += b * b;
                }
            }
        const double c = 1.0 / std::sqrt(s * grid.momentum_cell());
        for (auto& t : taps_) t.w *= c;
        unit_amplitude_ = c * std::pow(delta, 0.5 * d);
    }

    const GridSpec& grid() const noexcept { return grid_; }
    double delta() const noexcept { return delta_; }
    int radius_steps() const noexcept { return radius_; }
    int band() const noexcept { return 2 * radius_ + 1; }
    std::span<const Tap> taps() const noexcept { return taps_; }

    // Unscaled profile eta_1(u) = C1 exp(-1/(1-|u|^2)).
    double unit_value(const Point& u) const { return unit_amplitude_ * detail::bump(dot(u, u)); }
    // eta_delta(xi) = delta^{-d/2} eta_1(xi/delta).
    double value(const Point& xi) const
    {
        return std::pow(delta_, -0.5 * grid_.dim()) * unit_value(xi * (1.0 / delta_));
    }

private:
    GridSpec grid_;
    double delta_;
    int radius_ = 0;
    double unit_amplitude_ = 0.0;
    std::vector<Tap> taps_;
};

inline Window build_window(const GridSpec& grid, double delta) { return Window(grid, delta); }

// Phase-space quadrature: x nodes every x_stride grid points, p nodes every p_stride
// momentum-lattice points. Oversampling per axis is N / (x_stride * p_stride).
class PovmParams {
public:
    PovmParams(Window window, int x_stride, int p_stride, double skip_threshold = 1e-24)
        : window_(std::move(window)), x_stride_(x_stride), p_stride_(p_stride), skip_(skip_threshold)
    {
        const int n = window_.grid().n();
        auto ok = [n](int s) { return s >= 1 && s <= n && std::has_single_bit(static_cast<unsigned>(s)); };
        if (!ok(x_stride) || !ok(p_stride)) throw std::invalid_argument("PovmParams: strides must be powers of two <= N");
        if (x_stride * p_stride > n) throw std::invalid_argument("PovmParams: x_stride * p_stride exceeds N");
        if (!(skip_threshold >= 0.0)) throw std::invalid_argument("PovmParams: skip threshold must be >= 0");
    }

    const Window& window() const noexcept { return window_; }
    const GridSpec& grid() const noexcept { return window_.grid(); }
    int x_stride() const noexcept { return x_stride_; }
    int p_stride() const noexcept { return p_stride_; }
    double skip_threshold() const noexcept { return skip_; }
    int x_nodes_per_axis() const noexcept { return grid().n() / x_stride_; }
    int p_nodes_per_axis() const noexcept { return grid().n() / p_stride_; }
    double x_step() const noexcept { return x_stride_ * grid().h(); }
    double p_step() const noexcept { return p_stride_ * grid().dk(); }
    double oversampling() const noexcept { return static_cast<double>(grid().n()) / (x_stride_ * p_stride_); }
    // No wrap-around of the window band when folding onto the x sublattice.
    bool alias_free() const noexcept { return window_.band() <= x_nodes_per_axis(); }
    // (2 pi)^{-d} (dx dp)^d
    double cell_weight() const noexcept
    {
        return std::pow(x_step() * p_step() / (2.0 * std::numbers::pi), grid().dim());
    }

private:
    Window window_;
    int x_stride_;
    int p_stride_;
    double skip_;
};

// Strides for a requested oversampling: the coarsest alias-free x lattice, then p_stride.
inline PovmParams make_povm_params(const GridSpec& grid, double delta, int oversampling,
                                   double skip_threshold = 1e-24)
{
    const int n = grid.n();
    if (oversampling < 1 || oversampling > n || !std::has_single_bit(static_cast<unsigned>(oversampling)))
        throw std::invalid_argument("make_povm_params: oversampling must be a power of two in [1, N]");
    Window w(grid, delta);
    const int m_min = static_cast<int>(std::bit_ceil(static_cast<unsigned>(w.band())));
    const int jx_max = std::max(1, n / m_min);
    const int product = n / oversampling;
    const int jx = std::min(jx_max, product);
    const int jp = product / jx;
    return PovmParams(std::move(w), jx, jp, skip_threshold);
}

namespace detail {

enum class MaskState { None, All, Partial };

struct MaskView {
    MaskState state = MaskState::None;
    const std::uint8_t* data = nullptr;
};

// Per-p-node masks over the x sublattice, using that every region kind is a union
// of (position set) x (momentum set) products.
class RegionMasker {
public:
    RegionMasker(const PhaseRegion& region, std::span<const Point> xs) : kind_(region.kind()), m_(region.m())
    {
        const std::size_t nx = xs.size();
        scratch_.resize(nx);
        switch (kind_) {
        case RegionKind::Full: break;
        case RegionKind::Complement:
            base_ = std::make_unique<RegionMasker>(region.base(), xs);
            break;
        case RegionKind::Space:
            masks_.emplace_back(nx);
            for (std::size_t j = 0; j < nx; ++j) masks_[0][j] = region.spatial(xs[j]) ? 1 : 0;
            states_.push_back(classify(masks_[0]));
            break;
        default:
            for (std::size_t i = 0; i < region.family()->size(); ++i) {
                mcones_.push_back((*region.family())[i].at_origin());
                masks_.emplace_back(nx);
                for (std::size_t j = 0; j < nx; ++j) masks_[i][j] = region.position_condition(i, xs[j]) ? 1 : 0;
                states_.push_back(classify(masks_[i]));
            }
        }
    }

    MaskView eval(const Point& p)
    {
        switch (kind_) {
        case RegionKind::Full: return {MaskState::All, nullptr};
        case RegionKind::Space: return {states_[0], masks_[0].data()};
        case RegionKind::Complement: {
            const MaskView b = base_->eval(p);
            if (b.state == MaskState::None) return {MaskState::All, nullptr};
            if (b.state == MaskState::All) return {MaskState::None, nullptr};
            for (std::size_t j = 0; j < scratch_.size(); ++j) scratch_[j] = b.data[j] ? 0 : 1;
            return {MaskState::Partial, scratch_.data()};
        }
        default: break;
        }
        int hits = 0;
        std::size_t last = 0;
        for (std::size_t i = 0; i < mcones_.size(); ++i) {
            if (states_[i] == MaskState::None) continue;
            if (!PhaseRegion::momentum_test(kind_, mcones_[i], m_, p)) continue;
            if (states_[i] == MaskState::All) return {MaskState::All, nullptr};
            if (hits == 0) std::fill(scratch_.begin(), scratch_.end(), 0);
            for (std::size_t j = 0; j < scratch_.size(); ++j) scratch_[j] |= masks_[i][j];
            ++hits;
            last = i;
        }
        if (hits == 0) return {MaskState::None, nullptr};
        if (hits == 1) return {states_[last], masks_[last].data()};
        return {classify(scratch_), scratch_.data()};
    }

private:
    static MaskState classify(std::span<const std::uint8_t> m)
    {
        std::size_t on = 0;
        for (auto v : m) on += v;
        if (on == 0) return MaskState::None;
        if (on == m.size()) return MaskState::All;
        return MaskState::Partial;
    }

    RegionKind kind_;
    double m_;
    std::vector<Cone> mcones_;
    std::vector<std::vector<std::uint8_t>> masks_;
    std::vector<MaskState> states_;
    std::vector<std::uint8_t> scratch_;
    std::unique_ptr<RegionMasker> base_;
};

inline std::vector<Point> x_lattice(const PovmParams& params)
{
    const auto& g = params.grid();
    const int mx = params.x_nodes_per_axis();
    std::vector<Point> xs;
    if (g.dim() == 1) {
        for (int j = 0; j < mx; ++j) xs.push_back(Point{g.x(j * params.x_stride())});
    } else {
        for (int j0 = 0; j0 < mx; ++j0)
            for (int j1 = 0; j1 < mx; ++j1)
                xs.push_back(Point{g.x(j0 * params.x_stride()), g.x(j1 * params.x_stride())});
    }
    return xs;
}

// Walks the active p nodes in lexicographic order and hands each one's overlaps
// c(x, p) on the x sublattice to the visitor, together with the folded window product.
class OverlapSweep {
public:
    OverlapSweep(const PovmParams& params, const WaveFunction& psi)
        : params_(params), hat_(to_momentum(psi)), g_(params.grid())
    {
        if (!(psi.grid() == g_)) throw std::invalid_argument("povm: state grid differs from the POVM grid");
        d_ = g_.dim();
        n_ = g_.n();
        mx_ = params.x_nodes_per_axis();
        nx_ = d_ == 1 ? mx_ : static_cast<std::size_t>(mx_) * mx_;
        double total = 0.0;
        for (const auto& v : hat_.amplitudes()) total += std::norm(v);
        threshold_ = params.skip_threshold() * total;
        folded_.resize(nx_);
        overlaps_.resize(nx_);
    }

    std::size_t x_count() const noexcept { return nx_; }
    int mx() const noexcept { return mx_; }
    const WaveFunction& hat() const noexcept { return hat_; }

    // visit(p_slot0, p_slot1, momentum point) is called after folded() and overlaps() are filled.
    template <class Visit>
    std::size_t run(Visit&& visit)
    {
        const int pn = params_.p_nodes_per_axis();
        const int jp = params_.p_stride();
        const int q1max = d_ == 2 ? pn : 1;
        std::size_t active = 0;
        for (int q0 = 0; q0 < pn; ++q0)
            for (int q1 = 0; q1 < q1max; ++q1) {
                const int s0 = q0 * jp, s1 = q1 * jp;
                if (!gather(s0, s1)) continue;
                ++active;
                overlaps_ = folded_;
                fft::transform(overlaps_, d_, mx_, fft::Sign::Backward);
                const double dkd = g_.momentum_cell();
                for (auto& c : overlaps_) c *= dkd;
                Point p(d_);
                p[0] = g_.k(s0);
                if (d_ == 2) p[1] = g_.k(s1);
                visit(s0, s1, p);
            }
        return active;
    }

    std::span<const cplx> folded() const noexcept { return folded_; }
    std::span<const cplx> overlaps() const noexcept { return overlaps_; }

    // Adds scale * w * sign * G[fold(slot)] into out for every window tap around (s0, s1).
    void unfold_into(std::span<cplx> out, std::span<const cplx> G, int s0, int s1, double scale) const
    {
        const int mask = n_ - 1, fm = mx_ - 1;
        for (const auto& t : params_.window().taps()) {
            const int a0 = (s0 + t.o0) & mask;
            const int a1 = d_ == 2 ? ((s1 + t.o1) & mask) : 0;
            const std::size_t flat = d_ == 2 ? static_cast<std::size_t>(a0) * n_ + a1 : a0;
            const std::size_t fidx = d_ == 2 ? static_cast<std::size_t>(a0 & fm) * mx_ + (a1 & fm) : (a0 & fm);
            const double sgn = ((a0 + a1) & 1) ? -1.0 : 1.0;
            out[flat] += (scale * t.w * sgn) * G[fidx];
        }
    }

private:
    bool gather(int s0, int s1)
    {
        const int mask = n_ - 1, fm = mx_ - 1;
        const auto amp = hat_.amplitudes();
        double energy = 0.0;
        std::fill(folded_.begin(), folded_.end(), cplx{});
        for (const auto& t : params_.window().taps()) {
            const int a0 = (s0 + t.o0) & mask;
            const int a1 = d_ == 2 ? ((s1 + t.o1) & mask) : 0;
            const std::size_t flat = d_ == 2 ? static_cast<std::size_t>(a0) * n_ + a1 : a0;
            const cplx v = t.w * amp[flat];
            energy += std::norm(v);
            const std::size_t fidx = d_ == 2 ? static_cast<std::size_t>(a0 & fm) * mx_ + (a1 & fm) : (a0 & fm);
            folded_[fidx] += ((a0 + a1) & 1) ? -v : v;
        }
        return energy > threshold_ && energy > 0.0;
    }

    const PovmParams& params_;
    WaveFunction hat_;
    GridSpec g_;
    int d_ = 0, n_ = 0, mx_ = 0;
    std::size_t nx_ = 0;
    double threshold_ = 0.0;
    std::vector<cplx> folded_;
    std::vector<cplx> overlaps_;
};

} // namespace detail

struct PovmBatch {
    std::vector<WaveFunction> outputs; // P(E_k) psi in momentum representation (empty when not requested)
    std::vector<double> forms;         // <psi, P(E_k) psi>
    std::size_t active_nodes = 0;
};

// One sweep over the phase-space lattice serving several regions at once.
// Region membership uses the cell centre (x node, p node).
// want[k] selects whether P(E_k) psi is synthesized; forms are always computed.
inline PovmBatch apply_povm_batch(std::span<const PhaseRegion> regions, const WaveFunction& psi,
                                  const PovmParams& params, const std::vector<bool>& want)
{
    if (want.size() != regions.size()) throw std::invalid_argument("apply_povm_batch: want/regions size mismatch");
    const auto& g = params.grid();
    const auto xs = detail::x_lattice(params);
    std::vector<detail::RegionMasker> maskers;
    maskers.reserve(regions.size());
    for (const auto& r : regions) maskers.emplace_back(r, xs);

    detail::OverlapSweep sweep(params, psi);
    const std::size_t nx = sweep.x_count();
    const double weight = params.cell_weight();
    const double full_scale = g.momentum_cell() * static_cast<double>(nx); // FFT(IFFT(F)) = nx F

    std::vector<std::vector<cplx>> acc(regions.size());
    for (std::size_t r = 0; r < regions.size(); ++r)
        if (want[r]) acc[r].assign(g.size(), cplx{});
    std::vector<double> forms(regions.size(), 0.0);
    std::vector<cplx> G(nx);

    const std::size_t active = sweep.run([&](int s0, int s1, const Point& p) {
        const auto c = sweep.overlaps();
        for (std::size_t r = 0; r < regions.size(); ++r) {
            const detail::MaskView mv = maskers[r].eval(p);
            if (mv.state == detail::MaskState::None) continue;
            double f = 0.0;
            if (mv.state == detail::MaskState::All) {
                for (const auto& v : c) f += std::norm(v);
            } else {
                for (std::size_t j = 0; j < nx; ++j)
                    if (mv.data[j]) f += std::norm(c[j]);
            }
            forms[r] += f * weight;
            if (!want[r]) continue;
            if (mv.state == detail::MaskState::All) {
                sweep.unfold_into(acc[r], sweep.folded(), s0, s1, weight * full_scale);
            } else {
                for (std::size_t j = 0; j < nx; ++j) G[j] = mv.data[j] ? c[j] : cplx{};
                fft::transform(G, g.dim(), sweep.mx(), fft::Sign::Forward);
                sweep.unfold_into(acc[r], G, s0, s1, weight);
            }
        }
    });

    PovmBatch out;
    out.forms = std::move(forms);
    out.active_nodes = active;
    for (std::size_t r = 0; r < regions.size(); ++r)
        if (want[r]) out.outputs.emplace_back(g, Representation::Momentum, std::move(acc[r]));
        else out.outputs.emplace_back(g, Representation::Momentum, std::vector<cplx>(g.size()));
    return out;
}

inline PovmBatch apply_povm_batch(std::span<const PhaseRegion> regions, const WaveFunction& psi,
                                  const PovmParams& params, bool want_outputs = true)
{
    return apply_povm_batch(regions, psi, params, std::vector<bool>(regions.size(), want_outputs));
}

inline WaveFunction apply_povm(const PhaseRegion& region, const WaveFunction& psi, const PovmParams& params)
{
    return std::move(apply_povm_batch(std::span(&region, 1), psi, params, true).outputs.front());
}

inline double povm_quadratic_form(const PhaseRegion& region, const WaveFunction& psi, const PovmParams& params)
{
    return apply_povm_batch(std::span(&region, 1), psi, params, false).forms.front();
}

struct HusimiRow {
    Point x;
    Point p;
    cplx c;
};

// Overlaps <eta_{x,p}, psi> on the quadrature lattice; skipped p nodes are omitted.
inline std::vector<HusimiRow> husimi_grid(const WaveFunction& psi, const PovmParams& params)
{
    const auto xs = detail::x_lattice(params);
    detail::OverlapSweep sweep(params, psi);
    std::vector<HusimiRow> rows;
    sweep.run([&](int, int, const Point& p) {
        const auto c = sweep.overlaps();
        for (std::size_t j = 0; j < xs.size(); ++j) rows.push_back({xs[j], p, c[j]});
    });
    return rows;
}

// Quadrature-weighted total (2 pi)^{-d} sum |c|^2 dx^d dp^d.
inline double husimi_mass(std::span<const HusimiRow> rows, const PovmParams& params)
{
    double s = 0.0;
    for (const auto& r : rows) s += std::norm(r.c);
    return s * params.cell_weight();
}

inline void write_husimi_csv(std::ostream& os, std::span<const HusimiRow> rows)
{
    if (rows.empty()) {
        os << "x1,p1,re,im,abs2\n";
        return;
    }
    const int d = rows.front().x.dim();
    for (int a = 0; a < d; ++a) os << "x" << a + 1 << ',';
    for (int a = 0; a < d; ++a) os << "p" << a + 1 << ',';
    os << "re,im,abs2\n";
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (const auto& r : rows) {
        for (int a = 0; a < d; ++a) { put(r.x[a]); os << ','; }
        for (int a = 0; a < d; ++a) { put(r.p[a]); os << ','; }
        put(r.c.real()); os << ',';
        put(r.c.imag()); os << ',';
        put(std::norm(r.c)); os << '\n';
    }
}

// Max over test states of ||P(FULL) psi - psi||.
inline double povm_identity_deficiency(const PovmParams& params, std::span<const WaveFunction> states)
{
    if (states.size() < 5) throw std::invalid_argument("povm_identity_deficiency: needs at least 5 test states");
    const PhaseRegion full = PhaseRegion::full();
    double worst = 0.0;
    for (const auto& s : states) worst = std::max(worst, distance(apply_povm(full, s, params), s));
    return worst;
}

} // namespace conescat
