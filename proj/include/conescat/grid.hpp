#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fft.hpp"
#include "geometry.hpp"
#include "point.hpp"

namespace conescat {

using cplx = std::complex<double>;

// Periodic cube [-L/2, L/2)^d sampled with N points per axis.
class GridSpec {
public:
    GridSpec(int dim, int n, double length) : dim_(dim), n_(n), length_(length)
    {
        if (dim != 1 && dim != 2) throw std::invalid_argument("GridSpec: dim must be 1 or 2");
        if (n < 2 || !std::has_single_bit(static_cast<unsigned>(n)))
            throw std::invalid_argument("GridSpec: points_per_axis must be a power of two");
        if (!(length > 0.0) || !std::isfinite(length))
            throw std::invalid_argument("GridSpec: box_length must be positive");
        size_ = 1;
        for (int a = 0; a < dim; ++a) size_ *= static_cast<std::size_t>(n);
    }

    int dim() const noexcept { return dim_; }
    int n() const noexcept { return n_; }
    double length() const noexcept { return length_; }
    double h() const noexcept { return length_ / n_; }
    double dk() const noexcept { return 2.0 * std::numbers::pi / length_; }
    std::size_t size() const noexcept { return size_; }
    double cell_volume() const noexcept { return std::pow(h(), dim_); }
    double momentum_cell() const noexcept { return std::pow(dk(), dim_); }

    // FFT slot -> signed integer in [-N/2, N/2).
    int folded(int slot) const noexcept { return slot < n_ / 2 ? slot : slot - n_; }
    double x(int i) const noexcept { return -0.5 * length_ + i * h(); }
    double k(int slot) const noexcept { return folded(slot) * dk(); }

    // Axis indices of a flat row-major index.
    std::array<int, 2> unflatten(std::size_t flat) const noexcept
    {
        if (dim_ == 1) return {static_cast<int>(flat), 0};
        return {static_cast<int>(flat / n_), static_cast<int>(flat % n_)};
    }
    std::size_t flatten(int i0, int i1) const noexcept
    {
        return dim_ == 1 ? static_cast<std::size_t>(i0) : static_cast<std::size_t>(i0) * n_ + i1;
    }

    Point position(std::size_t flat) const
    {
        const auto ij = unflatten(flat);
        Point p(dim_);
        for (int a = 0; a < dim_; ++a) p[a] = x(ij[a]);
        return p;
    }
    Point momentum(std::size_t flat) const
    {
        const auto ij = unflatten(flat);
        Point p(dim_);
        for (int a = 0; a < dim_; ++a) p[a] = k(ij[a]);
        return p;
    }

    friend bool operator==(const GridSpec& a, const GridSpec& b) noexcept
    {
        return a.dim_ == b.dim_ && a.n_ == b.n_ && a.length_ == b.length_;
    }

private:
    int dim_;
    int n_;
    double length_;
    std::size_t size_ = 0;
};

enum class Representation : std::int32_t { Position = 0, Momentum = 1 };

class WaveFunction {
public:
    WaveFunction(GridSpec grid, Representation rep, std::vector<cplx> amplitudes)
        : grid_(grid), rep_(rep), amp_(std::move(amplitudes))
    {
        if (amp_.size() != grid_.size()) throw std::invalid_argument("WaveFunction: amplitude count mismatch");
        double s = 0.0;
        for (const auto& a : amp_) s += std::norm(a);
        norm_ = std::sqrt(s * measure());
    }

    const GridSpec& grid() const noexcept { return grid_; }
    Representation representation() const noexcept { return rep_; }
    std::span<const cplx> amplitudes() const noexcept { return amp_; }
    const cplx& operator[](std::size_t i) const noexcept { return amp_[i]; }
    std::size_t size() const noexcept { return amp_.size(); }
    double norm() const noexcept { return norm_; }
    // Quadrature weight per node: h^d in position space, dk^d in momentum space.
    double measure() const noexcept
    {
        return rep_ == Representation::Position ? grid_.cell_volume() : grid_.momentum_cell();
    }

    // Moves the buffer out; the object is left empty.
    std::vector<cplx> release() && { return std::move(amp_); }

private:
    GridSpec grid_;
    Representation rep_;
    std::vector<cplx> amp_;
    double norm_ = 0.0;
};

enum class Direction { Forward, Inverse };

namespace detail {

inline double parity_sign(const GridSpec& g, std::size_t flat)
{
    const auto ij = g.unflatten(flat);
    int s = ij[0];
    if (g.dim() == 2) s += ij[1];
    return (s & 1) ? -1.0 : 1.0;
}

// Raw buffer versions, used by the propagators to avoid reallocations.
inline void forward_inplace(const GridSpec& g, std::span<cplx> a)
{
    fft::transform(a, g.dim(), g.n(), fft::Sign::Forward);
    const double scale = g.cell_volume() / std::pow(2.0 * std::numbers::pi, 0.5 * g.dim());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= scale * parity_sign(g, i);
}

inline void inverse_inplace(const GridSpec& g, std::span<cplx> a)
{
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= parity_sign(g, i);
    fft::transform(a, g.dim(), g.n(), fft::Sign::Backward);
    const double scale = g.momentum_cell() / std::pow(2.0 * std::numbers::pi, 0.5 * g.dim());
    for (auto& v : a) v *= scale;
}

inline double bump(double u2) { return u2 < 1.0 ? std::exp(-1.0 / (1.0 - u2)) : 0.0; }

inline double squared_norm(std::span<const cplx> a, double measure)
{
    double s = 0.0;
    for (const auto& v : a) s += std::norm(v);
    return s * measure;
}

} // namespace detail

// Unitary transform with the (2 pi)^{-d/2} convention. Forward expects position input.
inline WaveFunction fourier_transform(const WaveFunction& psi, Direction dir)
{
    const auto& g = psi.grid();
    std::vector<cplx> a(psi.amplitudes().begin(), psi.amplitudes().end());
    if (dir == Direction::Forward) {
        if (psi.representation() != Representation::Position)
            throw std::invalid_argument("fourier_transform: forward needs a position-space state");
        detail::forward_inplace(g, a);
        return WaveFunction(g, Representation::Momentum, std::move(a));
    }
    if (psi.representation() != Representation::Momentum)
        throw std::invalid_argument("fourier_transform: inverse needs a momentum-space state");
    detail::inverse_inplace(g, a);
    return WaveFunction(g, Representation::Position, std::move(a));
}

inline WaveFunction to_position(const WaveFunction& psi)
{
    return psi.representation() == Representation::Position ? psi : fourier_transform(psi, Direction::Inverse);
}

inline WaveFunction to_momentum(const WaveFunction& psi)
{
    return psi.representation() == Representation::Momentum ? psi : fourier_transform(psi, Direction::Forward);
}

inline WaveFunction scaled(const WaveFunction& psi, cplx s)
{
    std::vector<cplx> a(psi.amplitudes().begin(), psi.amplitudes().end());
    for (auto& v : a) v *= s;
    return WaveFunction(psi.grid(), psi.representation(), std::move(a));
}

inline WaveFunction normalized(const WaveFunction& psi)
{
    if (!(psi.norm() > 0.0)) throw std::invalid_argument("normalized: zero state");
    return scaled(psi, 1.0 / psi.norm());
}

// a + s*b, both brought to the representation of a.
inline WaveFunction axpy(const WaveFunction& a, cplx s, const WaveFunction& b)
{
    if (!(a.grid() == b.grid())) throw std::invalid_argument("axpy: grid mismatch");
    const WaveFunction bb = a.representation() == Representation::Position ? to_position(b) : to_momentum(b);
    std::vector<cplx> out(a.amplitudes().begin(), a.amplitudes().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * bb[i];
    return WaveFunction(a.grid(), a.representation(), std::move(out));
}

inline cplx inner(const WaveFunction& a, const WaveFunction& b)
{
    const WaveFunction pa = to_position(a), pb = to_position(b);
    cplx s = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) s += std::conj(pa[i]) * pb[i];
    return s * pa.measure();
}

inline double distance(const WaveFunction& a, const WaveFunction& b)
{
    return axpy(to_position(a), -1.0, b).norm();
}

// States whose Fourier transform is a bump supported in B(p0, rho), translated to x0.
inline WaveFunction make_coneband_state(const GridSpec& grid, const Cone& cone, double k, const Point& p0, double rho,
                                        const Point& x0)
{
    if (cone.dim() != grid.dim() || p0.dim() != grid.dim() || x0.dim() != grid.dim())
        throw std::invalid_argument("make_coneband_state: dimension mismatch");
    if (!(k > 0.0)) throw std::invalid_argument("make_coneband_state: k must be positive");
    if (!(rho > 0.0)) throw std::invalid_argument("make_coneband_state: rho must be positive");
    const Cone mc = cone.at_origin();
    // depth is 1-Lipschitz, so this keeps the ball a lattice step inside A_k
    if (mc.depth(p0) - k < rho + grid.dk())
        throw std::invalid_argument("make_coneband_state: momentum ball violates the A_k margin");
    std::vector<cplx> a(grid.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Point xi = grid.momentum(i);
        const Point d = xi - p0;
        const double b = detail::bump(dot(d, d) / (rho * rho));
        if (b > 0.0) a[i] = std::polar(b, -dot(x0, xi));
    }
    WaveFunction hat(grid, Representation::Momentum, std::move(a));
    if (!(hat.norm() > 0.0)) throw std::invalid_argument("make_coneband_state: rho below lattice resolution");
    return to_position(normalized(hat));
}

namespace detail {

inline double wrap(double d, double length)
{
    return d - length * std::floor(d / length + 0.5);
}

} // namespace detail

inline WaveFunction make_gaussian_state(const GridSpec& grid, const Point& x0, const Point& p0, double sigma)
{
    if (x0.dim() != grid.dim() || p0.dim() != grid.dim())
        throw std::invalid_argument("make_gaussian_state: dimension mismatch");
    if (!(sigma >= 4.0 * grid.h()) || !(sigma <= grid.length() / 16.0))
        throw std::invalid_argument("make_gaussian_state: sigma must lie in [4h, L/16]");
    std::vector<cplx> a(grid.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Point x = grid.position(i);
        double r2 = 0.0, phase = 0.0;
        for (int ax = 0; ax < grid.dim(); ++ax) {
            const double d = detail::wrap(x[ax] - x0[ax], grid.length());
            r2 += d * d;
            phase += p0[ax] * (x0[ax] + d);
        }
        a[i] = std::polar(std::exp(-r2 / (4.0 * sigma * sigma)), phase);
    }
    return normalized(WaveFunction(grid, Representation::Position, std::move(a)));
}

// Gaussian envelope times a seeded sum of plane waves with |k| < k_max.
inline WaveFunction make_random_bandlimited_state(const GridSpec& grid, const Point& center, double sigma,
                                                  double k_max, int n_waves, std::uint64_t seed)
{
    if (n_waves < 1) throw std::invalid_argument("make_random_bandlimited_state: n_waves must be >= 1");
    if (!(k_max > 0.0)) throw std::invalid_argument("make_random_bandlimited_state: k_max must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Point> ks;
    std::vector<cplx> cs;
    while (static_cast<int>(ks.size()) < n_waves) {
        Point kk(grid.dim());
        for (int a = 0; a < grid.dim(); ++a) kk[a] = k_max * unit(rng);
        if (norm(kk) >= k_max) continue;
        ks.push_back(kk);
        cs.emplace_back(unit(rng), unit(rng));
    }
    const WaveFunction env = make_gaussian_state(grid, center, Point(grid.dim()), sigma);
    std::vector<cplx> a(grid.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Point x = grid.position(i);
        cplx s = 0.0;
        for (std::size_t j = 0; j < ks.size(); ++j) s += cs[j] * std::polar(1.0, dot(ks[j], x - center));
        a[i] = env[i] * s;
    }
    return normalized(WaveFunction(grid, Representation::Position, std::move(a)));
}

// ||chi_A psi|| with A given by a predicate on grid positions.
inline double mass_in_region(const WaveFunction& psi, const SpatialPredicate& inside)
{
    const WaveFunction p = to_position(psi);
    const auto& g = p.grid();
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (inside(g.position(i))) s += std::norm(p[i]);
    return std::sqrt(s * g.cell_volume());
}

// ---- flat binary container -------------------------------------------------
// int32 dim, int32 N, float64 L, int32 flag, then the payload in row-major order.
// flag 0/1: complex (re, im) pairs in position/momentum representation; flag 2: real values.

enum class PayloadFlag : std::int32_t { Position = 0, Momentum = 1, Real = 2 };

namespace detail {

static_assert(std::endian::native == std::endian::little, "binary container assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("binary container: truncated file");
    return v;
}

inline void write_header(std::ostream& os, const GridSpec& g, PayloadFlag flag)
{
    put<std::int32_t>(os, g.dim());
    put<std::int32_t>(os, g.n());
    put<double>(os, g.length());
    put<std::int32_t>(os, static_cast<std::int32_t>(flag));
}

} // namespace detail

inline void write_state(const std::string& path, const WaveFunction& psi)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_state: cannot open " + path);
    detail::write_header(os, psi.grid(), static_cast<PayloadFlag>(psi.representation()));
    for (const auto& v : psi.amplitudes()) {
        detail::put<double>(os, v.real());
        detail::put<double>(os, v.imag());
    }
    if (!os) throw std::runtime_error("write_state: write failed for " + path);
}

inline void write_real_field(const std::string& path, const GridSpec& g, std::span<const double> values)
{
    if (values.size() != g.size()) throw std::invalid_argument("write_real_field: size mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_real_field: cannot open " + path);
    detail::write_header(os, g, PayloadFlag::Real);
    for (double v : values) detail::put<double>(os, v);
    if (!os) throw std::runtime_error("write_real_field: write failed for " + path);
}

inline WaveFunction read_state(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_state: cannot open " + path);
    const auto dim = detail::get<std::int32_t>(is);
    const auto n = detail::get<std::int32_t>(is);
    const auto len = detail::get<double>(is);
    const auto flag = detail::get<std::int32_t>(is);
    if (flag != 0 && flag != 1) throw std::runtime_error("read_state: not a complex state payload");
    GridSpec g(dim, n, len);
    std::vector<cplx> a(g.size());
    for (auto& v : a) {
        const double re = detail::get<double>(is);
        const double im = detail::get<double>(is);
        v = {re, im};
    }
    return WaveFunction(g, static_cast<Representation>(flag), std::move(a));
}

} // namespace conescat
