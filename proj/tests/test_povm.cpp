#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <conescat/povm.hpp>

#include "oracles.hpp"

using namespace conescat;
using std::numbers::pi;

namespace {

FamilyRef wedge()
{
    return share(ConeFamily({Cone(Point{-2.0, 0.0}, Point{1.0, 0.0}, pi / 3)}));
}

// C1 such that the discrete window has unit norm, computed without the Window class.
double oracle_c1(const GridSpec& g, double delta)
{
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point u = g.momentum(i) * (1.0 / delta);
        const double u2 = dot(u, u);
        if (u2 < 1.0) s += std::exp(-2.0 / (1.0 - u2)) * std::pow(delta, -1.0 * g.dim());
    }
    return 1.0 / std::sqrt(s * g.momentum_cell());
}

// Dense quadrature: sum over nodes in the region of weight * <eta, psi> eta.
WaveFunction dense_povm(const PhaseRegion& region, const WaveFunction& psi, const PovmParams& params)
{
    const GridSpec& g = params.grid();
    const double c1 = oracle_c1(g, params.window().delta());
    std::vector<cplx> acc(g.size());
    const int mx = params.x_nodes_per_axis(), mp = params.p_nodes_per_axis();
    for (int j0 = 0; j0 < mx; ++j0)
        for (int j1 = 0; j1 < mx; ++j1)
            for (int q0 = 0; q0 < mp; ++q0)
                for (int q1 = 0; q1 < mp; ++q1) {
                    const Point x{g.x(j0 * params.x_stride()), g.x(j1 * params.x_stride())};
                    const Point p{g.k(q0 * params.p_stride()), g.k(q1 * params.p_stride())};
                    if (!region.contains(x, p)) continue;
                    const WaveFunction eta = oracle::coherent_state(g, params.window().delta(), c1, x, p);
                    const cplx c = inner(eta, psi) * params.cell_weight();
                    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += c * eta[i];
                }
    return WaveFunction(g, Representation::Position, std::move(acc));
}

WaveFunction random_smooth_state(const GridSpec& g, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    const double l = g.length();
    return make_random_bandlimited_state(g, Point{u(rng) * l, u(rng) * l}, l / 16, 0.4 * pi / g.h(), 5, rng());
}

// Small-box wave packet; the library constructor refuses sigma < 4h.
WaveFunction packet(const GridSpec& g, const Point& x0, const Point& p0, double sigma)
{
    std::vector<cplx> a(g.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        Point d = g.position(i) - x0;
        for (int k = 0; k < g.dim(); ++k) d[k] -= g.length() * std::round(d[k] / g.length());
        a[i] = std::polar(std::exp(-dot(d, d) / (4 * sigma * sigma)), dot(p0, x0 + d));
    }
    return normalized(WaveFunction(g, Representation::Position, std::move(a)));
}

} // namespace

TEST(Window, NormSupportAndScaling)
{
    for (double delta : {0.5, 1.0, 2.3}) {
        const GridSpec g(2, 128, 48.0);
        const Window w(g, delta);
        double s = 0.0;
        for (const auto& t : w.taps()) {
            s += t.w * t.w;
            const Point xi{t.o0 * g.dk(), t.o1 * g.dk()};
            EXPECT_LT(norm(xi), delta);
            EXPECT_NEAR(t.w, w.value(xi), 1e-12);
            EXPECT_NEAR(w.value(xi), std::pow(delta, -1.0) * w.unit_value(xi * (1.0 / delta)), 1e-12);
        }
        EXPECT_NEAR(s * g.momentum_cell(), 1.0, 1e-10);
        EXPECT_NEAR(w.value(Point{0.0, 0.0}), oracle_c1(g, delta) * std::exp(-1.0) / delta, 1e-10);
    }
}

TEST(Window, RejectsUnresolvableDelta)
{
    const GridSpec g(2, 64, 32.0);
    EXPECT_THROW(Window(g, 2.9 * g.dk()), std::invalid_argument);
    EXPECT_NO_THROW(Window(g, 3.0 * g.dk()));
}

TEST(Params, StrideRule)
{
    const GridSpec g(2, 128, 48.0);
    const PovmParams p8 = make_povm_params(g, 0.5, 8);
    EXPECT_EQ(p8.window().band(), 7);
    EXPECT_EQ(p8.x_stride(), 16);
    EXPECT_EQ(p8.p_stride(), 1);
    EXPECT_TRUE(p8.alias_free());
    const PovmParams p1 = make_povm_params(g, 0.5, 1);
    EXPECT_EQ(p1.x_stride(), 16);
    EXPECT_EQ(p1.p_stride(), 8);
    EXPECT_DOUBLE_EQ(p1.oversampling(), 1.0);
    EXPECT_NEAR(p1.cell_weight(), 1.0, 1e-14);
    EXPECT_THROW(make_povm_params(g, 0.5, 3), std::invalid_argument);
    EXPECT_THROW(PovmParams(Window(g, 0.5), 32, 8), std::invalid_argument);
}

TEST(Husimi, CoherentStatePeaksAtItsOwnNode)
{
    const GridSpec g(2, 64, 32.0);
    const PovmParams params = make_povm_params(g, 1.0, 4);
    const Point x0{g.x(3 * params.x_stride()), g.x(5 * params.x_stride())};
    const Point p0{g.k(2 * params.p_stride()), g.k(g.n() - params.p_stride())};
    const WaveFunction eta = oracle::coherent_state(g, 1.0, oracle_c1(g, 1.0), x0, p0);
    EXPECT_NEAR(eta.norm(), 1.0, 1e-12);
    const auto rows = husimi_grid(eta, params);
    double best = 0.0;
    Point bx(2), bp(2);
    for (const auto& r : rows)
        if (std::abs(r.c) > best) {
            best = std::abs(r.c);
            bx = r.x;
            bp = r.p;
        }
    EXPECT_NEAR(best, 1.0, 1e-12);
    EXPECT_EQ(bx, x0);
    EXPECT_EQ(bp, p0);
}

TEST(Husimi, MatchesDenseInnerProducts)
{
    const GridSpec g(2, 32, 16.0);
    const PovmParams params = make_povm_params(g, 1.2, 4, 0.0);
    std::mt19937_64 rng(41);
    const WaveFunction psi = packet(g, Point{1.0, -0.5}, Point{0.4, 0.8}, 1.5);
    const double c1 = oracle_c1(g, 1.2);
    const auto rows = husimi_grid(psi, params);
    ASSERT_EQ(rows.size(), static_cast<std::size_t>(params.x_nodes_per_axis() * params.x_nodes_per_axis() *
                                                    params.p_nodes_per_axis() * params.p_nodes_per_axis()));
    double err = 0.0;
    for (std::size_t k = 0; k < rows.size(); k += 7) {
        const cplx ref = inner(oracle::coherent_state(g, 1.2, c1, rows[k].x, rows[k].p), psi);
        err = std::max(err, std::abs(rows[k].c - ref));
    }
    EXPECT_LT(err, 1e-13);
}

TEST(Husimi, TranslationCovariance)
{
    const GridSpec g(2, 32, 16.0);
    const PovmParams params = make_povm_params(g, 1.2, 4, 0.0);
    const int jx = params.x_stride();
    const Point a{2.0 * jx * g.h(), -1.0 * jx * g.h()};
    const WaveFunction psi = packet(g, Point{0.3, -0.5}, Point{0.4, 0.8}, 1.5);
    const WaveFunction moved = packet(g, Point{0.3, -0.5} + a, Point{0.4, 0.8}, 1.5);
    const auto r0 = husimi_grid(psi, params), r1 = husimi_grid(moved, params);
    ASSERT_EQ(r0.size(), r1.size());
    const int mx = params.x_nodes_per_axis(), np = static_cast<int>(r0.size()) / (mx * mx);
    double err = 0.0;
    for (int q = 0; q < np; ++q)
        for (int j0 = 0; j0 < mx; ++j0)
            for (int j1 = 0; j1 < mx; ++j1) {
                const auto& src = r0[q * mx * mx + j0 * mx + j1];
                const auto& dst = r1[q * mx * mx + ((j0 + 2) % mx) * mx + ((j1 - 1 + mx) % mx)];
                err = std::max(err, std::abs(std::abs(src.c) - std::abs(dst.c)));
            }
    EXPECT_LT(err, 1e-13);
}

TEST(Husimi, MassAndCsv)
{
    const GridSpec g(2, 64, 32.0);
    const PovmParams params = make_povm_params(g, 1.0, 16);
    const WaveFunction psi = make_gaussian_state(g, Point{2.0, 1.0}, Point{-0.5, 0.7}, 2.0);
    const auto rows = husimi_grid(psi, params);
    EXPECT_NEAR(husimi_mass(rows, params), 1.0, 1e-3);
    EXPECT_NEAR(husimi_mass(husimi_grid(psi, make_povm_params(g, 1.0, 4)), make_povm_params(g, 1.0, 4)), 1.0, 1e-2);
    EXPECT_NEAR(husimi_mass(rows, params), povm_quadratic_form(PhaseRegion::full(), psi, params), 1e-12);
    std::ostringstream os;
    write_husimi_csv(os, std::span(rows).first(2));
    std::istringstream is(os.str());
    std::string header, line;
    std::getline(is, header);
    EXPECT_EQ(header, "x1,x2,p1,p2,re,im,abs2");
    int lines = 0;
    while (std::getline(is, line)) ++lines;
    EXPECT_EQ(lines, 2);
}

TEST(Povm, MatchesDenseQuadrature)
{
    const GridSpec g(2, 32, 16.0);
    const PovmParams params = make_povm_params(g, 1.2, 4, 0.0);
    const WaveFunction psi = packet(g, Point{0.5, -0.5}, Point{0.8, 0.3}, 1.5);
    const auto fam = share(ConeFamily({Cone(Point{-3.0, 0.0}, Point{1.0, 0.0}, pi / 3)}));
    for (const PhaseRegion& region : {PhaseRegion::out_m(fam, 1.0, 0.2), PhaseRegion::incoming(fam, 0.5, 0.3),
                                      PhaseRegion::space_of(fam, 0.5), PhaseRegion::complement(PhaseRegion::out(fam, 0.0)),
                                      PhaseRegion::full()}) {
        const WaveFunction fast = apply_povm(region, psi, params);
        const WaveFunction ref = dense_povm(region, psi, params);
        EXPECT_LT(distance(fast, ref), 1e-12) << to_string(region.kind());
        EXPECT_NEAR(povm_quadratic_form(region, psi, params), std::real(inner(psi, ref)), 1e-12);
    }
}

TEST(Povm, ResolutionOfIdentity)
{
    const GridSpec g(2, 128, 48.0);
    const PovmParams params = make_povm_params(g, 0.5, 8);
    std::mt19937_64 rng(42);
    std::vector<WaveFunction> states;
    for (int k = 0; k < 5; ++k) states.push_back(random_smooth_state(g, rng));
    EXPECT_LT(povm_identity_deficiency(params, states), 1e-10);
    EXPECT_NEAR(povm_quadratic_form(PhaseRegion::full(), states[0], params), 1.0, 1e-10);
    EXPECT_THROW(povm_identity_deficiency(params, std::span(states).first(4)), std::invalid_argument);
}

TEST(Povm, DeficiencyShrinksWithOversampling)
{
    const GridSpec g(2, 128, 48.0);
    std::mt19937_64 rng(43);
    std::vector<WaveFunction> states;
    for (int k = 0; k < 5; ++k) states.push_back(random_smooth_state(g, rng));
    double prev = std::numeric_limits<double>::infinity();
    std::vector<double> seen;
    for (int nu : {1, 2, 4, 8}) {
        const double d = povm_identity_deficiency(make_povm_params(g, 0.5, nu), states);
        seen.push_back(d);
        EXPECT_LT(d, prev) << "nu=" << nu;
        prev = d;
    }
    EXPECT_GT(seen.front(), 1e-2);
    EXPECT_LT(seen.back(), 1e-4);
}

TEST(Povm, ComplementSplitsTheIdentity)
{
    const GridSpec g(2, 64, 32.0);
    const PovmParams params = make_povm_params(g, 1.0, 4);
    const WaveFunction psi = make_gaussian_state(g, Point{-1.0, 0.5}, Point{1.0, 0.2}, 2.0);
    const auto fam = wedge();
    for (const PhaseRegion& e : {PhaseRegion::out_m(fam, 0.5, 0.3), PhaseRegion::space_of(fam, 1.0)}) {
        const PhaseRegion regions[] = {e, PhaseRegion::complement(e), PhaseRegion::full()};
        const PovmBatch b = apply_povm_batch(regions, psi, params);
        const WaveFunction sum = axpy(b.outputs[0], 1.0, b.outputs[1]);
        EXPECT_LT(distance(sum, b.outputs[2]), 1e-12);
        EXPECT_NEAR(b.forms[0] + b.forms[1], b.forms[2], 1e-12);
        // batch and single application agree bitwise
        EXPECT_EQ(distance(apply_povm(e, psi, params), b.outputs[0]), 0.0);
    }
}

TEST(Povm, MomentumLocalization)
{
    const GridSpec g(2, 64, 32.0);
    const double delta = 1.0;
    const PovmParams params = make_povm_params(g, delta, 4);
    // psi_hat supported in D = B((0, 2), 0.6); B = momenta outside the half-plane p1 > -...
    const Cone up(Point{0.0, 0.0}, Point{0.0, 1.0}, pi / 2);
    const WaveFunction psi = make_coneband_state(g, up, 0.5, Point{0.0, 2.0}, 0.6, Point{0.0, 0.0});
    // momentum set of OUT_M over a downward half-plane: p2 < -m. d(B, D) = 1.4 - m
    const auto down = share(ConeFamily({Cone(Point{0.0, 0.0}, Point{0.0, -1.0}, pi / 2)}));
    const double m = 1.4 - (delta + 3 * g.dk()) - 1e-9;
    const PhaseRegion e = PhaseRegion::out_m(down, 0.0, m);
    EXPECT_LT(apply_povm(e, psi, params).norm(), 1e-10);
    // and the output keeps the momentum support inside D + 2 delta
    const WaveFunction out = apply_povm(PhaseRegion::space_of(wedge(), 0.5), psi, params);
    double outside = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (norm(g.momentum(i) - Point{0.0, 2.0}) >= 0.6 + 2 * delta) outside = std::max(outside, std::abs(out[i]));
    EXPECT_EQ(outside, 0.0);
}

TEST(Povm, MonotoneAndDominated)
{
    const GridSpec g(2, 64, 32.0);
    const PovmParams params = make_povm_params(g, 1.0, 4);
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto fam = wedge();
    for (int k = 0; k < 20; ++k) {
        const WaveFunction psi = random_smooth_state(g, rng);
        const double n = 3 * u(rng), m = u(rng);
        const PhaseRegion regions[] = {PhaseRegion::out_m(fam, n, m), PhaseRegion::out_m(fam, n, m + 0.5),
                                       PhaseRegion::out_m(fam, n + 1.0, m), PhaseRegion::out(fam, n),
                                       PhaseRegion::space_of(fam, n), PhaseRegion::incoming(fam, n, m)};
        const PovmBatch b = apply_povm_batch(regions, psi, params);
        for (std::size_t r = 0; r < std::size(regions); ++r) {
            EXPECT_GE(b.forms[r], 0.0);
            const double out2 = b.outputs[r].norm() * b.outputs[r].norm();
            EXPECT_LE(out2, b.forms[r] + 1e-3);
            EXPECT_NEAR(b.forms[r], std::real(inner(psi, b.outputs[r])), 1e-12);
        }
        EXPECT_LE(b.forms[1], b.forms[0] + 1e-12);
        EXPECT_LE(b.forms[2], b.forms[0] + 1e-12);
        EXPECT_LE(b.forms[0], b.forms[3] + 1e-12);
    }
}

TEST(Povm, SkipThresholdIsHarmless)
{
    const GridSpec g(2, 64, 32.0);
    const WaveFunction psi = make_gaussian_state(g, Point{0.0, 0.0}, Point{1.5, 0.0}, 2.0);
    const PhaseRegion e = PhaseRegion::out(wedge(), 0.0);
    const PovmParams exact = make_povm_params(g, 1.0, 4, 0.0), skipping = make_povm_params(g, 1.0, 4);
    const PovmBatch a = apply_povm_batch(std::span(&e, 1), psi, exact), b = apply_povm_batch(std::span(&e, 1), psi, skipping);
    EXPECT_LT(b.active_nodes, a.active_nodes);
    EXPECT_LT(distance(a.outputs[0], b.outputs[0]), 1e-10);
}

TEST(Povm, OneDimensional)
{
    const GridSpec g(1, 256, 64.0);
    const PovmParams params = make_povm_params(g, 0.8, 32);
    ASSERT_EQ(params.p_stride(), 1);
    const WaveFunction psi = make_gaussian_state(g, Point{3.0}, Point{0.5}, 2.0);
    EXPECT_LT(distance(apply_povm(PhaseRegion::full(), psi, params), psi), 1e-10);
    const auto fam = share(ConeFamily({Cone::from_direction(Point{0.0}, Point{1.0}, pi / 2)}));
    const PhaseRegion e = PhaseRegion::out_m(fam, 0.5, 0.1);
    const PhaseRegion regions[] = {e, PhaseRegion::complement(e)};
    const PovmBatch b = apply_povm_batch(regions, psi, params);
    EXPECT_NEAR(b.forms[0] + b.forms[1], 1.0, 1e-10);
}
