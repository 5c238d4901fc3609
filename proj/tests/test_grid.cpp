#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <conescat/grid.hpp>

using namespace conescat;
using std::numbers::pi;

namespace {

WaveFunction random_state(const GridSpec& g, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd;
    std::vector<cplx> a(g.size());
    for (auto& v : a) v = {nd(rng), nd(rng)};
    return normalized(WaveFunction(g, Representation::Position, std::move(a)));
}

double l2_diff(const WaveFunction& a, const WaveFunction& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
    return std::sqrt(s * a.measure());
}

} // namespace

TEST(GridSpec, Basics)
{
    const GridSpec g(2, 64, 32.0);
    EXPECT_DOUBLE_EQ(g.h(), 0.5);
    EXPECT_DOUBLE_EQ(g.dk(), 2 * pi / 32.0);
    EXPECT_EQ(g.folded(0), 0);
    EXPECT_EQ(g.folded(31), 31);
    EXPECT_EQ(g.folded(32), -32);
    EXPECT_EQ(g.folded(63), -1);
    EXPECT_DOUBLE_EQ(g.x(0), -16.0);
    EXPECT_DOUBLE_EQ(g.x(32), 0.0);
    EXPECT_THROW(GridSpec(2, 48, 1.0), std::invalid_argument);
    EXPECT_THROW(GridSpec(3, 8, 1.0), std::invalid_argument);
    EXPECT_THROW(GridSpec(2, 8, -1.0), std::invalid_argument);
}

TEST(Fourier, PlancherelAndRoundTripOnRandomStates)
{
    std::mt19937_64 rng(31);
    for (int n : {64, 128, 256}) {
        const GridSpec g(2, n, 0.37 * n);
        for (int k = 0; k < 20; ++k) {
            const WaveFunction psi = random_state(g, rng);
            const WaveFunction hat = fourier_transform(psi, Direction::Forward);
            EXPECT_NEAR(hat.norm(), psi.norm(), 1e-12);
            const WaveFunction back = fourier_transform(hat, Direction::Inverse);
            EXPECT_LT(l2_diff(back, psi), 1e-12);
        }
    }
}

TEST(Fourier, RejectsWrongRepresentation)
{
    const GridSpec g(1, 16, 8.0);
    const WaveFunction psi(g, Representation::Momentum, std::vector<cplx>(16, 1.0));
    EXPECT_THROW(fourier_transform(psi, Direction::Forward), std::invalid_argument);
}

TEST(Fourier, GaussianPairMatchesClosedForm)
{
    const double sigma = 1.5;
    for (int d : {1, 2}) {
        const GridSpec g(d, 128, 40.0);
        const WaveFunction psi = make_gaussian_state(g, Point(d), Point(d), sigma);
        const WaveFunction hat = to_momentum(psi);
        // exp(-x^2/(4 s^2)) normalized  <->  (2 pi s^2)^{-d/4} (sqrt(2) s)^d exp(-s^2 xi^2)
        const double amp = std::pow(2 * pi * sigma * sigma, -0.25 * d) * std::pow(std::sqrt(2.0) * sigma, d);
        double err = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Point xi = g.momentum(i);
            err += std::norm(hat[i] - amp * std::exp(-sigma * sigma * dot(xi, xi)));
        }
        EXPECT_LT(std::sqrt(err * g.momentum_cell()), 1e-10) << "d=" << d;
    }
}

TEST(Fourier, PlaneWaveIsALatticeDelta)
{
    const GridSpec g(1, 32, 16.0);
    std::vector<cplx> a(32);
    for (int i = 0; i < 32; ++i) a[i] = std::polar(1.0, 3 * g.dk() * g.x(i));
    const WaveFunction hat = to_momentum(WaveFunction(g, Representation::Position, a));
    for (int s = 0; s < 32; ++s) {
        if (s == 3) EXPECT_GT(std::abs(hat[s]), 1.0);
        else EXPECT_LT(std::abs(hat[s]), 1e-12);
    }
}

TEST(Coneband, NormSupportAndTranslation)
{
    const GridSpec g(2, 128, 80.0);
    const Cone cone(Point{3.0, -4.0}, Point{0.0, 1.0}, pi / 3);
    const double k = 1.0;
    const Point p0{0.0, 2.5};
    const WaveFunction psi = make_coneband_state(g, cone, k, p0, 0.8, Point{0.0, 0.0});
    EXPECT_NEAR(psi.norm(), 1.0, 1e-12);
    const WaveFunction hat = to_momentum(psi);
    int violating = 0, support = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(hat[i]) == 0.0) continue;
        // below roundoff the transform pair is not exactly zero; count genuine support
        if (std::abs(hat[i]) < 1e-13) continue;
        ++support;
        if (!(cone.at_origin().depth(g.momentum(i)) > k)) ++violating;
    }
    EXPECT_GT(support, 100);
    EXPECT_EQ(violating, 0);

    // translation by a lattice vector shifts the density and keeps |psi_hat|
    const Point a{5.0 * g.h(), -3.0 * g.h()};
    const WaveFunction moved = make_coneband_state(g, cone, k, p0, 0.8, a);
    const WaveFunction mhat = to_momentum(moved);
    double dmod = 0.0, ddens = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dmod = std::max(dmod, std::abs(std::abs(mhat[i]) - std::abs(hat[i])));
    for (int i0 = 0; i0 < 128; ++i0)
        for (int i1 = 0; i1 < 128; ++i1) {
            const auto src = g.flatten(i0, i1);
            const auto dst = g.flatten((i0 + 5) % 128, (i1 - 3 + 128) % 128);
            ddens = std::max(ddens, std::abs(std::norm(moved[dst]) - std::norm(psi[src])));
        }
    EXPECT_LT(dmod, 1e-13);
    EXPECT_LT(ddens, 1e-13);
}

TEST(Coneband, ExactZeroOutsideTheBall)
{
    const GridSpec g(2, 64, 40.0);
    const Cone cone(Point{0.0, 0.0}, Point{0.0, 1.0}, pi / 2);
    // build the momentum amplitudes directly and check the zero pattern is exact
    const WaveFunction psi = make_coneband_state(g, cone, 0.5, Point{0.0, 1.5}, 0.6, Point{0.0, 0.0});
    const WaveFunction hat = to_momentum(psi);
    double outside = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point d = g.momentum(i) - Point{0.0, 1.5};
        if (norm(d) >= 0.6) outside = std::max(outside, std::abs(hat[i]));
    }
    EXPECT_LT(outside, 1e-14);
}

TEST(Coneband, RejectsMarginViolation)
{
    const GridSpec g(2, 64, 40.0);
    const Cone cone(Point{0.0, 0.0}, Point{0.0, 1.0}, pi / 2);
    EXPECT_THROW(make_coneband_state(g, cone, 1.0, Point{0.0, 1.5}, 0.6, Point{0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(make_coneband_state(g, cone, 1.0, Point{0.0, 3.0}, -0.6, Point{0.0, 0.0}), std::invalid_argument);
    EXPECT_NO_THROW(make_coneband_state(g, cone, 1.0, Point{0.0, 3.0}, 0.6, Point{0.0, 0.0}));
}

TEST(Gaussian, MomentsAndNorm)
{
    const GridSpec g(2, 128, 64.0);
    const Point x0{3.3, -2.1}, p0{0.7, -1.2};
    const WaveFunction psi = make_gaussian_state(g, x0, p0, 2.0);
    EXPECT_NEAR(psi.norm(), 1.0, 1e-12);
    Point xm(2), pm(2);
    for (std::size_t i = 0; i < g.size(); ++i) xm += g.position(i) * (std::norm(psi[i]) * g.cell_volume());
    const WaveFunction hat = to_momentum(psi);
    for (std::size_t i = 0; i < g.size(); ++i) pm += g.momentum(i) * (std::norm(hat[i]) * g.momentum_cell());
    for (int a = 0; a < 2; ++a) {
        EXPECT_NEAR(xm[a], x0[a], g.h());
        EXPECT_NEAR(pm[a], p0[a], g.dk());
    }
}

TEST(Gaussian, RejectsOutOfRangeSigma)
{
    const GridSpec g(2, 64, 32.0);
    EXPECT_THROW(make_gaussian_state(g, Point(2), Point(2), 1.0), std::invalid_argument);  // < 4h
    EXPECT_THROW(make_gaussian_state(g, Point(2), Point(2), 2.5), std::invalid_argument);  // > L/16
    EXPECT_NO_THROW(make_gaussian_state(g, Point(2), Point(2), 2.0));
}

TEST(RandomBandlimited, DeterministicAndNormalized)
{
    const GridSpec g(2, 64, 64.0);
    const auto a = make_random_bandlimited_state(g, Point{1.0, 2.0}, 4.0, 1.5, 6, 99);
    const auto b = make_random_bandlimited_state(g, Point{1.0, 2.0}, 4.0, 1.5, 6, 99);
    const auto c = make_random_bandlimited_state(g, Point{1.0, 2.0}, 4.0, 1.5, 6, 100);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
    EXPECT_EQ(distance(a, b), 0.0);
    EXPECT_GT(distance(a, c), 1e-3);
}

TEST(Mass, Examples)
{
    const GridSpec g(2, 128, 64.0);
    // the lattice is mirror-symmetric about x = h/2
    const WaveFunction psi = make_gaussian_state(g, Point{0.5 * g.h(), 0.0}, Point{0.0, 0.0}, 2.0);
    EXPECT_NEAR(mass_in_region(psi, [](const Point&) { return true; }), psi.norm(), 1e-14);
    const double half = mass_in_region(psi, [&](const Point& x) { return x[0] > 0.5 * g.h(); });
    EXPECT_NEAR(half, psi.norm() / std::sqrt(2.0), 1e-6);
    const auto A = [](const Point& x) { return x[0] > 1.0 && x[1] > 0.0; };
    const auto B = [](const Point& x) { return x[0] < -2.0; };
    const double ma = mass_in_region(psi, A), mb = mass_in_region(psi, B);
    const double mab = mass_in_region(psi, [&](const Point& x) { return A(x) || B(x); });
    EXPECT_NEAR(mab * mab, ma * ma + mb * mb, 1e-12);
}

TEST(Mass, MonotoneAndLipschitz)
{
    std::mt19937_64 rng(32);
    const GridSpec g(2, 64, 32.0);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int k = 0; k < 20; ++k) {
        const WaveFunction a = random_state(g, rng), b = random_state(g, rng);
        const double r1 = std::abs(u(rng)), r2 = r1 + std::abs(u(rng));
        const auto small = [r1](const Point& x) { return norm(x) < r1; };
        const auto big = [r2](const Point& x) { return norm(x) < r2; };
        EXPECT_LE(mass_in_region(a, small), mass_in_region(a, big) + 1e-15);
        const WaveFunction diff = axpy(a, -1.0, b);
        EXPECT_LE(std::abs(mass_in_region(a, big) - mass_in_region(b, big)), mass_in_region(diff, big) + 1e-14);
    }
}

TEST(BinaryContainer, RoundTripAndHeader)
{
    const GridSpec g(2, 16, 12.5);
    std::mt19937_64 rng(33);
    const WaveFunction psi = random_state(g, rng);
    const auto dir = std::filesystem::temp_directory_path() / "conescat_grid_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "state.bin").string();
    write_state(path, psi);
    EXPECT_EQ(std::filesystem::file_size(path), 20u + 16u * 16u * 16u);
    const WaveFunction back = read_state(path);
    EXPECT_EQ(back.grid(), g);
    EXPECT_EQ(back.representation(), Representation::Position);
    EXPECT_EQ(distance(back, psi), 0.0);

    std::ifstream is(path, std::ios::binary);
    std::int32_t dim = 0, n = 0, flag = -1;
    double len = 0.0;
    is.read(reinterpret_cast<char*>(&dim), 4);
    is.read(reinterpret_cast<char*>(&n), 4);
    is.read(reinterpret_cast<char*>(&len), 8);
    is.read(reinterpret_cast<char*>(&flag), 4);
    EXPECT_EQ(dim, 2);
    EXPECT_EQ(n, 16);
    EXPECT_EQ(len, 12.5);
    EXPECT_EQ(flag, 0);

    const std::vector<double> field(g.size(), 0.25);
    write_real_field((dir / "v.bin").string(), g, field);
    EXPECT_EQ(std::filesystem::file_size(dir / "v.bin"), 20u + 8u * 256u);
    EXPECT_THROW(read_state((dir / "v.bin").string()), std::runtime_error);
    std::filesystem::remove_all(dir);
}
