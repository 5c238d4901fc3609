#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "point.hpp"

namespace conescat {

// Open cone {y : <y - vertex, axis> > cos(gamma) |y - vertex|}.
class Cone {
public:
    Cone(Point vertex, Point axis, double half_angle)
        : vertex_(vertex), axis_(axis), gamma_(half_angle)
    {
        if (vertex.dim() != axis.dim())
            throw std::invalid_argument("Cone: vertex and axis dimensions differ");
        if (std::abs(norm(axis) - 1.0) > 1e-12)
            throw std::invalid_argument("Cone: axis must be a unit vector");
        if (!(half_angle > 0.0 && half_angle < std::numbers::pi))
            throw std::invalid_argument("Cone: half_angle must lie in (0, pi)");
        sin_ = std::sin(gamma_);
        cos_ = std::cos(gamma_);
    }

    // Same as the constructor but normalizes the direction first.
    static Cone from_direction(Point vertex, Point direction, double half_angle)
    {
        const double n = norm(direction);
        if (!(n > 0.0)) throw std::invalid_argument("Cone: zero direction");
        return Cone(vertex, direction * (1.0 / n), half_angle);
    }

    const Point& vertex() const noexcept { return vertex_; }
    const Point& axis() const noexcept { return axis_; }
    double half_angle() const noexcept { return gamma_; }
    int dim() const noexcept { return axis_.dim(); }

    bool contains(const Point& y) const noexcept
    {
        const Point w = y - vertex_;
        return dot(w, axis_) > cos_ * norm(w);
    }

    // Euclidean distance from y to the complement of the cone.
    double depth(const Point& y) const noexcept
    {
        const Point w = y - vertex_;
        const double a = dot(w, axis_);
        if (dim() == 1) return std::max(0.0, a);
        const double rho = norm(w);
        const double b = std::sqrt(std::max(0.0, rho * rho - a * a));
        const double theta = std::atan2(b, a);
        if (theta >= gamma_) return 0.0;
        // obtuse cones: the vertex is the closest complement point
        if (gamma_ - theta >= std::numbers::pi / 2) return rho;
        return std::max(0.0, a * sin_ - b * cos_);
    }

    // Length of the axial shift that realizes A_r as a translated cone.
    double shift_length(double r) const noexcept { return dim() == 1 ? r : r / sin_; }

    Cone shifted(double r) const { return Cone(vertex_ + axis_ * shift_length(r), axis_, gamma_); }

    // The same direction set with vertex at the origin (momentum cone).
    Cone at_origin() const { return Cone(Point(dim()), axis_, gamma_); }

private:
    Point vertex_;
    Point axis_;
    double gamma_;
    double sin_ = 0.0;
    double cos_ = 0.0;
};

inline bool cone_contains(const Cone& cone, const Point& y) noexcept { return cone.contains(y); }
inline double cone_depth(const Cone& cone, const Point& y) noexcept { return cone.depth(y); }

// y in A_r(cone). Nonnegative r uses the distance, negative r the shifted cone.
inline bool cone_region_contains(const Cone& cone, double r, const Point& y)
{
    if (r >= 0.0) return cone.depth(y) > r;
    return cone.shifted(r).contains(y);
}

class ConeFamily {
public:
    explicit ConeFamily(std::vector<Cone> cones) : cones_(std::move(cones))
    {
        if (cones_.empty()) throw std::invalid_argument("ConeFamily: needs at least one cone");
        for (const auto& c : cones_)
            if (c.dim() != cones_.front().dim())
                throw std::invalid_argument("ConeFamily: mixed dimensions");
    }

    const std::vector<Cone>& cones() const noexcept { return cones_; }
    std::size_t size() const noexcept { return cones_.size(); }
    const Cone& operator[](std::size_t i) const { return cones_[i]; }
    int dim() const noexcept { return cones_.front().dim(); }

    double max_depth(const Point& y) const noexcept
    {
        double d = 0.0;
        for (const auto& c : cones_) d = std::max(d, c.depth(y));
        return d;
    }

    bool all_acute() const noexcept
    {
        for (const auto& c : cones_)
            if (c.dim() > 1 && c.half_angle() > std::numbers::pi / 2) return false;
        return true;
    }

private:
    std::vector<Cone> cones_;
};

using FamilyRef = std::shared_ptr<const ConeFamily>;

inline FamilyRef share(ConeFamily f) { return std::make_shared<const ConeFamily>(std::move(f)); }

// Membership of y in the union over the family of A_r.
inline bool region_contains(const ConeFamily& family, double r, const Point& y)
{
    for (const auto& c : family.cones())
        if (cone_region_contains(c, r, y)) return true;
    return false;
}

enum class RegionKind { Out, OutM, In, Space, Full, Complement };

inline const char* to_string(RegionKind k)
{
    switch (k) {
    case RegionKind::Out: return "OUT";
    case RegionKind::OutM: return "OUT_M";
    case RegionKind::In: return "IN";
    case RegionKind::Space: return "SPACE";
    case RegionKind::Full: return "FULL";
    case RegionKind::Complement: return "COMPLEMENT";
    }
    return "?";
}

using SpatialPredicate = std::function<bool(const Point&)>;

// Subset of phase space. Cone-based kinds are unions over the family members.
class PhaseRegion {
public:
    static PhaseRegion out(FamilyRef family, double n)
    {
        return cone_kind(RegionKind::Out, std::move(family), n, 0.0);
    }
    static PhaseRegion out_m(FamilyRef family, double n, double m)
    {
        return cone_kind(RegionKind::OutM, std::move(family), n, m);
    }
    static PhaseRegion incoming(FamilyRef family, double n, double m)
    {
        return cone_kind(RegionKind::In, std::move(family), n, m);
    }
    static PhaseRegion space(SpatialPredicate pred)
    {
        if (!pred) throw std::invalid_argument("PhaseRegion: empty spatial predicate");
        PhaseRegion r(RegionKind::Space);
        r.spatial_ = std::move(pred);
        return r;
    }
    // SPACE(union of A_r) over the family.
    static PhaseRegion space_of(FamilyRef family, double r)
    {
        if (!family) throw std::invalid_argument("PhaseRegion: null family");
        auto f = family;
        return space([f, r](const Point& y) { return region_contains(*f, r, y); });
    }
    static PhaseRegion full() { return PhaseRegion(RegionKind::Full); }
    static PhaseRegion complement(PhaseRegion of)
    {
        PhaseRegion r(RegionKind::Complement);
        r.base_ = std::make_shared<const PhaseRegion>(std::move(of));
        return r;
    }

    RegionKind kind() const noexcept { return kind_; }
    double n() const noexcept { return n_; }
    double m() const noexcept { return m_; }
    const FamilyRef& family() const noexcept { return family_; }
    const PhaseRegion& base() const { return *base_; }
    bool is_cone_kind() const noexcept
    {
        return kind_ == RegionKind::Out || kind_ == RegionKind::OutM || kind_ == RegionKind::In;
    }

    // Position condition for family member i: x in A_n(C_i).
    bool position_condition(std::size_t i, const Point& x) const
    {
        return (*family_)[i].depth(x) > n_;
    }

    // Momentum condition for family member i (vertex moved to the origin).
    bool momentum_condition(std::size_t i, const Point& p) const
    {
        return momentum_test(kind_, (*family_)[i].at_origin(), m_, p);
    }

    // p in C (OUT), p in A_m(C) (OUT_M), -p in A_{-m}(C) (IN); C has its vertex at 0.
    static bool momentum_test(RegionKind kind, const Cone& momentum_cone, double m, const Point& p)
    {
        switch (kind) {
        case RegionKind::Out: return momentum_cone.contains(p);
        case RegionKind::OutM: return cone_region_contains(momentum_cone, m, p);
        case RegionKind::In: return cone_region_contains(momentum_cone, -m, -p);
        default: return true;
        }
    }

    bool spatial(const Point& x) const { return spatial_(x); }

    bool contains(const Point& x, const Point& p) const
    {
        switch (kind_) {
        case RegionKind::Full: return true;
        case RegionKind::Complement: return !base_->contains(x, p);
        case RegionKind::Space: return spatial_(x);
        default:
            for (std::size_t i = 0; i < family_->size(); ++i)
                if (momentum_condition(i, p) && position_condition(i, x)) return true;
            return false;
        }
    }

private:
    explicit PhaseRegion(RegionKind k) : kind_(k) {}

    static PhaseRegion cone_kind(RegionKind k, FamilyRef family, double n, double m)
    {
        if (!family) throw std::invalid_argument("PhaseRegion: null family");
        if (!(n >= 0.0)) throw std::invalid_argument("PhaseRegion: n must be nonnegative");
        if (!std::isfinite(m)) throw std::invalid_argument("PhaseRegion: m must be finite");
        PhaseRegion r(k);
        r.family_ = std::move(family);
        r.n_ = n;
        r.m_ = m;
        return r;
    }

    RegionKind kind_;
    FamilyRef family_;
    double n_ = 0.0;
    double m_ = 0.0;
    SpatialPredicate spatial_;
    std::shared_ptr<const PhaseRegion> base_;
};

inline bool phase_region_contains(const PhaseRegion& region, const Point& x, const Point& p)
{
    return region.contains(x, p);
}

struct DistanceBound {
    double value = 0.0;
    bool exact = false; // true when the analytic bound applies
};

// Lower bound on d(classically allowed set at time t, complement of union A_r).
// For IN regions t is the reversed time w and the bound is n - m*w - r.
inline DistanceBound ca_distance_lower_bound(const PhaseRegion& region, double t, double r)
{
    double raw = 0.0;
    switch (region.kind()) {
    case RegionKind::Out:
        raw = region.n() - r;
        break;
    case RegionKind::OutM:
        if (t < 0.0) throw std::invalid_argument("ca_distance_lower_bound: t must be >= 0 for OUT kinds");
        raw = region.n() + region.m() * t - r;
        break;
    case RegionKind::In:
        if (t < 0.0) throw std::invalid_argument("ca_distance_lower_bound: reversed time must be >= 0");
        raw = region.n() - region.m() * t - r;
        break;
    default:
        throw std::invalid_argument(std::string("ca_distance_lower_bound: unsupported region kind ") +
                                    to_string(region.kind()));
    }
    // The shift argument behind the bound needs convex members.
    if (!region.family()->all_acute()) return {0.0, false};
    return {std::max(0.0, raw), true};
}

// Scenario geometry descriptors.
struct SingleConeSpec {
    Cone cone;
};
struct BrokenSubspaceSpec {
    Point v1;
    Point v2;
    double r = 0.0;
};
struct SubspaceTubeSpec {
    Point direction; // direction of the line (d = 2)
};
struct ShortrangeSpec {
    int n_dirs = 8;
    int dim = 2;
};
using FamilyDescriptor = std::variant<SingleConeSpec, BrokenSubspaceSpec, SubspaceTubeSpec, ShortrangeSpec>;

namespace detail {

inline ConeFamily broken_subspace(const BrokenSubspaceSpec& s)
{
    if (s.v1.dim() != 2 || s.v2.dim() != 2)
        throw std::invalid_argument("broken_subspace: only d = 2 is supported");
    if (!(s.r > 0.0)) throw std::invalid_argument("broken_subspace: r must be positive");
    const Point u1 = s.v1 * (1.0 / norm(s.v1));
    const Point u2 = s.v2 * (1.0 / norm(s.v2));
    const Point sum = u1 + u2;
    const double c = std::clamp(dot(u1, u2), -1.0, 1.0);
    if (norm(sum) < 1e-9) throw std::invalid_argument("broken_subspace: v1 and v2 are antiparallel");
    if (c > 1.0 - 1e-12) throw std::invalid_argument("broken_subspace: v1 and v2 are parallel");
    const Point vs = sum * (1.0 / norm(sum));
    const double gamma = std::acos(c) / 2.0;
    const double shift = s.r / std::sin(gamma);
    return ConeFamily({Cone(vs * shift, vs, gamma), Cone(vs * (-shift), -vs, std::numbers::pi - gamma)});
}

inline ConeFamily subspace_tube(const SubspaceTubeSpec& s)
{
    if (s.direction.dim() != 2) throw std::invalid_argument("subspace_tube: only d = 2 is supported");
    const double n = norm(s.direction);
    if (!(n > 0.0)) throw std::invalid_argument("subspace_tube: zero direction");
    const Point normal{-s.direction[1] / n, s.direction[0] / n};
    const double half = std::numbers::pi / 2;
    return ConeFamily({Cone(Point(2), normal, half), Cone(Point(2), -normal, half)});
}

// Finite direction set; the complement of the union over-approximates the ball.
inline ConeFamily shortrange(const ShortrangeSpec& s)
{
    const double half = std::numbers::pi / 2;
    if (s.dim == 1) {
        if (s.n_dirs != 2) throw std::invalid_argument("shortrange_approx: d = 1 needs n_dirs = 2");
        return ConeFamily({Cone(Point(1), Point{1.0}, half), Cone(Point(1), Point{-1.0}, half)});
    }
    if (s.dim != 2) throw std::invalid_argument("shortrange_approx: only d = 1, 2 are supported");
    if (s.n_dirs < 3) throw std::invalid_argument("shortrange_approx: n_dirs must be >= 3");
    std::vector<Cone> cones;
    for (int j = 0; j < s.n_dirs; ++j) {
        const double a = 2.0 * std::numbers::pi * j / s.n_dirs;
        cones.emplace_back(Point(2), Point{std::cos(a), std::sin(a)}, half);
    }
    return ConeFamily(std::move(cones));
}

} // namespace detail

inline ConeFamily build_standard_family(const FamilyDescriptor& desc)
{
    return std::visit(
        [](const auto& s) -> ConeFamily {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, SingleConeSpec>) return ConeFamily({s.cone});
            else if constexpr (std::is_same_v<T, BrokenSubspaceSpec>) return detail::broken_subspace(s);
            else if constexpr (std::is_same_v<T, SubspaceTubeSpec>) return detail::subspace_tube(s);
            else return detail::shortrange(s);
        },
        desc);
}

} // namespace conescat
