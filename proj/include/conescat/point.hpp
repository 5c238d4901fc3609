#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <stdexcept>

namespace conescat {

inline constexpr int kMaxDim = 3;

// Small fixed-capacity vector; dimension is a runtime value (1..kMaxDim).
class Point {
public:
    Point() = default;

    explicit Point(int dim) : dim_(dim)
    {
        if (dim < 1 || dim > kMaxDim)
            throw std::invalid_argument("Point: dimension must be in 1.." + std::to_string(kMaxDim));
    }

    Point(std::initializer_list<double> xs) : Point(static_cast<int>(xs.size()))
    {
        std::copy(xs.begin(), xs.end(), c_.begin());
    }

    explicit Point(std::span<const double> xs) : Point(static_cast<int>(xs.size()))
    {
        std::copy(xs.begin(), xs.end(), c_.begin());
    }

    int dim() const noexcept { return dim_; }
    double operator[](int i) const noexcept { return c_[i]; }
    double& operator[](int i) noexcept { return c_[i]; }
    std::span<const double> coords() const noexcept { return {c_.data(), static_cast<std::size_t>(dim_)}; }

    Point& operator+=(const Point& o) noexcept
    {
        assert(o.dim_ == dim_);
        for (int i = 0; i < dim_; ++i) c_[i] += o.c_[i];
        return *this;
    }
    Point& operator-=(const Point& o) noexcept
    {
        assert(o.dim_ == dim_);
        for (int i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
        return *this;
    }
    Point& operator*=(double s) noexcept
    {
        for (int i = 0; i < dim_; ++i) c_[i] *= s;
        return *this;
    }

    friend Point operator+(Point a, const Point& b) noexcept { return a += b; }
    friend Point operator-(Point a, const Point& b) noexcept { return a -= b; }
    friend Point operator*(Point a, double s) noexcept { return a *= s; }
    friend Point operator*(double s, Point a) noexcept { return a *= s; }
    friend Point operator-(Point a) noexcept { return a *= -1.0; }

    friend bool operator==(const Point& a, const Point& b) noexcept
    {
        if (a.dim_ != b.dim_) return false;
        for (int i = 0; i < a.dim_; ++i)
            if (a.c_[i] != b.c_[i]) return false;
        return true;
    }

private:
    int dim_ = 0;
    std::array<double, kMaxDim> c_{};
};

inline double dot(const Point& a, const Point& b) noexcept
{
    double s = 0.0;
    for (int i = 0; i < a.dim(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Point& a) noexcept { return std::sqrt(dot(a, a)); }

inline Point zeros(int dim) { return Point(dim); }

} // namespace conescat
