#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace groundlab {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
    friend bool operator==(const Vec3& a, const Vec3& b) { return a.x == b.x && a.y == b.y && a.z == b.z; }

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// Coordinates are snapped to a 2^-20 m grid (sub-micrometer) so that adding a
// modest integer-grid offset to every position is exact in double arithmetic
// and relative offsets survive global translation bit-for-bit.
inline double snap_coord(double v) {
    constexpr double kGrid = 1048576.0;  // 2^20
    return std::round(v * kGrid) / kGrid;
}

inline Vec3 snap(const Vec3& v) { return {snap_coord(v.x), snap_coord(v.y), snap_coord(v.z)}; }

// Axis-aligned box, min corner <= max corner on every axis.
struct Box3 {
    Vec3 min;
    Vec3 max;

    Vec3 extents() const { return max - min; }
    Vec3 center() const { return {(min.x + max.x) * 0.5, (min.y + max.y) * 0.5, (min.z + max.z) * 0.5}; }
    double volume() const {
        const Vec3 e = extents();
        return std::max(0.0, e.x) * std::max(0.0, e.y) * std::max(0.0, e.z);
    }
    double half_diagonal() const { return extents().norm() * 0.5; }
    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
    }
    Box3 translated(const Vec3& t) const { return {min + t, max + t}; }
};

// Standard volume IoU of two axis-aligned boxes. Empty overlap or empty union
// gives 0.
inline double iou_3d(const Box3& a, const Box3& b) {
    const double ix = std::min(a.max.x, b.max.x) - std::max(a.min.x, b.min.x);
    const double iy = std::min(a.max.y, b.max.y) - std::max(a.min.y, b.min.y);
    const double iz = std::min(a.max.z, b.max.z) - std::max(a.min.z, b.min.z);
    if (ix <= 0.0 || iy <= 0.0 || iz <= 0.0) return 0.0;
    const double inter = ix * iy * iz;
    const double uni = a.volume() + b.volume() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

}  // namespace groundlab
