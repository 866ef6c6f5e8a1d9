#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace textdet {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline Vec2 operator*(Vec2 v, double s) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

/// Simple polygon in image coordinates (x right, y down), vertices ordered
/// clockwise on screen. Construction normalizes reversed input by flipping
/// the vertex order while keeping the first vertex first, so downstream
/// code can rely on one orientation. Degenerate (zero-area) inputs are
/// allowed; rasterization and IoU treat them as empty.
class Polygon {
public:
    explicit Polygon(std::vector<Vec2> vertices) : verts_(std::move(vertices)) {
        if (verts_.size() < 3) {
            throw std::invalid_argument("polygon needs at least 3 vertices, got " +
                                        std::to_string(verts_.size()));
        }
        for (const Vec2& v : verts_) {
            if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
                throw std::invalid_argument("polygon has non-finite coordinates");
            }
        }
        if (shoelace_sum() < 0.0) {
            std::reverse(verts_.begin() + 1, verts_.end());
        }
    }

    const std::vector<Vec2>& vertices() const { return verts_; }
    std::size_t size() const { return verts_.size(); }
    const Vec2& operator[](std::size_t i) const { return verts_[i]; }

    struct Bounds {
        double min_x, min_y, max_x, max_y;
    };

    Bounds bounds() const {
        Bounds b{verts_[0].x, verts_[0].y, verts_[0].x, verts_[0].y};
        for (const Vec2& v : verts_) {
            b.min_x = std::min(b.min_x, v.x);
            b.min_y = std::min(b.min_y, v.y);
            b.max_x = std::max(b.max_x, v.x);
            b.max_y = std::max(b.max_y, v.y);
        }
        return b;
    }

    /// True when no two non-adjacent edges intersect. O(n^2).
    bool is_simple() const {
        const std::size_t n = verts_.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
                if (segments_intersect(verts_[i], verts_[(i + 1) % n],
                                       verts_[j], verts_[(j + 1) % n])) {
                    return false;
                }
            }
        }
        return true;
    }

    bool is_convex() const {
        const std::size_t n = verts_.size();
        bool any_positive = false;
        for (std::size_t i = 0; i < n; ++i) {
            Vec2 e1 = verts_[(i + 1) % n] - verts_[i];
            Vec2 e2 = verts_[(i + 2) % n] - verts_[(i + 1) % n];
            double c = cross(e1, e2);
            if (c < 0.0) return false;
            if (c > 0.0) any_positive = true;
        }
        return any_positive;
    }

private:
    double shoelace_sum() const {
        double s = 0.0;
        for (std::size_t i = 0; i < verts_.size(); ++i) {
            const Vec2& a = verts_[i];
            const Vec2& b = verts_[(i + 1) % verts_.size()];
            s += cross(a, b);
        }
        return s;
    }

    static bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
        auto orient = [](Vec2 p, Vec2 q, Vec2 r) { return cross(q - p, r - p); };
        double d1 = orient(c, d, a);
        double d2 = orient(c, d, b);
        double d3 = orient(a, b, c);
        double d4 = orient(a, b, d);
        if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
            ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
            return true;
        }
        auto on_seg = [](Vec2 p, Vec2 q, Vec2 r) {
            return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) &&
                   std::min(p.y, q.y) <= r.y && r.y <= std::max(p.y, q.y);
        };
        if (d1 == 0 && on_seg(c, d, a)) return true;
        if (d2 == 0 && on_seg(c, d, b)) return true;
        if (d3 == 0 && on_seg(a, b, c)) return true;
        if (d4 == 0 && on_seg(a, b, d)) return true;
        return false;
    }

    std::vector<Vec2> verts_;
};

/// Shoelace area of the stored vertex sequence. Non-negative after the
/// constructor's orientation normalization; the sign tracks orientation
/// for raw sequences fed through construction.
inline double signed_area(const Polygon& poly) {
    double s = 0.0;
    const auto& v = poly.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += cross(v[i], v[(i + 1) % v.size()]);
    }
    return 0.5 * s;
}

inline double perimeter(const Polygon& poly) {
    double len = 0.0;
    const auto& v = poly.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
        len += norm(v[(i + 1) % v.size()] - v[i]);
    }
    return len;
}

namespace detail {

inline bool point_on_boundary(const Polygon& poly, Vec2 p) {
    const auto& v = poly.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
        Vec2 a = v[i];
        Vec2 b = v[(i + 1) % v.size()];
        if (cross(b - a, p - a) != 0.0) continue;
        if (std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
            std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y)) {
            return true;
        }
    }
    return false;
}

}  // namespace detail

/// Even-odd membership; boundary points count as inside.
inline bool contains(const Polygon& poly, Vec2 p) {
    if (detail::point_on_boundary(poly, p)) return true;
    const auto& v = poly.vertices();
    bool odd = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
        Vec2 a = v[i];
        Vec2 b = v[(i + 1) % v.size()];
        if ((a.y > p.y) != (b.y > p.y)) {
            double x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_at) odd = !odd;
        }
    }
    return odd;
}

/// Distance from a point to the polygon boundary.
inline double boundary_distance(const Polygon& poly, Vec2 p) {
    const auto& v = poly.vertices();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i) {
        Vec2 a = v[i];
        Vec2 b = v[(i + 1) % v.size()];
        Vec2 e = b - a;
        double len2 = dot(e, e);
        double t = len2 > 0.0 ? std::clamp(dot(p - a, e) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, norm(p - (a + t * e)));
    }
    return best;
}

/// Resamples the boundary to exactly n points at uniform arc-length
/// spacing, starting at the original first vertex and preserving
/// orientation. Every output point lies on the input boundary.
inline Polygon resample(const Polygon& poly, int n) {
    if (n < 3) {
        throw std::invalid_argument("resample requires n >= 3, got " + std::to_string(n));
    }
    const auto& v = poly.vertices();
    const std::size_t m = v.size();
    std::vector<double> cum(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        cum[i + 1] = cum[i] + norm(v[(i + 1) % m] - v[i]);
    }
    const double total = cum[m];
    std::vector<Vec2> out;
    out.reserve(static_cast<std::size_t>(n));
    if (total == 0.0) {
        out.assign(static_cast<std::size_t>(n), v[0]);
        return Polygon(std::move(out));
    }
    for (int j = 0; j < n; ++j) {
        double s = total * static_cast<double>(j) / static_cast<double>(n);
        // First segment whose cumulative end exceeds s; skips zero-length edges.
        auto it = std::upper_bound(cum.begin(), cum.end(), s);
        std::size_t k = static_cast<std::size_t>(std::distance(cum.begin(), it)) - 1;
        k = std::min(k, m - 1);
        double seg = cum[k + 1] - cum[k];
        double t = seg > 0.0 ? (s - cum[k]) / seg : 0.0;
        out.push_back(v[k] + t * (v[(k + 1) % m] - v[k]));
    }
    return Polygon(std::move(out));
}

struct Frame {
    Vec2 origin;
    double width = 0.0;
    double height = 0.0;
    int resolution = 64;

    Frame(Vec2 origin_, double width_, double height_, int resolution_)
        : origin(origin_), width(width_), height(height_), resolution(resolution_) {
        if (width <= 0.0 || height <= 0.0 || resolution < 2) {
            throw std::invalid_argument("frame requires positive extent and resolution >= 2");
        }
    }

    Vec2 cell_center(int row, int col) const {
        return {origin.x + (col + 0.5) * width / resolution,
                origin.y + (row + 0.5) * height / resolution};
    }
};

struct Mask {
    int resolution = 0;
    std::vector<double> values;  // row-major, resolution^2, entries in [0, 1]

    explicit Mask(int resolution_)
        : resolution(resolution_),
          values(static_cast<std::size_t>(resolution_) * resolution_, 0.0) {}

    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * resolution + col]; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * resolution + col]; }

    double sum() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
};

/// Cell value 1 iff the cell-center point is inside the polygon.
/// Zero-area polygons rasterize to an empty mask.
inline Mask rasterize_hard(const Polygon& poly, const Frame& frame) {
    Mask mask(frame.resolution);
    if (std::abs(signed_area(poly)) == 0.0) return mask;
    for (int r = 0; r < frame.resolution; ++r) {
        for (int c = 0; c < frame.resolution; ++c) {
            if (contains(poly, frame.cell_center(r, c))) mask.at(r, c) = 1.0;
        }
    }
    return mask;
}

/// Soft occupancy mask: sigmoid(sign * distance / tau) per cell, where
/// distance is to the nearest boundary point and sign is +1 inside /
/// -1 outside (even-odd). Carries the analytic derivative of each cell
/// with respect to the endpoints of its nearest edge; derivatives with
/// respect to all other vertices are zero.
struct SoftRaster {
    Mask mask;
    std::size_t vertex_count = 0;
    std::vector<int> nearest_edge;                   // per cell; -1 for empty rasters
    std::vector<std::array<double, 4>> cell_grad;    // d(cell)/d(ax, ay, bx, by)

    explicit SoftRaster(int resolution)
        : mask(resolution),
          nearest_edge(static_cast<std::size_t>(resolution) * resolution, -1),
          cell_grad(static_cast<std::size_t>(resolution) * resolution, {0, 0, 0, 0}) {}

    /// d(cell value)/d(vertex coordinate); coord 0 is x, 1 is y.
    double cell_vertex_grad(std::size_t cell, std::size_t vertex, int coord) const {
        int e = nearest_edge[cell];
        if (e < 0) return 0.0;
        std::size_t a = static_cast<std::size_t>(e);
        std::size_t b = (a + 1) % vertex_count;
        if (vertex == a) return cell_grad[cell][coord];
        if (vertex == b) return cell_grad[cell][2 + coord];
        return 0.0;
    }

    /// Folds an upstream per-cell gradient into a per-vertex gradient.
    std::vector<Vec2> vertex_gradient(std::span<const double> upstream) const {
        std::vector<Vec2> grad(vertex_count, Vec2{0.0, 0.0});
        for (std::size_t cell = 0; cell < nearest_edge.size(); ++cell) {
            int e = nearest_edge[cell];
            if (e < 0 || upstream[cell] == 0.0) continue;
            std::size_t a = static_cast<std::size_t>(e);
            std::size_t b = (a + 1) % vertex_count;
            const auto& g = cell_grad[cell];
            grad[a].x += upstream[cell] * g[0];
            grad[a].y += upstream[cell] * g[1];
            grad[b].x += upstream[cell] * g[2];
            grad[b].y += upstream[cell] * g[3];
        }
        return grad;
    }
};

inline SoftRaster rasterize_soft(const Polygon& poly, const Frame& frame, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("rasterize_soft requires tau > 0");
    }
    SoftRaster out(frame.resolution);
    out.vertex_count = poly.size();
    if (std::abs(signed_area(poly)) == 0.0) return out;

    const auto& v = poly.vertices();
    const std::size_t n = v.size();
    for (int r = 0; r < frame.resolution; ++r) {
        for (int c = 0; c < frame.resolution; ++c) {
            const Vec2 q = frame.cell_center(r, c);
            double best_d2 = std::numeric_limits<double>::infinity();
            std::size_t best_edge = 0;
            double best_t = 0.0;
            Vec2 best_closest{};
            for (std::size_t i = 0; i < n; ++i) {
                Vec2 a = v[i];
                Vec2 e = v[(i + 1) % n] - a;
                double len2 = dot(e, e);
                double t = len2 > 0.0 ? std::clamp(dot(q - a, e) / len2, 0.0, 1.0) : 0.0;
                Vec2 closest = a + t * e;
                Vec2 diff = q - closest;
                double d2 = dot(diff, diff);
                if (d2 < best_d2) {  // strict: ties go to the lowest edge index
                    best_d2 = d2;
                    best_edge = i;
                    best_t = t;
                    best_closest = closest;
                }
            }
            const double d = std::sqrt(best_d2);
            const double sign = contains(poly, q) ? 1.0 : -1.0;
            const double value = 1.0 / (1.0 + std::exp(-sign * d / tau));
            const std::size_t cell = static_cast<std::size_t>(r) * frame.resolution + c;
            out.mask.values[cell] = value;
            out.nearest_edge[cell] = static_cast<int>(best_edge);
            if (d > 0.0) {
                // dd/da = -(1-t) u, dd/db = -t u with u the unit vector from the
                // projection to the query point (envelope theorem through t).
                Vec2 u = (q - best_closest) * (1.0 / d);
                double dv = value * (1.0 - value) * sign / tau;
                out.cell_grad[cell] = {dv * -(1.0 - best_t) * u.x, dv * -(1.0 - best_t) * u.y,
                                       dv * -best_t * u.x, dv * -best_t * u.y};
            }
        }
    }
    return out;
}

namespace detail {

// Sutherland-Hodgman clip of `subject` against one half-plane: keep points p
// with cross(b - a, p - a) >= 0 (the interior side for our orientation).
inline std::vector<Vec2> clip_halfplane(const std::vector<Vec2>& subject, Vec2 a, Vec2 b) {
    std::vector<Vec2> out;
    const std::size_t n = subject.size();
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 p = subject[i];
        Vec2 q = subject[(i + 1) % n];
        double sp = cross(b - a, p - a);
        double sq = cross(b - a, q - a);
        if (sp >= 0.0) out.push_back(p);
        if ((sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0)) {
            double t = sp / (sp - sq);
            out.push_back(p + t * (q - p));
        }
    }
    return out;
}

inline double sequence_area(const std::vector<Vec2>& v) {
    if (v.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += cross(v[i], v[(i + 1) % v.size()]);
    }
    return 0.5 * s;
}

// Sorted x positions where the boundary crosses the horizontal line at y.
inline void scanline_crossings(const Polygon& poly, double y, std::vector<double>& xs) {
    xs.clear();
    const auto& v = poly.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
        Vec2 a = v[i];
        Vec2 b = v[(i + 1) % v.size()];
        if ((a.y > y) != (b.y > y)) {
            xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
        }
    }
    std::sort(xs.begin(), xs.end());
}

}  // namespace detail

/// Exact IoU of two convex polygons via half-plane clipping.
inline double convex_iou_exact(const Polygon& a, const Polygon& b) {
    double area_a = signed_area(a);
    double area_b = signed_area(b);
    if (area_a == 0.0 && area_b == 0.0) return 0.0;
    std::vector<Vec2> clipped = a.vertices();
    const auto& bv = b.vertices();
    for (std::size_t i = 0; i < bv.size() && !clipped.empty(); ++i) {
        clipped = detail::clip_halfplane(clipped, bv[i], bv[(i + 1) % bv.size()]);
    }
    double inter = std::max(0.0, detail::sequence_area(clipped));
    double uni = area_a + area_b - inter;
    if (uni <= 0.0) return 0.0;
    return std::min(1.0, inter / uni);
}

/// Monte-carlo-free IoU estimate: even-odd membership of cell centers on a
/// resolution x resolution grid over the joint bounding box.
inline double polygon_iou_grid(const Polygon& a, const Polygon& b, int resolution) {
    if (resolution < 2) {
        throw std::invalid_argument("polygon_iou_grid requires resolution >= 2");
    }
    if (std::abs(signed_area(a)) == 0.0 && std::abs(signed_area(b)) == 0.0) return 0.0;
    auto ba = a.bounds();
    auto bb = b.bounds();
    double min_x = std::min(ba.min_x, bb.min_x);
    double min_y = std::min(ba.min_y, bb.min_y);
    double max_x = std::max(ba.max_x, bb.max_x);
    double max_y = std::max(ba.max_y, bb.max_y);
    double w = max_x - min_x;
    double h = max_y - min_y;
    if (w <= 0.0 || h <= 0.0) return 0.0;

    std::vector<double> xa, xb;
    long inter = 0;
    long uni = 0;
    for (int r = 0; r < resolution; ++r) {
        double y = min_y + (r + 0.5) * h / resolution;
        detail::scanline_crossings(a, y, xa);
        detail::scanline_crossings(b, y, xb);
        std::size_t ia = 0, ib = 0;
        bool in_a = false, in_b = false;
        for (int c = 0; c < resolution; ++c) {
            double x = min_x + (c + 0.5) * w / resolution;
            while (ia < xa.size() && xa[ia] < x) { in_a = !in_a; ++ia; }
            while (ib < xb.size() && xb[ib] < x) { in_b = !in_b; ++ib; }
            inter += (in_a && in_b) ? 1 : 0;
            uni += (in_a || in_b) ? 1 : 0;
        }
    }
    if (uni == 0) return 0.0;
    if (inter == uni) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Intersection-over-union. Exact clipping when both polygons are convex,
/// grid-sampled estimate otherwise. Two degenerate polygons give 0.
inline double polygon_iou(const Polygon& a, const Polygon& b, int resolution = 512) {
    if (a.is_convex() && b.is_convex()) return convex_iou_exact(a, b);
    return polygon_iou_grid(a, b, resolution);
}

}  // namespace textdet
