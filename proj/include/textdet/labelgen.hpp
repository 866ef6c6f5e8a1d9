#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "textdet/geometry.hpp"

namespace textdet {

/// One feature-level descriptor: cells per side, pixels per cell, and the
/// text-level band the level is responsible for.
struct LevelSpec {
    int index = 0;
    int map_size = 0;
    double grid_size = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// The canonical 7-level table (map sizes 64..2, strides 8..256).
inline const std::vector<LevelSpec>& canonical_levels() {
    static const std::vector<LevelSpec> table = {
        {0, 64, 8.0, 1.2, 10.0},   {1, 32, 16.0, 7.2, 20.0},  {2, 16, 32.0, 14.4, 35.2},
        {3, 8, 64.0, 28.8, 49.0},  {4, 6, 85.0, 38.9, 85.4},  {5, 4, 128.0, 57.6, 140.8},
        {6, 2, 256.0, 115.2, 268.8},
    };
    return table;
}

struct Annotation {
    Polygon polygon;
    bool ignore = false;
    std::string text;
};

/// Text level of a polygon: the area/perimeter ratio selects every level
/// whose [lower, upper] band contains it. Bands overlap, so an instance
/// can land on several levels; an empty result means no level.
inline std::vector<int> text_level(const Polygon& poly, const std::vector<LevelSpec>& levels) {
    double perim = perimeter(poly);
    if (perim <= 0.0) {
        throw std::invalid_argument("text_level requires a polygon with positive perimeter");
    }
    double ratio = std::abs(signed_area(poly)) / perim;
    std::vector<int> out;
    for (std::size_t k = 0; k < levels.size(); ++k) {
        if (levels[k].lower <= ratio && ratio <= levels[k].upper) {
            out.push_back(static_cast<int>(k));
        }
    }
    return out;
}

enum class CellLabel : unsigned char { Negative = 0, Positive = 1, Ignore = 2 };

struct LevelTargets {
    LevelSpec spec;
    std::vector<CellLabel> labels;   // map_size^2, row-major
    std::vector<int> instance;       // annotation index per positive cell, -1 otherwise
    std::vector<double> coords;      // map_size^2 * 2n, defined only at positive cells

    std::size_t cell(int row, int col) const {
        return static_cast<std::size_t>(row) * spec.map_size + col;
    }
};

struct TargetMaps {
    int n = 0;
    std::vector<LevelTargets> levels;
};

namespace detail {

inline Vec2 cell_center(const LevelSpec& level, int row, int col) {
    return {(col + 0.5) * level.grid_size, (row + 0.5) * level.grid_size};
}

struct CellRange {
    int row_begin, row_end, col_begin, col_end;
};

inline CellRange cells_overlapping(const LevelSpec& level, const Polygon::Bounds& b) {
    auto clamp_cell = [&](double coord) {
        long c = static_cast<long>(std::floor(coord / level.grid_size));
        return static_cast<int>(std::clamp<long>(c, 0, level.map_size - 1));
    };
    return {clamp_cell(b.min_y), clamp_cell(b.max_y) + 1, clamp_cell(b.min_x), clamp_cell(b.max_x) + 1};
}

}  // namespace detail

/// Builds per-level category and coordinate target maps from annotations.
/// Cells whose centers fall inside a resampled instance polygon become
/// positive and carry (vertex - center) / grid_size offsets; cells inside
/// ignore regions are excluded from loss. When two instances claim one
/// cell, the smaller-area instance wins.
inline TargetMaps encode(const std::vector<Annotation>& annotations,
                         const std::vector<LevelSpec>& levels, int n) {
    if (n < 3) {
        throw std::invalid_argument("encode requires n >= 3, got " + std::to_string(n));
    }
    TargetMaps maps;
    maps.n = n;
    maps.levels.reserve(levels.size());
    for (const LevelSpec& spec : levels) {
        std::size_t cells = static_cast<std::size_t>(spec.map_size) * spec.map_size;
        maps.levels.push_back({spec,
                               std::vector<CellLabel>(cells, CellLabel::Negative),
                               std::vector<int>(cells, -1),
                               std::vector<double>(cells * 2 * n, 0.0)});
    }

    struct Assigned {
        std::size_t annotation;
        Polygon shape;  // resampled to n
        double area;
        std::vector<int> level_set;
    };
    std::vector<Assigned> ignores;
    std::vector<Assigned> positives;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const Annotation& ann = annotations[i];
        if (perimeter(ann.polygon) <= 0.0) continue;
        std::vector<int> level_set = text_level(ann.polygon, levels);
        if (level_set.empty()) continue;
        Assigned a{i, resample(ann.polygon, n), std::abs(signed_area(ann.polygon)),
                   std::move(level_set)};
        (ann.ignore ? ignores : positives).push_back(std::move(a));
    }
    // Larger instances first so smaller ones overwrite shared cells.
    std::stable_sort(positives.begin(), positives.end(),
                     [](const Assigned& a, const Assigned& b) { return a.area > b.area; });

    auto mark = [&](const Assigned& a, bool as_ignore) {
        for (int k : a.level_set) {
            LevelTargets& lt = maps.levels[static_cast<std::size_t>(k)];
            auto range = detail::cells_overlapping(lt.spec, a.shape.bounds());
            for (int row = range.row_begin; row < range.row_end; ++row) {
                for (int col = range.col_begin; col < range.col_end; ++col) {
                    Vec2 center = detail::cell_center(lt.spec, row, col);
                    if (!contains(a.shape, center)) continue;
                    std::size_t cell = lt.cell(row, col);
                    if (as_ignore) {
                        lt.labels[cell] = CellLabel::Ignore;
                        continue;
                    }
                    lt.labels[cell] = CellLabel::Positive;
                    lt.instance[cell] = static_cast<int>(a.annotation);
                    const auto& verts = a.shape.vertices();
                    for (int i = 0; i < n; ++i) {
                        lt.coords[cell * 2 * n + 2 * i] =
                            (verts[static_cast<std::size_t>(i)].x - center.x) / lt.spec.grid_size;
                        lt.coords[cell * 2 * n + 2 * i + 1] =
                            (verts[static_cast<std::size_t>(i)].y - center.y) / lt.spec.grid_size;
                    }
                }
            }
        }
    };
    for (const Assigned& a : ignores) mark(a, true);
    for (const Assigned& a : positives) mark(a, false);
    return maps;
}

struct CellRef {
    int level = 0;
    int row = 0;
    int col = 0;
};

/// Inverse of the coordinate encoding: vertex_i = cell_center + offset_i * grid_size.
inline Polygon decode_cell(std::span<const double> offsets, CellRef cell,
                           const std::vector<LevelSpec>& levels) {
    if (cell.level < 0 || static_cast<std::size_t>(cell.level) >= levels.size()) {
        throw std::invalid_argument("decode_cell: level index out of range");
    }
    const LevelSpec& spec = levels[static_cast<std::size_t>(cell.level)];
    Vec2 center = detail::cell_center(spec, cell.row, cell.col);
    std::vector<Vec2> verts(offsets.size() / 2);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        verts[i] = {center.x + offsets[2 * i] * spec.grid_size,
                    center.y + offsets[2 * i + 1] * spec.grid_size};
    }
    return Polygon(std::move(verts));
}

/// One text record per positive cell: level,row,col,instance,offsets...
inline void write_target_records(const TargetMaps& maps, std::ostream& out) {
    char buf[32];
    for (std::size_t k = 0; k < maps.levels.size(); ++k) {
        const LevelTargets& lt = maps.levels[k];
        for (int row = 0; row < lt.spec.map_size; ++row) {
            for (int col = 0; col < lt.spec.map_size; ++col) {
                std::size_t cell = lt.cell(row, col);
                if (lt.labels[cell] != CellLabel::Positive) continue;
                out << k << ',' << row << ',' << col << ',' << lt.instance[cell];
                for (int i = 0; i < 2 * maps.n; ++i) {
                    std::snprintf(buf, sizeof buf, "%.17g", lt.coords[cell * 2 * maps.n + i]);
                    out << ',' << buf;
                }
                out << '\n';
            }
        }
    }
}

}  // namespace textdet
