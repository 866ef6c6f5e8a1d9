#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "textdet/detect.hpp"
#include "textdet/geometry.hpp"
#include "textdet/labelgen.hpp"
#include "textdet/losses.hpp"

namespace textdet {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class AnnotationFormat { IcdarQuad, Curved14pt, PolygonJson };

inline AnnotationFormat parse_format_tag(std::string_view tag) {
    if (tag == "icdar2015-quad") return AnnotationFormat::IcdarQuad;
    if (tag == "curved-14pt") return AnnotationFormat::Curved14pt;
    if (tag == "polygon-json") return AnnotationFormat::PolygonJson;
    throw ParseError("unrecognized annotation format tag: " + std::string(tag));
}

struct DatasetSpec {
    AnnotationFormat format = AnnotationFormat::PolygonJson;
    std::string root;
    int n = 4;
    std::optional<std::vector<LevelSpec>> level_override;

    void validate() const {
        if (n < 3) throw std::invalid_argument("dataset resample count must be >= 3");
    }
};

namespace detail {

inline std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            return out;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline double parse_number(const std::string& field, int line_no) {
    std::size_t consumed = 0;
    double value = 0.0;
    try {
        value = std::stod(field, &consumed);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": not a number: '" + field + "'");
    }
    if (consumed != field.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": trailing characters in number: '" +
                         field + "'");
    }
    return value;
}

// Splits into lines, tolerating CRLF endings and a UTF-8 BOM on the first line.
inline std::vector<std::string> lines_of(std::string_view contents) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= contents.size()) {
        std::size_t pos = contents.find('\n', start);
        std::string_view line = pos == std::string_view::npos
                                    ? contents.substr(start)
                                    : contents.substr(start, pos - start);
        if (out.empty() && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
        if (line.ends_with('\r')) line.remove_suffix(1);
        out.emplace_back(line);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    while (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

inline bool blank(const std::string& s) {
    return s.find_first_not_of(" \t") == std::string::npos;
}

}  // namespace detail

/// Quadrilateral annotations, one per line: x1,y1,...,x4,y4,transcription.
/// A "###" transcription marks a don't-care region.
inline std::vector<Annotation> parse_icdar_quad(std::string_view contents) {
    std::vector<Annotation> out;
    auto lines = detail::lines_of(contents);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const int line_no = static_cast<int>(li) + 1;
        if (detail::blank(lines[li])) continue;
        auto fields = detail::split(lines[li], ',');
        if (fields.size() < 9) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 9+ fields, got " +
                             std::to_string(fields.size()));
        }
        std::vector<Vec2> verts(4);
        for (int i = 0; i < 4; ++i) {
            verts[static_cast<std::size_t>(i)] = {
                detail::parse_number(fields[static_cast<std::size_t>(2 * i)], line_no),
                detail::parse_number(fields[static_cast<std::size_t>(2 * i + 1)], line_no)};
        }
        std::string text = fields[8];
        for (std::size_t f = 9; f < fields.size(); ++f) text += "," + fields[f];
        out.push_back({Polygon(std::move(verts)), text == "###", std::move(text)});
    }
    return out;
}

/// Fixed 14-point polygon annotations: 28 comma-separated values per line.
inline std::vector<Annotation> parse_curved_14pt(std::string_view contents) {
    std::vector<Annotation> out;
    auto lines = detail::lines_of(contents);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const int line_no = static_cast<int>(li) + 1;
        if (detail::blank(lines[li])) continue;
        auto fields = detail::split(lines[li], ',');
        if (fields.size() != 28) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 28 values, got " +
                             std::to_string(fields.size()));
        }
        std::vector<Vec2> verts(14);
        for (int i = 0; i < 14; ++i) {
            verts[static_cast<std::size_t>(i)] = {
                detail::parse_number(fields[static_cast<std::size_t>(2 * i)], line_no),
                detail::parse_number(fields[static_cast<std::size_t>(2 * i + 1)], line_no)};
        }
        out.push_back({Polygon(std::move(verts)), false, ""});
    }
    return out;
}

/// Canonical interchange format: an array of {points, ignore?, text?}
/// records with at least 3 points each.
inline std::vector<Annotation> parse_polygon_json(std::string_view contents) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(contents);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("polygon json: ") + e.what());
    }
    if (!doc.is_array()) {
        throw ParseError("polygon json: top-level value must be an array of records");
    }
    std::vector<Annotation> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& rec = doc[i];
        std::string where = "polygon json record " + std::to_string(i);
        if (!rec.is_object() || !rec.contains("points") || !rec["points"].is_array()) {
            throw ParseError(where + ": missing 'points' array");
        }
        const auto& pts = rec["points"];
        if (pts.size() < 3) {
            throw ParseError(where + ": needs at least 3 points, got " +
                             std::to_string(pts.size()));
        }
        std::vector<Vec2> verts;
        verts.reserve(pts.size());
        for (const auto& p : pts) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
                throw ParseError(where + ": each point must be a [x, y] number pair");
            }
            verts.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        bool ignore = rec.value("ignore", false);
        std::string text = rec.value("text", std::string());
        out.push_back({Polygon(std::move(verts)), ignore, std::move(text)});
    }
    return out;
}

inline std::string write_polygon_json(std::span<const Annotation> annotations) {
    nlohmann::json doc = nlohmann::json::array();
    for (const Annotation& ann : annotations) {
        nlohmann::json rec;
        rec["points"] = nlohmann::json::array();
        for (const Vec2& v : ann.polygon.vertices()) {
            rec["points"].push_back({v.x, v.y});
        }
        rec["ignore"] = ann.ignore;
        if (!ann.text.empty()) rec["text"] = ann.text;
        doc.push_back(std::move(rec));
    }
    return doc.dump(2) + "\n";
}

inline std::vector<Annotation> parse_annotations(AnnotationFormat format,
                                                 std::string_view contents) {
    switch (format) {
        case AnnotationFormat::IcdarQuad: return parse_icdar_quad(contents);
        case AnnotationFormat::Curved14pt: return parse_curved_14pt(contents);
        default: return parse_polygon_json(contents);
    }
}

/// Plain-text PGM (P2), maxval 255, round-half-up cell values, row per line.
inline std::string to_pgm(const Mask& mask) {
    std::ostringstream out;
    out << "P2\n" << mask.resolution << ' ' << mask.resolution << "\n255\n";
    for (int r = 0; r < mask.resolution; ++r) {
        for (int c = 0; c < mask.resolution; ++c) {
            if (c > 0) out << ' ';
            out << std::lround(mask.at(r, c) * 255.0);
        }
        out << '\n';
    }
    return out.str();
}

inline void write_mask_pgm(const Mask& mask, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << to_pgm(mask);
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace detail {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[40];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

}  // namespace detail

/// Detection records: level,row,col,confidence,x0,y0,... (pixel vertices).
inline std::string write_detections(std::span<const Detection> dets) {
    std::ostringstream out;
    for (const Detection& d : dets) {
        out << d.level << ',' << d.row << ',' << d.col << ','
            << detail::format_double(d.confidence);
        for (const Vec2& v : d.polygon.vertices()) {
            out << ',' << detail::format_double(v.x) << ',' << detail::format_double(v.y);
        }
        out << '\n';
    }
    return out.str();
}

inline std::vector<Detection> parse_detections(std::string_view contents) {
    std::vector<Detection> out;
    auto lines = detail::lines_of(contents);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const int line_no = static_cast<int>(li) + 1;
        if (detail::blank(lines[li])) continue;
        auto fields = detail::split(lines[li], ',');
        if (fields.size() < 4 + 6 || (fields.size() - 4) % 2 != 0) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": detection record needs level,row,col,confidence and 3+ vertices");
        }
        int level = static_cast<int>(detail::parse_number(fields[0], line_no));
        int row = static_cast<int>(detail::parse_number(fields[1], line_no));
        int col = static_cast<int>(detail::parse_number(fields[2], line_no));
        double confidence = detail::parse_number(fields[3], line_no);
        std::vector<Vec2> verts((fields.size() - 4) / 2);
        for (std::size_t i = 0; i < verts.size(); ++i) {
            verts[i] = {detail::parse_number(fields[4 + 2 * i], line_no),
                        detail::parse_number(fields[5 + 2 * i], line_no)};
        }
        out.push_back({Polygon(std::move(verts)), confidence, level, row, col});
    }
    return out;
}

/// Prediction records: level,row,col,score,offsets... — the sparse text
/// form of per-level score/coordinate maps (absent cells carry score 0).
inline PredictionMaps parse_prediction_records(std::string_view contents,
                                               const std::vector<LevelSpec>& levels, int n) {
    PredictionMaps maps;
    maps.n = n;
    for (const LevelSpec& spec : levels) {
        std::size_t cells = static_cast<std::size_t>(spec.map_size) * spec.map_size;
        maps.scores.emplace_back(cells, 0.0);
        maps.coords.emplace_back(cells * 2 * static_cast<std::size_t>(n), 0.0);
    }
    auto lines = detail::lines_of(contents);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const int line_no = static_cast<int>(li) + 1;
        if (detail::blank(lines[li])) continue;
        auto fields = detail::split(lines[li], ',');
        if (fields.size() != 4 + 2 * static_cast<std::size_t>(n)) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(4 + 2 * n) + " fields, got " +
                             std::to_string(fields.size()));
        }
        int level = static_cast<int>(detail::parse_number(fields[0], line_no));
        int row = static_cast<int>(detail::parse_number(fields[1], line_no));
        int col = static_cast<int>(detail::parse_number(fields[2], line_no));
        if (level < 0 || static_cast<std::size_t>(level) >= levels.size()) {
            throw ParseError("line " + std::to_string(line_no) + ": level out of range");
        }
        const LevelSpec& spec = levels[static_cast<std::size_t>(level)];
        if (row < 0 || row >= spec.map_size || col < 0 || col >= spec.map_size) {
            throw ParseError("line " + std::to_string(line_no) + ": cell out of range");
        }
        std::size_t cell = static_cast<std::size_t>(row) * spec.map_size + col;
        maps.scores[static_cast<std::size_t>(level)][cell] =
            detail::parse_number(fields[3], line_no);
        for (int i = 0; i < 2 * n; ++i) {
            maps.coords[static_cast<std::size_t>(level)]
                       [cell * 2 * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] =
                detail::parse_number(fields[4 + static_cast<std::size_t>(i)], line_no);
        }
    }
    return maps;
}

/// Prediction records with score 1 at every positive cell of the targets.
inline std::string write_prediction_records(const TargetMaps& maps) {
    std::ostringstream out;
    for (std::size_t k = 0; k < maps.levels.size(); ++k) {
        const LevelTargets& lt = maps.levels[k];
        for (int row = 0; row < lt.spec.map_size; ++row) {
            for (int col = 0; col < lt.spec.map_size; ++col) {
                std::size_t cell = lt.cell(row, col);
                if (lt.labels[cell] != CellLabel::Positive) continue;
                out << k << ',' << row << ',' << col << ",1";
                for (int i = 0; i < 2 * maps.n; ++i) {
                    out << ',' << detail::format_double(lt.coords[cell * 2 * maps.n + i]);
                }
                out << '\n';
            }
        }
    }
    return out.str();
}

/// Serializes a loss configuration as key=value lines, together with the
/// inference constants, for golden-config comparison and CLI inspection.
inline std::string write_loss_config(const LossConfig& config) {
    std::ostringstream out;
    out << "lambda_cls=" << detail::format_double(config.lambda_cls) << '\n'
        << "lambda_reg=" << detail::format_double(config.lambda_reg) << '\n'
        << "lambda_acc_initial=" << detail::format_double(config.lambda_acc_initial) << '\n'
        << "lambda_acc_final=" << detail::format_double(config.lambda_acc_final) << '\n'
        << "lambda_acc_switch_iteration=" << config.lambda_acc_switch_iteration << '\n'
        << "alpha=" << detail::format_double(config.alpha) << '\n'
        << "gamma=" << detail::format_double(config.gamma) << '\n'
        << "tau=" << detail::format_double(config.tau) << '\n'
        << "mask_resolution=" << config.mask_resolution << '\n'
        << "candidate_count=" << config.candidate_count << '\n'
        << "candidate_min_iou=" << detail::format_double(config.candidate_min_iou) << '\n'
        << "score_threshold=" << detail::format_double(kDefaultScoreThreshold) << '\n'
        << "nms_iou=" << detail::format_double(kDefaultNmsIou) << '\n'
        << "match_iou=" << detail::format_double(kDefaultMatchIou) << '\n';
    return out.str();
}

inline std::string write_eval_report(const EvalReport& report) {
    std::ostringstream out;
    out << "precision=" << detail::format_double(report.precision) << '\n'
        << "recall=" << detail::format_double(report.recall) << '\n'
        << "f_measure=" << detail::format_double(report.f_measure) << '\n'
        << "mean_iou=" << detail::format_double(report.mean_iou_of_matched) << '\n'
        << "true_positives=" << report.true_positives << '\n'
        << "false_positives=" << report.false_positives << '\n'
        << "false_negatives=" << report.false_negatives << '\n'
        << "ignored_matches=" << report.ignored_matches << '\n';
    return out.str();
}

/// Level table override: index,map_size,grid_size,lower,upper per line.
inline std::vector<LevelSpec> parse_level_table(std::string_view contents) {
    std::vector<LevelSpec> out;
    auto lines = detail::lines_of(contents);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const int line_no = static_cast<int>(li) + 1;
        if (detail::blank(lines[li])) continue;
        auto fields = detail::split(lines[li], ',');
        if (fields.size() != 5) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": level row needs index,map_size,grid_size,lower,upper");
        }
        LevelSpec spec;
        spec.index = static_cast<int>(detail::parse_number(fields[0], line_no));
        spec.map_size = static_cast<int>(detail::parse_number(fields[1], line_no));
        spec.grid_size = detail::parse_number(fields[2], line_no);
        spec.lower = detail::parse_number(fields[3], line_no);
        spec.upper = detail::parse_number(fields[4], line_no);
        if (spec.map_size <= 0 || spec.grid_size <= 0.0 || spec.lower >= spec.upper) {
            throw ParseError("line " + std::to_string(line_no) + ": invalid level bounds");
        }
        out.push_back(spec);
    }
    if (out.empty()) throw ParseError("level table is empty");
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << contents;
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace textdet
