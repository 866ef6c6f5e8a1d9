#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#include "textdet/geometry.hpp"
#include "textdet/labelgen.hpp"

namespace textdet {

inline constexpr double kDefaultScoreThreshold = 0.7;
inline constexpr double kDefaultNmsIou = 0.3;
inline constexpr double kDefaultMatchIou = 0.5;

struct Detection {
    Polygon polygon;
    double confidence = 0.0;
    int level = 0;
    int row = 0;
    int col = 0;
};

/// Per-level score and coordinate grids, the inference-side counterpart of
/// TargetMaps. scores[k] holds map_size^2 values, coords[k] holds
/// map_size^2 * 2n offsets in the same cell order.
struct PredictionMaps {
    int n = 0;
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<double>> coords;
};

/// Decodes one Detection per cell whose score exceeds the threshold.
inline std::vector<Detection> decode_detections(const PredictionMaps& maps,
                                                const std::vector<LevelSpec>& levels,
                                                double threshold = kDefaultScoreThreshold) {
    if (maps.scores.size() != levels.size() || maps.coords.size() != levels.size()) {
        throw std::invalid_argument("decode_detections: level count mismatch");
    }
    std::vector<Detection> out;
    for (std::size_t k = 0; k < levels.size(); ++k) {
        const LevelSpec& spec = levels[k];
        const std::size_t cells = static_cast<std::size_t>(spec.map_size) * spec.map_size;
        if (maps.scores[k].size() != cells ||
            maps.coords[k].size() != cells * 2 * static_cast<std::size_t>(maps.n)) {
            throw std::invalid_argument("decode_detections: grid shape mismatch at level " +
                                        std::to_string(k));
        }
        for (int row = 0; row < spec.map_size; ++row) {
            for (int col = 0; col < spec.map_size; ++col) {
                std::size_t cell = static_cast<std::size_t>(row) * spec.map_size + col;
                double score = maps.scores[k][cell];
                if (score <= threshold) continue;
                std::span<const double> offsets(
                    maps.coords[k].data() + cell * 2 * static_cast<std::size_t>(maps.n),
                    2 * static_cast<std::size_t>(maps.n));
                out.push_back({decode_cell(offsets, {static_cast<int>(k), row, col}, levels),
                               score, static_cast<int>(k), row, col});
            }
        }
    }
    return out;
}

/// Turns encoded targets into prediction maps with score 1 at every
/// positive cell, the fixture side of a synthetic decode pipeline.
inline PredictionMaps predictions_from_targets(const TargetMaps& maps) {
    PredictionMaps out;
    out.n = maps.n;
    for (const LevelTargets& lt : maps.levels) {
        std::vector<double> scores(lt.labels.size(), 0.0);
        for (std::size_t i = 0; i < lt.labels.size(); ++i) {
            if (lt.labels[i] == CellLabel::Positive) scores[i] = 1.0;
        }
        out.scores.push_back(std::move(scores));
        out.coords.push_back(lt.coords);
    }
    return out;
}

/// Greedy confidence-ordered suppression: a detection is dropped when its
/// polygon IoU with any kept detection exceeds the threshold. Confidence
/// ties keep the earlier list position.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold = kDefaultNmsIou,
                                  int iou_resolution = 512) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        return a.confidence > b.confidence;
    });
    std::vector<Detection> kept;
    for (Detection& det : dets) {
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (polygon_iou(det.polygon, k.polygon, iou_resolution) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(std::move(det));
    }
    return kept;
}

struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    double mean_iou_of_matched = 0.0;
    int true_positives = 0;
    int false_positives = 0;
    int false_negatives = 0;
    int ignored_matches = 0;
};

/// One-to-one greedy matching by descending confidence: each prediction
/// takes the unmatched non-ignore ground truth of highest IoU when that
/// IoU reaches match_iou. Predictions whose best overlap is an ignore
/// region at or above match_iou are discarded from both counts.
inline EvalReport evaluate(std::span<const Detection> preds, std::span<const Annotation> gts,
                           double match_iou = kDefaultMatchIou, int iou_resolution = 512) {
    std::vector<std::size_t> order(preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return preds[a].confidence > preds[b].confidence;
    });

    std::vector<bool> matched(gts.size(), false);
    int non_ignore = 0;
    for (const Annotation& gt : gts) {
        if (!gt.ignore) ++non_ignore;
    }

    EvalReport report;
    double iou_sum = 0.0;
    for (std::size_t idx : order) {
        const Detection& det = preds[idx];
        double best_free = 0.0;
        std::size_t best_free_gt = gts.size();
        double best_real = 0.0;
        double best_ignore = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            double iou = polygon_iou(det.polygon, gts[g].polygon, iou_resolution);
            if (gts[g].ignore) {
                best_ignore = std::max(best_ignore, iou);
                continue;
            }
            best_real = std::max(best_real, iou);
            if (!matched[g] && iou > best_free) {
                best_free = iou;
                best_free_gt = g;
            }
        }
        if (best_free >= match_iou && best_free_gt < gts.size()) {
            matched[best_free_gt] = true;
            ++report.true_positives;
            iou_sum += best_free;
        } else if (best_ignore >= match_iou && best_ignore >= best_real) {
            ++report.ignored_matches;
        } else {
            ++report.false_positives;
        }
    }
    report.false_negatives = non_ignore - report.true_positives;
    int counted = report.true_positives + report.false_positives;
    report.precision = counted > 0 ? static_cast<double>(report.true_positives) / counted : 0.0;
    report.recall = non_ignore > 0
                        ? static_cast<double>(report.true_positives) / non_ignore
                        : 0.0;
    report.f_measure = report.precision + report.recall > 0.0
                           ? 2.0 * report.precision * report.recall /
                                 (report.precision + report.recall)
                           : 0.0;
    report.mean_iou_of_matched =
        report.true_positives > 0 ? iou_sum / report.true_positives : 0.0;
    return report;
}

}  // namespace textdet
