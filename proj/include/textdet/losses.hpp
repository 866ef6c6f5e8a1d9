#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "textdet/geometry.hpp"
#include "textdet/labelgen.hpp"

namespace textdet {

/// Training-loss configuration. Defaults are the reference operating point:
/// weights 40 / 1 / 0.01 with the accuracy weight switching to 1 after 60k
/// iterations, focal alpha 0.25 and gamma 2, 64x64 masks, 256 candidates
/// above IoU 0.5.
struct LossConfig {
    double lambda_cls = 40.0;
    double lambda_reg = 1.0;
    double lambda_acc_initial = 0.01;
    double lambda_acc_final = 1.0;
    long lambda_acc_switch_iteration = 60000;
    double alpha = 0.25;
    double gamma = 2.0;
    double tau = 0.02;  // soft-raster temperature as a fraction of the mask frame width
    int mask_resolution = 64;
    int candidate_count = 256;
    double candidate_min_iou = 0.5;

    double lambda_acc(long iteration) const {
        return iteration < lambda_acc_switch_iteration ? lambda_acc_initial : lambda_acc_final;
    }
};

struct SmoothL1 {
    double value;
    double deriv;
};

/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
inline SmoothL1 smooth_l1(double x) {
    if (std::abs(x) < 1.0) return {0.5 * x * x, x};
    return {std::abs(x) - 0.5, x > 0.0 ? 1.0 : -1.0};
}

struct RegLossResult {
    double value = 0.0;
    std::vector<std::vector<Vec2>> vertex_grads;  // per pair, per predicted vertex
    std::vector<std::size_t> rotations;           // chosen ground-truth rotation per pair

    std::vector<double> flat_grad() const {
        std::vector<double> out;
        for (const auto& pair : vertex_grads) {
            for (const Vec2& g : pair) {
                out.push_back(g.x);
                out.push_back(g.y);
            }
        }
        return out;
    }
};

/// Starting-point-independent coordinate regression loss: for each pair the
/// per-coordinate smooth-L1 sum is evaluated for every cyclic rotation of
/// the ground-truth vertex sequence and the minimum is kept (ties to the
/// smallest rotation). Gradients flow only through the winning rotation.
inline RegLossResult reg_loss(std::span<const Polygon> pred, std::span<const Polygon> gt) {
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("reg_loss: pred and gt pair counts differ");
    }
    RegLossResult result;
    result.vertex_grads.reserve(pred.size());
    result.rotations.reserve(pred.size());
    for (std::size_t m = 0; m < pred.size(); ++m) {
        const auto& pv = pred[m].vertices();
        const auto& gv = gt[m].vertices();
        const std::size_t n = pv.size();
        if (gv.size() != n) {
            throw std::invalid_argument("reg_loss: vertex counts differ within a pair");
        }
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const Vec2& g = gv[(j + i) % n];
                sum += smooth_l1(pv[i].x - g.x).value + smooth_l1(pv[i].y - g.y).value;
            }
            if (sum < best) {
                best = sum;
                best_j = j;
            }
        }
        result.value += best;
        result.rotations.push_back(best_j);
        std::vector<Vec2> grad(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2& g = gv[(best_j + i) % n];
            grad[i] = {smooth_l1(pv[i].x - g.x).deriv, smooth_l1(pv[i].y - g.y).deriv};
        }
        result.vertex_grads.push_back(std::move(grad));
    }
    return result;
}

struct AccLossResult {
    double value = 0.0;
    std::vector<Vec2> vertex_grad;  // w.r.t. predicted vertices, pixel units
    Frame frame;

    std::vector<double> flat_grad() const {
        std::vector<double> out;
        out.reserve(vertex_grad.size() * 2);
        for (const Vec2& g : vertex_grad) {
            out.push_back(g.x);
            out.push_back(g.y);
        }
        return out;
    }
};

/// Shared normalization window for a pair: the joint bounding box padded 5%
/// per side and made square by expanding the short axis symmetrically.
inline Frame acc_loss_frame(const Polygon& pred, const Polygon& gt, int resolution) {
    auto bp = pred.bounds();
    auto bg = gt.bounds();
    double min_x = std::min(bp.min_x, bg.min_x);
    double min_y = std::min(bp.min_y, bg.min_y);
    double max_x = std::max(bp.max_x, bg.max_x);
    double max_y = std::max(bp.max_y, bg.max_y);
    double w = max_x - min_x;
    double h = max_y - min_y;
    if (w <= 0.0 && h <= 0.0) {
        throw std::invalid_argument("acc_loss: degenerate frame (zero extent)");
    }
    min_x -= 0.05 * w;
    max_x += 0.05 * w;
    min_y -= 0.05 * h;
    max_y += 0.05 * h;
    w = max_x - min_x;
    h = max_y - min_y;
    double side = std::max(w, h);
    return Frame({min_x - (side - w) / 2.0, min_y - (side - h) / 2.0}, side, side, resolution);
}

/// Text instance accuracy loss: mean L1 discrepancy between the soft mask of
/// the prediction and the hard mask of the ground truth, both rendered in
/// the given frame. Gradients treat the frame as fixed.
inline AccLossResult acc_loss(const Polygon& pred, const Polygon& gt, const Frame& frame,
                              const LossConfig& config) {
    double tau_px = config.tau * frame.width;
    SoftRaster soft = rasterize_soft(pred, frame, tau_px);
    Mask hard = rasterize_hard(gt, frame);
    const std::size_t cells = soft.mask.values.size();
    std::vector<double> upstream(cells, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        double diff = soft.mask.values[i] - hard.values[i];
        sum += std::abs(diff);
        upstream[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / static_cast<double>(cells);
    }
    AccLossResult result{sum / static_cast<double>(cells), soft.vertex_gradient(upstream), frame};
    return result;
}

inline AccLossResult acc_loss(const Polygon& pred, const Polygon& gt, const LossConfig& config) {
    return acc_loss(pred, gt, acc_loss_frame(pred, gt, config.mask_resolution), config);
}

struct ClsLossResult {
    double value = 0.0;
    std::vector<double> score_grad;  // per cell, zero at ignore cells
};

/// Focal classification loss summed over non-ignore cells. Scores are
/// clamped to [1e-7, 1 - 1e-7] before the logs.
inline ClsLossResult cls_loss(std::span<const double> scores, std::span<const CellLabel> targets,
                              double alpha, double gamma) {
    if (scores.size() != targets.size()) {
        throw std::invalid_argument("cls_loss: score and target sizes differ");
    }
    constexpr double kClamp = 1e-7;
    ClsLossResult result;
    result.score_grad.assign(scores.size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (targets[i] == CellLabel::Ignore) continue;
        double p = std::clamp(scores[i], kClamp, 1.0 - kClamp);
        bool clamped = scores[i] < kClamp || scores[i] > 1.0 - kClamp;
        if (targets[i] == CellLabel::Positive) {
            double mod = std::pow(1.0 - p, gamma);
            result.value += -alpha * mod * std::log(p);
            if (!clamped) {
                double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(1.0 - p, gamma - 1.0);
                result.score_grad[i] = -alpha * (-dmod * std::log(p) + mod / p);
            }
        } else {
            double mod = std::pow(p, gamma);
            result.value += -(1.0 - alpha) * mod * std::log(1.0 - p);
            if (!clamped) {
                double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0);
                result.score_grad[i] = -(1.0 - alpha) * (dmod * std::log(1.0 - p) - mod / (1.0 - p));
            }
        }
    }
    return result;
}

/// Seeded uniform subset of the candidate pairs with IoU strictly above the
/// threshold; returns indices into the input list, at most candidate_count.
inline std::vector<std::size_t> sample_candidates(std::span<const double> ious,
                                                  const LossConfig& config, std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < ious.size(); ++i) {
        if (ious[i] > config.candidate_min_iou) eligible.push_back(i);
    }
    if (eligible.size() <= static_cast<std::size_t>(config.candidate_count)) return eligible;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(config.candidate_count));
    std::sample(eligible.begin(), eligible.end(), std::back_inserter(out),
                static_cast<std::size_t>(config.candidate_count), rng);
    return out;
}

struct LossTerm {
    double value = 0.0;
    std::vector<double> grad;
};

struct TotalLoss {
    double value = 0.0;
    LossTerm cls;  // gradients already scaled by the component weight
    LossTerm reg;
    LossTerm acc;
    double lambda_acc = 0.0;
};

/// Weighted total: lambda_cls * cls + lambda_reg * reg + lambda_acc * acc,
/// with lambda_acc following the iteration schedule. Component gradients
/// combine linearly under the same weights.
inline TotalLoss total_loss(const LossTerm& cls, const LossTerm& reg, const LossTerm& acc,
                            const LossConfig& config, long iteration) {
    const double la = config.lambda_acc(iteration);
    TotalLoss out;
    out.lambda_acc = la;
    out.value = config.lambda_cls * cls.value + config.lambda_reg * reg.value + la * acc.value;
    auto scale = [](const LossTerm& term, double w) {
        LossTerm scaled{w * term.value, term.grad};
        for (double& g : scaled.grad) g *= w;
        return scaled;
    };
    out.cls = scale(cls, config.lambda_cls);
    out.reg = scale(reg, config.lambda_reg);
    out.acc = scale(acc, la);
    return out;
}

}  // namespace textdet
