#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "textdet/geometry.hpp"
#include "textdet/losses.hpp"

namespace textdet {

enum class LossSelection { Reg, Acc, Both };

inline const char* to_string(LossSelection sel) {
    switch (sel) {
        case LossSelection::Reg: return "reg";
        case LossSelection::Acc: return "acc";
        default: return "both";
    }
}

struct FitStep {
    double loss = 0.0;
    double iou = 0.0;
};

struct FitResult {
    std::vector<FitStep> trajectory;  // state before each update; length <= step budget
    Polygon final_polygon;
    double final_iou = 0.0;
    int steps_used = 0;
    bool converged = false;
};

namespace detail {

constexpr int kFitIouResolution = 256;
constexpr double kConvergenceEps = 1e-8;
constexpr int kConvergenceWindow = 10;

}  // namespace detail

/// Plain gradient descent on the predicted polygon's vertex coordinates
/// under the selected losses. The regression arm uses lambda_reg; the
/// accuracy arm uses lambda_acc_final, the post-switch operating point.
/// Descent is deterministic; the seed parameter is accepted for interface
/// uniformity with the trial harness.
inline FitResult fit_polygon(const Polygon& init, const Polygon& target, LossSelection selection,
                             const LossConfig& config, int steps, double step_size,
                             std::uint64_t /*seed*/ = 0) {
    if (init.size() != target.size()) {
        throw std::invalid_argument("fit_polygon: init and target vertex counts differ");
    }
    if (!(step_size > 0.0)) {
        throw std::invalid_argument("fit_polygon: step_size must be positive");
    }
    const bool use_reg = selection != LossSelection::Acc;
    const bool use_acc = selection != LossSelection::Reg;
    std::vector<Polygon> targets{target};

    std::vector<Vec2> state = init.vertices();
    FitResult result{{}, init, 0.0, 0, false};
    result.trajectory.reserve(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        Polygon pred(state);
        state = pred.vertices();  // construction may renormalize orientation
        double loss = 0.0;
        std::vector<Vec2> grad(state.size(), Vec2{0, 0});
        if (use_reg) {
            std::vector<Polygon> preds{pred};
            RegLossResult r = reg_loss(preds, targets);
            loss += config.lambda_reg * r.value;
            for (std::size_t i = 0; i < grad.size(); ++i) {
                grad[i] = grad[i] + config.lambda_reg * r.vertex_grads[0][i];
            }
        }
        if (use_acc) {
            AccLossResult a = acc_loss(pred, target, config);
            loss += config.lambda_acc_final * a.value;
            for (std::size_t i = 0; i < grad.size(); ++i) {
                grad[i] = grad[i] + config.lambda_acc_final * a.vertex_grad[i];
            }
        }
        for (const Vec2& g : grad) {
            if (!std::isfinite(g.x) || !std::isfinite(g.y)) {
                throw std::runtime_error("fit_polygon: non-finite gradient at step " +
                                         std::to_string(t));
            }
        }
        result.trajectory.push_back(
            {loss, polygon_iou(pred, target, detail::kFitIouResolution)});
        if (t >= detail::kConvergenceWindow &&
            std::abs(loss - result.trajectory[static_cast<std::size_t>(
                                t - detail::kConvergenceWindow)]
                                .loss) < detail::kConvergenceEps) {
            result.converged = true;
            break;
        }
        for (std::size_t i = 0; i < state.size(); ++i) {
            state[i] = state[i] - step_size * grad[i];
        }
        ++result.steps_used;
    }
    result.final_polygon = Polygon(state);
    result.final_iou =
        polygon_iou(result.final_polygon, target, detail::kFitIouResolution);
    return result;
}

/// Random quadrilateral for trial fixtures: a rotated rectangle with mild
/// vertex jitter, clockwise, around 20-60 px across.
inline Polygon random_quadrilateral(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> extent(10.0, 30.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> jitter(-0.08, 0.08);
    std::uniform_real_distribution<double> center(40.0, 60.0);
    const double w = extent(rng), h = extent(rng), theta = angle(rng);
    const double ct = std::cos(theta), st = std::sin(theta);
    const Vec2 c{center(rng), center(rng)};
    std::vector<Vec2> verts;
    for (Vec2 d : {Vec2{-w, -h}, Vec2{w, -h}, Vec2{w, h}, Vec2{-w, h}}) {
        d.x *= 1.0 + jitter(rng);
        d.y *= 1.0 + jitter(rng);
        verts.push_back({c.x + ct * d.x - st * d.y, c.y + st * d.x + ct * d.y});
    }
    return Polygon(std::move(verts));
}

inline double diameter(const Polygon& poly) {
    double best = 0.0;
    const auto& v = poly.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            best = std::max(best, norm(v[i] - v[j]));
        }
    }
    return best;
}

/// Adds independent Gaussian noise to every vertex coordinate.
inline Polygon perturb(const Polygon& poly, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<Vec2> verts = poly.vertices();
    for (Vec2& v : verts) {
        v.x += noise(rng);
        v.y += noise(rng);
    }
    return Polygon(std::move(verts));
}

struct AblationOptions {
    double sigma_frac = 0.2;   // perturbation sigma as a fraction of the target diameter
    int steps = 500;
    double step_size = 0.04;   // keeps the pure-regression arm short of full convergence
    LossSelection arm_a = LossSelection::Reg;
    LossSelection arm_b = LossSelection::Both;
};

struct AblationReport {
    int trials = 0;
    double mean_iou_a = 0.0;
    double mean_iou_b = 0.0;
    double mean_paired_diff = 0.0;  // b - a
    std::vector<double> iou_a;
    std::vector<double> iou_b;
};

/// Paired trial harness: each trial draws one target quadrilateral and one
/// perturbed start (stream seeded from the trial index), then runs both
/// arms from the identical start.
inline AblationReport ablation_study(int trials, std::uint64_t seed, const LossConfig& config,
                                     const AblationOptions& options = {}) {
    if (trials < 1) {
        throw std::invalid_argument("ablation_study requires at least 1 trial");
    }
    AblationReport report;
    report.trials = trials;
    report.iou_a.reserve(static_cast<std::size_t>(trials));
    report.iou_b.reserve(static_cast<std::size_t>(trials));
    for (int trial = 0; trial < trials; ++trial) {
        std::seed_seq seq{seed, static_cast<std::uint64_t>(trial)};
        std::mt19937_64 rng(seq);
        Polygon target = random_quadrilateral(rng);
        Polygon init = perturb(target, options.sigma_frac * diameter(target), rng);
        double a = fit_polygon(init, target, options.arm_a, config, options.steps,
                               options.step_size)
                       .final_iou;
        double b = fit_polygon(init, target, options.arm_b, config, options.steps,
                               options.step_size)
                       .final_iou;
        report.iou_a.push_back(a);
        report.iou_b.push_back(b);
        report.mean_iou_a += a;
        report.mean_iou_b += b;
        report.mean_paired_diff += b - a;
    }
    report.mean_iou_a /= trials;
    report.mean_iou_b /= trials;
    report.mean_paired_diff /= trials;
    return report;
}

}  // namespace textdet
