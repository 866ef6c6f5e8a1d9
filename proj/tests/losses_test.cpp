#include "textdet/losses.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

using namespace textdet;
using testutil::random_convex_polygon;
using testutil::random_simple_polygon;
using testutil::rotate_vertices;

TEST(SmoothL1, Zero) {
    auto r = smooth_l1(0.0);
    EXPECT_DOUBLE_EQ(r.value, 0.0);
    EXPECT_DOUBLE_EQ(r.deriv, 0.0);
}

TEST(SmoothL1, BranchesAgreeAtOne) {
    EXPECT_DOUBLE_EQ(smooth_l1(1.0).value, 0.5);
    EXPECT_DOUBLE_EQ(0.5 * 1.0 * 1.0, 1.0 - 0.5);
    EXPECT_DOUBLE_EQ(smooth_l1(-1.0).value, 0.5);
}

TEST(SmoothL1, LinearRegion) {
    auto r = smooth_l1(2.0);
    EXPECT_DOUBLE_EQ(r.value, 1.5);
    EXPECT_DOUBLE_EQ(r.deriv, 1.0);
    EXPECT_DOUBLE_EQ(smooth_l1(-2.0).deriv, -1.0);
}

TEST(RegLoss, ZeroUnderAnyGroundTruthRotation) {
    std::mt19937_64 rng(301);
    for (int trial = 0; trial < 20; ++trial) {
        Polygon p = random_simple_polygon(rng, 8);
        for (std::size_t j = 0; j < p.size(); ++j) {
            std::vector<Polygon> pred{p};
            std::vector<Polygon> gt{rotate_vertices(p, j)};
            RegLossResult r = reg_loss(pred, gt);
            EXPECT_EQ(r.value, 0.0);
            EXPECT_EQ((r.rotations[0] + j) % p.size(), 0u);
        }
    }
}

TEST(RegLoss, SingleOffsetVertex) {
    Polygon gt({{0, 0}, {4, 0}, {0, 3}});
    Polygon pred({{0.5, 0}, {4, 0}, {0, 3}});
    std::vector<Polygon> pv{pred}, gv{gt};
    RegLossResult r = reg_loss(pv, gv);
    EXPECT_DOUBLE_EQ(r.value, 0.125);
    EXPECT_EQ(r.rotations[0], 0u);
    EXPECT_DOUBLE_EQ(r.vertex_grads[0][0].x, 0.5);
    EXPECT_DOUBLE_EQ(r.vertex_grads[0][0].y, 0.0);
    EXPECT_DOUBLE_EQ(r.vertex_grads[0][1].x, 0.0);
}

TEST(RegLoss, ValueInvariantUnderCyclicRelabeling) {
    std::mt19937_64 rng(302);
    std::uniform_real_distribution<double> noise(-2.0, 2.0);
    std::uniform_int_distribution<std::size_t> shift(1, 7);
    for (int trial = 0; trial < 100; ++trial) {
        Polygon gt = random_simple_polygon(rng, 8);
        std::vector<Vec2> pv = gt.vertices();
        for (Vec2& v : pv) {
            v.x += noise(rng);
            v.y += noise(rng);
        }
        Polygon pred(pv);
        std::vector<Polygon> preds{pred};
        std::vector<Polygon> gts{gt};
        double base = reg_loss(preds, gts).value;
        EXPECT_GE(base, 0.0);
        std::vector<Polygon> shifted{rotate_vertices(gt, shift(rng))};
        EXPECT_EQ(reg_loss(preds, shifted).value, base);
    }
}

TEST(RegLoss, TiesPickSmallestRotation) {
    // A point-degenerate ground truth makes every rotation equivalent.
    Polygon pred({{0, 0}, {4, 0}, {0, 3}});
    Polygon gt({{5, 5}, {5, 5}, {5, 5}});
    std::vector<Polygon> pv{pred}, gv{gt};
    EXPECT_EQ(reg_loss(pv, gv).rotations[0], 0u);
}

TEST(RegLoss, RejectsMismatchedVertexCounts) {
    std::vector<Polygon> pred{Polygon({{0, 0}, {1, 0}, {0, 1}})};
    std::vector<Polygon> gt{Polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}})};
    EXPECT_THROW(reg_loss(pred, gt), std::invalid_argument);
}

TEST(RegLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> noise(-2.0, 2.0);
    const double h = 1e-5;
    int accepted = 0;
    while (accepted < 50) {
        Polygon gt = random_simple_polygon(rng, 6);
        std::vector<Vec2> pv = gt.vertices();
        for (Vec2& v : pv) {
            v.x += noise(rng);
            v.y += noise(rng);
        }
        Polygon pred(pv);
        std::vector<Polygon> preds{pred}, gts{gt};
        RegLossResult r = reg_loss(preds, gts);

        // Keep samples away from the smooth-L1 kink and from rotation ties.
        bool near_kink = false;
        const auto& gv = gt.vertices();
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const Vec2& g = gv[(r.rotations[0] + i) % pred.size()];
            for (double d : {pred[i].x - g.x, pred[i].y - g.y}) {
                if (std::abs(std::abs(d) - 1.0) < 1e-3) near_kink = true;
            }
        }
        double second = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < pred.size(); ++j) {
            if (j == r.rotations[0]) continue;
            double sum = 0.0;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const Vec2& g = gv[(j + i) % pred.size()];
                sum += smooth_l1(pred[i].x - g.x).value + smooth_l1(pred[i].y - g.y).value;
            }
            second = std::min(second, sum);
        }
        if (near_kink || second - r.value < 1e-3) continue;

        auto value_at = [&](const std::vector<double>& flat) {
            std::vector<Polygon> p{Polygon(testutil::unflatten(flat))};
            return reg_loss(p, gts).value;
        };
        std::vector<double> numeric =
            testutil::central_difference(value_at, testutil::flatten(pred.vertices()), h);
        EXPECT_LT(testutil::relative_grad_error(r.flat_grad(), numeric), 1e-3);
        ++accepted;
    }
}

TEST(AccLoss, IdentityPairStaysWithinBoundaryBandBound) {
    LossConfig config;
    config.tau = 1e-3;
    Polygon sq({{3, 7}, {13, 7}, {13, 17}, {3, 17}});
    AccLossResult r = acc_loss(sq, sq, config);
    double tau_px = config.tau * r.frame.width;
    double bound = 2.0 * perimeter(sq) * tau_px * std::log(1e3) / (r.frame.width * r.frame.height);
    EXPECT_LE(r.value, bound);
    EXPECT_GT(r.value, 0.0);
}

TEST(AccLoss, DisjointPairApproachesTwiceTheAreaFraction) {
    LossConfig config;
    Polygon a({{10, 10}, {20, 10}, {20, 20}, {10, 20}});
    Polygon b({{30, 10}, {40, 10}, {40, 20}, {30, 20}});
    AccLossResult r = acc_loss(a, b, config);
    double frac = std::abs(signed_area(a)) / (r.frame.width * r.frame.height);
    EXPECT_NEAR(r.value, 2.0 * frac, 0.02);
}

TEST(AccLoss, StrictlyDecreasesWithOverlap) {
    LossConfig config;
    std::mt19937_64 rng(304);
    for (int trial = 0; trial < 5; ++trial) {
        Polygon gt = random_convex_polygon(rng, 6, {50, 50}, 20.0);
        Vec2 centroid{0, 0};
        for (const Vec2& v : gt.vertices()) centroid = centroid + v;
        centroid = centroid * (1.0 / gt.size());
        double prev = std::numeric_limits<double>::infinity();
        for (double t : {0.5, 0.7, 0.9, 1.0}) {
            std::vector<Vec2> scaled;
            for (const Vec2& v : gt.vertices()) scaled.push_back(centroid + t * (v - centroid));
            double loss = acc_loss(Polygon(scaled), gt, config).value;
            EXPECT_LT(loss, prev);
            prev = loss;
        }
    }
}

TEST(AccLoss, GradientMatchesFiniteDifferences) {
    LossConfig config;
    std::mt19937_64 rng(305);
    for (int trial = 0; trial < 10; ++trial) {
        Polygon gt = random_convex_polygon(rng, 5, {30, 30}, 15.0);
        Polygon pred = random_convex_polygon(rng, 5, {32, 28}, 15.0);
        Frame frame = acc_loss_frame(pred, gt, config.mask_resolution);
        const double h = 1e-5 * frame.width;
        AccLossResult r = acc_loss(pred, gt, frame, config);
        auto value_at = [&](const std::vector<double>& flat) {
            return acc_loss(Polygon(testutil::unflatten(flat)), gt, frame, config).value;
        };
        std::vector<double> numeric =
            testutil::central_difference(value_at, testutil::flatten(pred.vertices()), h);
        EXPECT_LT(testutil::relative_grad_error(r.flat_grad(), numeric), 5e-2);
    }
}

TEST(AccLoss, DegenerateFrameRejected) {
    LossConfig config;
    Polygon dot({{5, 5}, {5, 5}, {5, 5}});
    EXPECT_THROW(acc_loss(dot, dot, config), std::invalid_argument);
}

TEST(ClsLoss, WorkedFocalValue) {
    std::vector<double> scores{0.5};
    std::vector<CellLabel> targets{CellLabel::Positive};
    ClsLossResult r = cls_loss(scores, targets, 0.25, 2.0);
    EXPECT_NEAR(r.value, 0.25 * 0.25 * std::log(2.0), 1e-12);
}

TEST(ClsLoss, PerfectPredictionVanishes) {
    std::vector<double> scores{1.0 - 1e-9};
    std::vector<CellLabel> targets{CellLabel::Positive};
    EXPECT_LT(cls_loss(scores, targets, 0.25, 2.0).value, 1e-8);
}

TEST(ClsLoss, ReducesToHalfBinaryCrossEntropy) {
    std::mt19937_64 rng(306);
    std::uniform_real_distribution<double> prob(0.01, 0.99);
    std::bernoulli_distribution label(0.5);
    for (int trial = 0; trial < 1000; ++trial) {
        double p = prob(rng);
        bool positive = label(rng);
        std::vector<double> scores{p};
        std::vector<CellLabel> targets{positive ? CellLabel::Positive : CellLabel::Negative};
        double focal = cls_loss(scores, targets, 0.5, 0.0).value;
        double bce = positive ? -std::log(p) : -std::log(1.0 - p);
        EXPECT_NEAR(focal, 0.5 * bce, 1e-9 * std::abs(0.5 * bce));
    }
}

TEST(ClsLoss, PermutationInvariant) {
    std::mt19937_64 rng(307);
    std::uniform_real_distribution<double> prob(0.05, 0.95);
    std::vector<double> scores(64);
    std::vector<CellLabel> targets(64);
    for (std::size_t i = 0; i < 64; ++i) {
        scores[i] = prob(rng);
        targets[i] = i % 3 == 0 ? CellLabel::Positive : CellLabel::Negative;
    }
    double base = cls_loss(scores, targets, 0.25, 2.0).value;
    std::vector<std::size_t> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> ps(64);
    std::vector<CellLabel> pt(64);
    for (std::size_t i = 0; i < 64; ++i) {
        ps[i] = scores[perm[i]];
        pt[i] = targets[perm[i]];
    }
    EXPECT_NEAR(cls_loss(ps, pt, 0.25, 2.0).value, base, 1e-12);
}

TEST(ClsLoss, IgnoreCellsContributeNothing) {
    std::vector<double> scores{0.3, 0.9, 0.4};
    std::vector<CellLabel> targets{CellLabel::Positive, CellLabel::Ignore, CellLabel::Negative};
    ClsLossResult with_ignore = cls_loss(scores, targets, 0.25, 2.0);
    std::vector<double> s2{0.3, 0.4};
    std::vector<CellLabel> t2{CellLabel::Positive, CellLabel::Negative};
    EXPECT_DOUBLE_EQ(with_ignore.value, cls_loss(s2, t2, 0.25, 2.0).value);
    EXPECT_DOUBLE_EQ(with_ignore.score_grad[1], 0.0);
}

TEST(ClsLoss, ClampedExtremesStayFinite) {
    std::vector<double> scores{0.0, 1.0};
    std::vector<CellLabel> targets{CellLabel::Positive, CellLabel::Negative};
    ClsLossResult r = cls_loss(scores, targets, 0.25, 2.0);
    EXPECT_TRUE(std::isfinite(r.value));
}

TEST(ClsLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(308);
    std::uniform_real_distribution<double> prob(0.05, 0.95);
    std::vector<double> scores(16);
    std::vector<CellLabel> targets(16);
    for (std::size_t i = 0; i < 16; ++i) {
        scores[i] = prob(rng);
        targets[i] = i % 2 == 0 ? CellLabel::Positive : CellLabel::Negative;
    }
    ClsLossResult r = cls_loss(scores, targets, 0.25, 2.0);
    auto value_at = [&](const std::vector<double>& s) {
        return cls_loss(s, targets, 0.25, 2.0).value;
    };
    std::vector<double> numeric = testutil::central_difference(value_at, scores, 1e-6);
    EXPECT_LT(testutil::relative_grad_error(r.score_grad, numeric), 1e-5);
}

TEST(SampleCandidates, ReturnsAllWhenFewEligible) {
    LossConfig config;
    std::vector<double> ious(10, 0.8);
    EXPECT_EQ(sample_candidates(ious, config, 1).size(), 10u);
}

TEST(SampleCandidates, ThresholdIsStrict) {
    LossConfig config;
    std::vector<double> ious(100, 0.4);
    EXPECT_TRUE(sample_candidates(ious, config, 1).empty());
    std::vector<double> at_threshold(100, 0.5);
    EXPECT_TRUE(sample_candidates(at_threshold, config, 1).empty());
}

TEST(SampleCandidates, DeterministicUnderSeed) {
    LossConfig config;
    std::mt19937_64 rng(309);
    std::uniform_real_distribution<double> iou(0.0, 1.0);
    std::vector<double> ious(1000);
    for (double& v : ious) v = iou(rng);
    auto a = sample_candidates(ious, config, 42);
    auto b = sample_candidates(ious, config, 42);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 256u);
    for (std::size_t idx : a) {
        EXPECT_GT(ious[idx], config.candidate_min_iou);
    }
}

TEST(TotalLoss, DefaultWeightsBeforeSwitch) {
    LossConfig config;
    TotalLoss t = total_loss({1.0, {}}, {1.0, {}}, {1.0, {}}, config, 0);
    EXPECT_NEAR(t.value, 41.01, 1e-12);
}

TEST(TotalLoss, ScheduleSwitchesAtSixtyThousand) {
    LossConfig config;
    EXPECT_NEAR(total_loss({1.0, {}}, {1.0, {}}, {1.0, {}}, config, 59999).value, 41.01, 1e-12);
    EXPECT_DOUBLE_EQ(total_loss({1.0, {}}, {1.0, {}}, {1.0, {}}, config, 60000).value, 42.0);
}

TEST(TotalLoss, ZeroComponentsGiveZero) {
    LossConfig config;
    EXPECT_DOUBLE_EQ(total_loss({0.0, {}}, {0.0, {}}, {0.0, {}}, config, 0).value, 0.0);
}

TEST(TotalLoss, GradientsCombineLinearly) {
    LossConfig config;
    LossTerm cls{2.0, {0.1, -0.2}};
    LossTerm reg{3.0, {1.0, 2.0, -1.5}};
    LossTerm acc{4.0, {0.5}};
    TotalLoss t = total_loss(cls, reg, acc, config, 70000);
    for (std::size_t i = 0; i < cls.grad.size(); ++i) {
        EXPECT_NEAR(t.cls.grad[i], config.lambda_cls * cls.grad[i], 1e-12);
    }
    for (std::size_t i = 0; i < reg.grad.size(); ++i) {
        EXPECT_NEAR(t.reg.grad[i], config.lambda_reg * reg.grad[i], 1e-12);
    }
    for (std::size_t i = 0; i < acc.grad.size(); ++i) {
        EXPECT_NEAR(t.acc.grad[i], config.lambda_acc_final * acc.grad[i], 1e-12);
    }
    EXPECT_NEAR(t.value, 40.0 * 2 + 1.0 * 3 + 1.0 * 4, 1e-12);
}
