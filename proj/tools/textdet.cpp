// Command-line front end: label generation, loss evaluation, gradient
// checking, polygon fitting, the paired ablation harness, detection
// decoding, NMS, evaluation, and mask rendering.

#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "textdet/detect.hpp"
#include "textdet/fit.hpp"
#include "textdet/io.hpp"
#include "textdet/losses.hpp"

namespace {

using namespace textdet;

void add_loss_config_flags(CLI::App* cmd, LossConfig& config) {
    cmd->add_option("--lambda-cls", config.lambda_cls, "Classification loss weight");
    cmd->add_option("--lambda-reg", config.lambda_reg, "Regression loss weight");
    cmd->add_option("--lambda-acc-initial", config.lambda_acc_initial,
                    "Accuracy loss weight before the switch iteration");
    cmd->add_option("--lambda-acc-final", config.lambda_acc_final,
                    "Accuracy loss weight after the switch iteration");
    cmd->add_option("--lambda-acc-switch", config.lambda_acc_switch_iteration,
                    "Iteration at which the accuracy weight switches");
    cmd->add_option("--alpha", config.alpha, "Focal loss alpha");
    cmd->add_option("--gamma", config.gamma, "Focal loss gamma");
    cmd->add_option("--tau", config.tau, "Soft-raster temperature (fraction of frame width)");
    cmd->add_option("--mask-resolution", config.mask_resolution, "Mask side in cells");
    cmd->add_option("--candidate-count", config.candidate_count, "Candidate sample size");
    cmd->add_option("--candidate-min-iou", config.candidate_min_iou,
                    "Minimum IoU for candidate pairs (strict)");
}

std::vector<LevelSpec> load_levels(const std::string& path) {
    if (path.empty()) return canonical_levels();
    return parse_level_table(read_file(path));
}

std::vector<Annotation> load_annotations(const std::string& path, const std::string& format) {
    return parse_annotations(parse_format_tag(format), read_file(path));
}

void emit(const std::string& path, const std::string& contents) {
    if (path.empty()) {
        std::cout << contents;
    } else {
        write_file(path, contents);
    }
}

double grad_norm(const std::vector<double>& grad) {
    double s = 0.0;
    for (double g : grad) s += g * g;
    return std::sqrt(s);
}

std::vector<double> finite_difference(const std::function<double(const std::vector<Vec2>&)>& f,
                                      std::vector<Vec2> verts, double h) {
    std::vector<double> grad;
    grad.reserve(verts.size() * 2);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        for (int coord = 0; coord < 2; ++coord) {
            double& slot = coord == 0 ? verts[i].x : verts[i].y;
            const double orig = slot;
            slot = orig + h;
            double fp = f(verts);
            slot = orig - h;
            double fm = f(verts);
            slot = orig;
            grad.push_back((fp - fm) / (2.0 * h));
        }
    }
    return grad;
}

double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double diff2 = 0.0, ref2 = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff2 += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        ref2 += numeric[i] * numeric[i];
    }
    return std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-12);
}

Polygon convex_pentagon(std::mt19937_64& rng, Vec2 center, double radius) {
    std::uniform_real_distribution<double> jitter(0.1, 0.9);
    std::vector<Vec2> verts;
    for (int i = 0; i < 5; ++i) {
        double a = (i + jitter(rng)) * 2.0 * M_PI / 5;
        verts.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
    }
    return Polygon(std::move(verts));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pixel-based arbitrary-shape text detection core"};
    app.set_config("--config", "", "Key=value configuration file; flags take precedence");
    app.require_subcommand(1);

    // labelgen
    auto* labelgen_cmd =
        app.add_subcommand("labelgen", "Encode annotations into per-level target maps");
    struct {
        std::string input, format = "polygon-json", levels, output;
        int n = 4;
        bool as_predictions = false;
    } lg;
    labelgen_cmd->add_option("--input", lg.input, "Annotation file")->required();
    labelgen_cmd->add_option("--format", lg.format,
                             "icdar2015-quad | curved-14pt | polygon-json");
    labelgen_cmd->add_option("--n", lg.n, "Resampled vertex count");
    labelgen_cmd->add_option("--levels", lg.levels, "Level table override file");
    labelgen_cmd->add_option("--output", lg.output, "Output file (default stdout)");
    labelgen_cmd->add_flag("--as-predictions", lg.as_predictions,
                           "Emit prediction records with score 1 at positives");
    labelgen_cmd->callback([&] {
        auto levels = load_levels(lg.levels);
        TargetMaps maps = encode(load_annotations(lg.input, lg.format), levels, lg.n);
        if (lg.as_predictions) {
            emit(lg.output, write_prediction_records(maps));
        } else {
            std::ostringstream out;
            write_target_records(maps, out);
            emit(lg.output, out.str());
        }
    });

    // loss
    auto* loss_cmd = app.add_subcommand("loss", "Evaluate losses on a prediction/target pair");
    struct {
        std::string pred, gt, format = "polygon-json";
        int n = 0;
        long iteration = 0;
    } lo;
    LossConfig loss_config;
    loss_cmd->add_option("--pred", lo.pred, "Predicted polygons file")->required();
    loss_cmd->add_option("--gt", lo.gt, "Ground-truth polygons file")->required();
    loss_cmd->add_option("--format", lo.format, "Annotation format of both files");
    loss_cmd->add_option("--n", lo.n, "Resample both sides to n vertices (0 = as-is)");
    loss_cmd->add_option("--iteration", lo.iteration, "Training iteration for the weight schedule");
    add_loss_config_flags(loss_cmd, loss_config);
    loss_cmd->callback([&] {
        auto pred_anns = load_annotations(lo.pred, lo.format);
        auto gt_anns = load_annotations(lo.gt, lo.format);
        if (pred_anns.size() != gt_anns.size()) {
            throw std::invalid_argument("loss: pred and gt files must pair records one-to-one");
        }
        std::vector<Polygon> preds, gts;
        for (std::size_t i = 0; i < pred_anns.size(); ++i) {
            preds.push_back(lo.n >= 3 ? resample(pred_anns[i].polygon, lo.n)
                                      : pred_anns[i].polygon);
            gts.push_back(lo.n >= 3 ? resample(gt_anns[i].polygon, lo.n) : gt_anns[i].polygon);
        }
        RegLossResult reg = reg_loss(preds, gts);
        LossTerm acc_term;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            AccLossResult acc = acc_loss(preds[i], gts[i], loss_config);
            acc_term.value += acc.value;
            for (double g : acc.flat_grad()) acc_term.grad.push_back(g);
        }
        TotalLoss total = total_loss({0.0, {}}, {reg.value, reg.flat_grad()}, acc_term,
                                     loss_config, lo.iteration);
        std::printf("loss=reg value=%.17g grad_norm=%.17g pairs=%zu\n", reg.value,
                    grad_norm(reg.flat_grad()), preds.size());
        std::printf("loss=acc value=%.17g grad_norm=%.17g\n", acc_term.value,
                    grad_norm(acc_term.grad));
        std::printf("loss=total value=%.17g lambda_acc=%.17g\n", total.value, total.lambda_acc);
    });

    // gradcheck
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "Finite-difference report for the loss gradients");
    struct {
        int trials = 20;
        std::uint64_t seed = 1;
    } gc;
    LossConfig gradcheck_config;
    gradcheck_cmd->add_option("--trials", gc.trials, "Random fixtures per loss");
    gradcheck_cmd->add_option("--seed", gc.seed, "Random seed");
    add_loss_config_flags(gradcheck_cmd, gradcheck_config);
    gradcheck_cmd->callback([&] {
        std::mt19937_64 rng(gc.seed);
        std::uniform_real_distribution<double> noise(-2.0, 2.0);
        double reg_worst = 0.0;
        int accepted = 0;
        while (accepted < gc.trials) {
            Polygon gt = convex_pentagon(rng, {30, 30}, 12.0);
            std::vector<Vec2> pv = gt.vertices();
            for (Vec2& v : pv) {
                v.x += noise(rng);
                v.y += noise(rng);
            }
            Polygon pred(pv);
            std::vector<Polygon> preds{pred}, gts{gt};
            RegLossResult r = reg_loss(preds, gts);
            bool near_kink = false;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const Vec2& g = gt[(r.rotations[0] + i) % pred.size()];
                if (std::abs(std::abs(pred[i].x - g.x) - 1.0) < 1e-3 ||
                    std::abs(std::abs(pred[i].y - g.y) - 1.0) < 1e-3) {
                    near_kink = true;
                }
            }
            if (near_kink) continue;
            auto numeric = finite_difference(
                [&](const std::vector<Vec2>& verts) {
                    std::vector<Polygon> p{Polygon(verts)};
                    return reg_loss(p, gts).value;
                },
                pred.vertices(), 1e-5);
            reg_worst = std::max(reg_worst, max_rel_err(r.flat_grad(), numeric));
            ++accepted;
        }
        std::printf("loss=reg trials=%d max_rel_err=%.6g\n", gc.trials, reg_worst);

        double acc_worst = 0.0;
        for (int trial = 0; trial < gc.trials; ++trial) {
            Polygon gt = convex_pentagon(rng, {30, 30}, 12.0);
            Polygon pred = convex_pentagon(rng, {32, 28}, 12.0);
            Frame frame = acc_loss_frame(pred, gt, gradcheck_config.mask_resolution);
            AccLossResult r = acc_loss(pred, gt, frame, gradcheck_config);
            auto numeric = finite_difference(
                [&](const std::vector<Vec2>& verts) {
                    return acc_loss(Polygon(verts), gt, frame, gradcheck_config).value;
                },
                pred.vertices(), 1e-5 * frame.width);
            acc_worst = std::max(acc_worst, max_rel_err(r.flat_grad(), numeric));
        }
        std::printf("loss=acc trials=%d max_rel_err=%.6g\n", gc.trials, acc_worst);
    });

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Gradient-descent polygon fit with trajectory");
    struct {
        std::string init, target, format = "polygon-json", losses = "both", trajectory;
        int steps = 500;
        double step_size = 0.04;
        std::uint64_t seed = 0;
        int n = 0;
    } ft;
    LossConfig fit_config;
    fit_cmd->add_option("--init", ft.init, "Initial polygon file (first record)")->required();
    fit_cmd->add_option("--target", ft.target, "Target polygon file (first record)")->required();
    fit_cmd->add_option("--format", ft.format, "Annotation format of both files");
    fit_cmd->add_option("--losses", ft.losses, "reg | acc | both");
    fit_cmd->add_option("--steps", ft.steps, "Step budget");
    fit_cmd->add_option("--step-size", ft.step_size, "Gradient step size");
    fit_cmd->add_option("--seed", ft.seed, "Random seed");
    fit_cmd->add_option("--n", ft.n, "Resample both polygons to n vertices (0 = as-is)");
    fit_cmd->add_option("--trajectory", ft.trajectory, "Write step,loss,iou records here");
    add_loss_config_flags(fit_cmd, fit_config);
    fit_cmd->callback([&] {
        static const std::map<std::string, LossSelection> selections{
            {"reg", LossSelection::Reg}, {"acc", LossSelection::Acc},
            {"both", LossSelection::Both}};
        auto sel = selections.find(ft.losses);
        if (sel == selections.end()) {
            throw std::invalid_argument("fit: --losses must be reg, acc, or both");
        }
        auto init_anns = load_annotations(ft.init, ft.format);
        auto target_anns = load_annotations(ft.target, ft.format);
        if (init_anns.empty() || target_anns.empty()) {
            throw std::invalid_argument("fit: both files need at least one polygon");
        }
        Polygon init = ft.n >= 3 ? resample(init_anns[0].polygon, ft.n) : init_anns[0].polygon;
        Polygon target =
            ft.n >= 3 ? resample(target_anns[0].polygon, ft.n) : target_anns[0].polygon;
        FitResult r =
            fit_polygon(init, target, sel->second, fit_config, ft.steps, ft.step_size, ft.seed);
        if (!ft.trajectory.empty()) {
            std::ostringstream out;
            out << "step,loss,iou\n";
            for (std::size_t t = 0; t < r.trajectory.size(); ++t) {
                char buf[80];
                std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", t, r.trajectory[t].loss,
                              r.trajectory[t].iou);
                out << buf;
            }
            write_file(ft.trajectory, out.str());
        }
        std::printf("losses=%s final_loss=%.17g final_iou=%.17g steps_used=%d converged=%d\n",
                    to_string(sel->second),
                    r.trajectory.empty() ? 0.0 : r.trajectory.back().loss, r.final_iou,
                    r.steps_used, r.converged ? 1 : 0);
    });

    // ablation
    auto* ablation_cmd =
        app.add_subcommand("ablation", "Paired reg vs reg+acc fitting study");
    struct {
        int trials = 100;
        std::uint64_t seed = 7;
        double sigma = 0.2;
        int steps = 500;
        double step_size = 0.04;
    } ab;
    LossConfig ablation_config;
    ablation_cmd->add_option("--trials", ab.trials, "Paired trials");
    ablation_cmd->add_option("--seed", ab.seed, "Random seed");
    ablation_cmd->add_option("--sigma", ab.sigma, "Perturbation sigma (fraction of diameter)");
    ablation_cmd->add_option("--steps", ab.steps, "Step budget per arm");
    ablation_cmd->add_option("--step-size", ab.step_size, "Gradient step size");
    add_loss_config_flags(ablation_cmd, ablation_config);
    ablation_cmd->callback([&] {
        AblationOptions options;
        options.sigma_frac = ab.sigma;
        options.steps = ab.steps;
        options.step_size = ab.step_size;
        AblationReport r = ablation_study(ab.trials, ab.seed, ablation_config, options);
        std::printf("trials=%d\n", r.trials);
        std::printf("mean_iou_reg=%.17g\n", r.mean_iou_a);
        std::printf("mean_iou_reg_acc=%.17g\n", r.mean_iou_b);
        std::printf("mean_paired_diff=%.17g\n", r.mean_paired_diff);
    });

    // decode
    auto* decode_cmd = app.add_subcommand("decode", "Threshold and decode prediction maps");
    struct {
        std::string maps, levels, output;
        int n = 4;
        double threshold = 0.7;
    } dc;
    decode_cmd->add_option("--maps", dc.maps, "Prediction records file")->required();
    decode_cmd->add_option("--n", dc.n, "Vertices per polygon");
    decode_cmd->add_option("--levels", dc.levels, "Level table override file");
    decode_cmd->add_option("--threshold", dc.threshold, "Score threshold (strict)");
    decode_cmd->add_option("--output", dc.output, "Output file (default stdout)");
    decode_cmd->callback([&] {
        auto levels = load_levels(dc.levels);
        PredictionMaps maps = parse_prediction_records(read_file(dc.maps), levels, dc.n);
        emit(dc.output, write_detections(decode_detections(maps, levels, dc.threshold)));
    });

    // nms
    auto* nms_cmd = app.add_subcommand("nms", "Greedy non-maximum suppression");
    struct {
        std::string input, output;
        double iou = 0.3;
    } nm;
    nms_cmd->add_option("--input", nm.input, "Detection records file")->required();
    nms_cmd->add_option("--iou", nm.iou, "Suppression IoU threshold");
    nms_cmd->add_option("--output", nm.output, "Output file (default stdout)");
    nms_cmd->callback([&] {
        emit(nm.output, write_detections(nms(parse_detections(read_file(nm.input)), nm.iou)));
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score detections against ground truth");
    struct {
        std::string pred, gt, format = "polygon-json";
        double match_iou = 0.5;
    } ev;
    eval_cmd->add_option("--pred", ev.pred, "Detection records file")->required();
    eval_cmd->add_option("--gt", ev.gt, "Ground-truth annotation file")->required();
    eval_cmd->add_option("--format", ev.format, "Ground-truth annotation format");
    eval_cmd->add_option("--match-iou", ev.match_iou, "Match IoU threshold");
    eval_cmd->callback([&] {
        auto preds = parse_detections(read_file(ev.pred));
        auto gts = load_annotations(ev.gt, ev.format);
        std::cout << write_eval_report(evaluate(preds, gts, ev.match_iou));
    });

    // render
    auto* render_cmd = app.add_subcommand("render", "Rasterize a polygon to a PGM mask");
    struct {
        std::string input, format = "polygon-json", output;
        int index = 0;
        int resolution = 64;
        bool soft = false;
        double tau = 1.0;
        double origin_x = 0.0, origin_y = 0.0, width = 0.0, height = 0.0;
    } rd;
    render_cmd->add_option("--input", rd.input, "Annotation file")->required();
    render_cmd->add_option("--format", rd.format, "Annotation format");
    render_cmd->add_option("--index", rd.index, "Record index within the file");
    render_cmd->add_option("--output", rd.output, "PGM output path")->required();
    render_cmd->add_option("--resolution", rd.resolution, "Mask side in cells");
    render_cmd->add_flag("--soft", rd.soft, "Soft rasterization instead of hard");
    render_cmd->add_option("--tau", rd.tau, "Soft-raster temperature in pixels");
    render_cmd->add_option("--origin-x", rd.origin_x, "Frame origin x (default: fitted)");
    render_cmd->add_option("--origin-y", rd.origin_y, "Frame origin y");
    render_cmd->add_option("--width", rd.width, "Frame width (0 = fit to polygon)");
    render_cmd->add_option("--height", rd.height, "Frame height (0 = fit to polygon)");
    render_cmd->callback([&] {
        auto anns = load_annotations(rd.input, rd.format);
        if (rd.index < 0 || static_cast<std::size_t>(rd.index) >= anns.size()) {
            throw std::invalid_argument("render: record index out of range");
        }
        const Polygon& poly = anns[static_cast<std::size_t>(rd.index)].polygon;
        Frame frame = rd.width > 0.0 && rd.height > 0.0
                          ? Frame({rd.origin_x, rd.origin_y}, rd.width, rd.height, rd.resolution)
                          : acc_loss_frame(poly, poly, rd.resolution);
        Mask mask = rd.soft ? rasterize_soft(poly, frame, rd.tau).mask
                            : rasterize_hard(poly, frame);
        write_mask_pgm(mask, rd.output);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
