// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include "commands.hpp"

#include <soit/gradcheck.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>
#include <omp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

namespace soit::cli {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::ofstream open_csv(const fs::path &path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot create '" + path.string() + "'");
    return out;
}

void make_dir(const fs::path &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

Vec3<float> to_color(const std::vector<float> &v) { return {v.at(0), v.at(1), v.at(2)}; }

std::vector<std::size_t> split_views(const Dataset &data, const std::string &split) {
    if (split == "train")
        return data.train;
    if (split == "test")
        return data.test;
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t(0));
    return all;
}

std::string stem_of(const std::string &image_name) { return fs::path(image_name).stem().string(); }

Image<float> side_by_side(const Image<float> &a, const Image<float> &b) {
    Image<float> out(a.width + b.width, std::max(a.height, b.height), 3);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = a.at(x, y, c);
    for (int y = 0; y < b.height; ++y)
        for (int x = 0; x < b.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(a.width + x, y, c) = b.at(x, y, c);
    return out;
}

// ---- option blocks -----------------------------------------------------------------------------------

struct Common {
    int threads        = 0;
    bool deterministic = false;
    std::vector<float> background = {0.0f, 0.0f, 0.0f};
};

void add_common(CLI::App *sub, Common &c) {
    sub->add_option("--threads", c.threads, "Worker thread cap (0 = runtime default)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--deterministic", c.deterministic, "Fixed merge order for reproducible output");
    sub->add_option("--background", c.background, "Background color r,g,b in [0,1]")
        ->expected(3)
        ->delimiter(',')
        ->capture_default_str();
}

void apply_common(const Common &c) {
    if (c.threads > 0)
        omp_set_num_threads(c.threads);
    if (c.deterministic)
        omp_set_dynamic(0);
}

void print_config(std::ostream &out, CLI::App *sub) {
    out << "# resolved configuration (" << sub->get_name() << ")\n" << sub->config_to_str(true, false);
    out.flush();
}

struct GenerateOpts {
    Common common;
    std::string out;
    FixtureSpec spec;
};

struct TrainOpts {
    Common common;
    std::string data, out, init;
    int iters = 30000;
    int activation = -1;
    int update_interval = -1;
    int subsample = 30;
    double threshold_fraction = 1e-2;
    int refresh_every = 0;
    std::string active_set = "on";
    std::string densify = "on";
    double densify_prob = 0.5;
    double densify_grad = 2e-4;
    int densify_interval = 100;
    int densify_from = 500;
    double lambda_ssim = kDefaultLambdaSsim;
    std::uint64_t seed = 0;
    int eval_every = 0;
    int log_every  = 500;
    bool verify_cache = false;
    bool fixed_sigma  = false;
};

struct RenderOpts {
    Common common;
    std::string scene, data, cameras, out, split = "all", mode = "oit", format = "png";
};

struct EvalOpts {
    Common common;
    std::string scene, data, split = "test", csv;
};

struct GradcheckOpts {
    Common common;
    GradcheckConfig cfg;
    bool json = false;
};

struct BenchOpts {
    Common common;
    std::string scene, data, out = "bench.csv";
    BenchConfig cfg;
};

struct CompareOpts {
    Common common;
    std::string scene, data, out = "compare";
    int path_frames = 8;
    bool swap_demo  = false;
    int swap_frames = 40;
};

// ---- commands ----------------------------------------------------------------------------------------

int cmd_generate(const GenerateOpts &o, std::ostream &out) {
    const Fixture fx = generate_fixture(o.spec);
    save_dataset(o.out, fx.data);
    write_cloud_ply(fs::path(o.out) / "ground_truth.ply", fx.ground_truth);
    out << fmt::format("wrote {} views ({}x{}), {} init points and ground_truth.ply to {}\n", fx.data.size(),
                       o.spec.resolution, o.spec.resolution, fx.data.init_points->size(), o.out);
    return kExitOk;
}

int cmd_train(const TrainOpts &o, std::ostream &out) {
    const Dataset data = load_dataset(o.data);
    TrainConfig tc;
    tc.iterations                = o.iters;
    tc.active_set_enabled        = o.active_set == "on";
    tc.active.activation_iteration = o.activation >= 0 ? o.activation : std::min(15000, o.iters);
    tc.active.update_interval    = o.update_interval > 0 ? o.update_interval : default_update_interval(data.size());
    tc.active.subsample_count    = o.subsample;
    tc.active.threshold_fraction = o.threshold_fraction;
    tc.active.refresh_every      = o.refresh_every;
    tc.densify_enabled           = o.densify == "on";
    tc.densify.probability       = o.densify_prob;
    tc.densify.grad_threshold    = o.densify_grad;
    tc.densify.interval          = o.densify_interval;
    tc.densify.from_iteration    = o.densify_from;
    tc.lambda_ssim               = o.lambda_ssim;
    tc.seed                      = o.seed;
    tc.background                = to_color(o.common.background);
    tc.eval_every                = o.eval_every;
    tc.verify_cache              = o.verify_cache;
    tc.learn_sigma               = !o.fixed_sigma;
    const auto n_train = static_cast<int>(data.train.size());
    if (tc.active.subsample_count > n_train) {
        out << fmt::format("note: subsample count {} exceeds the {} training views; using {}\n",
                           tc.active.subsample_count, n_train, n_train);
        tc.active.subsample_count = n_train;
    }
    out << fmt::format("# effective: K={} I={} S={} train_views={} test_views={}\n", tc.active.activation_iteration,
                       tc.active.update_interval, tc.active.subsample_count, data.train.size(), data.test.size());

    std::optional<GaussianCloud<float>> init;
    if (!o.init.empty())
        init = load_scene(o.init);

    const ProgressFn progress = [&](const IterationRecord &r) {
        if (o.log_every > 0 && (r.iteration + 1) % o.log_every == 0)
            out << fmt::format("iter {:6d}  loss {:.5f}  active {:7d}  pairs {:9d}  {:.2f} ms\n", r.iteration + 1,
                               r.loss, r.active_count, r.splat_pixel_pairs, r.wall_ms)
                << std::flush;
    };
    const TrainResult res = train(data, tc, init, progress);

    const fs::path root(o.out);
    make_dir(root);
    Checkpoint ckpt{res.cloud, res.adam, res.active, res.iterations_run};
    save_checkpoint(root / "checkpoint", ckpt);

    {
        auto csv = open_csv(root / "metrics.csv");
        csv << "iteration,loss,active_count,splat_pixel_pairs,wall_ms\n";
        for (const auto &r : res.iterations)
            csv << fmt::format("{},{:.8g},{},{},{:.4f}\n", r.iteration, r.loss, r.active_count, r.splat_pixel_pairs,
                               r.wall_ms);
    }
    {
        auto csv = open_csv(root / "active_set.csv");
        csv << "iteration,stage,active_count,frozen_this_stage,subsampled_view_ids";
        for (Attr a : kAllAttrs)
            csv << ",threshold_" << attr_name(a);
        csv << ",mean_loss\n";
        for (const auto &u : res.updates) {
            std::string ids;
            for (std::size_t k = 0; k < u.views.size(); ++k)
                ids += (k ? " " : "") + std::to_string(data.train[u.views[k]]);
            csv << fmt::format("{},{},{},{},{}", u.iteration, u.stage, u.active_count, u.frozen_this_stage, ids);
            for (double t : u.thresholds)
                csv << fmt::format(",{:.6g}", t);
            csv << fmt::format(",{:.8g}\n", u.mean_loss);
        }
    }

    const EvalResult ev = evaluate(res.cloud, data, data.test, tc.background);
    {
        auto csv = open_csv(root / "eval.csv");
        csv << "iteration,psnr,ssim\n";
        for (const auto &e : res.evals)
            csv << fmt::format("{},{:.6f},{:.6f}\n", e.iteration, e.psnr, e.ssim);
        csv << fmt::format("{},{:.6f},{:.6f}\n", res.iterations_run, ev.mean_psnr, ev.mean_ssim);
    }
    make_dir(root / "renders");
    for (std::size_t v : data.test) {
        RenderOptions ro;
        ro.keep_accumulators = false;
        write_png(root / "renders" / (stem_of(data.cameras[v].image_name) + ".png"),
                  render_oit(res.cloud, data.cameras[v], tc.background, nullptr, ro).image);
    }
    out << fmt::format("trained {} iterations{} in {:.1f} s; {} Gaussians, {} active\n", res.iterations_run,
                       res.halted_early ? " (halted: active set empty)" : "", res.wall_seconds, res.cloud.size(),
                       res.active.active_count());
    if (!data.test.empty())
        out << fmt::format("held-out PSNR {:.3f} dB  SSIM {:.4f}  LPIPS n/a (out of scope)\n", ev.mean_psnr,
                           ev.mean_ssim);
    out << "checkpoint: " << (root / "checkpoint").string() << "\n";
    return kExitOk;
}

std::vector<Camera> cameras_for(const std::string &data, const std::string &cameras) {
    if (!cameras.empty())
        return read_cameras_json(cameras);
    if (data.empty())
        throw IoError("either --data or --cameras is required");
    return read_cameras_json(fs::path(data) / "cameras.json");
}

int cmd_render(const RenderOpts &o, std::ostream &out) {
    const GaussianCloud<float> cloud = load_scene(o.scene);
    const std::vector<Camera> cams   = cameras_for(o.data, o.cameras);
    Dataset split_helper;
    split_helper.cameras = cams;
    assign_split(split_helper);
    const auto views     = split_views(split_helper, o.split);
    const Vec3<float> bg = to_color(o.common.background);
    make_dir(o.out);
    std::uint64_t pairs = 0;
    for (std::size_t v : views) {
        const Camera &cam = cams[v];
        std::vector<std::pair<std::string, Image<float>>> images;
        RenderOptions ro;
        ro.keep_accumulators = false;
        if (o.mode == "oit" || o.mode == "both") {
            auto r = render_oit(cloud, cam, bg, nullptr, ro);
            pairs += r.splat_pixel_pairs;
            images.emplace_back(o.mode == "both" ? "_oit" : "", std::move(r.image));
        }
        if (o.mode == "sorted" || o.mode == "both")
            images.emplace_back(o.mode == "both" ? "_sorted" : "", render_sorted(cloud, cam, bg, ro).image);
        for (const auto &[suffix, img] : images) {
            const fs::path p = fs::path(o.out) / (stem_of(cam.image_name) + suffix + "." + o.format);
            if (o.format == "f32")
                write_f32(p, img);
            else
                write_png(p, img);
        }
    }
    out << fmt::format("rendered {} views to {} ({} OIT splat-pixel pairs)\n", views.size(), o.out, pairs);
    return kExitOk;
}

int cmd_eval(const EvalOpts &o, std::ostream &out) {
    const GaussianCloud<float> cloud = load_scene(o.scene);
    const Dataset data               = load_dataset(o.data);
    const auto views                 = split_views(data, o.split);
    const EvalResult ev              = evaluate(cloud, data, views, to_color(o.common.background));
    out << fmt::format("{:<24} {:>9} {:>8}\n", "view", "PSNR", "SSIM");
    for (std::size_t k = 0; k < views.size(); ++k)
        out << fmt::format("{:<24} {:>9.3f} {:>8.4f}\n", data.cameras[views[k]].image_name, ev.psnr[k], ev.ssim[k]);
    out << fmt::format("{:<24} {:>9.3f} {:>8.4f}\n", "mean", ev.mean_psnr, ev.mean_ssim);
    out << "LPIPS: n/a (out of scope)\n";
    if (!o.csv.empty()) {
        auto csv = open_csv(o.csv);
        csv << "view,image_name,psnr,ssim\n";
        for (std::size_t k = 0; k < views.size(); ++k)
            csv << fmt::format("{},{},{:.6f},{:.6f}\n", views[k], data.cameras[views[k]].image_name, ev.psnr[k],
                               ev.ssim[k]);
    }
    return kExitOk;
}

int cmd_gradcheck(const GradcheckOpts &o, std::ostream &out) {
    const GradcheckReport rep = run_gradcheck(o.cfg);
    if (o.json) {
        nlohmann::json j;
        j["passed"] = rep.passed();
        for (const auto &a : rep.attrs)
            j["attributes"].push_back({{"name", a.name},
                                       {"checked", a.checked},
                                       {"failures", a.failures},
                                       {"one_sided", a.one_sided},
                                       {"skipped", a.skipped},
                                       {"max_rel_error", a.max_rel_error},
                                       {"max_abs_error", a.max_abs_error},
                                       {"argmax", {{"scene", a.argmax_scene},
                                                   {"gaussian", a.argmax_gaussian},
                                                   {"component", a.argmax_component}}}});
        out << j.dump(2) << "\n";
    } else {
        out << fmt::format("{:<10} {:>8} {:>6} {:>8} {:>8} {:>12} {:>12}  {}\n", "attribute", "checked", "fail",
                           "1-sided", "skipped", "max rel err", "max abs err", "argmax (scene, gaussian, comp)");
        for (const auto &a : rep.attrs)
            out << fmt::format("{:<10} {:>8} {:>6} {:>8} {:>8} {:>12.3e} {:>12.3e}  ({}, {}, {})\n", a.name,
                               a.checked, a.failures, a.one_sided, a.skipped, a.max_rel_error, a.max_abs_error,
                               a.argmax_scene, a.argmax_gaussian, a.argmax_component);
        out << (rep.passed() ? "gradcheck PASSED\n" : "gradcheck FAILED\n");
    }
    return rep.passed() ? kExitOk : kExitFailure;
}

int cmd_bench(const BenchOpts &o, std::ostream &out) {
    const GaussianCloud<float> cloud = load_scene(o.scene);
    const Dataset data               = load_dataset(o.data);
    BenchConfig cfg                  = o.cfg;
    cfg.background                   = to_color(o.common.background);
    const auto cams                  = data.train_cameras();
    const auto imgs                  = data.train_images();
    const auto rows                  = bench_sparsity(cloud, cams, imgs, cfg);
    auto csv                         = open_csv(o.out);
    csv << "fraction,active_count,pairs_per_iter,wall_ms_per_iter,pairs_ratio,speedup,reconcile_pairs,reconcile_ms\n";
    const double base_pairs = rows.empty() ? 1.0 : rows.front().pairs_per_iter;
    const double base_ms    = rows.empty() ? 1.0 : rows.front().wall_ms_per_iter;
    out << fmt::format("{:>8} {:>8} {:>14} {:>10} {:>8} {:>8}\n", "rho", "active", "pairs/iter", "ms/iter", "ratio",
                       "speedup");
    for (const auto &r : rows) {
        const double ratio   = base_pairs > 0 ? r.pairs_per_iter / base_pairs : 0.0;
        const double speedup = r.wall_ms_per_iter > 0 ? base_ms / r.wall_ms_per_iter : 0.0;
        csv << fmt::format("{},{},{:.1f},{:.4f},{:.5f},{:.4f},{},{:.4f}\n", r.fraction, r.active_count,
                           r.pairs_per_iter, r.wall_ms_per_iter, ratio, speedup, r.reconcile_pairs, r.reconcile_ms);
        out << fmt::format("{:>8.3f} {:>8} {:>14.1f} {:>10.3f} {:>8.4f} {:>8.2f}\n", r.fraction, r.active_count,
                           r.pairs_per_iter, r.wall_ms_per_iter, ratio, speedup);
    }
    out << "wrote " << o.out << "\n";
    return kExitOk;
}

int cmd_compare(const CompareOpts &o, std::ostream &out) {
    const fs::path root(o.out);
    make_dir(root);
    const Vec3<float> bg = to_color(o.common.background);
    if (!o.scene.empty()) {
        const GaussianCloud<float> cloud = load_scene(o.scene);
        const std::vector<Camera> cams   = cameras_for(o.data, "");
        make_dir(root / "side_by_side");
        RenderOptions ro;
        ro.keep_accumulators = false;
        {
            auto csv = open_csv(root / "compare.csv");
            csv << "view,image_name,psnr_sorted_vs_oit,max_abs_diff\n";
            for (std::size_t v = 0; v < cams.size(); ++v) {
                const Image<float> a = render_sorted(cloud, cams[v], bg, ro).image;
                const Image<float> b = render_oit(cloud, cams[v], bg, nullptr, ro).image;
                double max_diff      = 0;
                for (std::size_t k = 0; k < a.data.size(); ++k)
                    max_diff = std::max(max_diff, static_cast<double>(std::abs(a.data[k] - b.data[k])));
                csv << fmt::format("{},{},{:.6f},{:.6g}\n", v, cams[v].image_name, psnr(a, b), max_diff);
                write_png(root / "side_by_side" / (stem_of(cams[v].image_name) + ".png"), side_by_side(a, b));
            }
        }
        if (cams.size() >= 2) {
            const auto path = interpolate_path(cams, o.path_frames);
            auto csv        = open_csv(root / "path.csv");
            csv << "frame,delta_sorted,delta_oit\n";
            Image<float> prev_s, prev_o;
            for (std::size_t f = 0; f < path.size(); ++f) {
                Image<float> s  = render_sorted(cloud, path[f], bg, ro).image;
                Image<float> oi = render_oit(cloud, path[f], bg, nullptr, ro).image;
                if (f > 0)
                    csv << fmt::format("{},{:.8g},{:.8g}\n", f, mean_abs_delta(prev_s, s), mean_abs_delta(prev_o, oi));
                prev_s = std::move(s);
                prev_o = std::move(oi);
            }
        }
        out << fmt::format("compared {} views; wrote compare.csv, path.csv and side_by_side/ to {}\n", cams.size(),
                           o.out);
    }
    if (o.swap_demo) {
        const SwapDemo demo = depth_swap_demo(o.swap_frames);
        auto csv            = open_csv(root / "swap.csv");
        csv << "frame,angle,delta_sorted,delta_oit\n";
        for (const auto &f : demo.frames)
            csv << fmt::format("{},{:.8f},{:.8g},{:.8g}\n", f.frame, f.angle, f.delta_sorted, f.delta_oit);
        out << fmt::format("depth-swap demo: order flips at frame {}; sorted/OIT frame-delta ratio {:.1f}\n",
                           demo.swap_frame, demo.ratio);
    }
    if (o.scene.empty() && !o.swap_demo)
        throw IoError("compare: give --scene/--data, --swap-demo, or both");
    return kExitOk;
}

} // namespace

// ---- bench / compare helpers ---------------------------------------------------------------------------

std::vector<BenchRow> bench_sparsity(const GaussianCloud<float> &cloud, std::span<const Camera> cameras,
                                     std::span<const Image<float>> images, const BenchConfig &config) {
    if (cameras.empty() || cameras.size() != images.size())
        throw ContractViolation("bench_sparsity: need matching, non-empty camera and image lists");
    const std::size_t n = cloud.size();
    std::vector<BenchRow> rows;
    for (std::size_t fi = 0; fi < config.fractions.size(); ++fi) {
        const double rho = config.fractions[fi];
        if (!(rho >= 0 && rho <= 1))
            throw InvalidParameter("bench_sparsity: active fractions must lie in [0, 1]");
        BenchRow row;
        row.fraction = rho;

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t(0));
        std::mt19937_64 rng(config.seed * 1000003ull + fi);
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto n_active = static_cast<std::size_t>(std::llround(rho * static_cast<double>(n)));
        ActiveSetState state;
        state.reset(n);
        state.stage = 1;
        for (std::size_t k = n_active; k < n; ++k) {
            state.active[perm[k]]       = 0;
            state.frozen_stage[perm[k]] = 1;
        }
        row.active_count = n_active;

        PreRenderCache cache;
        cache.reset(cameras.size());
        const auto t_rec = Clock::now();
        for (std::size_t v = 0; v < cameras.size(); ++v)
            row.reconcile_pairs += reconcile_cache(cloud, cameras[v], state, cache.entry(v, cameras[v]));
        row.reconcile_ms = ms_since(t_rec);

        GaussianCloud<float> work = cloud;
        AdamState<float> adam;
        adam.reset(n);
        LearningRates lr;
        lr.position_max_steps = std::max(1, config.iterations + config.warmup);
        double pairs = 0, wall = 0;
        for (int it = 0; it < config.warmup + config.iterations; ++it) {
            const std::size_t v = static_cast<std::size_t>(it) % cameras.size();
            const auto t0       = Clock::now();
            auto &entry         = cache.entry(v, cameras[v]);
            RenderOutput<float> r =
                render_with_prerender(work, state.active, cameras[v], entry, state.stage, config.background);
            LossResult<float> loss = image_loss(r.image, images[v], config.lambda_ssim);
            GradientBuffer<float> grads(n);
            backward_oit(work, cameras[v], r.acc, loss.grad, config.background, state.active, grads);
            adam_step(work, grads, adam, state.active, lr, it, !state.any_frozen());
            const double ms = ms_since(t0);
            if (it >= config.warmup) {
                pairs += static_cast<double>(r.splat_pixel_pairs);
                wall += ms;
            }
        }
        const double count   = std::max(1, config.iterations);
        row.pairs_per_iter   = pairs / count;
        row.wall_ms_per_iter = wall / count;
        rows.push_back(row);
    }
    return rows;
}

double mean_abs_delta(const Image<float> &a, const Image<float> &b) {
    if (!a.same_shape(b))
        throw ContractViolation("mean_abs_delta: image shapes differ");
    double s = 0;
    for (std::size_t k = 0; k < a.data.size(); ++k)
        s += std::abs(static_cast<double>(a.data[k]) - static_cast<double>(b.data[k]));
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

std::vector<Camera> interpolate_path(std::span<const Camera> keys, int frames_per_segment) {
    if (frames_per_segment < 1)
        throw InvalidParameter("interpolate_path: frames per segment must be positive");
    std::vector<Camera> path;
    for (std::size_t k = 0; k + 1 < keys.size(); ++k) {
        const Camera &a = keys[k], &b = keys[k + 1];
        const Eigen::Quaterniond qa(a.rotation()), qb(b.rotation());
        const Eigen::Vector3d ca = a.focal_point(), cb = b.focal_point();
        for (int f = 0; f < frames_per_segment; ++f) {
            const double t          = static_cast<double>(f) / frames_per_segment;
            Camera cam              = a;
            const Eigen::Matrix3d r = qa.slerp(t, qb).toRotationMatrix();
            const Eigen::Vector3d c = (1 - t) * ca + t * cb;
            cam.world_to_cam        = Eigen::Matrix4d::Identity();
            cam.world_to_cam.topLeftCorner<3, 3>()  = r;
            cam.world_to_cam.topRightCorner<3, 1>() = -r * c;
            cam.image_name                          = "path_" + std::to_string(path.size());
            path.push_back(cam);
        }
    }
    if (!keys.empty())
        path.push_back(keys.back());
    return path;
}

GaussianCloud<float> two_splat_scene() {
    GaussianCloud<float> cloud(2);
    cloud.log_sigma = std::log(5.0f);
    const float x[2]         = {-0.1f, 0.1f};
    const float rgb[2][3]    = {{0.9f, 0.15f, 0.1f}, {0.1f, 0.2f, 0.9f}};
    const float weight_dc    = static_cast<float>(inverse_softplus(1.0) / kShC0);
    for (int i = 0; i < 2; ++i) {
        cloud.mu[3 * i] = x[i];
        cloud.quat[4 * i] = 1.0f;
        for (int c = 0; c < 3; ++c) {
            cloud.log_scale[3 * i + c]          = std::log(0.25f);
            cloud.sh_color[kColorWidth * i + c] = static_cast<float>((rgb[i][c] - 0.5) / kShC0);
        }
        cloud.opacity_logit[i]          = static_cast<float>(logit(0.85));
        cloud.weight_sh[kShCoeffs * i] = weight_dc;
    }
    return cloud;
}

SwapDemo depth_swap_demo(int frames, int resolution) {
    if (frames < 3)
        throw InvalidParameter("depth_swap_demo: need at least 3 frames");
    const GaussianCloud<float> cloud = two_splat_scene();
    const Vec3<float> bg             = Vec3<float>::Zero();
    const double radius = 2.0, span = 0.3;
    SwapDemo demo;
    Image<float> prev_s, prev_o;
    int prev_front = -1;
    RenderOptions ro;
    ro.keep_accumulators = false;
    for (int f = 0; f < frames; ++f) {
        const double theta = 0.5 * std::numbers::pi - 0.5 * span + span * f / (frames - 1);
        const Eigen::Vector3d eye(radius * std::cos(theta), 0.0, radius * std::sin(theta));
        const Camera cam = Camera::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), resolution,
                                           resolution, 0.9);
        Image<float> s  = render_sorted(cloud, cam, bg, ro).image;
        Image<float> oi = render_oit(cloud, cam, bg, nullptr, ro).image;
        const auto proj = project(cloud, cam);
        const int front = proj[0].depth < proj[1].depth ? 0 : 1;
        SwapFrame sf;
        sf.frame = f;
        sf.angle = theta;
        if (f > 0) {
            sf.delta_sorted = mean_abs_delta(prev_s, s);
            sf.delta_oit    = mean_abs_delta(prev_o, oi);
            if (front != prev_front && demo.swap_frame < 0)
                demo.swap_frame = f;
        }
        demo.frames.push_back(sf);
        prev_s     = std::move(s);
        prev_o     = std::move(oi);
        prev_front = front;
    }
    if (demo.swap_frame >= 0) {
        const auto &sf = demo.frames[static_cast<std::size_t>(demo.swap_frame)];
        demo.ratio     = sf.delta_oit > 0 ? sf.delta_sorted / sf.delta_oit : std::numeric_limits<double>::infinity();
    }
    return demo;
}

// ---- entry point ---------------------------------------------------------------------------------------

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"sparse-oit: Gaussian-splatting reconstruction with order-independent transparency and "
                 "active-set training"};
    app.name("sparse-oit");
    app.set_config("--config", "", "TOML-style key=value file; command-line flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);

    GenerateOpts gen;
    auto *g = app.add_subcommand("generate", "Write the seeded synthetic fixture dataset");
    add_common(g, gen.common);
    g->add_option("--out", gen.out, "Output dataset directory")->required();
    g->add_option("--gaussians", gen.spec.n_gaussians, "Ground-truth Gaussian count")->capture_default_str();
    g->add_option("--views", gen.spec.n_views, "Number of ring cameras")->capture_default_str();
    g->add_option("--resolution", gen.spec.resolution, "Image width and height")->capture_default_str();
    g->add_option("--seed", gen.spec.seed, "Random seed")->capture_default_str();
    g->add_option("--point-noise", gen.spec.point_noise, "Std of init point jitter")->capture_default_str();

    TrainOpts tr;
    auto *t = app.add_subcommand("train", "Train on a dataset and write a checkpoint, metrics and renders");
    add_common(t, tr.common);
    t->add_option("--data", tr.data, "Dataset directory (cameras.json, images, points.ply)")->required();
    t->add_option("--out", tr.out, "Output directory")->required();
    t->add_option("--init", tr.init, "Initial scene (PLY or checkpoint dir) instead of points.ply");
    t->add_option("--iters", tr.iters, "Training iterations")->capture_default_str();
    t->add_option("--activation", tr.activation, "Active-set activation iteration K (default min(15000, iters))");
    t->add_option("--update-interval", tr.update_interval, "Active-set update interval I (default 500/600)");
    t->add_option("--subsample", tr.subsample, "Views per active-set update S")->capture_default_str();
    t->add_option("--threshold-fraction", tr.threshold_fraction,
                  "Activeness threshold as a fraction of the median gradient norm at the first update")
        ->capture_default_str();
    t->add_option("--refresh-every", tr.refresh_every, "Re-open the active set every N stages (0 = never)")
        ->capture_default_str();
    t->add_option("--active-set", tr.active_set, "Active-set training in phase 2")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    t->add_option("--densify", tr.densify, "Clone/split/prune during phase 1")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    t->add_option("--densify-prob", tr.densify_prob, "Bernoulli keep probability for densify candidates")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    t->add_option("--densify-grad", tr.densify_grad, "Screen-space gradient threshold")->capture_default_str();
    t->add_option("--densify-interval", tr.densify_interval, "Iterations between densification steps")
        ->capture_default_str();
    t->add_option("--densify-from", tr.densify_from, "First densification iteration")->capture_default_str();
    t->add_option("--lambda-ssim", tr.lambda_ssim, "SSIM loss weight")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    t->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
    t->add_option("--eval-every", tr.eval_every, "Held-out evaluation period (0 = end only)")->capture_default_str();
    t->add_option("--log-every", tr.log_every, "Progress print period (0 = silent)")->capture_default_str();
    t->add_flag("--verify-cache", tr.verify_cache, "Check every cached render against a full render (slow)");
    t->add_flag("--fixed-sigma", tr.fixed_sigma, "Do not optimize the shared sigma");

    RenderOpts rd;
    auto *r = app.add_subcommand("render", "Render a scene for a camera set");
    add_common(r, rd.common);
    r->add_option("--scene", rd.scene, "Scene PLY or checkpoint directory")->required();
    r->add_option("--data", rd.data, "Dataset directory providing cameras.json");
    r->add_option("--cameras", rd.cameras, "cameras.json path (overrides --data)");
    r->add_option("--out", rd.out, "Output directory")->required();
    r->add_option("--split", rd.split, "Views to render")
        ->check(CLI::IsMember({"all", "train", "test"}))
        ->capture_default_str();
    r->add_option("--mode", rd.mode, "Compositor")->check(CLI::IsMember({"oit", "sorted", "both"}))->capture_default_str();
    r->add_option("--format", rd.format, "Image format")->check(CLI::IsMember({"png", "f32"}))->capture_default_str();

    EvalOpts ev;
    auto *e = app.add_subcommand("eval", "Report PSNR and SSIM of a scene against a dataset");
    add_common(e, ev.common);
    e->add_option("--scene", ev.scene, "Scene PLY or checkpoint directory")->required();
    e->add_option("--data", ev.data, "Dataset directory")->required();
    e->add_option("--split", ev.split, "Views to score")
        ->check(CLI::IsMember({"all", "train", "test"}))
        ->capture_default_str();
    e->add_option("--csv", ev.csv, "Per-view CSV output");

    GradcheckOpts gc;
    auto *c = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences (64-bit)");
    add_common(c, gc.common);
    c->add_option("--scenes", gc.cfg.scenes, "Random scenes")->capture_default_str();
    c->add_option("--gaussians", gc.cfg.n_gaussians, "Gaussians per scene")->capture_default_str();
    c->add_option("--size", gc.cfg.size, "Image width and height")->capture_default_str();
    c->add_option("--seed", gc.cfg.seed, "Random seed")->capture_default_str();
    c->add_option("--step", gc.cfg.step, "Finite-difference step")->capture_default_str();
    c->add_option("--rel-tol", gc.cfg.rel_tol, "Relative tolerance")->capture_default_str();
    c->add_option("--abs-tol", gc.cfg.abs_tol, "Absolute tolerance below --small")->capture_default_str();
    c->add_option("--small", gc.cfg.small_cutoff, "Magnitude below which the absolute tolerance applies")
        ->capture_default_str();
    c->add_flag("--json", gc.json, "Machine-readable output");

    BenchOpts bn;
    auto *b = app.add_subcommand("bench", "Per-iteration cost at forced active fractions");
    add_common(b, bn.common);
    b->add_option("--scene", bn.scene, "Scene PLY or checkpoint directory")->required();
    b->add_option("--data", bn.data, "Dataset directory")->required();
    b->add_option("--out", bn.out, "CSV output")->capture_default_str();
    b->add_option("--fractions", bn.cfg.fractions, "Active fractions")->delimiter(',')->capture_default_str();
    b->add_option("--iters", bn.cfg.iterations, "Timed iterations per fraction")->capture_default_str();
    b->add_option("--warmup", bn.cfg.warmup, "Untimed iterations per fraction")->capture_default_str();
    b->add_option("--seed", bn.cfg.seed, "Random seed for the forced masks")->capture_default_str();

    CompareOpts cp;
    auto *m = app.add_subcommand("compare", "Sorted vs OIT renders, per-view PSNR and path frame deltas");
    add_common(m, cp.common);
    m->add_option("--scene", cp.scene, "Scene PLY or checkpoint directory");
    m->add_option("--data", cp.data, "Dataset directory providing cameras.json");
    m->add_option("--out", cp.out, "Output directory")->capture_default_str();
    m->add_option("--path-frames", cp.path_frames, "Interpolated frames between consecutive cameras")
        ->capture_default_str();
    m->add_flag("--swap-demo", cp.swap_demo, "Also run the constructed two-splat depth-swap path");
    m->add_option("--swap-frames", cp.swap_frames, "Frames along the swap path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        CLI::App *sub = app.get_subcommands().front();
        print_config(out, sub);
        if (sub == g) {
            apply_common(gen.common);
            return cmd_generate(gen, out);
        }
        if (sub == t) {
            apply_common(tr.common);
            return cmd_train(tr, out);
        }
        if (sub == r) {
            apply_common(rd.common);
            return cmd_render(rd, out);
        }
        if (sub == e) {
            apply_common(ev.common);
            return cmd_eval(ev, out);
        }
        if (sub == c) {
            apply_common(gc.common);
            return cmd_gradcheck(gc, out);
        }
        if (sub == b) {
            apply_common(bn.common);
            return cmd_bench(bn, out);
        }
        if (sub == m) {
            apply_common(cp.common);
            return cmd_compare(cp, out);
        }
    } catch (const std::exception &ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace soit::cli
