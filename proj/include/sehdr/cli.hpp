// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sehdr/config.hpp"
#include "sehdr/image_io.hpp"
#include "sehdr/metrics.hpp"
#include "sehdr/synthetic.hpp"
#include "sehdr/training.hpp"

namespace sehdr {

// Fully typed view of a Config with every default materialized. Commands
// read only from here, so the emitted snapshot is sufficient to reproduce
// the run.
struct Settings {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string data_dir;         // resolved: defaults to out_dir
    std::string checkpoint_file;  // resolved: defaults to out_dir/checkpoint.sehdrck
    SyntheticSpec synth;
    ExposurePlan plan;
    std::string crf_database;  // curve file path; empty means built-in curves
    std::string crf_name;      // forced curve; empty means select on the probe view
    int crf_probe = 0;
    TrainConfig train;
    double train_init_radiance = 0.025;
    double train_perturb = 0.0;
    std::vector<int> holdout = {3, 7};
    std::string render_domain = "hdr";
    std::string snapshot;
};

namespace detail {

inline std::string fmt_double(double v) {
    std::ostringstream oss;
    oss.precision(17);
    oss << v;
    return oss.str();
}

inline std::string fmt_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ",";
        out += fmt_double(v[i]);
    }
    return out;
}

inline std::string fmt_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::string format_snapshot(const Settings& s) {
    std::ostringstream oss;
    oss << "checkpoint.file = " << s.checkpoint_file << "\n"
        << "crf.database = " << s.crf_database << "\n"
        << "crf.name = " << s.crf_name << "\n"
        << "crf.probe = " << s.crf_probe << "\n"
        << "data.dir = " << s.data_dir << "\n"
        << "eval.holdout = " << fmt_ints(s.holdout) << "\n"
        << "out.dir = " << s.out_dir << "\n"
        << "plan.ratios = " << fmt_doubles(s.plan.ratios) << "\n"
        << "render.domain = " << s.render_domain << "\n"
        << "seed = " << s.seed << "\n"
        << "synth.cameras = " << s.synth.cameras << "\n"
        << "synth.count = " << s.synth.count << "\n"
        << "synth.crf = " << s.synth.crf << "\n"
        << "synth.exposure = " << fmt_double(s.synth.exposure) << "\n"
        << "synth.extent = " << fmt_double(s.synth.extent) << "\n"
        << "synth.hdr_max = " << fmt_double(s.synth.hdr_max) << "\n"
        << "synth.image_height = " << s.synth.image_height << "\n"
        << "synth.image_width = " << s.synth.image_width << "\n"
        << "synth.noise_sigma = " << fmt_double(s.synth.noise_sigma) << "\n"
        << "synth.radius = " << fmt_double(s.synth.radius) << "\n"
        << "synth.sh_degree = " << s.synth.sh_degree << "\n"
        << "synth.span = " << fmt_double(s.synth.span) << "\n"
        << "train.beta = " << fmt_double(s.train.beta) << "\n"
        << "train.coupled_hdr = " << (s.train.coupled_hdr ? "true" : "false") << "\n"
        << "train.full_batch = " << (s.train.full_batch ? "true" : "false") << "\n"
        << "train.init_radiance = " << fmt_double(s.train_init_radiance) << "\n"
        << "train.iterations = " << s.train.iterations << "\n"
        << "train.lambda = " << fmt_double(s.train.lambda) << "\n"
        << "train.lr_opacity = " << fmt_double(s.train.lr_opacity) << "\n"
        << "train.lr_sh = " << fmt_double(s.train.lr_sh) << "\n"
        << "train.lr_sigma = " << fmt_double(s.train.lr_sigma) << "\n"
        << "train.lr_theta = " << fmt_double(s.train.lr_theta) << "\n"
        << "train.mode = "
        << (s.train.mode == TrainMode::HdrSupervised ? "hdr-supervised" : "self") << "\n"
        << "train.perturb = " << fmt_double(s.train_perturb) << "\n";
    return oss.str();
}

inline std::string indexed_name(const char* stem, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%03d%s", stem, index, ext);
    return buf;
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    if (dir.empty()) return name;
    return dir.back() == '/' ? dir + name : dir + "/" + name;
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("output path '" + dir + "' is not a directory");
    }
}

inline void check_finite(const ImagePlane& img, const std::string& what) {
    if (!img.finite()) throw NumericError(what + ": non-finite pixels");
}

}  // namespace detail

// Materializes every known key; anything left unconsumed is a typo and is
// rejected so configs never degrade silently.
inline Settings resolve_settings(Config& cfg) {
    Settings s;
    s.seed = cfg.get_u64("seed", 1);
    s.out_dir = cfg.get_string("out.dir", "out");
    s.data_dir = cfg.get_string("data.dir", s.out_dir);
    s.checkpoint_file =
        cfg.get_string("checkpoint.file", detail::join_path(s.out_dir, "checkpoint.sehdrck"));

    s.synth.count = cfg.get_int("synth.count", 12);
    s.synth.extent = cfg.get_double("synth.extent", 1.0);
    s.synth.span = cfg.get_double("synth.span", 1000.0);
    s.synth.hdr_max = cfg.get_double("synth.hdr_max", 0.9);
    s.synth.cameras = cfg.get_int("synth.cameras", 8);
    s.synth.radius = cfg.get_double("synth.radius", 3.2);
    s.synth.image_width = cfg.get_int("synth.image_width", 64);
    s.synth.image_height = cfg.get_int("synth.image_height", 64);
    s.synth.crf = cfg.get_string("synth.crf", "gamma-2.4");
    s.synth.exposure = cfg.get_double("synth.exposure", 1.1);
    s.synth.noise_sigma = cfg.get_double("synth.noise_sigma", 0.0);
    s.synth.sh_degree = cfg.get_int("synth.sh_degree", 1);
    s.synth.seed = s.seed;

    s.plan.base_exposure = s.synth.exposure;
    s.plan.ratios = cfg.get_doubles("plan.ratios", {0.25, 4.0});

    s.crf_database = cfg.get_string("crf.database", "");
    s.crf_name = cfg.get_string("crf.name", "");
    s.crf_probe = cfg.get_int("crf.probe", 0);

    s.train.iterations = cfg.get_int("train.iterations", 200);
    s.train.lr_sh = cfg.get_double("train.lr_sh", 2.5e-3);
    s.train.lr_opacity = cfg.get_double("train.lr_opacity", 5e-2);
    s.train.lr_sigma = cfg.get_double("train.lr_sigma", 1e-3);
    s.train.lr_theta = cfg.get_double("train.lr_theta", 1e-3);
    s.train.lambda = cfg.get_double("train.lambda", 0.2);
    s.train.beta = cfg.get_double("train.beta", 1.0);
    s.train.full_batch = cfg.get_bool("train.full_batch", false);
    s.train.coupled_hdr = cfg.get_bool("train.coupled_hdr", false);
    s.train.seed = s.seed;
    const std::string mode = cfg.get_string("train.mode", "self");
    if (mode == "self") {
        s.train.mode = TrainMode::SelfSupervised;
    } else if (mode == "hdr-supervised") {
        s.train.mode = TrainMode::HdrSupervised;
    } else {
        throw UsageError("config key 'train.mode': expected self or hdr-supervised, got '" +
                         mode + "'");
    }
    s.train_init_radiance = cfg.get_double("train.init_radiance", 0.025);
    s.train_perturb = cfg.get_double("train.perturb", 0.0);

    s.holdout = cfg.get_ints("eval.holdout", {3, 7});
    s.render_domain = cfg.get_string("render.domain", "hdr");

    cfg.require_all_consumed();
    try {
        s.synth.validate();
        s.plan.validate();
        if (s.train.iterations < 1) throw std::invalid_argument("train.iterations must be >= 1");
        if (s.crf_probe < 0) throw std::invalid_argument("crf.probe must be >= 0");
        if (s.train_init_radiance <= 0.0) {
            throw std::invalid_argument("train.init_radiance must be > 0");
        }
        if (s.train_perturb < 0.0) throw std::invalid_argument("train.perturb must be >= 0");
        for (int h : s.holdout) {
            if (h < 0 || h >= s.synth.cameras) {
                throw std::invalid_argument("eval.holdout index out of camera range");
            }
        }
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    s.snapshot = detail::format_snapshot(s);
    return s;
}

namespace detail {

inline void write_snapshot(const Settings& s, const std::string& command) {
    atomic_write(join_path(s.out_dir, "resolved_" + command + ".cfg"), s.snapshot);
}

inline CurveDatabase load_curves(const Settings& s) {
    if (s.crf_database.empty()) return builtin_curves();
    std::istringstream in(read_all(s.crf_database));
    return parse_curve_database(in);
}

// Captured LDR views plus optional radiance references from a gen-scene
// output directory.
struct DataSet {
    GaussianSet truth;
    std::vector<Camera> cameras;
    std::vector<ImagePlane> ldr;
    std::vector<ImagePlane> refs;  // empty when any reference file is absent
};

inline DataSet load_dataset(const Settings& s, bool want_refs) {
    DataSet d;
    d.truth = read_scene(join_path(s.data_dir, "scene_true.sehdrsc"));
    d.cameras = read_cameras(join_path(s.data_dir, "cameras.txt"));
    bool all_refs = true;
    for (std::size_t i = 0; i < d.cameras.size(); ++i) {
        d.ldr.push_back(read_ppm(join_path(s.data_dir, indexed_name("view_", static_cast<int>(i),
                                                                    ".ppm"))));
        const std::string ref =
            join_path(s.data_dir, indexed_name("ref_", static_cast<int>(i), ".pfm"));
        if (std::filesystem::exists(ref)) {
            d.refs.push_back(read_pfm(ref));
        } else {
            all_refs = false;
        }
    }
    if (!all_refs) d.refs.clear();
    if (want_refs && d.refs.empty()) {
        throw UsageError("hdr-supervised mode needs ref_*.pfm radiance references in " +
                         s.data_dir);
    }
    return d;
}

inline ImagePlane render_hdr_image(const GaussianSet& scene, const Camera& cam) {
    SplatList sp = project(scene, cam);
    return rasterize(sp, cam);
}

inline ImagePlane render_ldr_image(const GaussianSet& fused, const ResponseCurve& curve,
                                   double dt1, const Camera& cam) {
    SplatList sp = project(fused, cam);
    for (Splat& splat : sp.splats) {
        for (int c = 0; c < 3; ++c) splat.color[c] = apply_crf(curve, splat.color[c] * dt1);
    }
    ImagePlane img = rasterize(sp, cam);
    img.domain = ColorDomain::Ldr;
    return img;
}

inline GaussianSet scene_with_coeffs(const GaussianSet& geom,
                                     const std::vector<Eigen::Vector3d>& coeffs,
                                     ColorDomain domain, double exposure) {
    GaussianSet s = geom;
    s.domain = domain;
    s.exposure = exposure;
    const int k = sh_coeff_count(geom.sh_degree);
    for (int g = 0; g < s.count(); ++g) {
        for (int kk = 0; kk < k; ++kk) {
            s.gaussians[static_cast<std::size_t>(g)].sh[static_cast<std::size_t>(kk)] =
                coeffs[static_cast<std::size_t>(g) * k + kk];
        }
    }
    return s;
}

inline void check_holdout(const Settings& s, std::size_t camera_count) {
    for (int h : s.holdout) {
        if (h < 0 || static_cast<std::size_t>(h) >= camera_count) {
            throw UsageError("eval.holdout index " + std::to_string(h) +
                             " out of range for " + std::to_string(camera_count) + " cameras");
        }
    }
    if (s.holdout.size() >= camera_count) {
        throw UsageError("eval.holdout leaves no training views");
    }
}

}  // namespace detail

inline void cmd_gen_scene(const Settings& s) {
    detail::ensure_dir(s.out_dir);
    const SyntheticScene scene = generate(s.synth);
    write_scene(detail::join_path(s.out_dir, "scene_true.sehdrsc"), scene.truth);
    write_cameras(detail::join_path(s.out_dir, "cameras.txt"), scene.cameras);
    for (std::size_t i = 0; i < scene.ldr_views.size(); ++i) {
        const int vi = static_cast<int>(i);
        write_ppm(detail::join_path(s.out_dir, detail::indexed_name("view_", vi, ".ppm")),
                  scene.ldr_views[i]);
        write_pfm(detail::join_path(s.out_dir, detail::indexed_name("ref_", vi, ".pfm")),
                  scene.hdr_refs[i]);
    }
    detail::write_snapshot(s, "gen-scene");
}

inline void cmd_train(const Settings& s) {
    detail::ensure_dir(s.out_dir);
    const bool supervised = s.train.mode == TrainMode::HdrSupervised;
    const detail::DataSet data = detail::load_dataset(s, supervised);
    detail::check_holdout(s, data.cameras.size());

    const CurveDatabase db = detail::load_curves(s);
    ResponseCurve curve;
    if (!s.crf_name.empty()) {
        curve = db.by_name(s.crf_name);
    } else {
        if (static_cast<std::size_t>(s.crf_probe) >= data.ldr.size()) {
            throw UsageError("crf.probe index out of range");
        }
        curve = select_crf(db, data.ldr[static_cast<std::size_t>(s.crf_probe)]);
    }

    const GaussianSet init = init_scene_from_truth(data.truth, s.plan.base_exposure,
                                                   s.train_init_radiance, s.train_perturb,
                                                   s.seed);
    TrainState state = init_train_state(init, s.plan, curve, s.train);

    std::vector<TrainView> views;
    for (std::size_t i = 0; i < data.cameras.size(); ++i) {
        if (std::find(s.holdout.begin(), s.holdout.end(), static_cast<int>(i)) !=
            s.holdout.end()) {
            continue;
        }
        TrainView v;
        v.camera = data.cameras[i];
        v.ldr = data.ldr[i];
        if (!data.refs.empty()) {
            v.hdr_ref = data.refs[i];
            v.has_hdr_ref = true;
        }
        views.push_back(std::move(v));
    }

    const std::vector<TrainLogRow> rows = train(state, views, s.train.iterations);
    for (const TrainLogRow& r : rows) {
        if (!std::isfinite(r.total)) {
            throw NumericError("training produced a non-finite loss at iteration " +
                               std::to_string(r.iteration));
        }
    }
    write_checkpoint(s.checkpoint_file, state);
    write_loss_log(detail::join_path(s.out_dir, "loss_log.csv"), rows);
    detail::write_snapshot(s, "train");
}

inline void cmd_render(const Settings& s) {
    detail::ensure_dir(s.out_dir);
    const TrainState state = read_checkpoint(s.checkpoint_file, s.train);
    const std::vector<Camera> cameras = read_cameras(detail::join_path(s.data_dir,
                                                                       "cameras.txt"));
    const BracketedScene b = bracket_logs(state.geometry, state.log_sh, state.plan);

    if (s.render_domain == "hdr" || s.render_domain == "ldr") {
        const GaussianSet fused = fuse(b, state.curve, state.neef).scene;
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            const int vi = static_cast<int>(i);
            if (s.render_domain == "hdr") {
                const ImagePlane img = detail::render_hdr_image(fused, cameras[i]);
                detail::check_finite(img, "render");
                write_pfm(detail::join_path(s.out_dir,
                                            detail::indexed_name("render_", vi, ".pfm")),
                          img);
                write_ppm(detail::join_path(s.out_dir,
                                            detail::indexed_name("preview_", vi, ".ppm")),
                          reinhard_tonemap(img));
            } else {
                const ImagePlane img = detail::render_ldr_image(fused, state.curve,
                                                                b.base_exposure(), cameras[i]);
                detail::check_finite(img, "render");
                write_ppm(detail::join_path(s.out_dir,
                                            detail::indexed_name("render_", vi, ".ppm")),
                          img);
            }
        }
    } else if (s.render_domain.rfind("bracketed:", 0) == 0) {
        const std::string tag = s.render_domain.substr(10);
        std::size_t used = 0;
        int j = 0;
        try {
            j = std::stoi(tag, &used);
        } catch (const std::exception&) {
            throw UsageError("render domain '" + s.render_domain + "': bad exposure index");
        }
        if (used != tag.size() || j < 1 || j > b.exposure_count()) {
            throw UsageError("render domain '" + s.render_domain + "': exposure index out of " +
                             "range 1.." + std::to_string(b.exposure_count()));
        }
        const std::vector<Eigen::Vector3d> lin = linear_radiance(b, j - 1);
        const GaussianSet scene = detail::scene_with_coeffs(
            state.geometry, lin, ColorDomain::LinearExposureScaled,
            b.exposures[static_cast<std::size_t>(j - 1)]);
        const std::string stem = "render_b" + std::to_string(j) + "_";
        const std::string pstem = "preview_b" + std::to_string(j) + "_";
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            const int vi = static_cast<int>(i);
            const ImagePlane img = detail::render_hdr_image(scene, cameras[i]);
            detail::check_finite(img, "render");
            write_pfm(detail::join_path(s.out_dir,
                                        detail::indexed_name(stem.c_str(), vi, ".pfm")),
                      img);
            write_ppm(detail::join_path(s.out_dir,
                                        detail::indexed_name(pstem.c_str(), vi, ".ppm")),
                      reinhard_tonemap(img));
        }
    } else {
        throw UsageError("render domain '" + s.render_domain +
                         "': expected ldr, hdr, or bracketed:J");
    }
    detail::write_snapshot(s, "render");
}

inline void cmd_fuse(const Settings& s) {
    detail::ensure_dir(s.out_dir);
    const TrainState state = read_checkpoint(s.checkpoint_file, s.train);
    const BracketedScene b = bracket_logs(state.geometry, state.log_sh, state.plan);
    const GaussianSet fused = fuse(b, state.curve, state.neef).scene;
    write_scene(detail::join_path(s.out_dir, "scene_fused.sehdrsc"), fused);
    detail::write_snapshot(s, "fuse");
}

inline void cmd_eval(const Settings& s) {
    detail::ensure_dir(s.out_dir);
    const TrainState state = read_checkpoint(s.checkpoint_file, s.train);
    const std::vector<Camera> cameras = read_cameras(detail::join_path(s.data_dir,
                                                                       "cameras.txt"));
    detail::check_holdout(s, cameras.size());
    const BracketedScene b = bracket_logs(state.geometry, state.log_sh, state.plan);
    const GaussianSet fused = fuse(b, state.curve, state.neef).scene;

    bool have_refs = true;
    for (int h : s.holdout) {
        if (!std::filesystem::exists(
                detail::join_path(s.data_dir, detail::indexed_name("ref_", h, ".pfm")))) {
            have_refs = false;
        }
    }

    EvalReport report;
    std::vector<ImagePlane> preds, targets;
    if (have_refs) {
        for (int h : s.holdout) {
            ImagePlane pred = detail::render_hdr_image(fused, cameras[static_cast<std::size_t>(h)]);
            detail::check_finite(pred, "eval");
            preds.push_back(std::move(pred));
            targets.push_back(read_pfm(
                detail::join_path(s.data_dir, detail::indexed_name("ref_", h, ".pfm"))));
        }
        report = evaluate_views(preds, targets, s.holdout);
    } else {
        for (int h : s.holdout) {
            ImagePlane pred = detail::render_ldr_image(fused, state.curve, b.base_exposure(),
                                                       cameras[static_cast<std::size_t>(h)]);
            detail::check_finite(pred, "eval");
            preds.push_back(std::move(pred));
            targets.push_back(read_ppm(
                detail::join_path(s.data_dir, detail::indexed_name("view_", h, ".ppm"))));
        }
        report = evaluate_views_ldr(preds, targets, s.holdout);
    }

    detail::atomic_write(detail::join_path(s.out_dir, "report.csv"), format_report_csv(report));
    detail::atomic_write(detail::join_path(s.out_dir, "report_summary.txt"),
                         format_report_summary(report));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int h = s.holdout[i];
        const ImagePlane pa = report.ldr_only
                                  ? preds[i]
                                  : detail::normalize_mu(preds[i], report.norm_lo,
                                                         report.norm_hi);
        const ImagePlane pb = report.ldr_only
                                  ? targets[i]
                                  : detail::normalize_mu(targets[i], report.norm_lo,
                                                         report.norm_hi);
        write_ppm(detail::join_path(s.out_dir, detail::indexed_name("eval_pred_", h, ".ppm")),
                  pa);
        write_ppm(detail::join_path(s.out_dir, detail::indexed_name("eval_ref_", h, ".ppm")),
                  pb);
    }
    detail::write_snapshot(s, "eval");
}

// Parses argv, loads the config, applies overrides, dispatches. Returns the
// process exit code: 0 ok, 1 numeric failure, 2 usage or file error.
inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"single-exposure HDR scene recovery toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string domain;

    CLI::App* sub_gen = app.add_subcommand("gen-scene", "generate a synthetic capture set");
    CLI::App* sub_train = app.add_subcommand("train", "fit a scene to captured views");
    CLI::App* sub_render = app.add_subcommand("render", "render images from a checkpoint");
    CLI::App* sub_fuse = app.add_subcommand("fuse", "write the fused radiance scene");
    CLI::App* sub_eval = app.add_subcommand("eval", "score held-out views");
    for (CLI::App* sub : {sub_gen, sub_train, sub_render, sub_fuse, sub_eval}) {
        sub->add_option("--config", config_path, "config file (key = value lines)");
        sub->add_option("--set", overrides, "override, key=value; repeatable");
    }
    sub_render->add_option("--domain", domain, "ldr | hdr | bracketed:J");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        Config cfg;
        if (!config_path.empty()) cfg = Config::parse(detail::read_all(config_path));
        for (const std::string& o : overrides) cfg.apply_override(o);
        if (!domain.empty()) cfg.set("render.domain", domain);
        Settings s = resolve_settings(cfg);
        if (sub_gen->parsed()) {
            cmd_gen_scene(s);
        } else if (sub_train->parsed()) {
            cmd_train(s);
        } else if (sub_render->parsed()) {
            cmd_render(s);
        } else if (sub_fuse->parsed()) {
            cmd_fuse(s);
        } else if (sub_eval->parsed()) {
            cmd_eval(s);
        }
        return 0;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

inline int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("sehdr");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace sehdr
