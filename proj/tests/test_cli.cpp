// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "sehdr/cli.hpp"

namespace sehdr {
namespace {

namespace fs = std::filesystem;

std::string fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sehdr_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) { return detail::read_all(path); }

// Small fixture shared by the workflow tests: fast but still exercises the
// full rejection-resampled generator and both holdout paths.
std::vector<std::string> base_args(const std::string& dir) {
    return {"--set", "seed=5",
            "--set", "out.dir=" + dir,
            "--set", "synth.count=6",
            "--set", "synth.image_width=24",
            "--set", "synth.image_height=24",
            "--set", "synth.cameras=4",
            "--set", "train.iterations=8",
            "--set", "eval.holdout=3"};
}

std::vector<std::string> with_cmd(const std::string& cmd, std::vector<std::string> args) {
    args.insert(args.begin(), cmd);
    return args;
}

TEST(Config, ParsesTypesCommentsAndDottedKeys) {
    Config cfg = Config::parse(
        "# capture settings\n"
        "synth.span = 50  # trailing comment\n"
        "train.full_batch = true\n"
        "plan.ratios = 0.5, 2.0\n"
        "eval.holdout=1,2\n"
        "\n"
        "out.dir = somewhere\n");
    EXPECT_EQ(cfg.get_double("synth.span", 0.0), 50.0);
    EXPECT_TRUE(cfg.get_bool("train.full_batch", false));
    EXPECT_EQ(cfg.get_doubles("plan.ratios", {}), (std::vector<double>{0.5, 2.0}));
    EXPECT_EQ(cfg.get_ints("eval.holdout", {}), (std::vector<int>{1, 2}));
    EXPECT_EQ(cfg.get_string("out.dir", ""), "somewhere");
    EXPECT_EQ(cfg.get_int("missing.key", 7), 7);
    EXPECT_NO_THROW(cfg.require_all_consumed());
}

TEST(Config, RejectsMalformedInput) {
    EXPECT_THROW(Config::parse("just words\n"), UsageError);
    EXPECT_THROW(Config::parse("Bad.Key = 1\n"), UsageError);
    EXPECT_THROW(Config::parse("a.b = 1\na.b = 2\n"), UsageError);
    Config cfg = Config::parse("synth.span = fast\n");
    EXPECT_THROW(cfg.get_double("synth.span", 0.0), UsageError);
    Config cfg2 = Config::parse("train.full_batch = maybe\n");
    EXPECT_THROW(cfg2.get_bool("train.full_batch", false), UsageError);
    Config cfg3;
    EXPECT_THROW(cfg3.apply_override("no-equals-sign"), UsageError);
}

TEST(Config, UnknownKeysSurfaceAsErrors) {
    Config cfg = Config::parse("synth.spam = 3\n");
    EXPECT_THROW(resolve_settings(cfg), UsageError);
    Config ok = Config::parse("synth.span = 3\n");
    EXPECT_NO_THROW(resolve_settings(ok));
}

TEST(Config, ResolvedSnapshotIsAFixedPoint) {
    Config cfg = Config::parse("seed = 9\nsynth.hdr_max = 0.7\ntrain.mode = hdr-supervised\n");
    const Settings a = resolve_settings(cfg);
    Config again = Config::parse(a.snapshot);
    const Settings b = resolve_settings(again);
    EXPECT_EQ(a.snapshot, b.snapshot);
    EXPECT_EQ(b.seed, 9u);
    EXPECT_EQ(b.synth.hdr_max, 0.7);
    EXPECT_EQ(b.train.mode, TrainMode::HdrSupervised);
    EXPECT_EQ(b.synth.seed, 9u);
    EXPECT_EQ(b.plan.base_exposure, b.synth.exposure);
}

TEST(Config, RejectsBadModeAndHoldout) {
    Config cfg = Config::parse("train.mode = sorta\n");
    EXPECT_THROW(resolve_settings(cfg), UsageError);
    Config cfg2 = Config::parse("eval.holdout = 11\n");
    EXPECT_THROW(resolve_settings(cfg2), UsageError);
}

TEST(ImageIo, PpmQuantizationRule) {
    ImagePlane img(1, 1, ColorDomain::Ldr);
    img.pixels[0] = Eigen::Vector3d(0.5, 0.0, 1.0);
    const std::string bytes = encode_ppm(img);
    const std::string header = "P6\n1 1\n255\n";
    ASSERT_EQ(bytes.size(), header.size() + 3);
    EXPECT_EQ(bytes.compare(0, header.size(), header), 0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 0]), 128);
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 1]), 0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 2]), 255);
    const ImagePlane back = decode_ppm(bytes, "test");
    EXPECT_EQ(back.pixels[0][0], 128.0 / 255.0);
    EXPECT_EQ(back.pixels[0][1], 0.0);
    EXPECT_EQ(back.pixels[0][2], 1.0);
}

TEST(ImageIo, PfmRoundTripIsBitExactInFloat) {
    Rng rng(11);
    ImagePlane img(7, 5, ColorDomain::LinearHdr);
    for (auto& p : img.pixels) {
        p = Eigen::Vector3d(rng.uniform(0.0, 40.0), rng.uniform(0.0, 1.0), -rng.uniform());
    }
    const ImagePlane back = decode_pfm(encode_pfm(img), "test");
    ASSERT_EQ(back.width, img.width);
    ASSERT_EQ(back.height, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            EXPECT_EQ(back.pixels[i][c],
                      static_cast<double>(static_cast<float>(img.pixels[i][c])));
        }
    }
    EXPECT_EQ(encode_pfm(back), encode_pfm(img));
}

TEST(ImageIo, MalformedHeadersThrowTyped) {
    EXPECT_THROW(decode_ppm("P5\n1 1\n255\nxyz", "test"), IoError);
    EXPECT_THROW(decode_ppm("P6\n1 1\n999\nxyz", "test"), IoError);
    EXPECT_THROW(decode_ppm("P6\n2 2\n255\nxy", "test"), IoError);
    EXPECT_THROW(decode_pfm(std::string("PF\n1 1\n1.0\n") + std::string(12, '\0'), "test"),
                 IoError);
    EXPECT_THROW(decode_pfm("Pf\n1 1\n-1.0\n", "test"), IoError);
    EXPECT_THROW(decode_pfm(std::string("PF\n2 1\n-1.0\n") + std::string(12, '\0'), "test"),
                 IoError);
    EXPECT_THROW(decode_cameras("SEHDRCAM9\n0\n", "test"), IoError);
}

TEST(ImageIo, CameraRigRoundTripsExactly) {
    SyntheticSpec spec;
    spec.cameras = 3;
    const std::vector<Camera> cams = detail::synth_cameras(spec);
    const std::vector<Camera> back = decode_cameras(encode_cameras(cams), "test");
    ASSERT_EQ(back.size(), cams.size());
    for (std::size_t i = 0; i < cams.size(); ++i) {
        EXPECT_EQ(back[i].fx, cams[i].fx);
        EXPECT_EQ(back[i].cx, cams[i].cx);
        EXPECT_EQ((back[i].rotation - cams[i].rotation).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ((back[i].translation - cams[i].translation).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(back[i].width, cams[i].width);
    }
}

TEST(Cli, GenSceneWritesManifestDeterministically) {
    const std::string dir_a = fresh_dir("gen_a");
    const std::string dir_b = fresh_dir("gen_b");
    ASSERT_EQ(run_cli(with_cmd("gen-scene", base_args(dir_a))), 0);
    ASSERT_EQ(run_cli(with_cmd("gen-scene", base_args(dir_b))), 0);
    for (const char* name : {"scene_true.sehdrsc", "cameras.txt", "view_000.ppm",
                             "view_003.ppm", "ref_000.pfm", "ref_003.pfm"}) {
        const std::string a = dir_a + "/" + name;
        ASSERT_TRUE(fs::exists(a)) << name;
        EXPECT_EQ(slurp(a), slurp(dir_b + "/" + name)) << name;
    }
    // The resolved snapshots differ only in their output paths.
    EXPECT_TRUE(fs::exists(dir_a + "/resolved_gen-scene.cfg"));
    EXPECT_NE(slurp(dir_a + "/resolved_gen-scene.cfg")
                  .find("synth.count = 6"),
              std::string::npos);
}

TEST(Cli, ResolvedSnapshotAloneReproducesTheRun) {
    const std::string dir_a = fresh_dir("snap_a");
    const std::string dir_b = fresh_dir("snap_b");
    ASSERT_EQ(run_cli(with_cmd("gen-scene", base_args(dir_a))), 0);
    ASSERT_EQ(run_cli({"gen-scene", "--config", dir_a + "/resolved_gen-scene.cfg", "--set",
                       "out.dir=" + dir_b}),
              0);
    EXPECT_EQ(slurp(dir_a + "/view_002.ppm"), slurp(dir_b + "/view_002.ppm"));
    EXPECT_EQ(slurp(dir_a + "/scene_true.sehdrsc"), slurp(dir_b + "/scene_true.sehdrsc"));
}

TEST(Cli, TrainRenderFuseEvalPipeline) {
    const std::string dir = fresh_dir("pipeline");
    const std::vector<std::string> args = base_args(dir);
    ASSERT_EQ(run_cli(with_cmd("gen-scene", args)), 0);
    ASSERT_EQ(run_cli(with_cmd("train", args)), 0);

    const std::string log = slurp(dir + "/loss_log.csv");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 8);

    ASSERT_EQ(run_cli(with_cmd("render", args)), 0);
    for (int i = 0; i < 4; ++i) {
        EXPECT_TRUE(fs::exists(dir + "/" + detail::indexed_name("render_", i, ".pfm")));
        EXPECT_TRUE(fs::exists(dir + "/" + detail::indexed_name("preview_", i, ".ppm")));
    }

    ASSERT_EQ(run_cli(with_cmd("fuse", args)), 0);
    const GaussianSet fused = read_scene(dir + "/scene_fused.sehdrsc");
    EXPECT_EQ(fused.domain, ColorDomain::LinearHdr);
    EXPECT_EQ(fused.count(), 6);

    ASSERT_EQ(run_cli(with_cmd("eval", args)), 0);
    const std::string csv = slurp(dir + "/report.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);  // header + one holdout row
    EXPECT_EQ(csv.rfind("view,psnr_mu,ssim_mu\n3,", 0), 0u);
    EXPECT_TRUE(fs::exists(dir + "/eval_pred_003.ppm"));
    EXPECT_TRUE(fs::exists(dir + "/eval_ref_003.ppm"));
    EXPECT_NE(slurp(dir + "/report_summary.txt").find("mu-law"), std::string::npos);
}

TEST(Cli, BracketedRendersObeyExposureIdentity) {
    const std::string dir = fresh_dir("bracketed");
    const std::vector<std::string> args = base_args(dir);
    ASSERT_EQ(run_cli(with_cmd("gen-scene", args)), 0);
    ASSERT_EQ(run_cli(with_cmd("train", args)), 0);
    auto render = [&](const std::string& domain) {
        std::vector<std::string> a = with_cmd("render", args);
        a.push_back("--domain");
        a.push_back(domain);
        return run_cli(a);
    };
    ASSERT_EQ(render("bracketed:1"), 0);
    ASSERT_EQ(render("bracketed:2"), 0);
    // sorted exposures for base 1.1 with ratios {0.25, 4} are {0.275, 1.1, 4.4}
    const double dt1 = 0.275, dt2 = 1.1;
    for (int v = 0; v < 4; ++v) {
        const ImagePlane a =
            read_pfm(dir + "/" + detail::indexed_name("render_b1_", v, ".pfm"));
        const ImagePlane b =
            read_pfm(dir + "/" + detail::indexed_name("render_b2_", v, ".pfm"));
        for (std::size_t i = 0; i < a.pixels.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                EXPECT_NEAR(a.pixels[i][c] / dt1, b.pixels[i][c] / dt2, 1e-6);
            }
        }
    }
}

TEST(Cli, HdrSupervisedNeedsReferences) {
    const std::string dir = fresh_dir("supervised");
    std::vector<std::string> args = base_args(dir);
    ASSERT_EQ(run_cli(with_cmd("gen-scene", args)), 0);
    args.push_back("--set");
    args.push_back("train.mode=hdr-supervised");
    ASSERT_EQ(run_cli(with_cmd("train", args)), 0);
    for (int i = 0; i < 4; ++i) fs::remove(dir + "/" + detail::indexed_name("ref_", i, ".pfm"));
    EXPECT_EQ(run_cli(with_cmd("train", args)), 2);
}

TEST(Cli, EvalFallsBackToLdrWithoutReferences) {
    const std::string dir = fresh_dir("ldr_only");
    const std::vector<std::string> args = base_args(dir);
    ASSERT_EQ(run_cli(with_cmd("gen-scene", args)), 0);
    ASSERT_EQ(run_cli(with_cmd("train", args)), 0);
    for (int i = 0; i < 4; ++i) fs::remove(dir + "/" + detail::indexed_name("ref_", i, ".pfm"));
    ASSERT_EQ(run_cli(with_cmd("eval", args)), 0);
    EXPECT_EQ(slurp(dir + "/report.csv").rfind("view,psnr_ldr,ssim_ldr\n", 0), 0u);
    EXPECT_NE(slurp(dir + "/report_summary.txt").find("ldr (no HDR references found)"),
              std::string::npos);
}

TEST(Cli, ExitCodesFollowTheContract) {
    const std::string dir = fresh_dir("codes");
    std::vector<std::string> args = base_args(dir);
    EXPECT_EQ(run_cli({"gen-scene", "--set", "bogus.key=1"}), 2);
    EXPECT_EQ(run_cli({"train", "--config", dir + "/does_not_exist.cfg"}), 2);
    EXPECT_EQ(run_cli({"gen-scene", "--set", "synth.count=0"}), 2);
    ASSERT_EQ(run_cli(with_cmd("gen-scene", args)), 0);
    ASSERT_EQ(run_cli(with_cmd("train", args)), 0);
    std::vector<std::string> bad_domain = with_cmd("render", args);
    bad_domain.push_back("--domain");
    bad_domain.push_back("warp");
    EXPECT_EQ(run_cli(bad_domain), 2);
    std::vector<std::string> bad_holdout = with_cmd("eval", args);
    bad_holdout.push_back("--set");
    bad_holdout.push_back("eval.holdout=0,1,2,3");
    EXPECT_EQ(run_cli(bad_holdout), 2);
}

}  // namespace
}  // namespace sehdr
