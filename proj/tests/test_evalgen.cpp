// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "sehdr/metrics.hpp"
#include "sehdr/synthetic.hpp"

namespace sehdr {
namespace {

SyntheticSpec default_spec() { return SyntheticSpec{}; }

TEST(Synthetic, ManifestShapes) {
    const SyntheticScene scene = generate(default_spec());
    EXPECT_EQ(scene.truth.count(), 12);
    EXPECT_EQ(scene.truth.domain, ColorDomain::LinearHdr);
    EXPECT_NO_THROW(scene.truth.validate());
    ASSERT_EQ(scene.cameras.size(), 8u);
    ASSERT_EQ(scene.ldr_views.size(), 8u);
    ASSERT_EQ(scene.hdr_refs.size(), 8u);
    for (int i = 0; i < 8; ++i) {
        EXPECT_EQ(scene.ldr_views[i].width, 64);
        EXPECT_EQ(scene.ldr_views[i].height, 64);
        EXPECT_EQ(scene.ldr_views[i].domain, ColorDomain::Ldr);
        EXPECT_EQ(scene.hdr_refs[i].domain, ColorDomain::LinearHdr);
        EXPECT_TRUE(scene.ldr_views[i].finite());
        EXPECT_TRUE(scene.hdr_refs[i].finite());
    }
}

TEST(Synthetic, RejectsBadSpec) {
    SyntheticSpec spec;
    spec.count = 0;
    EXPECT_THROW(generate(spec), std::invalid_argument);
    spec = SyntheticSpec{};
    spec.span = 0.5;
    EXPECT_THROW(generate(spec), std::invalid_argument);
    spec = SyntheticSpec{};
    spec.cameras = 1;
    EXPECT_THROW(generate(spec), std::invalid_argument);
    spec = SyntheticSpec{};
    spec.crf = "no-such-curve";
    EXPECT_THROW(generate(spec), std::invalid_argument);
}

TEST(Synthetic, DeterministicPerSeed) {
    const SyntheticScene a = generate(default_spec());
    const SyntheticScene b = generate(default_spec());
    ASSERT_EQ(a.ldr_views.size(), b.ldr_views.size());
    for (std::size_t v = 0; v < a.ldr_views.size(); ++v) {
        for (std::size_t i = 0; i < a.ldr_views[v].pixels.size(); ++i) {
            ASSERT_EQ(a.ldr_views[v].pixels[i], b.ldr_views[v].pixels[i]);
            ASSERT_EQ(a.hdr_refs[v].pixels[i], b.hdr_refs[v].pixels[i]);
        }
    }
    SyntheticSpec other = default_spec();
    other.seed = 99;
    const SyntheticScene c = generate(other);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.hdr_refs[0].pixels.size() && !any_diff; ++i) {
        any_diff = a.hdr_refs[0].pixels[i] != c.hdr_refs[0].pixels[i];
    }
    EXPECT_TRUE(any_diff);
}

TEST(Synthetic, SpanRatioPinnedByExtremeMembers) {
    const SyntheticScene scene = generate(default_spec());
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& g : scene.truth.gaussians) {
        const Eigen::Vector3d radiance = g.sh[0] * kSh0;
        lo = std::min(lo, radiance.minCoeff());
        hi = std::max(hi, radiance.maxCoeff());
    }
    EXPECT_NEAR(hi, 0.9, 1e-12);
    EXPECT_NEAR(hi / lo, 1000.0, 1e-9 * 1000.0);
}

// Constant-radiance scene: the fully covered probe view is flat to within
// one 8-bit quantization step of the ideal capture value.
TEST(Synthetic, SpanOneGivesFlatProbeView) {
    SyntheticSpec spec;
    spec.span = 1.0;
    spec.hdr_max = 1.5;
    spec.exposure = 1.4;
    const SyntheticScene scene = generate(spec);
    const CurveDatabase db = builtin_curves();
    const double ideal = apply_crf(db.by_name(spec.crf), spec.hdr_max * spec.exposure);
    for (const ImagePlane& view : scene.ldr_views) {
        for (const auto& p : view.pixels) {
            for (int c = 0; c < 3; ++c) {
                ASSERT_NEAR(p[c], ideal, 1.0 / 255.0 + 1e-12);
            }
        }
    }
}

TEST(Synthetic, IdentityCrfMatchesQuantizedHdr) {
    SyntheticSpec spec;
    spec.crf = "identity";
    spec.exposure = 1.0;
    spec.hdr_max = 0.8;
    spec.span = 4.0;
    const SyntheticScene scene = generate(spec);
    for (std::size_t v = 0; v < scene.ldr_views.size(); ++v) {
        for (std::size_t i = 0; i < scene.ldr_views[v].pixels.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                const double quantized = std::round(scene.hdr_refs[v].pixels[i][c] * 255.0) / 255.0;
                ASSERT_NEAR(scene.ldr_views[v].pixels[i][c], quantized, 1e-12);
            }
        }
    }
}

TEST(Synthetic, DefaultSpecExercisesBothExposureExtremes) {
    const SyntheticScene scene = generate(default_spec());
    bool found = false;
    for (const auto& view : scene.ldr_views) {
        bool bright = false, dark = false;
        for (const auto& p : view.pixels) {
            bright = bright || p.maxCoeff() > 0.99;
            dark = dark || p.minCoeff() < 0.01;
        }
        found = found || (bright && dark);
    }
    EXPECT_TRUE(found);
}

// The probe view drives response-curve selection during training, so it must
// stay free of true black and the builtin ranking must recover the true curve.
TEST(Synthetic, ProbeViewSelectsTrueCurve) {
    const SyntheticScene scene = generate(default_spec());
    for (const auto& p : scene.ldr_views[0].pixels) {
        ASSERT_GT(p.minCoeff(), 0.01);
    }
    const CurveDatabase db = builtin_curves();
    EXPECT_EQ(select_crf(db, scene.ldr_views[0]).name, "gamma-2.4");
}

TEST(Synthetic, NoiseTouchesOnlyCaptures) {
    SyntheticSpec noisy;
    noisy.noise_sigma = 0.02;
    const SyntheticScene a = generate(default_spec());
    const SyntheticScene b = generate(noisy);
    const SyntheticScene b2 = generate(noisy);
    bool ldr_diff = false;
    for (std::size_t i = 0; i < a.ldr_views[0].pixels.size(); ++i) {
        ASSERT_EQ(a.hdr_refs[0].pixels[i], b.hdr_refs[0].pixels[i]);
        ASSERT_EQ(b.ldr_views[0].pixels[i], b2.ldr_views[0].pixels[i]);
        ldr_diff = ldr_diff || a.ldr_views[0].pixels[i] != b.ldr_views[0].pixels[i];
    }
    EXPECT_TRUE(ldr_diff);
}

TEST(Synthetic, InitSceneResetsRadianceKeepsGeometry) {
    const SyntheticScene scene = generate(default_spec());
    const GaussianSet init = init_scene_from_truth(scene.truth, 2.0, 0.3, 0.0, 7);
    EXPECT_EQ(init.domain, ColorDomain::LinearExposureScaled);
    EXPECT_NEAR(init.exposure, 2.0, 0.0);
    ASSERT_EQ(init.count(), scene.truth.count());
    const double dc = 0.3 * 2.0 / kSh0;
    for (int i = 0; i < init.count(); ++i) {
        EXPECT_EQ(init.gaussians[i].mean, scene.truth.gaussians[i].mean);
        EXPECT_EQ(init.gaussians[i].opacity_logit, scene.truth.gaussians[i].opacity_logit);
        EXPECT_NEAR(init.gaussians[i].sh[0][0], dc, 1e-15);
        for (std::size_t kk = 1; kk < init.gaussians[i].sh.size(); ++kk) {
            EXPECT_NEAR(init.gaussians[i].sh[kk][1], 1e-3 * dc, 1e-15);
        }
    }
    const GaussianSet jittered = init_scene_from_truth(scene.truth, 2.0, 0.3, 0.05, 7);
    EXPECT_NO_THROW(jittered.validate());
    EXPECT_NE(jittered.gaussians[0].sh[0][0], init.gaussians[0].sh[0][0]);
    const GaussianSet jittered2 = init_scene_from_truth(scene.truth, 2.0, 0.3, 0.05, 7);
    EXPECT_EQ(jittered.gaussians[0].sh[0][0], jittered2.gaussians[0].sh[0][0]);
}

ImagePlane const_image(int w, int h, double v) {
    ImagePlane img(w, h, ColorDomain::Ldr);
    for (auto& p : img.pixels) p = Eigen::Vector3d::Constant(v);
    return img;
}

TEST(Metrics, PsnrClosedForms) {
    const ImagePlane a = const_image(8, 8, 0.3);
    const ImagePlane b = const_image(8, 8, 0.4);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    EXPECT_EQ(psnr(a, a), 99.0);
    const ImagePlane c = const_image(4, 8, 0.3);
    EXPECT_THROW(psnr(a, c), std::invalid_argument);
}

TEST(Metrics, EvaluateSelfHitsCaps) {
    const SyntheticScene scene = generate(default_spec());
    const std::vector<ImagePlane> refs{scene.hdr_refs[3], scene.hdr_refs[7]};
    const EvalReport report = evaluate_views(refs, refs, {3, 7});
    ASSERT_EQ(report.rows.size(), 2u);
    for (const auto& row : report.rows) {
        EXPECT_EQ(row.psnr_mu, 99.0);
        EXPECT_NEAR(row.ssim_mu, 1.0, 1e-12);
    }
    EXPECT_EQ(report.rows[0].view, 3);
    EXPECT_EQ(report.rows[1].view, 7);
}

TEST(Metrics, EvaluateAllZeroMatchesDirectFormula) {
    const SyntheticScene scene = generate(default_spec());
    const ImagePlane& ref = scene.hdr_refs[3];
    const ImagePlane zero(ref.width, ref.height, ColorDomain::LinearHdr);
    const EvalReport report = evaluate_views({zero}, {ref}, {3});
    double hi = 0.0;
    for (const auto& p : ref.pixels) hi = std::max(hi, p.maxCoeff());
    ASSERT_EQ(report.norm_lo, 0.0);
    ASSERT_NEAR(report.norm_hi, hi, 1e-15);
    double mse = 0.0;
    for (const auto& p : ref.pixels) {
        for (int c = 0; c < 3; ++c) {
            const double m = mu_law(p[c] / hi);
            mse += m * m;
        }
    }
    mse /= 3.0 * static_cast<double>(ref.pixels.size());
    EXPECT_NEAR(report.rows[0].psnr_mu, -10.0 * std::log10(mse), 1e-9);
}

TEST(Metrics, EvaluateInvariantToSharedRescale) {
    const SyntheticScene scene = generate(default_spec());
    std::vector<ImagePlane> pred{scene.hdr_refs[3]};
    for (auto& p : pred[0].pixels) p *= 0.6;  // an imperfect prediction
    const std::vector<ImagePlane> ref{scene.hdr_refs[3]};
    const EvalReport base = evaluate_views(pred, ref, {3});
    std::vector<ImagePlane> pred_s = pred;
    std::vector<ImagePlane> ref_s = ref;
    const double s = 7.25;
    for (auto& p : pred_s[0].pixels) p *= s;
    for (auto& p : ref_s[0].pixels) p *= s;
    const EvalReport scaled = evaluate_views(pred_s, ref_s, {3});
    EXPECT_NEAR(base.rows[0].psnr_mu, scaled.rows[0].psnr_mu, 1e-9);
    EXPECT_NEAR(base.rows[0].ssim_mu, scaled.rows[0].ssim_mu, 1e-9);
}

TEST(Metrics, ReportFormats) {
    const SyntheticScene scene = generate(default_spec());
    const std::vector<ImagePlane> refs{scene.hdr_refs[3], scene.hdr_refs[7]};
    const EvalReport report = evaluate_views(refs, refs, {3, 7});
    const std::string csv = format_report_csv(report);
    ASSERT_EQ(csv.rfind("view,psnr_mu,ssim_mu\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    const std::string summary = format_report_summary(report);
    EXPECT_NE(summary.find("joint min-max"), std::string::npos);
    EXPECT_NE(summary.find("average across generator seeds"), std::string::npos);

    const std::vector<ImagePlane> ldr{scene.ldr_views[3]};
    const EvalReport fallback = evaluate_views_ldr(ldr, ldr, {3});
    EXPECT_TRUE(fallback.ldr_only);
    EXPECT_EQ(format_report_csv(fallback).rfind("view,psnr_ldr,ssim_ldr\n", 0), 0u);
    EXPECT_NE(format_report_summary(fallback).find("no HDR references"), std::string::npos);
}

}  // namespace
}  // namespace sehdr
