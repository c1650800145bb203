// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sehdr/training.hpp"

using namespace sehdr;

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Fat splats on-camera: branch conditions (eta cutoff, transmittance stop)
// sit far from every finite-difference perturbation used below.
GaussianSet base_scene(std::uint64_t seed, int count = 5, int degree = 1) {
    Rng rng(seed);
    GaussianSet s;
    s.sh_degree = degree;
    s.domain = ColorDomain::LinearExposureScaled;
    s.exposure = 1.0;
    const int k = sh_coeff_count(degree);
    for (int i = 0; i < count; ++i) {
        Gaussian g;
        g.mean = Eigen::Vector3d(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25),
                                 rng.uniform(-0.25, 0.25));
        g.scale = Eigen::Vector3d(rng.uniform(1.0, 1.4), rng.uniform(1.0, 1.4),
                                  rng.uniform(1.0, 1.4));
        Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        g.rotation = q.normalized();
        const double alpha = rng.uniform(0.3, 0.55);
        g.opacity_logit = std::log(alpha / (1.0 - alpha));
        g.sh.emplace_back(rng.uniform(0.1, 0.35), rng.uniform(0.1, 0.35),
                          rng.uniform(0.1, 0.35));
        for (int kk = 1; kk < k; ++kk) {
            g.sh.emplace_back(rng.uniform(0.01, 0.05), rng.uniform(0.01, 0.05),
                              rng.uniform(0.01, 0.05));
        }
        s.gaussians.push_back(g);
    }
    return s;
}

std::vector<TrainView> make_views(std::uint64_t seed, int count = 2) {
    Rng rng(seed);
    std::vector<TrainView> views;
    const Eigen::Vector3d eyes[4] = {{3.2, 0.0, 0.0}, {0.0, 3.2, 0.4}, {-3.2, 0.3, 0.2},
                                     {0.2, -3.2, 0.6}};
    for (int v = 0; v < count; ++v) {
        TrainView view;
        view.camera = look_at(eyes[v % 4], Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(),
                              15.4, 15.4, 16, 16);
        view.ldr = ImagePlane(16, 16, ColorDomain::Ldr);
        for (auto& p : view.ldr.pixels) {
            p = Eigen::Vector3d(rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6),
                                rng.uniform(0.2, 0.6));
        }
        view.hdr_ref = ImagePlane(16, 16, ColorDomain::LinearHdr);
        for (auto& p : view.hdr_ref.pixels) {
            p = Eigen::Vector3d(rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3),
                                rng.uniform(0.05, 0.3));
        }
        view.has_hdr_ref = true;
        views.push_back(std::move(view));
    }
    return views;
}

TrainState make_state(std::uint64_t seed, TrainMode mode, bool coupled) {
    const GaussianSet base = base_scene(seed);
    ExposurePlan plan;
    plan.base_exposure = 1.0;
    plan.ratios = {0.5, 2.0};
    const ResponseCurve curve = builtin_curves().by_name("identity");
    TrainConfig cfg;
    cfg.iterations = 4;
    cfg.lambda = 0.4;
    cfg.beta = 0.7;
    cfg.mode = mode;
    cfg.coupled_hdr = coupled;
    cfg.seed = seed;
    return init_train_state(base, plan, curve, cfg);
}

bool states_equal(const TrainState& a, const TrainState& b) {
    if (a.iteration != b.iteration || a.adam_t != b.adam_t) return false;
    if (a.log_sh != b.log_sh) return false;
    for (int i = 0; i < a.geometry.count(); ++i) {
        if (a.geometry.gaussians[static_cast<std::size_t>(i)].opacity_logit !=
            b.geometry.gaussians[static_cast<std::size_t>(i)].opacity_logit) {
            return false;
        }
    }
    if (a.neef.log_sigma != b.neef.log_sigma) return false;
    std::vector<double> ta(a.neef.mlps[0].param_count()), tb(ta.size());
    for (int c = 0; c < 3; ++c) {
        a.neef.mlps[static_cast<std::size_t>(c)].flatten(ta.data());
        b.neef.mlps[static_cast<std::size_t>(c)].flatten(tb.data());
        if (ta != tb) return false;
    }
    return a.adam_sh.m == b.adam_sh.m && a.adam_sh.v == b.adam_sh.v &&
           a.adam_opacity.m == b.adam_opacity.m && a.adam_theta.m == b.adam_theta.m &&
           a.adam_sigma.v == b.adam_sigma.v;
}

}  // namespace

TEST(TrainState, InitTiesLogTableToScene) {
    TrainState s = make_state(3, TrainMode::SelfSupervised, false);
    const int k = sh_coeff_count(s.geometry.sh_degree);
    ASSERT_EQ(s.log_sh.size(), static_cast<std::size_t>(s.geometry.count()) * k * 3);
    for (int g = 0; g < s.geometry.count(); ++g) {
        for (int kk = 0; kk < k; ++kk) {
            for (int c = 0; c < 3; ++c) {
                const double coeff =
                    s.geometry.gaussians[static_cast<std::size_t>(g)]
                        .sh[static_cast<std::size_t>(kk)][c];
                EXPECT_DOUBLE_EQ(s.log_sh[(static_cast<std::size_t>(g) * k + kk) * 3 + c],
                                 std::log(coeff));
            }
        }
    }
    EXPECT_EQ(s.adam_sh.m.size(), s.log_sh.size());
    EXPECT_EQ(s.adam_theta.m.size(), 3 * s.neef.mlps[0].param_count());
    EXPECT_EQ(s.iteration, 0);
}

TEST(TrainState, RejectsWrongDomain) {
    GaussianSet base = base_scene(3);
    base.domain = ColorDomain::LinearHdr;
    ExposurePlan plan;
    plan.ratios = {2.0};
    EXPECT_THROW(
        init_train_state(base, plan, builtin_curves().by_name("identity"), TrainConfig{}),
        std::invalid_argument);
}

TEST(EpochOrder, PermutationDeterministicPerEpoch) {
    const std::vector<int> a = epoch_order(7, 0, 6);
    const std::vector<int> b = epoch_order(7, 0, 6);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, epoch_order(7, 1, 6));
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(Training, LossesAreFiniteAndLogged) {
    TrainState s = make_state(11, TrainMode::SelfSupervised, false);
    const std::vector<TrainView> views = make_views(12);
    const std::vector<TrainLogRow> rows = train(s, views, 5);
    ASSERT_EQ(rows.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(rows[static_cast<std::size_t>(i)].iteration, i);
        EXPECT_TRUE(std::isfinite(rows[static_cast<std::size_t>(i)].total));
        EXPECT_NEAR(rows[static_cast<std::size_t>(i)].total,
                    rows[static_cast<std::size_t>(i)].loss_ldr +
                        s.config.beta * rows[static_cast<std::size_t>(i)].loss_linear,
                    1e-12);
    }
    EXPECT_EQ(s.iteration, 5);
    s.geometry.validate();  // radiance stays positive by construction
}

TEST(Training, FullBatchAveragesViews) {
    TrainState s = make_state(13, TrainMode::SelfSupervised, false);
    const std::vector<TrainView> views = make_views(14, 2);
    const TrainLosses both = compute_loss_and_grads(s, views, {0, 1});
    const TrainLosses v0 = compute_loss_and_grads(s, views, {0});
    const TrainLosses v1 = compute_loss_and_grads(s, views, {1});
    EXPECT_NEAR(both.total, 0.5 * (v0.total + v1.total), 1e-12);
}

TEST(Training, PerfectReferenceZeroesLinearLoss) {
    TrainState s = make_state(17, TrainMode::HdrSupervised, false);
    std::vector<TrainView> views = make_views(18, 1);
    // replace the reference with this state's own fused render
    const BracketedScene b = bracket_logs(s.geometry, s.log_sh, s.plan);
    const FuseResult fr = fuse(b, s.curve, s.neef, WeightMode::Softmax);
    views[0].hdr_ref = rasterize(project(fr.scene, views[0].camera), views[0].camera);
    views[0].hdr_ref.domain = ColorDomain::LinearHdr;
    const TrainLosses l = compute_loss_and_grads(s, views, {0});
    EXPECT_NEAR(l.linear, 0.0, 1e-12);
    EXPECT_GT(l.ldr, 0.0);
}

TEST(Training, DetachedLinearLossLeavesFusionAlone) {
    // when the display render matches its target exactly and the fused
    // render is detached, nothing pulls on the fusion parameters; lambda
    // is zeroed so the display loss is a pure L1 with an exact-match
    // subgradient of zero
    TrainState s = make_state(19, TrainMode::SelfSupervised, false);
    s.config.lambda = 0.0;
    std::vector<TrainView> views = make_views(20, 1);
    const BracketedScene b = bracket_logs(s.geometry, s.log_sh, s.plan);
    const FuseResult fr = fuse(b, s.curve, s.neef, WeightMode::Softmax);
    SplatList sp = project(fr.scene, views[0].camera);
    const double dt1 = b.base_exposure();
    for (auto& splat : sp.splats) {
        for (int c = 0; c < 3; ++c) splat.color[c] = apply_crf(s.curve, splat.color[c] * dt1);
    }
    views[0].ldr = rasterize(sp, views[0].camera);
    views[0].ldr.domain = ColorDomain::Ldr;

    TrainGrads g;
    compute_loss_and_grads(s, views, {0}, &g);
    for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(g.log_sigma[static_cast<std::size_t>(c)], 0.0);
        std::vector<double> flat(s.neef.mlps[0].param_count());
        flatten_grads(g.mlps[static_cast<std::size_t>(c)], flat.data());
        for (double v : flat) EXPECT_EQ(v, 0.0);
    }
    // the base-render path still trains the radiance table
    double norm = 0.0;
    for (double v : g.log_sh) norm += std::abs(v);
    EXPECT_GT(norm, 0.0);

    // coupling switches the fusion path back on
    TrainState sc = make_state(19, TrainMode::SelfSupervised, true);
    sc.config.lambda = 0.0;
    TrainGrads gc;
    compute_loss_and_grads(sc, views, {0}, &gc);
    double theta_norm = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> flat(sc.neef.mlps[0].param_count());
        flatten_grads(gc.mlps[static_cast<std::size_t>(c)], flat.data());
        for (double v : flat) theta_norm += std::abs(v);
    }
    EXPECT_GT(theta_norm, 0.0);
}

TEST(Training, DeterministicAcrossRuns) {
    const std::vector<TrainView> views = make_views(22);
    TrainState a = make_state(21, TrainMode::SelfSupervised, true);
    TrainState b = make_state(21, TrainMode::SelfSupervised, true);
    const auto rows_a = train(a, views, 6);
    const auto rows_b = train(b, views, 6);
    for (std::size_t i = 0; i < rows_a.size(); ++i) {
        EXPECT_EQ(rows_a[i].total, rows_b[i].total);
    }
    EXPECT_TRUE(states_equal(a, b));
}

TEST(Training, CheckpointRoundTripIsExact) {
    TrainState s = make_state(23, TrainMode::SelfSupervised, true);
    const std::vector<TrainView> views = make_views(24);
    train(s, views, 3);
    s.config_hash = 0xabcdef0123456789ull;
    const std::string blob = encode_checkpoint(s);
    const TrainState r = decode_checkpoint(blob, s.config);
    EXPECT_TRUE(states_equal(s, r));
    EXPECT_EQ(r.config_hash, s.config_hash);
    EXPECT_EQ(r.plan.ratios, s.plan.ratios);
    EXPECT_EQ(r.curve.name, s.curve.name);
    // geometry round trips bit-exactly
    for (int i = 0; i < s.geometry.count(); ++i) {
        EXPECT_EQ(r.geometry.gaussians[static_cast<std::size_t>(i)].mean,
                  s.geometry.gaussians[static_cast<std::size_t>(i)].mean);
        EXPECT_EQ(r.geometry.gaussians[static_cast<std::size_t>(i)].sh[0],
                  s.geometry.gaussians[static_cast<std::size_t>(i)].sh[0]);
    }
}

TEST(Training, ResumeMatchesUninterruptedRun) {
    const std::vector<TrainView> views = make_views(26, 3);
    TrainState straight = make_state(25, TrainMode::SelfSupervised, true);
    const auto rows_full = train(straight, views, 8);

    TrainState first = make_state(25, TrainMode::SelfSupervised, true);
    auto rows = train(first, views, 3);
    TrainState resumed = decode_checkpoint(encode_checkpoint(first), first.config);
    const auto rows_rest = train(resumed, views, 5);
    rows.insert(rows.end(), rows_rest.begin(), rows_rest.end());

    ASSERT_EQ(rows.size(), rows_full.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].total, rows_full[i].total) << "iteration " << i;
    }
    EXPECT_TRUE(states_equal(straight, resumed));
}

TEST(Training, CheckpointRejectsCorruption) {
    TrainState s = make_state(27, TrainMode::SelfSupervised, false);
    const std::string blob = encode_checkpoint(s);
    std::string bad = blob;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad, s.config), IoError);
    EXPECT_THROW(decode_checkpoint(blob.substr(0, blob.size() / 2), s.config), IoError);
    EXPECT_THROW(decode_checkpoint(blob + "zz", s.config), IoError);
}

TEST(Training, LossLogFormat) {
    std::vector<TrainLogRow> rows{{0, 0.5, 0.25, 0.675}, {1, 0.4, 0.2, 0.54}};
    const std::string text = format_loss_log(rows);
    std::istringstream iss(text);
    std::string line;
    int count = 0;
    while (std::getline(iss, line)) {
        ++count;
        int commas = 0;
        for (char ch : line) commas += ch == ',';
        EXPECT_EQ(commas, 3);
    }
    EXPECT_EQ(count, 2);
    EXPECT_EQ(text.find("iter"), std::string::npos);  // no header line
}

namespace {

void run_training_fd(TrainMode mode, bool coupled, std::uint64_t seed) {
    TrainState s = make_state(seed, mode, coupled);
    const std::vector<TrainView> views = make_views(seed + 1, 2);
    const std::vector<int> sel{0, 1};
    TrainGrads g;
    compute_loss_and_grads(s, views, sel, &g);
    auto loss_of = [&](const TrainState& st) {
        return compute_loss_and_grads(st, views, sel).total;
    };
    const double h = 1e-4;

    for (std::size_t j = 0; j < s.log_sh.size(); j += 5) {
        TrainState up = s, dn = s;
        up.log_sh[j] += h;
        dn.log_sh[j] -= h;
        const double fd = (loss_of(up) - loss_of(dn)) / (2.0 * h);
        EXPECT_LT(rel_err(g.log_sh[j], fd), 1e-4) << "log_sh " << j;
    }
    for (int i = 0; i < s.geometry.count(); ++i) {
        TrainState up = s, dn = s;
        up.geometry.gaussians[static_cast<std::size_t>(i)].opacity_logit += h;
        dn.geometry.gaussians[static_cast<std::size_t>(i)].opacity_logit -= h;
        const double fd = (loss_of(up) - loss_of(dn)) / (2.0 * h);
        EXPECT_LT(rel_err(g.opacity[static_cast<std::size_t>(i)], fd), 1e-4) << "logit " << i;
    }
    for (int c = 0; c < 3; ++c) {
        TrainState up = s, dn = s;
        up.neef.log_sigma[static_cast<std::size_t>(c)] += h;
        dn.neef.log_sigma[static_cast<std::size_t>(c)] -= h;
        const double fd = (loss_of(up) - loss_of(dn)) / (2.0 * h);
        EXPECT_LT(rel_err(g.log_sigma[static_cast<std::size_t>(c)], fd), 1e-4) << "sigma " << c;
    }
    const std::size_t per = s.neef.mlps[0].param_count();
    for (int c = 0; c < 3; ++c) {
        std::vector<double> flat_grads(per);
        flatten_grads(g.mlps[static_cast<std::size_t>(c)], flat_grads.data());
        for (std::size_t j = 0; j < per; j += 61) {
            TrainState up = s, dn = s;
            std::vector<double> theta(per);
            s.neef.mlps[static_cast<std::size_t>(c)].flatten(theta.data());
            std::vector<double> t_up = theta, t_dn = theta;
            t_up[j] += h;
            t_dn[j] -= h;
            up.neef.mlps[static_cast<std::size_t>(c)].unflatten(t_up.data());
            dn.neef.mlps[static_cast<std::size_t>(c)].unflatten(t_dn.data());
            const double fd = (loss_of(up) - loss_of(dn)) / (2.0 * h);
            EXPECT_LT(rel_err(flat_grads[j], fd), 1e-4) << "theta " << c << "," << j;
        }
    }
}

}  // namespace

TEST(Training, FiniteDifferenceOracleCoupledSelf) {
    run_training_fd(TrainMode::SelfSupervised, true, 29);
}

TEST(Training, FiniteDifferenceOracleHdrSupervised) {
    run_training_fd(TrainMode::HdrSupervised, false, 31);
}
