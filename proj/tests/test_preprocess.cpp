#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "surfelslam/errors.h"
#include "surfelslam/preprocess.h"
#include "surfelslam/synth.h"

using namespace surfelslam;

namespace {

ColorImage gray_image(int w, int h, float v) {
    return ColorImage(w, h, Eigen::Vector3f(v, v, v));
}

long mask_area(const MaskImage& m) {
    long n = 0;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.at(x, y)) ++n;
    return n;
}

} // namespace

TEST_CASE("uniform image produces an empty reflection mask") {
    ColorImage C = gray_image(96, 64, 120.0f);
    MaskImage m = detect_reflections(C);
    CHECK(mask_area(m) == 0);
}

TEST_CASE("a bright block is masked exactly, plus the dilation margin") {
    ColorImage C = gray_image(64, 64, 80.0f);
    for (int y = 8; y < 18; ++y)
        for (int x = 8; x < 18; ++x) C.at(x, y) = Eigen::Vector3f(255, 255, 255);
    MaskImage m = detect_reflections(C);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            bool expect = x >= 6 && x < 20 && y >= 6 && y < 20;
            CHECK(static_cast<bool>(m.at(x, y)) == expect);
        }
}

TEST_CASE("smooth bright patches without sharp boundaries are not masked") {
    // wide gaussian bump, 40 levels over background, gentle slopes
    ColorImage C = gray_image(96, 96, 140.0f);
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            double d2 = (x - 48.0) * (x - 48.0) + (y - 48.0) * (y - 48.0);
            float v = 140.0f + 40.0f * static_cast<float>(std::exp(-d2 / (2 * 24.0 * 24.0)));
            C.at(x, y) = Eigen::Vector3f(v, v, v);
        }
    MaskImage m = detect_reflections(C);
    CHECK(mask_area(m) == 0);
}

TEST_CASE("injected specular blobs are recovered with high recall") {
    synth::Scene scene;
    Intrinsics K = synth::default_intrinsics();
    auto poses = synth::make_trajectory("t1_slow", 200);
    synth::NoiseConfig nc;
    nc.sigma = 2.0 / 255.0;
    nc.blob_count = 6;
    for (int f : {0, 50, 105, 138}) {
        auto out = synth::render(scene, poses[f], K, LightModel{0, 0, 0.85}, nc, f);
        MaskImage det = detect_reflections(out.color);
        long tp = 0, tot = 0;
        for (int y = 0; y < K.height; ++y)
            for (int x = 0; x < K.width; ++x)
                if (out.specular_gt.at(x, y)) {
                    ++tot;
                    if (det.at(x, y)) ++tp;
                }
        REQUIRE(tot > 0);
        CHECK(static_cast<double>(tp) / tot >= 0.9);
    }
}

TEST_CASE("re-detection after inpainting finds almost nothing") {
    synth::Scene scene;
    Intrinsics K = synth::default_intrinsics();
    auto poses = synth::make_trajectory("t1_slow", 200);
    synth::NoiseConfig nc;
    nc.sigma = 2.0 / 255.0;
    nc.blob_count = 6;
    auto out = synth::render(scene, poses[50], K, LightModel{0, 0, 0.85}, nc, 50);
    MaskImage m1 = detect_reflections(out.color);
    long a1 = mask_area(m1);
    REQUIRE(a1 > 0);
    ColorImage filled = inpaint(out.color, m1);
    long a2 = mask_area(detect_reflections(filled));
    CHECK(a2 <= a1 / 20);
}

TEST_CASE("inpaint leaves unmasked pixels bit-identical") {
    synth::Scene scene;
    Intrinsics K = synth::default_intrinsics();
    Pose cam{Eigen::Matrix3d::Identity(), scene.center};
    auto out = synth::render(scene, cam, K, LightModel{}, synth::NoiseConfig{}, 0);
    MaskImage m(K.width, K.height, 0);
    for (int y = 60; y < 90; ++y)
        for (int x = 100; x < 130; ++x) m.at(x, y) = 1;
    ColorImage filled = inpaint(out.color, m);
    for (int y = 0; y < K.height; ++y)
        for (int x = 0; x < K.width; ++x)
            if (!m.at(x, y)) CHECK(filled.at(x, y) == out.color.at(x, y));
}

TEST_CASE("inpaint fixed points and error cases") {
    ColorImage C = gray_image(32, 32, 50.0f);
    MaskImage empty(32, 32, 0);
    ColorImage same = inpaint(C, empty);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) CHECK(same.at(x, y) == C.at(x, y));

    MaskImage hole(32, 32, 0);
    for (int y = 10; y < 20; ++y)
        for (int x = 10; x < 20; ++x) hole.at(x, y) = 1;
    ColorImage filled = inpaint(C, hole);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) CHECK(filled.at(x, y).x() == doctest::Approx(50.0f).epsilon(1e-4));

    MaskImage full(32, 32, 1);
    CHECK_THROWS_AS(inpaint(C, full), InvalidInputError);
    MaskImage wrong(16, 16, 0);
    CHECK_THROWS_AS(inpaint(C, wrong), InvalidInputError);
}

TEST_CASE("inpaint recovers a linear ramp through a hole") {
    ColorImage C(48, 48, Eigen::Vector3f::Zero());
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            float v = 40.0f + 3.0f * x;
            C.at(x, y) = Eigen::Vector3f(v, v, v);
        }
    MaskImage hole(48, 48, 0);
    for (int y = 20; y < 25; ++y)
        for (int x = 20; x < 25; ++x) hole.at(x, y) = 1;
    ColorImage filled = inpaint(C, hole);
    for (int y = 20; y < 25; ++y)
        for (int x = 20; x < 25; ++x)
            CHECK(std::abs(filled.at(x, y).x() - (40.0f + 3.0f * x)) <= 2.0f);
}

TEST_CASE("vignetting correction identity, center anchor, and round trip") {
    synth::Scene scene;
    Intrinsics K = synth::default_intrinsics();
    Pose cam{Eigen::Matrix3d::Identity(), scene.center};
    auto out = synth::render(scene, cam, K, LightModel{0, 0, 0.85}, synth::NoiseConfig{}, 0);

    VignettingModel unit;
    ColorImage same = correct_vignetting(out.color, unit);
    for (int y = 0; y < K.height; ++y)
        for (int x = 0; x < K.width; ++x) CHECK(same.at(x, y) == out.color.at(x, y));

    VignettingModel V;
    V.a2 = -0.3;
    V.a4 = -0.1;
    V.cx = (K.width - 1) / 2.0;
    V.cy = (K.height - 1) / 2.0;
    // apply the gain forward, then correct; reconstruction within 1 level
    double corner = std::hypot((K.width - 1) / 2.0, (K.height - 1) / 2.0);
    ColorImage darkened(K.width, K.height, Eigen::Vector3f::Zero());
    for (int y = 0; y < K.height; ++y)
        for (int x = 0; x < K.width; ++x) {
            double r2 = (std::pow(x - V.cx, 2) + std::pow(y - V.cy, 2)) / (corner * corner);
            double gain = 1 + V.a2 * r2 + V.a4 * r2 * r2;
            darkened.at(x, y) = out.color.at(x, y) * static_cast<float>(gain);
        }
    ColorImage restored = correct_vignetting(darkened, V);
    int cx = K.width / 2, cy = K.height / 2;
    CHECK((restored.at(cx, cy) - out.color.at(cx, cy)).norm() < 1e-3);
    for (int y = 0; y < K.height; ++y)
        for (int x = 0; x < K.width; ++x)
            CHECK((restored.at(x, y) - out.color.at(x, y)).cwiseAbs().maxCoeff() <= 1.0f);

    VignettingModel bad;
    bad.a2 = -2.0;
    CHECK_THROWS_AS(correct_vignetting(out.color, bad), InvalidInputError);
}

TEST_CASE("intensity conversion uses broadcast luma weights on the unit scale") {
    ColorImage C(2, 1, Eigen::Vector3f::Zero());
    C.at(0, 0) = Eigen::Vector3f(255, 255, 255);
    C.at(1, 0) = Eigen::Vector3f(100, 50, 25);
    GrayImage I = to_intensity01(C);
    CHECK(I.at(0, 0) == doctest::Approx(254.9745 / 255.0));
    CHECK(I.at(1, 0) == doctest::Approx((0.2989 * 100 + 0.587 * 50 + 0.114 * 25) / 255.0).epsilon(1e-4));
}
