#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "surfelslam/geometry.h"

using namespace surfelslam;

TEST_CASE("backproject known points") {
    Intrinsics k1{1, 1, 0, 0, 640, 480};
    CHECK(backproject(0, 0, 1.0, k1).isApprox(Eigen::Vector3d(0, 0, 1)));
    CHECK(backproject(2, 3, 2.0, k1).isApprox(Eigen::Vector3d(4, 6, 2)));

    Intrinsics k2{300, 300, 128, 128, 256, 256};
    CHECK(backproject(128, 128, 0.05, k2).isApprox(Eigen::Vector3d(0, 0, 0.05)));

    CHECK_THROWS_AS(backproject(0, 0, 0.0, k1), InvalidInputError);
    CHECK_THROWS_AS(backproject(0, 0, -1.0, k1), InvalidInputError);
}

TEST_CASE("project known points and round trip") {
    Intrinsics k2{300, 300, 128, 128, 256, 256};
    auto uv = project({0, 0, 0.05}, k2);
    CHECK(uv.x() == doctest::Approx(128).epsilon(1e-12));
    CHECK(uv.y() == doctest::Approx(128).epsilon(1e-12));

    Intrinsics k1{1, 1, 0, 0, 640, 480};
    auto uv2 = project({4, 6, 2}, k1);
    CHECK(uv2.x() == doctest::Approx(2).epsilon(1e-12));
    CHECK(uv2.y() == doctest::Approx(3).epsilon(1e-12));

    CHECK_THROWS_AS(project({1, 1, -1}, k1), BehindCameraError);
    CHECK_THROWS_AS(project({1, 1, 0}, k1), BehindCameraError);
}

TEST_CASE("project(backproject) identity over grid and depths") {
    Intrinsics k{287.5, 291.25, 161.75, 118.5, 320, 240};
    for (double d : {0.013, 0.7, 3.1, 10.0}) {
        for (int v = 0; v < k.height; v += 17) {
            for (int u = 0; u < k.width; u += 13) {
                auto uv = project(backproject(u, v, d, k), k);
                CHECK(std::abs(uv.x() - u) < 1e-9);
                CHECK(std::abs(uv.y() - v) < 1e-9);
            }
        }
    }
}

TEST_CASE("se3_exp basics") {
    Pose id = se3_exp(Twist::Zero());
    CHECK(id.R.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
    CHECK(id.t.norm() == doctest::Approx(0).epsilon(1e-15));

    Twist zrot = Twist::Zero();
    zrot(5) = M_PI / 2;
    Pose p = se3_exp(zrot);
    Eigen::Matrix3d expect;
    expect << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    CHECK(p.R.isApprox(expect, 1e-12));
    CHECK(p.t.norm() == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("se3_exp matches truncated matrix power series") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    for (int trial = 0; trial < 50; ++trial) {
        Twist xi;
        for (int i = 0; i < 6; ++i) xi(i) = uni(rng);
        Eigen::Matrix4d X = Eigen::Matrix4d::Zero();
        X.topLeftCorner<3, 3>() = skew(xi.tail<3>());
        X.topRightCorner<3, 1>() = xi.head<3>();
        Eigen::Matrix4d series = Eigen::Matrix4d::Identity(), term = Eigen::Matrix4d::Identity();
        for (int n = 1; n <= 20; ++n) {
            term = term * X / n;
            series += term;
        }
        Pose p = se3_exp(xi);
        CHECK((p.R - series.topLeftCorner<3, 3>()).norm() < 1e-10);
        CHECK((p.t - series.topRightCorner<3, 1>()).norm() < 1e-10);
    }
}

TEST_CASE("se3 log/exp round trip, 1000 random twists") {
    std::mt19937 rng(7);
    std::normal_distribution<double> gauss(0, 0.3);
    for (int trial = 0; trial < 1000; ++trial) {
        Twist xi;
        do {
            for (int i = 0; i < 6; ++i) xi(i) = gauss(rng);
        } while (xi.norm() >= 1.0);
        Twist back = se3_log(se3_exp(xi));
        CHECK((back - xi).norm() < 1e-9);
    }
}

TEST_CASE("se3_log special angles") {
    CHECK(se3_log(Pose::identity()).norm() == doctest::Approx(0).epsilon(1e-15));

    Twist zrot = Twist::Zero();
    zrot(5) = M_PI / 2;
    Twist back = se3_log(se3_exp(zrot));
    CHECK((back - zrot).norm() < 1e-12);

    // rotation by pi about x: log must return a pi-magnitude axis
    Twist pirot = Twist::Zero();
    pirot(3) = M_PI;
    Pose p = se3_exp(pirot);
    Twist logp = se3_log(p);
    CHECK(std::abs(logp.tail<3>().norm() - M_PI) < 1e-6);
    Pose again = se3_exp(logp);
    CHECK(again.R.isApprox(p.R, 1e-9));
}

TEST_CASE("se3_exp output satisfies pose invariants") {
    std::mt19937 rng(3);
    std::normal_distribution<double> gauss(0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Twist xi;
        for (int i = 0; i < 6; ++i) xi(i) = gauss(rng);
        Pose p = se3_exp(xi);
        CHECK((p.R.transpose() * p.R - Eigen::Matrix3d::Identity()).norm() < 1e-9);
        CHECK(std::abs(p.R.determinant() - 1.0) < 1e-9);
    }
}

TEST_CASE("parallel twists compose additively, non-parallel do not") {
    Twist a = Twist::Zero(), b = Twist::Zero();
    a(4) = 0.3;
    b(4) = 0.5;
    Pose ab = se3_exp(a) * se3_exp(b);
    Pose sum = se3_exp(a + b);
    CHECK(ab.R.isApprox(sum.R, 1e-12));

    Twist c = Twist::Zero();
    c(3) = 0.4;
    Pose bc = se3_exp(b) * se3_exp(c);
    Pose sum2 = se3_exp(b + c);
    CHECK(!bc.R.isApprox(sum2.R, 1e-6));
}

TEST_CASE("intensity NTSC weights") {
    CHECK(intensity(0, 0, 0) == doctest::Approx(0).epsilon(1e-15));
    CHECK(intensity(255, 255, 255) == doctest::Approx(254.9745).epsilon(1e-12));
    CHECK(intensity(100, 0, 0) == doctest::Approx(29.89).epsilon(1e-12));

    // linear in each channel
    CHECK(intensity(10, 20, 30) + intensity(1, 2, 3) ==
          doctest::Approx(intensity(11, 22, 33)).epsilon(1e-12));
}

TEST_CASE("pyramid sizes and constant image") {
    GrayImage img(320, 240, 7.5f);
    auto pyr = build_pyramid(img, 3);
    REQUIRE(pyr.size() == 3);
    CHECK(pyr[0].width() == 320);
    CHECK(pyr[0].height() == 240);
    CHECK(pyr[1].width() == 160);
    CHECK(pyr[1].height() == 120);
    CHECK(pyr[2].width() == 80);
    CHECK(pyr[2].height() == 60);
    for (const auto& level : pyr)
        for (int y = 0; y < level.height(); ++y)
            for (int x = 0; x < level.width(); ++x) CHECK(level.at(x, y) == 7.5f);
}

TEST_CASE("depth pyramid excludes invalid pixels") {
    GrayImage img(4, 4, 0.0f);
    img.at(0, 0) = 4.0f; // single valid pixel in its 2x2 block
    auto pyr = build_pyramid(img, 2, true);
    CHECK(pyr[1].at(0, 0) == 4.0f);
    CHECK(pyr[1].at(1, 1) == 0.0f);
}

TEST_CASE("pyramid rejects indivisible dimensions") {
    GrayImage img(321, 240);
    CHECK_THROWS_AS(build_pyramid(img, 3), InvalidInputError);
}

TEST_CASE("pose algebra") {
    Twist xi;
    xi << 0.1, -0.2, 0.05, 0.3, 0.1, -0.2;
    Pose p = se3_exp(xi);
    Pose pinv = p.inverse();
    Pose idp = p * pinv;
    CHECK(idp.R.isApprox(Eigen::Matrix3d::Identity(), 1e-12));
    CHECK(idp.t.norm() < 1e-12);

    Eigen::Vector3d v(0.4, -0.1, 0.9);
    CHECK((pinv * (p * v) - v).norm() < 1e-12);
}

TEST_CASE("intrinsics pyramid level scaling keeps center rays aligned") {
    Intrinsics k{300, 300, 159.5, 119.5, 320, 240};
    Intrinsics k1 = k.level(1);
    CHECK(k1.width == 160);
    CHECK(k1.fx == doctest::Approx(150));
    // the same scene point projects to half the (center-convention) pixel coordinate
    Eigen::Vector3d p(0.01, 0.004, 0.07);
    auto uv0 = project(p, k);
    auto uv1 = project(p, k1);
    CHECK(uv1.x() == doctest::Approx((uv0.x() + 0.5) * 0.5 - 0.5).epsilon(1e-12));
    CHECK(uv1.y() == doctest::Approx((uv0.y() + 0.5) * 0.5 - 0.5).epsilon(1e-12));
}
