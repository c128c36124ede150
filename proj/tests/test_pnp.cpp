#include <doctest.h>

#include <cmath>
#include <random>

#include "mvr/pnp.hpp"
#include "mvr/random.hpp"

using namespace mvr;
using Eigen::Vector3d;

namespace {

const CameraIntrinsicsd kCam{400, 400, 320, 240, 640, 480};

struct Problem {
  Pose3d world_to_cam;
  Eigen::Matrix3Xd points;
  Eigen::Matrix2Xd pixels;
};

// Points spread in front of a random camera; `planar` puts them on z = 0.
Problem make_problem(Rng& rng, int n, bool planar, double spread = 0.08) {
  std::uniform_real_distribution<double> u(-1, 1);
  Problem p;
  const Vector3d eye(u(rng) * 0.8, -0.6 + u(rng) * 0.2, 0.6 + u(rng) * 0.2);
  const Vector3d center(u(rng) * 0.2, u(rng) * 0.2, planar ? 0.0 : 0.05);
  Eigen::Matrix3d r;
  const Vector3d z = (center - eye).normalized();
  const Vector3d x = z.cross(Vector3d::UnitZ()).normalized();
  r << x, z.cross(x), z;
  p.world_to_cam = Pose3d(r, eye).inverse();
  p.points.resize(3, n);
  p.pixels.resize(2, n);
  for (int i = 0; i < n; ++i) {
    const Vector3d w = center + Vector3d(u(rng) * spread, u(rng) * spread, planar ? 0.0 : u(rng) * spread * 0.75);
    const Vector3d c = p.world_to_cam * w;
    p.points.col(i) = w;
    p.pixels.col(i) = Eigen::Vector2d(kCam.fx * c.x() / c.z() + kCam.cx, kCam.fy * c.y() / c.z() + kCam.cy);
  }
  return p;
}

double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

double manual_error(const Problem& p, const Pose3d& w, int i) {
  const Vector3d c = w.rotation() * p.points.col(i) + w.translation();
  const double du = kCam.fx * c.x() / c.z() + kCam.cx - p.pixels(0, i);
  const double dv = kCam.fy * c.y() / c.z() + kCam.cy - p.pixels(1, i);
  return std::sqrt(du * du + dv * dv);
}

}  // namespace

TEST_CASE("EPnP is exact on six or more noiseless correspondences") {
  Rng rng(31);
  int fails = 0;
  for (int t = 0; t < 1000; ++t) {
    const Problem p = make_problem(rng, 6 + t % 60, t % 5 == 0);
    const auto w = epnp(p.pixels, p.points, kCam);
    REQUIRE(w.has_value());
    const bool ok = rotation_angle(w->rotation(), p.world_to_cam.rotation()) < 1e-6 &&
                    (w->translation() - p.world_to_cam.translation()).norm() < 1e-6;
    fails += ok ? 0 : 1;
  }
  CHECK(fails == 0);
}

TEST_CASE("EPnP rejects too few and collinear points") {
  Rng rng(37);
  const Problem p = make_problem(rng, 3, false);
  CHECK_FALSE(epnp(p.pixels, p.points, kCam).has_value());
  Problem line = make_problem(rng, 8, false);
  for (int i = 0; i < 8; ++i) line.points.col(i) = Vector3d(0.01 * i, 0.0, 0.0);
  CHECK_FALSE(epnp(line.pixels, line.points, kCam).has_value());
}

TEST_CASE("refinement converges from a perturbed pose") {
  Rng rng(41);
  for (int t = 0; t < 100; ++t) {
    const Problem p = make_problem(rng, 30, false);
    const Eigen::Matrix3d dr = Eigen::AngleAxisd(0.03, Vector3d(1, 2, 3).normalized()).toRotationMatrix();
    const Pose3d start(dr * p.world_to_cam.rotation(), p.world_to_cam.translation() + Vector3d(0.01, -0.01, 0.02));
    const Pose3d w = refine_pose(p.pixels, p.points, kCam, start);
    CHECK(w.is_rigid(1e-9));
    CHECK(rotation_angle(w.rotation(), p.world_to_cam.rotation()) < 1e-8);
    CHECK((w.translation() - p.world_to_cam.translation()).norm() < 1e-8);
  }
}

TEST_CASE("reprojection errors match a direct evaluation") {
  Rng rng(43);
  const Problem p = make_problem(rng, 20, false);
  const Pose3d off(p.world_to_cam.rotation(), p.world_to_cam.translation() + Vector3d(0.003, 0, 0));
  const Eigen::VectorXd e = reprojection_errors(p.pixels, p.points, kCam, off);
  for (int i = 0; i < 20; ++i) CHECK(e(i) == doctest::Approx(manual_error(p, off, i)).epsilon(1e-12));
  const Pose3d behind(p.world_to_cam.rotation(), p.world_to_cam.translation() - Vector3d(0, 0, 50));
  const Eigen::VectorXd b = reprojection_errors(p.pixels, p.points, kCam, behind);
  CHECK(std::isinf(b(0)));
}

TEST_CASE("RANSAC errors") {
  Rng rng(47);
  const Problem p = make_problem(rng, 3, false);
  CHECK_THROWS_AS(ransac_pnp(p.pixels, p.points, kCam), TooFewCorrespondences);
  Problem same = make_problem(rng, 10, false);
  for (int i = 0; i < 10; ++i) same.points.col(i) = Vector3d(0.1, 0.1, 0.1);
  CHECK_THROWS_AS(ransac_pnp(same.pixels, same.points, kCam), DegenerateGeometry);
}

TEST_CASE("RANSAC survives 40 percent outliers with unit pixel noise") {
  Rng rng(53);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> img(0.0, 640.0);
  int pass = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Problem p = make_problem(rng, 200, t % 4 == 0, 0.15);
    for (int i = 0; i < 200; ++i) {
      if (i % 5 < 2) {
        p.pixels.col(i) = Eigen::Vector2d(img(rng), img(rng) * 0.75);
      } else {
        p.pixels.col(i) += Eigen::Vector2d(noise(rng), noise(rng));
      }
    }
    RansacConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    const RansacResult r = ransac_pnp(p.pixels, p.points, kCam, cfg);
    for (const int i : r.inliers) CHECK(manual_error(p, r.world_to_cam, i) <= cfg.reprojection_threshold + 1e-9);
    // Error of the point set's centroid as placed in the camera frame.
    const Vector3d c = p.points.rowwise().mean();
    // Bounds sit a few times above the spread of a least-squares fit on the
    // true inliers for this geometry.
    const bool ok = rad2deg(rotation_angle(r.world_to_cam.rotation(), p.world_to_cam.rotation())) < 1.5 &&
                    (r.world_to_cam * c - p.world_to_cam * c).norm() < 0.01 &&
                    static_cast<int>(r.inliers.size()) >= 90;
    pass += ok ? 1 : 0;
  }
  CHECK(pass >= 95);
}
