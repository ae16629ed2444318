#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "bevloc/geometry.hpp"
#include "bevloc/rng.hpp"

using namespace bevloc;

namespace {

/// 3x3 homogeneous-matrix oracle for SE(2) composition.
Eigen::Matrix3d pose_matrix(const Pose2& p) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = std::cos(p.yaw);
  m(0, 1) = -std::sin(p.yaw);
  m(1, 0) = std::sin(p.yaw);
  m(1, 1) = std::cos(p.yaw);
  m(0, 2) = p.x;
  m(1, 2) = p.y;
  return m;
}

Pose2 from_matrix(const Eigen::Matrix3d& m) {
  return Pose2(m(0, 2), m(1, 2), std::atan2(m(1, 0), m(0, 0)));
}

bool pose_near(const Pose2& a, const Pose2& b, double tol = 1e-9) {
  return std::abs(a.x - b.x) < tol && std::abs(a.y - b.y) < tol &&
         std::abs(wrap_angle(a.yaw - b.yaw)) < tol;
}

Pose2 random_pose(Rng& rng) {
  return Pose2(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-4, 4));
}

}  // namespace

TEST_CASE("wrap_angle: values, range, idempotence, errors") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-3.5 * M_PI) == doctest::Approx(0.5 * M_PI));

  // repeated +-2pi oracle
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    double theta = rng.uniform(-40.0, 40.0);
    double reduced = theta;
    while (reduced > M_PI) reduced -= 2.0 * M_PI;
    while (reduced <= -M_PI) reduced += 2.0 * M_PI;
    CHECK(wrap_angle(theta) == doctest::Approx(reduced).epsilon(1e-12));
    const double w = wrap_angle(theta);
    CHECK(w > -M_PI);
    CHECK(w <= M_PI);
    CHECK(wrap_angle(w) == w);
  }
  CHECK(wrap_angle(M_PI) == M_PI);
  CHECK(wrap_angle(-M_PI) == M_PI);  // open end folds onto +pi

  CHECK_THROWS_AS(wrap_angle(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(wrap_angle(INFINITY), std::invalid_argument);
}

TEST_CASE("compose: identity, quarter-turn case, inverse cancellation") {
  const Pose2 p(2.5, -1.25, 0.75);
  CHECK(pose_near(compose(Pose2::identity(), p), p));
  CHECK(pose_near(compose(p, Pose2::identity()), p));

  const Pose2 q = compose(Pose2(1, 0, M_PI / 2), Pose2(1, 0, 0));
  CHECK(pose_near(q, Pose2(1, 1, M_PI / 2)));

  CHECK(pose_near(compose(p, inverse(p)), Pose2::identity()));
}

TEST_CASE("compose: homogeneous matrix oracle on random pairs") {
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const Pose2 a = random_pose(rng), b = random_pose(rng);
    const Pose2 expect = from_matrix(Eigen::Matrix3d(pose_matrix(a) * pose_matrix(b)));
    CHECK(pose_near(compose(a, b), expect));
  }
}

TEST_CASE("inverse: closed forms and matrix oracle") {
  CHECK(pose_near(inverse(Pose2::identity()), Pose2::identity()));
  CHECK(pose_near(inverse(Pose2(0, 0, 0.6)), Pose2(0, 0, -0.6)));
  CHECK(pose_near(inverse(Pose2(2, 3, M_PI / 2)), Pose2(-3, 2, -M_PI / 2)));

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Pose2 p = random_pose(rng);
    const Pose2 expect = from_matrix(Eigen::Matrix3d(pose_matrix(p).inverse()));
    CHECK(pose_near(inverse(p), expect));
  }
}

TEST_CASE("compose: associativity within 1e-9") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Pose2 a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(pose_near(compose(compose(a, b), c), compose(a, compose(b, c))));
  }
}

TEST_CASE("transform_cloud: identity, translation, rotation oracle, round trip") {
  const PointCloud c = {{0, 0, 5}, {1, 0, 2}, {-2, 3, -1}};
  const PointCloud same = transform_cloud(Pose2::identity(), c);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK((same[i] - c[i]).norm() == 0.0);

  const PointCloud shifted = transform_cloud(Pose2(1, 1, 0), {{0, 0, 5}});
  CHECK((shifted[0] - Eigen::Vector3d(1, 1, 5)).norm() == 0.0);

  const PointCloud rot = transform_cloud(Pose2(0, 0, M_PI / 2), {{1, 0, 2}});
  CHECK((rot[0] - Eigen::Vector3d(0, 1, 2)).cwiseAbs().maxCoeff() < 1e-12);

  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Pose2 p = random_pose(rng);
    PointCloud cloud;
    for (int j = 0; j < 20; ++j) {
      cloud.emplace_back(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-2, 8));
    }
    // rotation-matrix oracle, z untouched
    const double cy = std::cos(p.yaw), sy = std::sin(p.yaw);
    const PointCloud got = transform_cloud(p, cloud);
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      const Eigen::Vector3d expect(cy * cloud[j].x() - sy * cloud[j].y() + p.x,
                                   sy * cloud[j].x() + cy * cloud[j].y() + p.y, cloud[j].z());
      CHECK((got[j] - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    const PointCloud back = transform_cloud(inverse(p), got);
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      CHECK((back[j] - cloud[j]).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("Pose2: constructor wraps yaw") {
  CHECK(Pose2(0, 0, 3.0 * M_PI).yaw == doctest::Approx(M_PI));
  CHECK(Pose2(0, 0, -0.5).yaw == -0.5);
  CHECK(cloud_is_finite({{1, 2, 3}}));
  CHECK_FALSE(cloud_is_finite({{1, std::nan(""), 3}}));
}
