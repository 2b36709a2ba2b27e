#include <doctest.h>

#include <cmath>

#include "headpose/geometry.hpp"
#include "oracles.hpp"

using namespace headpose;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("squarify_box expands the short side about the center") {
  const BoundingBox a = squarify_box(10, 20, 40, 80);
  CHECK(a.left == -10.0);
  CHECK(a.top == 20.0);
  CHECK(a.side == 80.0);

  const BoundingBox b = squarify_box(0, 0, 50, 50);
  CHECK(b.left == 0);
  CHECK(b.top == 0);
  CHECK(b.side == 50);

  const BoundingBox c = squarify_box(5, 5, 30, 10);
  CHECK(c.left == 5);
  CHECK(c.top == -5);
  CHECK(c.side == 30);
}

TEST_CASE("squarify_box preserves the center") {
  oracle::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double left = rng.uniform(-500, 500);
    const double top = rng.uniform(-500, 500);
    const double w = rng.uniform(1, 300);
    const double h = rng.uniform(1, 300);
    const BoundingBox box = squarify_box(left, top, w, h);
    CHECK(box.side == doctest::Approx(std::max(w, h)));
    CHECK(box.left + box.side / 2 == doctest::Approx(left + w / 2).epsilon(1e-12));
    CHECK(box.top + box.side / 2 == doctest::Approx(top + h / 2).epsilon(1e-12));
  }
}

TEST_CASE("squarify_box rejects non-positive extents") {
  CHECK_THROWS_AS(squarify_box(0, 0, 0, 10), Error);
  CHECK_THROWS_AS(squarify_box(0, 0, 10, -1), Error);
  try {
    squarify_box(0, 0, 0, 10);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_geometry);
  }
}

TEST_CASE("expand_margin matches the corner formulas") {
  const CropRegion r = expand_margin({10, 20, 100}, 0.5);
  CHECK(r.left == -40);
  CHECK(r.top == -30);
  CHECK(r.right == 160);
  CHECK(r.bottom == 170);

  const CropRegion identity = expand_margin({10, 20, 100}, 0.0);
  CHECK(identity.left == 10);
  CHECK(identity.top == 20);
  CHECK(identity.right == 110);
  CHECK(identity.bottom == 120);

  const CropRegion wide = expand_margin({0, 0, 50}, 1.0);
  CHECK(wide.left == -50);
  CHECK(wide.top == -50);
  CHECK(wide.right == 100);
  CHECK(wide.bottom == 100);
}

TEST_CASE("expand_margin rejects negative K") {
  CHECK_THROWS_AS(expand_margin({0, 0, 10}, -0.1), Error);
  try {
    expand_margin({0, 0, 10}, -0.1);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_parameter);
  }
}

TEST_CASE("expand_margin properties over random integer boxes") {
  oracle::Rng rng(7);
  const double k_grid[] = {0.0, 0.2, 0.3, 0.4, 0.5, 0.6, 1.0};
  for (int i = 0; i < 200; ++i) {
    const BoundingBox box{static_cast<double>(rng.uniform_int(-2000, 2000)),
                          static_cast<double>(rng.uniform_int(-2000, 2000)),
                          static_cast<double>(rng.uniform_int(1, 2000))};
    for (double k : k_grid) {
      const CropRegion r = expand_margin(box, k);
      // corner formulas, bitwise
      const double margin = k * box.side;
      CHECK(r.left == box.left - margin);
      CHECK(r.top == box.top - margin);
      CHECK(r.right == box.left + box.side + margin);
      CHECK(r.bottom == box.top + box.side + margin);
      // (1 + 2K) side scaling; exact in real arithmetic, a few ulps here
      CHECK(r.width() == doctest::Approx((1 + 2 * k) * box.side).epsilon(1e-12));
      CHECK(r.width() == doctest::Approx(r.height()).epsilon(1e-12));
      // equal margin on all four sides
      CHECK(box.left - r.left == doctest::Approx(margin).epsilon(1e-12));
      CHECK(r.right - (box.left + box.side) == doctest::Approx(margin).epsilon(1e-12));
      // translation equivariance
      const double dx = rng.uniform_int(-100, 100);
      const double dy = rng.uniform_int(-100, 100);
      const CropRegion shifted =
          expand_margin({box.left + dx, box.top + dy, box.side}, k);
      CHECK(shifted.left == doctest::Approx(r.left + dx).epsilon(1e-12));
      CHECK(shifted.top == doctest::Approx(r.top + dy).epsilon(1e-12));
      CHECK(shifted.right == doctest::Approx(r.right + dx).epsilon(1e-12));
      CHECK(shifted.bottom == doctest::Approx(r.bottom + dy).epsilon(1e-12));
    }
    // K = 0 is the exact identity on corners
    const CropRegion same = expand_margin(box, 0.0);
    CHECK(same.left == box.left);
    CHECK(same.top == box.top);
    CHECK(same.right == box.left + box.side);
    CHECK(same.bottom == box.top + box.side);
  }
}

TEST_CASE("angle/class codec endpoints and rounding") {
  CHECK(angle_to_class(-90.0) == 0);
  CHECK(angle_to_class(0.0) == 90);
  CHECK(angle_to_class(90.0) == 180);
  CHECK(angle_to_class(45.4) == 135);
  // ties round half away from zero
  CHECK(angle_to_class(-0.5) == 89);
  CHECK(angle_to_class(0.5) == 91);

  CHECK(class_to_angle(0) == -90.0);
  CHECK(class_to_angle(90) == 0.0);
  CHECK(class_to_angle(180) == 90.0);
}

TEST_CASE("codec rejects out-of-range inputs") {
  CHECK_THROWS_AS(angle_to_class(90.6), Error);
  CHECK_THROWS_AS(angle_to_class(-91.0), Error);
  CHECK_THROWS_AS(class_to_angle(-1), Error);
  CHECK_THROWS_AS(class_to_angle(181), Error);
  try {
    angle_to_class(95.0);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::out_of_range);
  }
  try {
    class_to_angle(181);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_index);
  }
}

TEST_CASE("codec identity on integers, bounded roundtrip, monotone") {
  for (int deg = -90; deg <= 90; ++deg) {
    const int idx = angle_to_class(static_cast<double>(deg));
    CHECK(class_to_angle(idx) == static_cast<double>(deg));
  }
  oracle::Rng rng(3);
  int last = 0;
  double last_angle = -90.0;
  for (int i = 0; i < 2000; ++i) {
    const double angle = rng.uniform(-90.0, 90.0);
    const int idx = angle_to_class(angle);
    CHECK(idx >= 0);
    CHECK(idx <= 180);
    CHECK(std::abs(class_to_angle(idx) - angle) <= 0.5);
    if (i > 0 && angle >= last_angle) CHECK(idx >= last);
    if (i > 0 && angle <= last_angle) CHECK(idx <= last);
    last = idx;
    last_angle = angle;
  }
}

TEST_CASE("euler_to_rotmat basics") {
  const RotationMatrix identity = euler_to_rotmat({0, 0, 0});
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      CHECK(identity.at(r, c) == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-15));
    }
  }

  // Pure yaw is a rotation about the vertical axis.
  const double deg = 30.0;
  const double cy = std::cos(radians_from_degrees(deg));
  const double sy = std::sin(radians_from_degrees(deg));
  const RotationMatrix yaw_only = euler_to_rotmat({deg, 0, 0});
  CHECK(yaw_only.at(0, 0) == doctest::Approx(cy).epsilon(1e-15));
  CHECK(yaw_only.at(0, 2) == doctest::Approx(sy).epsilon(1e-15));
  CHECK(yaw_only.at(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(yaw_only.at(2, 0) == doctest::Approx(-sy).epsilon(1e-15));
  CHECK(yaw_only.at(2, 2) == doctest::Approx(cy).epsilon(1e-15));
}

TEST_CASE("rotation matrices are orthonormal with unit determinant") {
  oracle::Rng rng(19);
  for (int i = 0; i < 500; ++i) {
    const HeadPose pose{rng.uniform(-89, 89), rng.uniform(-89, 89),
                        rng.uniform(-89, 89)};
    const RotationMatrix r = euler_to_rotmat(pose);
    CHECK(std::abs(oracle::det3(r.m) - 1.0) < 1e-9);
    CHECK(r.orthonormality_error() < 1e-9);
  }
}

TEST_CASE("euler <-> matrix roundtrip away from gimbal lock") {
  const HeadPose pose{10, -20, 35};
  const HeadPose back = rotmat_to_euler(euler_to_rotmat(pose));
  CHECK(back.yaw == doctest::Approx(10).epsilon(1e-9));
  CHECK(back.pitch == doctest::Approx(-20).epsilon(1e-9));
  CHECK(back.roll == doctest::Approx(35).epsilon(1e-9));

  oracle::Rng rng(23);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const HeadPose p{rng.uniform(-89, 89), rng.uniform(-89, 89),
                     rng.uniform(-89, 89)};
    const HeadPose q = rotmat_to_euler(euler_to_rotmat(p));
    worst = std::max({worst, std::abs(q.yaw - p.yaw), std::abs(q.pitch - p.pitch),
                      std::abs(q.roll - p.roll)});
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("rotmat_to_euler rejects non-rotations") {
  RotationMatrix bad;
  bad.at(0, 0) = 2.0;
  CHECK_THROWS_AS(rotmat_to_euler(bad), Error);
  try {
    rotmat_to_euler(bad);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_rotation);
  }
  // A reflection (det = -1) is orthonormal but not a rotation.
  RotationMatrix reflection;
  reflection.at(2, 2) = -1.0;
  CHECK_THROWS_AS(rotmat_to_euler(reflection), Error);
}

TEST_CASE("gimbal lock: throw by default, canonical roll-zero on request") {
  const RotationMatrix locked = euler_to_rotmat({25, 90, 10});
  CHECK_THROWS_AS(rotmat_to_euler(locked), Error);
  try {
    rotmat_to_euler(locked);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::degenerate_decomposition);
  }

  const HeadPose canonical =
      rotmat_to_euler(locked, GimbalPolicy::kCanonicalRollZero);
  CHECK(canonical.roll == 0.0);
  CHECK(canonical.pitch == doctest::Approx(90.0));
  // At +90 pitch, yaw and roll collapse onto (yaw - roll).
  CHECK(canonical.yaw == doctest::Approx(25.0 - 10.0).epsilon(1e-9));
  // The canonical pose reconstructs the same matrix.
  const RotationMatrix rebuilt = euler_to_rotmat(canonical);
  for (int i = 0; i < 9; ++i) {
    CHECK(rebuilt.m[static_cast<size_t>(i)] ==
          doctest::Approx(locked.m[static_cast<size_t>(i)]).epsilon(1e-9));
  }
}

TEST_CASE("degree/radian conversions") {
  CHECK(degrees_from_radians(3.14159265358979323846) == doctest::Approx(180.0));
  CHECK(radians_from_degrees(90.0) == doctest::Approx(1.5707963267948966));
  CHECK(degrees_from_radians(radians_from_degrees(12.34)) ==
        doctest::Approx(12.34).epsilon(1e-14));
}

TEST_CASE("HeadPose range flag") {
  CHECK(HeadPose{90, 90, 90}.in_range());
  CHECK_FALSE(HeadPose{95, 10, 0}.in_range());
  CHECK_FALSE(HeadPose{0, std::nan(""), 0}.in_range());
  CHECK(HeadPose{61, 0, 0}.in_range(90.0));
  CHECK_FALSE(HeadPose{61, 0, 0}.in_range(60.0));
}

TEST_SUITE_END();
