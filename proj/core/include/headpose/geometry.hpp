#pragma once

#include <array>
#include <span>

#include "headpose/error.hpp"

namespace headpose {

/// Head orientation as Tait-Bryan angles in degrees.
///
/// Convention used throughout the library: intrinsic yaw -> pitch -> roll,
/// i.e. R = R_yaw (vertical axis) * R_pitch (lateral axis) * R_roll
/// (optical axis). See euler_to_rotmat / rotmat_to_euler.
struct HeadPose {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  bool is_finite() const;
  /// A pose is evaluable iff all three angles lie in [-limit, +limit].
  bool in_range(double limit_deg = 90.0) const;
};

/// Square face box: top-left corner (left, top) and side length, all in
/// pixels. Coordinates are continuous; they may be negative or exceed the
/// image bounds.
struct BoundingBox {
  double left = 0.0;
  double top = 0.0;
  double side = 0.0;
};

/// Axis-aligned crop rectangle produced by expand_margin. Like the box it
/// was derived from, it may extend outside the image.
struct CropRegion {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const { return right - left; }
  double height() const { return bottom - top; }
};

/// Discretisation of [-90, +90] degrees into one-degree classes.
/// Class index j in {0..n_bins-1} has its bin center at (j - 90) degrees.
struct AngleBinning {
  int n_bins = 181;
  double min_deg = -90.0;
  double max_deg = 90.0;
};

inline constexpr int kNumAngleBins = 181;

/// Row-major 3x3 rotation matrix.
struct RotationMatrix {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double at(int row, int col) const { return m[static_cast<size_t>(row * 3 + col)]; }
  double& at(int row, int col) { return m[static_cast<size_t>(row * 3 + col)]; }

  double determinant() const;
  /// max |R^T R - I| over all entries.
  double orthonormality_error() const;
};

/// Expands a (possibly non-square) detector rectangle to a square box with
/// side max(width, height), keeping the center fixed.
BoundingBox squarify_box(double raw_left, double raw_top, double raw_width,
                         double raw_height);

/// Adds a margin of K * side on each of the four sides:
///   [left - K*l, top - K*l] - [left + l + K*l, top + l + K*l].
/// The crop side grows by the factor (1 + 2K); K = 0 returns the box corners
/// unchanged.
CropRegion expand_margin(const BoundingBox& box, double margin_ratio);

/// Maps an angle in [-90, +90] degrees to its class index in {0..180}.
/// Rounds half away from zero, so -0.5 -> class 89 and +0.5 -> class 91.
int angle_to_class(double angle_deg, const AngleBinning& binning = {});

/// Bin-center angle of a class index: (index - 90) degrees.
double class_to_angle(int index, const AngleBinning& binning = {});

RotationMatrix euler_to_rotmat(const HeadPose& pose);

/// What rotmat_to_euler does when the decomposition degenerates
/// (|pitch| -> 90, yaw and roll coupled).
enum class GimbalPolicy {
  kThrow,            ///< raise Errc::degenerate_decomposition
  kCanonicalRollZero ///< pin roll := 0 and fold the coupled rotation into yaw
};

/// Inverse of euler_to_rotmat under the same convention. `tolerance` bounds
/// the accepted orthonormality / determinant error of the input.
HeadPose rotmat_to_euler(const RotationMatrix& rotation,
                         GimbalPolicy policy = GimbalPolicy::kThrow,
                         double tolerance = 1e-6);

double degrees_from_radians(double radians);
double radians_from_degrees(double degrees);

}  // namespace headpose
