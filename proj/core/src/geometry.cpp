#include "headpose/geometry.hpp"

#include <cmath>
#include <string>

namespace headpose {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_geometry: return "invalid-geometry";
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::invalid_input: return "invalid-input";
    case Errc::out_of_range: return "out-of-range";
    case Errc::invalid_index: return "invalid-index";
    case Errc::invalid_rotation: return "invalid-rotation";
    case Errc::degenerate_decomposition: return "degenerate-decomposition";
    case Errc::invalid_batch: return "invalid-batch";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::parse_failure: return "parse-failure";
    case Errc::invalid_landmarks: return "invalid-landmarks";
    case Errc::load_failure: return "load-failure";
    case Errc::incompatible_checkpoint: return "incompatible-checkpoint";
    case Errc::diverged_training: return "diverged-training";
    case Errc::empty_evaluation: return "empty-evaluation";
    case Errc::io_failure: return "io-failure";
    case Errc::invalid_config: return "invalid-config";
  }
  return "unknown-error";
}

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double degrees_from_radians(double radians) { return radians * (180.0 / kPi); }
double radians_from_degrees(double degrees) { return degrees * (kPi / 180.0); }

bool HeadPose::is_finite() const {
  return std::isfinite(yaw) && std::isfinite(pitch) && std::isfinite(roll);
}

bool HeadPose::in_range(double limit_deg) const {
  return is_finite() && std::abs(yaw) <= limit_deg &&
         std::abs(pitch) <= limit_deg && std::abs(roll) <= limit_deg;
}

double RotationMatrix::determinant() const {
  return at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
         at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
         at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
}

double RotationMatrix::orthonormality_error() const {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += at(k, i) * at(k, j);
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

BoundingBox squarify_box(double raw_left, double raw_top, double raw_width,
                         double raw_height) {
  if (!(raw_width > 0.0) || !(raw_height > 0.0)) {
    raise(Errc::invalid_geometry,
          "squarify_box requires positive extents, got " +
              std::to_string(raw_width) + " x " + std::to_string(raw_height));
  }
  const double side = std::max(raw_width, raw_height);
  const double center_x = raw_left + raw_width / 2.0;
  const double center_y = raw_top + raw_height / 2.0;
  return BoundingBox{center_x - side / 2.0, center_y - side / 2.0, side};
}

CropRegion expand_margin(const BoundingBox& box, double margin_ratio) {
  if (!(box.side > 0.0)) {
    raise(Errc::invalid_geometry, "box side must be positive");
  }
  if (!(margin_ratio >= 0.0)) {
    raise(Errc::invalid_parameter,
          "margin ratio K must be >= 0, got " + std::to_string(margin_ratio));
  }
  const double margin = margin_ratio * box.side;
  return CropRegion{box.left - margin, box.top - margin,
                    box.left + box.side + margin, box.top + box.side + margin};
}

int angle_to_class(double angle_deg, const AngleBinning& binning) {
  if (!std::isfinite(angle_deg) || angle_deg < binning.min_deg ||
      angle_deg > binning.max_deg) {
    raise(Errc::out_of_range, "angle " + std::to_string(angle_deg) +
                                  " outside [" + std::to_string(binning.min_deg) +
                                  ", " + std::to_string(binning.max_deg) + "]");
  }
  // lround rounds half away from zero.
  const long index = std::lround(angle_deg) - static_cast<long>(binning.min_deg);
  return static_cast<int>(index);
}

double class_to_angle(int index, const AngleBinning& binning) {
  if (index < 0 || index >= binning.n_bins) {
    raise(Errc::invalid_index, "class index " + std::to_string(index) +
                                   " outside {0.." +
                                   std::to_string(binning.n_bins - 1) + "}");
  }
  return binning.min_deg + static_cast<double>(index);
}

RotationMatrix euler_to_rotmat(const HeadPose& pose) {
  if (!pose.is_finite()) {
    raise(Errc::invalid_parameter, "pose angles must be finite");
  }
  const double cy = std::cos(radians_from_degrees(pose.yaw));
  const double sy = std::sin(radians_from_degrees(pose.yaw));
  const double cp = std::cos(radians_from_degrees(pose.pitch));
  const double sp = std::sin(radians_from_degrees(pose.pitch));
  const double cr = std::cos(radians_from_degrees(pose.roll));
  const double sr = std::sin(radians_from_degrees(pose.roll));

  // R = R_y(yaw) * R_x(pitch) * R_z(roll), intrinsic.
  RotationMatrix r;
  r.at(0, 0) = cy * cr + sy * sp * sr;
  r.at(0, 1) = -cy * sr + sy * sp * cr;
  r.at(0, 2) = sy * cp;
  r.at(1, 0) = cp * sr;
  r.at(1, 1) = cp * cr;
  r.at(1, 2) = -sp;
  r.at(2, 0) = -sy * cr + cy * sp * sr;
  r.at(2, 1) = sy * sr + cy * sp * cr;
  r.at(2, 2) = cy * cp;
  return r;
}

HeadPose rotmat_to_euler(const RotationMatrix& rotation, GimbalPolicy policy,
                         double tolerance) {
  const double ortho_err = rotation.orthonormality_error();
  const double det_err = std::abs(rotation.determinant() - 1.0);
  if (ortho_err > tolerance || det_err > tolerance) {
    raise(Errc::invalid_rotation,
          "matrix is not a rotation (orthonormality error " +
              std::to_string(ortho_err) + ", |det - 1| " +
              std::to_string(det_err) + ", tolerance " +
              std::to_string(tolerance) + ")");
  }

  const double sp = -rotation.at(1, 2);
  // cos(pitch) recovered from the roll row; vanishes at gimbal lock.
  const double cp = std::hypot(rotation.at(1, 0), rotation.at(1, 1));
  constexpr double kLockPitchDeg = 89.9;
  if (cp < std::cos(radians_from_degrees(kLockPitchDeg))) {
    if (policy == GimbalPolicy::kThrow) {
      raise(Errc::degenerate_decomposition,
            "|pitch| >= " + std::to_string(kLockPitchDeg) +
                " deg: yaw and roll are coupled; canonical resolution pins "
                "roll := 0 (GimbalPolicy::kCanonicalRollZero)");
    }
    // roll := 0; the remaining in-plane rotation folds into yaw.
    const double yaw = std::atan2(-rotation.at(2, 0), rotation.at(0, 0));
    const double pitch = sp >= 0.0 ? 90.0 : -90.0;
    return HeadPose{degrees_from_radians(yaw), pitch, 0.0};
  }

  const double yaw = std::atan2(rotation.at(0, 2), rotation.at(2, 2));
  const double pitch = std::asin(std::clamp(sp, -1.0, 1.0));
  const double roll = std::atan2(rotation.at(1, 0), rotation.at(1, 1));
  return HeadPose{degrees_from_radians(yaw), degrees_from_radians(pitch),
                  degrees_from_radians(roll)};
}

}  // namespace headpose
