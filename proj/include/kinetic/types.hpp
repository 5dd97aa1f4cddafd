#pragma once

#include <Eigen/Dense>

namespace kinetic {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// A point of the phase space Omega x R^3.
struct PhasePoint {
  Vec3 x{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
};

}  // namespace kinetic
