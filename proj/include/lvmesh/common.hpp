#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace lvmesh {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// All recoverable failures in the library are reported through this type.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg) {
    if (!cond) throw Error(msg);
}

} // namespace lvmesh
