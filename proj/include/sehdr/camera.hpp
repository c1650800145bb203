// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>

namespace sehdr {

// Pinhole camera. Camera space is x-right, y-down, z-forward; world-to-
// camera is p_cam = R p + t. Pixel (r, c) samples at (c + 0.5, r + 0.5).
struct Camera {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Camera: focal must be > 0");
        if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: bad image size");
        const Eigen::Matrix3d gram = rotation.transpose() * rotation;
        if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
            throw std::invalid_argument("Camera: rotation not orthonormal");
        }
    }

    Eigen::Vector3d world_to_cam(const Eigen::Vector3d& p) const {
        return rotation * p + translation;
    }

    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

inline Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& up, double fx, double fy, int width, int height) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d x = z.cross(up);
    const double n = x.norm();
    if (n < 1e-9) throw std::invalid_argument("look_at: view direction parallel to up");
    x /= n;
    const Eigen::Vector3d y = z.cross(x);
    Camera cam;
    cam.rotation.row(0) = x;
    cam.rotation.row(1) = y;
    cam.rotation.row(2) = z;
    cam.translation = -cam.rotation * eye;
    cam.fx = fx;
    cam.fy = fy;
    cam.width = width;
    cam.height = height;
    cam.cx = width * 0.5;
    cam.cy = height * 0.5;
    cam.validate();
    return cam;
}

}  // namespace sehdr
