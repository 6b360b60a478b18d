#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace teleassist {

enum class Frame { HumanWorld, VirtualBase, RobotBase };

inline bool left_handed(Frame f) { return f != Frame::RobotBase; }

inline const char* frame_name(Frame f) {
    switch (f) {
        case Frame::HumanWorld: return "H";
        case Frame::VirtualBase: return "V";
        case Frame::RobotBase: return "R";
    }
    return "?";
}

struct FrameMismatch : std::runtime_error {
    FrameMismatch(Frame a, Frame b)
        : std::runtime_error(std::string("frame mismatch: ") + frame_name(a) + " -> " + frame_name(b)) {}
};

/// Unit quaternion (w, a, b, c) tagged with the frame it is expressed in.
struct Rotation {
    Eigen::Vector4d q{1.0, 0.0, 0.0, 0.0};
    Frame frame = Frame::RobotBase;

    double w() const { return q[0]; }
    bool valid(double tol = 1e-9) const { return q.allFinite() && std::abs(q.norm() - 1.0) <= tol; }
};

struct Pose {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Rotation rotation;
    Frame frame = Frame::RobotBase;
};

/// q and -q describe the same rotation.
inline bool same_rotation(const Rotation& x, const Rotation& y, double tol = 1e-9) {
    if (x.frame != y.frame) return false;
    return (x.q - y.q).norm() <= tol || (x.q + y.q).norm() <= tol;
}

/// Handedness bridge between the left-handed VR frames and the robot base.
/// `matrix` acts on quaternions, `linear_map` on hand velocities.
struct HandTransform {
    Eigen::Matrix4d matrix = Eigen::Vector4d(1.0, 1.0, -1.0, -1.0).asDiagonal();
    Eigen::Matrix3d linear_map = Eigen::Vector3d(-1.0, 1.0, 1.0).asDiagonal();
};

inline Rotation convert_quaternion(const Rotation& r, Frame to, const HandTransform& bridge = {}) {
    if (r.frame == to) return r;
    if (left_handed(r.frame) == left_handed(to)) throw FrameMismatch(r.frame, to);
    Eigen::Vector4d q = bridge.matrix * r.q;
    return Rotation{q / q.norm(), to};
}

inline Eigen::Vector3d map_hand_velocity(const Eigen::Vector3d& v_h, const HandTransform& bridge = {}) {
    return bridge.linear_map * v_h;
}

inline Eigen::Vector4d quat_mul(const Eigen::Vector4d& p, const Eigen::Vector4d& q) {
    return {p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
            p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
            p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
            p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]};
}

/// e = (z angle, y angle, x angle); rotation = Rz * Ry * Rx. The algebra is the
/// same in every frame, the tag records which handedness the angles live in.
inline Rotation euler_zyx_to_quat(const Eigen::Vector3d& e, Frame frame) {
    const double hz = 0.5 * e[0], hy = 0.5 * e[1], hx = 0.5 * e[2];
    Eigen::Vector4d qz(std::cos(hz), 0.0, 0.0, std::sin(hz));
    Eigen::Vector4d qy(std::cos(hy), 0.0, std::sin(hy), 0.0);
    Eigen::Vector4d qx(std::cos(hx), std::sin(hx), 0.0, 0.0);
    Eigen::Vector4d q = quat_mul(quat_mul(qz, qy), qx);
    return Rotation{q / q.norm(), frame};
}

inline Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& q) {
    Eigen::Quaterniond eq(q[0], q[1], q[2], q[3]);
    return eq.normalized().toRotationMatrix();
}

inline Eigen::Vector4d matrix_to_quat(const Eigen::Matrix3d& m) {
    Eigen::Quaterniond eq(m);
    eq.normalize();
    return {eq.w(), eq.x(), eq.y(), eq.z()};
}

/// Inverse of euler_zyx_to_quat. Within `gimbal_tol` of |pitch| = pi/2 the roll
/// is pinned to zero and the remaining freedom goes into the z angle.
inline Eigen::Vector3d quat_to_euler_zyx(const Rotation& r, double gimbal_tol = 1e-6) {
    const Eigen::Matrix3d m = quat_to_matrix(r.q);
    const double s = std::clamp(-m(2, 0), -1.0, 1.0);
    const double pitch = std::asin(s);
    if (std::abs(std::abs(pitch) - std::numbers::pi / 2) <= gimbal_tol) {
        const double yaw = std::atan2(-m(0, 1), m(1, 1));
        return {yaw, std::copysign(std::numbers::pi / 2, s), 0.0};
    }
    return {std::atan2(m(1, 0), m(0, 0)), pitch, std::atan2(m(2, 1), m(2, 2))};
}

inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

}  // namespace teleassist
