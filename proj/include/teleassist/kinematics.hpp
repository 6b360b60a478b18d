#pragma once

#include "teleassist/transforms.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace teleassist {

using JointVector = std::array<double, 6>;

struct Unreachable : std::runtime_error {
    Unreachable() : std::runtime_error("target unreachable") {}
};

struct Singular : std::runtime_error {
    enum class Kind { Shoulder, Wrist };
    Kind kind;
    explicit Singular(Kind k)
        : std::runtime_error(k == Kind::Shoulder ? "shoulder singularity" : "wrist singularity"), kind(k) {}
};

struct EmptySet : std::runtime_error {
    EmptySet() : std::runtime_error("empty solution set") {}
};

/// Standard DH parameters of a six-joint arm with three parallel middle axes.
/// Defaults are the UR5e values.
struct KinematicModel {
    std::array<double, 6> d{0.1625, 0.0, 0.0, 0.1333, 0.0997, 0.0996};
    std::array<double, 6> a{0.0, -0.425, -0.3922, 0.0, 0.0, 0.0};
    std::array<double, 6> alpha{std::numbers::pi / 2, 0.0, 0.0, std::numbers::pi / 2, -std::numbers::pi / 2, 0.0};
    Eigen::Matrix4d base = Eigen::Matrix4d::Identity();
    std::array<double, 6> lower{-std::numbers::pi, -std::numbers::pi, -std::numbers::pi,
                                -std::numbers::pi, -std::numbers::pi, -std::numbers::pi};
    std::array<double, 6> upper{std::numbers::pi, std::numbers::pi, std::numbers::pi,
                                std::numbers::pi, std::numbers::pi, std::numbers::pi};
    double singular_margin = 1e-6;

    double reach() const {
        double r = 0.0;
        for (int i = 0; i < 6; ++i) r += std::abs(a[i]) + std::abs(d[i]);
        return r;
    }
};

inline Eigen::Matrix4d dh_link(double theta, double d, double a, double alpha) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    Eigen::Matrix4d t;
    t << ct, -st * ca, st * sa, a * ct,
         st, ct * ca, -ct * sa, a * st,
         0.0, sa, ca, d,
         0.0, 0.0, 0.0, 1.0;
    return t;
}

inline Eigen::Matrix4d forward(const KinematicModel& m, const JointVector& q) {
    Eigen::Matrix4d t = m.base;
    for (int i = 0; i < 6; ++i) t = t * dh_link(q[i], m.d[i], m.a[i], m.alpha[i]);
    return t;
}

/// Rigid inverse without a general 4x4 inversion.
inline Eigen::Matrix4d rigid_inverse(const Eigen::Matrix4d& t) {
    Eigen::Matrix4d r = Eigen::Matrix4d::Identity();
    r.topLeftCorner<3, 3>() = t.topLeftCorner<3, 3>().transpose();
    r.topRightCorner<3, 1>() = -r.topLeftCorner<3, 3>() * t.topRightCorner<3, 1>();
    return r;
}

inline double rotation_error(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const Eigen::Matrix3d d = a.transpose() * b;
    const double c = std::clamp(0.5 * (d.trace() - 1.0), -1.0, 1.0);
    // acos loses precision near zero; use the skew part there
    const Eigen::Vector3d s(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
    return std::atan2(0.5 * s.norm(), c);
}

inline bool within_limits(const KinematicModel& m, const JointVector& q) {
    for (int i = 0; i < 6; ++i)
        if (q[i] < m.lower[i] - 1e-12 || q[i] > m.upper[i] + 1e-12) return false;
    return true;
}

/// Closed-form solutions (up to 8): two shoulder, two wrist, two elbow branches.
/// Throws Unreachable when no branch closes, Singular when the target sits within
/// the model's margin of a shoulder or wrist singularity.
inline std::vector<JointVector> inverse(const KinematicModel& m, const Eigen::Matrix4d& target) {
    if (!target.allFinite()) throw Unreachable();
    const Eigen::Matrix4d t = rigid_inverse(m.base) * target;
    if (t.topRightCorner<3, 1>().norm() > m.reach()) throw Unreachable();

    const Eigen::Vector3d p = t.topRightCorner<3, 1>();
    const Eigen::Vector3d x6 = t.block<3, 1>(0, 0), y6 = t.block<3, 1>(0, 1), z6 = t.block<3, 1>(0, 2);
    const double d1 = m.d[0], d4 = m.d[3], d5 = m.d[4], d6 = m.d[5];
    const double a2 = m.a[1], a3 = m.a[2];
    const double eps = m.singular_margin;

    const Eigen::Vector3d p5 = p - d6 * z6;
    const double r = std::hypot(p5.x(), p5.y());
    if (r < d4 - eps) throw Unreachable();
    if (std::abs(r - d4) <= eps) throw Singular(Singular::Kind::Shoulder);
    const double psi = std::atan2(p5.y(), p5.x());
    const double phi = std::asin(d4 / r);
    const std::array<double, 2> th1s{psi + phi, psi + std::numbers::pi - phi};

    std::vector<JointVector> out;
    for (double th1 : th1s) {
        const double s1 = std::sin(th1), c1 = std::cos(th1);
        const Eigen::Vector3d z1(s1, -c1, 0.0);
        const double c5 = (p.dot(z1) - d4) / d6;
        if (std::abs(c5) > 1.0 + 1e-12) continue;
        const double a5 = std::acos(std::clamp(c5, -1.0, 1.0));
        for (double th5 : {a5, -a5}) {
            const double s5 = std::sin(th5);
            if (std::abs(s5) <= eps) throw Singular(Singular::Kind::Wrist);
            const double th6 = std::atan2(-z1.dot(y6) / s5, z1.dot(x6) / s5);
            const Eigen::Matrix4d t14 = rigid_inverse(dh_link(th1, d1, m.a[0], m.alpha[0])) * t *
                                        rigid_inverse(dh_link(th5, d5, m.a[4], m.alpha[4]) *
                                                      dh_link(th6, d6, m.a[5], m.alpha[5]));
            const double px = t14(0, 3), py = t14(1, 3);
            const double c3 = (px * px + py * py - a2 * a2 - a3 * a3) / (2.0 * a2 * a3);
            if (std::abs(c3) > 1.0 + 1e-12) continue;
            const double a3ng = std::acos(std::clamp(c3, -1.0, 1.0));
            for (double th3 : {a3ng, -a3ng}) {
                const double th2 = std::atan2(py, px) - std::atan2(a3 * std::sin(th3), a2 + a3 * std::cos(th3));
                const double th234 = std::atan2(t14(1, 0), t14(0, 0));
                const double th4 = th234 - th2 - th3;
                JointVector q{th1, th2, th3, th4, th5, th6};
                for (double& v : q) v = wrap_angle(v);
                if (!within_limits(m, q)) continue;
                bool dup = false;
                for (const auto& o : out) {
                    double dist = 0.0;
                    for (int i = 0; i < 6; ++i) dist = std::max(dist, std::abs(wrap_angle(o[i] - q[i])));
                    if (dist <= 1e-9) { dup = true; break; }
                }
                if (!dup) out.push_back(q);
            }
        }
    }
    if (out.empty()) throw Unreachable();
    return out;
}

inline double joint_distance2(const JointVector& a, const JointVector& b) {
    double s = 0.0;
    for (int i = 0; i < 6; ++i) {
        const double d = wrap_angle(a[i] - b[i]);
        s += d * d;
    }
    return s;
}

/// Nearest solution in wrapped joint space; ties go to the lexicographically
/// smallest angle vector so the result does not depend on input order.
inline JointVector select_shortest(const std::vector<JointVector>& sols, const JointVector& current) {
    if (sols.empty()) throw EmptySet();
    const JointVector* best = &sols.front();
    double best_d = joint_distance2(*best, current);
    for (const auto& s : sols) {
        const double d = joint_distance2(s, current);
        if (d < best_d || (d == best_d && s < *best)) {
            best = &s;
            best_d = d;
        }
    }
    return *best;
}

/// Tool pointing straight down (tool z along -z of the base).
inline Eigen::Matrix3d top_down_rotation() {
    Eigen::Matrix3d r;
    r << 1.0, 0.0, 0.0,
         0.0, -1.0, 0.0,
         0.0, 0.0, -1.0;
    return r;
}

inline Eigen::Matrix4d make_transform(const Eigen::Matrix3d& r, const Eigen::Vector3d& p) {
    Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
    t.topLeftCorner<3, 3>() = r;
    t.topRightCorner<3, 1>() = p;
    return t;
}

}  // namespace teleassist
