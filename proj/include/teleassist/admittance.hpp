#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace teleassist {

struct NonFiniteState : std::runtime_error {
    NonFiniteState() : std::runtime_error("non-finite admittance state") {}
};

struct AdmittanceParams {
    Eigen::Matrix3d M = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d C = 8.0 * Eigen::Matrix3d::Identity();
    Eigen::Matrix3d K = 16.0 * Eigen::Matrix3d::Identity();
    double epsilon = 0.02;  // force regularization radius, m
    double e_max = 0.06;    // deviation clamp, m
    double max_substep = 1e-3;

    bool valid() const {
        Eigen::LLT<Eigen::Matrix3d> llt(M);
        if (!M.isApprox(M.transpose()) || llt.info() != Eigen::Success) return false;
        auto psd = [](const Eigen::Matrix3d& X) {
            if (!X.isApprox(X.transpose(), 1e-12) && !X.isZero()) return false;
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(X);
            return es.eigenvalues().minCoeff() >= -1e-12;
        };
        return psd(C) && psd(K) && epsilon > 0.0 && e_max > 0.0 && max_substep > 0.0;
    }
};

struct ApfSource {
    Eigen::Vector3d position;
    double strength = 0.1;
};

/// Attractive field: each source pulls with magnitude k/d along the line to it,
/// with d floored at epsilon.
inline Eigen::Vector3d apf_force(const Eigen::Vector3d& p, const std::vector<ApfSource>& sources, double epsilon) {
    Eigen::Vector3d f = Eigen::Vector3d::Zero();
    for (const auto& s : sources) {
        const Eigen::Vector3d d = s.position - p;
        const double r = std::max(d.norm(), epsilon);
        f += s.strength * d / (r * r);
    }
    return f;
}

struct AdmittanceState {
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    Eigen::Vector3d e_dot = Eigen::Vector3d::Zero();
    Eigen::Vector3d x_d = Eigen::Vector3d::Zero();

    Eigen::Vector3d x_r() const { return x_d + e; }
    double energy(const AdmittanceParams& p) const {
        return 0.5 * e_dot.dot(p.M * e_dot) + 0.5 * e.dot(p.K * e);
    }
};

/// Advances M e'' + C e' + K e = F by dt using velocity-first (semi-implicit)
/// Euler sub-steps no longer than max_substep, then clamps |e| to e_max.
inline Eigen::Vector3d admittance_step(AdmittanceState& s, const AdmittanceParams& p, const Eigen::Vector3d& force,
                                       const Eigen::Vector3d& x_d_next, double dt) {
    if (!(dt > 0.0 && dt <= 0.1)) throw std::invalid_argument("dt outside (0, 0.1]");
    if (!force.allFinite() || !x_d_next.allFinite() || !s.e.allFinite() || !s.e_dot.allFinite())
        throw NonFiniteState();
    const Eigen::Matrix3d m_inv = p.M.inverse();
    const int n = std::max(1, static_cast<int>(std::ceil(dt / p.max_substep - 1e-9)));
    const double h = dt / n;
    for (int i = 0; i < n; ++i) {
        s.e_dot += h * (m_inv * (force - p.C * s.e_dot - p.K * s.e));
        s.e += h * s.e_dot;
    }
    const double norm = s.e.norm();
    if (norm > p.e_max) {
        const Eigen::Vector3d u = s.e / norm;
        s.e = u * p.e_max;
        const double out = s.e_dot.dot(u);
        if (out > 0.0) s.e_dot -= out * u;
    }
    s.x_d = x_d_next;
    return s.x_r();
}

}  // namespace teleassist
