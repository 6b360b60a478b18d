#pragma once

#include "teleassist/transforms.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace teleassist {

struct AlreadyEngaged : std::logic_error {
    AlreadyEngaged() : std::logic_error("clutch already engaged") {}
};
struct NotEngaged : std::logic_error {
    NotEngaged() : std::logic_error("clutch not engaged") {}
};

struct TeleopConfig {
    double k_m = 0.3;
    HandTransform bridge;
};

/// Clutch-gated incremental mapping: while engaged, the robot command moves by
/// k_m * T * (hand velocity) * dt each step; released, it holds still.
class Clutch {
public:
    bool engaged() const { return engaged_; }
    double t0() const { return t0_; }
    double ts() const { return ts_; }
    const Eigen::Vector3d& anchor_hand() const { return anchor_hand_; }
    const Eigen::Vector3d& anchor_robot() const { return anchor_robot_; }

    void engage(const Eigen::Vector3d& hand, const Eigen::Vector3d& robot, double t) {
        if (engaged_) throw AlreadyEngaged();
        engaged_ = true;
        t0_ = ts_ = t;
        anchor_hand_ = hand;
        anchor_robot_ = robot;
    }

    void disengage(double t) {
        if (!engaged_) throw NotEngaged();
        engaged_ = false;
        ts_ = t;
    }

    /// Left-rectangle step of the clutch integral.
    Eigen::Vector3d step(const TeleopConfig& cfg, const Eigen::Vector3d& hand_velocity, double dt) {
        if (!engaged_) return Eigen::Vector3d::Zero();
        if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
        ts_ += dt;
        return cfg.k_m * map_hand_velocity(hand_velocity, cfg.bridge) * dt;
    }

private:
    bool engaged_ = false;
    double t0_ = 0.0, ts_ = 0.0;
    Eigen::Vector3d anchor_hand_ = Eigen::Vector3d::Zero();
    Eigen::Vector3d anchor_robot_ = Eigen::Vector3d::Zero();
};

}  // namespace teleassist
