#pragma once

#include "teleassist/snapshot.hpp"
#include "teleassist/teleop.hpp"
#include "teleassist/view.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

namespace teleassist {

/// Parameters of a synthetic participant.
struct OperatorModel {
    double speed = 0.25;        // end-effector reach speed the operator drives at, m/s
    double sigma_m = 0.003;     // per-attempt aim noise, m
    double bias_mean = 0.025;   // depth misjudgment along the view axis, m
    double bias_sd = 0.010;
    double sigma_g_deg = 3.0;   // gaze angular noise
    double reaction = 0.3;      // s before moving on a new prompt
    double threshold = 0.015;   // perceived horizontal misalignment at which grasp is pressed, m
    double z_band = 0.02;       // height tolerance for pressing, m
    double hover = 0.05;        // aim height above the perceived cube center, m
    double gain = 2.0;          // proportional pursuit gain, 1/s
    double descend_radius = 0.03;  // horizontal misalignment below which the operator starts descending, m
    double hand_radius = 0.3;   // comfortable hand reach around the rest point, m
    double hand_return_speed = 0.8;
    bool final_window = true;  // true: windows end at the press; false: they start at motion onset

    bool valid() const {
        return speed > 0 && sigma_m >= 0 && bias_sd >= 0 && sigma_g_deg >= 0 && reaction >= 0 && threshold > 0 &&
               z_band > 0 && gain > 0 && descend_radius > 0 && hand_radius > 0 && hand_return_speed > 0;
    }

    static OperatorModel perfect() {
        OperatorModel m;
        m.sigma_m = 0.0;
        m.bias_mean = 0.0;
        m.bias_sd = 0.0;
        m.sigma_g_deg = 0.0;
        return m;
    }

    /// Multiplicative jitter on the behavioral parameters, one draw per participant.
    OperatorModel jittered(double frac, std::uint64_t seed) const {
        if (frac <= 0.0) return *this;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(1.0 - frac, 1.0 + frac);
        OperatorModel m = *this;
        m.speed *= u(rng);
        m.bias_mean *= u(rng);
        m.sigma_g_deg *= u(rng);
        m.reaction *= u(rng);
        m.sigma_m *= u(rng);
        return m;
    }
};

/// What the local side emits for one tick.
struct OperatorOutput {
    Eigen::Vector3d hand_delta = Eigen::Vector3d::Zero();
    bool clutch = false;
    bool grasp = false;
    std::optional<std::array<double, 12>> gaze;
    // filled on the grasp tick
    std::vector<double> pose_window, gaze_window;
};

/// Closed-loop synthetic operator. It watches the end effector through the
/// shared camera, pursues a target it perceives with depth bias, walks the
/// clutch when the hand runs out of reach and presses grasp once aligned.
class OperatorAgent {
public:
    OperatorAgent(const OperatorModel& m, const ViewModel& view, const TeleopConfig& teleop, std::uint64_t seed,
                  int window = 3, double frame_dt = 0.1)
        : m_(m), view_(view), teleop_(teleop), seed_(seed), window_(window), frame_dt_(frame_dt) {}

    const Eigen::Vector3d& hand() const { return hand_; }
    const Eigen::Vector3d& aim() const { return aim_; }
    bool pressed() const { return phase_ == Phase::Pressed; }

    OperatorOutput step(const WorldSnapshot& s, double dt) {
        OperatorOutput out;
        if (!s.prompt || s.mode != protocol::Mode::Direct) {
            clutch_ = false;
            if (phase_ != Phase::Pressed) phase_ = Phase::Idle;
            out.clutch = false;
            return out;
        }
        const auto key = std::make_tuple(s.prompt->block, s.prompt->trial, s.prompt->attempt);
        if (!key_ || *key_ != key) begin_attempt(s, key);

        const Eigen::Vector3d target = object_of(s.objects, s.prompt->color).position;
        out.gaze = gaze_sample(view_, target, m_.sigma_g_deg, gaze_rng_);
        if (onset_ && (m_.final_window || static_cast<int>(pose_frames_.size()) < window_) &&
            s.t >= next_frame_ - 1e-9) {
            pose_frames_.push_back(s.ee);
            gaze_frames_.push_back(*out.gaze);
            next_frame_ += frame_dt_;
            if (m_.final_window && static_cast<int>(pose_frames_.size()) > window_ - 1) {
                // keep room for the frame taken at the press
                pose_frames_.erase(pose_frames_.begin());
                gaze_frames_.erase(gaze_frames_.begin());
            }
        }

        if (phase_ == Phase::Pressed) {
            out.clutch = clutch_ = false;
            return out;
        }
        if (phase_ == Phase::React) {
            if (s.t < react_until_ - 1e-9) return out;
            phase_ = Phase::Reach;
        }

        const Eigen::Vector3d err = aim_ - s.ee;
        if (phase_ == Phase::Reach && err.head<2>().norm() < m_.threshold && std::abs(err.z()) < m_.z_band) {
            press(s, *out.gaze, out);
            return out;
        }

        Eigen::Vector3d delta = Eigen::Vector3d::Zero();
        if (phase_ == Phase::Return) {
            const double r = hand_.norm();
            const double stepl = m_.hand_return_speed * dt;
            if (r <= stepl) {
                delta = -hand_;
                phase_ = Phase::Reach;
            } else {
                delta = -hand_ / r * stepl;
            }
        } else {
            // across first, then down once roughly above the target
            Eigen::Vector3d v = m_.gain * err;
            if (err.head<2>().norm() > m_.descend_radius) v.z() = 0.0;
            if (v.norm() > m_.speed) v *= m_.speed / v.norm();
            // the operator knows the hand-to-robot mapping and inverts it
            const Eigen::Vector3d vh = teleop_.bridge.linear_map.transpose() * v / teleop_.k_m;
            delta = vh * dt;
            if ((hand_ + delta).norm() > m_.hand_radius) {
                phase_ = Phase::Return;
                clutch_ = false;
                delta.setZero();
            } else {
                if (!clutch_) clutch_ = true;
                if (!onset_ && delta.norm() > 0.0) {
                    onset_ = true;
                    next_frame_ = s.t;
                }
            }
        }
        hand_ += delta;
        out.hand_delta = delta;
        out.clutch = clutch_;
        return out;
    }

private:
    enum class Phase { Idle, React, Reach, Return, Pressed };

    void begin_attempt(const WorldSnapshot& s, const std::tuple<int, int, int>& key) {
        const auto [block, trial, attempt] = key;
        const bool new_trial = !key_ || std::get<0>(*key_) != block || std::get<1>(*key_) != trial;
        key_ = key;
        const auto b = static_cast<std::uint64_t>(block), tr = static_cast<std::uint64_t>(trial),
                   at = static_cast<std::uint64_t>(attempt);
        if (new_trial) {
            std::mt19937_64 trng(mix_seed({seed_, b, tr, 0xB1A5}));
            bias_ = m_.bias_sd > 0 ? std::normal_distribution<double>(m_.bias_mean, m_.bias_sd)(trng) : m_.bias_mean;
        }
        std::mt19937_64 arng(mix_seed({seed_, b, tr, at, 0xA1}));
        gaze_rng_.seed(mix_seed({seed_, b, tr, at, 0x6A2E}));
        Eigen::Vector3d noise = Eigen::Vector3d::Zero();
        if (m_.sigma_m > 0) {
            std::normal_distribution<double> n(0.0, m_.sigma_m);
            for (int i = 0; i < 3; ++i) noise[i] = n(arng);
        }
        const Eigen::Vector3d target = object_of(s.objects, s.prompt->color).position;
        aim_ = target + bias_ * view_.view_axis(target) + noise;
        aim_.z() += m_.hover;
        phase_ = Phase::React;
        react_until_ = s.t + m_.reaction;
        clutch_ = false;
        onset_ = false;
        pose_frames_.clear();
        gaze_frames_.clear();
    }

    void press(const WorldSnapshot& s, const std::array<double, 12>& gaze_now, OperatorOutput& out) {
        if (m_.final_window) {
            // the last frame is the press itself; a short history repeats its oldest frame
            pose_frames_.push_back(s.ee);
            gaze_frames_.push_back(gaze_now);
            while (static_cast<int>(pose_frames_.size()) < window_) {
                pose_frames_.insert(pose_frames_.begin(), pose_frames_.front());
                gaze_frames_.insert(gaze_frames_.begin(), gaze_frames_.front());
            }
        }
        // short onset windows are padded with the pose and gaze at the moment of the press
        while (static_cast<int>(pose_frames_.size()) < window_) {
            pose_frames_.push_back(s.ee);
            gaze_frames_.push_back(gaze_now);
        }
        for (const auto& p : pose_frames_) out.pose_window.insert(out.pose_window.end(), {p.x(), p.y(), p.z()});
        for (const auto& g : gaze_frames_) out.gaze_window.insert(out.gaze_window.end(), g.begin(), g.end());
        out.grasp = true;
        out.clutch = clutch_ = false;
        phase_ = Phase::Pressed;
    }

    OperatorModel m_;
    ViewModel view_;
    TeleopConfig teleop_;
    std::uint64_t seed_;
    int window_;
    double frame_dt_;

    std::optional<std::tuple<int, int, int>> key_;
    Phase phase_ = Phase::Idle;
    double bias_ = 0.0;
    Eigen::Vector3d aim_ = Eigen::Vector3d::Zero();
    Eigen::Vector3d hand_ = Eigen::Vector3d::Zero();
    bool clutch_ = false;
    bool onset_ = false;
    double react_until_ = 0.0, next_frame_ = 0.0;
    std::mt19937_64 gaze_rng_;
    std::vector<Eigen::Vector3d> pose_frames_;
    std::vector<std::array<double, 12>> gaze_frames_;
};

}  // namespace teleassist
