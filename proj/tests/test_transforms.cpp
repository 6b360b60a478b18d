#include "teleassist/transforms.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace teleassist;

TEST(Quaternion, BridgeFlipsLastTwoComponents) {
    const Rotation v{Eigen::Vector4d(0.5, 0.5, 0.5, 0.5), Frame::VirtualBase};
    const Rotation r = convert_quaternion(v, Frame::RobotBase);
    EXPECT_EQ(r.frame, Frame::RobotBase);
    EXPECT_NEAR((r.q - Eigen::Vector4d(0.5, 0.5, -0.5, -0.5)).norm(), 0.0, 1e-15);
}

TEST(Quaternion, ConversionIsAnInvolution) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n;
    for (int i = 0; i < 1000; ++i) {
        Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
        const Rotation h{q.normalized(), Frame::HumanWorld};
        const Rotation back = convert_quaternion(convert_quaternion(h, Frame::RobotBase), Frame::HumanWorld);
        EXPECT_LE((back.q - h.q).norm(), 1e-12);
        EXPECT_TRUE(back.valid());
    }
}

TEST(Quaternion, SameHandednessIsRejected) {
    const Rotation h{Eigen::Vector4d(1, 0, 0, 0), Frame::HumanWorld};
    EXPECT_THROW(convert_quaternion(h, Frame::VirtualBase), FrameMismatch);
    EXPECT_EQ(convert_quaternion(h, Frame::HumanWorld).q, h.q);
}

TEST(HandVelocity, MirrorsX) {
    EXPECT_EQ(map_hand_velocity({1, 2, 3}), Eigen::Vector3d(-1, 2, 3));
}

TEST(Euler, RoundTripAwayFromGimbal) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> yaw(-3.1, 3.1), pitch(-1.5, 1.5), roll(-3.1, 3.1);
    for (int i = 0; i < 10000; ++i) {
        const Eigen::Vector3d e(yaw(rng), pitch(rng), roll(rng));
        const Eigen::Vector3d back = quat_to_euler_zyx(euler_zyx_to_quat(e, Frame::RobotBase));
        for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(wrap_angle(back[k] - e[k])), 1e-9) << i;
    }
}

TEST(Euler, GimbalPinsRollAndKeepsRotation) {
    for (double s : {-1.0, 1.0}) {
        const Eigen::Vector3d e(0.7, s * std::numbers::pi / 2, 0.4);
        const Rotation r = euler_zyx_to_quat(e, Frame::RobotBase);
        const Eigen::Vector3d back = quat_to_euler_zyx(r);
        EXPECT_EQ(back[2], 0.0);
        EXPECT_TRUE(same_rotation(euler_zyx_to_quat(back, Frame::RobotBase), r, 1e-9));
    }
}

TEST(Euler, MatrixAgreesWithEigen) {
    const Eigen::Vector3d e(0.3, -0.2, 1.1);
    const Eigen::Matrix3d ref = (Eigen::AngleAxisd(e[0], Eigen::Vector3d::UnitZ()) *
                                 Eigen::AngleAxisd(e[1], Eigen::Vector3d::UnitY()) *
                                 Eigen::AngleAxisd(e[2], Eigen::Vector3d::UnitX()))
                                    .toRotationMatrix();
    EXPECT_LE((quat_to_matrix(euler_zyx_to_quat(e, Frame::RobotBase).q) - ref).norm(), 1e-12);
}
