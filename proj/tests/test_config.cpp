#include "teleassist/config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace teleassist;

namespace {

std::string error_path(const nlohmann::json& j) {
    try {
        config_from_json(j);
    } catch (const ConfigError& e) {
        return e.path;
    }
    return "<none>";
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
    const RunConfig c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.session.teleop.k_m, 0.3);
    EXPECT_EQ(c.session.admittance.M, Eigen::Matrix3d::Identity());
    EXPECT_EQ(c.session.admittance.C, 8 * Eigen::Matrix3d::Identity());
    EXPECT_EQ(c.session.admittance.K, 16 * Eigen::Matrix3d::Identity());
    EXPECT_EQ(c.session.apf_strength, 0.1);
    EXPECT_EQ(c.session.admittance.epsilon, 0.02);
    EXPECT_EQ(c.session.latency.loop_mean, 56.0);
    EXPECT_EQ(c.intent.train.batch, 8);
    EXPECT_EQ(c.intent.train.epochs, 100);
    EXPECT_EQ(c.intent.train.lr, 0.005);
    EXPECT_EQ(c.study.participants, 16);
    EXPECT_EQ(c.serve.port, 8765);
    EXPECT_EQ(c.intent.network.height, c.session.view.height);
}

TEST(Config, ShippedDefaultFileMatchesBuiltIns) {
    const auto path = std::filesystem::path(TELEASSIST_SOURCE_DIR) / "configs" / "default.json";
    const RunConfig a = load_config(path.string()), b = config_from_json(nlohmann::json::object());
    EXPECT_EQ(a.session.admittance.K, b.session.admittance.K);
    EXPECT_EQ(a.session.blocks, b.session.blocks);
    EXPECT_EQ(a.op.bias_mean, b.op.bias_mean);
    EXPECT_EQ(a.session.view.marker_px, b.session.view.marker_px);
    EXPECT_EQ(a.intent.network.coord_channels, b.intent.network.coord_channels);
    EXPECT_EQ(a.study.seed, b.study.seed);
}

TEST(Config, MatrixForms) {
    auto c = config_from_json({{"admittance", {{"M", 2.0}, {"C", {1, 2, 3}}, {"K", {{16, 0, 0}, {0, 16, 0}, {0, 0, 20}}}}}});
    EXPECT_EQ(c.session.admittance.M, 2 * Eigen::Matrix3d::Identity());
    EXPECT_EQ(c.session.admittance.C.diagonal(), Eigen::Vector3d(1, 2, 3));
    EXPECT_EQ(c.session.admittance.K(2, 2), 20.0);
}

TEST(Config, ErrorsNameTheField) {
    EXPECT_EQ(error_path({{"admittance", {{"K", -1.0}}}}), "admittance.K");
    EXPECT_EQ(error_path({{"admittance", {{"M", 0.0}}}}), "admittance.M");
    EXPECT_EQ(error_path({{"admittance", {{"stiffness", 1.0}}}}), "admittance.stiffness");
    EXPECT_EQ(error_path({{"teleop", {{"k_m", "fast"}}}}), "teleop.k_m");
    EXPECT_EQ(error_path({{"teleop", {{"hand_to_robot", 2.0}}}}), "teleop.hand_to_robot");
    EXPECT_EQ(error_path({{"intent", {{"train", {{"lr", 0.0}}}}}}), "intent.train.lr");
    EXPECT_EQ(error_path({{"bogus", 1}}), "bogus");
    EXPECT_EQ(error_path({{"session", 3}}), "session");
    EXPECT_EQ(error_path({{"serve", {{"port", 70000}}}}), "serve.port");
}

TEST(Config, LoadReportsMissingAndBrokenFiles) {
    EXPECT_THROW(load_config("/nonexistent/teleassist.json"), ConfigError);
    const auto path = std::filesystem::temp_directory_path() / "teleassist_cfg_test.json";
    std::ofstream(path) << "{ // comments are allowed\n \"study\": {\"participants\": 4}\n}";
    EXPECT_EQ(load_config(path.string()).study.participants, 4);
    std::ofstream(path) << "{ \"study\": ";
    EXPECT_THROW(load_config(path.string()), ConfigError);
    std::filesystem::remove(path);
}

TEST(Config, EnvironmentOverridesServe) {
    ServeConfig s;
    ::setenv("TELEASSIST_PORT", "9100", 1);
    ::setenv("TELEASSIST_BIND", "0.0.0.0", 1);
    apply_env(s);
    EXPECT_EQ(s.port, 9100);
    EXPECT_EQ(s.bind, "0.0.0.0");
    ::setenv("TELEASSIST_PORT", "http", 1);
    EXPECT_THROW(apply_env(s), ConfigError);
    ::unsetenv("TELEASSIST_PORT");
    ::unsetenv("TELEASSIST_BIND");
}
