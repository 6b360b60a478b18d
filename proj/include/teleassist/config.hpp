#pragma once

#include "teleassist/dataset.hpp"
#include "teleassist/harness.hpp"
#include "teleassist/intent/trainer.hpp"
#include "teleassist/session.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>

namespace teleassist {

/// Bad configuration; `path` names the offending field, e.g. "admittance.K".
struct ConfigError : std::runtime_error {
    ConfigError(std::string p, const std::string& what)
        : std::runtime_error((p.empty() ? std::string("<root>") : p) + ": " + what), path(std::move(p)) {}
    std::string path;
};

struct IntentConfig {
    intent::NetworkConfig network;
    intent::TrainSpec train;
    DatasetSpec dataset;
    int deploy_count = 1200;   // samples behind the model used in the study
    std::string model_path;    // load instead of training when set
};

struct ServeConfig {
    int port = 8765;
    std::string bind = "127.0.0.1";
};

struct RunConfig {
    SessionConfig session;
    OperatorModel op;
    StudyConfig study;
    IntentConfig intent;
    ServeConfig serve;
};

namespace detail {

// Walks one JSON object, reading known keys and rejecting the rest.
class Section {
public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(sub(k), "unknown field");
    }

    std::string sub(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    template <class T>
    void get(const std::string& k, T& out) {
        seen_.insert(k);
        if (!j_.contains(k)) return;
        try {
            out = j_.at(k).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(sub(k), "wrong type");
        }
    }

    void vec3(const std::string& k, Eigen::Vector3d& out) {
        std::array<double, 3> a{out.x(), out.y(), out.z()};
        get(k, a);
        out = {a[0], a[1], a[2]};
    }

    void mat3(const std::string& k, Eigen::Matrix3d& out) {
        seen_.insert(k);
        if (!j_.contains(k)) return;
        const auto& v = j_.at(k);
        try {
            if (v.is_number()) {
                out = v.get<double>() * Eigen::Matrix3d::Identity();
            } else if (v.size() == 3 && v[0].is_number()) {
                out = Eigen::Vector3d(v[0].get<double>(), v[1].get<double>(), v[2].get<double>()).asDiagonal();
            } else {
                const auto rows = v.get<std::array<std::array<double, 3>, 3>>();
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c) out(r, c) = rows[r][c];
            }
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(sub(k), "expected a scalar, a diagonal or a 3x3 matrix");
        }
    }

    void section(const std::string& k, const std::function<void(Section&)>& fn) {
        seen_.insert(k);
        if (!j_.contains(k)) return;
        Section s(j_.at(k), sub(k));
        fn(s);
    }

    void require(bool ok, const std::string& k, const std::string& what) const {
        if (!ok) throw ConfigError(sub(k), what);
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    auto& s = c.session;
    detail::Section root(j, "");

    root.section("robot", [&](detail::Section& r) {
        r.get("d", s.robot.d);
        r.get("a", s.robot.a);
        r.get("alpha", s.robot.alpha);
        r.get("lower", s.robot.lower);
        r.get("upper", s.robot.upper);
        for (int i = 0; i < 6; ++i)
            r.require(s.robot.lower[i] < s.robot.upper[i], "lower", "joint limits must satisfy lower < upper");
    });
    root.section("teleop", [&](detail::Section& t) {
        t.get("k_m", s.teleop.k_m);
        t.require(s.teleop.k_m > 0, "k_m", "must be positive");
        t.mat3("hand_to_robot", s.teleop.bridge.linear_map);
        t.require((s.teleop.bridge.linear_map.transpose() * s.teleop.bridge.linear_map)
                      .isApprox(Eigen::Matrix3d::Identity(), 1e-9),
                  "hand_to_robot", "must be orthogonal");
    });
    root.section("admittance", [&](detail::Section& a) {
        a.mat3("M", s.admittance.M);
        a.mat3("C", s.admittance.C);
        a.mat3("K", s.admittance.K);
        a.get("epsilon", s.admittance.epsilon);
        a.get("e_max", s.admittance.e_max);
        a.get("max_substep", s.admittance.max_substep);
        a.get("k_i", s.apf_strength);
        // check each matrix against otherwise default parameters so the error names the culprit
        auto alone = [](auto&& set) {
            AdmittanceParams p;
            set(p);
            return p.valid();
        };
        a.require(alone([&](AdmittanceParams& p) { p.M = s.admittance.M; }), "M", "must be symmetric positive definite");
        a.require(alone([&](AdmittanceParams& p) { p.C = s.admittance.C; }), "C", "must be symmetric positive semidefinite");
        a.require(alone([&](AdmittanceParams& p) { p.K = s.admittance.K; }), "K", "must be symmetric positive semidefinite");
        a.require(s.admittance.epsilon > 0, "epsilon", "must be positive");
        a.require(s.admittance.e_max > 0, "e_max", "must be positive");
        a.require(s.admittance.max_substep > 0, "max_substep", "must be positive");
        a.require(s.apf_strength >= 0, "k_i", "must be non-negative");
    });
    root.section("scene", [&](detail::Section& sc) {
        auto& g = s.scene;
        std::array<double, 2> center{g.table_center.x(), g.table_center.y()}, size{g.table_size.x(), g.table_size.y()};
        sc.get("table_center", center);
        sc.get("table_size", size);
        g.table_center = {center[0], center[1]};
        g.table_size = {size[0], size[1]};
        sc.get("table_z", g.table_z);
        sc.get("cube_edge", g.cube_edge);
        sc.get("capture_radius", g.capture_radius);
        sc.get("z_tolerance", g.z_tolerance);
        sc.get("safe_height", g.safe_height);
        sc.get("max_tries", g.max_tries);
        sc.require(g.cube_edge > 0, "cube_edge", "must be positive");
        sc.require(g.table_size.minCoeff() > 0, "table_size", "must be positive");
        sc.require(g.capture_radius > 0, "capture_radius", "must be positive");
    });
    root.section("view", [&](detail::Section& v) {
        v.vec3("camera", s.view.camera);
        v.vec3("look_at", s.view.look_at);
        v.get("eye_baseline", s.view.eye_baseline);
        v.get("fov", s.view.fov);
        v.get("height", s.view.height);
        v.get("width", s.view.width);
        v.get("marker_px", s.view.marker_px);
        v.require(s.view.height > 0 && s.view.width > 0, "height", "image size must be positive");
        v.require((s.view.look_at - s.view.camera).norm() > 0, "look_at", "must differ from camera");
    });
    root.section("latency", [&](detail::Section& l) {
        l.get("loop_mean_ms", s.latency.loop_mean);
        l.get("loop_sd_ms", s.latency.loop_sd);
        l.get("intent_mean_ms", s.latency.intent_mean);
        l.get("intent_sd_ms", s.latency.intent_sd);
        l.get("seed", s.latency.seed);
        l.require(s.latency.valid(), "loop_mean_ms", "latencies must be non-negative");
    });
    root.section("session", [&](detail::Section& t) {
        t.get("blocks", s.blocks);
        t.get("targets_per_block", s.rules.targets);
        t.get("max_attempts", s.rules.max_attempts);
        t.get("tick_s", s.tick);
        t.get("trace_period_s", s.trace_period);
        t.get("frame_period_s", s.frame_period);
        t.get("window", s.window);
        t.get("plan_speed", s.plan_speed);
        t.get("gripper_time_s", s.gripper_time);
        t.get("attempt_timeout_s", s.attempt_timeout);
        t.require(s.blocks > 0, "blocks", "must be positive");
        t.require(s.rules.targets > 0 && s.rules.targets <= kColorCount, "targets_per_block", "must be 1..4");
        t.require(s.rules.max_attempts >= s.rules.targets, "max_attempts", "must be at least targets_per_block");
        t.require(s.tick > 0, "tick_s", "must be positive");
        t.require(s.window > 0, "window", "must be positive");
        t.require(s.plan_speed > 0, "plan_speed", "must be positive");
    });
    root.section("operator", [&](detail::Section& o) {
        auto& m = c.op;
        o.get("speed", m.speed);
        o.get("sigma_m", m.sigma_m);
        o.get("bias_mean", m.bias_mean);
        o.get("bias_sd", m.bias_sd);
        o.get("sigma_g_deg", m.sigma_g_deg);
        o.get("reaction_s", m.reaction);
        o.get("threshold", m.threshold);
        o.get("z_band", m.z_band);
        o.get("hover", m.hover);
        o.get("gain", m.gain);
        o.get("descend_radius", m.descend_radius);
        o.get("hand_radius", m.hand_radius);
        o.get("hand_return_speed", m.hand_return_speed);
        o.get("final_window", m.final_window);
        o.require(m.valid(), "speed", "operator parameters must be positive (noise terms non-negative)");
    });
    root.section("study", [&](detail::Section& st) {
        st.get("participants", c.study.participants);
        st.get("seed", c.study.seed);
        st.get("jitter", c.study.jitter);
        st.get("threads", c.study.threads);
        st.require(c.study.participants > 0, "participants", "must be positive");
        st.require(c.study.jitter >= 0 && c.study.jitter < 1, "jitter", "must be in [0, 1)");
        st.require(c.study.threads > 0, "threads", "must be positive");
    });
    root.section("intent", [&](detail::Section& in) {
        auto& ic = c.intent;
        in.section("network", [&](detail::Section& n) {
            n.get("image_c1", ic.network.image_c1);
            n.get("image_c2", ic.network.image_c2);
            n.get("pose_width", ic.network.pose_width);
            n.get("gaze_width", ic.network.gaze_width);
            n.get("object_hidden", ic.network.object_hidden);
            n.get("object_width", ic.network.object_width);
            n.get("fusion_width", ic.network.fusion_width);
            n.get("kernel", ic.network.kernel);
            n.get("coord_channels", ic.network.coord_channels);
            n.require(ic.network.kernel > 0, "kernel", "must be positive");
            n.require(ic.network.fusion_width > 0, "fusion_width", "must be positive");
        });
        in.section("train", [&](detail::Section& t) {
            t.get("batch", ic.train.batch);
            t.get("epochs", ic.train.epochs);
            t.get("lr", ic.train.lr);
            t.get("beta1", ic.train.beta1);
            t.get("beta2", ic.train.beta2);
            t.get("eps", ic.train.adam_eps);
            t.get("train_fraction", ic.train.train_fraction);
            t.get("seed", ic.train.seed);
            t.require(ic.train.batch > 0, "batch", "must be positive");
            t.require(ic.train.epochs > 0, "epochs", "must be positive");
            t.require(ic.train.lr > 0, "lr", "must be positive");
            t.require(ic.train.train_fraction > 0 && ic.train.train_fraction < 1, "train_fraction",
                      "must be in (0, 1)");
        });
        in.section("dataset", [&](detail::Section& d) {
            d.get("count", ic.dataset.count);
            d.get("table_sd", ic.dataset.table_sd);
            d.get("jitter", ic.dataset.jitter);
            d.get("blocks_per_session", ic.dataset.blocks_per_session);
            d.require(ic.dataset.count > 0, "count", "must be positive");
            d.require(ic.dataset.table_sd >= 0, "table_sd", "must be non-negative");
        });
        in.get("deploy_count", ic.deploy_count);
        in.get("model_path", ic.model_path);
        in.require(ic.deploy_count > 0, "deploy_count", "must be positive");
    });
    root.section("serve", [&](detail::Section& sv) {
        sv.get("port", c.serve.port);
        sv.get("bind", c.serve.bind);
        sv.require(c.serve.port >= 0 && c.serve.port < 65536, "port", "must be 0..65535");
    });

    // image size follows the camera
    c.intent.network.height = s.view.height;
    c.intent.network.width = s.view.width;
    c.intent.network.window = s.window;
    c.intent.network.objects = kColorCount;
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", std::string("parse error: ") + e.what());
    }
    return config_from_json(j);
}

/// The intent model used in the study: loaded from `intent.model_path`, or
/// trained on a fresh baseline dataset of `intent.deploy_count` samples.
inline intent::Model deploy_model(const RunConfig& rc) {
    if (!rc.intent.model_path.empty()) {
        std::ifstream in(rc.intent.model_path);
        if (!in) throw ConfigError("intent.model_path", "cannot open " + rc.intent.model_path);
        return intent::model_from_json(nlohmann::json::parse(in));
    }
    DatasetSpec spec = rc.intent.dataset;
    spec.count = rc.intent.deploy_count;
    const intent::Dataset ds = generate_dataset(rc.session, rc.op, spec, mix_seed({rc.study.seed, 0xDE91}));
    return intent::train(ds, rc.intent.train, rc.intent.network, intent::kAllModalities).model;
}

/// TELEASSIST_PORT and TELEASSIST_BIND override the serve section.
inline void apply_env(ServeConfig& s) {
    if (const char* p = std::getenv("TELEASSIST_PORT")) {
        char* end = nullptr;
        const long v = std::strtol(p, &end, 10);
        if (!*p || *end || v < 0 || v > 65535) throw ConfigError("serve.port", "bad TELEASSIST_PORT");
        s.port = static_cast<int>(v);
    }
    if (const char* b = std::getenv("TELEASSIST_BIND")) s.bind = b;
}

}  // namespace teleassist
