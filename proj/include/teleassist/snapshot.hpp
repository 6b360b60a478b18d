#pragma once

#include "teleassist/kinematics.hpp"
#include "teleassist/protocol.hpp"
#include "teleassist/simworld.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace teleassist {

/// splitmix64 over a list of keys; used to derive paired random streams.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = 0x243F6A8885A308D3ULL;
    for (auto k : keys) {
        h ^= k + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
        std::uint64_t z = (h += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        h = z ^ (z >> 31);
    }
    return h;
}

struct Condition {
    bool va = false;
    bool mmipn = false;

    int index() const { return (va ? 1 : 0) + (mmipn ? 2 : 0); }
    static Condition from_index(int i) { return {(i & 1) != 0, (i & 2) != 0}; }
    std::string name() const {
        if (va && mmipn) return "both";
        if (va) return "va";
        if (mmipn) return "mmipn";
        return "none";
    }
    static std::optional<Condition> parse(const std::string& s) {
        for (int i = 0; i < 4; ++i)
            if (from_index(i).name() == s) return from_index(i);
        return std::nullopt;
    }
    bool operator==(const Condition&) const = default;
};

struct Prompt {
    int block = 0;
    int trial = 0;    // index into the grasp order
    int attempt = 0;  // attempts already used in this block
    Color color = Color::Red;
};

enum class Gripper { Open, Closed };

/// Immutable copy of the remote world handed to observers each tick.
struct WorldSnapshot {
    double t = 0.0;
    protocol::Mode mode = protocol::Mode::Direct;
    Eigen::Vector3d ee = Eigen::Vector3d::Zero();
    JointVector joints{};
    Gripper gripper = Gripper::Open;
    int holding = -1;
    std::vector<SceneObject> objects;
    double table_z = 0.0;
    std::optional<Prompt> prompt;
    Eigen::Vector3d va_deviation = Eigen::Vector3d::Zero();
    std::optional<Eigen::Vector3d> estimate;
    Condition condition;
};

inline nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
inline Eigen::Vector3d json_vec(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline nlohmann::json snapshot_to_json(const WorldSnapshot& s) {
    nlohmann::json j;
    j["t"] = s.t;
    j["mode"] = protocol::mode_name(s.mode);
    j["ee"] = vec_json(s.ee);
    j["joints"] = s.joints;
    j["gripper"] = s.gripper == Gripper::Open ? "open" : "closed";
    j["holding"] = s.holding;
    j["table_z"] = s.table_z;
    auto objs = nlohmann::json::array();
    for (const auto& o : s.objects)
        objs.push_back({{"id", o.id}, {"color", color_name(o.color)}, {"position", vec_json(o.position)}, {"edge", o.edge}});
    j["objects"] = objs;
    if (s.prompt)
        j["prompt"] = {{"block", s.prompt->block},
                       {"trial", s.prompt->trial},
                       {"attempt", s.prompt->attempt},
                       {"color", color_name(s.prompt->color)}};
    else
        j["prompt"] = nullptr;
    j["va_deviation"] = vec_json(s.va_deviation);
    j["estimate"] = s.estimate ? vec_json(*s.estimate) : nlohmann::json(nullptr);
    j["condition"] = {{"va", s.condition.va}, {"mmipn", s.condition.mmipn}};
    return j;
}

inline Color color_from_name(const std::string& n) {
    for (int i = 0; i < kColorCount; ++i)
        if (n == color_name(static_cast<Color>(i))) return static_cast<Color>(i);
    throw std::invalid_argument("unknown color " + n);
}

inline WorldSnapshot snapshot_from_json(const nlohmann::json& j) {
    WorldSnapshot s;
    s.t = j.at("t").get<double>();
    s.mode = j.at("mode").get<std::string>() == "direct" ? protocol::Mode::Direct : protocol::Mode::Supervised;
    s.ee = json_vec(j.at("ee"));
    s.joints = j.at("joints").get<JointVector>();
    s.gripper = j.at("gripper").get<std::string>() == "open" ? Gripper::Open : Gripper::Closed;
    s.holding = j.value("holding", -1);
    s.table_z = j.value("table_z", 0.0);
    for (const auto& o : j.at("objects"))
        s.objects.push_back({o.at("id").get<int>(), color_from_name(o.at("color").get<std::string>()),
                             json_vec(o.at("position")), o.value("edge", 0.05)});
    if (!j.at("prompt").is_null()) {
        const auto& p = j.at("prompt");
        s.prompt = Prompt{p.at("block").get<int>(), p.at("trial").get<int>(), p.at("attempt").get<int>(),
                          color_from_name(p.at("color").get<std::string>())};
    }
    s.va_deviation = json_vec(j.at("va_deviation"));
    if (j.contains("estimate") && !j.at("estimate").is_null()) s.estimate = json_vec(j.at("estimate"));
    s.condition = {j.at("condition").at("va").get<bool>(), j.at("condition").at("mmipn").get<bool>()};
    return s;
}

}  // namespace teleassist
