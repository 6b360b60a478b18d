#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace teleassist {

enum class Color { Red = 0, Green = 1, Blue = 2, Yellow = 3 };
constexpr int kColorCount = 4;

inline const char* color_name(Color c) {
    switch (c) {
        case Color::Red: return "red";
        case Color::Green: return "green";
        case Color::Blue: return "blue";
        case Color::Yellow: return "yellow";
    }
    return "?";
}

inline Eigen::Vector3f color_rgb(Color c) {
    switch (c) {
        case Color::Red: return {1.0f, 0.0f, 0.0f};
        case Color::Green: return {0.0f, 0.8f, 0.0f};
        case Color::Blue: return {0.0f, 0.0f, 1.0f};
        case Color::Yellow: return {1.0f, 0.9f, 0.0f};
    }
    return {0, 0, 0};
}

struct PlacementFailure : std::runtime_error {
    PlacementFailure() : std::runtime_error("could not place cubes in table region") {}
};

/// Table, cubes and grasp geometry. Positions are in the robot base frame.
struct SceneConfig {
    Eigen::Vector2d table_center{0.45, 0.0};
    Eigen::Vector2d table_size{0.4, 0.6};  // x extent, y extent
    double table_z = 0.0;
    double cube_edge = 0.05;
    double capture_radius = 0.03;
    double z_tolerance = 0.02;
    double safe_height = 0.15;      // above the table
    double workspace_margin = 0.1;  // estimates beyond the table by more than this are rejected
    int max_tries = 1000;

    double grasp_z() const { return table_z + 0.5 * cube_edge; }
    double safe_z() const { return table_z + safe_height; }
    double min_separation() const { return 2.0 * cube_edge; }
};

struct SceneObject {
    int id = 0;
    Color color = Color::Red;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double edge = 0.05;
};

struct Block {
    std::vector<SceneObject> objects;
    std::array<Color, kColorCount> order{};  // grasp order
};

inline const SceneObject& object_of(const std::vector<SceneObject>& objs, Color c) {
    for (const auto& o : objs)
        if (o.color == c) return o;
    throw std::out_of_range("no object with that color");
}

/// Rejection sampling of four cube centers inside the table region, then a
/// random color order.
inline Block spawn_block(const SceneConfig& cfg, std::uint64_t seed) {
    const double hx = 0.5 * cfg.table_size.x() - 0.5 * cfg.cube_edge;
    const double hy = 0.5 * cfg.table_size.y() - 0.5 * cfg.cube_edge;
    if (hx < 0.0 || hy < 0.0) throw PlacementFailure();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(cfg.table_center.x() - hx, cfg.table_center.x() + hx);
    std::uniform_real_distribution<double> uy(cfg.table_center.y() - hy, cfg.table_center.y() + hy);
    Block b;
    int tries = 0;
    while (b.objects.size() < kColorCount) {
        if (tries++ >= cfg.max_tries) throw PlacementFailure();
        const Eigen::Vector3d p(ux(rng), uy(rng), cfg.grasp_z());
        bool ok = true;
        for (const auto& o : b.objects)
            if ((o.position - p).head<2>().norm() < cfg.min_separation()) ok = false;
        if (!ok) continue;
        const int id = static_cast<int>(b.objects.size());
        b.objects.push_back({id, static_cast<Color>(id), p, cfg.cube_edge});
    }
    std::array<int, kColorCount> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < kColorCount; ++i) b.order[i] = static_cast<Color>(perm[i]);
    return b;
}

/// Nearest cube (horizontally) within the capture radius and z tolerance.
/// Ties go to the lower id so the list order never matters.
inline std::optional<int> adjudicate(const Eigen::Vector3d& point, const std::vector<SceneObject>& objs,
                                     const SceneConfig& cfg) {
    std::optional<int> best;
    double best_d = 0.0;
    for (const auto& o : objs) {
        const double d = (point - o.position).head<2>().norm();
        if (d > cfg.capture_radius || std::abs(point.z() - o.position.z()) > cfg.z_tolerance) continue;
        if (!best || d < best_d || (d == best_d && o.id < *best)) {
            best = o.id;
            best_d = d;
        }
    }
    return best;
}

// --- supervised actions -------------------------------------------------------------

struct Action {
    enum Kind { Move, Wait, Close, Open };
    Kind kind = Move;
    Eigen::Vector3d target = Eigen::Vector3d::Zero();
    double duration = 0.0;  // Wait, Close, Open
};

inline const char* action_name(Action::Kind k) {
    switch (k) {
        case Action::Move: return "move";
        case Action::Wait: return "wait";
        case Action::Close: return "close";
        case Action::Open: return "open";
    }
    return "?";
}

struct PlanResult {
    std::vector<Action> actions;
    bool fell_back = false;
    std::string warning;
};

inline bool estimate_in_workspace(const Eigen::Vector3d& p, const SceneConfig& cfg) {
    if (!p.allFinite()) return false;
    const Eigen::Vector2d d = (p.head<2>() - cfg.table_center).cwiseAbs();
    const Eigen::Vector2d lim = 0.5 * cfg.table_size + Eigen::Vector2d::Constant(cfg.workspace_margin);
    return d.x() <= lim.x() && d.y() <= lim.y() && p.z() >= cfg.table_z - cfg.workspace_margin &&
           p.z() <= cfg.safe_z();
}

/// Without an estimate: straight down at the current (x, y). With one: up to
/// safe height, across above the estimate, down onto it. Both end in a close.
inline PlanResult plan_grasp(const Eigen::Vector3d& ee, const std::optional<Eigen::Vector3d>& estimate,
                             const SceneConfig& cfg, double close_time = 0.3) {
    PlanResult r;
    if (estimate && !estimate_in_workspace(*estimate, cfg)) {
        r.fell_back = true;
        r.warning = "estimate outside workspace, descending vertically";
    }
    if (estimate && !r.fell_back) {
        const Eigen::Vector3d& e = *estimate;
        const double z = std::max(cfg.safe_z(), ee.z());
        r.actions.push_back({Action::Move, {ee.x(), ee.y(), z}, 0.0});
        r.actions.push_back({Action::Move, {e.x(), e.y(), z}, 0.0});
        r.actions.push_back({Action::Move, e, 0.0});
    } else {
        r.actions.push_back({Action::Move, {ee.x(), ee.y(), cfg.grasp_z()}, 0.0});
    }
    r.actions.push_back({Action::Close, r.actions.back().target, close_time});
    return r;
}

// --- block bookkeeping --------------------------------------------------------------

struct BlockRules {
    int targets = kColorCount;
    int max_attempts = 6;
};

/// Tracks one block: current prompt, attempts used, successes so far.
class BlockState {
public:
    enum class Status { Active, Complete, Incomplete };

    BlockState() = default;
    BlockState(const std::array<Color, kColorCount>& order, BlockRules rules = {}) : order_(order), rules_(rules) {}

    Status status() const { return status_; }
    bool active() const { return status_ == Status::Active; }
    int trial() const { return successes_; }  // index of the current target
    int attempts() const { return attempts_; }
    int successes() const { return successes_; }
    Color prompt() const { return order_[static_cast<std::size_t>(successes_)]; }
    const std::vector<bool>& outcomes() const { return outcomes_; }

    /// Records one attempt. Success moves to the next color, failure re-prompts
    /// the same one; the block stops at all targets or at the attempt cap.
    Status advance(bool success) {
        if (!active()) throw std::logic_error("block already finished");
        ++attempts_;
        outcomes_.push_back(success);
        if (success) ++successes_;
        if (successes_ == rules_.targets)
            status_ = Status::Complete;
        else if (attempts_ >= rules_.max_attempts)
            status_ = Status::Incomplete;
        return status_;
    }

private:
    std::array<Color, kColorCount> order_{};
    BlockRules rules_;
    int attempts_ = 0, successes_ = 0;
    std::vector<bool> outcomes_;
    Status status_ = Status::Active;
};

}  // namespace teleassist
