#pragma once

#include "teleassist/admittance.hpp"
#include "teleassist/intent/sample.hpp"
#include "teleassist/intent/trainer.hpp"
#include "teleassist/kinematics.hpp"
#include "teleassist/operator_model.hpp"
#include "teleassist/protocol.hpp"
#include "teleassist/simworld.hpp"
#include "teleassist/snapshot.hpp"
#include "teleassist/teleop.hpp"
#include "teleassist/view.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace teleassist {

/// Everything the engine and the synthetic local side need for one session.
struct SessionConfig {
    SceneConfig scene;
    ViewModel view;
    TeleopConfig teleop;
    AdmittanceParams admittance;
    double apf_strength = 0.1;  // per-object k_i
    protocol::LatencyProfile latency;
    KinematicModel robot;
    BlockRules rules;
    int blocks = 10;
    double tick = 0.02;           // s
    double trace_period = 0.1;    // hand trace sampling, s
    double frame_period = 0.1;    // pose/gaze window sampling, s
    int window = 3;
    double plan_speed = 0.2;      // supervised Cartesian speed, m/s
    double gripper_time = 0.3;    // s per close or open
    double home_height = 0.25;    // above the table
    double attempt_timeout = 30.0;
    double workspace_slack = 0.15;  // commanded positions are kept this close to the table region
};

struct AttemptRecord {
    int block = 0, trial = 0, attempt = 0;
    Color target = Color::Red;
    double t_start = 0.0, t_request = -1.0, t_end = 0.0;
    bool success = false;
    bool timeout = false;
    int grasped = -1;
    Eigen::Vector3d grasp_point = Eigen::Vector3d::Zero();
    std::optional<Eigen::Vector3d> estimate;
    bool fell_back = false;
    double intent_latency_ms = 0.0;
    std::vector<std::array<double, 4>> trace;  // t, hand x, y, z at the trace rate, direct mode only

    double grasp_time() const { return t_end - t_start; }
    double path_length() const {
        double d = 0.0;
        for (std::size_t i = 1; i < trace.size(); ++i)
            d += std::sqrt(std::pow(trace[i][1] - trace[i - 1][1], 2) + std::pow(trace[i][2] - trace[i - 1][2], 2) +
                           std::pow(trace[i][3] - trace[i - 1][3], 2));
        return d;
    }
    double trace_duration() const { return trace.size() < 2 ? 0.0 : trace.back()[0] - trace.front()[0]; }
};

struct BlockRecord {
    int block = 0;
    double t_start = 0.0, t_end = 0.0;
    int attempts = 0, successes = 0;
    bool complete = false;
    std::array<Color, kColorCount> order{};
};

/// Remote side: world, robot, clutch, admittance, planner and the mode
/// machine. It only sees decoded messages, so the transport is interchangeable.
class Engine {
public:
    Engine(const SessionConfig& cfg, Condition cond, const intent::Model* model, std::uint64_t seed)
        : cfg_(cfg), cond_(cond), model_(model), seed_(seed) {}

    void set_condition(Condition c) { cond_ = c; }
    const Condition& condition() const { return cond_; }
    const std::vector<std::string>& log() const { return log_; }
    protocol::Mode mode() const { return modes_.mode(); }
    const SceneConfig& scene() const { return scene_; }
    bool block_running() const { return block_active_; }
    const BlockState& block() const { return block_; }

    /// Fresh cubes, robot back at home, first prompt.
    void begin_block(int index, const Block& b, const SceneConfig& scene, double t) {
        if (pending_cond_) cond_ = *std::exchange(pending_cond_, std::nullopt);
        scene_ = scene;
        block_index_ = index;
        objects_ = b.objects;
        block_ = BlockState(b.order, cfg_.rules);
        block_active_ = true;
        modes_ = protocol::ModeMachine();
        clutch_ = Clutch();
        gripper_ = Gripper::Open;
        holding_ = -1;
        estimate_.reset();
        const Eigen::Vector3d home(scene.table_center.x(), scene.table_center.y(), scene.table_z + cfg_.home_height);
        q_ = select_shortest(inverse(cfg_.robot, make_transform(top_down_rotation(), home)), nominal_posture());
        ee_ = forward(cfg_.robot, q_).topRightCorner<3, 1>();
        reset_direct();
        intent_rng_.seed(mix_seed({seed_, static_cast<std::uint64_t>(index), 0x1A7E}));
        block_rec_ = BlockRecord{index, t, t, 0, 0, false, b.order};
        start_attempt(t);
    }

    /// Uplink traffic. Illegal requests are dropped and logged.
    void receive(const protocol::Message& m, double t) {
        using protocol::Kind;
        if (m.kind == Kind::InputEvent) {
            if (modes_.mode() != protocol::Mode::Direct || !block_active_) return;
            const bool want = m.payload.at("clutch").get<bool>();
            if (want && !clutch_.engaged()) clutch_.engage(Eigen::Vector3d::Zero(), ee_, t);
            if (!want && clutch_.engaged()) clutch_.disengage(t);
            const Eigen::Vector3d delta = json_vec(m.payload.at("hand_delta"));
            pending_ += clutch_.step(cfg_.teleop, delta / cfg_.tick, cfg_.tick);
        } else if (m.kind == Kind::GraspRequest) {
            try {
                grasp_request(m.payload, t);
            } catch (const protocol::IllegalTransition& e) {
                log_.push_back("t=" + std::to_string(t) + " dropped GraspRequest: " + e.what());
            }
        } else if (m.kind == Kind::ModeChange && m.payload.contains("condition")) {
            const Condition c{m.payload["condition"]["va"].get<bool>(), m.payload["condition"]["mmipn"].get<bool>()};
            if (block_active_) {
                log_.push_back("condition change deferred to the next block");
                pending_cond_ = c;
                return;
            }
            cond_ = c;
        }
    }

    /// Advances the world by one tick ending at t + dt.
    void step(double t, double dt) {
        if (modes_.mode() == protocol::Mode::Direct) {
            if (!block_active_) return;
            Eigen::Vector3d xd = clamp_workspace(adm_.x_d + pending_);
            pending_.setZero();
            Eigen::Vector3d cmd;
            if (cond_.va) {
                std::vector<ApfSource> src;
                for (const auto& o : objects_) src.push_back({o.position, cfg_.apf_strength});
                cmd = admittance_step(adm_, cfg_.admittance, apf_force(adm_.x_r(), src, cfg_.admittance.epsilon), xd,
                                      dt);
            } else {
                adm_.x_d = xd;
                adm_.e.setZero();
                adm_.e_dot.setZero();
                cmd = xd;
            }
            drive_to(cmd);
            if (t + dt - attempt_.t_start > cfg_.attempt_timeout) {
                attempt_.timeout = true;
                finish_attempt(t + dt, std::nullopt);
                attempt_open_ = false;
                if (block_active_) start_attempt(t + dt);
            }
            return;
        }
        auto& a = modes_.current();
        bool done = false;
        switch (a.kind) {
            case Action::Move: {
                const Eigen::Vector3d d = a.target - ee_;
                const double stepl = cfg_.plan_speed * dt;
                if (d.norm() <= stepl) {
                    drive_to(a.target);
                    done = true;
                } else {
                    drive_to(ee_ + d / d.norm() * stepl);
                }
                break;
            }
            case Action::Wait:
            case Action::Close:
            case Action::Open:
                a.duration -= dt;
                done = a.duration <= 1e-9;
                break;
        }
        if (!done) return;
        if (a.kind == Action::Close) {
            gripper_ = Gripper::Closed;
            const auto hit = adjudicate(ee_, objects_, scene_);
            holding_ = hit ? *hit : -1;
            finish_attempt(t + dt, hit);
        } else if (a.kind == Action::Open) {
            gripper_ = Gripper::Open;
            holding_ = -1;  // released in place
        }
        if (modes_.action_complete()) {
            reset_direct();
            estimate_.reset();
            if (block_active_) start_attempt(t + dt);
        }
    }

    WorldSnapshot snapshot(double t) const {
        WorldSnapshot s;
        s.t = t;
        s.mode = modes_.mode();
        s.ee = ee_;
        s.joints = q_;
        s.gripper = gripper_;
        s.holding = holding_;
        s.objects = objects_;
        s.table_z = scene_.table_z;
        if (block_active_ && attempt_open_)
            s.prompt = Prompt{block_index_, block_.trial(), block_.attempts(), block_.prompt()};
        s.va_deviation = adm_.e;
        s.estimate = estimate_;
        s.condition = cond_;
        return s;
    }

    /// Finished attempts since the last call, in order.
    std::vector<AttemptRecord> take_attempts() { return std::exchange(done_attempts_, {}); }
    std::optional<BlockRecord> take_block() { return std::exchange(done_block_, std::nullopt); }
    /// Outgoing records for observers (intent results).
    std::vector<protocol::Message> take_outbox() { return std::exchange(outbox_, {}); }

    /// The block is over and its last queued actions have run.
    bool idle() const { return !block_active_ && modes_.mode() == protocol::Mode::Direct; }

private:
    static JointVector nominal_posture() {
        return {0.0, -std::numbers::pi / 2, std::numbers::pi / 2, -std::numbers::pi / 2, -std::numbers::pi / 2, 0.0};
    }

    void reset_direct() {
        adm_ = AdmittanceState{};
        adm_.x_d = ee_;
        pending_.setZero();
        if (clutch_.engaged()) clutch_ = Clutch();
    }

    Eigen::Vector3d clamp_workspace(Eigen::Vector3d p) const {
        const Eigen::Vector2d lo = scene_.table_center - 0.5 * scene_.table_size -
                                   Eigen::Vector2d::Constant(cfg_.workspace_slack);
        const Eigen::Vector2d hi = scene_.table_center + 0.5 * scene_.table_size +
                                   Eigen::Vector2d::Constant(cfg_.workspace_slack);
        p.x() = std::clamp(p.x(), lo.x(), hi.x());
        p.y() = std::clamp(p.y(), lo.y(), hi.y());
        p.z() = std::clamp(p.z(), scene_.grasp_z(), scene_.table_z + 2.0 * cfg_.home_height);
        return p;
    }

    void drive_to(const Eigen::Vector3d& p) {
        try {
            q_ = select_shortest(inverse(cfg_.robot, make_transform(top_down_rotation(), p)), q_);
            ee_ = forward(cfg_.robot, q_).topRightCorner<3, 1>();
        } catch (const std::runtime_error&) {
            ++ik_failures_;  // hold the last joint command
        }
    }

    void start_attempt(double t) {
        attempt_ = AttemptRecord{};
        attempt_.block = block_index_;
        attempt_.trial = block_.trial();
        attempt_.attempt = block_.attempts();
        attempt_.target = block_.prompt();
        attempt_.t_start = t;
        attempt_open_ = true;
    }

    void finish_attempt(double t, std::optional<int> hit) {
        attempt_.t_end = t;
        attempt_.grasp_point = ee_;
        attempt_.grasped = hit ? *hit : -1;
        attempt_.success = hit && objects_[static_cast<std::size_t>(*hit)].color == attempt_.target;
        attempt_open_ = false;
        done_attempts_.push_back(attempt_);
        block_.advance(attempt_.success);
        block_rec_.attempts = block_.attempts();
        block_rec_.successes = block_.successes();
        if (!block_.active()) {
            block_active_ = false;
            block_rec_.t_end = t;
            block_rec_.complete = block_.status() == BlockState::Status::Complete;
            done_block_ = block_rec_;
        }
    }

    void grasp_request(const nlohmann::json& p, double t) {
        if (!block_active_ || !attempt_open_) throw protocol::IllegalTransition("no open attempt");
        if (modes_.mode() != protocol::Mode::Direct) throw protocol::IllegalTransition("grasp request while supervised");
        std::optional<Eigen::Vector3d> est;
        double latency = 0.0;
        if (cond_.mmipn && model_) {
            intent::Inputs x;
            if (p.contains("image") && p["image"].is_object())
                x.image = intent::image_from_base64(p["image"].at("data").get<std::string>());
            x.pose = p.at("pose_window").get<std::vector<double>>();
            x.gaze = p.at("gaze_window").get<std::vector<double>>();
            std::vector<Eigen::Vector3d> objs;
            for (const auto& o : objects_) objs.push_back(o.position);
            x.objects = intent::canonical_objects(objs);
            try {
                est = model_->predict(x);
            } catch (const std::exception& e) {
                log_.push_back(std::string("intent inference failed: ") + e.what());
            }
            latency = protocol::draw_delay(cfg_.latency.intent_mean, cfg_.latency.intent_sd, intent_rng_);
        }
        PlanResult plan = plan_grasp(ee_, est, scene_, cfg_.gripper_time);
        if (plan.fell_back) log_.push_back("t=" + std::to_string(t) + " " + plan.warning);
        std::vector<Action> q;
        if (latency > 0.0) q.push_back({Action::Wait, ee_, latency / 1000.0});
        q.insert(q.end(), plan.actions.begin(), plan.actions.end());
        const Eigen::Vector3d grasp_at = plan.actions.back().target;
        q.push_back({Action::Move, {grasp_at.x(), grasp_at.y(), scene_.safe_z()}, 0.0});
        q.push_back({Action::Open, {grasp_at.x(), grasp_at.y(), scene_.safe_z()}, cfg_.gripper_time});
        modes_.grasp_request(q);
        if (clutch_.engaged()) clutch_.disengage(t);
        attempt_.t_request = t;
        attempt_.estimate = est;
        attempt_.fell_back = plan.fell_back;
        attempt_.intent_latency_ms = latency;
        estimate_ = est;
        if (est)
            outbox_.push_back({protocol::Kind::IntentResult, 0, t * 1000.0,
                               {{"estimate", vec_json(*est)}, {"latency_ms", latency}}});
    }

    SessionConfig cfg_;
    Condition cond_;
    std::optional<Condition> pending_cond_;
    const intent::Model* model_;
    std::uint64_t seed_;

    SceneConfig scene_;
    int block_index_ = 0;
    std::vector<SceneObject> objects_;
    BlockState block_;
    bool block_active_ = false;
    bool attempt_open_ = false;
    protocol::ModeMachine modes_;
    Clutch clutch_;
    AdmittanceState adm_;
    Eigen::Vector3d pending_ = Eigen::Vector3d::Zero();
    JointVector q_{};
    Eigen::Vector3d ee_ = Eigen::Vector3d::Zero();
    Gripper gripper_ = Gripper::Open;
    int holding_ = -1;
    std::optional<Eigen::Vector3d> estimate_;
    std::mt19937_64 intent_rng_;
    int ik_failures_ = 0;

    AttemptRecord attempt_;
    BlockRecord block_rec_;
    std::vector<AttemptRecord> done_attempts_;
    std::optional<BlockRecord> done_block_;
    std::vector<protocol::Message> outbox_;
    std::vector<std::string> log_;
};

// --- headless session ----------------------------------------------------------------

struct SessionResult {
    std::vector<AttemptRecord> attempts;
    std::vector<BlockRecord> blocks;
    std::vector<std::string> log;
};

struct SessionHooks {
    /// Called on every grasp press with the model inputs and the true target.
    std::function<void(const intent::Inputs&, const Eigen::Vector3d&, Color, int block)> on_grasp;
    /// Per-block scene override (the dataset generator varies table height).
    std::function<SceneConfig(int block)> scene_for_block;
};

inline protocol::Message input_event(const OperatorOutput& o, std::uint64_t seq, double t) {
    nlohmann::json p = {{"hand_delta", vec_json(o.hand_delta)}, {"clutch", o.clutch}, {"grasp", o.grasp}};
    p["gaze"] = o.gaze ? nlohmann::json(*o.gaze) : nlohmann::json(nullptr);
    return {protocol::Kind::InputEvent, seq, t * 1000.0, p};
}

/// Runs every block of one participant under one condition. The local side
/// (operator, eye tracker, raster) talks to the engine through an encoded
/// channel with loop latency.
inline SessionResult run_session(const SessionConfig& cfg, Condition cond, const OperatorModel& op,
                                 std::uint64_t participant_seed, const intent::Model* model,
                                 const SessionHooks& hooks = {}) {
    SessionResult res;
    Engine engine(cfg, cond, model, participant_seed);
    OperatorAgent agent(op, cfg.view, cfg.teleop, mix_seed({participant_seed, 0x0E7}), cfg.window, cfg.frame_period);
    const int trace_every = std::max(1, static_cast<int>(std::lround(cfg.trace_period / cfg.tick)));
    std::uint64_t seq = 0;
    long tick = 0;
    double t = 0.0;
    for (int b = 0; b < cfg.blocks; ++b) {
        const SceneConfig scene = hooks.scene_for_block ? hooks.scene_for_block(b) : cfg.scene;
        const Block blk = spawn_block(scene, mix_seed({participant_seed, static_cast<std::uint64_t>(b), 0x5BA7}));
        protocol::LatencyChannel up(cfg.latency.loop_mean, cfg.latency.loop_sd,
                                    mix_seed({participant_seed, static_cast<std::uint64_t>(b), cfg.latency.seed}));
        engine.begin_block(b, blk, scene, t);
        std::vector<std::array<double, 4>> trace;
        while (!engine.idle()) {
            for (const auto& bytes : up.poll(t * 1000.0 + 1e-9)) engine.receive(protocol::decode(bytes), t);
            engine.step(t, cfg.tick);
            t = static_cast<double>(++tick) * cfg.tick;
            const WorldSnapshot snap = engine.snapshot(t);
            const OperatorOutput out = agent.step(snap, cfg.tick);
            if (snap.prompt && snap.mode == protocol::Mode::Direct && tick % trace_every == 0)
                trace.push_back({t, agent.hand().x(), agent.hand().y(), agent.hand().z()});
            up.send(protocol::encode(input_event(out, seq++, t)), t * 1000.0);
            if (out.grasp) {
                intent::Inputs x;
                x.image = intent::quantize_image(render(cfg.view, scene, snap.objects, snap.ee));
                x.pose = out.pose_window;
                x.gaze = out.gaze_window;
                std::vector<Eigen::Vector3d> objs;
                for (const auto& o : snap.objects) objs.push_back(o.position);
                x.objects = intent::canonical_objects(objs);
                const Eigen::Vector3d truth = object_of(snap.objects, snap.prompt->color).position;
                if (hooks.on_grasp) hooks.on_grasp(x, truth, snap.prompt->color, b);
                nlohmann::json p = {{"pose_window", x.pose}, {"gaze_window", x.gaze}};
                p["image"] = {{"height", cfg.view.height}, {"width", cfg.view.width}, {"channels", 3},
                              {"encoding", "base64-u8-hwc"}, {"data", intent::image_to_base64(x.image)}};
                up.send(protocol::encode({protocol::Kind::GraspRequest, seq++, t * 1000.0, p}), t * 1000.0);
            }
            for (auto& a : engine.take_attempts()) {
                // the trace since the attempt began belongs to it
                for (const auto& s : trace)
                    if (s[0] >= a.t_start - 1e-9 && s[0] <= a.t_end + 1e-9) a.trace.push_back(s);
                res.attempts.push_back(std::move(a));
            }
            if (auto br = engine.take_block()) res.blocks.push_back(*br);
            engine.take_outbox();
        }
    }
    res.log = engine.log();
    return res;
}

}  // namespace teleassist
