#pragma once

#include "teleassist/simworld.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace teleassist::protocol {

constexpr int kVersion = 1;

enum class Kind { Hello, InputEvent, JointCommand, WorldSnapshot, GraspRequest, IntentResult, ModeChange, MetricsTick, Bye };
constexpr int kKindCount = 9;

inline const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Hello: return "Hello";
        case Kind::InputEvent: return "InputEvent";
        case Kind::JointCommand: return "JointCommand";
        case Kind::WorldSnapshot: return "WorldSnapshot";
        case Kind::GraspRequest: return "GraspRequest";
        case Kind::IntentResult: return "IntentResult";
        case Kind::ModeChange: return "ModeChange";
        case Kind::MetricsTick: return "MetricsTick";
        case Kind::Bye: return "Bye";
    }
    return "?";
}

inline std::optional<Kind> kind_from_name(std::string_view s) {
    for (int i = 0; i < kKindCount; ++i)
        if (s == kind_name(static_cast<Kind>(i))) return static_cast<Kind>(i);
    return std::nullopt;
}

struct Message {
    Kind kind = Kind::Hello;
    std::uint64_t seq = 0;
    double t_sent = 0.0;  // ms
    nlohmann::json payload = nlohmann::json::object();

    bool operator==(const Message& o) const {
        return kind == o.kind && seq == o.seq && t_sent == o.t_sent && payload == o.payload;
    }
};

struct MalformedFrame : std::runtime_error {
    std::size_t offset;
    MalformedFrame(std::size_t off, const std::string& why)
        : std::runtime_error("malformed frame at byte " + std::to_string(off) + ": " + why), offset(off) {}
};

// --- payload shape checks ------------------------------------------------------------

namespace detail {

inline bool is_vec(const nlohmann::json& j, std::size_t n) {
    if (!j.is_array() || (n && j.size() != n)) return false;
    for (const auto& v : j)
        if (!v.is_number()) return false;
    return true;
}

inline void require(bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string("bad or missing field '") + field + "'");
}

inline const nlohmann::json& at(const nlohmann::json& j, const char* field) {
    require(j.is_object() && j.contains(field), field);
    return j.at(field);
}

}  // namespace detail

/// Throws std::invalid_argument naming the first offending field.
inline void validate_payload(Kind kind, const nlohmann::json& p) {
    using namespace detail;
    require(p.is_object(), "payload");
    switch (kind) {
        case Kind::Hello:
            require(at(p, "version").is_number_integer(), "version");
            require(at(p, "role").is_string(), "role");
            break;
        case Kind::InputEvent:
            require(is_vec(at(p, "hand_delta"), 3), "hand_delta");
            require(at(p, "clutch").is_boolean(), "clutch");
            require(at(p, "grasp").is_boolean(), "grasp");
            require(at(p, "gaze").is_null() || is_vec(p.at("gaze"), 12), "gaze");
            break;
        case Kind::JointCommand:
            require(is_vec(at(p, "q"), 6), "q");
            break;
        case Kind::WorldSnapshot:
            require(at(p, "t").is_number(), "t");
            require(at(p, "mode").is_string(), "mode");
            require(is_vec(at(p, "ee"), 3), "ee");
            require(is_vec(at(p, "joints"), 6), "joints");
            require(at(p, "gripper").is_string(), "gripper");
            require(at(p, "objects").is_array(), "objects");
            for (const auto& o : p.at("objects")) {
                require(at(o, "id").is_number_integer(), "objects[].id");
                require(at(o, "color").is_string(), "objects[].color");
                require(is_vec(at(o, "position"), 3), "objects[].position");
            }
            require(at(p, "prompt").is_object() || p.at("prompt").is_null(), "prompt");
            break;
        case Kind::GraspRequest:
            require(is_vec(at(p, "pose_window"), 0), "pose_window");
            require(is_vec(at(p, "gaze_window"), 0), "gaze_window");
            require(at(p, "image").is_object() || p.at("image").is_null(), "image");
            break;
        case Kind::IntentResult:
            require(is_vec(at(p, "estimate"), 3), "estimate");
            require(at(p, "latency_ms").is_number(), "latency_ms");
            break;
        case Kind::ModeChange:
            require(p.contains("mode") || p.contains("condition"), "mode");
            if (p.contains("mode")) require(p.at("mode").is_string(), "mode");
            if (p.contains("condition")) {
                require(at(p.at("condition"), "va").is_boolean(), "condition.va");
                require(at(p.at("condition"), "mmipn").is_boolean(), "condition.mmipn");
            }
            break;
        case Kind::MetricsTick:
            require(at(p, "metrics").is_object(), "metrics");
            break;
        case Kind::Bye:
            require(at(p, "reason").is_string(), "reason");
            break;
    }
}

// --- codec ---------------------------------------------------------------------------

/// One JSON object per line, terminated by '\n'.
inline std::string encode(const Message& m) {
    if (!std::isfinite(m.t_sent)) throw std::invalid_argument("t_sent not finite");
    validate_payload(m.kind, m.payload);
    nlohmann::json j = {{"kind", kind_name(m.kind)}, {"seq", m.seq}, {"t_sent", m.t_sent}, {"payload", m.payload}};
    std::string s = j.dump();  // throws on non-finite numbers
    s += '\n';
    return s;
}

/// Decodes exactly one newline-terminated record. `base` is added to reported offsets.
inline Message decode(std::string_view frame, std::size_t base = 0) {
    if (frame.empty() || frame.back() != '\n') throw MalformedFrame(base + frame.size(), "truncated (no newline)");
    const std::string_view body = frame.substr(0, frame.size() - 1);
    if (body.find('\n') != std::string_view::npos) throw MalformedFrame(base + body.find('\n'), "embedded newline");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedFrame(base + (e.byte > 0 ? e.byte - 1 : 0), "not JSON");
    }
    auto fail = [&](const std::string& why) { return MalformedFrame(base, why); };
    if (!j.is_object()) throw fail("record is not an object");
    if (!j.contains("kind") || !j["kind"].is_string()) throw fail("missing kind");
    const auto kind = kind_from_name(j["kind"].get<std::string>());
    if (!kind) throw fail("unknown kind");
    if (!j.contains("seq") || !j["seq"].is_number_unsigned()) throw fail("missing seq");
    if (!j.contains("t_sent") || !j["t_sent"].is_number()) throw fail("missing t_sent");
    if (!j.contains("payload")) throw fail("missing payload");
    Message m{*kind, j["seq"].get<std::uint64_t>(), j["t_sent"].get<double>(), j["payload"]};
    try {
        validate_payload(m.kind, m.payload);
    } catch (const std::invalid_argument& e) {
        throw fail(e.what());
    }
    return m;
}

/// Splits a byte stream into records. Offsets are absolute within the stream.
class FrameReader {
public:
    void feed(std::string_view bytes) { buf_.append(bytes); }

    std::optional<Message> next() {
        const auto nl = buf_.find('\n', scan_);
        if (nl == std::string::npos) {
            scan_ = buf_.size();
            return std::nullopt;
        }
        const std::string frame = buf_.substr(0, nl + 1);
        const std::size_t at = consumed_;
        buf_.erase(0, nl + 1);
        consumed_ += nl + 1;
        scan_ = 0;
        return decode(frame, at);
    }

    /// End of stream: leftover bytes are a truncated record.
    void finish() const {
        if (!buf_.empty()) throw MalformedFrame(consumed_ + buf_.size(), "truncated (no newline)");
    }

    std::size_t pending() const { return buf_.size(); }

private:
    std::string buf_;
    std::size_t scan_ = 0, consumed_ = 0;
};

// --- latency --------------------------------------------------------------------------

struct LatencyProfile {
    double loop_mean = 56.0, loop_sd = 3.8;        // ms
    double intent_mean = 249.3, intent_sd = 7.1;   // ms
    std::uint64_t seed = 1;

    bool valid() const { return loop_mean >= 0 && loop_sd >= 0 && intent_mean >= 0 && intent_sd >= 0; }
    static LatencyProfile zero() { return {0.0, 0.0, 0.0, 0.0, 1}; }
};

inline double draw_delay(double mean, double sd, std::mt19937_64& rng) {
    if (sd <= 0.0) return std::max(0.0, mean);
    return std::max(0.0, std::normal_distribution<double>(mean, sd)(rng));
}

struct ChannelClosed : std::logic_error {
    ChannelClosed() : std::logic_error("channel closed") {}
};

/// One direction of a connection. Each record gets a Gaussian delay (clamped
/// at zero); a deadline never precedes the one before it, so order survives.
class LatencyChannel {
public:
    LatencyChannel(double mean_ms, double sd_ms, std::uint64_t seed) : mean_(mean_ms), sd_(sd_ms), rng_(seed) {}

    double send(std::string bytes, double now_ms) {
        if (closed_) throw ChannelClosed();
        const double due = std::max(now_ms + draw_delay(mean_, sd_, rng_), last_);
        last_ = due;
        q_.push_back({due, now_ms, std::move(bytes)});
        return due;
    }

    std::vector<std::string> poll(double now_ms) {
        std::vector<std::string> out;
        while (!q_.empty() && q_.front().due <= now_ms) {
            out.push_back(std::move(q_.front().bytes));
            q_.pop_front();
        }
        return out;
    }

    std::optional<double> next_due() const {
        if (q_.empty()) return std::nullopt;
        return q_.front().due;
    }

    void close() { closed_ = true; }
    bool closed() const { return closed_; }
    std::size_t in_flight() const { return q_.size(); }

private:
    struct Entry {
        double due, sent;
        std::string bytes;
    };
    double mean_, sd_;
    std::mt19937_64 rng_;
    std::deque<Entry> q_;
    double last_ = -1e300;
    bool closed_ = false;
};

// --- direct / supervised mode ---------------------------------------------------------

enum class Mode { Direct, Supervised };

inline const char* mode_name(Mode m) { return m == Mode::Direct ? "direct" : "supervised"; }

struct IllegalTransition : std::logic_error {
    using std::logic_error::logic_error;
};

/// Supervised is entered only on a grasp request and left only when the planned
/// queue has run dry.
class ModeMachine {
public:
    Mode mode() const { return mode_; }
    const std::deque<Action>& queue() const { return queue_; }

    void grasp_request(const std::vector<Action>& plan) {
        if (mode_ != Mode::Direct) throw IllegalTransition("grasp request while supervised");
        if (plan.empty()) throw IllegalTransition("empty plan");
        queue_.assign(plan.begin(), plan.end());
        mode_ = Mode::Supervised;
    }

    Action& current() {
        if (queue_.empty()) throw IllegalTransition("no pending action");
        return queue_.front();
    }

    void append(const Action& a) {
        if (mode_ != Mode::Supervised) throw IllegalTransition("append while direct");
        queue_.push_back(a);
    }

    /// Pops the head; returns true when this drained the queue.
    bool action_complete() {
        if (mode_ != Mode::Supervised || queue_.empty()) throw IllegalTransition("action complete while direct");
        queue_.pop_front();
        if (queue_.empty()) {
            mode_ = Mode::Direct;
            return true;
        }
        return false;
    }

    bool invariant() const { return (mode_ == Mode::Direct) == queue_.empty(); }

private:
    Mode mode_ = Mode::Direct;
    std::deque<Action> queue_;
};

}  // namespace teleassist::protocol
