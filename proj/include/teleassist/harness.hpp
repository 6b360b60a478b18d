#pragma once

#include "teleassist/session.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace teleassist {

struct EmptyRecords : std::invalid_argument {
    EmptyRecords() : std::invalid_argument("no records to summarize") {}
};

/// Balanced 4x4 square: every condition once per position and each ordered
/// pair of neighbors once. Participant p takes row p mod 4.
inline std::vector<std::array<Condition, 4>> latin_square(int k) {
    if (k < 1) throw std::invalid_argument("need at least one participant");
    static constexpr int rows[4][4] = {{0, 1, 3, 2}, {1, 2, 0, 3}, {2, 3, 1, 0}, {3, 0, 2, 1}};
    std::vector<std::array<Condition, 4>> out;
    for (int p = 0; p < k; ++p) {
        std::array<Condition, 4> r;
        for (int i = 0; i < 4; ++i) r[i] = Condition::from_index(rows[p % 4][i]);
        out.push_back(r);
    }
    return out;
}

struct StudyConfig {
    int participants = 16;
    std::uint64_t seed = 7;
    double jitter = 0.15;
    std::optional<Condition> only;  // restrict to one condition
    int threads = 1;                // sessions run in parallel; output order is fixed
};

// --- raw records ----------------------------------------------------------------------

inline nlohmann::json attempt_json(int participant, Condition c, int position, const AttemptRecord& a) {
    nlohmann::json j;
    j["type"] = "attempt";
    j["participant"] = participant;
    j["condition"] = c.name();
    j["position"] = position;
    j["block"] = a.block;
    j["trial"] = a.trial;
    j["attempt"] = a.attempt;
    j["target"] = color_name(a.target);
    j["t_start"] = a.t_start;
    j["t_request"] = a.t_request;
    j["t_end"] = a.t_end;
    j["success"] = a.success;
    j["timeout"] = a.timeout;
    j["grasped"] = a.grasped;
    j["grasp_point"] = vec_json(a.grasp_point);
    j["estimate"] = a.estimate ? vec_json(*a.estimate) : nlohmann::json(nullptr);
    j["fell_back"] = a.fell_back;
    j["intent_latency_ms"] = a.intent_latency_ms;
    j["trace"] = a.trace;
    return j;
}

inline nlohmann::json block_json(int participant, Condition c, int position, const BlockRecord& b) {
    return {{"type", "block"},         {"participant", participant}, {"condition", c.name()},
            {"position", position},    {"block", b.block},           {"t_start", b.t_start},
            {"t_end", b.t_end},        {"attempts", b.attempts},     {"successes", b.successes},
            {"complete", b.complete}};
}

/// Runs every participant through its Latin-square order. Returns the raw
/// records in run order.
inline std::vector<nlohmann::json> run_study(const SessionConfig& cfg, const OperatorModel& op, const StudyConfig& sc,
                                             const intent::Model* model) {
    struct Job {
        int participant, position;
        Condition cond;
        std::uint64_t seed;
        OperatorModel who;
    };
    std::vector<Job> jobs;
    const auto orders = latin_square(sc.participants);
    for (int p = 0; p < sc.participants; ++p) {
        const std::uint64_t ps = mix_seed({sc.seed, static_cast<std::uint64_t>(p), 0x9A87});
        const OperatorModel who = op.jittered(sc.jitter, mix_seed({ps, 0x0B}));
        for (int pos = 0; pos < 4; ++pos) {
            const Condition c = orders[static_cast<std::size_t>(p)][static_cast<std::size_t>(pos)];
            if (sc.only && !(*sc.only == c)) continue;
            if (c.mmipn && !model) throw std::invalid_argument("intent condition needs a model");
            // same seed in every condition: identical scenes and operator draws
            jobs.push_back({p, pos, c, ps, who});
        }
    }

    std::vector<std::vector<nlohmann::json>> out(jobs.size());
    auto run = [&](std::size_t i) {
        const Job& jb = jobs[i];
        const SessionResult r = run_session(cfg, jb.cond, jb.who, jb.seed, model);
        std::size_t ai = 0;
        for (const auto& b : r.blocks) {
            for (; ai < r.attempts.size() && r.attempts[ai].block == b.block; ++ai)
                out[i].push_back(attempt_json(jb.participant, jb.cond, jb.position, r.attempts[ai]));
            out[i].push_back(block_json(jb.participant, jb.cond, jb.position, b));
        }
    };
    const int nt = std::max(1, std::min<int>(sc.threads, static_cast<int>(jobs.size())));
    if (nt == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr err;
        std::mutex m;
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next++) < jobs.size();) {
                    try {
                        run(i);
                    } catch (...) {
                        std::lock_guard lk(m);
                        if (!err) err = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
        if (err) std::rethrow_exception(err);
    }
    std::vector<nlohmann::json> records;
    for (auto& v : out)
        for (auto& r : v) records.push_back(std::move(r));
    return records;
}

// --- metrics --------------------------------------------------------------------------

struct ConditionMetrics {
    int attempts = 0, successes = 0;
    int blocks = 0, perfect_blocks = 0, bad_blocks = 0, completed_blocks = 0;
    double grasp_time_sum = 0.0;
    double block_time_completed_sum = 0.0, block_time_all_sum = 0.0;
    double distance = 0.0, direct_time = 0.0;

    double success_rate() const { return attempts ? 100.0 * successes / attempts : 0.0; }
    double mean_grasp_time() const { return attempts ? grasp_time_sum / attempts : 0.0; }
    std::optional<double> mean_block_time_completed() const {
        if (!completed_blocks) return std::nullopt;
        return block_time_completed_sum / completed_blocks;
    }
    std::optional<double> mean_block_time_all() const {
        if (!blocks) return std::nullopt;
        return block_time_all_sum / blocks;
    }
    std::optional<double> efficiency() const {
        if (!successes) return std::nullopt;
        return distance / successes;
    }
    std::optional<double> velocity() const {
        if (direct_time <= 0.0) return std::nullopt;
        return distance / direct_time;
    }
};

struct MetricsReport {
    std::map<std::string, ConditionMetrics> pooled;                         // by condition name
    std::map<std::pair<std::string, int>, ConditionMetrics> per_participant;  // (condition, participant)
};

inline double trace_length(const nlohmann::json& trace) {
    double d = 0.0;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        double s = 0.0;
        for (int k = 1; k <= 3; ++k) {
            const double v = trace[i][k].get<double>() - trace[i - 1][k].get<double>();
            s += v * v;
        }
        d += std::sqrt(s);
    }
    return d;
}

inline MetricsReport summarize(const std::vector<nlohmann::json>& records) {
    if (records.empty()) throw EmptyRecords();
    // fixed summation order, so shuffled input gives bit-identical sums
    std::vector<const nlohmann::json*> order;
    for (const auto& r : records) order.push_back(&r);
    auto key = [](const nlohmann::json* r) {
        const bool att = r->at("type") == "attempt";
        return std::make_tuple(r->at("condition").get<std::string>(), r->at("participant").get<int>(),
                               r->at("block").get<int>(), att ? 0 : 1, att ? r->at("attempt").get<int>() : 0);
    };
    std::stable_sort(order.begin(), order.end(), [&](auto* a, auto* b) { return key(a) < key(b); });
    MetricsReport rep;
    for (const auto* rp : order) {
        const auto& r = *rp;
        const std::string cond = r.at("condition");
        const int p = r.at("participant");
        for (ConditionMetrics* m : {&rep.pooled[cond], &rep.per_participant[{cond, p}]}) {
            if (r.at("type") == "attempt") {
                ++m->attempts;
                if (r.at("success").get<bool>()) ++m->successes;
                m->grasp_time_sum += r.at("t_end").get<double>() - r.at("t_start").get<double>();
                const auto& tr = r.at("trace");
                m->distance += trace_length(tr);
                if (tr.size() >= 2) m->direct_time += tr.back()[0].get<double>() - tr.front()[0].get<double>();
            } else {
                ++m->blocks;
                const double dt = r.at("t_end").get<double>() - r.at("t_start").get<double>();
                m->block_time_all_sum += dt;
                if (r.at("complete").get<bool>()) {
                    ++m->completed_blocks;
                    m->block_time_completed_sum += dt;
                    if (r.at("attempts").get<int>() == 4) ++m->perfect_blocks;
                } else {
                    ++m->bad_blocks;
                }
            }
        }
    }
    return rep;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << v;
    return os.str();
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline std::string metrics_csv(const MetricsReport& rep) {
    std::ostringstream os;
    os << "condition,participant,attempts,successes,success_rate_pct,perfect_blocks,bad_blocks,mean_grasp_time_s,"
          "mean_block_time_completed_s,mean_block_time_all_s,total_distance_m,efficiency_m_per_success,"
          "velocity_m_per_s\n";
    auto row = [&](const std::string& c, const std::string& who, const ConditionMetrics& m) {
        os << c << ',' << who << ',' << m.attempts << ',' << m.successes << ',' << fmt(m.success_rate()) << ','
           << m.perfect_blocks << ',' << m.bad_blocks << ',' << fmt(m.mean_grasp_time()) << ','
           << fmt(m.mean_block_time_completed()) << ',' << fmt(m.mean_block_time_all()) << ',' << fmt(m.distance)
           << ',' << fmt(m.efficiency()) << ',' << fmt(m.velocity()) << '\n';
    };
    for (const auto& name : {"none", "va", "mmipn", "both"}) {
        const auto it = rep.pooled.find(name);
        if (it != rep.pooled.end()) row(name, "all", it->second);
    }
    for (const auto& name : {"none", "va", "mmipn", "both"})
        for (const auto& [key, m] : rep.per_participant)
            if (key.first == name) row(name, std::to_string(key.second), m);
    return os.str();
}

/// Pools two conditions (e.g. both intent-on conditions).
inline ConditionMetrics pool(const ConditionMetrics& a, const ConditionMetrics& b) {
    ConditionMetrics m = a;
    m.attempts += b.attempts;
    m.successes += b.successes;
    m.blocks += b.blocks;
    m.perfect_blocks += b.perfect_blocks;
    m.bad_blocks += b.bad_blocks;
    m.completed_blocks += b.completed_blocks;
    m.grasp_time_sum += b.grasp_time_sum;
    m.block_time_completed_sum += b.block_time_completed_sum;
    m.block_time_all_sum += b.block_time_all_sum;
    m.distance += b.distance;
    m.direct_time += b.direct_time;
    return m;
}

}  // namespace teleassist
