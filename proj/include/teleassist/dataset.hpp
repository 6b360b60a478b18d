#pragma once

#include "teleassist/intent/sample.hpp"
#include "teleassist/session.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>

namespace teleassist {

struct DatasetSpec {
    int count = 400;
    double table_sd = 0.03;  // per-block table height spread, m
    double jitter = 0.15;    // per-participant operator jitter
    int blocks_per_session = 10;
};

/// Records every grasp press of unassisted sessions: the model inputs the
/// local side would send and the true target as label.
inline intent::Dataset generate_dataset(SessionConfig cfg, const OperatorModel& op, const DatasetSpec& spec,
                                        std::uint64_t seed) {
    if (spec.count < 1) throw std::invalid_argument("dataset count must be >= 1");
    cfg.blocks = spec.blocks_per_session;
    intent::Dataset ds;
    for (std::uint64_t p = 0; static_cast<int>(ds.size()) < spec.count; ++p) {
        const std::uint64_t ps = mix_seed({seed, p, 0xDA7A});
        SessionHooks hooks;
        hooks.scene_for_block = [&](int b) {
            SceneConfig s = cfg.scene;
            std::mt19937_64 rng(mix_seed({ps, static_cast<std::uint64_t>(b), 0x7AB1E}));
            if (spec.table_sd > 0) s.table_z += std::normal_distribution<double>(0.0, spec.table_sd)(rng);
            return s;
        };
        hooks.on_grasp = [&](const intent::Inputs& x, const Eigen::Vector3d& truth, Color c, int b) {
            if (static_cast<int>(ds.size()) >= spec.count) return;
            intent::IntentSample s;
            s.inputs = x;
            s.label = truth;
            s.meta.seed = seed;
            s.meta.scene_id = mix_seed({ps, static_cast<std::uint64_t>(b)});
            s.meta.target = static_cast<int>(c);
            ds.push_back(std::move(s));
        };
        run_session(cfg, Condition{}, op.jittered(spec.jitter, mix_seed({ps, 0x0B})), ps, nullptr, hooks);
    }
    return ds;
}

/// Share of records whose nearest object to the last pose frame is not the target.
inline double nearest_object_misid(const intent::Dataset& ds) {
    if (ds.empty()) throw intent::EmptyDataset();
    int miss = 0;
    for (const auto& s : ds) {
        const auto& p = s.inputs.pose;
        const Eigen::Vector3d last(p[p.size() - 3], p[p.size() - 2], p[p.size() - 1]);
        const auto& o = s.inputs.objects;
        double best = 1e300;
        Eigen::Vector3d pick = Eigen::Vector3d::Zero();
        for (std::size_t i = 0; i + 2 < o.size(); i += 3) {
            const Eigen::Vector3d q(o[i], o[i + 1], o[i + 2]);
            if ((q - last).norm() < best) {
                best = (q - last).norm();
                pick = q;
            }
        }
        if ((pick - s.label).norm() > 1e-9) ++miss;
    }
    return static_cast<double>(miss) / static_cast<double>(ds.size());
}

}  // namespace teleassist
