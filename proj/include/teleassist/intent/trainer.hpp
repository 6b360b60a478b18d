#pragma once

#include "teleassist/intent/network.hpp"
#include "teleassist/intent/sample.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace teleassist::intent {

struct EmptyDataset : std::invalid_argument {
    EmptyDataset() : std::invalid_argument("empty dataset") {}
};

struct TrainSpec {
    int batch = 8;
    int epochs = 100;
    double lr = 0.005;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double train_fraction = 0.8;
    std::uint64_t seed = 1;
};

/// Per-feature z-scores fitted on the training split. The image stays in [0, 1].
struct Normalizer {
    std::vector<double> pose_mu, pose_sd;     // per coordinate
    std::vector<double> obj_mu, obj_sd;       // per element
    std::vector<double> gaze_mu, gaze_sd;     // per channel
    Eigen::Vector3d label_mu = Eigen::Vector3d::Zero(), label_sd = Eigen::Vector3d::Ones();

    static void fit_channels(const std::vector<const std::vector<double>*>& rows, int ch, std::vector<double>& mu,
                             std::vector<double>& sd) {
        mu.assign(ch, 0.0);
        sd.assign(ch, 0.0);
        std::vector<double> n(ch, 0.0);
        for (const auto* r : rows)
            for (std::size_t i = 0; i < r->size(); ++i) {
                mu[i % ch] += (*r)[i];
                n[i % ch] += 1.0;
            }
        for (int c = 0; c < ch; ++c) mu[c] /= std::max(n[c], 1.0);
        for (const auto* r : rows)
            for (std::size_t i = 0; i < r->size(); ++i) {
                const double d = (*r)[i] - mu[i % ch];
                sd[i % ch] += d * d;
            }
        for (int c = 0; c < ch; ++c) sd[c] = std::sqrt(sd[c] / std::max(n[c] - 1.0, 1.0)) + 1e-6;
    }

    static Normalizer fit(const Dataset& ds, const std::vector<std::size_t>& idx) {
        Normalizer z;
        std::vector<const std::vector<double>*> pose, obj, gaze;
        for (auto i : idx) {
            pose.push_back(&ds[i].inputs.pose);
            obj.push_back(&ds[i].inputs.objects);
            gaze.push_back(&ds[i].inputs.gaze);
        }
        fit_channels(pose, 3, z.pose_mu, z.pose_sd);
        fit_channels(obj, static_cast<int>(ds[idx.front()].inputs.objects.size()), z.obj_mu, z.obj_sd);
        fit_channels(gaze, 12, z.gaze_mu, z.gaze_sd);
        Eigen::Vector3d mu = Eigen::Vector3d::Zero(), var = Eigen::Vector3d::Zero();
        for (auto i : idx) mu += ds[i].label;
        mu /= static_cast<double>(idx.size());
        for (auto i : idx) var += (ds[i].label - mu).cwiseAbs2();
        var /= std::max<double>(static_cast<double>(idx.size()) - 1.0, 1.0);
        z.label_mu = mu;
        z.label_sd = var.cwiseSqrt().array() + 1e-6;
        return z;
    }

    Inputs apply(const Inputs& x) const {
        Inputs y = x;
        auto norm = [](std::vector<double>& v, const std::vector<double>& mu, const std::vector<double>& sd) {
            if (mu.empty()) return;
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mu[i % mu.size()]) / sd[i % sd.size()];
        };
        norm(y.pose, pose_mu, pose_sd);
        norm(y.objects, obj_mu, obj_sd);
        norm(y.gaze, gaze_mu, gaze_sd);
        return y;
    }

    Eigen::Vector3d to_meters(const Eigen::Vector3d& out) const {
        return label_mu + out.cwiseProduct(label_sd);
    }

    static Normalizer identity(const NetworkConfig& c) {
        Normalizer z;
        z.pose_mu.assign(3, 0.0);
        z.pose_sd.assign(3, 1.0);
        z.obj_mu.assign(static_cast<std::size_t>(c.objects) * 3, 0.0);
        z.obj_sd.assign(static_cast<std::size_t>(c.objects) * 3, 1.0);
        z.gaze_mu.assign(12, 0.0);
        z.gaze_sd.assign(12, 1.0);
        return z;
    }
};

/// A trained estimator: network plus the normalization it was trained under.
struct Model {
    Network net;
    Normalizer norm;

    Eigen::Vector3d predict(const Inputs& x) const { return norm.to_meters(net.forward(norm.apply(x))); }
};

/// Mean over samples and coordinates of |pred - label|, with the output
/// expressed in meters. Returns the loss and accumulates its gradient.
inline double mae_loss_and_grad(const Network& net, const Normalizer& z, const std::vector<Inputs>& xs,
                                const std::vector<Eigen::Vector3d>& labels, std::vector<double>* grad) {
    double loss = 0.0;
    Network::Cache c;
    const double scale = 1.0 / (3.0 * static_cast<double>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Eigen::Vector3d out = net.forward(xs[i], c);
        const Eigen::Vector3d err = z.to_meters(out) - labels[i];
        loss += err.cwiseAbs().sum() * scale;
        if (grad) {
            Eigen::Vector3d d;
            for (int k = 0; k < 3; ++k) d[k] = (err[k] > 0.0 ? 1.0 : err[k] < 0.0 ? -1.0 : 0.0) * z.label_sd[k] * scale;
            net.backward(xs[i], c, d, *grad);
        }
    }
    return loss;
}

struct Metrics {
    double mae_mm = 0.0, mse_mm2 = 0.0, mape_pct = 0.0;
};

/// MAPE divides by |label| per component with a 1 mm floor.
inline Metrics metrics(const std::vector<Eigen::Vector3d>& pred, const std::vector<Eigen::Vector3d>& labels) {
    if (pred.empty()) throw EmptyDataset();
    Metrics m;
    const double n = 3.0 * static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (int k = 0; k < 3; ++k) {
            const double e = (pred[i][k] - labels[i][k]) * 1000.0;
            m.mae_mm += std::abs(e) / n;
            m.mse_mm2 += e * e / n;
            m.mape_pct += 100.0 * std::abs(e) / std::max(std::abs(labels[i][k]) * 1000.0, 1.0) / n;
        }
    return m;
}

inline Metrics evaluate(const Model& model, const Dataset& ds, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw EmptyDataset();
    std::vector<Eigen::Vector3d> pred, labels;
    for (auto i : idx) {
        pred.push_back(model.predict(ds[i].inputs));
        labels.push_back(ds[i].label);
    }
    return metrics(pred, labels);
}

inline Metrics evaluate(const Model& model, const Dataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    return evaluate(model, ds, idx);
}

struct Split {
    std::vector<std::size_t> train, test;
};

/// Per-target-class shuffle, first `fraction` of each class to train.
inline Split stratified_split(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (ds.empty()) throw EmptyDataset();
    std::map<int, std::vector<std::size_t>> classes;
    for (std::size_t i = 0; i < ds.size(); ++i) classes[ds[i].meta.target].push_back(i);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    Split s;
    for (auto& [cls, members] : classes) {
        std::shuffle(members.begin(), members.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < members.size(); ++k) (k < n_train ? s.train : s.test).push_back(members[k]);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    if (s.train.empty()) throw EmptyDataset();
    return s;
}

struct EpochStats {
    double train_mae_mm = 0.0, test_mae_mm = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<EpochStats> history;
    Split split;
};

class Adam {
public:
    Adam(std::size_t n, const TrainSpec& s) : m_(n, 0.0), v_(n, 0.0), spec_(s) {}
    void step(std::vector<double>& params, const std::vector<double>& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(spec_.beta1, t_), c2 = 1.0 - std::pow(spec_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = spec_.beta1 * m_[i] + (1.0 - spec_.beta1) * grad[i];
            v_[i] = spec_.beta2 * v_[i] + (1.0 - spec_.beta2) * grad[i] * grad[i];
            params[i] -= spec_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + spec_.adam_eps);
        }
    }

private:
    std::vector<double> m_, v_;
    TrainSpec spec_;
    int t_ = 0;
};

/// Trains on `split.train`, reports test MAE on `split.test` each epoch.
inline TrainResult train(const Dataset& ds, const TrainSpec& spec, const NetworkConfig& cfg, unsigned mods,
                         const Split& split) {
    if (ds.empty() || split.train.empty()) throw EmptyDataset();
    TrainResult r;
    r.split = split;
    r.model.norm = Normalizer::fit(ds, split.train);
    r.model.net = Network(cfg, mods);
    r.model.net.init(spec.seed);

    std::vector<Inputs> xs(ds.size());
    std::vector<Eigen::Vector3d> ys(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        xs[i] = r.model.norm.apply(ds[i].inputs);
        ys[i] = ds[i].label;
    }

    Adam opt(r.model.net.params().size(), spec);
    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + 17);
    std::vector<std::size_t> order = split.train;
    std::vector<double> grad(r.model.net.params().size());
    std::vector<Inputs> bx;
    std::vector<Eigen::Vector3d> by;
    for (int ep = 0; ep < spec.epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t at = 0; at < order.size(); at += spec.batch) {
            const std::size_t end = std::min(order.size(), at + spec.batch);
            bx.clear();
            by.clear();
            for (std::size_t k = at; k < end; ++k) {
                bx.push_back(xs[order[k]]);
                by.push_back(ys[order[k]]);
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            sum += mae_loss_and_grad(r.model.net, r.model.norm, bx, by, &grad) * static_cast<double>(end - at);
            opt.step(r.model.net.params(), grad);
        }
        EpochStats st;
        st.train_mae_mm = 1000.0 * sum / static_cast<double>(order.size());
        if (!split.test.empty()) {
            std::vector<Inputs> tx;
            std::vector<Eigen::Vector3d> ty;
            for (auto i : split.test) {
                tx.push_back(xs[i]);
                ty.push_back(ys[i]);
            }
            st.test_mae_mm = 1000.0 * mae_loss_and_grad(r.model.net, r.model.norm, tx, ty, nullptr);
        }
        r.history.push_back(st);
    }
    return r;
}

inline TrainResult train(const Dataset& ds, const TrainSpec& spec, const NetworkConfig& cfg, unsigned mods) {
    return train(ds, spec, cfg, mods, stratified_split(ds, spec.train_fraction, spec.seed));
}

struct AblationRow {
    std::string model;
    std::string removed;  // "none" for the full model
    unsigned mods = kAllModalities;
    Metrics test;
};

/// Full model plus the four single-modality removals, all on one split.
inline std::vector<AblationRow> run_ablation(const Dataset& ds, const TrainSpec& spec, const NetworkConfig& cfg) {
    const Split split = stratified_split(ds, spec.train_fraction, spec.seed);
    std::vector<AblationRow> rows;
    rows.push_back({"full", "none", kAllModalities, {}});
    for (Modality m : {kGaze, kPose, kObjects, kImage})
        rows.push_back({std::string("-") + modality_name(m), modality_name(m), kAllModalities & ~m, {}});
    for (auto& row : rows) {
        const auto res = train(ds, spec, cfg, row.mods, split);
        row.test = evaluate(res.model, ds, split.test);
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "model,modality_removed,MAE_mm,MSE_mm2,MAPE_pct\n";
    os.setf(std::ios::fixed);
    os.precision(4);
    for (const auto& r : rows)
        os << r.model << ',' << r.removed << ',' << r.test.mae_mm << ',' << r.test.mse_mm2 << ',' << r.test.mape_pct
           << '\n';
    return os.str();
}

// --- model files ------------------------------------------------------------------

inline nlohmann::json model_to_json(const Model& m) {
    const auto& c = m.net.config();
    nlohmann::json j;
    j["config"] = {{"height", c.height},         {"width", c.width},           {"window", c.window},
                   {"objects", c.objects},       {"image_c1", c.image_c1},     {"image_c2", c.image_c2},
                   {"pose_width", c.pose_width}, {"gaze_width", c.gaze_width}, {"object_hidden", c.object_hidden},
                   {"object_width", c.object_width}, {"fusion_width", c.fusion_width}, {"kernel", c.kernel}, {"coord_channels", c.coord_channels}};
    j["modalities"] = m.net.modalities();
    j["params"] = m.net.params();
    j["norm"] = {{"pose_mu", m.norm.pose_mu}, {"pose_sd", m.norm.pose_sd}, {"obj_mu", m.norm.obj_mu},
                 {"obj_sd", m.norm.obj_sd},   {"gaze_mu", m.norm.gaze_mu}, {"gaze_sd", m.norm.gaze_sd},
                 {"label_mu", {m.norm.label_mu.x(), m.norm.label_mu.y(), m.norm.label_mu.z()}},
                 {"label_sd", {m.norm.label_sd.x(), m.norm.label_sd.y(), m.norm.label_sd.z()}}};
    return j;
}

inline Model model_from_json(const nlohmann::json& j) {
    NetworkConfig c;
    const auto& jc = j.at("config");
    c.height = jc.at("height");
    c.width = jc.at("width");
    c.window = jc.at("window");
    c.objects = jc.at("objects");
    c.image_c1 = jc.at("image_c1");
    c.image_c2 = jc.at("image_c2");
    c.pose_width = jc.at("pose_width");
    c.gaze_width = jc.at("gaze_width");
    c.object_hidden = jc.at("object_hidden");
    c.object_width = jc.at("object_width");
    c.fusion_width = jc.at("fusion_width");
    c.kernel = jc.at("kernel");
    c.coord_channels = jc.value("coord_channels", true);
    Model m;
    m.net = Network(c, j.at("modalities").get<unsigned>());
    const auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != m.net.params().size()) throw ShapeMismatch("parameter count");
    m.net.params() = p;
    const auto& n = j.at("norm");
    m.norm.pose_mu = n.at("pose_mu").get<std::vector<double>>();
    m.norm.pose_sd = n.at("pose_sd").get<std::vector<double>>();
    m.norm.obj_mu = n.at("obj_mu").get<std::vector<double>>();
    m.norm.obj_sd = n.at("obj_sd").get<std::vector<double>>();
    m.norm.gaze_mu = n.at("gaze_mu").get<std::vector<double>>();
    m.norm.gaze_sd = n.at("gaze_sd").get<std::vector<double>>();
    const auto mu = n.at("label_mu").get<std::vector<double>>();
    const auto sd = n.at("label_sd").get<std::vector<double>>();
    m.norm.label_mu = {mu[0], mu[1], mu[2]};
    m.norm.label_sd = {sd[0], sd[1], sd[2]};
    return m;
}

}  // namespace teleassist::intent
