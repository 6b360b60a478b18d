// Acceptance run: one PASS/FAIL line per criterion, then a summary line.
// Exit code is the number of failed criteria not named with --expect-fail.
// Usage: acceptance [--expect-fail name]... [config.json]

#include "teleassist/config.hpp"
#include "teleassist/harness.hpp"
#include "teleassist/protocol.hpp"
#include "teleassist/snapshot.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace teleassist;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 3) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

// --- kinematics ---------------------------------------------------------------------

Outcome kinematics() {
    const auto t0 = Clock::now();
    const KinematicModel m;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    double worst_p = 0.0, worst_r = 0.0;
    int missing = 0, singular = 0;
    std::map<std::size_t, int> hist;
    for (int i = 0; i < 1000; ++i) {
        JointVector q;
        for (auto& v : q) v = u(rng);
        const Eigen::Matrix4d target = forward(m, q);
        std::vector<JointVector> sols;
        try {
            sols = inverse(m, target);
        } catch (const Singular&) {
            ++singular;  // reported, not a round-trip target; draw another
            --i;
            continue;
        }
        ++hist[sols.size()];
        double nearest = 1e9;
        for (const auto& s : sols) {
            const Eigen::Matrix4d got = forward(m, s);
            worst_p = std::max(worst_p, (got.topRightCorner<3, 1>() - target.topRightCorner<3, 1>()).norm());
            worst_r = std::max(worst_r, rotation_error(got.topLeftCorner<3, 3>(), target.topLeftCorner<3, 3>()));
            nearest = std::min(nearest, joint_distance2(s, q));
        }
        missing += nearest > 1e-12;
    }
    // branch count over the working region in front of the robot
    std::uniform_real_distribution<double> ux(0.3, 0.55), uy(-0.2, 0.2), uz(0.0, 0.35), tilt(0.0, 0.5);
    int eight = 0;
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Matrix3d r = Eigen::AngleAxisd(u(rng), Eigen::Vector3d::UnitZ()).toRotationMatrix() *
                                  Eigen::AngleAxisd(tilt(rng), Eigen::Vector3d::UnitX()).toRotationMatrix() *
                                  top_down_rotation();
        eight += inverse(m, make_transform(r, {ux(rng), uy(rng), uz(rng)})).size() == 8;
    }
    std::string h;
    for (const auto& [n, c] : hist) h += " " + std::to_string(n) + ":" + std::to_string(c);
    const double secs = seconds_since(t0);
    return {worst_p <= 1e-6 && worst_r <= 1e-6 && missing == 0 && eight == 1000 && secs < 10,
            "joint-space targets: max pos err " + num(worst_p) + " m, max rot err " + num(worst_r) +
                " rad, source branch missing " + std::to_string(missing) + ", singular draws skipped " +
                std::to_string(singular) + ", branch counts" + h +
                "; table-region targets with 8 branches " + std::to_string(eight) + "/1000; " + num(secs) + " s"};
}

// --- admittance ---------------------------------------------------------------------

Outcome admittance() {
    double worst = 0.0;
    for (double M : {0.5, 1.0, 2.0})
        for (double C : {4.0, 8.0, 16.0})
            for (double K : {8.0, 16.0, 32.0}) {
                AdmittanceParams p;
                p.M = M * Eigen::Matrix3d::Identity();
                p.C = C * Eigen::Matrix3d::Identity();
                p.K = K * Eigen::Matrix3d::Identity();
                p.e_max = 1.0;
                AdmittanceState s;
                Eigen::Vector3d e = Eigen::Vector3d::Zero(), v = Eigen::Vector3d::Zero();
                const Eigen::Matrix3d mi = p.M.inverse();
                const double dt = 0.02;
                for (int k = 0; k < 250; ++k) {
                    const double t = k * dt;
                    const Eigen::Vector3d f(0.2 * ((static_cast<int>(t) % 2) ? -1 : 1), 0.1, t < 2.5 ? -0.15 : 0.0);
                    admittance_step(s, p, f, Eigen::Vector3d::Zero(), dt);
                    auto acc = [&](const Eigen::Vector3d& x, const Eigen::Vector3d& xd) -> Eigen::Vector3d {
                        return mi * (f - p.C * xd - p.K * x);
                    };
                    const double h = dt / 100;
                    for (int j = 0; j < 100; ++j) {
                        const Eigen::Vector3d k1x = v, k1v = acc(e, v);
                        const Eigen::Vector3d k2x = v + 0.5 * h * k1v, k2v = acc(e + 0.5 * h * k1x, k2x);
                        const Eigen::Vector3d k3x = v + 0.5 * h * k2v, k3v = acc(e + 0.5 * h * k2x, k3x);
                        const Eigen::Vector3d k4x = v + h * k3v, k4v = acc(e + h * k3x, k4x);
                        e += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
                        v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
                    }
                    worst = std::max(worst, (s.e - e).norm());
                }
            }
    AdmittanceParams p;
    AdmittanceState eq;
    eq.x_d = {0.4, 0.1, 0.2};
    bool still = true;
    for (int k = 0; k < 500; ++k)
        still = still && admittance_step(eq, p, Eigen::Vector3d::Zero(), eq.x_d, 0.02) == eq.x_d;
    p.K = Eigen::Vector3d(16, 24, 40).asDiagonal();
    AdmittanceState sg;
    const Eigen::Vector3d f(0.3, -0.2, 0.5);
    for (int k = 0; k < 2000; ++k) admittance_step(sg, p, f, Eigen::Vector3d::Zero(), 0.02);
    const double gain_err = (sg.e - p.K.inverse() * f).norm();
    return {worst <= 1e-4 && still && gain_err <= 1e-6,
            "max dev from RK4 " + num(worst) + " m over 27 grid points, equilibrium " + (still ? "held" : "moved") +
                ", static gain err " + num(gain_err) + " m"};
}

// --- attraction field ---------------------------------------------------------------

Outcome apf() {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 0.2);
    double cancel = 0.0, mag = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector3d p(n(rng), n(rng), n(rng)), d(n(rng), n(rng), n(rng));
        cancel = std::max(cancel, apf_force(p, {{p + d, 0.1}, {p - d, 0.1}}, 0.02).norm());
        if (d.norm() > 0.02) mag = std::max(mag, std::abs(apf_force(p, {{p + d, 0.1}}, 0.02).norm() - 0.1 / d.norm()));
    }
    return {cancel <= 1e-12 && mag <= 1e-12, "max symmetric residual " + num(cancel) + ", max |F| - k/d " + num(mag)};
}

// --- teleoperation ------------------------------------------------------------------

Outcome teleop() {
    TeleopConfig cfg;
    Clutch c;
    bool still = true;
    for (int i = 0; i < 100; ++i) still = still && c.step(cfg, {0.3, -0.2, 0.5}, 0.02) == Eigen::Vector3d::Zero();

    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 0.3);
    c.engage({}, {}, 0.0);
    Eigen::Vector3d hand = Eigen::Vector3d::Zero(), robot = Eigen::Vector3d::Zero();
    for (int i = 0; i < 5000; ++i) {
        const Eigen::Vector3d v(n(rng), n(rng), n(rng));
        hand += v * 0.02;
        robot += c.step(cfg, v, 0.02);
    }
    const double tele = (robot - cfg.k_m * map_hand_velocity(hand, cfg.bridge)).norm();
    c.disengage(100.0);
    const Eigen::Vector3d before = robot;
    c.engage({0.7, -0.3, 0.2}, robot, 101.0);
    robot += c.step(cfg, Eigen::Vector3d::Zero(), 0.02);
    const bool no_jump = robot == before;

    Clutch s;
    s.engage({}, {}, 0.0);
    const Eigen::Vector3d d = s.step(cfg, {0.1, 0.2, -0.4}, 0.5);
    const bool scale = cfg.k_m == 0.3 && (d - 0.3 * 0.5 * Eigen::Vector3d(-0.1, 0.2, -0.4)).norm() <= 1e-15;
    return {still && no_jump && tele <= 1e-9 && scale,
            std::string("released ") + (still ? "still" : "moved") + ", re-clutch " + (no_jump ? "no jump" : "jumped") +
                ", telescoping err " + num(tele) + ", k_m " + num(cfg.k_m) + (scale ? " applied" : " wrong")};
}

// --- transforms ---------------------------------------------------------------------

Outcome transforms() {
    const Rotation r = convert_quaternion({Eigen::Vector4d(0.5, 0.5, 0.5, 0.5), Frame::VirtualBase}, Frame::RobotBase);
    const bool example = r.q == Eigen::Vector4d(0.5, 0.5, -0.5, -0.5);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n;
    double inv = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Rotation h{Eigen::Vector4d(n(rng), n(rng), n(rng), n(rng)).normalized(), Frame::HumanWorld};
        inv = std::max(inv, (convert_quaternion(convert_quaternion(h, Frame::RobotBase), Frame::HumanWorld).q - h.q).norm());
    }
    std::uniform_real_distribution<double> yaw(-3.1, 3.1), pitch(-1.5, 1.5);
    double euler = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Eigen::Vector3d e(yaw(rng), pitch(rng), yaw(rng));
        const Eigen::Vector3d back = quat_to_euler_zyx(euler_zyx_to_quat(e, Frame::RobotBase));
        for (int k = 0; k < 3; ++k) euler = std::max(euler, std::abs(wrap_angle(back[k] - e[k])));
    }
    return {example && inv <= 1e-12 && euler <= 1e-9,
            std::string("example ") + (example ? "ok" : "wrong") + ", involution err " + num(inv) +
                ", Euler round trip err " + num(euler) + " rad"};
}

// --- intent gradients ---------------------------------------------------------------

Outcome gradients() {
    const auto t0 = Clock::now();
    intent::NetworkConfig c;
    c.height = c.width = 6;
    c.image_c1 = 3;
    c.image_c2 = 4;
    c.pose_width = 2;
    c.gaze_width = 3;
    c.object_hidden = 4;
    c.object_width = 2;
    c.fusion_width = 4;
    c.objects = 2;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<intent::Inputs> xs(2);
    for (auto& x : xs) {
        x.image.resize(static_cast<std::size_t>(c.height * c.width * 3));
        for (auto& v : x.image) v = u(rng);
        x.pose.resize(static_cast<std::size_t>(c.window) * 3);
        x.objects.resize(static_cast<std::size_t>(c.objects) * 3);
        x.gaze.resize(static_cast<std::size_t>(c.window) * 12);
        for (auto* v : {&x.pose, &x.objects, &x.gaze})
            for (auto& e : *v) e = n(rng);
    }
    const std::vector<Eigen::Vector3d> labels{{0.3, -0.2, 0.9}, {-0.4, 0.5, 0.1}};
    intent::Network net(c, intent::kAllModalities);
    net.init(9);
    std::normal_distribution<double> jiggle(0.0, 0.05);
    for (auto& w : net.params()) w += jiggle(rng);  // off the rectifier kinks
    const intent::Normalizer z = intent::Normalizer::identity(c);
    std::vector<double> g(net.params().size(), 0.0);
    intent::mae_loss_and_grad(net, z, xs, labels, &g);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double keep = net.params()[i], h = 1e-6;
        net.params()[i] = keep + h;
        const double fp = intent::mae_loss_and_grad(net, z, xs, labels, nullptr);
        net.params()[i] = keep - h;
        const double fm = intent::mae_loss_and_grad(net, z, xs, labels, nullptr);
        net.params()[i] = keep;
        const double num_g = (fp - fm) / (2 * h);
        worst = std::max(worst, std::abs(num_g - g[i]) / std::max(std::abs(num_g) + std::abs(g[i]), 1e-6));
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 30,
            "max rel err " + num(worst) + " over " + std::to_string(g.size()) + " params, " + num(secs) + " s"};
}

// --- ablation -----------------------------------------------------------------------

Outcome ablation(const RunConfig& rc) {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const intent::Dataset ds = generate_dataset(rc.session, rc.op, rc.intent.dataset, seed);
        intent::TrainSpec ts = rc.intent.train;
        ts.seed = seed;
        const auto rows = intent::run_ablation(ds, ts, rc.intent.network);
        double worst_other = 1e300, most = -1.0;
        std::string most_name;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            worst_other = std::min(worst_other, rows[i].test.mae_mm);
            if (rows[i].test.mae_mm > most) {
                most = rows[i].test.mae_mm;
                most_name = rows[i].model;
            }
        }
        const bool full_min = rows[0].test.mae_mm < worst_other;
        const bool gaze_max = most_name == "-gaze";
        ok = ok && full_min && gaze_max;
        detail += "seed " + std::to_string(seed) + " [n " + std::to_string(ds.size()) + ", misid " +
                  num(nearest_object_misid(ds), 2) + "]";
        for (const auto& r : rows) detail += " " + r.model + "=" + num(r.test.mae_mm, 4);
        detail += (full_min ? "" : " (full not minimal)");
        detail += (gaze_max ? "; " : " (-gaze not maximal); ");
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < 600 && rc.intent.dataset.count >= 400;
    return {ok, detail + num(secs) + " s"};
}

// --- study --------------------------------------------------------------------------

Outcome study(const RunConfig& rc) {
    const auto t_train = Clock::now();
    const intent::Model model = deploy_model(rc);
    const double train_secs = seconds_since(t_train);
    const auto t0 = Clock::now();
    const auto records = run_study(rc.session, rc.op, rc.study, &model);
    const double secs = seconds_since(t0);
    const auto rep = summarize(records);
    const auto& P = rep.pooled;
    const ConditionMetrics on = pool(P.at("mmipn"), P.at("both")), off = pool(P.at("none"), P.at("va"));
    const ConditionMetrics va_on = pool(P.at("va"), P.at("both")), va_off = pool(P.at("none"), P.at("mmipn"));
    const double gain_pp = on.success_rate() - off.success_rate();
    const double dist_cut = 1.0 - va_on.distance / va_off.distance;
    int most_bad = -1;
    for (const auto& [name, m] : P) most_bad = std::max(most_bad, m.bad_blocks);
    const bool baseline_worst = P.at("none").bad_blocks == most_bad;
    std::string bad;
    for (const char* name : {"none", "va", "mmipn", "both"}) bad += std::string(" ") + name + "=" + std::to_string(P.at(name).bad_blocks);
    return {gain_pp >= 5.0 && dist_cut >= 0.05 && baseline_worst && secs < 300,
            "success on " + num(on.success_rate(), 4) + "% vs off " + num(off.success_rate(), 4) + "% (+" +
                num(gain_pp, 3) + " pp), distance VA on " + num(va_on.distance, 4) + " m vs off " +
                num(va_off.distance, 4) + " m (-" + num(100 * dist_cut, 3) + "%), bad blocks" + bad + "; study " +
                num(secs) + " s, model training " + num(train_secs) + " s"};
}

// --- protocol -----------------------------------------------------------------------

Outcome protocol_checks() {
    using namespace protocol;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    int ok = 0;
    const int N = 10000;
    for (int i = 0; i < N; ++i) {
        const auto k = static_cast<Kind>(rng() % 9);
        nlohmann::json p;
        auto vec = [&](int n) {
            auto j = nlohmann::json::array();
            for (int q = 0; q < n; ++q) j.push_back(nd(rng));
            return j;
        };
        switch (k) {
            case Kind::Hello: p = {{"version", 1}, {"role", "local"}}; break;
            case Kind::InputEvent: p = {{"hand_delta", vec(3)}, {"clutch", true}, {"grasp", false}, {"gaze", vec(12)}}; break;
            case Kind::JointCommand: p = {{"q", vec(6)}}; break;
            case Kind::WorldSnapshot: {
                WorldSnapshot s;
                s.objects = spawn_block(SceneConfig{}, rng()).objects;
                p = snapshot_to_json(s);
                break;
            }
            case Kind::GraspRequest: p = {{"pose_window", vec(9)}, {"gaze_window", vec(36)}, {"image", nullptr}}; break;
            case Kind::IntentResult: p = {{"estimate", vec(3)}, {"latency_ms", 249.3}}; break;
            case Kind::ModeChange: p = {{"mode", "direct"}}; break;
            case Kind::MetricsTick: p = {{"metrics", {{"x", nd(rng)}}}}; break;
            case Kind::Bye: p = {{"reason", "bye\n\"x\""}}; break;
        }
        const Message m{k, rng() % 100000, static_cast<double>(i), p};
        ok += decode(encode(m)) == m;
    }

    LatencyChannel ch(56.0, 3.8, 3);
    std::vector<std::string> out;
    double sum = 0.0;
    const int M = 20000;
    for (int i = 0; i < M; ++i) {
        sum += ch.send(std::to_string(i), i * 20.0) - i * 20.0;
        for (auto& s : ch.poll(i * 20.0)) out.push_back(std::move(s));
    }
    for (auto& s : ch.poll(1e12)) out.push_back(std::move(s));
    bool fifo = out.size() == static_cast<std::size_t>(M);
    for (int i = 0; fifo && i < M; ++i) fifo = out[i] == std::to_string(i);
    const double mean = sum / M;

    ModeMachine mm;
    bool inv = true;
    for (int i = 0; i < 100000; ++i) {
        try {
            switch (rng() % 4) {
                case 0: {
                    std::vector<Action> plan(rng() % 4);
                    mm.grasp_request(plan);
                    break;
                }
                case 1: mm.action_complete(); break;
                case 2: mm.append(Action{}); break;
                default: mm.current(); break;
            }
        } catch (const IllegalTransition&) {
        }
        inv = inv && mm.invariant();
    }
    return {ok == N && fifo && std::abs(mean - 56.0) <= 1.0 && inv,
            "round trip " + std::to_string(ok) + "/" + std::to_string(N) + ", FIFO " + (fifo ? "kept" : "broken") +
                ", mean loop latency " + num(mean, 4) + " ms, mode invariant " + (inv ? "held" : "violated") +
                " over 1e5 events"};
}

// --- determinism --------------------------------------------------------------------

Outcome determinism(const RunConfig& rc) {
    auto lines = [](const std::vector<nlohmann::json>& rs) {
        std::string s;
        for (const auto& r : rs) s += r.dump() + "\n";
        return s;
    };
    // a small intent model, trained twice
    DatasetSpec ds_spec = rc.intent.dataset;
    ds_spec.count = 80;
    intent::TrainSpec ts = rc.intent.train;
    ts.epochs = 5;
    const auto ds1 = generate_dataset(rc.session, rc.op, ds_spec, 17), ds2 = generate_dataset(rc.session, rc.op, ds_spec, 17);
    const auto t1 = intent::train(ds1, ts, rc.intent.network, intent::kAllModalities);
    const auto t2 = intent::train(ds2, ts, rc.intent.network, intent::kAllModalities);
    const bool model_same = t1.model.net.params() == t2.model.net.params() &&
                            model_to_json(t1.model).dump() == model_to_json(t2.model).dump();
    const bool table_same = intent::ablation_csv(intent::run_ablation(ds1, ts, rc.intent.network)) ==
                            intent::ablation_csv(intent::run_ablation(ds2, ts, rc.intent.network));

    SessionConfig sc = rc.session;
    sc.blocks = 2;
    StudyConfig st = rc.study;
    st.participants = 4;
    st.threads = 1;
    const std::string a = lines(run_study(sc, rc.op, st, &t1.model));
    st.threads = 3;
    const auto rs = run_study(sc, rc.op, st, &t2.model);
    const std::string b = lines(rs);
    const std::string csv_a = metrics_csv(summarize(run_study(sc, rc.op, st, &t1.model)));
    const std::string csv_b = metrics_csv(summarize(rs));
    const bool records_same = a == b, csv_same = csv_a == csv_b;
    return {model_same && table_same && records_same && csv_same,
            std::string("model ") + (model_same ? "identical" : "differs") + ", ablation table " +
                (table_same ? "identical" : "differs") + ", raw records (" + std::to_string(a.size()) + " bytes) " +
                (records_same ? "identical" : "differ") + ", metrics CSV " + (csv_same ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig rc;
    std::set<std::string> expected;
    try {
        for (int i = 1; i < argc; ++i) {
            const std::string a = argv[i];
            if (a == "--expect-fail" && i + 1 < argc)
                expected.insert(argv[++i]);
            else
                rc = load_config(a);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"kinematics", kinematics},
        {"admittance", admittance},
        {"apf", apf},
        {"teleop", teleop},
        {"transforms", transforms},
        {"intent-gradients", gradients},
        {"ablation-ordering", [&] { return ablation(rc); }},
        {"study-direction", [&] { return study(rc); }},
        {"protocol", protocol_checks},
        {"determinism", [&] { return determinism(rc); }},
    };
    int failed = 0, unexpected = 0;
    for (const auto& [name, fn] : checks) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        unexpected += !o.pass && !expected.count(name);
        std::printf("%s %s: %s%s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                    !o.pass && expected.count(name) ? " [known failure]" : "");
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(checks.size()) - failed, checks.size());
    return unexpected;
}
