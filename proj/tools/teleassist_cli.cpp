#include "teleassist/config.hpp"
#include "teleassist/dataset.hpp"
#include "teleassist/harness.hpp"
#include "teleassist/intent/trainer.hpp"
#include "teleassist/serve.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace teleassist;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

struct Common {
    std::string config, out = "out", condition, dataset;
    std::optional<std::uint64_t> seed;
    std::optional<int> participants;
    int threads = 0;
};

RunConfig load(const Common& c) {
    RunConfig rc = c.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(c.config);
    if (c.seed) {
        rc.study.seed = *c.seed;
        rc.intent.train.seed = *c.seed;
    }
    if (c.participants) {
        if (*c.participants < 1) throw ConfigError("study.participants", "must be positive");
        rc.study.participants = *c.participants;
    }
    if (c.threads > 0) rc.study.threads = c.threads;
    if (!c.condition.empty()) {
        rc.study.only = Condition::parse(c.condition);
        if (!rc.study.only) throw ConfigError("condition", "expected none, va, mmipn or both");
    }
    return rc;
}

fs::path out_dir(const Common& c) {
    fs::create_directories(c.out);
    return c.out;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << s;
}

intent::Dataset dataset_for(const Common& c, const RunConfig& rc) {
    if (!c.dataset.empty()) return intent::read_dataset(c.dataset);
    return generate_dataset(rc.session, rc.op, rc.intent.dataset, rc.study.seed);
}

int run_study_cmd(const Common& c) {
    const RunConfig rc = load(c);
    const auto dir = out_dir(c);
    std::optional<intent::Model> model;
    const bool need = !rc.study.only || rc.study.only->mmipn;
    if (need) {
        std::cerr << "preparing intent model\n";
        model = deploy_model(rc);
        write_text(dir / "model.json", intent::model_to_json(*model).dump());
    }
    const auto records = run_study(rc.session, rc.op, rc.study, model ? &*model : nullptr);
    std::ofstream raw(dir / "records.jsonl", std::ios::binary);
    for (const auto& r : records) raw << r.dump() << '\n';
    const std::string csv = metrics_csv(summarize(records));
    write_text(dir / "summary.csv", csv);
    // pooled rows only on stdout
    std::istringstream is(csv);
    for (std::string line; std::getline(is, line);)
        if (line.rfind("condition", 0) == 0 || line.find(",all,") != std::string::npos) std::cout << line << '\n';
    return 0;
}

int gen_dataset_cmd(const Common& c) {
    const RunConfig rc = load(c);
    const auto dir = out_dir(c);
    const auto ds = generate_dataset(rc.session, rc.op, rc.intent.dataset, rc.study.seed);
    intent::write_dataset((dir / "dataset.jsonl").string(), ds, rc.session.view.height, rc.session.view.width);
    std::cout << ds.size() << " samples, nearest-object misidentification "
              << fmt(100.0 * nearest_object_misid(ds)) << " %\n";
    return 0;
}

int train_cmd(const Common& c) {
    const RunConfig rc = load(c);
    const auto dir = out_dir(c);
    const auto ds = dataset_for(c, rc);
    const auto r = intent::train(ds, rc.intent.train, rc.intent.network, intent::kAllModalities);
    write_text(dir / "model.json", intent::model_to_json(r.model).dump());
    std::ostringstream h;
    h << "epoch,train_MAE_mm,test_MAE_mm\n";
    for (std::size_t e = 0; e < r.history.size(); ++e)
        h << e + 1 << ',' << fmt(r.history[e].train_mae_mm) << ',' << fmt(r.history[e].test_mae_mm) << '\n';
    write_text(dir / "history.csv", h.str());
    const auto m = intent::evaluate(r.model, ds, r.split.test);
    std::cout << "test MAE " << fmt(m.mae_mm) << " mm, MSE " << fmt(m.mse_mm2) << " mm2, MAPE " << fmt(m.mape_pct)
              << " %\n";
    return 0;
}

int ablation_cmd(const Common& c) {
    const RunConfig rc = load(c);
    const auto dir = out_dir(c);
    const auto ds = dataset_for(c, rc);
    const std::string csv = intent::ablation_csv(intent::run_ablation(ds, rc.intent.train, rc.intent.network));
    write_text(dir / "ablation.csv", csv);
    std::cout << csv;
    return 0;
}

int serve_cmd(const Common& c, bool fast) {
    RunConfig rc = load(c);
    apply_env(rc.serve);
    std::optional<intent::Model> model;
    if (!rc.intent.model_path.empty()) model = deploy_model(rc);
    serve::ServeOptions opt;
    opt.realtime = !fast;
    if (rc.study.only) opt.condition = *rc.study.only;
    if (opt.condition.mmipn && !model) std::cerr << "warning: no intent.model_path, grasps fall back to vertical\n";
    serve::Listener l(rc.serve.bind, rc.serve.port);
    std::cout << "listening on " << rc.serve.bind << ':' << l.port() << std::endl;
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    serve::serve_forever(l, rc, model ? &*model : nullptr, opt, g_stop);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"shared-control teleoperation study simulator"};
    app.require_subcommand(1);
    Common c;
    auto common = [&](CLI::App* s) {
        s->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
        s->add_option("--seed", c.seed, "master seed");
        s->add_option("--out", c.out, "output directory");
        s->add_option("--participants", c.participants, "synthetic participants");
        s->add_option("--condition", c.condition, "restrict to one condition")
            ->check(CLI::IsMember({"none", "va", "mmipn", "both"}));
    };
    auto* study = app.add_subcommand("run-study", "run the four-condition study and write records and metrics");
    common(study);
    study->add_option("--threads", c.threads, "parallel sessions");
    auto* train = app.add_subcommand("train-intent", "train the intent network");
    common(train);
    train->add_option("--dataset", c.dataset, "dataset file (generated when omitted)");
    auto* abl = app.add_subcommand("ablation", "modality ablation table");
    common(abl);
    abl->add_option("--dataset", c.dataset, "dataset file (generated when omitted)");
    auto* gen = app.add_subcommand("gen-dataset", "generate an intent dataset from baseline sessions");
    common(gen);
    auto* srv = app.add_subcommand("serve", "open the protocol endpoint for an interactive console");
    common(srv);
    bool fast = false;
    srv->add_flag("--fast", fast, "do not pace ticks against the wall clock");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*study) return run_study_cmd(c);
        if (*train) return train_cmd(c);
        if (*abl) return ablation_cmd(c);
        if (*gen) return gen_dataset_cmd(c);
        if (*srv) return serve_cmd(c, fast);
    } catch (const ConfigError& e) {
        std::cerr << "config error at " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
