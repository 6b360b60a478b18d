#include "teleassist/intent/sample.hpp"
#include "teleassist/intent/trainer.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

using namespace teleassist::intent;

namespace {

NetworkConfig tiny() {
    NetworkConfig c;
    c.height = c.width = 6;
    c.image_c1 = 3;
    c.image_c2 = 4;
    c.pose_width = 2;
    c.gaze_width = 3;
    c.object_hidden = 4;
    c.object_width = 2;
    c.fusion_width = 4;
    c.objects = 2;
    return c;
}

Inputs random_inputs(const NetworkConfig& c, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Inputs x;
    x.image.resize(static_cast<std::size_t>(c.height * c.width * 3));
    for (auto& v : x.image) v = u(rng);
    x.pose.resize(static_cast<std::size_t>(c.window) * 3);
    x.objects.resize(static_cast<std::size_t>(c.objects) * 3);
    x.gaze.resize(static_cast<std::size_t>(c.window) * 12);
    for (auto* v : {&x.pose, &x.objects, &x.gaze})
        for (auto& e : *v) e = n(rng);
    return x;
}

}  // namespace

TEST(Network, MaeGradientMatchesFiniteDifferences) {
    const NetworkConfig c = tiny();
    std::mt19937_64 rng(7);
    std::vector<Inputs> xs{random_inputs(c, rng), random_inputs(c, rng)};
    std::vector<Eigen::Vector3d> labels{{0.3, -0.2, 0.9}, {-0.4, 0.5, 0.1}};
    for (unsigned mods : {kAllModalities, unsigned(kImage), unsigned(kPose | kGaze), unsigned(kObjects)}) {
        Network net(c, mods);
        net.init(9);
        // zero-initialized biases can put a rectifier exactly on its kink; nudge everything off it
        std::normal_distribution<double> jiggle(0.0, 0.05);
        for (auto& w : net.params()) w += jiggle(rng);
        const Normalizer z = Normalizer::identity(c);
        std::vector<double> g(net.params().size(), 0.0);
        mae_loss_and_grad(net, z, xs, labels, &g);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double keep = net.params()[i], h = 1e-6;
            net.params()[i] = keep + h;
            const double fp = mae_loss_and_grad(net, z, xs, labels, nullptr);
            net.params()[i] = keep - h;
            const double fm = mae_loss_and_grad(net, z, xs, labels, nullptr);
            net.params()[i] = keep;
            const double num = (fp - fm) / (2 * h);
            const double den = std::max(std::abs(num) + std::abs(g[i]), 1e-6);
            worst = std::max(worst, std::abs(num - g[i]) / den);
        }
        EXPECT_LT(worst, 1e-4) << "modalities " << mods;
    }
}

TEST(Network, PrunedModalitiesHaveNoParameters) {
    const NetworkConfig c = tiny();
    const Network full(c, kAllModalities), no_img(c, kAllModalities & ~kImage);
    EXPECT_LT(no_img.params().size(), full.params().size());
    EXPECT_EQ(no_img.layout().conv1.out, 0);
    EXPECT_EQ(c.feature_width(kAllModalities) - c.feature_width(kAllModalities & ~kGaze),
              c.gaze_width * c.temporal_out());
    EXPECT_THROW(Network(c, 0u), std::invalid_argument);
}

TEST(Network, ShapeMismatchIsReported) {
    const NetworkConfig c = tiny();
    Network net(c, kAllModalities);
    std::mt19937_64 rng(1);
    Inputs x = random_inputs(c, rng);
    x.gaze.pop_back();
    EXPECT_THROW(net.forward(x), ShapeMismatch);
    // removed modalities are not checked
    Network no_gaze(c, kAllModalities & ~kGaze);
    no_gaze.init(1);
    EXPECT_NO_THROW(no_gaze.forward(x));
}

TEST(Metrics, ArithmeticExamples) {
    const std::vector<Eigen::Vector3d> labels{{0.1, 0.2, 0.3}};
    const auto zero = metrics(labels, labels);
    EXPECT_EQ(zero.mae_mm, 0.0);
    EXPECT_EQ(zero.mse_mm2, 0.0);
    EXPECT_EQ(zero.mape_pct, 0.0);
    const auto m = metrics({labels[0] + Eigen::Vector3d(0.003, 0.004, 0.0)}, labels);
    EXPECT_NEAR(m.mae_mm, 7.0 / 3.0, 1e-9);
    EXPECT_NEAR(m.mse_mm2, 25.0 / 3.0, 1e-9);
    EXPECT_THROW(metrics({}, {}), EmptyDataset);
}

TEST(Metrics, MapeUsesMillimeterFloor) {
    const auto m = metrics({Eigen::Vector3d(0.001, 0.0, 0.0)}, {Eigen::Vector3d::Zero()});
    // 1 mm error over a 1 mm floor on one of three components
    EXPECT_NEAR(m.mape_pct, 100.0 / 3.0, 1e-9);
}

TEST(Training, LearnsAConstant) {
    const NetworkConfig c = tiny();
    std::mt19937_64 rng(3);
    const Inputs x = random_inputs(c, rng);
    Dataset ds;
    for (int i = 0; i < 10; ++i) {
        IntentSample s;
        s.inputs = x;
        s.label = {0.45, -0.1, 0.025};
        s.meta.target = i % 2;
        ds.push_back(s);
    }
    TrainSpec spec;
    spec.seed = 4;
    const auto r = train(ds, spec, c, kAllModalities);
    EXPECT_LT(r.history.back().test_mae_mm, 1.0);
    EXPECT_THROW(train(Dataset{}, spec, c, kAllModalities), EmptyDataset);
}

TEST(Training, DeterministicAndDecreasing) {
    const NetworkConfig c = tiny();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.05);
    Dataset ds;
    for (int i = 0; i < 40; ++i) {
        IntentSample s;
        s.inputs = random_inputs(c, rng);
        // label depends on the inputs so there is something to learn
        s.label = {0.4 + 0.05 * s.inputs.pose[0], 0.05 * s.inputs.gaze[3], 0.02 + 0.01 * s.inputs.objects[1]};
        s.meta.target = i % 4;
        ds.push_back(s);
    }
    TrainSpec spec;
    spec.epochs = 100;
    const auto a = train(ds, spec, c, kAllModalities);
    const auto b = train(ds, spec, c, kAllModalities);
    EXPECT_EQ(a.model.net.params(), b.model.net.params());
    ASSERT_EQ(a.history.size(), 100u);
    EXPECT_LE(a.history.back().train_mae_mm, a.history.front().train_mae_mm);
    for (const auto& h : a.history) {
        EXPECT_TRUE(std::isfinite(h.train_mae_mm));
        EXPECT_TRUE(std::isfinite(h.test_mae_mm));
    }
}

TEST(Split, StratifiedAndDisjoint) {
    Dataset ds(100);
    for (int i = 0; i < 100; ++i) ds[i].meta.target = i % 4;
    const Split s = stratified_split(ds, 0.8, 1);
    EXPECT_EQ(s.train.size(), 80u);
    EXPECT_EQ(s.test.size(), 20u);
    std::vector<int> seen(100, 0);
    for (auto i : s.train) ++seen[i];
    for (auto i : s.test) ++seen[i];
    for (int v : seen) EXPECT_EQ(v, 1);
    int per[4] = {0, 0, 0, 0};
    for (auto i : s.test) ++per[ds[i].meta.target];
    for (int v : per) EXPECT_EQ(v, 5);
    EXPECT_EQ(stratified_split(ds, 0.8, 1).train, s.train);
}

TEST(ModelFile, RoundTripPredictsIdentically) {
    const NetworkConfig c = tiny();
    std::mt19937_64 rng(8);
    Model m;
    m.net = Network(c, kAllModalities);
    m.net.init(2);
    m.norm = Normalizer::identity(c);
    m.norm.label_mu = {0.4, 0.0, 0.02};
    const Model back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    for (int i = 0; i < 10; ++i) {
        const Inputs x = random_inputs(c, rng);
        EXPECT_EQ(m.predict(x), back.predict(x));
    }
}

TEST(Samples, Base64RoundTrip) {
    std::mt19937_64 rng(9);
    for (std::size_t n = 0; n < 40; ++n) {
        std::vector<std::uint8_t> b(n);
        for (auto& v : b) v = static_cast<std::uint8_t>(rng());
        EXPECT_EQ(base64_decode(base64_encode(b)), b);
    }
    EXPECT_EQ(base64_encode({'M', 'a', 'n'}), "TWFu");
    EXPECT_THROW(base64_decode("@@@@"), std::invalid_argument);
}

TEST(Samples, DatasetFileRoundTrip) {
    const NetworkConfig c = tiny();
    std::mt19937_64 rng(10);
    Dataset ds;
    for (int i = 0; i < 5; ++i) {
        IntentSample s;
        s.inputs = random_inputs(c, rng);
        s.inputs.image = quantize_image(s.inputs.image);
        s.label = {0.1 * i, 0.2, 0.3};
        s.meta = {42, static_cast<std::uint64_t>(i), i % 4, false};
        ds.push_back(s);
    }
    const auto path = std::filesystem::temp_directory_path() / "teleassist_ds_test.jsonl";
    write_dataset(path.string(), ds, c.height, c.width);
    const Dataset back = read_dataset(path.string());
    std::filesystem::remove(path);
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(back[i].inputs.image, ds[i].inputs.image);
        EXPECT_EQ(back[i].inputs.pose, ds[i].inputs.pose);
        EXPECT_EQ(back[i].inputs.objects, ds[i].inputs.objects);
        EXPECT_EQ(back[i].inputs.gaze, ds[i].inputs.gaze);
        EXPECT_EQ(back[i].label, ds[i].label);
        EXPECT_EQ(back[i].meta.scene_id, ds[i].meta.scene_id);
    }
}

TEST(Samples, ObjectsAreCanonicallyOrdered) {
    const std::vector<Eigen::Vector3d> a{{0.5, 0.1, 0}, {0.3, 0.2, 0}, {0.3, -0.1, 0}};
    std::vector<Eigen::Vector3d> b(a.rbegin(), a.rend());
    EXPECT_EQ(canonical_objects(a), canonical_objects(b));
    const auto f = canonical_objects(a);
    EXPECT_EQ(f[0], 0.3);
    EXPECT_EQ(f[1], -0.1);
}
