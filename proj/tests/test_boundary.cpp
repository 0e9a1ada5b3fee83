#include <catch2/catch_amalgamated.hpp>

#include "fplab/boundary.hpp"
#include "oracles.hpp"

using namespace fplab;

namespace {

Network softmax_net(std::uint64_t seed, std::vector<std::size_t> dims = {2, 8, 2}) {
    Rng rng(seed);
    std::vector<Activation> acts(dims.size() - 1, Activation::tanh);
    acts.back() = Activation::softmax;
    return Network::random(dims, acts, rng);
}

}  // namespace

TEST_CASE("empirical KL decomposition is internally consistent", "[boundary]") {
    Network net = softmax_net(51);
    // repeated inputs with mixed labels so KL != CE
    LabeledBatch batch;
    batch.inputs = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {-0.5, 0.1}, {-0.5, 0.1}};
    batch.labels = {0, 0, 1, 1, 1};
    const KlDecomposition k = empirical_kl(net, batch);
    CHECK(std::abs(k.kl - (k.cross_entropy - k.empirical_entropy)) < 1e-10);
    CHECK(k.kl >= 0.0);
    CHECK(k.empirical_entropy > 0.0);  // the first group is genuinely mixed

    LabeledBatch bad = batch;
    bad.labels[0] = 2;
    CHECK_THROWS_AS(empirical_kl(net, bad), std::invalid_argument);
}

TEST_CASE("stage0 drives the empirical KL toward zero on learnable labels", "[boundary]") {
    Network net = softmax_net(52);
    LabeledBatch batch;
    batch.inputs = {{0.8, 0.1}, {-0.7, 0.3}, {0.2, -0.9}, {-0.3, -0.4}};
    batch.labels = {0, 1, 0, 1};
    const Stage0Result res = stage0_pretrain(net, batch, 400, 0.5);
    REQUIRE(res.curve.size() == 401);
    CHECK(res.curve.back().kl < 0.05);
    CHECK(res.curve.back().kl < 0.1 * res.curve.front().kl);
    for (const KlDecomposition& k : res.curve)
        CHECK(std::abs(k.kl - (k.cross_entropy - k.empirical_entropy)) < 1e-10);
}

TEST_CASE("stage0 cross-entropy floors at ln 2 on unlearnable labels", "[boundary]") {
    Network net = softmax_net(53);
    // every input appears with both labels: optimal predictive is (1/2, 1/2)
    LabeledBatch batch;
    for (const Vec& x : std::vector<Vec>{{0.4, 0.0}, {-0.2, 0.6}, {0.1, -0.5}}) {
        batch.inputs.push_back(x);
        batch.labels.push_back(0);
        batch.inputs.push_back(x);
        batch.labels.push_back(1);
    }
    const Stage0Result res = stage0_pretrain(net, batch, 600, 0.5);
    const double ln2 = std::log(2.0);
    CHECK(res.curve.back().cross_entropy >= ln2 - 1e-9);
    CHECK(res.curve.back().cross_entropy < ln2 + 0.05);
    CHECK(res.curve.back().kl < 0.05);
}

TEST_CASE("stage1 fits vector and class targets", "[boundary]") {
    SECTION("regression") {
        Rng rng(61);
        Network net =
            Network::random({2, 8, 2}, {Activation::tanh, Activation::identity}, rng);
        SftData data;
        data.inputs = {{0.3, 0.1}, {-0.4, 0.5}, {0.6, -0.2}};
        data.targets = {{0.1, -0.1}, {0.2, 0.3}, {-0.3, 0.4}};
        const StageResult res = stage1_sft(net, data, 3000, 0.1);
        REQUIRE(res.base_curve.size() == 3001);
        CHECK(res.base_curve.back() < 0.02 * res.base_curve.front());
        CHECK(res.boundary_curve.empty());
        CHECK(res.warnings.empty());
    }
    SECTION("classification") {
        Network net = softmax_net(62);
        SftData data;
        data.classification = true;
        data.inputs = {{0.8, 0.1}, {-0.7, 0.3}, {0.2, -0.9}};
        data.labels = {0, 1, 1};
        const StageResult res = stage1_sft(net, data, 400, 0.5);
        CHECK(res.base_curve.back() < 0.2 * res.base_curve.front());
    }
}

TEST_CASE("weak boundary value is the weighted reward sum", "[boundary]") {
    Network net({Layer{Mat::identity(2), Vec(2, 0.0), Activation::identity}});
    WeakBoundarySet wb;
    wb.push_back({{1.0, 0.0}, 0.5, Reward::neg_squared_distance({0.0, 0.0})});
    wb.push_back({{0.0, 2.0}, 0.25, Reward::neg_squared_distance({0.0, 1.0})});
    // B = 0.5 * (-1) + 0.25 * (-1) = -0.75
    CHECK(weak_boundary_value(net, wb) == Catch::Approx(-0.75).margin(1e-14));
    CHECK(weak_boundary_value(net, {}) == 0.0);
}

TEST_CASE("weak boundary gradient matches finite differences", "[boundary]") {
    Rng rng(63);
    Network net = Network::random({2, 6, 2}, {Activation::tanh, Activation::identity}, rng);

    WeakBoundarySet wb;
    wb.push_back({{0.4, -0.2}, 0.7, Reward::neg_squared_distance({0.3, 0.3})});
    wb.push_back({{-0.5, 0.1}, -0.2,
                  Reward::custom([](const Vec& h) { return std::sin(h[0]) * h[1]; })});

    const WeakBoundaryEval eval = weak_boundary_eval(net, wb);
    Network probe = net;
    const Vec g_fd = oracles::fd_gradient(
        [&](const Vec& th) {
            probe.unflatten(th);
            return weak_boundary_value(probe, wb);
        },
        net.flatten(), 1e-5);
    for (std::size_t i = 0; i < g_fd.size(); ++i) {
        const double diff = std::abs(eval.grad[i] - g_fd[i]);
        if (diff > 1e-7)
            CHECK(diff / std::max(std::abs(eval.grad[i]), std::abs(g_fd[i])) < 1e-4);
    }
}

TEST_CASE("scaling the strengths scales the boundary gradient linearly", "[boundary]") {
    Rng rng(64);
    Network net = Network::random({2, 5, 2}, {Activation::tanh, Activation::identity}, rng);
    WeakBoundarySet wb;
    wb.push_back({{0.2, 0.3}, 0.4, Reward::neg_squared_distance({0.0, 0.0})});
    WeakBoundarySet scaled = wb;
    scaled[0].eps *= 3.0;
    const WeakBoundaryEval a = weak_boundary_eval(net, wb);
    const WeakBoundaryEval b = weak_boundary_eval(net, scaled);
    for (std::size_t i = 0; i < a.grad.size(); ++i)
        CHECK(std::abs(b.grad[i] - 3.0 * a.grad[i]) < 1e-12);
}

TEST_CASE("stage2 with lambda zero reproduces stage1 bit for bit", "[boundary]") {
    Rng rng(65);
    Network net = Network::random({2, 6, 2}, {Activation::tanh, Activation::identity}, rng);
    SftData data;
    data.inputs = {{0.3, 0.1}, {-0.4, 0.5}};
    data.targets = {{0.1, -0.1}, {0.2, 0.3}};
    WeakBoundarySet wb;
    wb.push_back({{0.9, 0.9}, 1.0, Reward::neg_squared_distance({0.0, 0.0})});

    const StageResult s1 = stage1_sft(net, data, 150, 0.05);
    const StageResult s2 = stage2_perturbed(net, data, wb, 0.0, 150, 0.05);
    CHECK(s1.net.flatten() == s2.net.flatten());
    CHECK(s1.base_curve == s2.base_curve);
    CHECK(s2.boundary_curve.empty());
}

TEST_CASE("stage2 pulls the probe output toward the reward target", "[boundary]") {
    Rng rng(66);
    Network net = Network::random({2, 8, 2}, {Activation::tanh, Activation::identity}, rng);
    // base targets = the net's own initial outputs, so the supervised term
    // anchors the net while the probe reward does the pulling
    SftData data;
    data.inputs = {{0.3, 0.1}, {-0.4, 0.5}, {0.5, -0.5}};
    for (const Vec& x : data.inputs) data.targets.push_back(forward_out(net, x));
    const Vec probe{0.8, -0.8};
    const Vec target{0.4, 0.4};
    WeakBoundarySet wb;
    wb.push_back({probe, 1.0, Reward::neg_squared_distance(target)});

    const StageResult res = stage2_perturbed(net, data, wb, 0.4, 300, 0.02);
    REQUIRE(res.boundary_curve.size() == 301);
    // B = -distance^2, so the distance shrinking means B rising. The base
    // loss shares parameters with the probe, so allow sub-1e-6 jitter per
    // step while requiring a strict overall decrease.
    CHECK(res.boundary_curve.back() > res.boundary_curve.front());
    for (std::size_t t = 0; t + 1 < res.boundary_curve.size(); ++t)
        CHECK(res.boundary_curve[t + 1] >= res.boundary_curve[t] - 1e-6);
    const double d_before = -res.boundary_curve.front();
    const double d_after = -res.boundary_curve.back();
    CHECK(d_after < d_before);
}

TEST_CASE("the weakness guard warns but never fails the run", "[boundary]") {
    Rng rng(67);
    Network net = Network::random({2, 5, 2}, {Activation::tanh, Activation::identity}, rng);
    SftData data;
    data.inputs = {{0.1, 0.1}};
    data.targets = {{0.1, 0.1}};  // already close: tiny base loss
    WeakBoundarySet wb;
    wb.push_back({{0.5, 0.5}, 2.0, Reward::neg_squared_distance({5.0, 5.0})});

    const StageResult res = stage2_perturbed(net, data, wb, 10.0, 20, 1e-4);
    CHECK_FALSE(res.warnings.empty());
    CHECK(res.warnings.front().boundary_magnitude >
          0.1 * std::abs(res.warnings.front().base_loss));
    CHECK_FALSE(res.warnings.front().text().empty());
}

TEST_CASE("unified loss corners reproduce the pure stage losses exactly", "[boundary]") {
    Network net = softmax_net(68);
    LabeledBatch batch;
    batch.inputs = {{0.5, 0.5}, {0.5, 0.5}, {-0.5, 0.1}};
    batch.labels = {0, 1, 1};
    const IntentionSpec intent{{0.2, -0.2}, {1.0, 0.0}};

    CHECK(unified_loss(net, batch, {1.0, 0.0}, intent) == empirical_kl(net, batch).kl);
    CHECK(unified_loss(net, batch, {0.0, 0.0}, intent) ==
          cross_entropy_loss(net, batch.inputs, batch.labels).value);

    const double kl = empirical_kl(net, batch).kl;
    const double ce = cross_entropy_loss(net, batch.inputs, batch.labels).value;
    const Vec out = forward_out(net, intent.probe);
    const double c = squared_distance(out, intent.target);
    const double third = 1.0 / 3.0;
    const double blend = unified_loss(net, batch, {third, third}, intent);
    CHECK(std::abs(blend - (third * kl + third * c + (1.0 - 2.0 * third) * ce)) < 1e-12);

    CHECK_THROWS_AS(unified_loss(net, batch, {-0.1, 0.0}, intent), std::invalid_argument);
    CHECK_THROWS_AS(unified_loss(net, batch, {0.7, 0.5}, intent), std::invalid_argument);
}

TEST_CASE("contrastive loss closed forms", "[boundary]") {
    const Vec anchor{0.0, 0.0};

    SECTION("single negative at squared distance D") {
        for (const double d : {0.5, 2.0, 9.0}) {
            const Vec neg{std::sqrt(d), 0.0};
            const double loss = contrastive_loss(anchor, anchor, {neg});
            CHECK(std::abs(loss - std::log(1.0 + std::exp(-d))) < 1e-12);
        }
    }

    SECTION("equidistant positive and negative give ln 2") {
        const Vec pos{1.0, 0.0};
        const Vec neg{0.0, 1.0};
        CHECK(std::abs(contrastive_loss(anchor, pos, {neg}) - std::log(2.0)) < 1e-12);
    }

    SECTION("k equidistant negatives give ln(k+1)") {
        const Vec pos{1.0, 0.0};
        const std::vector<Vec> negs{{0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}};
        CHECK(std::abs(contrastive_loss(anchor, pos, negs) - std::log(4.0)) < 1e-12);
    }

    SECTION("permutation invariance") {
        Rng rng(69);
        std::vector<Vec> negs;
        for (int i = 0; i < 6; ++i) negs.push_back(rng.uniform_vec(2, -2.0, 2.0));
        const Vec pos{0.3, -0.1};
        const double a = contrastive_loss(anchor, pos, negs);
        std::vector<Vec> perm{negs[4], negs[0], negs[5], negs[2], negs[1], negs[3]};
        const double b = contrastive_loss(anchor, pos, perm);
        CHECK(std::abs(a - b) < 1e-12);
    }

    SECTION("closer positives strictly lower the loss") {
        const std::vector<Vec> negs{{1.5, 0.0}};
        const double far = contrastive_loss(anchor, {1.0, 0.0}, negs);
        const double near = contrastive_loss(anchor, {0.5, 0.0}, negs);
        CHECK(near < far);
    }

    SECTION("extreme gaps stay finite") {
        CHECK(std::isfinite(contrastive_loss(anchor, {100.0, 0.0}, {{0.0, 0.0}})));
        const double tiny = contrastive_loss(anchor, {0.0, 0.0}, {{100.0, 0.0}});
        CHECK(tiny >= 0.0);
        CHECK(tiny < 1e-12);
    }

    SECTION("custom metric") {
        const auto l1 = [](const Vec& a, const Vec& b) {
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
            return s;
        };
        const double loss = contrastive_loss(anchor, {1.0, 1.0}, {{2.0, 2.0}}, l1);
        CHECK(std::abs(loss - std::log(1.0 + std::exp(2.0 - 4.0))) < 1e-12);
    }

    CHECK_THROWS_AS(contrastive_loss(anchor, anchor, {}), std::invalid_argument);
}
