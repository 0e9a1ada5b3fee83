#include <catch2/catch_amalgamated.hpp>

#include "fplab/grad.hpp"
#include "fplab/network.hpp"
#include "fplab/spectral.hpp"
#include "oracles.hpp"

using namespace fplab;

namespace {

Network linear_net(const Mat& w, const Vec& b) {
    return Network({Layer{w, b, Activation::identity}});
}

Network random_net(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts,
                   std::uint64_t seed) {
    Rng rng(seed);
    return Network::random(dims, acts, rng);
}

// Entry-wise gradient agreement with an absolute guard for near-zero entries.
void check_grad_close(const Vec& got, const Vec& want, double rel_tol = 1e-4,
                      double abs_tol = 1e-7) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double diff = std::abs(got[i] - want[i]);
        if (diff > abs_tol) {
            INFO("entry " << i << ": got " << got[i] << " want " << want[i]);
            CHECK(diff / std::max(std::abs(got[i]), std::abs(want[i])) < rel_tol);
        }
    }
}

}  // namespace

TEST_CASE("identity network reproduces its input", "[nncore]") {
    Network net = linear_net(Mat::identity(3), Vec(3, 0.0));
    const Vec x{0.3, -1.2, 5.0};
    const Trajectory t = forward(net, x);
    CHECK(t.states.size() == 2);
    CHECK(t.output() == x);
}

TEST_CASE("relu layer clamps below bias threshold", "[nncore]") {
    Network net({Layer{Mat::identity(2), Vec{-1.0, -1.0}, Activation::relu}});
    CHECK(forward_out(net, {2.0, 0.5}) == Vec{1.0, 0.0});
}

TEST_CASE("softmax head produces a distribution and rejects mid-net use", "[nncore]") {
    Network net = random_net({3, 4, 3}, {Activation::tanh, Activation::softmax}, 11);
    const Vec p = forward_out(net, {0.2, -0.4, 0.9});
    double sum = 0.0;
    for (double v : p) {
        CHECK(v > 0.0);
        sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);

    Layer soft{Mat::identity(3), Vec(3, 0.0), Activation::softmax};
    Layer lin{Mat::identity(3), Vec(3, 0.0), Activation::identity};
    CHECK_THROWS_AS(Network({soft, lin}), std::invalid_argument);
}

TEST_CASE("network validation rejects broken shapes and values", "[nncore]") {
    Layer l1{Mat(3, 2), Vec(3, 0.0), Activation::tanh};
    Layer l2{Mat(2, 4), Vec(2, 0.0), Activation::identity};  // 4 != 3: does not chain
    CHECK_THROWS_AS(Network({l1, l2}), std::invalid_argument);

    Layer bad_bias{Mat(3, 2), Vec(2, 0.0), Activation::tanh};
    CHECK_THROWS_AS(Network({bad_bias}), std::invalid_argument);

    Layer nonfinite{Mat::identity(2), Vec{0.0, std::nan("")}, Activation::identity};
    CHECK_THROWS_AS(Network({nonfinite}), std::invalid_argument);

    Network ok = linear_net(Mat::identity(2), Vec(2, 0.0));
    CHECK_THROWS_AS(forward(ok, {1.0}), std::invalid_argument);                 // dim mismatch
    CHECK_THROWS_AS(forward(ok, {1.0, std::nan("")}), std::invalid_argument);  // non-finite
}

TEST_CASE("trajectory records one state per layer plus the input", "[nncore]") {
    Network net = random_net({2, 8, 8, 2}, {Activation::tanh, Activation::relu,
                                            Activation::identity}, 3);
    const Trajectory t = forward(net, {0.1, 0.2});
    REQUIRE(t.states.size() == 4);
    CHECK(t.input() == Vec{0.1, 0.2});
}

TEST_CASE("jacobian matches finite differences", "[nncore]") {
    struct Case {
        std::vector<std::size_t> dims;
        std::vector<Activation> acts;
    };
    const std::vector<Case> cases = {
        {{3, 5, 3}, {Activation::tanh, Activation::identity}},
        {{2, 6, 6, 2}, {Activation::tanh, Activation::relu, Activation::identity}},
        {{4, 4}, {Activation::softmax}},
        {{3, 7, 4}, {Activation::relu, Activation::softmax}},
    };
    std::uint64_t seed = 100;
    for (const auto& c : cases) {
        Network net = random_net(c.dims, c.acts, seed++);
        Rng rng(seed);
        const Vec x = rng.uniform_vec(c.dims.front(), -1.0, 1.0);
        const Mat j = jacobian(net, x);
        const Mat j_fd = oracles::fd_jacobian(
            [&](const Vec& v) { return forward_out(net, v); }, x, 1e-5);
        for (std::size_t r = 0; r < j.rows(); ++r)
            for (std::size_t cidx = 0; cidx < j.cols(); ++cidx) {
                const double diff = std::abs(j(r, cidx) - j_fd(r, cidx));
                if (diff > 1e-8)
                    CHECK(diff / std::max(std::abs(j(r, cidx)), std::abs(j_fd(r, cidx))) <
                          1e-6);
            }
    }
}

TEST_CASE("jacobian equals the ordered product of layer jacobians", "[nncore]") {
    Network net = random_net({3, 6, 3}, {Activation::tanh, Activation::identity}, 21);
    const Vec x{0.4, -0.2, 0.7};
    const auto js = layer_jacobians(net, x);
    REQUIRE(js.size() == 2);
    const Mat prod = matmul(js[1], js[0]);
    const Mat j = jacobian(net, x);
    for (std::size_t r = 0; r < j.rows(); ++r)
        for (std::size_t c = 0; c < j.cols(); ++c)
            CHECK(std::abs(prod(r, c) - j(r, c)) < 1e-10);
}

TEST_CASE("loss gradients match finite differences", "[nncore]") {
    Rng rng(500);

    SECTION("residual loss") {
        Network net = random_net({3, 8, 3}, {Activation::tanh, Activation::identity}, 31);
        std::vector<Vec> xs;
        for (int i = 0; i < 5; ++i) xs.push_back(rng.uniform_vec(3, -1.0, 1.0));
        const BatchLoss bl = residual_loss(net, xs);
        Network probe = net;
        const Vec g_fd = oracles::fd_gradient(
            [&](const Vec& th) {
                probe.unflatten(th);
                return residual_loss(probe, xs).value;
            },
            net.flatten(), 1e-5);
        check_grad_close(bl.grad, g_fd);
    }

    SECTION("mse loss") {
        Network net = random_net({2, 6, 2}, {Activation::relu, Activation::identity}, 32);
        std::vector<Vec> xs, ys;
        for (int i = 0; i < 4; ++i) {
            xs.push_back(rng.uniform_vec(2, -1.0, 1.0));
            ys.push_back(rng.uniform_vec(2, -1.0, 1.0));
        }
        const BatchLoss bl = mse_loss(net, xs, ys);
        Network probe = net;
        const Vec g_fd = oracles::fd_gradient(
            [&](const Vec& th) {
                probe.unflatten(th);
                return mse_loss(probe, xs, ys).value;
            },
            net.flatten(), 1e-5);
        check_grad_close(bl.grad, g_fd);
    }

    SECTION("cross entropy via softmax head") {
        Network net = random_net({3, 6, 4}, {Activation::tanh, Activation::softmax}, 33);
        std::vector<Vec> xs;
        std::vector<std::size_t> labels;
        for (int i = 0; i < 6; ++i) {
            xs.push_back(rng.uniform_vec(3, -1.0, 1.0));
            labels.push_back(rng.index(4));
        }
        const BatchLoss bl = cross_entropy_loss(net, xs, labels);
        Network probe = net;
        const Vec g_fd = oracles::fd_gradient(
            [&](const Vec& th) {
                probe.unflatten(th);
                return cross_entropy_loss(probe, xs, labels).value;
            },
            net.flatten(), 1e-5);
        check_grad_close(bl.grad, g_fd);

        std::vector<std::size_t> bad = labels;
        bad[0] = 4;  // out of range
        CHECK_THROWS_AS(cross_entropy_loss(net, xs, bad), std::invalid_argument);
    }
}

TEST_CASE("curvature proxy follows the closed-form EMA", "[nncore]") {
    const double beta = 0.9, damping = 1e-8;
    const Vec g{0.5, -2.0, 0.0};

    SECTION("constant gradient") {
        std::vector<Vec> hist(25, g);
        const Vec v = curvature_proxy(hist, beta, damping);
        const double f = 1.0 - std::pow(beta, 25);  // v_T = (1 - beta^T) g^2
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(std::abs(v[i] - (f * g[i] * g[i] + damping)) < 1e-14);
            CHECK(v[i] >= damping);
        }
    }

    SECTION("alternating signs give the same proxy") {
        std::vector<Vec> hist;
        for (int t = 0; t < 25; ++t) hist.push_back(t % 2 ? scalev(g, -1.0) : g);
        const Vec v = curvature_proxy(hist, beta, damping);
        const Vec v_const = curvature_proxy(std::vector<Vec>(25, g), beta, damping);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(v[i] == v_const[i]);
    }
}

TEST_CASE("spectral radius: exact diagonal cases", "[nncore]") {
    CHECK(spectral_radius(Mat::identity(3)) == 1.0);
    CHECK(spectral_radius(Mat::diag({0.5, -0.2, 0.1})) == 0.5);
    CHECK(spectral_radius(Mat(4, 4, 0.0)) == 0.0);
}

TEST_CASE("spectral radius matches the dense eigenvalue oracle", "[nncore]") {
    Rng rng(9001);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 3 + trial % 10;
        Mat m(n, n);
        for (double& v : m.data()) v = rng.normal();
        const double got = spectral_radius(m, 1e-9, 10000);
        const double want = oracles::eigen_spectral_radius(m);
        INFO("trial " << trial << " n " << n);
        CHECK(oracles::rel_err(got, want) < 1e-6);
    }
}

TEST_CASE("spectral radius handles complex pairs and defective blocks", "[nncore]") {
    // scaled rotation: complex pair, |lambda| = s, exact via the 2x2 recurrence
    const double s = 0.73, a = 0.4;
    Mat rot = Mat::from_rows({{s * std::cos(a), -s * std::sin(a)},
                              {s * std::sin(a), s * std::cos(a)}});
    CHECK(std::abs(spectral_radius(rot) - s) < 1e-12);

    // defective Jordan block
    Mat jordan = Mat::from_rows({{1.0, 1.0}, {0.0, 1.0}});
    CHECK(std::abs(spectral_radius(jordan) - 1.0) < 1e-12);

    // nilpotent: iterates collapse, radius 0
    Mat nil = Mat::from_rows({{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {0.0, 0.0, 0.0}});
    CHECK(spectral_radius(nil) == 0.0);
}

TEST_CASE("spectral radius scales homogeneously", "[nncore]") {
    Rng rng(77);
    Mat m(5, 5);
    for (double& v : m.data()) v = rng.normal();
    const double r1 = spectral_radius(m);
    const double r2 = spectral_radius(scale(m, -2.5));
    CHECK(oracles::rel_err(r2, 2.5 * r1) < 1e-8);
}

TEST_CASE("spectral radius reports non-convergence explicitly", "[nncore]") {
    // 3-cycle permutation: eigenvalues 1, exp(+-2pi i/3), all modulus 1.
    Mat perm = Mat::from_rows({{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}});
    CHECK_THROWS_AS(spectral_radius(perm, 1e-9, 300), std::runtime_error);
    const SpectralResult r = spectral_radius_info(perm, 1e-9, 300);
    CHECK_FALSE(r.converged);
}

TEST_CASE("flatten and unflatten round-trip", "[nncore]") {
    Network net = random_net({3, 5, 2}, {Activation::tanh, Activation::identity}, 8);
    const Vec theta = net.flatten();
    CHECK(theta.size() == net.param_count());
    Network other = random_net({3, 5, 2}, {Activation::tanh, Activation::identity}, 9);
    other.unflatten(theta);
    CHECK(other.flatten() == theta);
    CHECK_THROWS_AS(other.unflatten(Vec(3, 0.0)), std::invalid_argument);
}
