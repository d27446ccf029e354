#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "ttcast/cnn.hpp"

using namespace ttcast;

namespace {

Grid counting_window() {
    Grid w(3, 3);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            w(r, c) = static_cast<double>(r * 3 + c + 1); // 1..9
    return w;
}

DidacticCnnParams fixed_params() {
    DidacticCnnParams p;
    p.filter = {1.0, 2.0, 3.0, 4.0};
    p.conv_biases = {0.1, 0.2, 0.3, 0.4};
    p.out_weights = {1.0, -1.0, 0.5, 2.0};
    p.out_bias = 0.25;
    return p;
}

} // namespace

TEST_CASE("forward pass against hand-worked numbers") {
    const auto fwd = didactic_forward(counting_window(), fixed_params());
    // Each hidden unit reads its 2x2 patch with the shared filter plus its
    // own bias; worked out longhand from the 1..9 window.
    CHECK(fwd.hidden[0] == Catch::Approx(35.1).epsilon(1e-14));
    CHECK(fwd.hidden[1] == Catch::Approx(65.2).epsilon(1e-14));
    CHECK(fwd.hidden[2] == Catch::Approx(45.3).epsilon(1e-14));
    CHECK(fwd.hidden[3] == Catch::Approx(75.4).epsilon(1e-14));
    CHECK(fwd.prediction == Catch::Approx(143.6).epsilon(1e-14));
}

TEST_CASE("forward pass validates the window") {
    const auto p = fixed_params();
    CHECK_THROWS_AS(didactic_forward(Grid(2, 3), p), config_error);
    CHECK_THROWS_AS(didactic_forward(Grid(3, 4), p), config_error);
    Grid bad = counting_window();
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(didactic_forward(bad, p), config_error);
}

TEST_CASE("hidden units equal the explicit dense form") {
    // The two-layer net with a shared 2x2 filter is algebraically a dense
    // 4x9 map whose matrix repeats the four weights in a fixed pattern. The
    // dense oracle writes that matrix out literally; both forms must agree
    // to near machine precision over random inputs.
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        const Grid window = oracles::random_grid(rng, 3, 3);
        const DidacticCnnParams p = oracles::random_didactic(rng);
        const auto fwd = didactic_forward(window, p);
        const auto ref = oracles::dense_didactic_forward(window, p);
        for (std::size_t k = 0; k < 4; ++k) {
            const std::vector<double> a{fwd.hidden[k]}, b{ref.hidden[k]};
            CHECK(oracles::max_rel_err(a, b) < 1e-12);
        }
        const std::vector<double> a{fwd.prediction}, b{ref.prediction};
        CHECK(oracles::max_rel_err(a, b) < 1e-12);
    }
}

TEST_CASE("the fourth hidden unit reads the bottom-middle cell") {
    // Regression pin for an easy transcription slip: h4's second term pairs
    // filter weight 2 with window cell (2,1), not (1,1) over again. Make the
    // two cells wildly different so any mix-up shows.
    Grid w(3, 3, 0.0);
    w(1, 1) = 1000.0;
    w(2, 1) = -7.0;
    DidacticCnnParams p;
    p.filter = {0.0, 1.0, 0.0, 0.0}; // isolate the second filter weight
    const auto fwd = didactic_forward(w, p);
    CHECK(fwd.hidden[3] == -7.0);   // h4 pairs it with (2,1)
    CHECK(fwd.hidden[0] == 0.0);    // h1 pairs it with (1,0)
    CHECK(fwd.hidden[1] == 0.0);    // h2 pairs it with (2,0)
    CHECK(fwd.hidden[2] == 1000.0); // h3 pairs it with (1,1)
}

TEST_CASE("loss is half squared error") {
    CHECK(didactic_loss(3.0, 3.0) == 0.0);
    CHECK(didactic_loss(5.0, 3.0) == 2.0);
    CHECK(didactic_loss(3.0, 5.0) == 2.0);
    CHECK(didactic_loss(0.5, 0.3) == Catch::Approx(0.02));
}

TEST_CASE("analytic gradients match finite differences over random triples") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> target(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Grid window = oracles::random_grid(rng, 3, 3);
        const DidacticCnnParams p = oracles::random_didactic(rng);
        const double t = target(rng);

        const auto flat = oracles::didactic_flat(p);
        const auto analytic = didactic_gradients(window, t, p).flat();
        const auto fd = oracles::fd_gradient(
            [&](const std::vector<double>& v) {
                const auto probe = oracles::didactic_unflat(v);
                return didactic_loss(didactic_forward(window, probe).prediction, t);
            },
            flat);
        CHECK(oracles::max_rel_err({analytic.begin(), analytic.end()}, fd) < 1e-6);
    }
}

TEST_CASE("gradient structure follows the residual") {
    const Grid window = counting_window();
    const auto p = fixed_params();
    const double target = 100.0;
    const auto fwd = didactic_forward(window, p);
    const auto g = didactic_gradients(window, target, p);
    CHECK(g.delta == Catch::Approx(fwd.prediction - target));
    CHECK(g.out_bias == g.delta);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(g.out_weights[k] == Catch::Approx(g.delta * fwd.hidden[k]));
        CHECK(g.conv_biases[k] == Catch::Approx(g.delta * p.out_weights[k]));
    }
}

TEST_CASE("one gradient step moves all parameters at once") {
    const Grid window = counting_window();
    auto p = fixed_params();
    p.learning_rate = 0.001;
    const double target = 100.0;

    const auto g = didactic_gradients(window, target, p);
    const auto next = didactic_sgd_step(window, target, p);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(next.filter[i] == p.filter[i] - 0.001 * g.filter[i]);
        CHECK(next.conv_biases[i] == p.conv_biases[i] - 0.001 * g.conv_biases[i]);
        CHECK(next.out_weights[i] == p.out_weights[i] - 0.001 * g.out_weights[i]);
    }
    CHECK(next.out_bias == p.out_bias - 0.001 * g.out_bias);
    CHECK(next.learning_rate == 0.001);

    // With a small enough step the residual must shrink; the counting window
    // has gradients in the thousands, so keep the rate tiny here.
    auto careful = p;
    careful.learning_rate = 1e-6;
    const auto g2 =
        didactic_gradients(window, target, didactic_sgd_step(window, target, careful));
    CHECK(std::abs(g2.delta) < std::abs(g.delta));
}

TEST_CASE("an overflowing update reports divergence") {
    DidacticCnnParams p = fixed_params();
    p.filter[0] = 1e308;
    p.out_weights[0] = 1e308;
    p.learning_rate = 1.0;
    CHECK_THROWS_AS(didactic_sgd_step(counting_window(), 0.0, p), divergence_error);
}

TEST_CASE("training applies per-sample updates in order") {
    std::mt19937_64 rng(99);
    auto samples = oracles::random_samples(rng, 2, 3, 3);
    DidacticCnnParams init = oracles::random_didactic(rng);
    init.learning_rate = 0.01;

    const auto result = didactic_train(samples, init, 1);
    const auto manual = didactic_sgd_step(
        samples[1].window, samples[1].target,
        didactic_sgd_step(samples[0].window, samples[0].target, init));
    CHECK(result.params.filter == manual.filter);
    CHECK(result.params.conv_biases == manual.conv_biases);
    CHECK(result.params.out_weights == manual.out_weights);
    CHECK(result.params.out_bias == manual.out_bias);
    CHECK(result.epoch_mean_loss.size() == 1);
}

TEST_CASE("training reduces loss on a learnable set") {
    std::mt19937_64 rng(100);
    const auto samples = oracles::random_samples(rng, 30, 3, 3);
    DidacticCnnParams init = oracles::random_didactic(rng);
    init.learning_rate = 0.01;
    const auto result = didactic_train(samples, init, 60);
    REQUIRE(result.epoch_mean_loss.size() == 60);
    CHECK(result.epoch_mean_loss.back() < result.epoch_mean_loss.front());
    CHECK(std::isfinite(result.epoch_mean_loss.back()));
}

TEST_CASE("a reckless learning rate diverges with the epoch recorded") {
    std::mt19937_64 rng(101);
    const auto samples = oracles::random_samples(rng, 10, 3, 3);
    DidacticCnnParams init = oracles::random_didactic(rng);
    init.learning_rate = 1e6;
    CHECK_THROWS_AS(didactic_train(samples, init, 100), divergence_error);
    CHECK_THROWS_AS(didactic_train({}, init, 10), data_error);
}

TEST_CASE("thirteen parameters versus a fully dense equivalent") {
    CHECK(DidacticCnnParams::parameter_count == 13);
    // Untying every connection in the same two-layer shape would need a full
    // 4x9 weight matrix plus the four hidden biases and four output weights.
    const std::size_t dense_equivalent = 4 * 9 + 4 + 4;
    CHECK(dense_equivalent == 44);
    CHECK(DidacticCnnParams::parameter_count < dense_equivalent);
}

TEST_CASE("generic convolution matches the quadruple-loop oracle") {
    std::mt19937_64 rng(555);
    std::uniform_int_distribution<std::size_t> dim(2, 6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Grid in = oracles::random_grid(rng, dim(rng), dim(rng));
        std::array<double, 4> kernel;
        for (double& k : kernel) k = u(rng);
        const auto mode = trial % 2 == 0 ? BiasMode::Shared : BiasMode::Untied;
        std::vector<double> biases(
            mode == BiasMode::Shared ? 1 : (in.rows() - 1) * (in.cols() - 1));
        for (double& b : biases) b = u(rng);

        const Grid got = conv2d_valid(in, kernel, biases, mode);
        const Grid want = oracles::conv_oracle(in, kernel, biases, mode);
        REQUIRE(got.same_shape(want));
        CHECK(oracles::max_rel_err(got.data(), want.data()) < 1e-12);
    }
}

TEST_CASE("generic convolution validates shapes and bias counts") {
    const std::array<double, 4> kernel{1.0, 0.0, 0.0, 0.0};
    const std::vector<double> one{0.0};
    CHECK_THROWS_AS(conv2d_valid(Grid(1, 5), kernel, one, BiasMode::Shared),
                    config_error);
    const std::vector<double> three(3, 0.0);
    CHECK_THROWS_AS(conv2d_valid(Grid(3, 3), kernel, three, BiasMode::Untied),
                    config_error);
    CHECK_THROWS_AS(conv2d_valid(Grid(3, 3), kernel, three, BiasMode::Shared),
                    config_error);
    CHECK_NOTHROW(conv2d_valid(Grid(3, 3), kernel, std::vector<double>(4, 0.0),
                               BiasMode::Untied));
}

TEST_CASE("the hand-written net is the generic convolution on its side") {
    // Hidden units run segment-offset first while the window stores segments
    // as rows, so the generic row-major convolution sees the transposed
    // window. Identical operation order makes the match exact, not just
    // close.
    std::mt19937_64 rng(777);
    for (int trial = 0; trial < 200; ++trial) {
        const Grid window = oracles::random_grid(rng, 3, 3);
        const DidacticCnnParams p = oracles::random_didactic(rng);

        Grid transposed(3, 3);
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c) transposed(r, c) = window(c, r);

        const Grid conv = conv2d_valid(transposed, p.filter, p.conv_biases,
                                       BiasMode::Untied);
        const auto fwd = didactic_forward(window, p);
        REQUIRE(conv.size() == 4);
        for (std::size_t k = 0; k < 4; ++k) CHECK(conv.data()[k] == fwd.hidden[k]);
    }
}

TEST_CASE("pooling matches the padded-block oracle") {
    std::mt19937_64 rng(888);
    std::uniform_int_distribution<std::size_t> dim(1, 7);
    for (int trial = 0; trial < 60; ++trial) {
        const Grid in = oracles::random_grid(rng, dim(rng), dim(rng));
        for (const auto mode : {PoolMode::Max, PoolMode::Mean}) {
            const Grid got = pool(in, mode);
            const Grid want = oracles::pool_oracle(in, mode);
            REQUIRE(got.same_shape(want));
            CHECK(oracles::max_rel_err(got.data(), want.data()) < 1e-12);
        }
    }
}

TEST_CASE("pooling hand cases including edge replication") {
    Grid square(2, 2);
    square(0, 0) = 1.0;
    square(0, 1) = 2.0;
    square(1, 0) = 3.0;
    square(1, 1) = 4.0;
    CHECK(pool(square, PoolMode::Max).data()[0] == 4.0);
    CHECK(pool(square, PoolMode::Mean).data()[0] == 2.5);

    Grid strip(1, 3);
    strip(0, 0) = 1.0;
    strip(0, 1) = 2.0;
    strip(0, 2) = 3.0;
    const Grid mx = pool(strip, PoolMode::Max);
    REQUIRE(mx.cols() == 2);
    CHECK(mx(0, 0) == 2.0);
    CHECK(mx(0, 1) == 3.0); // replicated edge cell fills the block
    const Grid mn = pool(strip, PoolMode::Mean);
    CHECK(mn(0, 0) == Catch::Approx(1.5));
    CHECK(mn(0, 1) == Catch::Approx(3.0));

    CHECK_THROWS_AS(pool(Grid(), PoolMode::Max), config_error);
}
