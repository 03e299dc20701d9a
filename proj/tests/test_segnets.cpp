#include <doctest.h>

#include <cmath>
#include <random>

#include "antn/grad_check.hpp"
#include "antn/segnets.hpp"
#include "support.hpp"

using namespace antn;
using namespace antn::testing;

namespace {

MiniUNetSpec small_spec(int classes = 4) {
    MiniUNetSpec s;
    s.base_filters = 4;
    s.num_classes = classes;
    return s;
}

void set_head(ParamStore& ps, double weight, double bias) {
    const std::size_t head = ps.slot_count() - 1;
    for (double& w : ps.weights(head)) w = weight;
    for (double& b : ps.bias(head)) b = bias;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

} // namespace

TEST_SUITE("segnets") {

TEST_CASE("clean predictions are per-pixel distributions") {
    std::mt19937_64 rng(1);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const CleanNet net(small_spec(3 + static_cast<int>(seed % 2)), seed);
        const ProbabilityField p = net.predict(random_tensor(rng, 1, 8, 6, 3, 0.0, 1.0));
        REQUIRE(p.h == 8);
        REQUIRE(p.w == 6);
        REQUIRE(p.c == net.classes());
        for (std::size_t px = 0; px < p.pixels(); ++px) {
            double s = 0.0;
            for (double v : p.pixel(px)) s += v;
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("zero-weight clean head predicts uniform") {
    std::mt19937_64 rng(2);
    CleanNet net(small_spec(4), 3);
    set_head(net.params(), 0.0, 0.0);
    for (double v : net.predict(random_tensor(rng, 1, 4, 4, 3, 0.0, 1.0)).data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("identical images give identical outputs") {
    std::mt19937_64 rng(3);
    const CleanNet net(small_spec(), 4);
    const Tensor4 x = random_tensor(rng, 1, 8, 8, 3, 0.0, 1.0);
    const Tensor4 y = x;
    CHECK(net.predict(x).data == net.predict(y).data);
}

TEST_CASE("odd image dimensions are rejected") {
    const CleanNet net(small_spec(), 5);
    CHECK_THROWS_AS((void)net.predict(Tensor4::image(7, 8, 3)), ConfigError);
    const TransitionNet t(small_spec(), ReadoutMode::row_softmax, 5);
    CHECK_THROWS_AS((void)t.predict(Tensor4::image(8, 5, 3)), ConfigError);
}

TEST_CASE("spec validation") {
    MiniUNetSpec s = small_spec();
    s.num_classes = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.base_filters = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("transition outputs are row-stochastic in both readout modes") {
    std::mt19937_64 rng(6);
    for (ReadoutMode mode : {ReadoutMode::row_softmax, ReadoutMode::uniform_remainder}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const int C = 2 + static_cast<int>(seed);
            const TransitionNet net(small_spec(C), mode, seed);
            const Tensor4 x = random_tensor(rng, 1, 6, 8, 3, 0.0, 1.0);
            const LabelField obs = random_labels(rng, 6, 8, C);
            const TransitionField tf = net.predict(x, &obs);
            REQUIRE(tf.classes == C);
            REQUIRE(tf.pixels() == 48);
            for (std::size_t p = 0; p < tf.pixels(); ++p)
                for (int y = 0; y < C; ++y) {
                    double s = 0.0;
                    for (int k = 0; k < C; ++k) {
                        CHECK(tf.at(p, y, k) > 0.0);
                        CHECK(tf.at(p, y, k) < 1.0);
                        s += tf.at(p, y, k);
                    }
                    CHECK(std::abs(s - 1.0) < 1e-12);
                }
        }
    }
}

TEST_CASE("uniform-remainder readout needs the observed labels") {
    std::mt19937_64 rng(7);
    const TransitionNet net(small_spec(), ReadoutMode::uniform_remainder, 1);
    CHECK_THROWS_AS((void)net.predict(random_tensor(rng, 1, 4, 4, 3)), ConfigError);
}

TEST_CASE("zero-weight transition head, row-softmax: every row uniform") {
    std::mt19937_64 rng(8);
    TransitionNet net(small_spec(3), ReadoutMode::row_softmax, 2);
    set_head(net.params(), 0.0, 0.0);
    for (double v : net.predict(random_tensor(rng, 1, 4, 4, 3)).data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("uniform-remainder with p = 1/C gives a uniform row") {
    std::mt19937_64 rng(9);
    TransitionNet net(small_spec(4), ReadoutMode::uniform_remainder, 2);
    set_head(net.params(), 0.0, logit(0.25));
    const LabelField obs = random_labels(rng, 4, 4, 4);
    for (double v : net.predict(random_tensor(rng, 1, 4, 4, 3), &obs).data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("uniform-remainder with p = 0.7, C = 4 spreads 0.1 over the other columns") {
    std::mt19937_64 rng(10);
    TransitionNet net(small_spec(4), ReadoutMode::uniform_remainder, 2);
    set_head(net.params(), 0.0, logit(0.7));
    const LabelField obs = random_labels(rng, 4, 4, 4);
    const TransitionField tf = net.predict(random_tensor(rng, 1, 4, 4, 3), &obs);
    for (std::size_t p = 0; p < tf.pixels(); ++p)
        for (int y = 0; y < 4; ++y)
            for (int k = 0; k < 4; ++k) {
                const double expect = k == obs.labels[p] ? 0.7 : 0.1;
                CHECK(tf.at(p, y, k) == doctest::Approx(expect).epsilon(1e-12));
            }
    CHECK(remainder_value(0.7, 4) == doctest::Approx(0.1));
}

TEST_CASE("diagonal head bias raises the diagonal") {
    std::mt19937_64 rng(11);
    for (ReadoutMode mode : {ReadoutMode::row_softmax, ReadoutMode::uniform_remainder}) {
        TransitionNet net(small_spec(3), mode, 4);
        set_head(net.params(), 0.0, 0.0);
        net.set_diagonal_bias(2.0);
        const LabelField obs = random_labels(rng, 4, 4, 3);
        const TransitionField tf = net.predict(random_tensor(rng, 1, 4, 4, 3), &obs);
        for (std::size_t p = 0; p < tf.pixels(); ++p) {
            const int k = obs.labels[p];
            for (int y = 0; y < 3; ++y) {
                if (y == k) continue;
                CHECK(tf.at(p, k, k) > tf.at(p, y, k));
            }
        }
    }
}

TEST_CASE("copying the clean trunk keeps the rows uniform") {
    std::mt19937_64 rng(12);
    const CleanNet clean(small_spec(3), 21);
    TransitionNet net(small_spec(3), ReadoutMode::row_softmax, 22);
    set_head(net.params(), 0.5, 0.0);
    net.copy_trunk_from(clean);
    const std::size_t head = net.params().slot_count() - 1;
    for (std::size_t i = 0; i < head; ++i) {
        CHECK(std::ranges::equal(net.params().weights(i), clean.params().weights(i)));
        CHECK(std::ranges::equal(net.params().bias(i), clean.params().bias(i)));
    }
    for (double v : net.predict(random_tensor(rng, 1, 4, 4, 3)).data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    TransitionNet other(small_spec(4), ReadoutMode::row_softmax, 22);
    CHECK_THROWS_AS(other.copy_trunk_from(clean), ConfigError);
}

TEST_CASE("observed column examples") {
    TransitionField tf(1, 1, 2);
    tf.data = {0.9, 0.1, 0.2, 0.8};
    LabelField noisy(1, 1, 0);
    ProbabilityField col = observed_column(tf, noisy);
    CHECK(col.data == std::vector<double>{0.9, 0.2});

    TransitionField uni(2, 2, 4, 0.25);
    std::mt19937_64 rng(12);
    col = observed_column(uni, random_labels(rng, 2, 2, 4));
    for (double v : col.data) CHECK(v == 0.25);

    TransitionField ident(1, 2, 3, 0.0);
    for (std::size_t p = 0; p < 2; ++p)
        for (int y = 0; y < 3; ++y) ident.at(p, y, y) = 1.0;
    LabelField two(1, 2, 2);
    col = observed_column(ident, two);
    CHECK(col.data == std::vector<double>{0, 0, 1, 0, 0, 1});

    LabelField bad(1, 1, 2);
    CHECK_THROWS_AS(observed_column(tf, bad), DataError);
}

TEST_CASE("transition head has C times the clean head's output channels") {
    for (int C = 2; C <= 5; ++C) {
        const CleanNet c(small_spec(C), 1);
        const TransitionNet t(small_spec(C), ReadoutMode::row_softmax, 1);
        CHECK(t.network().output_channels() == C * c.network().output_channels());
        const std::size_t trunk = c.params().size() - c.params().weights(c.params().slot_count() - 1).size() -
                                  static_cast<std::size_t>(C);
        const std::size_t ttrunk = t.params().size() - t.params().weights(t.params().slot_count() - 1).size() -
                                   static_cast<std::size_t>(C * C);
        CHECK(trunk == ttrunk);
    }
}

TEST_CASE("one-hot posterior leaves the other rows' logits without gradient") {
    std::mt19937_64 rng(13);
    const int C = 3;
    const Tensor4 logits = random_tensor(rng, 1, 2, 2, C * C);
    const Tensor4 out = softmax_groups(logits, C);
    const LabelField obs = random_labels(rng, 2, 2, C);
    const LabelField star(2, 2, 1);
    const LossAndGrad lg = transition_observed_loss(out, ReadoutMode::row_softmax, obs, one_hot(star, C));
    for (std::size_t p = 0; p < 4; ++p)
        for (int y = 0; y < C; ++y)
            for (int k = 0; k < C; ++k) {
                const double g = lg.grad.data[p * C * C + y * C + k];
                if (y != 1) CHECK(g == 0.0);
            }
}

TEST_CASE("transition heads pass the finite-difference check in both readout modes") {
    for (ReadoutMode mode : {ReadoutMode::row_softmax, ReadoutMode::uniform_remainder}) {
        std::mt19937_64 rng(300 + static_cast<int>(mode));
        TransitionNet net(small_spec(3), mode, 9);
        randomize_biases(net.params(), rng);
        const Tensor4 x = random_tensor(rng, 1, 8, 8, 3, 0.0, 1.0);
        const LabelField obs = random_labels(rng, 8, 8, 3);
        const ProbabilityField post = random_simplex(rng, 8, 8, 3);
        const OutputLoss loss = [&](const Tensor4& z) {
            const Tensor4 o = mode == ReadoutMode::row_softmax ? softmax_groups(z, 3) : sigmoid(z);
            return transition_observed_loss(o, mode, obs, post);
        };
        const OutputValue value = [&](const ExtendedTensor& z) { return transition_value(z, mode, obs, post); };
        const GradCheckResult r = finite_diff_check(net.network(), x, loss, value);
        CHECK(r.max_rel_error < 1e-5);
    }
}

TEST_CASE("observed loss agrees with its definition") {
    std::mt19937_64 rng(14);
    for (ReadoutMode mode : {ReadoutMode::row_softmax, ReadoutMode::uniform_remainder}) {
        const TransitionNet net(small_spec(4), mode, 6);
        const Tensor4 x = random_tensor(rng, 1, 4, 4, 3, 0.0, 1.0);
        const LabelField obs = random_labels(rng, 4, 4, 4);
        const ProbabilityField post = random_simplex(rng, 4, 4, 4);
        const NetPass pass = net.forward(x);
        const ProbabilityField col = net.observed_column(pass, obs);
        double expect = 0.0;
        for (std::size_t p = 0; p < 16; ++p)
            for (int y = 0; y < 4; ++y) expect -= post.data[p * 4 + y] * std::log(col.data[p * 4 + y]);
        CHECK(net.observed_loss(pass, obs, post).loss == doctest::Approx(expect / 16.0).epsilon(1e-12));
    }
}

} // TEST_SUITE
