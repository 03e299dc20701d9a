#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "antn/datagen.hpp"
#include "antn/trainer.hpp"
#include "support.hpp"

using namespace antn;
using namespace antn::testing;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.base_filters = 2;
    cfg.epochs_init_clean = 2;
    cfg.epochs_transition = 2;
    cfg.epochs_alternate = 4;
    cfg.alternate_interval = 2;
    cfg.epochs_unet_single = 2;
    cfg.epochs_ntn = 2;
    cfg.lr_main = 0.05;
    cfg.lr_final = 0.01;
    cfg.lr_drop_epoch = 7;
    return cfg;
}

TrainingData tiny_data(int images = 3, std::uint64_t seed = 1) {
    SynthConfig sc;
    sc.image_size = 8;
    sc.images_total = images;
    sc.radius_min = 1.5;
    sc.radius_max = 3.0;
    sc.circles_min = 1;
    sc.circles_max = 1;
    sc.se_size = 3;
    sc.seed = seed;
    TrainingData d;
    for (const auto& s : gen_synthetic(sc)) {
        d.images.push_back(s.image);
        d.noisy1.push_back(erode_labels(s.clean, 3));
        d.noisy2.push_back(dilate_labels(s.clean, 3));
        d.clean_ref.push_back(s.clean);
    }
    return d;
}

std::vector<double> params_of(const ParamStore& p) { return {p.values().begin(), p.values().end()}; }

std::string csv(const std::vector<EpochMetrics>& log) {
    std::ostringstream os;
    write_metrics_csv(os, log);
    return os.str();
}

ProbabilityField pixel(std::initializer_list<double> v) {
    ProbabilityField p = Tensor4::image(1, 1, static_cast<int>(v.size()));
    p.data.assign(v.begin(), v.end());
    return p;
}

MiniUNetSpec desk_spec() {
    MiniUNetSpec s;
    s.base_filters = 4;
    s.num_classes = 3;
    return s;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("config validation and learning-rate schedule") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.lr_at(449) == 1e-4);
    CHECK(cfg.lr_at(450) == 1e-5);
    cfg.epochs_transition = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.alternate_interval = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.lr_main = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("single-source E-step examples") {
    std::mt19937_64 rng(1);
    const ProbabilityField prior = random_simplex(rng, 3, 3, 4);
    const ProbabilityField flat = Tensor4::image(3, 3, 4, 0.3);
    const EStepResult r = e_step_single(prior, flat);
    for (std::size_t i = 0; i < prior.size(); ++i) CHECK(r.posterior.data[i] == doctest::Approx(prior.data[i]).epsilon(1e-12));

    const EStepResult h = e_step_single(pixel({0.6, 0.4}), pixel({0.9, 0.2}));
    CHECK(h.posterior.data[0] == doctest::Approx(0.54 / 0.62).epsilon(1e-12));
    CHECK(h.posterior.data[1] == doctest::Approx(0.08 / 0.62).epsilon(1e-12));
    CHECK(h.posterior.data[0] == doctest::Approx(0.870967).epsilon(1e-6));

    const EStepResult oh = e_step_single(pixel({0.0, 1.0, 0.0}), pixel({0.5, 0.1, 0.7}));
    CHECK(oh.posterior.data == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("joint E-step examples") {
    std::mt19937_64 rng(2);
    const ProbabilityField prior = random_simplex(rng, 2, 4, 3);
    const ProbabilityField flat = Tensor4::image(2, 4, 3, 1.0 / 3.0);
    const EStepResult u = e_step_joint(prior, flat, flat);
    for (std::size_t i = 0; i < prior.size(); ++i) CHECK(u.posterior.data[i] == doctest::Approx(prior.data[i]).epsilon(1e-12));

    const EStepResult j = e_step_joint(pixel({0.5, 0.5}), pixel({0.9, 0.2}), pixel({0.8, 0.3}));
    CHECK(j.posterior.data[0] == doctest::Approx(0.923077).epsilon(1e-6));
    CHECK(j.posterior.data[1] == doctest::Approx(0.076923).epsilon(1e-5));
}

TEST_CASE("joint E-step with one uniform source reduces to the single-source step") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int C = 2 + trial % 3;
        const ProbabilityField prior = random_simplex(rng, 3, 2, C, 0.5);
        const ProbabilityField col = random_simplex(rng, 3, 2, C);
        const ProbabilityField flat = Tensor4::image(3, 2, C, 0.7);
        const ProbabilityField a = e_step_joint(prior, col, flat).posterior;
        const ProbabilityField b = e_step_single(prior, col).posterior;
        const ProbabilityField c = e_step_joint(prior, flat, col).posterior;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(std::abs(a.data[i] - b.data[i]) < 1e-12);
            CHECK(std::abs(c.data[i] - b.data[i]) < 1e-12);
        }
    }
}

TEST_CASE("E-step posteriors are distributions") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const int C = 2 + trial % 4;
        const ProbabilityField prior = random_simplex(rng, 2, 2, C, 0.3);
        const ProbabilityField c1 = random_tensor(rng, 1, 2, 2, C, 1e-6, 1.0);
        const ProbabilityField c2 = random_tensor(rng, 1, 2, 2, C, 1e-6, 1.0);
        for (const ProbabilityField& post : {e_step_single(prior, c1).posterior, e_step_joint(prior, c1, c2).posterior}) {
            for (std::size_t p = 0; p < post.pixels(); ++p) {
                double s = 0.0;
                for (double v : post.pixel(p)) {
                    CHECK(v >= 0.0);
                    s += v;
                }
                CHECK(std::abs(s - 1.0) < 1e-12);
            }
        }
    }
}

TEST_CASE("E-step falls back to the prior when the normaliser vanishes") {
    const ProbabilityField prior = pixel({0.3, 0.7});
    const EStepResult r = e_step_joint(prior, pixel({1e-200, 1e-200}), pixel({1e-200, 1e-200}));
    CHECK(r.fallbacks == 1);
    CHECK(r.posterior.data == prior.data);
    CHECK_THROWS_AS(e_step_single(prior, pixel({0.5, 0.5, 0.5})), ConfigError);
}

TEST_CASE("marginal likelihood examples") {
    const ProbabilityField u = Tensor4::image(2, 2, 4, 0.25);
    CHECK(marginal_log_likelihood(u, u, u, Likelihood::L1) == doctest::Approx(-1.386294).epsilon(1e-6));
    CHECK(marginal_log_likelihood(u, u, u, Likelihood::L2) == doctest::Approx(std::log(0.25)));

    const ProbabilityField truth = pixel({0.0, 1.0, 0.0});
    CHECK(marginal_log_likelihood(truth, truth, truth, Likelihood::L3) == 0.0);

    const ProbabilityField p = pixel({0.6, 0.4}), col = pixel({0.9, 0.2}), flat = pixel({1.0, 1.0});
    CHECK(marginal_log_likelihood(p, col, flat, Likelihood::L1) == doctest::Approx(-0.478036).epsilon(1e-6));
    CHECK(marginal_log_likelihood(p, flat, col, Likelihood::L2) == doctest::Approx(std::log(0.62)));
}

TEST_CASE("M-steps with zero learning rate leave parameters unchanged") {
    std::mt19937_64 rng(5);
    const Tensor4 x = random_tensor(rng, 1, 8, 8, 3, 0.0, 1.0);
    TransitionNet t(desk_spec(), ReadoutMode::row_softmax, 1);
    CleanNet c(desk_spec(), 2);
    const auto t0 = params_of(t.params()), c0 = params_of(c.params());
    const ProbabilityField post = random_simplex(rng, 8, 8, 3);
    m_step_transition(t, x, random_labels(rng, 8, 8, 3), post, 0.0);
    m_step_clean(c, x, post, 0.0);
    CHECK(params_of(t.params()) == t0);
    CHECK(params_of(c.params()) == c0);
}

TEST_CASE("clean M-step with a one-hot posterior is standard cross-entropy") {
    std::mt19937_64 rng(6);
    const Tensor4 x = random_tensor(rng, 1, 8, 8, 3, 0.0, 1.0);
    const LabelField labels = random_labels(rng, 8, 8, 3);
    CleanNet a(desk_spec(), 3), b(desk_spec(), 3);
    const double la = m_step_clean(a, x, one_hot(labels, 3), 0.01);
    const double lb = accumulate_direct_gradient(b, x, labels, 1.0);
    sgd_step(b.params(), 0.01);
    CHECK(la == doctest::Approx(lb).epsilon(1e-14));
    const auto pa = params_of(a.params()), pb = params_of(b.params());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-13));
}

TEST_CASE("M-steps descend on their own batch at small learning rates") {
    int t_down = 0, c_down = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        std::mt19937_64 rng(1000 + trial);
        const Tensor4 x = random_tensor(rng, 1, 8, 8, 3, 0.0, 1.0);
        const LabelField noisy = random_labels(rng, 8, 8, 3);
        const ProbabilityField post = random_simplex(rng, 8, 8, 3);
        const double lr = 1e-4 * (1 + trial % 2) / 2.0;

        TransitionNet t(desk_spec(), trial % 3 ? ReadoutMode::row_softmax : ReadoutMode::uniform_remainder, trial);
        const double before_t = m_step_transition(t, x, noisy, post, lr);
        const double after_t = t.observed_loss(t.forward(x), noisy, post).loss;
        t_down += after_t <= before_t;

        CleanNet c(desk_spec(), trial);
        const double before_c = m_step_clean(c, x, post, lr);
        const double after_c = weighted_cross_entropy(c.predict(x), post).loss;
        c_down += after_c <= before_c;
    }
    CHECK(t_down >= 95);
    CHECK(c_down >= 95);
}

TEST_CASE("EM on the logit-table toy never lowers L3") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int C = 2 + trial % 3;
        std::uniform_int_distribution<int> cls(0, C - 1);
        LogitTableEm em(C, cls(rng), cls(rng), rng);
        double prev = em.L3();
        for (int cycle = 0; cycle < 200; ++cycle) {
            em.transition_step(0.1);
            em.clean_step(0.1);
            const double cur = em.L3();
            CHECK(cur >= prev - 1e-9);
            prev = cur;
        }
    }
}

TEST_CASE("training data validation") {
    TrainingData d = tiny_data(2);
    CHECK_NOTHROW(d.validate(4));
    d.noisy1[1].labels[0] = 7;
    CHECK_THROWS_AS(d.validate(4), DataError);
    d = tiny_data(2);
    d.noisy2.pop_back();
    CHECK_THROWS_AS(d.validate(4), DataError);
}

TEST_CASE("ANTN refuses a single label set") {
    TrainingData d = tiny_data(2);
    d.noisy2.clear();
    CHECK_THROWS_AS(train_antn(d, tiny_config()), ConfigError);
}

TEST_CASE("zero epochs return the initial networks") {
    TrainConfig cfg = tiny_config();
    cfg.epochs_init_clean = cfg.epochs_transition = cfg.epochs_alternate = 0;
    cfg.transition_diagonal_logit = 1.5;
    const TrainingData d = tiny_data(2);
    const AntnResult r = train_antn(d, cfg);
    const AntnModel init = initial_antn_model(cfg);
    CHECK(r.log.empty());
    CHECK(params_of(r.model.clean.params()) == params_of(init.clean.params()));
    CHECK(params_of(r.model.trans1.params()) == params_of(init.trans1.params()));
    CHECK(params_of(r.model.trans2.params()) == params_of(init.trans2.params()));

    const UnetResult u = train_unet_direct(d, DirectSource::mixture, cfg, 0);
    CHECK(params_of(u.net.params()) == params_of(initial_clean_net(cfg).params()));
}

TEST_CASE("warm start hands the phase A trunk to both transition nets") {
    TrainConfig cfg = tiny_config();
    cfg.epochs_transition = cfg.epochs_alternate = 0;
    cfg.transition_diagonal_logit = 1.5;
    cfg.transition_warm_start = true;
    const AntnResult r = train_antn(tiny_data(2), cfg);
    const AntnModel init = initial_antn_model(cfg);
    for (const TransitionNet* t : {&r.model.trans1, &r.model.trans2}) {
        const std::size_t head = t->params().slot_count() - 1;
        for (std::size_t i = 0; i < head; ++i) {
            CHECK(std::ranges::equal(t->params().weights(i), r.model.clean.params().weights(i)));
            CHECK(std::ranges::equal(t->params().bias(i), r.model.clean.params().bias(i)));
        }
        for (double w : t->params().weights(head)) CHECK(w == 0.0);
        CHECK(std::ranges::equal(t->params().bias(head), init.trans1.params().bias(head)));
    }
}

TEST_CASE("ANTN training is reproducible for a fixed seed") {
    const TrainConfig cfg = tiny_config();
    const TrainingData d = tiny_data(3);
    const AntnResult a = train_antn(d, cfg), b = train_antn(d, cfg);
    CHECK(csv(a.log) == csv(b.log));
    CHECK(params_of(a.model.clean.params()) == params_of(b.model.clean.params()));
    CHECK(params_of(a.model.trans2.params()) == params_of(b.model.trans2.params()));
    REQUIRE(a.log.size() == 8);
    CHECK(a.log[0].phase == "init_clean");
    CHECK(a.log[2].phase == "transition");
    CHECK(a.log[4].phase == "alt_transition");
    CHECK(a.log[6].phase == "alt_clean");
    CHECK(a.log[7].lr == cfg.lr_final);
    for (const EpochMetrics& m : a.log) {
        CHECK(std::isfinite(m.L3));
        CHECK(std::isfinite(m.ce_clean));
    }
}

TEST_CASE("phases freeze the right parameter groups") {
    TrainConfig cfg = tiny_config();
    cfg.epochs_transition = 2;
    cfg.epochs_alternate = 6;
    const TrainingData d = tiny_data(3);
    std::vector<std::string> phases;
    std::vector<std::array<std::vector<double>, 3>> snaps;
    train_antn(d, cfg, [&](const EpochMetrics& m, const AntnModel& model) {
        phases.push_back(m.phase);
        snaps.push_back({params_of(model.clean.params()), params_of(model.trans1.params()),
                         params_of(model.trans2.params())});
    });
    REQUIRE(snaps.size() == 10);
    for (std::size_t e = 1; e < snaps.size(); ++e) {
        const bool clean_moved = snaps[e][0] != snaps[e - 1][0];
        const bool trans_moved = snaps[e][1] != snaps[e - 1][1] || snaps[e][2] != snaps[e - 1][2];
        CAPTURE(e);
        CAPTURE(phases[e]);
        if (phases[e] == "transition" || phases[e] == "alt_transition") {
            CHECK_FALSE(clean_moved);
            CHECK(snaps[e][1] != snaps[e - 1][1]);
            CHECK(snaps[e][2] != snaps[e - 1][2]);
        } else {
            CHECK(clean_moved);
            CHECK_FALSE(trans_moved);
        }
    }
    CHECK(phases[4] == "alt_transition");
    CHECK(phases[5] == "alt_transition");
    CHECK(phases[6] == "alt_clean");
    CHECK(phases[8] == "alt_transition");
}

TEST_CASE("mixture training with identical label sets equals single-set training at twice the epochs") {
    TrainConfig cfg = tiny_config();
    cfg.shuffle = false;
    cfg.lr_drop_epoch = 1000;
    TrainingData d = tiny_data(1);
    d.noisy2 = d.noisy1;
    const UnetResult mix = train_unet_direct(d, DirectSource::mixture, cfg, 3);
    const UnetResult single = train_unet_direct(d, DirectSource::noisy1, cfg, 6);
    CHECK(params_of(mix.net.params()) == params_of(single.net.params()));

    // One batch of two: the averaged gradient of the pair equals the single-image gradient.
    cfg.batch_size = 2;
    CleanNet a = initial_clean_net(cfg), b = initial_clean_net(cfg);
    accumulate_direct_gradient(a, d.images[0], d.noisy1[0], 0.5);
    accumulate_direct_gradient(a, d.images[0], d.noisy2[0], 0.5);
    accumulate_direct_gradient(b, d.images[0], d.noisy1[0], 1.0);
    const auto ga = a.params().grads(), gb = b.params().grads();
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == doctest::Approx(gb[i]).epsilon(1e-14));
}

TEST_CASE("direct training is reproducible") {
    const TrainConfig cfg = tiny_config();
    const TrainingData d = tiny_data(3);
    const UnetResult a = train_unet_direct(d, DirectSource::noisy2, cfg), b = train_unet_direct(d, DirectSource::noisy2, cfg);
    CHECK(params_of(a.net.params()) == params_of(b.net.params()));
    CHECK(csv(a.log) == csv(b.log));
    TrainingData one = d;
    one.noisy2.clear();
    CHECK_THROWS_AS(train_unet_direct(one, DirectSource::noisy2, cfg), ConfigError);
}

TEST_CASE("NTN layer with an exact identity leaves the prediction unchanged") {
    std::mt19937_64 rng(8);
    NtnTransitionLayer layer(4, 800.0);
    const ProbabilityField p = random_simplex(rng, 3, 3, 4);
    const ProbabilityField q = layer.compose(p);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(q.data[i] == doctest::Approx(p.data[i]).epsilon(1e-15));
}

TEST_CASE("NTN weight decay alone drives Q toward uniform") {
    NtnTransitionLayer layer(3);
    for (int s = 0; s < 2000; ++s) layer.step(0.1, 0.05);
    for (double v : layer.matrix()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
    // Closed form: logits shrink by (1 - lr wd) per step.
    NtnTransitionLayer fresh(3);
    fresh.step(0.1, 0.05);
    CHECK(fresh.logits()[0] == doctest::Approx(6.0 * (1.0 - 0.005)));
}

TEST_CASE("NTN rows stay stochastic throughout training") {
    TrainConfig cfg = tiny_config();
    cfg.ntn_weight_decay = 0.1;
    cfg.epochs_ntn = 3;
    const TrainingData d = tiny_data(3);
    CleanNet net = initial_clean_net(cfg);
    NtnTransitionLayer layer(cfg.num_classes);
    for (int step = 0; step < 10; ++step) {
        accumulate_ntn_gradient(net, layer, d.images[static_cast<std::size_t>(step % 3)], d.noisy1[static_cast<std::size_t>(step % 3)], 1.0);
        sgd_step(net.params(), 0.05);
        layer.step(0.05, cfg.ntn_weight_decay);
        const auto Q = layer.matrix();
        for (int y = 0; y < 4; ++y) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += Q[static_cast<std::size_t>(y * 4 + k)];
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
    const NtnResult r = train_ntn(d, DirectSource::noisy1, cfg);
    CHECK(r.log.size() == static_cast<std::size_t>(cfg.epochs_unet_single + cfg.epochs_ntn));
    CHECK(r.log.front().phase == "ntn_base");
    CHECK(r.log.back().phase == "ntn");
}

TEST_CASE("NTN layer gradient matches finite differences") {
    TrainConfig cfg = tiny_config();
    const TrainingData d = tiny_data(1);
    CleanNet net = initial_clean_net(cfg);
    NtnTransitionLayer layer(4, 2.0);
    std::mt19937_64 rng(9);
    for (double& v : layer.logits()) v += std::normal_distribution<double>(0.0, 0.5)(rng);
    accumulate_ntn_gradient(net, layer, d.images[0], d.noisy1[0], 1.0);
    const std::vector<double> analytic = layer.grads();
    const double h = 1e-6;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        NtnTransitionLayer up = layer, down = layer;
        up.logits()[i] += h;
        down.logits()[i] -= h;
        CleanNet n1 = net, n2 = net;
        const double lu = accumulate_ntn_gradient(n1, up, d.images[0], d.noisy1[0], 1.0);
        const double ld = accumulate_ntn_gradient(n2, down, d.images[0], d.noisy1[0], 1.0);
        const double numeric = (lu - ld) / (2 * h);
        CHECK(std::abs(numeric - analytic[i]) <= 1e-6 * std::max({std::abs(numeric), std::abs(analytic[i]), 1e-3}));
    }
}

TEST_CASE("model checkpoints round-trip through the trainer types") {
    const TrainConfig cfg = tiny_config();
    const AntnModel m = initial_antn_model(cfg);
    const AntnModel back = AntnModel::from_checkpoint(m.checkpoint());
    CHECK(params_of(back.trans1.params()) == params_of(m.trans1.params()));
    CHECK(back.trans1.mode() == m.trans1.mode());

    NtnModel n{initial_clean_net(cfg), NtnTransitionLayer(4)};
    n.layer.logits()[5] = -0.25;
    const NtnModel nb = NtnModel::from_checkpoint(n.checkpoint());
    CHECK(nb.layer.logits() == n.layer.logits());
    CHECK_THROWS_AS(NtnModel::from_checkpoint(m.checkpoint()), CheckpointError);
}

TEST_CASE("metrics CSV header is fixed") {
    std::ostringstream os;
    write_metrics_csv(os, {});
    CHECK(os.str() == "epoch,phase,L1,L2,L3,ce_clean,ce_noisy1,ce_noisy2,R1,R2,lr\n");
}

} // TEST_SUITE
