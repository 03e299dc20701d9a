#include "antn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "antn/losses.hpp"
#include "antn/metrics.hpp"

namespace antn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t sub_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

enum Stream : std::uint32_t { kCleanInit = 1, kTrans1Init = 2, kTrans2Init = 3, kOrder = 4 };

class Sgd {
public:
    explicit Sgd(double momentum) : momentum_(momentum) {}

    void step(ParamStore& p, double lr) {
        if (momentum_ == 0.0) {
            sgd_step(p, lr);
            return;
        }
        if (velocity_.size() != p.size()) velocity_.assign(p.size(), 0.0);
        auto v = p.values();
        auto g = p.grads();
        for (std::size_t i = 0; i < v.size(); ++i) {
            velocity_[i] = momentum_ * velocity_[i] + g[i];
            v[i] -= lr * velocity_[i];
        }
        p.zero_grad();
    }

private:
    double momentum_;
    std::vector<double> velocity_;
};

void scale_in_place(Tensor4& t, double s) {
    if (s == 1.0) return;
    for (double& v : t.data) v *= s;
}

/// One training unit: an image paired with one label source (0 or 1).
struct Item {
    std::size_t image;
    int source;
};

class EpochPlan {
public:
    EpochPlan(std::uint64_t seed, bool shuffle) : rng_(seed), shuffle_(shuffle) {}

    std::vector<Item> order(std::vector<Item> items) {
        if (shuffle_) std::shuffle(items.begin(), items.end(), rng_);
        return items;
    }

private:
    std::mt19937_64 rng_;
    bool shuffle_;
};

std::vector<Item> single_items(std::size_t n, int source) {
    std::vector<Item> items;
    for (std::size_t i = 0; i < n; ++i) items.push_back({i, source});
    return items;
}

std::vector<Item> mixture_items(std::size_t n) {
    std::vector<Item> items;
    for (std::size_t i = 0; i < n; ++i) {
        items.push_back({i, 0});
        items.push_back({i, 1});
    }
    return items;
}

/// Runs `work` on every item, stepping after each batch of batch_size items.
/// `work` receives the gradient scale 1/(items in the batch).
template <typename Work, typename Step>
void run_batches(const std::vector<Item>& items, int batch_size, Work work, Step step) {
    const std::size_t b = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < items.size(); start += b) {
        const std::size_t end = std::min(items.size(), start + b);
        const double scale = 1.0 / static_cast<double>(end - start);
        for (std::size_t i = start; i < end; ++i) work(items[i], scale);
        step();
    }
}

/// Per-epoch running sums for the metrics log.
struct Meter {
    double L1 = 0, L2 = 0, L3 = 0, ce_clean = 0, ce1 = 0, ce2 = 0;
    std::size_t n_like = 0, n_ref = 0, n_ce1 = 0, n_ce2 = 0;
    AgreementCount r1, r2;
    std::size_t fallbacks = 0;

    static double mean(double s, std::size_t n) { return n == 0 ? kNaN : s / static_cast<double>(n); }

    EpochMetrics finish(int epoch, const std::string& phase, double lr) const {
        EpochMetrics m;
        m.epoch = epoch;
        m.phase = phase;
        m.L1 = mean(L1, n_like);
        m.L2 = mean(L2, n_like);
        m.L3 = mean(L3, n_like);
        m.ce_clean = mean(ce_clean, n_ref);
        m.ce_noisy1 = mean(ce1, n_ce1);
        m.ce_noisy2 = mean(ce2, n_ce2);
        const bool have_r = r1.agree + r1.disagree > 0;
        m.R1 = have_r ? r1.ratio() : kNaN;
        m.R2 = have_r ? r2.ratio() : kNaN;
        m.lr = lr;
        m.estep_fallbacks = fallbacks;
        return m;
    }

    void add_reference(const TrainingData& data, std::size_t i, const ProbabilityField& clean) {
        if (data.clean_ref.empty()) return;
        ce_clean += cross_entropy_curve(clean, data.clean_ref[i]);
        ++n_ref;
    }

    /// Likelihoods, noisy-label cross-entropies and ratios from one image's model outputs.
    void add_em(const TrainingData& data, std::size_t i, const ProbabilityField& clean, const ProbabilityField& col1,
                const ProbabilityField& col2) {
        const double l1 = marginal_log_likelihood(clean, col1, col2, Likelihood::L1);
        const double l2 = marginal_log_likelihood(clean, col1, col2, Likelihood::L2);
        L1 += l1;
        L2 += l2;
        L3 += marginal_log_likelihood(clean, col1, col2, Likelihood::L3);
        ++n_like;
        ce1 -= l1;
        ce2 -= l2;
        ++n_ce1;
        ++n_ce2;
        const EStepResult joint = e_step_joint(clean, col1, col2);
        const LabelField est = argmax_labels(joint.posterior);
        r1 += count_agreement(est, data.noisy1[i]);
        r2 += count_agreement(est, data.noisy2[i]);
        add_reference(data, i, clean);
    }
};

const LabelField& labels_of(const TrainingData& data, const Item& it) {
    return it.source == 0 ? data.noisy1[it.image] : data.noisy2[it.image];
}

void check_direct_source(const TrainingData& data, DirectSource source) {
    if (source != DirectSource::noisy1 && data.noisy2.empty()) {
        throw ConfigError("the second noisy label set is required for this source");
    }
}

std::vector<Item> direct_items(const TrainingData& data, DirectSource source) {
    switch (source) {
        case DirectSource::noisy1:
            return single_items(data.size(), 0);
        case DirectSource::noisy2:
            return single_items(data.size(), 1);
        case DirectSource::mixture:
            return mixture_items(data.size());
    }
    return {};
}

EStepResult e_step_impl(const ProbabilityField& clean, const ProbabilityField* col1, const ProbabilityField* col2) {
    const int C = clean.c;
    auto check = [&](const ProbabilityField* col) {
        if (col != nullptr && !col->same_shape(clean)) throw ConfigError("e_step: column/prior shape mismatch");
    };
    check(col1);
    check(col2);
    EStepResult r;
    r.posterior = clean;
    std::vector<double> t(static_cast<std::size_t>(C));
    for (std::size_t p = 0; p < clean.pixels(); ++p) {
        const std::size_t base = p * static_cast<std::size_t>(C);
        double den = 0.0;
        for (int y = 0; y < C; ++y) {
            double v = clean.data[base + y];
            if (col1 != nullptr) v *= col1->data[base + y];
            if (col2 != nullptr) v *= col2->data[base + y];
            t[static_cast<std::size_t>(y)] = v;
            den += v;
        }
        if (!(den > 0.0) || !std::isfinite(den)) {
            ++r.fallbacks;
            continue;
        }
        for (int y = 0; y < C; ++y) r.posterior.data[base + y] = t[static_cast<std::size_t>(y)] / den;
    }
    return r;
}

} // namespace

void TrainConfig::validate() const {
    net_spec().validate();
    if (epochs_init_clean < 0 || epochs_transition < 0 || epochs_alternate < 0 || epochs_unet_single < 0 ||
        epochs_ntn < 0) {
        throw ConfigError("epoch counts must be >= 0");
    }
    if (!(lr_main > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be > 0");
    if (alternate_interval < 1) throw ConfigError("alternate_interval must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr_drop_epoch < 0) throw ConfigError("lr_drop_epoch must be >= 0");
    if (!(ntn_weight_decay >= 0.0)) throw ConfigError("ntn_weight_decay must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
}

MiniUNetSpec TrainConfig::net_spec() const {
    MiniUNetSpec s;
    s.base_filters = base_filters;
    s.num_classes = num_classes;
    return s;
}

double TrainConfig::lr_at(int epoch) const { return epoch < lr_drop_epoch ? lr_main : lr_final; }

void TrainingData::validate(int classes) const {
    const std::size_t n = images.size();
    if (noisy1.size() != n) throw DataError("noisy label set 1 does not match the image count");
    if (!noisy2.empty() && noisy2.size() != n) throw DataError("noisy label set 2 does not match the image count");
    if (!clean_ref.empty() && clean_ref.size() != n) throw DataError("reference labels do not match the image count");
    auto check = [&](const LabelField& l, std::size_t i, const char* what) {
        if (l.h != images[i].h || l.w != images[i].w) {
            throw DataError(std::string(what) + " " + std::to_string(i) + ": dimensions differ from the image");
        }
        l.validate(classes);
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (images[i].n != 1 || images[i].c != 3) throw DataError("image " + std::to_string(i) + ": expected 3 channels");
        check(noisy1[i], i, "noisy1");
        if (!noisy2.empty()) check(noisy2[i], i, "noisy2");
        if (!clean_ref.empty()) check(clean_ref[i], i, "clean_ref");
    }
}

EStepResult e_step_single(const ProbabilityField& clean, const ProbabilityField& col) {
    return e_step_impl(clean, &col, nullptr);
}

EStepResult e_step_joint(const ProbabilityField& clean, const ProbabilityField& col1, const ProbabilityField& col2) {
    return e_step_impl(clean, &col1, &col2);
}

double marginal_log_likelihood(const ProbabilityField& clean, const ProbabilityField& col1,
                               const ProbabilityField& col2, Likelihood which) {
    if (!col1.same_shape(clean) || !col2.same_shape(clean)) throw ConfigError("marginal_log_likelihood: shape mismatch");
    const int C = clean.c;
    const std::size_t n = clean.pixels();
    if (n == 0) return 0.0;
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t base = p * static_cast<std::size_t>(C);
        double s = 0.0;
        for (int y = 0; y < C; ++y) {
            double v = clean.data[base + y];
            if (which != Likelihood::L2) v *= col1.data[base + y];
            if (which != Likelihood::L1) v *= col2.data[base + y];
            s += v;
        }
        total += clamped_log(s);
    }
    return total / static_cast<double>(n);
}

double m_step_transition(TransitionNet& net, const Tensor4& image, const LabelField& noisy,
                         const ProbabilityField& posterior, double lr) {
    net.params().zero_grad();
    const NetPass pass = net.forward(image);
    const LossAndGrad lg = net.observed_loss(pass, noisy, posterior);
    net.backward(pass, lg.grad);
    sgd_step(net.params(), lr);
    return lg.loss;
}

double m_step_clean(CleanNet& net, const Tensor4& image, const ProbabilityField& posterior, double lr) {
    net.params().zero_grad();
    const NetPass pass = net.forward(image);
    const LossAndGrad lg = weighted_cross_entropy(pass.out, posterior);
    net.backward(pass, lg.grad);
    sgd_step(net.params(), lr);
    return lg.loss;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& log) {
    out << kMetricsHeader << '\n';
    const auto old_precision = out.precision(10);
    for (const EpochMetrics& m : log) {
        out << m.epoch << ',' << m.phase << ',' << m.L1 << ',' << m.L2 << ',' << m.L3 << ',' << m.ce_clean << ','
            << m.ce_noisy1 << ',' << m.ce_noisy2 << ',' << m.R1 << ',' << m.R2 << ',' << m.lr << '\n';
    }
    out.precision(old_precision);
}

ModelCheckpoint AntnModel::checkpoint() const {
    ModelCheckpoint c;
    c.networks = {to_record(clean), to_record(trans1), to_record(trans2)};
    return c;
}

AntnModel AntnModel::from_checkpoint(const ModelCheckpoint& ckpt) {
    if (ckpt.networks.size() != 3 || ckpt.networks[0].head != HeadKind::clean) {
        throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint does not hold an ANTN model");
    }
    return {clean_from_record(ckpt.networks[0]), transition_from_record(ckpt.networks[1]),
            transition_from_record(ckpt.networks[2])};
}

CleanNet initial_clean_net(const TrainConfig& cfg) { return CleanNet(cfg.net_spec(), sub_seed(cfg.seed, kCleanInit)); }

AntnModel initial_antn_model(const TrainConfig& cfg) {
    const MiniUNetSpec spec = cfg.net_spec();
    AntnModel m;
    m.clean = initial_clean_net(cfg);
    m.trans1 = TransitionNet(spec, cfg.readout_mode, sub_seed(cfg.seed, kTrans1Init));
    m.trans2 = TransitionNet(spec, cfg.readout_mode, sub_seed(cfg.seed, kTrans2Init));
    m.trans1.set_diagonal_bias(cfg.transition_diagonal_logit);
    m.trans2.set_diagonal_bias(cfg.transition_diagonal_logit);
    return m;
}

AntnResult train_antn(const TrainingData& data, const TrainConfig& cfg, const AntnObserver& observe) {
    cfg.validate();
    if (data.noisy2.empty()) throw ConfigError("ANTN needs two noisy label sets");
    data.validate(cfg.num_classes);

    AntnResult result;
    result.model = initial_antn_model(cfg);
    AntnModel& m = result.model;
    Sgd opt_clean(cfg.momentum), opt_t1(cfg.momentum), opt_t2(cfg.momentum);
    EpochPlan plan(sub_seed(cfg.seed, kOrder), cfg.shuffle);
    const std::size_t n = data.size();
    int epoch = 0;

    auto finish = [&](const Meter& meter, const char* phase, double lr) {
        result.log.push_back(meter.finish(epoch, phase, lr));
        if (observe) observe(result.log.back(), m);
        ++epoch;
    };

    // Phase A: clean net on the mixture.
    for (int e = 0; e < cfg.epochs_init_clean; ++e) {
        const double lr = cfg.lr_at(epoch);
        Meter meter;
        run_batches(
            plan.order(mixture_items(n)), cfg.batch_size,
            [&](const Item& it, double scale) {
                const Tensor4& img = data.images[it.image];
                const NetPass pass = m.clean.forward(img);
                LossAndGrad lg = label_cross_entropy(pass.out, labels_of(data, it));
                scale_in_place(lg.grad, scale);
                m.clean.backward(pass, lg.grad);
                if (it.source == 0) {
                    const NetPass p1 = m.trans1.forward(img);
                    const NetPass p2 = m.trans2.forward(img);
                    meter.add_em(data, it.image, pass.out, m.trans1.observed_column(p1, data.noisy1[it.image]),
                                 m.trans2.observed_column(p2, data.noisy2[it.image]));
                }
            },
            [&] { opt_clean.step(m.clean.params(), lr); });
        finish(meter, "init_clean", lr);
    }

    auto transition_epoch = [&](const char* phase) {
        const double lr = cfg.lr_at(epoch);
        Meter meter;
        run_batches(
            plan.order(single_items(n, 0)), cfg.batch_size,
            [&](const Item& it, double scale) {
                const Tensor4& img = data.images[it.image];
                const ProbabilityField clean = m.clean.predict(img);
                const NetPass p1 = m.trans1.forward(img);
                const NetPass p2 = m.trans2.forward(img);
                const ProbabilityField col1 = m.trans1.observed_column(p1, data.noisy1[it.image]);
                const ProbabilityField col2 = m.trans2.observed_column(p2, data.noisy2[it.image]);
                const EStepResult post1 = e_step_single(clean, col1);
                const EStepResult post2 = e_step_single(clean, col2);
                meter.fallbacks += post1.fallbacks + post2.fallbacks;
                LossAndGrad l1 = m.trans1.observed_loss(p1, data.noisy1[it.image], post1.posterior);
                LossAndGrad l2 = m.trans2.observed_loss(p2, data.noisy2[it.image], post2.posterior);
                scale_in_place(l1.grad, scale);
                scale_in_place(l2.grad, scale);
                m.trans1.backward(p1, l1.grad);
                m.trans2.backward(p2, l2.grad);
                meter.add_em(data, it.image, clean, col1, col2);
            },
            [&] {
                opt_t1.step(m.trans1.params(), lr);
                opt_t2.step(m.trans2.params(), lr);
            });
        finish(meter, phase, lr);
    };

    auto clean_epoch = [&] {
        const double lr = cfg.lr_at(epoch);
        Meter meter;
        run_batches(
            plan.order(single_items(n, 0)), cfg.batch_size,
            [&](const Item& it, double scale) {
                const Tensor4& img = data.images[it.image];
                const NetPass pass = m.clean.forward(img);
                const NetPass p1 = m.trans1.forward(img);
                const NetPass p2 = m.trans2.forward(img);
                const ProbabilityField col1 = m.trans1.observed_column(p1, data.noisy1[it.image]);
                const ProbabilityField col2 = m.trans2.observed_column(p2, data.noisy2[it.image]);
                const EStepResult post = e_step_joint(pass.out, col1, col2);
                meter.fallbacks += post.fallbacks;
                LossAndGrad lg = weighted_cross_entropy(pass.out, post.posterior);
                scale_in_place(lg.grad, scale);
                m.clean.backward(pass, lg.grad);
                meter.add_em(data, it.image, pass.out, col1, col2);
            },
            [&] { opt_clean.step(m.clean.params(), lr); });
        finish(meter, "alt_clean", lr);
    };

    // Phase B: transition nets, clean net frozen.
    if (cfg.transition_warm_start) {
        m.trans1.copy_trunk_from(m.clean);
        m.trans2.copy_trunk_from(m.clean);
    }
    for (int e = 0; e < cfg.epochs_transition; ++e) transition_epoch("transition");

    // Phase C: alternate, transition group first.
    for (int e = 0; e < cfg.epochs_alternate; ++e) {
        if ((e / cfg.alternate_interval) % 2 == 0) {
            transition_epoch("alt_transition");
        } else {
            clean_epoch();
        }
    }
    return result;
}

double accumulate_direct_gradient(CleanNet& net, const Tensor4& image, const LabelField& labels, double scale) {
    const NetPass pass = net.forward(image);
    LossAndGrad lg = label_cross_entropy(pass.out, labels);
    scale_in_place(lg.grad, scale);
    net.backward(pass, lg.grad);
    return lg.loss;
}

UnetResult train_unet_direct(const TrainingData& data, DirectSource source, const TrainConfig& cfg, int epochs) {
    cfg.validate();
    check_direct_source(data, source);
    data.validate(cfg.num_classes);
    if (epochs < 0) epochs = source == DirectSource::mixture ? cfg.epochs_init_clean : cfg.epochs_unet_single;

    UnetResult result;
    result.net = initial_clean_net(cfg);
    Sgd opt(cfg.momentum);
    EpochPlan plan(sub_seed(cfg.seed, kOrder), cfg.shuffle);
    const std::vector<Item> items = direct_items(data, source);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double lr = cfg.lr_at(epoch);
        Meter meter;
        run_batches(
            plan.order(items), cfg.batch_size,
            [&](const Item& it, double scale) {
                const NetPass pass = result.net.forward(data.images[it.image]);
                LossAndGrad lg = label_cross_entropy(pass.out, labels_of(data, it));
                scale_in_place(lg.grad, scale);
                result.net.backward(pass, lg.grad);
                if (source == DirectSource::mixture && it.source == 1) return;
                meter.ce1 += cross_entropy_curve(pass.out, data.noisy1[it.image]);
                ++meter.n_ce1;
                if (!data.noisy2.empty()) {
                    meter.ce2 += cross_entropy_curve(pass.out, data.noisy2[it.image]);
                    ++meter.n_ce2;
                }
                meter.add_reference(data, it.image, pass.out);
            },
            [&] { opt.step(result.net.params(), lr); });
        result.log.push_back(meter.finish(epoch, "unet", lr));
    }
    return result;
}

NtnTransitionLayer::NtnTransitionLayer(int classes, double diagonal_logit)
    : classes_(classes),
      logits_(static_cast<std::size_t>(classes) * classes, 0.0),
      grads_(static_cast<std::size_t>(classes) * classes, 0.0) {
    if (classes < 2) throw ConfigError("NTN layer needs at least 2 classes");
    for (int y = 0; y < classes; ++y) logits_[static_cast<std::size_t>(y) * classes + y] = diagonal_logit;
}

std::vector<double> NtnTransitionLayer::matrix() const {
    Tensor4 t(1, 1, classes_, classes_);
    t.data = logits_;
    return softmax_groups(t, classes_).data;
}

ProbabilityField NtnTransitionLayer::compose(const ProbabilityField& clean) const {
    if (clean.c != classes_) throw ConfigError("NTN compose: class count mismatch");
    const std::vector<double> Q = matrix();
    const int C = classes_;
    ProbabilityField q(clean.n, clean.h, clean.w, C);
    for (std::size_t p = 0; p < clean.pixels(); ++p) {
        auto in = clean.pixel(p);
        auto out = q.pixel(p);
        for (int y = 0; y < C; ++y)
            for (int k = 0; k < C; ++k) out[k] += Q[static_cast<std::size_t>(y) * C + k] * in[y];
    }
    return q;
}

void NtnTransitionLayer::step(double lr, double weight_decay) {
    for (std::size_t i = 0; i < logits_.size(); ++i) {
        logits_[i] -= lr * (grads_[i] + weight_decay * logits_[i]);
        grads_[i] = 0.0;
    }
}

double accumulate_ntn_gradient(CleanNet& net, NtnTransitionLayer& layer, const Tensor4& image,
                               const LabelField& noisy, double scale) {
    const int C = layer.classes();
    if (net.classes() != C) throw ConfigError("NTN: class count mismatch");
    noisy.validate(C);
    const NetPass pass = net.forward(image);
    if (noisy.h != pass.out.h || noisy.w != pass.out.w) throw DataError("NTN: label/image shape mismatch");
    const std::vector<double> Q = layer.matrix();
    const std::size_t n = noisy.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    Tensor4 grad(1, pass.out.h, pass.out.w, C);
    std::vector<double> dQ(Q.size(), 0.0);
    double loss = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const int k = noisy.labels[p];
        auto pr = pass.out.pixel(p);
        double q = 0.0;
        for (int y = 0; y < C; ++y) q += Q[static_cast<std::size_t>(y) * C + k] * pr[y];
        loss -= clamped_log(q);
        if (q < kLogClamp) continue;
        const double dq = -inv_n * scale / q;
        auto g = grad.pixel(p);
        for (int y = 0; y < C; ++y) {
            g[y] = pr[y] * (Q[static_cast<std::size_t>(y) * C + k] - q) * dq;
            dQ[static_cast<std::size_t>(y) * C + k] += pr[y] * dq;
        }
    }
    net.backward(pass, grad);
    auto& lg = layer.grads();
    for (int y = 0; y < C; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * C;
        double dot = 0.0;
        for (int j = 0; j < C; ++j) dot += Q[row + j] * dQ[row + j];
        for (int j = 0; j < C; ++j) lg[row + j] += Q[row + j] * (dQ[row + j] - dot);
    }
    return loss * inv_n;
}

ModelCheckpoint NtnModel::checkpoint() const {
    ModelCheckpoint c;
    NetworkRecord q;
    q.head = HeadKind::ntn_q;
    q.classes = layer.classes();
    q.params = layer.logits();
    c.networks = {to_record(clean), q};
    return c;
}

NtnModel NtnModel::from_checkpoint(const ModelCheckpoint& ckpt) {
    if (ckpt.networks.size() != 2 || ckpt.networks[1].head != HeadKind::ntn_q) {
        throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint does not hold an NTN model");
    }
    const NetworkRecord& q = ckpt.networks[1];
    NtnModel m{clean_from_record(ckpt.networks[0]), NtnTransitionLayer(q.classes)};
    if (q.params.size() != m.layer.logits().size()) {
        throw CheckpointError(CheckpointError::Kind::shape_mismatch, "NTN layer size does not match its class count");
    }
    m.layer.logits() = q.params;
    return m;
}

NtnResult train_ntn(const TrainingData& data, DirectSource source, const TrainConfig& cfg, const CleanNet* base) {
    cfg.validate();
    if (source == DirectSource::mixture) throw ConfigError("NTN trains on a single noisy label set");
    check_direct_source(data, source);
    data.validate(cfg.num_classes);

    NtnResult result;
    int epoch = 0;
    if (base != nullptr) {
        if (base->spec() != cfg.net_spec()) throw ConfigError("NTN base network does not match the configuration");
        result.model.clean = *base;
    } else {
        UnetResult stage1 = train_unet_direct(data, source, cfg);
        result.model.clean = std::move(stage1.net);
        for (EpochMetrics& m : stage1.log) m.phase = "ntn_base";
        result.log = std::move(stage1.log);
        epoch = cfg.epochs_unet_single;
    }
    result.model.layer = NtnTransitionLayer(cfg.num_classes);

    Sgd opt(cfg.momentum);
    EpochPlan plan(sub_seed(cfg.seed, kOrder + 16), cfg.shuffle);
    const int src = source == DirectSource::noisy1 ? 0 : 1;
    CleanNet& net = result.model.clean;
    NtnTransitionLayer& layer = result.model.layer;
    for (int e = 0; e < cfg.epochs_ntn; ++e, ++epoch) {
        const double lr = cfg.lr_at(epoch);
        Meter meter;
        run_batches(
            plan.order(single_items(data.size(), src)), cfg.batch_size,
            [&](const Item& it, double scale) {
                const double loss = accumulate_ntn_gradient(net, layer, data.images[it.image], labels_of(data, it), scale);
                if (src == 0) {
                    meter.ce1 += loss;
                    ++meter.n_ce1;
                } else {
                    meter.ce2 += loss;
                    ++meter.n_ce2;
                }
                if (!data.clean_ref.empty()) meter.add_reference(data, it.image, net.predict(data.images[it.image]));
            },
            [&] {
                opt.step(net.params(), lr);
                layer.step(lr, cfg.ntn_weight_decay);
            });
        result.log.push_back(meter.finish(epoch, "ntn", lr));
    }
    return result;
}

} // namespace antn
