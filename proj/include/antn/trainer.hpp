#pragma once

// EM training of the clean-label and transition networks, and the direct and
// NTN baselines.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "antn/checkpoint.hpp"
#include "antn/segnets.hpp"
#include "antn/tensor.hpp"

namespace antn {

struct TrainConfig {
    int num_classes = 4;
    int base_filters = 16;
    int epochs_init_clean = 100;   // phase A; also the u-net mixture budget
    int epochs_transition = 200;   // phase B
    int epochs_alternate = 200;    // phase C
    int alternate_interval = 10;
    int epochs_unet_single = 200;  // u-net on one source; NTN stage 1
    int epochs_ntn = 150;          // NTN stage 2
    double lr_main = 1e-4;
    double lr_final = 1e-5;
    int lr_drop_epoch = 450;
    int batch_size = 1;
    std::uint64_t seed = 1;
    ReadoutMode readout_mode = ReadoutMode::row_softmax;
    double ntn_weight_decay = 1e-3;
    double momentum = 0.0;
    bool shuffle = true;
    double transition_diagonal_logit = 0.0;  // head bias of both transition nets at init
    bool transition_warm_start = false;      // phase B starts from the clean trunk

    void validate() const;
    [[nodiscard]] MiniUNetSpec net_spec() const;
    /// lr_main before lr_drop_epoch (global epoch index), lr_final from then on.
    [[nodiscard]] double lr_at(int epoch) const;
};

/// Images with up to two noisy label sets and optional clean references
/// (used only for logging).
struct TrainingData {
    std::vector<Tensor4> images;
    std::vector<LabelField> noisy1;
    std::vector<LabelField> noisy2;
    std::vector<LabelField> clean_ref;

    [[nodiscard]] std::size_t size() const { return images.size(); }
    void validate(int classes) const;
};

struct EStepResult {
    ProbabilityField posterior;
    std::size_t fallbacks = 0;  // pixels whose normaliser underflowed; prior used instead
};

/// posterior(y) proportional to col(y) * clean(y) at every pixel.
EStepResult e_step_single(const ProbabilityField& clean, const ProbabilityField& col);
/// posterior(y) proportional to col1(y) * col2(y) * clean(y) at every pixel.
EStepResult e_step_joint(const ProbabilityField& clean, const ProbabilityField& col1, const ProbabilityField& col2);

enum class Likelihood { L1, L2, L3 };

/// Mean per-pixel log marginal likelihood. L1 and L2 use only the matching column.
double marginal_log_likelihood(const ProbabilityField& clean, const ProbabilityField& col1,
                               const ProbabilityField& col2, Likelihood which);

/// One plain SGD step on a transition net; returns the loss before the step.
double m_step_transition(TransitionNet& net, const Tensor4& image, const LabelField& noisy,
                         const ProbabilityField& posterior, double lr);
/// One plain SGD step on the clean net; returns the loss before the step.
double m_step_clean(CleanNet& net, const Tensor4& image, const ProbabilityField& posterior, double lr);

/// One row of the metrics log. Quantities that do not apply are NaN.
struct EpochMetrics {
    int epoch = 0;
    std::string phase;
    double L1 = 0, L2 = 0, L3 = 0;
    double ce_clean = 0, ce_noisy1 = 0, ce_noisy2 = 0;
    double R1 = 0, R2 = 0;
    double lr = 0;
    std::size_t estep_fallbacks = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,phase,L1,L2,L3,ce_clean,ce_noisy1,ce_noisy2,R1,R2,lr";
void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& log);

struct AntnModel {
    CleanNet clean;
    TransitionNet trans1;
    TransitionNet trans2;

    [[nodiscard]] ModelCheckpoint checkpoint() const;
    static AntnModel from_checkpoint(const ModelCheckpoint& ckpt);
};

using AntnObserver = std::function<void(const EpochMetrics&, const AntnModel&)>;

struct AntnResult {
    AntnModel model;
    std::vector<EpochMetrics> log;
};

/// Networks as train_antn creates them before the first epoch.
AntnModel initial_antn_model(const TrainConfig& cfg);
/// Clean network as every trainer initialises it for `cfg`.
CleanNet initial_clean_net(const TrainConfig& cfg);

/// Phase A: clean net on the mixture. Phase B: transition nets with the clean
/// net frozen. Phase C: alternate {transition nets} and {clean net}, starting
/// with the transition nets. `observe` runs after every epoch.
AntnResult train_antn(const TrainingData& data, const TrainConfig& cfg, const AntnObserver& observe = {});

enum class DirectSource { noisy1, noisy2, mixture };

struct UnetResult {
    CleanNet net;
    std::vector<EpochMetrics> log;
};

/// Per-pixel cross-entropy on one source or on the mixture (every image once
/// per source per epoch). Default budget: epochs_unet_single or epochs_init_clean.
UnetResult train_unet_direct(const TrainingData& data, DirectSource source, const TrainConfig& cfg,
                             int epochs = -1);

/// Accumulates the cross-entropy gradient of one image for a direct step and
/// returns the loss. Exposed for gradient-equivalence checks.
double accumulate_direct_gradient(CleanNet& net, const Tensor4& image, const LabelField& labels, double scale);

/// Global C x C noise layer; rows are softmaxes of the logits.
class NtnTransitionLayer {
public:
    NtnTransitionLayer() = default;
    explicit NtnTransitionLayer(int classes, double diagonal_logit = 6.0);

    [[nodiscard]] int classes() const { return classes_; }
    [[nodiscard]] std::vector<double> matrix() const;
    std::vector<double>& logits() { return logits_; }
    [[nodiscard]] const std::vector<double>& logits() const { return logits_; }
    std::vector<double>& grads() { return grads_; }

    /// q(k) = sum_y Q[y,k] p(y) at every pixel.
    [[nodiscard]] ProbabilityField compose(const ProbabilityField& clean) const;
    /// Adds weight_decay * logits to the logit gradient, steps, and clears the gradient.
    void step(double lr, double weight_decay);

private:
    int classes_ = 0;
    std::vector<double> logits_;
    std::vector<double> grads_;
};

struct NtnModel {
    CleanNet clean;
    NtnTransitionLayer layer;

    [[nodiscard]] ModelCheckpoint checkpoint() const;
    static NtnModel from_checkpoint(const ModelCheckpoint& ckpt);
};

struct NtnResult {
    NtnModel model;
    std::vector<EpochMetrics> log;
};

/// Loss -(1/N) sum_n log q(noisy_n) of the composed prediction; accumulates the
/// gradients of the clean net and the layer logits (scaled by `scale`).
double accumulate_ntn_gradient(CleanNet& net, NtnTransitionLayer& layer, const Tensor4& image,
                               const LabelField& noisy, double scale);

/// Stage 1 trains the base net directly on `source` for epochs_unet_single
/// epochs unless `base` is given; stage 2 trains base and layer jointly for
/// epochs_ntn epochs.
NtnResult train_ntn(const TrainingData& data, DirectSource source, const TrainConfig& cfg,
                    const CleanNet* base = nullptr);

} // namespace antn
