// Command-line driver: data generation, classical segmenters, training,
// prediction and evaluation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "antn/checkpoint.hpp"
#include "antn/datagen.hpp"
#include "antn/io.hpp"
#include "antn/kernels.hpp"
#include "antn/metrics.hpp"
#include "antn/trainer.hpp"

namespace fs = std::filesystem;
using namespace antn;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string index_of(const fs::path& file, std::string_view prefix) {
    return file.stem().string().substr(prefix.size());
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig{} : RunConfig::load(path); }

// ---------------------------------------------------------------------------

struct GenSynthArgs {
    std::string out, config;
    std::optional<std::uint64_t> seed;
    int train_count = -1;
};

void gen_synth(const GenSynthArgs& a) {
    RunConfig rc = load_config(a.config);
    if (a.seed) rc.synth.seed = *a.seed;
    const std::vector<SynthSample> samples = gen_synthetic(rc.synth);
    const std::span<const SynthSample> all(samples);
    if (a.train_count < 0) {
        write_synth_dataset(a.out, all, rc.synth.se_size);
        return;
    }
    const std::size_t k = static_cast<std::size_t>(a.train_count);
    if (k > samples.size()) throw ConfigError("--train-count exceeds images_total");
    write_synth_dataset(fs::path(a.out) / "train", all.first(k), rc.synth.se_size);
    write_synth_dataset(fs::path(a.out) / "test", all.subspan(k), rc.synth.se_size, k);
}

struct SegmentArgs {
    std::string method, in, out;
    int classes = kSynthClasses;
    std::uint64_t seed = 1;
};

void segment(const SegmentArgs& a) {
    const ClassPrototypes protos = ClassPrototypes::defaults(a.classes);
    fs::create_directories(a.out);
    for (const fs::path& f : indexed_files(a.in, "img_", ".ppm")) {
        const Tensor4 img = read_ppm(f);
        const std::string id = index_of(f, "img_");
        LabelField seg;
        if (a.method == "kmeans") {
            seg = kmeans_segment(img, a.classes, protos, a.seed);
        } else {
            std::vector<std::string> warnings;
            seg = otsu_segment(img, a.classes, protos, &warnings);
            for (const std::string& w : warnings) std::cerr << "antn: warning: " << f.filename().string() << ": " << w << '\n';
        }
        write_labels(fs::path(a.out) / ("seg_" + id + ".pgm"), seg);
    }
}

struct NormalizeArgs {
    std::string ref, in, out;
};

void normalize(const NormalizeArgs& a) {
    const Tensor4 ref = read_ppm(a.ref);
    fs::create_directories(a.out);
    for (const fs::path& f : indexed_files(a.in, "img_", ".ppm"))
        write_ppm(fs::path(a.out) / f.filename(), reinhard_normalize(read_ppm(f), ref));
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string method, data, labels1, labels2, clean_ref, config, out, metrics;
    std::string prefix1 = "noisy1_", prefix2 = "noisy2_", clean_prefix = "clean_";
    std::string source;
    std::optional<std::uint64_t> seed;
};

void train(const TrainArgs& a) {
    if (a.method == "antn" && a.labels2.empty()) throw UsageError("train --method antn requires --labels2 (two noisy sources)");
    RunConfig rc = load_config(a.config);
    if (a.seed) rc.train.seed = *a.seed;
    TrainConfig& cfg = rc.train;
    cfg.validate();
    const TrainingData data = load_training_data(a.data, {a.labels1, a.prefix1}, {a.labels2, a.prefix2},
                                                 {a.clean_ref, a.clean_prefix}, cfg.num_classes);

    std::string source = a.source;
    if (source.empty()) source = a.method == "unet" && !a.labels2.empty() ? "mix" : "1";
    if (source == "2" && a.labels2.empty()) throw UsageError("--source 2 requires --labels2");
    if (source == "mix" && a.labels2.empty()) throw UsageError("--source mix requires --labels2");
    const DirectSource src = source == "1" ? DirectSource::noisy1 : source == "2" ? DirectSource::noisy2 : DirectSource::mixture;
    if (a.method == "ntn" && src == DirectSource::mixture) throw UsageError("NTN trains on a single source (--source 1|2)");

    ModelCheckpoint ckpt;
    std::vector<EpochMetrics> log;
    if (a.method == "antn") {
        AntnResult r = train_antn(data, cfg);
        ckpt = r.model.checkpoint();
        log = std::move(r.log);
    } else if (a.method == "ntn") {
        NtnResult r = train_ntn(data, src, cfg);
        ckpt = r.model.checkpoint();
        log = std::move(r.log);
    } else {
        UnetResult r = train_unet_direct(data, src, cfg);
        ckpt.networks = {to_record(r.net)};
        log = std::move(r.log);
    }
    save_checkpoint(a.out, ckpt);
    if (!a.metrics.empty()) {
        std::ofstream out = open_out(a.metrics);
        write_metrics_csv(out, log);
    }
}

// ---------------------------------------------------------------------------

CleanNet clean_net_of(const ModelCheckpoint& ckpt) {
    if (ckpt.networks.empty() || ckpt.networks.front().head != HeadKind::clean) {
        throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint holds no clean-label network");
    }
    return clean_from_record(ckpt.networks.front());
}

struct PredictArgs {
    std::string ckpt, in, out;
    bool probs = false;
};

void predict(const PredictArgs& a) {
    const CleanNet net = clean_net_of(load_checkpoint(a.ckpt));
    fs::create_directories(a.out);
    for (const fs::path& f : indexed_files(a.in, "img_", ".ppm")) {
        const std::string id = index_of(f, "img_");
        const ProbabilityField p = net.predict(read_ppm(f));
        write_labels(fs::path(a.out) / ("pred_" + id + ".pgm"), argmax_labels(p));
        if (!a.probs) continue;
        for (int k = 0; k < p.c; ++k)
            write_pgm(fs::path(a.out) / ("prob" + std::to_string(k) + "_" + id + ".pgm"), probability_map(p, k));
    }
}

struct EvalArgs {
    std::string pred, truth, out;
    std::string truth_prefix = "clean_";
    int classes = kSynthClasses;
};

// Probability dumps written by predict, if present next to the label maps.
std::optional<ProbabilityField> load_prob_dump(const fs::path& dir, const std::string& id, int classes, int h, int w) {
    ProbabilityField p = Tensor4::image(h, w, classes);
    for (int k = 0; k < classes; ++k) {
        const fs::path f = dir / ("prob" + std::to_string(k) + "_" + id + ".pgm");
        if (!fs::exists(f)) return std::nullopt;
        const GrayImage g = read_pgm(f);
        if (g.h != h || g.w != w) throw DataError(f.string() + ": dimensions differ from the label map");
        for (std::size_t i = 0; i < g.pixels.size(); ++i) p.data[i * classes + k] = g.pixels[i] / 255.0;
    }
    return p;
}

void eval(const EvalArgs& a) {
    std::ofstream file;
    if (!a.out.empty()) file = open_out(a.out);
    std::ostream& out = a.out.empty() ? std::cout : file;
    out << "image,accuracy,cross_entropy\n";
    double acc_sum = 0.0, ce_sum = 0.0;
    std::size_t n = 0, n_ce = 0;
    for (const fs::path& f : indexed_files(a.pred, "pred_", ".pgm")) {
        const std::string id = index_of(f, "pred_");
        const LabelField pred = read_labels(f, a.classes);
        const LabelField truth = read_labels(fs::path(a.truth) / (a.truth_prefix + id + ".pgm"), a.classes);
        const double acc = pixel_accuracy(pred, truth);
        acc_sum += acc;
        ++n;
        out << id << ',' << acc << ',';
        if (const auto p = load_prob_dump(a.pred, id, a.classes, pred.h, pred.w)) {
            const double ce = cross_entropy_curve(*p, truth);
            ce_sum += ce;
            ++n_ce;
            out << ce << '\n';
        } else {
            out << "nan\n";
        }
    }
    if (n == 0) throw DataError(a.pred + ": no pred_####.pgm files");
    out << "mean," << acc_sum / static_cast<double>(n) << ',';
    if (n_ce == n) {
        out << ce_sum / static_cast<double>(n) << '\n';
    } else {
        out << "nan\n";
    }
}

struct EvalUnsupArgs {
    std::string pred, images, out;
    std::string pred_prefix = "pred_";
};

void eval_unsup(const EvalUnsupArgs& a) {
    std::ofstream file;
    if (!a.out.empty()) file = open_out(a.out);
    std::ostream& out = a.out.empty() ? std::cout : file;
    out << "image,uniformity_disparity\n";
    for (const fs::path& f : indexed_files(a.pred, a.pred_prefix, ".pgm")) {
        const std::string id = index_of(f, a.pred_prefix);
        const GrayImage g = read_pgm(f);
        LabelField seg(g.h, g.w);
        for (std::size_t i = 0; i < g.pixels.size(); ++i) seg.labels[i] = g.pixels[i];
        const auto r = uniformity_disparity(read_ppm(fs::path(a.images) / ("img_" + id + ".ppm")), seg);
        out << id << ',';
        if (r) {
            out << *r << '\n';
        } else {
            out << "nan\n";
        }
    }
}

struct TransitionsArgs {
    std::string ckpt, data, out, labels1, labels2, clean_ref;
    std::string prefix1 = "noisy1_", prefix2 = "noisy2_", clean_prefix = "clean_";
};

void write_matrix(const std::string& prefix, const std::string& tag, const TransitionMatrix& m) {
    std::ofstream csv = open_out(prefix + tag + ".csv");
    write_transition_csv(csv, m);
    write_pgm(prefix + tag + ".pgm", transition_heatmap(m));
}

void transitions(const TransitionsArgs& a) {
    const ModelCheckpoint ckpt = load_checkpoint(a.ckpt);
    const int C = ckpt.classes();
    const TrainingData data = load_training_data(a.data, {a.labels1, a.prefix1}, {a.labels2, a.prefix2},
                                                 {a.clean_ref, a.clean_prefix}, C);
    std::vector<std::pair<std::string, TransitionMatrix>> learned;
    if (ckpt.networks.size() == 3) {
        const AntnModel m = AntnModel::from_checkpoint(ckpt);
        const bool remainder = m.trans1.mode() == ReadoutMode::uniform_remainder;
        if (remainder && (data.noisy1.empty() || data.noisy2.empty())) {
            throw UsageError("uniform-remainder transition nets need --labels1 and --labels2");
        }
        learned.emplace_back("1", average_transition(m.trans1, data.images, data.noisy1));
        learned.emplace_back("2", average_transition(m.trans2, data.images, data.noisy2));
    } else if (ckpt.networks.size() == 2) {
        const NtnModel m = NtnModel::from_checkpoint(ckpt);
        TransitionMatrix q(C);
        q.values = m.layer.matrix();
        learned.emplace_back("", q);
    } else {
        throw UsageError("checkpoint has no transition model (u-net checkpoints hold only a clean net)");
    }
    for (const auto& [tag, m] : learned) write_matrix(a.out, tag, m);

    if (data.clean_ref.empty()) return;
    const std::vector<LabelField>* sources[2] = {&data.noisy1, &data.noisy2};
    for (int s = 0; s < 2; ++s) {
        if (sources[s]->empty()) continue;
        const TransitionMatrix e = expected_transition(data.clean_ref, *sources[s], C);
        write_matrix(a.out, "expected" + std::to_string(s + 1), e);
        const TransitionMatrix& mine = learned.size() == 2 ? learned[static_cast<std::size_t>(s)].second : learned[0].second;
        std::cout << "source " << s + 1 << " frobenius " << frobenius_distance(mine, e) << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ANTN: segmentation from several noisy label sets"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (overrides ANTN_THREADS)");

    GenSynthArgs gs;
    auto* c_gen = app.add_subcommand("gen-synth", "write a synthetic dataset with erosion/dilation noisy labels");
    c_gen->add_option("--out", gs.out)->required();
    c_gen->add_option("--config", gs.config)->check(CLI::ExistingFile);
    c_gen->add_option("--seed", gs.seed, "overrides synth_seed");
    c_gen->add_option("--train-count", gs.train_count, "split into out/train and out/test")->check(CLI::NonNegativeNumber);

    SegmentArgs sg;
    auto* c_seg = app.add_subcommand("segment", "classical segmentation into seg_####.pgm");
    c_seg->add_option("--method", sg.method)->required()->check(CLI::IsMember({"kmeans", "otsu"}));
    c_seg->add_option("--in", sg.in)->required()->check(CLI::ExistingDirectory);
    c_seg->add_option("--out", sg.out)->required();
    c_seg->add_option("--classes", sg.classes)->check(CLI::Range(2, 4));
    c_seg->add_option("--seed", sg.seed);

    NormalizeArgs nm;
    auto* c_norm = app.add_subcommand("normalize", "Reinhard colour normalisation");
    c_norm->add_option("--ref", nm.ref)->required()->check(CLI::ExistingFile);
    c_norm->add_option("--in", nm.in)->required()->check(CLI::ExistingDirectory);
    c_norm->add_option("--out", nm.out)->required();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "train u-net, NTN or ANTN");
    c_train->add_option("--method", tr.method)->required()->check(CLI::IsMember({"unet", "ntn", "antn"}));
    c_train->add_option("--data", tr.data)->required()->check(CLI::ExistingDirectory);
    c_train->add_option("--labels1", tr.labels1)->required()->check(CLI::ExistingDirectory);
    c_train->add_option("--labels2", tr.labels2)->check(CLI::ExistingDirectory);
    c_train->add_option("--clean-ref", tr.clean_ref)->check(CLI::ExistingDirectory);
    c_train->add_option("--prefix1", tr.prefix1, "file prefix of the first label set")->capture_default_str();
    c_train->add_option("--prefix2", tr.prefix2)->capture_default_str();
    c_train->add_option("--clean-prefix", tr.clean_prefix)->capture_default_str();
    c_train->add_option("--source", tr.source, "unet/ntn label source")->check(CLI::IsMember({"1", "2", "mix"}));
    c_train->add_option("--config", tr.config)->check(CLI::ExistingFile);
    c_train->add_option("--seed", tr.seed, "overrides the training seed");
    c_train->add_option("--out", tr.out)->required();
    c_train->add_option("--metrics", tr.metrics);

    PredictArgs pr;
    auto* c_pred = app.add_subcommand("predict", "argmax label maps pred_####.pgm");
    c_pred->add_option("--ckpt", pr.ckpt)->required()->check(CLI::ExistingFile);
    c_pred->add_option("--in", pr.in)->required()->check(CLI::ExistingDirectory);
    c_pred->add_option("--out", pr.out)->required();
    c_pred->add_flag("--probs", pr.probs, "also dump prob<k>_####.pgm");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "accuracy and cross-entropy against clean labels");
    c_eval->add_option("--pred", ev.pred)->required()->check(CLI::ExistingDirectory);
    c_eval->add_option("--truth", ev.truth)->required()->check(CLI::ExistingDirectory);
    c_eval->add_option("--truth-prefix", ev.truth_prefix)->capture_default_str();
    c_eval->add_option("--classes", ev.classes)->check(CLI::Range(2, 256));
    c_eval->add_option("--out", ev.out, "CSV path (default stdout)");

    EvalUnsupArgs eu;
    auto* c_unsup = app.add_subcommand("eval-unsup", "uniformity/disparity of segmentations");
    c_unsup->add_option("--pred", eu.pred)->required()->check(CLI::ExistingDirectory);
    c_unsup->add_option("--images", eu.images)->required()->check(CLI::ExistingDirectory);
    c_unsup->add_option("--pred-prefix", eu.pred_prefix)->capture_default_str();
    c_unsup->add_option("--out", eu.out, "CSV path (default stdout)");

    TransitionsArgs ta;
    auto* c_trans = app.add_subcommand("transitions", "average learned transition matrices");
    c_trans->add_option("--ckpt", ta.ckpt)->required()->check(CLI::ExistingFile);
    c_trans->add_option("--data", ta.data)->required()->check(CLI::ExistingDirectory);
    c_trans->add_option("--out", ta.out, "output prefix")->required();
    c_trans->add_option("--labels1", ta.labels1)->check(CLI::ExistingDirectory);
    c_trans->add_option("--labels2", ta.labels2)->check(CLI::ExistingDirectory);
    c_trans->add_option("--clean-ref", ta.clean_ref)->check(CLI::ExistingDirectory);
    c_trans->add_option("--prefix1", ta.prefix1)->capture_default_str();
    c_trans->add_option("--prefix2", ta.prefix2)->capture_default_str();
    c_trans->add_option("--clean-prefix", ta.clean_prefix)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "antn: usage error: " << e.what() << '\n';
        return 2;
    }

    kernels::apply_thread_env();
    if (threads > 0) kernels::set_thread_limit(threads);
    try {
        if (*c_gen) gen_synth(gs);
        if (*c_seg) segment(sg);
        if (*c_norm) normalize(nm);
        if (*c_train) train(tr);
        if (*c_pred) predict(pr);
        if (*c_eval) eval(ev);
        if (*c_unsup) eval_unsup(eu);
        if (*c_trans) transitions(ta);
    } catch (const UsageError& e) {
        std::cerr << "antn: usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "antn: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
