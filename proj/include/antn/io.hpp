#pragma once

// Netpbm codecs, key=value run configuration and CSV / heatmap exports.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "antn/datagen.hpp"
#include "antn/metrics.hpp"
#include "antn/tensor.hpp"
#include "antn/trainer.hpp"

namespace antn {

/// Binary P6 with maxval 255; bytes map to [0,1] by /255.
Tensor4 decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>");
/// Values are written as round(255 v), clamped to [0,255].
std::vector<std::uint8_t> encode_ppm(const Tensor4& image);

/// Binary P5 with maxval <= 255, raw gray levels.
struct GrayImage {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> pixels;
};
GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>");
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

Tensor4 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor4& image);
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Label maps store the class index as the gray level. Values >= classes are rejected.
LabelField read_labels(const std::filesystem::path& path, int classes);
void write_labels(const std::filesystem::path& path, const LabelField& labels);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Files named <prefix><digits><ext> in `dir`, sorted by name.
std::vector<std::filesystem::path> indexed_files(const std::filesystem::path& dir, std::string_view prefix,
                                                 std::string_view ext);
/// "<prefix>0007<ext>" style names.
std::string indexed_name(std::string_view prefix, std::size_t index, std::string_view ext);

/// Writes img_####.ppm, clean_####.pgm, noisy1_####.pgm (erosion) and
/// noisy2_####.pgm (dilation) for each sample, numbered from `first_index`.
void write_synth_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples, int se_size,
                         std::size_t first_index = 0);

/// A directory of label maps <prefix>####.pgm. An empty dir means absent.
struct LabelSource {
    std::filesystem::path dir;
    std::string prefix;
};

/// Images img_####.ppm of `images` with the label maps of the same indices.
TrainingData load_training_data(const std::filesystem::path& images, const LabelSource& labels1,
                                const LabelSource& labels2, const LabelSource& clean_ref, int classes);

/// Flat key=value file covering TrainConfig and SynthConfig; `#` starts a comment.
/// The generator seed is `synth_seed`; `seed` is the training seed.
struct RunConfig {
    TrainConfig train;
    SynthConfig synth;

    static RunConfig parse(std::string_view text, std::string_view source = "<config>");
    static RunConfig load(const std::filesystem::path& path);
    [[nodiscard]] std::string serialize() const;
};

/// CSV with header "true_class,noisy_0,...,noisy_{C-1}"; undefined rows are written as "nan".
void write_transition_csv(std::ostream& out, const TransitionMatrix& m);
/// C x C matrix rendered with `cell` x `cell` pixel blocks of gray round(255 p).
GrayImage transition_heatmap(const TransitionMatrix& m, int cell = 16);
/// One gray map of round(255 p) for class k of a probability field.
GrayImage probability_map(const ProbabilityField& p, int k);

} // namespace antn
