#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <ostream>

#include "antn/io.hpp"

namespace antn {

namespace {

struct Header {
    int w = 0;
    int h = 0;
    int maxval = 0;
    std::size_t data_offset = 0;
};

class HeaderParser {
public:
    HeaderParser(const std::vector<std::uint8_t>& b, const std::string& name) : b_(b), name_(name) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError(name_ + ": " + msg + " at byte offset " + std::to_string(pos_));
    }

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(b_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int number(const char* what) {
        skip_space_and_comments();
        if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) fail(std::string("expected ") + what);
        long v = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            v = v * 10 + (b_[pos_] - '0');
            if (v > 1'000'000) fail(std::string(what) + " too large");
            ++pos_;
        }
        return static_cast<int>(v);
    }

    Header parse(char kind) {
        if (b_.size() < 2 || b_[0] != 'P' || b_[1] != static_cast<std::uint8_t>(kind)) {
            fail(std::string("not a binary P") + kind + " file (bad magic)");
        }
        pos_ = 2;
        Header h;
        h.w = number("width");
        h.h = number("height");
        h.maxval = number("maxval");
        if (h.w <= 0 || h.h <= 0) fail("image dimensions must be positive");
        if (h.maxval > 255) fail("maxval " + std::to_string(h.maxval) + " unsupported (16-bit netpbm is not handled)");
        if (h.maxval <= 0) fail("maxval must be positive");
        if (pos_ >= b_.size() || !std::isspace(b_[pos_])) fail("expected whitespace after maxval");
        ++pos_;
        h.data_offset = pos_;
        return h;
    }

private:
    const std::vector<std::uint8_t>& b_;
    const std::string& name_;
    std::size_t pos_ = 0;
};

void check_payload(const std::vector<std::uint8_t>& b, const Header& h, std::size_t need, const std::string& name) {
    if (b.size() - h.data_offset < need) {
        throw DataError(name + ": pixel data truncated at byte offset " + std::to_string(b.size()) + " (expected " +
                        std::to_string(h.data_offset + need) + " bytes)");
    }
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> header_bytes(char kind, int w, int h) {
    const std::string s = std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    return {s.begin(), s.end()};
}

} // namespace

Tensor4 decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    const Header h = HeaderParser(bytes, name).parse('6');
    if (h.maxval != 255) throw DataError(name + ": only maxval 255 is supported for PPM images");
    const std::size_t n = static_cast<std::size_t>(h.w) * h.h * 3;
    check_payload(bytes, h, n, name);
    Tensor4 img = Tensor4::image(h.h, h.w, 3);
    for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[h.data_offset + i] / 255.0;
    return img;
}

std::vector<std::uint8_t> encode_ppm(const Tensor4& image) {
    if (image.n != 1 || image.c != 3) throw ConfigError("PPM output needs a single 3-channel image");
    std::vector<std::uint8_t> out = header_bytes('6', image.w, image.h);
    out.reserve(out.size() + image.size());
    for (double v : image.data) out.push_back(to_byte(v));
    return out;
}

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    const Header h = HeaderParser(bytes, name).parse('5');
    const std::size_t n = static_cast<std::size_t>(h.w) * h.h;
    check_payload(bytes, h, n, name);
    GrayImage g{h.h, h.w, {}};
    g.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
    for (std::size_t i = 0; i < n; ++i) {
        if (g.pixels[i] > h.maxval) {
            throw DataError(name + ": gray level " + std::to_string(g.pixels[i]) + " exceeds maxval at byte offset " +
                            std::to_string(h.data_offset + i));
        }
    }
    return g;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.h) * image.w) {
        throw ConfigError("GrayImage: pixel count does not match dimensions");
    }
    std::vector<std::uint8_t> out = header_bytes('5', image.w, image.h);
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path.string());
}

Tensor4 read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path), path.string()); }
void write_ppm(const std::filesystem::path& path, const Tensor4& image) { write_file(path, encode_ppm(image)); }
GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path), path.string()); }
void write_pgm(const std::filesystem::path& path, const GrayImage& image) { write_file(path, encode_pgm(image)); }

LabelField read_labels(const std::filesystem::path& path, int classes) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    const GrayImage g = decode_pgm(bytes, path.string());
    LabelField l(g.h, g.w);
    const std::size_t offset = bytes.size() - g.pixels.size();
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        if (g.pixels[i] >= classes) {
            throw DataError(path.string() + ": label " + std::to_string(g.pixels[i]) + " >= " +
                            std::to_string(classes) + " classes at byte offset " + std::to_string(offset + i));
        }
        l.labels[i] = g.pixels[i];
    }
    return l;
}

void write_labels(const std::filesystem::path& path, const LabelField& labels) {
    GrayImage g{labels.h, labels.w, {}};
    g.pixels.reserve(labels.size());
    for (std::int32_t v : labels.labels) {
        if (v < 0 || v > 255) throw ConfigError("label " + std::to_string(v) + " does not fit a PGM gray level");
        g.pixels.push_back(static_cast<std::uint8_t>(v));
    }
    write_pgm(path, g);
}

std::vector<std::filesystem::path> indexed_files(const std::filesystem::path& dir, std::string_view prefix,
                                                 std::string_view ext) {
    if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name.size() <= prefix.size() + ext.size()) continue;
        if (name.compare(0, prefix.size(), prefix) != 0) continue;
        if (name.compare(name.size() - ext.size(), ext.size(), ext) != 0) continue;
        const std::string_view mid(name.data() + prefix.size(), name.size() - prefix.size() - ext.size());
        if (!std::all_of(mid.begin(), mid.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            continue;
        }
        out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string indexed_name(std::string_view prefix, std::size_t index, std::string_view ext) {
    std::string digits = std::to_string(index);
    if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
    return std::string(prefix) + digits + std::string(ext);
}

void write_synth_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples, int se_size,
                         std::size_t first_index) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t id = first_index + i;
        write_ppm(dir / indexed_name("img_", id, ".ppm"), samples[i].image);
        write_labels(dir / indexed_name("clean_", id, ".pgm"), samples[i].clean);
        write_labels(dir / indexed_name("noisy1_", id, ".pgm"), erode_labels(samples[i].clean, se_size));
        write_labels(dir / indexed_name("noisy2_", id, ".pgm"), dilate_labels(samples[i].clean, se_size));
    }
}

TrainingData load_training_data(const std::filesystem::path& images, const LabelSource& labels1,
                                const LabelSource& labels2, const LabelSource& clean_ref, int classes) {
    TrainingData d;
    std::vector<std::string> ids;
    for (const auto& f : indexed_files(images, "img_", ".ppm")) {
        d.images.push_back(read_ppm(f));
        ids.push_back(f.stem().string().substr(4));
    }
    if (ids.empty()) throw DataError(images.string() + ": no img_####.ppm files");
    const auto load = [&](const LabelSource& src, std::vector<LabelField>& out) {
        if (src.dir.empty()) return;
        for (const std::string& id : ids) out.push_back(read_labels(src.dir / (src.prefix + id + ".pgm"), classes));
    };
    load(labels1, d.noisy1);
    load(labels2, d.noisy2);
    load(clean_ref, d.clean_ref);
    return d;
}

void write_transition_csv(std::ostream& out, const TransitionMatrix& m) {
    out << "true_class";
    for (int k = 0; k < m.classes; ++k) out << ",noisy_" << k;
    out << '\n';
    const auto old_precision = out.precision(10);
    for (int y = 0; y < m.classes; ++y) {
        out << y;
        for (int k = 0; k < m.classes; ++k) {
            out << ',';
            if (m.row_defined[static_cast<std::size_t>(y)]) {
                out << m(y, k);
            } else {
                out << "nan";
            }
        }
        out << '\n';
    }
    out.precision(old_precision);
}

GrayImage transition_heatmap(const TransitionMatrix& m, int cell) {
    if (cell < 1) throw ConfigError("heatmap cell size must be >= 1");
    GrayImage g{m.classes * cell, m.classes * cell, {}};
    g.pixels.assign(static_cast<std::size_t>(g.h) * g.w, 0);
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            const int r = y / cell, c = x / cell;
            const double p = m.row_defined[static_cast<std::size_t>(r)] ? m(r, c) : 0.0;
            g.pixels[static_cast<std::size_t>(y) * g.w + x] = to_byte(p);
        }
    return g;
}

GrayImage probability_map(const ProbabilityField& p, int k) {
    if (k < 0 || k >= p.c) throw ConfigError("probability_map: class out of range");
    GrayImage g{p.h, p.w, {}};
    g.pixels.reserve(p.pixels());
    for (std::size_t i = 0; i < p.pixels(); ++i) g.pixels.push_back(to_byte(p.data[i * p.c + k]));
    return g;
}

} // namespace antn
