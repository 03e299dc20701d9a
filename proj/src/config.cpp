#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

#include "antn/io.hpp"

namespace antn {

namespace {

using Field = std::variant<int*, double*, std::uint64_t*, bool*, ReadoutMode*>;

struct Entry {
    const char* key;
    Field field;
};

std::vector<Entry> entries(RunConfig& c) {
    TrainConfig& t = c.train;
    SynthConfig& s = c.synth;
    return {
        {"num_classes", &t.num_classes},
        {"base_filters", &t.base_filters},
        {"epochs_init_clean", &t.epochs_init_clean},
        {"epochs_transition", &t.epochs_transition},
        {"epochs_alternate", &t.epochs_alternate},
        {"alternate_interval", &t.alternate_interval},
        {"epochs_unet_single", &t.epochs_unet_single},
        {"epochs_ntn", &t.epochs_ntn},
        {"lr_main", &t.lr_main},
        {"lr_final", &t.lr_final},
        {"lr_drop_epoch", &t.lr_drop_epoch},
        {"batch_size", &t.batch_size},
        {"seed", &t.seed},
        {"readout_mode", &t.readout_mode},
        {"ntn_weight_decay", &t.ntn_weight_decay},
        {"momentum", &t.momentum},
        {"transition_diagonal_logit", &t.transition_diagonal_logit},
        {"transition_warm_start", &t.transition_warm_start},
        {"shuffle", &t.shuffle},
        {"image_size", &s.image_size},
        {"images_total", &s.images_total},
        {"radius_min", &s.radius_min},
        {"radius_max", &s.radius_max},
        {"circles_min", &s.circles_min},
        {"circles_max", &s.circles_max},
        {"intensity_mean_dominant", &s.intensity_mean_dominant},
        {"intensity_mean_other", &s.intensity_mean_other},
        {"intensity_std", &s.intensity_std},
        {"se_size", &s.se_size},
        {"synth_seed", &s.seed},
    };
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view v, T& out) {
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    return r.ec == std::errc() && r.ptr == v.data() + v.size();
}

bool assign(const Field& f, std::string_view v) {
    struct Visitor {
        std::string_view v;
        bool operator()(int* p) const { return parse_number(v, *p); }
        bool operator()(double* p) const { return parse_number(v, *p); }
        bool operator()(std::uint64_t* p) const { return parse_number(v, *p); }
        bool operator()(bool* p) const {
            if (v == "true" || v == "1") {
                *p = true;
            } else if (v == "false" || v == "0") {
                *p = false;
            } else {
                return false;
            }
            return true;
        }
        bool operator()(ReadoutMode* p) const {
            if (v == "row_softmax") {
                *p = ReadoutMode::row_softmax;
            } else if (v == "uniform_remainder") {
                *p = ReadoutMode::uniform_remainder;
            } else {
                return false;
            }
            return true;
        }
    };
    return std::visit(Visitor{v}, f);
}

std::string format(const Field& f) {
    struct Visitor {
        std::string operator()(const int* p) const { return std::to_string(*p); }
        std::string operator()(const double* p) const {
            char buf[64];
            const auto r = std::to_chars(buf, buf + sizeof(buf), *p);
            return {buf, r.ptr};
        }
        std::string operator()(const std::uint64_t* p) const { return std::to_string(*p); }
        std::string operator()(const bool* p) const { return *p ? "true" : "false"; }
        std::string operator()(const ReadoutMode* p) const {
            return *p == ReadoutMode::row_softmax ? "row_softmax" : "uniform_remainder";
        }
    };
    return std::visit(Visitor{}, f);
}

} // namespace

RunConfig RunConfig::parse(std::string_view text, std::string_view source) {
    RunConfig c;
    const std::vector<Entry> table = entries(c);
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        const auto it = std::find_if(table.begin(), table.end(), [&](const Entry& e) { return key == e.key; });
        if (it == table.end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
        if (!seen.insert(std::string(key)).second) throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
        if (!assign(it->field, value)) {
            throw ConfigError(where + "bad value '" + std::string(value) + "' for '" + std::string(key) + "'");
        }
    }
    c.train.validate();
    c.synth.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
}

std::string RunConfig::serialize() const {
    RunConfig copy = *this;
    std::string out;
    for (const Entry& e : entries(copy)) out += std::string(e.key) + " = " + format(e.field) + "\n";
    return out;
}

} // namespace antn
