#include "antn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace antn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

using Kind = CheckpointError::Kind;

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
        out.insert(out.end(), b, b + sizeof(T));
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what +
                                                       " at offset " + std::to_string(pos_));
        }
    }
    [[nodiscard]] std::size_t pos() const { return pos_; }
    [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::size_t expected_params(const NetworkRecord& r) {
    if (r.head == HeadKind::ntn_q) return static_cast<std::size_t>(r.classes) * r.classes;
    MiniUNetSpec spec;
    spec.num_classes = r.classes;
    spec.base_filters = r.base_filters;
    spec.in_channels = r.in_channels;
    const int head = r.head == HeadKind::clean ? r.classes : r.classes * r.classes;
    return Network(mini_unet_layers(spec, head), spec.in_channels).params().size();
}

MiniUNetSpec spec_of(const NetworkRecord& r) {
    MiniUNetSpec s;
    s.num_classes = r.classes;
    s.base_filters = r.base_filters;
    s.in_channels = r.in_channels;
    return s;
}

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt) {
    Writer w;
    for (char c : kCheckpointMagic) w.put(static_cast<std::uint8_t>(c));
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint32_t>(ckpt.networks.size()));
    for (const NetworkRecord& r : ckpt.networks) {
        w.put(static_cast<std::uint32_t>(r.classes));
        w.put(static_cast<std::uint32_t>(r.base_filters));
        w.put(static_cast<std::uint32_t>(r.in_channels));
        w.put(static_cast<std::uint8_t>(r.head));
        w.put(static_cast<std::uint64_t>(r.params.size()));
        for (double v : r.params) w.put(v);
    }
    return std::move(w.out);
}

ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (bytes.size() < sizeof(kCheckpointMagic) ||
        std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw CheckpointError(Kind::bad_magic, "not an ANTN checkpoint (bad magic)");
    }
    for (std::size_t i = 0; i < sizeof(kCheckpointMagic); ++i) r.get<std::uint8_t>("magic");
    const auto version = r.get<std::uint16_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(Kind::bad_version, "unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = r.get<std::uint32_t>("network count");
    ModelCheckpoint ckpt;
    for (std::uint32_t i = 0; i < count; ++i) {
        NetworkRecord rec;
        rec.classes = static_cast<int>(r.get<std::uint32_t>("classes"));
        rec.base_filters = static_cast<int>(r.get<std::uint32_t>("base_filters"));
        rec.in_channels = static_cast<int>(r.get<std::uint32_t>("in_channels"));
        const auto head = r.get<std::uint8_t>("head kind");
        if (head > static_cast<std::uint8_t>(HeadKind::ntn_q)) {
            throw CheckpointError(Kind::corrupt, "unknown head kind " + std::to_string(head));
        }
        rec.head = static_cast<HeadKind>(head);
        const auto n = r.get<std::uint64_t>("parameter count");
        if (n > r.remaining() / sizeof(double)) {
            throw CheckpointError(Kind::truncated, "checkpoint truncated: network " + std::to_string(i) + " declares " +
                                                       std::to_string(n) + " parameters");
        }
        try {
            if (rec.head != HeadKind::ntn_q) spec_of(rec).validate();
            if (rec.classes < 2) throw ConfigError("classes must be >= 2");
            if (expected_params(rec) != n) throw ConfigError("parameter count does not match the architecture");
        } catch (const ConfigError& e) {
            throw CheckpointError(Kind::corrupt, "network " + std::to_string(i) + ": " + e.what());
        }
        rec.params.resize(static_cast<std::size_t>(n));
        for (double& v : rec.params) v = r.get<double>("parameters");
        ckpt.networks.push_back(std::move(rec));
    }
    if (r.remaining() != 0) {
        throw CheckpointError(Kind::corrupt, "trailing bytes after offset " + std::to_string(r.pos()));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
    const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(Kind::io, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError(Kind::io, "write failed: " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(Kind::io, "cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(e.kind(), path.string() + ": " + e.what());
    }
}

void require_classes(const ModelCheckpoint& ckpt, int classes) {
    for (const NetworkRecord& r : ckpt.networks) {
        if (r.classes != classes) {
            throw CheckpointError(Kind::shape_mismatch, "checkpoint has " + std::to_string(r.classes) +
                                                            " classes, run expects " + std::to_string(classes));
        }
    }
}

NetworkRecord to_record(const CleanNet& net) {
    NetworkRecord r;
    r.head = HeadKind::clean;
    r.classes = net.spec().num_classes;
    r.base_filters = net.spec().base_filters;
    r.in_channels = net.spec().in_channels;
    r.params.assign(net.params().values().begin(), net.params().values().end());
    return r;
}

NetworkRecord to_record(const TransitionNet& net) {
    NetworkRecord r;
    r.head = net.mode() == ReadoutMode::row_softmax ? HeadKind::transition_softmax : HeadKind::transition_remainder;
    r.classes = net.spec().num_classes;
    r.base_filters = net.spec().base_filters;
    r.in_channels = net.spec().in_channels;
    r.params.assign(net.params().values().begin(), net.params().values().end());
    return r;
}

CleanNet clean_from_record(const NetworkRecord& rec) {
    if (rec.head != HeadKind::clean) throw CheckpointError(Kind::shape_mismatch, "expected a clean-label network");
    CleanNet net(spec_of(rec), 0);
    if (net.params().size() != rec.params.size()) {
        throw CheckpointError(Kind::shape_mismatch, "clean network parameter count mismatch");
    }
    net.params().assign(rec.params);
    return net;
}

TransitionNet transition_from_record(const NetworkRecord& rec) {
    if (rec.head != HeadKind::transition_softmax && rec.head != HeadKind::transition_remainder) {
        throw CheckpointError(Kind::shape_mismatch, "expected a transition network");
    }
    const ReadoutMode mode =
        rec.head == HeadKind::transition_softmax ? ReadoutMode::row_softmax : ReadoutMode::uniform_remainder;
    TransitionNet net(spec_of(rec), mode, 0);
    if (net.params().size() != rec.params.size()) {
        throw CheckpointError(Kind::shape_mismatch, "transition network parameter count mismatch");
    }
    net.params().assign(rec.params);
    return net;
}

} // namespace antn
