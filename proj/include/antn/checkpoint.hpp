#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "antn/segnets.hpp"
#include "antn/tensor.hpp"

namespace antn {

enum class HeadKind : std::uint8_t { clean = 0, transition_softmax = 1, transition_remainder = 2, ntn_q = 3 };

/// One stored network: descriptor plus flat parameters. NTN transition
/// layers store the C x C logit table with base_filters = in_channels = 0.
struct NetworkRecord {
    HeadKind head = HeadKind::clean;
    int classes = 0;
    int base_filters = 0;
    int in_channels = 0;
    std::vector<double> params;

    bool operator==(const NetworkRecord&) const = default;
};

/// Networks in a fixed order per method:
///   u-net: [clean]; NTN: [clean, ntn_q]; ANTN: [clean, transition 1, transition 2].
struct ModelCheckpoint {
    std::vector<NetworkRecord> networks;

    [[nodiscard]] int classes() const { return networks.empty() ? 0 : networks.front().classes; }
    bool operator==(const ModelCheckpoint&) const = default;
};

class CheckpointError : public DataError {
public:
    enum class Kind { io, bad_magic, bad_version, truncated, corrupt, shape_mismatch };

    CheckpointError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr char kCheckpointMagic[5] = {'A', 'N', 'T', 'N', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointError(shape_mismatch) unless every network has `classes` classes.
void require_classes(const ModelCheckpoint& ckpt, int classes);

NetworkRecord to_record(const CleanNet& net);
NetworkRecord to_record(const TransitionNet& net);
CleanNet clean_from_record(const NetworkRecord& rec);
TransitionNet transition_from_record(const NetworkRecord& rec);

} // namespace antn
