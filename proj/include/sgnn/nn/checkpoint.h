#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sgnn::nn {

/// Checkpoint container. Format: magic "SGNN-CKPT1"; u32 length-prefixed
/// key=value text header; u32 count + named parameter blocks
/// (u16 name length, name bytes, u8 rank, rank x u32 dims, f32 values);
/// u32 count + optimizer-state blocks in the same encoding (Adam moments,
/// per-parameter step counts and trainer cursors as rank-0 blocks); then a
/// u64 iteration counter. All little-endian.
struct Checkpoint {
    struct Block {
        std::string name;
        std::vector<uint32_t> dims;
        std::vector<float> values;
    };

    std::map<std::string, std::string> header;
    std::vector<Block> params;
    std::vector<Block> state;
    uint64_t iteration = 0;

    const Block* find_param(const std::string& name) const;
    const Block* find_state(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace sgnn::nn
