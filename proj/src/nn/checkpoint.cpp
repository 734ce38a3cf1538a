#include "sgnn/nn/checkpoint.h"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sgnn/util/binio.h"

namespace sgnn::nn {

namespace {

constexpr const char* kMagic = "SGNN-CKPT1";

void write_block(std::ostream& os, const Checkpoint::Block& b) {
    if (b.name.size() > 0xffff) throw std::invalid_argument("checkpoint block name too long");
    util::write_le<uint16_t>(os, static_cast<uint16_t>(b.name.size()));
    os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    util::write_le<uint8_t>(os, static_cast<uint8_t>(b.dims.size()));
    size_t total = 1;
    for (uint32_t d : b.dims) {
        util::write_le<uint32_t>(os, d);
        total *= d;
    }
    if (b.values.size() != total) throw std::invalid_argument("checkpoint block size mismatch: " + b.name);
    for (float v : b.values) util::write_f32(os, v);
}

Checkpoint::Block read_block(std::istream& is) {
    Checkpoint::Block b;
    const uint16_t len = util::read_le<uint16_t>(is);
    b.name.resize(len);
    is.read(b.name.data(), len);
    const uint8_t rank = util::read_le<uint8_t>(is);
    size_t total = 1;
    b.dims.resize(rank);
    for (uint8_t i = 0; i < rank; ++i) {
        b.dims[i] = util::read_le<uint32_t>(is);
        total *= b.dims[i];
    }
    b.values.resize(total);
    for (size_t i = 0; i < total; ++i) b.values[i] = util::read_f32(is);
    return b;
}

}  // namespace

const Checkpoint::Block* Checkpoint::find_param(const std::string& name) const {
    for (const auto& b : params)
        if (b.name == name) return &b;
    return nullptr;
}

const Checkpoint::Block* Checkpoint::find_state(const std::string& name) const {
    for (const auto& b : state)
        if (b.name == name) return &b;
    return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    util::write_magic(os, kMagic);
    std::string header_text;
    for (const auto& [k, v] : ckpt.header) header_text += k + "=" + v + "\n";
    util::write_le<uint32_t>(os, static_cast<uint32_t>(header_text.size()));
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    util::write_le<uint32_t>(os, static_cast<uint32_t>(ckpt.params.size()));
    for (const auto& b : ckpt.params) write_block(os, b);
    util::write_le<uint32_t>(os, static_cast<uint32_t>(ckpt.state.size()));
    for (const auto& b : ckpt.state) write_block(os, b);
    util::write_le<uint64_t>(os, ckpt.iteration);
    if (!os) throw std::runtime_error("write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    util::expect_magic(is, kMagic, path);
    Checkpoint ckpt;
    const uint32_t header_len = util::read_le<uint32_t>(is);
    std::string header_text(header_len, '\0');
    is.read(header_text.data(), header_len);
    std::istringstream hs(header_text);
    std::string line;
    while (std::getline(hs, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
    }
    const uint32_t n_params = util::read_le<uint32_t>(is);
    ckpt.params.reserve(n_params);
    for (uint32_t i = 0; i < n_params; ++i) ckpt.params.push_back(read_block(is));
    const uint32_t n_state = util::read_le<uint32_t>(is);
    ckpt.state.reserve(n_state);
    for (uint32_t i = 0; i < n_state; ++i) ckpt.state.push_back(read_block(is));
    ckpt.iteration = util::read_le<uint64_t>(is);
    return ckpt;
}

}  // namespace sgnn::nn
