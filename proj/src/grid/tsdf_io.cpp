#include "sgnn/grid/tsdf_io.h"

#include <fstream>
#include <stdexcept>

#include "sgnn/util/binio.h"

namespace sgnn::grid {

namespace {
constexpr const char* kMagic = "SGNN-TSDF1";
}

void write_tsdf(const std::string& path, const SparseTSDF& s) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    util::write_magic(os, kMagic);
    util::write_f32(os, s.voxel_size());
    util::write_f32(os, s.truncation());
    const auto coords = s.sorted_coords();
    util::write_le<uint64_t>(os, coords.size());
    for (const auto& c : coords) {
        const TsdfVoxel& v = *s.find(c);
        util::write_le<int32_t>(os, c.x);
        util::write_le<int32_t>(os, c.y);
        util::write_le<int32_t>(os, c.z);
        util::write_f32(os, v.d);
        util::write_f32(os, v.w);
        util::write_le<uint8_t>(os, v.observed ? 1 : 0);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

SparseTSDF read_tsdf(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    util::expect_magic(is, kMagic, path);
    const float voxel_size = util::read_f32(is);
    const float truncation = util::read_f32(is);
    const uint64_t count = util::read_le<uint64_t>(is);
    SparseTSDF s(voxel_size, truncation);
    s.entries().reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        VoxelCoord c;
        c.x = util::read_le<int32_t>(is);
        c.y = util::read_le<int32_t>(is);
        c.z = util::read_le<int32_t>(is);
        TsdfVoxel v;
        v.d = util::read_f32(is);
        v.w = util::read_f32(is);
        v.observed = util::read_le<uint8_t>(is) != 0;
        s.set(c, v);
    }
    return s;
}

void write_mask(const std::string& path, const std::vector<VoxelCoord>& mask, float voxel_size, float truncation) {
    SparseTSDF s(voxel_size, truncation);
    for (const auto& c : mask) s.set(c, TsdfVoxel{0.0f, 1.0f, true});
    write_tsdf(path, s);
}

std::vector<VoxelCoord> read_mask(const std::string& path) {
    return read_tsdf(path).sorted_coords();
}

}  // namespace sgnn::grid
