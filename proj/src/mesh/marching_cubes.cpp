#include "sgnn/mesh/marching_cubes.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "mc_tables.h"

namespace sgnn::mesh {

using grid::SparseTSDF;
using grid::VoxelCoord;
using grid::VoxelCoordHash;

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

struct EdgeKey {
    VoxelCoord low;
    int axis;
    bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
    size_t operator()(const EdgeKey& k) const {
        return VoxelCoordHash{}(k.low) * 31 + static_cast<size_t>(k.axis);
    }
};

}  // namespace

double TriangleMesh::surface_area() const {
    double area = 0.0;
    for (const auto& t : triangles) {
        const auto& a = vertices[t[0]];
        const auto& b = vertices[t[1]];
        const auto& c = vertices[t[2]];
        const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
        const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
        const double cx = uy * vz - uz * vy, cy = uz * vx - ux * vz, cz = ux * vy - uy * vx;
        area += 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
    }
    return area;
}

bool TriangleMesh::is_closed_manifold() const {
    if (triangles.empty()) return false;
    std::map<std::pair<uint32_t, uint32_t>, int> edge_count;
    for (const auto& t : triangles) {
        for (int e = 0; e < 3; ++e) {
            const uint32_t a = t[e], b = t[(e + 1) % 3];
            edge_count[{std::min(a, b), std::max(a, b)}] += 1;
        }
    }
    for (const auto& [e, n] : edge_count)
        if (n != 2) return false;
    return true;
}

TriangleMesh marching_cubes(const SparseTSDF& s) {
    TriangleMesh mesh;
    const double tau = s.truncation();
    const double vs = s.voxel_size();

    std::vector<VoxelCoord> cubes;
    cubes.reserve(s.size() * 8);
    for (const auto& [c, v] : s.entries())
        for (int ox = 0; ox <= 1; ++ox)
            for (int oy = 0; oy <= 1; ++oy)
                for (int oz = 0; oz <= 1; ++oz) cubes.push_back(VoxelCoord{c.x - ox, c.y - oy, c.z - oz, c.batch});
    std::sort(cubes.begin(), cubes.end());
    cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());

    std::unordered_map<EdgeKey, uint32_t, EdgeKeyHash> edge_vertex;

    for (const auto& cube : cubes) {
        double val[8];
        int ci = 0;
        for (int i = 0; i < 8; ++i) {
            const VoxelCoord corner{cube.x + kCorner[i][0], cube.y + kCorner[i][1], cube.z + kCorner[i][2],
                                    cube.batch};
            const grid::TsdfVoxel* v = s.find(corner);
            val[i] = v ? v->d : tau;
            if (val[i] < 0.0) ci |= 1 << i;
        }
        const int edges = kEdgeTable[ci];
        if (edges == 0) continue;

        uint32_t vert_on_edge[12];
        for (int e = 0; e < 12; ++e) {
            if (!(edges & (1 << e))) continue;
            const int a = kEdgeCorners[e][0], b = kEdgeCorners[e][1];
            VoxelCoord ca{cube.x + kCorner[a][0], cube.y + kCorner[a][1], cube.z + kCorner[a][2], cube.batch};
            VoxelCoord cb{cube.x + kCorner[b][0], cube.y + kCorner[b][1], cube.z + kCorner[b][2], cube.batch};
            double va = val[a], vb = val[b];
            int axis;
            if (ca.x != cb.x) axis = 0;
            else if (ca.y != cb.y) axis = 1;
            else axis = 2;
            if (cb < ca) {
                std::swap(ca, cb);
                std::swap(va, vb);
            }
            const EdgeKey key{ca, axis};
            auto it = edge_vertex.find(key);
            if (it == edge_vertex.end()) {
                const double t = (0.0 - va) / (vb - va);
                std::array<double, 3> p{ca.x * vs, ca.y * vs, ca.z * vs};
                p[static_cast<size_t>(axis)] += t * vs;
                mesh.vertices.push_back(p);
                it = edge_vertex.emplace(key, static_cast<uint32_t>(mesh.vertices.size() - 1)).first;
            }
            vert_on_edge[e] = it->second;
        }

        const int* tri = kTriTable[ci];
        for (int i = 0; tri[i] != -1; i += 3) {
            mesh.triangles.push_back({vert_on_edge[tri[i]], vert_on_edge[tri[i + 1]], vert_on_edge[tri[i + 2]]});
        }
    }
    return mesh;
}

void write_ply(const std::string& path, const TriangleMesh& mesh) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "ply\nformat ascii 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    os << "element face " << mesh.triangles.size() << "\n";
    os << "property list uchar int vertex_indices\nend_header\n";
    os << std::setprecision(9);
    for (const auto& v : mesh.vertices) os << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    for (const auto& t : mesh.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace sgnn::mesh
