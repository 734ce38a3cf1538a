#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sgnn/eval/metrics.h"
#include "sgnn/util/rng.h"

using namespace sgnn;
using eval::MetricsReport;
using grid::CropSpec;
using grid::SparseTSDF;
using grid::TsdfVoxel;
using grid::VoxelCoord;

namespace {

SparseTSDF random_grid(uint64_t seed, int extent, double fill_prob, bool with_unobserved) {
    util::Rng rng(seed);
    SparseTSDF s(0.02f, 3.0f);
    for (int z = 0; z < extent; ++z)
        for (int y = 0; y < extent; ++y)
            for (int x = 0; x < extent; ++x) {
                if (rng.uniform() > fill_prob) continue;
                float d = static_cast<float>(rng.uniform(-3.0, 3.0));
                bool obs = true;
                if (with_unobserved && rng.uniform() < 0.15) {
                    d = -3.0f;
                    obs = false;
                }
                s.set({x, y, z, 0}, TsdfVoxel{d, 1.0f, obs});
            }
    return s;
}

}  // namespace

TEST_CASE("identical grids give an all-zero report") {
    const SparseTSDF t = random_grid(1, 8, 0.7, true);
    const CropSpec box{{0, 0, 0, 0}, 8, 8, 8};
    const MetricsReport rep = eval::l1_metrics(t, t, box);
    CHECK(rep.l1_entire_volume == 0.0);
    CHECK(rep.l1_unobserved == 0.0);
    CHECK(rep.l1_target == 0.0);
    CHECK(rep.l1_predicted == 0.0);
    CHECK(rep.count_entire > 0);
}

TEST_CASE("constant offset within the band shows up as entire-volume error") {
    SparseTSDF t(0.02f, 3.0f);
    SparseTSDF p(0.02f, 3.0f);
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                t.set({x, y, z, 0}, TsdfVoxel{1.0f, 1.0f, true});
                p.set({x, y, z, 0}, TsdfVoxel{1.5f, 1.0f, true});
            }
    const CropSpec box{{0, 0, 0, 0}, 4, 4, 4};
    const MetricsReport rep = eval::l1_metrics(p, t, box);
    CHECK(rep.l1_entire_volume == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(rep.l1_target == doctest::Approx(0.5).epsilon(1e-9));  // |t| = 1 everywhere
    CHECK(rep.count_target == 64);
    CHECK(rep.count_predicted == 0);  // |p| = 1.5 > 1
}

TEST_CASE("metrics match an exhaustive reference on random grids") {
    for (uint64_t seed = 10; seed < 13; ++seed) {
        const SparseTSDF target = random_grid(seed, 16, 0.6, true);
        const SparseTSDF pred = random_grid(seed + 100, 16, 0.5, false);
        const SparseTSDF input = random_grid(seed + 200, 16, 0.4, true);
        const CropSpec box{{0, 0, 0, 0}, 16, 16, 16};
        const MetricsReport rep = eval::l1_metrics(pred, target, box, &input);

        double se = 0, su = 0, st = 0, sp = 0;
        int64_t ce = 0, cu = 0, ct = 0, cp = 0;
        for (int z = 0; z < 16; ++z)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    const VoxelCoord c{x, y, z, 0};
                    const auto* tv = target.find(c);
                    if (!tv || !tv->observed) continue;
                    const auto* pv = pred.find(c);
                    const double ta = std::min(std::abs(double(tv->d)), 3.0);
                    const double pa = pv ? std::min(std::abs(double(pv->d)), 3.0) : 3.0;
                    const double err = std::abs(pa - ta);
                    se += err; ++ce;
                    const auto* iv = input.find(c);
                    if (!iv || !iv->observed) { su += err; ++cu; }
                    if (ta <= 1.0) { st += err; ++ct; }
                    if (pa <= 1.0) { sp += err; ++cp; }
                }
        CHECK(rep.count_entire == ce);
        CHECK(rep.count_unobserved == cu);
        CHECK(rep.count_target == ct);
        CHECK(rep.count_predicted == cp);
        CHECK(std::abs(rep.l1_entire_volume - se / ce) < 1e-9);
        CHECK(std::abs(rep.l1_unobserved - su / cu) < 1e-9);
        CHECK(std::abs(rep.l1_target - st / ct) < 1e-9);
        CHECK(std::abs(rep.l1_predicted - sp / cp) < 1e-9);
    }
}

TEST_CASE("swapping pred and target swaps the region metrics on fully observed grids") {
    // full coverage keeps the target-observed masking symmetric under the swap
    const SparseTSDF a = random_grid(21, 10, 1.0, false);
    const SparseTSDF b = random_grid(22, 10, 1.0, false);
    const CropSpec box{{0, 0, 0, 0}, 10, 10, 10};
    const MetricsReport ab = eval::l1_metrics(a, b, box);
    const MetricsReport ba = eval::l1_metrics(b, a, box);
    CHECK(ab.l1_entire_volume == doctest::Approx(ba.l1_entire_volume).epsilon(1e-12));
    CHECK(ab.l1_target == doctest::Approx(ba.l1_predicted).epsilon(1e-12));
    CHECK(ab.l1_predicted == doctest::Approx(ba.l1_target).epsilon(1e-12));
}

TEST_CASE("metrics ignore entries outside the evaluation box") {
    const SparseTSDF t = random_grid(31, 8, 0.7, false);
    SparseTSDF p = random_grid(32, 8, 0.7, false);
    const CropSpec box{{0, 0, 0, 0}, 8, 8, 8};
    const MetricsReport before = eval::l1_metrics(p, t, box);
    p.set({50, 50, 50, 0}, TsdfVoxel{0.1f, 1.0f, true});
    const MetricsReport after = eval::l1_metrics(p, t, box);
    CHECK(before.l1_entire_volume == after.l1_entire_volume);
    CHECK(before.count_entire == after.count_entire);
}

TEST_CASE("voxel size mismatch is an argument error") {
    SparseTSDF a(0.02f, 3.0f), b(0.05f, 3.0f);
    a.set({0, 0, 0, 0}, TsdfVoxel{1, 1, true});
    b.set({0, 0, 0, 0}, TsdfVoxel{1, 1, true});
    const CropSpec box{{0, 0, 0, 0}, 2, 2, 2};
    CHECK_THROWS_AS(eval::l1_metrics(a, b, box), std::invalid_argument);
}

TEST_CASE("completion recall: nothing completed and everything completed") {
    synth::Scene scene;
    scene.primitives.emplace_back(synth::SpherePrim{synth::Vec3(0.2, 0.2, 0.2), 0.1});
    scene.extent = Eigen::AlignedBox3d(synth::Vec3(0, 0, 0), synth::Vec3(0.4, 0.4, 0.4));
    const double vs = 0.02;

    // input covers half the sphere (x < 0.2), ground truth the whole surface
    SparseTSDF input(0.02f, 3.0f);
    SparseTSDF full(0.02f, 3.0f);
    for (int z = -5; z <= 25; ++z)
        for (int y = -5; y <= 25; ++y)
            for (int x = -5; x <= 25; ++x) {
                const synth::Vec3 p(x * vs, y * vs, z * vs);
                const double d = scene.sdf(p) / vs;
                if (std::abs(d) < 1.0) {
                    full.set({x, y, z, 0}, TsdfVoxel{static_cast<float>(d), 1.0f, true});
                    if (x * vs < 0.2) input.set({x, y, z, 0}, TsdfVoxel{static_cast<float>(d), 1.0f, true});
                }
            }
    CHECK(eval::completion_recall(input, scene, input) == 0.0);
    CHECK(eval::completion_recall(full, scene, input) == doctest::Approx(1.0));
    const double half = eval::completion_recall(full, scene, full);
    CHECK(half == 0.0);  // no missing surface when the input is complete
}
