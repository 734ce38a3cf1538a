#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "common/oracles.h"
#include "sgnn/train/trainer.h"

using namespace sgnn;
using grid::SparseTSDF;
using grid::TsdfVoxel;
using grid::VoxelCoord;
using model::BatchInput;
using model::HierarchyOutput;
using model::ModelConfig;
using model::SGNNModel;
using selfsup::ScanPair;

namespace {

SparseTSDF sphere_with_freespace(int extent, double radius_vox) {
    SparseTSDF s(0.02f, 3.0f);
    const double c = extent / 2.0;
    for (int z = 0; z < extent; ++z)
        for (int y = 0; y < extent; ++y)
            for (int x = 0; x < extent; ++x) {
                const double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c)) - radius_vox;
                if (d >= 3.0 && d < 6.0) {
                    s.set({x, y, z, 0}, TsdfVoxel{3.0f, 1.0f, true});  // observed free space
                } else if (std::abs(d) < 3.0) {
                    s.set({x, y, z, 0}, TsdfVoxel{static_cast<float>(d), 1.0f, true});
                } else if (d <= -3.0 && d > -4.5) {
                    s.set({x, y, z, 0}, TsdfVoxel{-3.0f, 1.0f, false});  // occluded shell
                }
            }
    return s;
}

ScanPair sphere_pair(int extent = 32, double radius = 9.0) {
    ScanPair p;
    p.target = sphere_with_freespace(extent, radius);
    p.input = p.target;
    p.mask = p.target.observed_coords();
    return p;
}

ModelConfig tiny_config(int levels = 3, int width = 4) {
    ModelConfig cfg;
    cfg.num_levels = levels;
    cfg.base_width = width;
    return cfg;
}

train::TrainConfig tiny_train(int iterations, int n_level, uint64_t seed = 3) {
    train::TrainConfig cfg;
    cfg.lr = 0.001f;
    cfg.batch_size = 2;
    cfg.n_level = n_level;
    cfg.iterations = iterations;
    cfg.seed = seed;
    cfg.crop_dx = cfg.crop_dy = cfg.crop_dz = 16;
    return cfg;
}

std::vector<std::vector<float>> snapshot(SGNNModel& m) {
    std::vector<std::vector<float>> out;
    for (auto* p : m.parameters()) out.push_back(p->val);
    return out;
}

}  // namespace

TEST_CASE("active_levels schedule") {
    CHECK(train::active_levels(0, 2000, 4) == 1);
    CHECK(train::active_levels(1999, 2000, 4) == 1);
    CHECK(train::active_levels(2000, 2000, 4) == 2);
    CHECK(train::active_levels(99, 100, 3) == 1);
    CHECK(train::active_levels(100, 100, 3) == 2);
    CHECK(train::active_levels(200, 100, 3) == 3);
    CHECK(train::active_levels(100000, 100, 3) == 3);  // saturates at L
    CHECK_THROWS_AS(train::active_levels(-1, 100, 3), std::invalid_argument);
}

TEST_CASE("total_loss is zero when predictions equal targets in the mask") {
    const ScanPair pair = sphere_pair(24, 7.0);
    const int L = 2;
    const auto targets = train::build_training_targets(std::span(&pair, 1), L);

    model::Tape tape;
    HierarchyOutput out;
    // level 0: dense predictions copied from the level-0 target
    const auto& t0 = targets.levels[0];
    VoxelCoord lo{INT32_MAX, INT32_MAX, INT32_MAX, 0};
    VoxelCoord hi{INT32_MIN, INT32_MIN, INT32_MIN, 0};
    for (const auto& [c, v] : t0.tsdf.entries()) {
        lo.x = std::min(lo.x, c.x); lo.y = std::min(lo.y, c.y); lo.z = std::min(lo.z, c.z);
        hi.x = std::max(hi.x, c.x); hi.y = std::max(hi.y, c.y); hi.z = std::max(hi.z, c.z);
    }
    model::LevelOut lvl0;
    lvl0.dense = true;
    lvl0.stride = 1 << L;
    lvl0.occ_d = tape.new_dense(1, 1, hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1, lo);
    lvl0.sdf_d = tape.new_dense(1, 1, hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1, lo);
    for (const auto& [c, v] : t0.tsdf.entries()) {
        lvl0.sdf_d->val[lvl0.sdf_d->index(0, 0, c.x - lo.x, c.y - lo.y, c.z - lo.z)] = v.d;
        lvl0.occ_d->val[lvl0.occ_d->index(0, 0, c.x - lo.x, c.y - lo.y, c.z - lo.z)] =
            t0.occupied.contains(c) ? 100.0f : -100.0f;
    }
    out.levels.push_back(lvl0);

    // level 1 sparse predictions equal to the level-1 target, final equal to full target
    const auto& t1 = targets.levels[1];
    auto cs1 = nn::CoordSet::make(std::vector<VoxelCoord>(t1.mask.begin(), t1.mask.end()));
    model::LevelOut lvl1;
    lvl1.stride = 1 << (L - 1);
    lvl1.occ = tape.new_sparse(cs1, 1);
    lvl1.sdf = tape.new_sparse(cs1, 1);
    for (int r = 0; r < cs1->size(); ++r) {
        const auto& c = cs1->coords()[r];
        lvl1.sdf->val[r] = t1.tsdf.find(c)->d;
        lvl1.occ->val[r] = t1.occupied.contains(c) ? 100.0f : -100.0f;
    }
    out.levels.push_back(lvl1);

    auto csf = nn::CoordSet::make(std::vector<VoxelCoord>(targets.final_level.mask.begin(),
                                                          targets.final_level.mask.end()));
    out.final_sdf = tape.new_sparse(csf, 1);
    for (int r = 0; r < csf->size(); ++r)
        out.final_sdf->val[r] = targets.final_level.tsdf.find(csf->coords()[r])->d;

    train::LossBreakdown bd;
    ModelConfig cfg = tiny_config(L, 4);
    auto* loss = train::total_loss(tape, out, targets, cfg, train::LossWeights{}, &bd);
    CHECK(loss->val < 1e-10);  // BCE at saturated logits is ~4e-18 per site
    CHECK(bd.l1[0] == 0.0f);
    CHECK(bd.l1[1] == 0.0f);
    CHECK(bd.final_term == 0.0f);
}

TEST_CASE("trivial solution: empty gate with disabled proxies gives zero final loss") {
    const ScanPair pair = sphere_pair(24, 7.0);
    SGNNModel m(tiny_config(2, 4), 5);
    for (auto* p : m.parameters())
        if (p->name == "coarse.occ.b") p->val[0] = -100.0f;
    const BatchInput input = model::make_model_input(std::span(&pair.input, 1), m.config().input_repr);
    model::Tape tape;
    const HierarchyOutput out = m.forward(tape, input, 2, true);  // no augmentation
    train::LossWeights w;
    w.occ = 0.0f;
    w.sdf = 0.0f;
    train::LossBreakdown bd;
    auto* loss = train::total_loss(tape, out, std::span(&pair, 1), m.config(), w, &bd);
    CHECK(loss->val == 0.0f);
    CHECK(bd.final_term == 0.0f);
}

TEST_CASE("mask semantics: unobserved target perturbations leave loss and grads bit-identical") {
    ScanPair a = sphere_pair(28, 8.0);
    // variant b: add occluded-shell entries at absent coords and drop some existing ones
    ScanPair b = a;
    util::Rng rng(17);
    int dropped = 0;
    for (auto it = b.target.entries().begin(); it != b.target.entries().end() && dropped < 50;) {
        if (!it->second.observed && rng.uniform() < 0.5) {
            it = b.target.entries().erase(it);
            ++dropped;
        } else {
            ++it;
        }
    }
    int added = 0;
    for (int i = 0; i < 500 && added < 60; ++i) {
        const VoxelCoord c{static_cast<int32_t>(rng.uniform_int(-4, 31)),
                           static_cast<int32_t>(rng.uniform_int(-4, 31)),
                           static_cast<int32_t>(rng.uniform_int(-4, 31)), 0};
        if (!b.target.find(c)) {
            b.target.set(c, TsdfVoxel{-3.0f, 1.0f, false});
            ++added;
        }
    }
    REQUIRE(dropped > 0);
    REQUIRE(added > 0);
    b.mask = b.target.observed_coords();
    REQUIRE(b.mask == a.mask);

    auto run = [&](const ScanPair& pair) {
        SGNNModel m(tiny_config(2, 4), 5);
        const auto targets = train::build_training_targets(std::span(&pair, 1), 2);
        const auto aug = targets.augmentation();
        const BatchInput input = model::make_model_input(std::span(&pair.input, 1), m.config().input_repr);
        model::Tape tape;
        const HierarchyOutput out = m.forward(tape, input, 2, true, &aug);
        auto* loss = train::total_loss(tape, out, targets, m.config(), train::LossWeights{});
        for (auto* p : m.parameters()) p->zero_grad();
        tape.backward(*loss);
        std::vector<std::vector<float>> grads;
        for (auto* p : m.parameters()) grads.push_back(p->grad);
        return std::make_pair(loss->val, grads);
    };
    const auto ra = run(a);
    const auto rb = run(b);
    CHECK(ra.first == rb.first);
    CHECK(ra.second == rb.second);
}

TEST_CASE("mask semantics: prediction perturbations outside the mask leave loss and grads bit-identical") {
    const ScanPair pair = sphere_pair(28, 8.0);
    const int L = 2;
    const auto targets = train::build_training_targets(std::span(&pair, 1), L);
    const auto aug = targets.augmentation();

    auto run = [&](bool poke) {
        SGNNModel m(tiny_config(L, 4), 7);
        const BatchInput input = model::make_model_input(std::span(&pair.input, 1), m.config().input_repr);
        model::Tape tape;
        HierarchyOutput out = m.forward(tape, input, L, true, &aug);
        if (poke) {
            util::Rng rng(23);
            // dense level 0: poke cells outside the level-0 mask
            auto* sd = out.levels[0].sdf_d;
            for (int z = 0; z < sd->dz; ++z)
                for (int y = 0; y < sd->dy; ++y)
                    for (int x = 0; x < sd->dx; ++x) {
                        const VoxelCoord c{sd->origin.x + x, sd->origin.y + y, sd->origin.z + z, 0};
                        if (!targets.levels[0].mask.contains(c)) {
                            sd->val[sd->index(0, 0, x, y, z)] += static_cast<float>(rng.uniform(-5, 5));
                            out.levels[0].occ_d->val[sd->index(0, 0, x, y, z)] +=
                                static_cast<float>(rng.uniform(-5, 5));
                        }
                    }
            // sparse levels and final: poke rows outside their masks
            for (size_t k = 1; k < out.levels.size(); ++k) {
                auto* occ = out.levels[k].occ;
                auto* sdf = out.levels[k].sdf;
                for (int r = 0; r < occ->cs->size(); ++r)
                    if (!targets.levels[k].mask.contains(occ->cs->coords()[r])) {
                        occ->val[r] += static_cast<float>(rng.uniform(-5, 5));
                        sdf->val[r] += static_cast<float>(rng.uniform(-5, 5));
                    }
            }
            if (out.final_sdf)
                for (int r = 0; r < out.final_sdf->cs->size(); ++r)
                    if (!targets.final_level.mask.contains(out.final_sdf->cs->coords()[r]))
                        out.final_sdf->val[r] += static_cast<float>(rng.uniform(-5, 5));
        }
        auto* loss = train::total_loss(tape, out, targets, m.config(), train::LossWeights{});
        for (auto* p : m.parameters()) p->zero_grad();
        tape.backward(*loss);
        std::vector<std::vector<float>> grads;
        for (auto* p : m.parameters()) grads.push_back(p->grad);
        return std::make_pair(loss->val, grads);
    };
    const auto ra = run(false);
    const auto rb = run(true);
    CHECK(ra.first == rb.first);
    CHECK(ra.second == rb.second);
}

TEST_CASE("loss is invariant to sample order within a batch") {
    const ScanPair p1 = sphere_pair(24, 7.0);
    ScanPair p2 = sphere_pair(24, 5.0);
    auto run = [&](const ScanPair& a, const ScanPair& b) {
        SGNNModel m(tiny_config(2, 4), 9);
        std::vector<ScanPair> batch{a, b};
        std::vector<SparseTSDF> inputs{a.input, b.input};
        const auto targets = train::build_training_targets(batch, 2);
        const auto aug = targets.augmentation();
        const BatchInput input = model::make_model_input(inputs, m.config().input_repr);
        model::Tape tape;
        const HierarchyOutput out = m.forward(tape, input, 2, true, &aug);
        return train::total_loss(tape, out, targets, m.config(), train::LossWeights{})->val;
    };
    const float ab = run(p1, p2);
    const float ba = run(p2, p1);
    CHECK(ab == ba);
}

TEST_CASE("progressive training freezes parameters of inactive levels") {
    std::vector<ScanPair> dataset{sphere_pair(32, 9.0), sphere_pair(32, 6.0)};
    SGNNModel m(tiny_config(3, 4), 11);
    const auto init = snapshot(m);

    std::map<int64_t, std::vector<std::vector<float>>> snaps;
    train::TrainHooks hooks;
    hooks.before_iteration = [&](int64_t iter, SGNNModel& model) {
        if (iter == 0 || iter == 5 || iter == 10) snaps[iter] = snapshot(model);
    };
    std::vector<train::LossBreakdown> breakdowns;
    hooks.after_iteration = [&](int64_t, const train::LossBreakdown& bd, SGNNModel&) {
        breakdowns.push_back(bd);
    };

    auto cfg = tiny_train(15, 5);
    train::train(dataset, m, cfg, &hooks);
    const auto final_params = snapshot(m);

    const auto params = m.parameters();
    auto level_of = [&](const std::string& name) {
        if (name.starts_with("lvl0.")) return 1;
        if (name.starts_with("lvl1.")) return 2;
        if (name.starts_with("refine.")) return 2;  // active only when all levels are
        return 0;  // encoder + coarse
    };
    for (size_t i = 0; i < params.size(); ++i) {
        const int lvl = level_of(params[i]->name);
        // bit-unchanged before the introduction iteration lvl*n_level
        if (lvl >= 1) CHECK(snaps[5][i] == init[i]);
        if (lvl >= 2) CHECK(snaps[10][i] == init[i]);
        // and they move once active
        if (lvl == 0) CHECK(snaps[5][i] != init[i]);
        if (lvl == 1) CHECK(snaps[10][i] != snaps[5][i]);
        if (lvl == 2) CHECK(final_params[i] != snaps[10][i]);
    }

    // the level-2 proxy loss appears exactly at iteration n_level
    CHECK(breakdowns[4].bce[1] == 0.0f);
    CHECK(breakdowns[5].bce[1] != 0.0f);
    CHECK(breakdowns[4].l1[1] == 0.0f);
    CHECK(breakdowns[5].l1[1] != 0.0f);
}

TEST_CASE("resume from checkpoint reproduces the trajectory bit-identically") {
    std::vector<ScanPair> dataset{sphere_pair(32, 9.0), sphere_pair(32, 6.0)};
    const auto tmp = std::filesystem::temp_directory_path() / "sgnn_resume_test";
    std::filesystem::remove_all(tmp);

    auto cfg = tiny_train(12, 4, 13);
    cfg.out_dir = (tmp / "a").string();
    cfg.checkpoint_every = 6;
    SGNNModel ma(tiny_config(3, 4), cfg.seed);
    const auto ra = train::train(dataset, ma, cfg);

    auto cfg_b = cfg;
    cfg_b.out_dir = (tmp / "b").string();
    cfg_b.resume_from = (tmp / "a" / "ckpt_6.ckpt").string();
    SGNNModel mb(tiny_config(3, 4), 999);  // seed irrelevant, parameters come from the checkpoint
    const auto rb = train::train(dataset, mb, cfg_b);

    REQUIRE(ra.csv_rows.size() == 12);
    REQUIRE(rb.csv_rows.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(rb.csv_rows[i] == ra.csv_rows[6 + i]);

    const auto pa = snapshot(ma);
    const auto pb = snapshot(mb);
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
    std::filesystem::remove_all(tmp);
}

TEST_CASE("train rejects an empty dataset") {
    std::vector<ScanPair> empty;
    SGNNModel m(tiny_config(2, 4), 1);
    auto cfg = tiny_train(3, 2);
    CHECK_THROWS_AS(train::train(empty, m, cfg), std::invalid_argument);
}
