// Acceptance suite: end-to-end property checks at pinned tolerances, one
// pass/fail line per criterion. Runs everything by default; pass criterion
// numbers as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common/fd_cases.h"
#include "common/oracles.h"
#include "sgnn/eval/metrics.h"
#include "sgnn/grid/grid_ops.h"
#include "sgnn/mesh/marching_cubes.h"
#include "sgnn/model/model.h"
#include "sgnn/selfsup/selfsup.h"
#include "sgnn/synth/synth.h"
#include "sgnn/train/trainer.h"

using namespace sgnn;
using grid::CropSpec;
using grid::SparseTSDF;
using grid::TsdfVoxel;
using grid::VoxelCoord;
using model::BatchInput;
using model::HierarchyOutput;
using model::ModelConfig;
using model::SGNNModel;
using selfsup::ScanPair;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define ACCEPT(cond)                                                                                  \
    do {                                                                                              \
        if (!(cond)) throw CheckFailure(std::string(#cond) + " at line " + std::to_string(__LINE__)); \
    } while (0)

// ---------------------------------------------------------------------------
// shared synthetic data

struct SceneData {
    uint64_t seed = 0;
    synth::Scene scene;
    std::vector<synth::DepthFrame> frames;
    ScanPair pair;  // input 50% of frames, target all frames
};

fusion::FusionConfig accept_fusion_cfg() {
    fusion::FusionConfig cfg;  // 2 cm voxels, truncation 3
    cfg.max_depth = 4.5f;
    return cfg;
}

// first seeds whose room footprint stays small keep fusion volumes bounded
std::vector<uint64_t> pick_scene_seeds(int count, double max_extent = 4.2) {
    std::vector<uint64_t> seeds;
    for (uint64_t s = 0; static_cast<int>(seeds.size()) < count && s < 1000; ++s) {
        const synth::Scene scene = synth::make_room_scene(s);
        if (scene.extent.max().x() - scene.extent.min().x() <= max_extent) seeds.push_back(s);
    }
    return seeds;
}

SceneData make_scene_data(uint64_t seed, int n_frames) {
    SceneData d;
    d.seed = seed;
    d.scene = synth::make_room_scene(seed);
    const auto poses = synth::sample_trajectory(d.scene, n_frames, util::derive_seed(seed, 0xf0a));
    const synth::CameraIntrinsics k = synth::default_intrinsics();
    d.frames.reserve(poses.size());
    for (const auto& p : poses) d.frames.push_back(synth::render_depth(d.scene, p, k));
    d.pair = selfsup::build_pair(d.frames, 0.5, 1.0, accept_fusion_cfg(), util::derive_seed(seed, 0xb1d));
    return d;
}

// plain voxel-unit masked l1 over pred coords inside the mask
double masked_plain_l1(const SparseTSDF& pred, const SparseTSDF& target, const grid::CoordSetU& mask,
                       size_t* count_out = nullptr) {
    double sum = 0.0;
    size_t count = 0;
    for (const auto& [c, v] : pred.entries()) {
        if (!mask.contains(c)) continue;
        const auto* t = target.find(c);
        const double td = t ? t->d : target.truncation();
        sum += std::abs(v.d - td);
        ++count;
    }
    if (count_out) *count_out = count;
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

SparseTSDF infer(SGNNModel& m, const SparseTSDF& input) {
    const BatchInput bi = model::make_model_input(std::span(&input, 1), m.config().input_repr);
    model::Tape tape;
    const HierarchyOutput out = m.forward(tape, bi, m.config().num_levels, false, nullptr);
    return model::final_to_tsdf(out, input.voxel_size(), m.config().truncation, m.config().output_repr);
}

// handcrafted pair with observed free space and an occluded shell, for the
// cheap structural criteria
SparseTSDF sphere_with_freespace(int extent, double radius_vox) {
    SparseTSDF s(0.02f, 3.0f);
    const double c = extent / 2.0;
    for (int z = 0; z < extent; ++z)
        for (int y = 0; y < extent; ++y)
            for (int x = 0; x < extent; ++x) {
                const double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c)) - radius_vox;
                if (d >= 3.0 && d < 6.0) s.set({x, y, z, 0}, TsdfVoxel{3.0f, 1.0f, true});
                else if (std::abs(d) < 3.0) s.set({x, y, z, 0}, TsdfVoxel{static_cast<float>(d), 1.0f, true});
                else if (d <= -3.0 && d > -4.5) s.set({x, y, z, 0}, TsdfVoxel{-3.0f, 1.0f, false});
            }
    return s;
}

ScanPair sphere_pair(int extent, double radius_vox) {
    ScanPair p;
    p.target = sphere_with_freespace(extent, radius_vox);
    p.input = p.target;
    p.mask = p.target.observed_coords();
    return p;
}

// training protocol shared by criteria 6 and 10
struct OverfitResult {
    SGNNModel model;
    train::TrainResult log;
};

OverfitResult run_overfit_training(const std::vector<ScanPair>& dataset, uint64_t seed) {
    ModelConfig mcfg;
    mcfg.num_levels = 3;
    mcfg.base_width = 8;
    train::TrainConfig tcfg;
    tcfg.lr = 0.001f;
    tcfg.batch_size = 8;
    tcfg.n_level = 100;
    tcfg.iterations = 300;
    tcfg.seed = seed;
    tcfg.crop_dx = 32;
    tcfg.crop_dy = 32;
    tcfg.crop_dz = 64;
    OverfitResult r{SGNNModel(mcfg, seed), {}};
    r.log = train::train(dataset, r.model, tcfg);
    return r;
}

// ---------------------------------------------------------------------------
// criteria

void criterion1_gradient_harness(std::string& detail) {
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        for (const auto& c : testutil::make_fd_cases(seed)) {
            const double err = testutil::max_rel_fd_error(c.problem);
            worst = std::max(worst, err);
            if (err >= 1e-4)
                throw CheckFailure(c.name + " seed " + std::to_string(seed) + " rel err " + std::to_string(err));
        }
    }
    detail = "16 ops x 5 instances, worst rel err " + std::to_string(worst);
}

void criterion2_oracle_equivalence(std::string& detail) {
    using namespace testutil;
    util::Rng rng(2024);
    double worst_conv = 0.0;

    // subm_conv3 vs dense reference
    for (int inst = 0; inst < 4; ++inst) {
        const int cin = 2, cout = 3, extent = 8;
        auto cs = nn::CoordSet::make(random_coords(rng, 40, extent, 1));
        nn::Tape<double> tape;
        auto* x = tape.new_sparse(cs, cin);
        for (auto& v : x->val) v = rng.uniform(-1, 1);
        nn::Parameter<double> w("w", {27, cin, cout}), b("b", {cout});
        for (auto& v : w.val) v = rng.uniform(-1, 1);
        for (auto& v : b.val) v = rng.uniform(-1, 1);
        auto* y = nn::subm_conv3(tape, x, w, b);
        DenseRef xd(1, cin, extent, extent, extent);
        for (int r = 0; r < cs->size(); ++r) {
            const auto& c = cs->coords()[r];
            for (int ci = 0; ci < cin; ++ci) xd.at(0, ci, c.x, c.y, c.z) = x->val[static_cast<size_t>(r) * cin + ci];
        }
        const DenseRef yd = conv3_ref(xd, w.val, b.val, 3, 3, 3, cout, 1, 1);
        for (int r = 0; r < cs->size(); ++r) {
            const auto& c = cs->coords()[r];
            for (int co = 0; co < cout; ++co)
                worst_conv = std::max(worst_conv, std::abs(y->val[static_cast<size_t>(r) * cout + co] -
                                                           yd.at(0, co, c.x, c.y, c.z)));
        }
    }

    // sparse_downconv2 on a fully populated block vs dense stride-2 reference
    for (int inst = 0; inst < 4; ++inst) {
        const int cin = 2, cout = 2;
        std::vector<VoxelCoord> coords;
        for (int x = 0; x < 8; ++x)
            for (int y = 0; y < 8; ++y)
                for (int z = 0; z < 4; ++z) coords.push_back({x, y, z, 0});
        auto cs = nn::CoordSet::make(coords);
        nn::Tape<double> tape;
        auto* x = tape.new_sparse(cs, cin);
        for (auto& v : x->val) v = rng.uniform(-1, 1);
        nn::Parameter<double> w("w", {8, cin, cout}), b("b", {cout});
        for (auto& v : w.val) v = rng.uniform(-1, 1);
        for (auto& v : b.val) v = rng.uniform(-1, 1);
        auto* y = nn::sparse_downconv2(tape, x, w, b);
        DenseRef xd(1, cin, 8, 8, 4);
        for (int r = 0; r < cs->size(); ++r) {
            const auto& c = cs->coords()[r];
            for (int ci = 0; ci < cin; ++ci) xd.at(0, ci, c.x, c.y, c.z) = x->val[static_cast<size_t>(r) * cin + ci];
        }
        const DenseRef yd = conv3_ref(xd, w.val, b.val, 2, 2, 2, cout, 2, 0);
        for (int r = 0; r < y->cs->size(); ++r) {
            const auto& c = y->cs->coords()[r];
            for (int co = 0; co < cout; ++co)
                worst_conv = std::max(worst_conv, std::abs(y->val[static_cast<size_t>(r) * cout + co] -
                                                           yd.at(0, co, c.x, c.y, c.z)));
        }
    }

    // dense_conv3 vs the 6-loop reference
    for (int inst = 0; inst < 4; ++inst) {
        const int cin = 2, cout = 2;
        nn::Tape<double> tape;
        auto* x = tape.new_dense(2, cin, 8, 7, 6, VoxelCoord{0, 0, 0, 0});
        for (auto& v : x->val) v = rng.uniform(-1, 1);
        nn::Parameter<double> w("w", {3, 3, 3, cin, cout}), b("b", {cout});
        for (auto& v : w.val) v = rng.uniform(-1, 1);
        for (auto& v : b.val) v = rng.uniform(-1, 1);
        auto* y = nn::dense_conv3(tape, x, w, b, 1, 1);
        DenseRef xd(2, cin, 8, 7, 6);
        xd.v = x->val;
        const DenseRef yd = conv3_ref(xd, w.val, b.val, 3, 3, 3, cout, 1, 1);
        for (size_t i = 0; i < yd.v.size(); ++i) worst_conv = std::max(worst_conv, std::abs(y->val[i] - yd.v[i]));
    }
    ACCEPT(worst_conv < 1e-10);

    // fusion vs brute-force per-voxel-per-frame oracle on a 2-frame scene
    const synth::Scene scene = synth::make_room_scene(pick_scene_seeds(1)[0]);
    const auto poses = synth::sample_trajectory(scene, 2, 77);
    const synth::CameraIntrinsics k = synth::default_intrinsics();
    std::vector<synth::DepthFrame> frames;
    for (const auto& p : poses) frames.push_back(synth::render_depth(scene, p, k));
    const fusion::FusionConfig cfg = accept_fusion_cfg();
    const SparseTSDF fused = fusion::fuse(frames, cfg);
    ACCEPT(fused.size() > 10000);
    double worst_fuse = 0.0;
    for (const auto& [c, v] : fused.entries()) {
        const auto ref = fuse_voxel_ref(c, frames, cfg);
        ACCEPT(ref.has_value());
        worst_fuse = std::max(worst_fuse, std::abs(ref->first - v.d));
        ACCEPT(std::abs(ref->second - v.w) == 0.0);
    }
    // absent voxels have no oracle contribution either
    for (int i = 0; i < 3000; ++i) {
        const VoxelCoord c{static_cast<int32_t>(rng.uniform_int(-10, 230)),
                           static_cast<int32_t>(rng.uniform_int(-10, 230)),
                           static_cast<int32_t>(rng.uniform_int(-10, 150)), 0};
        if (fused.find(c)) continue;
        ACCEPT(!fuse_voxel_ref(c, frames, cfg).has_value());
    }
    ACCEPT(worst_fuse < 1e-5);
    std::ostringstream os;
    os << "conv worst " << worst_conv << ", fusion worst " << worst_fuse << " over " << fused.size() << " voxels";
    detail = os.str();
}

void criterion3_mask_semantics(std::string& detail) {
    ModelConfig mcfg;
    mcfg.num_levels = 2;
    mcfg.base_width = 4;

    // (a) target perturbations at unobserved/absent coordinates
    ScanPair a = sphere_pair(28, 8.0);
    ScanPair b = a;
    util::Rng rng(31);
    int dropped = 0, added = 0;
    for (auto it = b.target.entries().begin(); it != b.target.entries().end() && dropped < 40;) {
        if (!it->second.observed && rng.uniform() < 0.5) {
            it = b.target.entries().erase(it);
            ++dropped;
        } else ++it;
    }
    for (int i = 0; i < 500 && added < 40; ++i) {
        const VoxelCoord c{static_cast<int32_t>(rng.uniform_int(-4, 31)),
                           static_cast<int32_t>(rng.uniform_int(-4, 31)),
                           static_cast<int32_t>(rng.uniform_int(-4, 31)), 0};
        if (!b.target.find(c)) {
            b.target.set(c, TsdfVoxel{-3.0f, 1.0f, false});
            ++added;
        }
    }
    ACCEPT(dropped > 0 && added > 0);
    b.mask = b.target.observed_coords();
    ACCEPT(b.mask == a.mask);

    auto run_full = [&](const ScanPair& pair) {
        SGNNModel m(mcfg, 41);
        const auto targets = train::build_training_targets(std::span(&pair, 1), mcfg.num_levels);
        const auto aug = targets.augmentation();
        const BatchInput input = model::make_model_input(std::span(&pair.input, 1), mcfg.input_repr);
        model::Tape tape;
        const HierarchyOutput out = m.forward(tape, input, mcfg.num_levels, true, &aug);
        auto* loss = train::total_loss(tape, out, targets, mcfg, train::LossWeights{});
        for (auto* p : m.parameters()) p->zero_grad();
        tape.backward(*loss);
        std::vector<std::vector<float>> grads;
        for (auto* p : m.parameters()) grads.push_back(p->grad);
        return std::make_pair(loss->val, grads);
    };
    const auto ra = run_full(a);
    const auto rb = run_full(b);
    ACCEPT(ra.first == rb.first);
    ACCEPT(ra.second == rb.second);

    // (b) prediction perturbations at coordinates outside the mask
    const auto targets = train::build_training_targets(std::span(&a, 1), mcfg.num_levels);
    const auto aug = targets.augmentation();
    auto run_poke = [&](bool poke) {
        SGNNModel m(mcfg, 43);
        const BatchInput input = model::make_model_input(std::span(&a.input, 1), mcfg.input_repr);
        model::Tape tape;
        HierarchyOutput out = m.forward(tape, input, mcfg.num_levels, true, &aug);
        if (poke) {
            util::Rng prng(53);
            auto* sd = out.levels[0].sdf_d;
            for (int z = 0; z < sd->dz; ++z)
                for (int y = 0; y < sd->dy; ++y)
                    for (int x = 0; x < sd->dx; ++x) {
                        const VoxelCoord c{sd->origin.x + x, sd->origin.y + y, sd->origin.z + z, 0};
                        if (!targets.levels[0].mask.contains(c)) {
                            sd->val[sd->index(0, 0, x, y, z)] += static_cast<float>(prng.uniform(-5, 5));
                            out.levels[0].occ_d->val[sd->index(0, 0, x, y, z)] +=
                                static_cast<float>(prng.uniform(-5, 5));
                        }
                    }
            for (size_t k = 1; k < out.levels.size(); ++k)
                for (int r = 0; r < out.levels[k].occ->cs->size(); ++r)
                    if (!targets.levels[k].mask.contains(out.levels[k].occ->cs->coords()[r])) {
                        out.levels[k].occ->val[r] += static_cast<float>(prng.uniform(-5, 5));
                        out.levels[k].sdf->val[r] += static_cast<float>(prng.uniform(-5, 5));
                    }
            if (out.final_sdf)
                for (int r = 0; r < out.final_sdf->cs->size(); ++r)
                    if (!targets.final_level.mask.contains(out.final_sdf->cs->coords()[r]))
                        out.final_sdf->val[r] += static_cast<float>(prng.uniform(-5, 5));
        }
        auto* loss = train::total_loss(tape, out, targets, mcfg, train::LossWeights{});
        for (auto* p : m.parameters()) p->zero_grad();
        tape.backward(*loss);
        std::vector<std::vector<float>> grads;
        for (auto* p : m.parameters()) grads.push_back(p->grad);
        return std::make_pair(loss->val, grads);
    };
    const auto pa = run_poke(false);
    const auto pb = run_poke(true);
    ACCEPT(pa.first == pb.first);
    ACCEPT(pa.second == pb.second);
    detail = "target and prediction perturbations: loss and all parameter grads bit-identical";
}

void criterion4_gate_exactness(std::string& detail) {
    size_t total = 0;
    for (uint64_t seed = 100; seed < 110; ++seed) {
        util::Rng rng(seed);
        auto cs = nn::CoordSet::make(testutil::random_coords(rng, 60, 7, 2));
        model::Tape tape;
        auto* occ = tape.new_sparse(cs, 1);
        for (auto& v : occ->val) v = static_cast<float>(rng.uniform(-3, 3));
        // exact zeros and epsilon logits included
        for (int r = 0; r < std::min(6, cs->size()); ++r) occ->val[r] = (r % 2) ? 1e-9f : 0.0f;
        auto* feats = tape.new_sparse(cs, 2);
        auto* sdf = tape.new_sparse(cs, 1);
        auto* gated = nn::sparsify_gate(tape, occ, feats, sdf);

        grid::CoordSetU expected;
        for (int r = 0; r < cs->size(); ++r)
            if (nn::stable_sigmoid(occ->val[r]) > 0.5f) expected.insert(cs->coords()[r]);
        ACCEPT(static_cast<size_t>(gated->cs->size()) == expected.size());
        for (const auto& c : gated->cs->coords()) ACCEPT(expected.contains(c));
        // logit exactly 0 is excluded (sigmoid == 0.5, strict >)
        ACCEPT(gated->cs->find(cs->coords()[0]) < 0);
        total += expected.size();
    }
    detail = "10 randomized scans with exact-zero logits, " + std::to_string(total) + " gated coords matched";
}

void criterion5_progressive_schedule(std::string& detail) {
    ACCEPT(train::active_levels(1999, 2000, 4) == 1);
    ACCEPT(train::active_levels(2000, 2000, 4) == 2);
    ACCEPT(train::active_levels(99, 100, 3) == 1);
    ACCEPT(train::active_levels(100, 100, 3) == 2);
    ACCEPT(train::active_levels(5000, 100, 3) == 3);

    std::vector<ScanPair> dataset{sphere_pair(32, 9.0), sphere_pair(32, 6.0)};
    ModelConfig mcfg;
    mcfg.num_levels = 3;
    mcfg.base_width = 4;
    SGNNModel m(mcfg, 61);
    std::vector<std::vector<float>> init;
    for (auto* p : m.parameters()) init.push_back(p->val);

    std::map<int64_t, std::vector<std::vector<float>>> snaps;
    train::TrainHooks hooks;
    hooks.before_iteration = [&](int64_t iter, SGNNModel& model) {
        if (iter == 100 || iter == 200) {
            auto& s = snaps[iter];
            for (auto* p : model.parameters()) s.push_back(p->val);
        }
    };
    train::TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.n_level = 100;
    tcfg.iterations = 300;
    tcfg.seed = 71;
    tcfg.crop_dx = tcfg.crop_dy = tcfg.crop_dz = 16;
    train::train(dataset, m, tcfg, &hooks);

    const auto params = m.parameters();
    int frozen_checked = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params[i]->name;
        const int intro = name.starts_with("lvl0.") ? 100
                          : (name.starts_with("lvl1.") || name.starts_with("refine.")) ? 200
                          : 0;
        if (intro >= 100) {
            ACCEPT(snaps[100][i] == init[i]);  // bit-unchanged before level 2 starts
            ++frozen_checked;
        }
        if (intro >= 200) ACCEPT(snaps[200][i] == init[i]);
        // every parameter moves once its level is active
        if (intro == 0) ACCEPT(snaps[100][i] != init[i]);
        if (intro == 100) ACCEPT(snaps[200][i] != init[i]);
        if (intro == 200) ACCEPT(params[i]->val != snaps[200][i]);
    }
    ACCEPT(frozen_checked > 10);
    detail = "levels introduced at 0/100/200; " + std::to_string(params.size()) + " parameter tensors checked";
}

std::vector<SceneData>* g_scene_data = nullptr;
OverfitResult* g_overfit = nullptr;

void ensure_scene_data() {
    if (g_scene_data) return;
    static std::vector<SceneData> data;
    const auto seeds = pick_scene_seeds(3);
    if (seeds.size() != 3) throw CheckFailure("could not pick scene seeds");
    for (int i = 0; i < 3; ++i) data.push_back(make_scene_data(seeds[i], 24));
    g_scene_data = &data;
}

void criterion6_overfit_completion(std::string& detail) {
    ensure_scene_data();
    auto& data = *g_scene_data;
    std::vector<ScanPair> dataset{data[0].pair, data[1].pair};
    static OverfitResult result = run_overfit_training(dataset, 2025);
    g_overfit = &result;

    // masked l1 in plain voxel units over fresh training-distribution crops
    double sum = 0.0;
    size_t count = 0;
    int crops_used = 0;
    for (int i = 0; i < 16; ++i) {
        const ScanPair& src = dataset[i % 2];
        ScanPair crop;
        try {
            crop = selfsup::random_crop_pair(src, 32, 32, 64, util::derive_seed(4242, i));
        } catch (const selfsup::CropError&) {
            continue;
        }
        const SparseTSDF pred = infer(result.model, crop.input);
        grid::CoordSetU mask(crop.mask.begin(), crop.mask.end());
        size_t n = 0;
        const double l1 = masked_plain_l1(pred, crop.target, mask, &n);
        sum += l1 * static_cast<double>(n);
        count += n;
        ++crops_used;
    }
    ACCEPT(crops_used >= 8);
    ACCEPT(count > 10000);
    const double final_l1 = sum / static_cast<double>(count);

    // completion recall on a training scene: geometry generated where the
    // input scan observed nothing
    const SparseTSDF pred_full = infer(result.model, data[0].pair.input);
    const double recall = eval::completion_recall(pred_full, data[0].scene, data[0].pair.input);

    std::ostringstream os;
    os << "final masked l1 " << final_l1 << " (< 0.2), completion recall " << recall << " (> 0.25)";
    detail = os.str();
    ACCEPT(final_l1 < 0.2);
    ACCEPT(recall > 0.25);
}

void criterion7_fully_convolutional(std::string& detail) {
    ensure_scene_data();
    auto& data = *g_scene_data;
    // brief training at the paper's crop size, then inference on a larger volume
    std::vector<ScanPair> dataset{data[0].pair, data[1].pair};
    ModelConfig mcfg;
    mcfg.num_levels = 3;
    mcfg.base_width = 8;
    SGNNModel m(mcfg, 77);
    train::TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.n_level = 2;
    tcfg.iterations = 6;
    tcfg.seed = 78;
    tcfg.crop_dx = 64;
    tcfg.crop_dy = 64;
    tcfg.crop_dz = 128;
    train::train(dataset, m, tcfg);

    // a 96x96x160 working volume from the full scene
    const ScanPair big = selfsup::random_crop_pair(data[0].pair, 96, 96, 160, 4321);
    const BatchInput bi = model::make_model_input(std::span(&big.input, 1), mcfg.input_repr);
    model::Tape tape;
    const HierarchyOutput a = m.forward(tape, bi, mcfg.num_levels, false);
    ACCEPT(!a.levels.empty());

    // shift by 2^L: all outputs translate exactly, values bit-identical
    SparseTSDF shifted(big.input.voxel_size(), big.input.truncation());
    const VoxelCoord t{8, 0, 0, 0};
    for (const auto& [c, v] : big.input.entries()) shifted.set(c + t, v);
    const BatchInput bi2 = model::make_model_input(std::span(&shifted, 1), mcfg.input_repr);
    model::Tape tape2;
    const HierarchyOutput b = m.forward(tape2, bi2, mcfg.num_levels, false);

    ACCEPT(a.levels.size() == b.levels.size());
    for (size_t k = 1; k < a.levels.size(); ++k) {
        ACCEPT(a.levels[k].occ->val == b.levels[k].occ->val);
        ACCEPT(a.levels[k].sdf->val == b.levels[k].sdf->val);
        const int sx = 8 / a.levels[k].stride;
        for (int r = 0; r < a.levels[k].occ->cs->size(); ++r) {
            const auto& ca = a.levels[k].occ->cs->coords()[r];
            const auto& cb = b.levels[k].occ->cs->coords()[r];
            ACCEPT(cb.x - ca.x == sx && cb.y == ca.y && cb.z == ca.z);
        }
    }
    ACCEPT((a.final_sdf != nullptr) == (b.final_sdf != nullptr));
    size_t final_count = 0;
    if (a.final_sdf) {
        ACCEPT(a.final_sdf->val == b.final_sdf->val);
        for (int r = 0; r < a.final_sdf->cs->size(); ++r) {
            const auto& ca = a.final_sdf->cs->coords()[r];
            const auto& cb = b.final_sdf->cs->coords()[r];
            ACCEPT(cb.x - ca.x == 8 && cb.y == ca.y && cb.z == ca.z);
        }
        final_count = static_cast<size_t>(a.final_sdf->cs->size());
    }
    detail = "96x96x160 volume, " + std::to_string(final_count) + " final coords, bit-identical under shift";
}

void criterion8_meshing(std::string& detail) {
    const double r = 0.2;
    const float vs = 0.02f, tau = 3.0f;
    SparseTSDF s(vs, tau);
    const int rv = static_cast<int>(std::ceil(r / vs + tau + 1));
    for (int z = -rv; z <= rv; ++z)
        for (int y = -rv; y <= rv; ++y)
            for (int x = -rv; x <= rv; ++x) {
                const double d = (std::sqrt(double(x) * x + double(y) * y + double(z) * z) * vs - r) / vs;
                if (std::abs(d) < tau) s.set({x, y, z, 0}, TsdfVoxel{static_cast<float>(d), 1.0f, true});
                else if (d <= -tau) s.set({x, y, z, 0}, TsdfVoxel{-tau, 1.0f, false});
            }
    const mesh::TriangleMesh m = mesh::marching_cubes(s);
    ACCEPT(m.triangles.size() > 1000);
    ACCEPT(m.is_closed_manifold());
    const double area = m.surface_area();
    const double want = 4.0 * M_PI * r * r;
    ACCEPT(std::abs(area - want) / want < 0.05);

    SparseTSDF pos(vs, tau);
    for (int i = 0; i < 20; ++i) pos.set({i, i, i, 0}, TsdfVoxel{2.0f, 1.0f, true});
    const mesh::TriangleMesh empty = mesh::marching_cubes(pos);
    ACCEPT(empty.vertices.empty() && empty.triangles.empty());

    std::ostringstream os;
    os << "sphere area " << area << " vs " << want << " (" << std::abs(area - want) / want * 100
       << "% off), closed manifold; all-positive field empty";
    detail = os.str();
}

void criterion9_metrics(std::string& detail) {
    util::Rng rng(90);
    double worst = 0.0;
    for (int inst = 0; inst < 3; ++inst) {
        SparseTSDF target(0.02f, 3.0f), pred(0.02f, 3.0f), input(0.02f, 3.0f);
        for (int z = 0; z < 16; ++z)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    if (rng.uniform() < 0.6) {
                        const bool unobs = rng.uniform() < 0.15;
                        target.set({x, y, z, 0},
                                   TsdfVoxel{unobs ? -3.0f : static_cast<float>(rng.uniform(-3, 3)), 1.0f, !unobs});
                    }
                    if (rng.uniform() < 0.5)
                        pred.set({x, y, z, 0}, TsdfVoxel{static_cast<float>(rng.uniform(-3, 3)), 1.0f, true});
                    if (rng.uniform() < 0.4)
                        input.set({x, y, z, 0}, TsdfVoxel{static_cast<float>(rng.uniform(-3, 3)), 1.0f, true});
                }
        const CropSpec box{{0, 0, 0, 0}, 16, 16, 16};
        const eval::MetricsReport rep = eval::l1_metrics(pred, target, box, &input);

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
        ACCEPT(rep.count_entire == ce && rep.count_unobserved == cu && rep.count_target == ct &&
               rep.count_predicted == cp);
        worst = std::max({worst, std::abs(rep.l1_entire_volume - se / ce), std::abs(rep.l1_unobserved - su / cu),
                          std::abs(rep.l1_target - st / ct), std::abs(rep.l1_predicted - sp / cp)});
    }
    ACCEPT(worst < 1e-9);

    SparseTSDF same(0.02f, 3.0f);
    for (int i = 0; i < 50; ++i)
        same.set({static_cast<int32_t>(rng.uniform_int(0, 9)), static_cast<int32_t>(rng.uniform_int(0, 9)),
                  static_cast<int32_t>(rng.uniform_int(0, 9)), 0},
                 TsdfVoxel{static_cast<float>(rng.uniform(-3, 3)), 1.0f, true});
    const eval::MetricsReport zero = eval::l1_metrics(same, same, CropSpec{{0, 0, 0, 0}, 10, 10, 10});
    ACCEPT(zero.l1_entire_volume == 0.0 && zero.l1_unobserved == 0.0 && zero.l1_target == 0.0 &&
           zero.l1_predicted == 0.0);
    std::ostringstream os;
    os << "exhaustive reference max deviation " << worst;
    detail = os.str();
}

void criterion10_ablation_direction(std::string& detail) {
    if (!g_overfit || !g_scene_data) throw CheckFailure("requires criterion 6 to run first");
    auto& data = *g_scene_data;
    // crop-removal self-supervision on the same scenes and budget
    std::vector<ScanPair> crops_dataset{
        selfsup::crops_baseline_pair(data[0].pair.target, util::derive_seed(7, 0)),
        selfsup::crops_baseline_pair(data[1].pair.target, util::derive_seed(7, 1))};
    OverfitResult crops_model = run_overfit_training(crops_dataset, 2025);

    // held-out scene: the same frame-removal input scan for both models
    const SceneData& held = data[2];
    const SparseTSDF pred_frames = infer(g_overfit->model, held.pair.input);
    const SparseTSDF pred_crops = infer(crops_model.model, held.pair.input);
    const double recall_frames = eval::completion_recall(pred_frames, held.scene, held.pair.input);
    const double recall_crops = eval::completion_recall(pred_crops, held.scene, held.pair.input);

    std::ostringstream os;
    os << "held-out recall: frame-removal " << recall_frames << " vs crops " << recall_crops;
    detail = os.str();
    ACCEPT(recall_crops <= recall_frames);
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    auto want = [&](int id) { return only.empty() || only.count(id); };

    int failures = 0;
    auto run = [&](int id, const std::string& name, const std::function<void(std::string&)>& fn) {
        if (!want(id)) return;
        const auto t0 = std::chrono::steady_clock::now();
        std::string det;
        bool ok = true;
        try {
            fn(det);
        } catch (const std::exception& e) {
            ok = false;
            det = e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %2d. %-30s (%.1fs) %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), secs, det.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    };

    run(1, "gradient harness", criterion1_gradient_harness);
    run(2, "oracle equivalence", criterion2_oracle_equivalence);
    run(3, "mask semantics", criterion3_mask_semantics);
    run(4, "gate exactness", criterion4_gate_exactness);
    run(5, "progressive schedule", criterion5_progressive_schedule);
    run(6, "overfit completion", criterion6_overfit_completion);
    run(7, "fully-convolutional inference", criterion7_fully_convolutional);
    run(8, "meshing", criterion8_meshing);
    run(9, "metrics", criterion9_metrics);
    run(10, "self-supervision ablation", criterion10_ablation_direction);

    if (failures == 0) std::printf("acceptance: all criteria passed\n");
    else std::printf("acceptance: %d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
