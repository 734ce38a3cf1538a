#include "sgnn/train/trainer.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sgnn/grid/grid_ops.h"
#include "sgnn/util/rng.h"

namespace sgnn::train {

using grid::SparseTSDF;
using grid::VoxelCoord;
using model::Scalar;

int active_levels(int64_t iteration, int n_level, int num_levels) {
    if (iteration < 0) throw std::invalid_argument("active_levels: negative iteration");
    return static_cast<int>(std::min<int64_t>(1 + iteration / n_level, num_levels));
}

model::GateAugmentation TrainingTargets::augmentation() const {
    model::GateAugmentation aug;
    aug.per_level.reserve(levels.size());
    for (const auto& lt : levels) aug.per_level.push_back(lt.occupied_sorted);
    return aug;
}

namespace {

void merge_level(LevelTargets& lt, const SparseTSDF& s, int batch) {
    if (lt.tsdf.empty()) lt.tsdf = SparseTSDF(s.voxel_size(), s.truncation());
    const float tau = s.truncation();
    for (const auto& [c, v] : s.entries()) {
        const VoxelCoord tagged{c.x, c.y, c.z, batch};
        lt.tsdf.set(tagged, v);
        if (v.observed) lt.mask.insert(tagged);
        if (std::abs(v.d) < tau) {
            lt.occupied.insert(tagged);
            lt.occupied_sorted.push_back(tagged);
        }
    }
}

}  // namespace

TrainingTargets build_training_targets(std::span<const selfsup::ScanPair> crops, int num_levels) {
    TrainingTargets tgt;
    tgt.levels.resize(num_levels);
    for (size_t s = 0; s < crops.size(); ++s) {
        const SparseTSDF restricted = crops[s].target.observed_only();
        merge_level(tgt.final_level, restricted, static_cast<int>(s));
        SparseTSDF cur = restricted;
        for (int j = 1; j <= num_levels; ++j) {
            cur = grid::downsample_target(cur, 2);
            merge_level(tgt.levels[num_levels - j], cur, static_cast<int>(s));
        }
    }
    for (auto& lt : tgt.levels) std::sort(lt.occupied_sorted.begin(), lt.occupied_sorted.end());
    std::sort(tgt.final_level.occupied_sorted.begin(), tgt.final_level.occupied_sorted.end());
    return tgt;
}

nn::ScalarNode<Scalar>* total_loss(model::Tape& tape, const model::HierarchyOutput& out,
                                   const TrainingTargets& targets, const model::ModelConfig& cfg,
                                   const LossWeights& weights, LossBreakdown* breakdown) {
    const int L = cfg.num_levels;
    if (breakdown) {
        breakdown->bce.assign(L, 0.0f);
        breakdown->l1.assign(L, 0.0f);
        breakdown->final_term = 0.0f;
    }
    std::vector<std::pair<Scalar, nn::ScalarNode<Scalar>*>> terms;
    for (size_t k = 0; k < out.levels.size(); ++k) {
        const auto& lvl = out.levels[k];
        const LevelTargets& lt = targets.levels[k];
        nn::ScalarNode<Scalar>* bce = nullptr;
        nn::ScalarNode<Scalar>* l1 = nullptr;
        if (lvl.dense) {
            std::vector<VoxelCoord> inside;
            for (const auto& c : lt.mask)
                if (lvl.occ_d->contains(c)) inside.push_back(c);
            if (inside.empty()) continue;
            auto cs = nn::CoordSet::make(std::move(inside));
            auto* occ_sp = nn::to_sparse(tape, lvl.occ_d, cs);
            auto* sdf_sp = nn::to_sparse(tape, lvl.sdf_d, cs);
            bce = nn::bce_logits(tape, occ_sp, lt.occupied, lt.mask);
            l1 = nn::masked_l1_logtsdf(tape, sdf_sp, lt.tsdf, lt.mask);
        } else {
            bce = nn::bce_logits(tape, lvl.occ, lt.occupied, lt.mask);
            l1 = nn::masked_l1_logtsdf(tape, lvl.sdf, lt.tsdf, lt.mask);
        }
        terms.emplace_back(weights.occ, bce);
        terms.emplace_back(weights.sdf, l1);
        if (breakdown) {
            breakdown->bce[k] = bce->val;
            breakdown->l1[k] = l1->val;
        }
    }
    if (out.final_sdf) {
        nn::ScalarNode<Scalar>* fterm;
        if (cfg.output_repr == model::OutputRepr::kTsdf) {
            fterm = nn::masked_l1_logtsdf(tape, out.final_sdf, targets.final_level.tsdf, targets.final_level.mask);
        } else {
            fterm = nn::bce_logits(tape, out.final_sdf, targets.final_level.occupied, targets.final_level.mask);
        }
        terms.emplace_back(weights.final_sdf, fterm);
        if (breakdown) breakdown->final_term = fterm->val;
    }
    auto* total = nn::weighted_sum(tape, terms);
    if (breakdown) breakdown->total = total->val;
    return total;
}

nn::ScalarNode<Scalar>* total_loss(model::Tape& tape, const model::HierarchyOutput& out,
                                   std::span<const selfsup::ScanPair> crops, const model::ModelConfig& cfg,
                                   const LossWeights& weights, LossBreakdown* breakdown) {
    const TrainingTargets targets = build_training_targets(crops, cfg.num_levels);
    return total_loss(tape, out, targets, cfg, weights, breakdown);
}

// ---------------------------------------------------------------------------

namespace {

// u64 as four f32 limbs so cursors survive the f32 block encoding exactly
std::vector<float> encode_u64(uint64_t v) {
    std::vector<float> out(4);
    for (int i = 0; i < 4; ++i) out[i] = static_cast<float>((v >> (16 * i)) & 0xffff);
    return out;
}

uint64_t decode_u64(const std::vector<float>& limbs) {
    uint64_t v = 0;
    for (int i = 0; i < 4 && i < static_cast<int>(limbs.size()); ++i)
        v |= static_cast<uint64_t>(static_cast<uint32_t>(limbs[i])) << (16 * i);
    return v;
}

std::vector<size_t> epoch_permutation(uint64_t seed, uint64_t epoch, size_t n) {
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    util::Rng rng(util::derive_seed(seed, 0xe90c4, epoch));
    rng.shuffle(perm);
    return perm;
}

std::string format_row(int64_t iter, int levels, const LossBreakdown& bd) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << iter << ',' << levels << ',' << bd.total;
    for (size_t k = 0; k < bd.bce.size(); ++k) os << ',' << bd.bce[k] << ',' << bd.l1[k];
    os << ',' << bd.final_term;
    return os.str();
}

}  // namespace

std::string csv_header(int num_levels) {
    std::string h = "iteration,active_levels,total";
    for (int k = 0; k < num_levels; ++k) {
        h += ",bce" + std::to_string(k) + ",l1_" + std::to_string(k);
    }
    h += ",final";
    return h;
}

TrainResult train(const std::vector<selfsup::ScanPair>& dataset, model::SGNNModel& model, const TrainConfig& cfg,
                  const TrainHooks* hooks) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1 || cfg.n_level < 1 || cfg.lr <= 0.0f)
        throw std::invalid_argument("train: invalid config");
    const int L = model.config().num_levels;
    const auto all_params = model.parameters();

    int64_t start_iter = 0;
    uint64_t cursor = 0;
    if (!cfg.resume_from.empty()) {
        const nn::Checkpoint ckpt = nn::read_checkpoint(cfg.resume_from);
        model.load_parameters(ckpt);
        for (auto* p : all_params) {
            if (const auto* m = ckpt.find_state(p->name + ".m")) p->m = m->values;
            if (const auto* v = ckpt.find_state(p->name + ".v")) p->v = v->values;
            if (const auto* t = ckpt.find_state(p->name + ".t")) p->step = static_cast<int64_t>(decode_u64(t->values));
        }
        if (const auto* c = ckpt.find_state("trainer.cursor")) cursor = decode_u64(c->values);
        start_iter = static_cast<int64_t>(ckpt.iteration);
    }

    auto save_checkpoint = [&](const std::string& path, int64_t next_iter) {
        nn::Checkpoint ckpt = model.to_checkpoint();
        for (auto* p : all_params) {
            if (p->m.empty()) continue;
            std::vector<uint32_t> dims;
            for (int d : p->dims) dims.push_back(static_cast<uint32_t>(d));
            ckpt.state.push_back({p->name + ".m", dims, p->m});
            ckpt.state.push_back({p->name + ".v", dims, p->v});
            ckpt.state.push_back({p->name + ".t", {4}, encode_u64(static_cast<uint64_t>(p->step))});
        }
        ckpt.state.push_back({"trainer.cursor", {4}, encode_u64(cursor)});
        ckpt.iteration = static_cast<uint64_t>(next_iter);
        nn::write_checkpoint(path, ckpt);
    };

    std::ofstream csv;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        const auto csv_path = cfg.out_dir + "/loss_log.csv";
        const bool append = !cfg.resume_from.empty() && std::filesystem::exists(csv_path);
        csv.open(csv_path, append ? std::ios::app : std::ios::trunc);
        if (!append) csv << csv_header(L) << '\n';
    }

    TrainResult result;
    const size_t n = dataset.size();
    uint64_t cached_epoch = UINT64_MAX;
    std::vector<size_t> perm;

    for (int64_t iter = start_iter; iter < cfg.iterations; ++iter) {
        if (hooks && hooks->before_iteration) hooks->before_iteration(iter, model);
        const int levels = active_levels(iter, cfg.n_level, L);

        std::vector<selfsup::ScanPair> batch;
        batch.reserve(cfg.batch_size);
        const int64_t max_attempts = static_cast<int64_t>(cfg.batch_size) * 64;
        for (int64_t attempt = 0; attempt < max_attempts && static_cast<int>(batch.size()) < cfg.batch_size;
             ++attempt) {
            const uint64_t epoch = cursor / n;
            if (epoch != cached_epoch) {
                perm = epoch_permutation(cfg.seed, epoch, n);
                cached_epoch = epoch;
            }
            const size_t idx = perm[cursor % n];
            const uint64_t crop_seed = util::derive_seed(cfg.seed, 0xc409, cursor);
            ++cursor;
            try {
                batch.push_back(selfsup::random_crop_pair(dataset[idx], cfg.crop_dx, cfg.crop_dy, cfg.crop_dz,
                                                          crop_seed));
            } catch (const selfsup::CropError&) {
                continue;
            }
        }
        if (batch.empty()) throw std::runtime_error("train: could not assemble a batch (no valid crops)");

        std::vector<grid::SparseTSDF> inputs;
        inputs.reserve(batch.size());
        for (const auto& p : batch) inputs.push_back(p.input);
        const model::BatchInput input = model::make_model_input(inputs, model.config().input_repr);
        const TrainingTargets targets = build_training_targets(batch, L);
        const model::GateAugmentation aug = targets.augmentation();

        model::Tape tape;
        const model::HierarchyOutput out = model.forward(tape, input, levels, true, &aug);
        LossBreakdown bd;
        auto* loss = total_loss(tape, out, targets, model.config(), cfg.weights, &bd);

        for (auto* p : all_params) p->zero_grad();
        tape.backward(*loss);
        const auto active = model.active_parameters(levels);
        nn::adam_step<Scalar>(active, cfg.lr);

        const std::string row = format_row(iter, levels, bd);
        result.csv_rows.push_back(row);
        if (csv.is_open()) csv << row << '\n';
        if (hooks && hooks->after_iteration) hooks->after_iteration(iter, bd, model);

        if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(cfg.out_dir + "/ckpt_" + std::to_string(iter + 1) + ".ckpt", iter + 1);
        }
    }
    result.final_iteration = cfg.iterations;
    if (!cfg.out_dir.empty()) save_checkpoint(cfg.out_dir + "/model.ckpt", cfg.iterations);
    return result;
}

}  // namespace sgnn::train
