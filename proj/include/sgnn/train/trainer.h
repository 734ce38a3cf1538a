#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sgnn/model/model.h"
#include "sgnn/selfsup/selfsup.h"

namespace sgnn::train {

struct LossWeights {
    float occ = 1.0f;
    float sdf = 1.0f;
    float final_sdf = 1.0f;
};

struct TrainConfig {
    float lr = 0.001f;
    int batch_size = 8;
    int n_level = 2000;
    int64_t iterations = 6000;
    uint64_t seed = 0;
    LossWeights weights;
    int crop_dx = 64, crop_dy = 64, crop_dz = 128;
    int64_t checkpoint_every = 0;  // 0 = final checkpoint only
    std::string out_dir;           // empty = keep everything in memory
    std::string resume_from;       // checkpoint path, empty = fresh run
};

/// Progressive schedule: min(1 + floor(iteration / n_level), num_levels).
int active_levels(int64_t iteration, int n_level, int num_levels);

/// Per-level training targets. Values are pooled from the target restricted
/// to its observed entries, so unobserved data cannot reach any loss; masks
/// are the (observed-OR pooled) entry sets and `occupied` the within-
/// truncation subset used for both BCE targets and gate augmentation.
struct LevelTargets {
    grid::SparseTSDF tsdf{1.0f, 3.0f};
    grid::CoordSetU mask;
    grid::CoordSetU occupied;
    std::vector<grid::VoxelCoord> occupied_sorted;
};

struct TrainingTargets {
    std::vector<LevelTargets> levels;  // level k at downsample factor 2^(L-k)
    LevelTargets final_level;          // full resolution

    model::GateAugmentation augmentation() const;
};

TrainingTargets build_training_targets(std::span<const selfsup::ScanPair> crops, int num_levels);

struct LossBreakdown {
    float total = 0.0f;
    std::vector<float> bce;  // per level, 0 when not produced
    std::vector<float> l1;
    float final_term = 0.0f;
};

/// Masked proxy losses for every produced level plus the final-surface term
/// when all levels are active.
nn::ScalarNode<model::Scalar>* total_loss(model::Tape& tape, const model::HierarchyOutput& out,
                                          const TrainingTargets& targets, const model::ModelConfig& cfg,
                                          const LossWeights& weights, LossBreakdown* breakdown = nullptr);

/// Convenience overload building targets from raw pairs.
nn::ScalarNode<model::Scalar>* total_loss(model::Tape& tape, const model::HierarchyOutput& out,
                                          std::span<const selfsup::ScanPair> crops, const model::ModelConfig& cfg,
                                          const LossWeights& weights, LossBreakdown* breakdown = nullptr);

struct TrainHooks {
    std::function<void(int64_t iteration, model::SGNNModel&)> before_iteration;
    std::function<void(int64_t iteration, const LossBreakdown&, model::SGNNModel&)> after_iteration;
};

struct TrainResult {
    std::vector<std::string> csv_rows;  // per-iteration loss log, no header
    int64_t final_iteration = 0;
};

/// Progressive training loop: shuffled pairs per epoch, one random crop per
/// sample, Adam on the active parameters, CSV loss log and checkpoints.
/// Deterministic per seed in single-threaded mode; resuming from a
/// checkpoint reproduces the non-resumed trajectory bit-identically.
TrainResult train(const std::vector<selfsup::ScanPair>& dataset, model::SGNNModel& model, const TrainConfig& cfg,
                  const TrainHooks* hooks = nullptr);

/// CSV header matching TrainResult::csv_rows.
std::string csv_header(int num_levels);

}  // namespace sgnn::train
