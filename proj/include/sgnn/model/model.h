#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgnn/grid/sparse_tsdf.h"
#include "sgnn/nn/checkpoint.h"
#include "sgnn/nn/losses.h"
#include "sgnn/nn/ops.h"

namespace sgnn::model {

using Scalar = float;
using Tape = nn::Tape<Scalar>;

enum class InputRepr { kTsdf, kOccupancy, kPointCloudOccupancy };
enum class OutputRepr { kTsdf, kOccupancy };

std::string to_string(InputRepr r);
std::string to_string(OutputRepr r);
InputRepr input_repr_from_string(const std::string& s);
OutputRepr output_repr_from_string(const std::string& s);

struct ModelConfig {
    int num_levels = 3;  // hierarchy levels L; level k lives at stride 2^(L-k)
    int base_width = 16;
    InputRepr input_repr = InputRepr::kTsdf;
    OutputRepr output_repr = OutputRepr::kTsdf;
    float truncation = 3.0f;
};

/// Sparse batch assembled from per-sample crops: coordinates within
/// truncation, tagged with their sample index, one input feature channel.
struct BatchInput {
    std::shared_ptr<const nn::CoordSet> cs;
    std::vector<Scalar> features;
    int batches = 0;
};

BatchInput make_model_input(std::span<const grid::SparseTSDF> crops, InputRepr repr);

/// Per-level coordinates to union into the occupancy gate during training
/// (coordinates where the downsampled target is occupied); indexed by the
/// level whose gate they augment.
struct GateAugmentation {
    std::vector<std::vector<grid::VoxelCoord>> per_level;
};

struct LevelOut {
    bool dense = false;
    int stride = 1;
    // dense form (level 0)
    nn::DenseNode<Scalar>* feats_d = nullptr;
    nn::DenseNode<Scalar>* occ_d = nullptr;
    nn::DenseNode<Scalar>* sdf_d = nullptr;
    // sparse form (levels >= 1)
    nn::SparseNode<Scalar>* feats = nullptr;
    nn::SparseNode<Scalar>* occ = nullptr;
    nn::SparseNode<Scalar>* sdf = nullptr;
    // gate output feeding the next stage (augmented during training)
    std::vector<grid::VoxelCoord> gated;
};

struct HierarchyOutput {
    std::vector<LevelOut> levels;                   // produced levels, coarse first
    nn::SparseNode<Scalar>* final_sdf = nullptr;    // stride 1; logits when output is occupancy
    std::vector<grid::VoxelCoord> encoder_deepest;  // test hook: deepest encoder coordinates
};

class SGNNModel {
public:
    SGNNModel(const ModelConfig& cfg, uint64_t seed);

    /// Runs encoder, coarse prediction, active_levels-1 hierarchy levels and,
    /// when every level is active, the final refinement to stride 1.
    /// `training` selects batch-norm mode and enables gate augmentation.
    HierarchyOutput forward(Tape& tape, const BatchInput& input, int active_levels, bool training,
                            const GateAugmentation* augment = nullptr);

    const ModelConfig& config() const { return cfg_; }

    std::vector<nn::Parameter<Scalar>*> parameters();
    /// Parameters of the modules that execute with the given number of
    /// active levels.
    std::vector<nn::Parameter<Scalar>*> active_parameters(int active_levels);

    nn::Checkpoint to_checkpoint() const;
    void load_parameters(const nn::Checkpoint& ckpt);
    static SGNNModel from_checkpoint(const nn::Checkpoint& ckpt);

private:
    struct SubmBlock {
        nn::Parameter<Scalar> w, b;
        nn::BatchNorm<Scalar> bn;
    };
    struct ConvBlock {  // shared shape for down/up (kernel 8) and dense blocks
        nn::Parameter<Scalar> w, b;
        nn::BatchNorm<Scalar> bn;
    };
    struct Head {
        nn::Parameter<Scalar> w, b;
    };
    struct EncoderStage {
        SubmBlock c0, c1;
        ConvBlock down;
    };
    struct HierarchyBlock {
        SubmBlock c0, c1;   // after skip concat
        ConvBlock up;
        SubmBlock c2;       // after upsample; output is F_{k+1}
        Head occ, sdf;
    };

    void init_parameters(uint64_t seed);
    void collect(std::vector<nn::Parameter<Scalar>*>& out, int active_levels);
    int encoder_width(int stage) const;

    ModelConfig cfg_;
    std::vector<EncoderStage> encoder_;
    ConvBlock coarse0_, coarse1_;  // dense 3x3x3 pad 1
    Head coarse_occ_, coarse_sdf_;
    std::vector<HierarchyBlock> blocks_;  // L-1 blocks
    ConvBlock refine_up_;
    SubmBlock refine0_, refine1_;
    Head refine_head_;

    friend struct ModelIntrospection;
};

/// Convert the final prediction back to a SparseTSDF (w = 1; observed where
/// d > -truncation). Occupancy logits map to a pseudo-distance
/// (0.5 - sigmoid) * 2 * truncation so the 0.5 threshold is the isosurface.
grid::SparseTSDF final_to_tsdf(const HierarchyOutput& out, float voxel_size, float truncation, OutputRepr repr);

/// Test hook: named access to batch-norm state for checkpoint plumbing.
struct ModelIntrospection {
    static std::vector<std::pair<std::string, nn::BatchNorm<Scalar>*>> batchnorms(SGNNModel& m);
};

}  // namespace sgnn::model
