#include "sgnn/model/model.h"

#include <cmath>
#include <stdexcept>

#include "sgnn/util/rng.h"

namespace sgnn::model {

using grid::SparseTSDF;
using grid::VoxelCoord;
using nn::CoordSet;
using nn::DenseNode;
using nn::Parameter;
using nn::SparseNode;

std::string to_string(InputRepr r) {
    switch (r) {
        case InputRepr::kTsdf: return "tsdf";
        case InputRepr::kOccupancy: return "occupancy";
        default: return "pointcloud-occupancy";
    }
}

std::string to_string(OutputRepr r) { return r == OutputRepr::kTsdf ? "tsdf" : "occupancy"; }

InputRepr input_repr_from_string(const std::string& s) {
    if (s == "tsdf") return InputRepr::kTsdf;
    if (s == "occupancy") return InputRepr::kOccupancy;
    if (s == "pointcloud-occupancy") return InputRepr::kPointCloudOccupancy;
    throw std::invalid_argument("unknown input representation: " + s);
}

OutputRepr output_repr_from_string(const std::string& s) {
    if (s == "tsdf") return OutputRepr::kTsdf;
    if (s == "occupancy") return OutputRepr::kOccupancy;
    throw std::invalid_argument("unknown output representation: " + s);
}

BatchInput make_model_input(std::span<const SparseTSDF> crops, InputRepr repr) {
    std::vector<VoxelCoord> coords;
    for (size_t s = 0; s < crops.size(); ++s) {
        for (const auto& [c, v] : crops[s].entries()) {
            if (std::abs(v.d) < crops[s].truncation())
                coords.push_back(VoxelCoord{c.x, c.y, c.z, static_cast<int32_t>(s)});
        }
    }
    BatchInput input;
    input.cs = CoordSet::make(std::move(coords));
    input.batches = static_cast<int>(crops.size());
    input.features.resize(input.cs->size());
    if (repr == InputRepr::kTsdf) {
        for (int r = 0; r < input.cs->size(); ++r) {
            const VoxelCoord& c = input.cs->coords()[r];
            input.features[r] = crops[static_cast<size_t>(c.batch)].find({c.x, c.y, c.z, 0})->d;
        }
    } else {
        std::fill(input.features.begin(), input.features.end(), Scalar(1));
    }
    return input;
}

// ---------------------------------------------------------------------------

SGNNModel::SGNNModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.num_levels < 1) throw std::invalid_argument("ModelConfig: num_levels must be >= 1");
    if (cfg_.base_width < 1) throw std::invalid_argument("ModelConfig: base_width must be >= 1");
    const int L = cfg_.num_levels;

    auto subm = [](const std::string& name, int cin, int cout) {
        return SubmBlock{Parameter<Scalar>(name + ".w", {27, cin, cout}), Parameter<Scalar>(name + ".b", {cout}),
                         nn::BatchNorm<Scalar>(name + ".bn", cout)};
    };
    auto conv8 = [](const std::string& name, int cin, int cout) {
        return ConvBlock{Parameter<Scalar>(name + ".w", {8, cin, cout}), Parameter<Scalar>(name + ".b", {cout}),
                         nn::BatchNorm<Scalar>(name + ".bn", cout)};
    };
    auto dense3 = [](const std::string& name, int cin, int cout) {
        return ConvBlock{Parameter<Scalar>(name + ".w", {3, 3, 3, cin, cout}),
                         Parameter<Scalar>(name + ".b", {cout}), nn::BatchNorm<Scalar>(name + ".bn", cout)};
    };
    auto subm_head = [](const std::string& name, int cin) {
        return Head{Parameter<Scalar>(name + ".w", {27, cin, 1}), Parameter<Scalar>(name + ".b", {1})};
    };
    auto dense_head = [](const std::string& name, int cin) {
        return Head{Parameter<Scalar>(name + ".w", {1, 1, 1, cin, 1}), Parameter<Scalar>(name + ".b", {1})};
    };

    int prev = 1;
    for (int i = 0; i < L; ++i) {
        const int w = encoder_width(i);
        const std::string base = "enc" + std::to_string(i);
        encoder_.push_back(EncoderStage{subm(base + ".c0", prev, w), subm(base + ".c1", w, w),
                                        conv8(base + ".down", w, w)});
        prev = w;
    }
    const int cw = encoder_width(L - 1);
    coarse0_ = dense3("coarse.c0", cw, cw);
    coarse1_ = dense3("coarse.c1", cw, cw);
    coarse_occ_ = dense_head("coarse.occ", cw);
    coarse_sdf_ = dense_head("coarse.sdf", cw);

    int gated_ch = cw + 2;  // concat(F, O, S)
    for (int k = 0; k + 1 < L; ++k) {
        const int skip_ch = encoder_width(L - k - 1);
        const int target_w = encoder_width(std::max(L - k - 2, 0));
        const std::string base = "lvl" + std::to_string(k);
        blocks_.push_back(HierarchyBlock{subm(base + ".c0", gated_ch + skip_ch, target_w),
                                         subm(base + ".c1", target_w, target_w),
                                         conv8(base + ".up", target_w, target_w),
                                         subm(base + ".c2", target_w, target_w), subm_head(base + ".occ", target_w),
                                         subm_head(base + ".sdf", target_w)});
        gated_ch = target_w + 2;
    }
    const int rw = cfg_.base_width;
    refine_up_ = conv8("refine.up", gated_ch, rw);
    refine0_ = subm("refine.c0", rw, rw);
    refine1_ = subm("refine.c1", rw, rw);
    refine_head_ = subm_head("refine.head", rw);

    init_parameters(seed);
}

int SGNNModel::encoder_width(int stage) const {
    return cfg_.base_width * std::min(1 << stage, 4);
}

void SGNNModel::init_parameters(uint64_t seed) {
    util::Rng rng(util::derive_seed(seed, 0x1417));
    for (Parameter<Scalar>* p : parameters()) {
        if (p->name.ends_with(".bn.gamma") || p->name.ends_with(".bn.beta") || p->name.ends_with(".b")) continue;
        // He init: fan_in = kernel volume * input channels
        size_t fan_in = 1;
        for (size_t i = 0; i + 1 < p->dims.size(); ++i) fan_in *= static_cast<size_t>(p->dims[i]);
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& v : p->val) v = static_cast<Scalar>(rng.normal() * std_dev);
    }
}

void SGNNModel::collect(std::vector<Parameter<Scalar>*>& out, int active_levels) {
    auto add_subm = [&](SubmBlock& s) {
        out.push_back(&s.w); out.push_back(&s.b); out.push_back(&s.bn.gamma); out.push_back(&s.bn.beta);
    };
    auto add_conv = [&](ConvBlock& c) {
        out.push_back(&c.w); out.push_back(&c.b); out.push_back(&c.bn.gamma); out.push_back(&c.bn.beta);
    };
    auto add_head = [&](Head& h) {
        out.push_back(&h.w); out.push_back(&h.b);
    };
    for (auto& st : encoder_) { add_subm(st.c0); add_subm(st.c1); add_conv(st.down); }
    add_conv(coarse0_); add_conv(coarse1_); add_head(coarse_occ_); add_head(coarse_sdf_);
    for (int k = 0; k < static_cast<int>(blocks_.size()); ++k) {
        if (k + 2 > active_levels) break;  // block k produces level k+1
        auto& b = blocks_[k];
        add_subm(b.c0); add_subm(b.c1); add_conv(b.up); add_subm(b.c2); add_head(b.occ); add_head(b.sdf);
    }
    if (active_levels >= cfg_.num_levels) {
        add_conv(refine_up_); add_subm(refine0_); add_subm(refine1_); add_head(refine_head_);
    }
}

std::vector<Parameter<Scalar>*> SGNNModel::parameters() {
    std::vector<Parameter<Scalar>*> out;
    collect(out, cfg_.num_levels);
    return out;
}

std::vector<Parameter<Scalar>*> SGNNModel::active_parameters(int active_levels) {
    std::vector<Parameter<Scalar>*> out;
    collect(out, active_levels);
    return out;
}

std::vector<std::pair<std::string, nn::BatchNorm<Scalar>*>> ModelIntrospection::batchnorms(SGNNModel& m) {
    std::vector<std::pair<std::string, nn::BatchNorm<Scalar>*>> out;
    auto add = [&](nn::BatchNorm<Scalar>& bn) {
        // gamma's name is "<block>.bn.gamma"; strip the trailing ".gamma"
        std::string name = bn.gamma.name;
        name.resize(name.size() - 6);
        out.emplace_back(name, &bn);
    };
    for (auto& st : m.encoder_) { add(st.c0.bn); add(st.c1.bn); add(st.down.bn); }
    add(m.coarse0_.bn); add(m.coarse1_.bn);
    for (auto& b : m.blocks_) { add(b.c0.bn); add(b.c1.bn); add(b.up.bn); add(b.c2.bn); }
    add(m.refine_up_.bn); add(m.refine0_.bn); add(m.refine1_.bn);
    return out;
}

// ---------------------------------------------------------------------------

HierarchyOutput SGNNModel::forward(Tape& tape, const BatchInput& input, int active_levels, bool training,
                                   const GateAugmentation* augment) {
    const int L = cfg_.num_levels;
    if (active_levels < 1 || active_levels > L) throw std::invalid_argument("forward: active_levels out of range");
    if (!input.cs || input.cs->empty()) throw std::invalid_argument("forward: empty input");

    auto run_subm = [&](SparseNode<Scalar>* x, SubmBlock& blk) {
        return nn::relu(tape, nn::batchnorm(tape, nn::subm_conv3(tape, x, blk.w, blk.b), blk.bn, training));
    };

    // encoder
    SparseNode<Scalar>* x = tape.new_sparse(input.cs, 1);
    x->val = input.features;
    std::vector<SparseNode<Scalar>*> enc;
    enc.reserve(L);
    for (auto& st : encoder_) {
        x = run_subm(x, st.c0);
        x = run_subm(x, st.c1);
        x = nn::relu(tape, nn::batchnorm(tape, nn::sparse_downconv2(tape, x, st.down.w, st.down.b), st.down.bn,
                                         training));
        enc.push_back(x);
    }

    HierarchyOutput out;
    out.encoder_deepest = enc.back()->cs->coords();

    // dense coarse bottleneck over the deepest extent padded by one voxel
    VoxelCoord lo = enc.back()->cs->coords().front();
    VoxelCoord hi = lo;
    for (const auto& c : enc.back()->cs->coords()) {
        lo.x = std::min(lo.x, c.x); lo.y = std::min(lo.y, c.y); lo.z = std::min(lo.z, c.z);
        hi.x = std::max(hi.x, c.x); hi.y = std::max(hi.y, c.y); hi.z = std::max(hi.z, c.z);
    }
    const VoxelCoord origin{lo.x - 1, lo.y - 1, lo.z - 1, 0};
    const int bdx = hi.x - lo.x + 3, bdy = hi.y - lo.y + 3, bdz = hi.z - lo.z + 3;

    DenseNode<Scalar>* d = nn::to_dense(tape, enc.back(), input.batches, origin, bdx, bdy, bdz);
    d = nn::relu(tape, nn::batchnorm(tape, nn::dense_conv3(tape, d, coarse0_.w, coarse0_.b, 1, 1), coarse0_.bn,
                                     training));
    d = nn::relu(tape, nn::batchnorm(tape, nn::dense_conv3(tape, d, coarse1_.w, coarse1_.b, 1, 1), coarse1_.bn,
                                     training));
    DenseNode<Scalar>* occ0 = nn::dense_conv3(tape, d, coarse_occ_.w, coarse_occ_.b, 1, 0);
    DenseNode<Scalar>* sdf0 = nn::dense_conv3(tape, d, coarse_sdf_.w, coarse_sdf_.b, 1, 0);

    LevelOut lvl0;
    lvl0.dense = true;
    lvl0.stride = 1 << L;
    lvl0.feats_d = d;
    lvl0.occ_d = occ0;
    lvl0.sdf_d = sdf0;
    out.levels.push_back(lvl0);

    auto extra_for = [&](int level) -> const std::vector<VoxelCoord>& {
        static const std::vector<VoxelCoord> kEmpty;
        if (!training || !augment || level >= static_cast<int>(augment->per_level.size())) return kEmpty;
        return augment->per_level[level];
    };

    // hierarchy: gate level k, predict level k+1 at half the stride
    SparseNode<Scalar>* gated = nullptr;
    for (int k = 0; k + 1 < active_levels; ++k) {
        LevelOut& cur = out.levels.back();
        if (cur.dense) {
            gated = nn::sparsify_gate(tape, cur.occ_d, cur.feats_d, cur.sdf_d, extra_for(k));
        } else {
            gated = nn::sparsify_gate(tape, cur.occ, cur.feats, cur.sdf, extra_for(k));
        }
        cur.gated = gated->cs->coords();
        if (gated->cs->empty()) return out;  // completion terminates

        auto& blk = blocks_[k];
        SparseNode<Scalar>* h = skip_concat(tape, gated, enc[L - k - 1]);
        h = run_subm(h, blk.c0);
        h = run_subm(h, blk.c1);
        h = nn::relu(tape, nn::batchnorm(tape, nn::sparse_upsample2(tape, h, blk.up.w, blk.up.b), blk.up.bn,
                                         training));
        h = run_subm(h, blk.c2);
        LevelOut lvl;
        lvl.dense = false;
        lvl.stride = 1 << (L - k - 1);
        lvl.feats = h;
        lvl.occ = nn::subm_conv3(tape, h, blk.occ.w, blk.occ.b);
        lvl.sdf = nn::subm_conv3(tape, h, blk.sdf.w, blk.sdf.b);
        out.levels.push_back(lvl);
    }

    if (active_levels < L) return out;

    // final refinement: upsample to stride 1, refine, predict output values
    LevelOut& last = out.levels.back();
    if (last.dense) {
        gated = nn::sparsify_gate(tape, last.occ_d, last.feats_d, last.sdf_d, extra_for(L - 1));
    } else {
        gated = nn::sparsify_gate(tape, last.occ, last.feats, last.sdf, extra_for(L - 1));
    }
    last.gated = gated->cs->coords();
    if (gated->cs->empty()) {
        out.final_sdf = tape.new_sparse(gated->cs, 1);
        return out;
    }
    SparseNode<Scalar>* f = nn::relu(
        tape, nn::batchnorm(tape, nn::sparse_upsample2(tape, gated, refine_up_.w, refine_up_.b), refine_up_.bn,
                            training));
    f = run_subm(f, refine0_);
    f = run_subm(f, refine1_);
    f = nn::subm_conv3(tape, f, refine_head_.w, refine_head_.b);
    if (cfg_.output_repr == OutputRepr::kTsdf) {
        f = nn::clamp(tape, f, -Scalar(cfg_.truncation), Scalar(cfg_.truncation));
    }
    out.final_sdf = f;
    return out;
}

// ---------------------------------------------------------------------------

nn::Checkpoint SGNNModel::to_checkpoint() const {
    nn::Checkpoint ckpt;
    ckpt.header["num_levels"] = std::to_string(cfg_.num_levels);
    ckpt.header["base_width"] = std::to_string(cfg_.base_width);
    ckpt.header["input_repr"] = to_string(cfg_.input_repr);
    ckpt.header["output_repr"] = to_string(cfg_.output_repr);
    ckpt.header["truncation"] = std::to_string(cfg_.truncation);
    auto* self = const_cast<SGNNModel*>(this);
    for (Parameter<Scalar>* p : self->parameters()) {
        nn::Checkpoint::Block b;
        b.name = p->name;
        for (int d : p->dims) b.dims.push_back(static_cast<uint32_t>(d));
        b.values = p->val;
        ckpt.params.push_back(std::move(b));
    }
    for (auto& [name, bn] : ModelIntrospection::batchnorms(*self)) {
        ckpt.state.push_back({name + ".rm", {static_cast<uint32_t>(bn->channels())}, bn->running_mean});
        ckpt.state.push_back({name + ".rv", {static_cast<uint32_t>(bn->channels())}, bn->running_var});
    }
    return ckpt;
}

void SGNNModel::load_parameters(const nn::Checkpoint& ckpt) {
    for (Parameter<Scalar>* p : parameters()) {
        const auto* b = ckpt.find_param(p->name);
        if (!b) throw std::runtime_error("checkpoint missing parameter: " + p->name);
        if (b->values.size() != p->val.size())
            throw std::runtime_error("checkpoint parameter size mismatch: " + p->name);
        p->val = b->values;
    }
    for (auto& [name, bn] : ModelIntrospection::batchnorms(*this)) {
        if (const auto* rm = ckpt.find_state(name + ".rm")) bn->running_mean = rm->values;
        if (const auto* rv = ckpt.find_state(name + ".rv")) bn->running_var = rv->values;
    }
}

SGNNModel SGNNModel::from_checkpoint(const nn::Checkpoint& ckpt) {
    ModelConfig cfg;
    cfg.num_levels = std::stoi(ckpt.header.at("num_levels"));
    cfg.base_width = std::stoi(ckpt.header.at("base_width"));
    cfg.input_repr = input_repr_from_string(ckpt.header.at("input_repr"));
    cfg.output_repr = output_repr_from_string(ckpt.header.at("output_repr"));
    cfg.truncation = std::stof(ckpt.header.at("truncation"));
    SGNNModel m(cfg, 0);
    m.load_parameters(ckpt);
    return m;
}

grid::SparseTSDF final_to_tsdf(const HierarchyOutput& out, float voxel_size, float truncation, OutputRepr repr) {
    grid::SparseTSDF s(voxel_size, truncation);
    if (!out.final_sdf) return s;
    const auto* f = out.final_sdf;
    for (int r = 0; r < f->rows(); ++r) {
        const VoxelCoord& c = f->cs->coords()[r];
        float d;
        if (repr == OutputRepr::kTsdf) {
            d = f->val[r];
        } else {
            d = (0.5f - nn::stable_sigmoid(f->val[r])) * 2.0f * truncation;
        }
        s.set(c, grid::TsdfVoxel{d, 1.0f, d > -truncation});
    }
    return s;
}

}  // namespace sgnn::model
