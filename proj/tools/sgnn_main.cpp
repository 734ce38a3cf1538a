#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sgnn/eval/metrics.h"
#include "sgnn/fusion/fusion.h"
#include "sgnn/grid/grid_ops.h"
#include "sgnn/grid/tsdf_io.h"
#include "sgnn/mesh/marching_cubes.h"
#include "sgnn/model/model.h"
#include "sgnn/selfsup/selfsup.h"
#include "sgnn/synth/synth.h"
#include "sgnn/train/trainer.h"
#include "sgnn/util/rng.h"

namespace fs = std::filesystem;
using namespace sgnn;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<synth::DepthFrame> load_frames(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".dep") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw UsageError("no .dep frames in " + dir);
    std::vector<synth::DepthFrame> frames;
    frames.reserve(paths.size());
    for (const auto& p : paths) frames.push_back(synth::read_depth_frame(p));
    return frames;
}

std::map<std::string, std::string> parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = value;
    }
    return kv;
}

selfsup::ScanPair load_pair_dir(const std::string& dir) {
    selfsup::ScanPair pair;
    pair.input = grid::read_tsdf(dir + "/input.tsdf");
    pair.target = grid::read_tsdf(dir + "/target.tsdf");
    pair.mask = grid::read_mask(dir + "/mask.tsdf");
    return pair;
}

int cmd_gen_data(int scenes, int frames, uint64_t seed, const std::string& out) {
    const synth::CameraIntrinsics intr = synth::default_intrinsics();
    for (int i = 0; i < scenes; ++i) {
        const fs::path dir = fs::path(out) / ("scene_" + std::to_string(i));
        fs::create_directories(dir);
        const synth::Scene scene = synth::make_room_scene(util::derive_seed(seed, i));
        synth::write_scene((dir / "scene.txt").string(), scene);
        const auto poses = synth::sample_trajectory(scene, frames, util::derive_seed(seed, i, 1));
        for (size_t f = 0; f < poses.size(); ++f) {
            const synth::DepthFrame frame = synth::render_depth(scene, poses[f], intr);
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%04zu.dep", f);
            synth::write_depth_frame((dir / name).string(), frame);
        }
        std::cerr << "scene " << i << ": " << scene.primitives.size() << " primitives, " << poses.size()
                  << " frames\n";
    }
    return 0;
}

int cmd_fuse(const std::string& frames_dir, const fusion::FusionConfig& cfg, const std::string& out) {
    const auto frames = load_frames(frames_dir);
    const grid::SparseTSDF g = fusion::fuse(frames, cfg);
    grid::write_tsdf(out, g);
    std::cerr << "fused " << frames.size() << " frames -> " << g.size() << " voxels\n";
    return 0;
}

int cmd_pairs(const std::string& frames_dir, double input_frac, double target_frac, uint64_t seed,
              const fusion::FusionConfig& cfg, const std::string& mode, const std::string& out) {
    const auto frames = load_frames(frames_dir);
    selfsup::ScanPair pair;
    if (mode == "frames") {
        pair = selfsup::build_pair(frames, input_frac, target_frac, cfg, seed);
    } else if (mode == "crops") {
        pair = selfsup::crops_baseline_pair(fusion::fuse(frames, cfg), seed);
    } else {
        throw UsageError("unknown pairs mode: " + mode);
    }
    fs::create_directories(out);
    grid::write_tsdf(out + "/input.tsdf", pair.input);
    grid::write_tsdf(out + "/target.tsdf", pair.target);
    grid::write_mask(out + "/mask.tsdf", pair.mask, pair.target.voxel_size(), pair.target.truncation());
    std::cerr << "pair: input " << pair.input.size() << " target " << pair.target.size() << " mask "
              << pair.mask.size() << "\n";
    return 0;
}

int cmd_train(const std::string& pairs_dir, const std::string& config_path, const std::string& out) {
    std::vector<selfsup::ScanPair> dataset;
    if (fs::exists(fs::path(pairs_dir) / "input.tsdf")) {
        dataset.push_back(load_pair_dir(pairs_dir));
    } else {
        std::vector<std::string> dirs;
        for (const auto& e : fs::directory_iterator(pairs_dir))
            if (e.is_directory() && fs::exists(e.path() / "input.tsdf")) dirs.push_back(e.path().string());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs) dataset.push_back(load_pair_dir(d));
    }
    if (dataset.empty()) throw UsageError("no pairs found under " + pairs_dir);

    const auto kv = parse_config(config_path);
    auto get = [&](const std::string& key, const std::string& def) {
        auto it = kv.find(key);
        return it == kv.end() ? def : it->second;
    };
    static const std::set<std::string> known{"lr", "batch_size", "n_level", "iterations", "seed", "levels",
                                             "base_width", "input_repr", "output_repr", "crop_x", "crop_y",
                                             "crop_z", "checkpoint_every", "w_occ", "w_sdf", "w_final",
                                             "truncation", "resume"};
    for (const auto& [k, v] : kv)
        if (!known.count(k)) throw UsageError("unknown config key: " + k);

    model::ModelConfig mcfg;
    mcfg.num_levels = std::stoi(get("levels", "3"));
    mcfg.base_width = std::stoi(get("base_width", "16"));
    mcfg.input_repr = model::input_repr_from_string(get("input_repr", "tsdf"));
    mcfg.output_repr = model::output_repr_from_string(get("output_repr", "tsdf"));
    mcfg.truncation = std::stof(get("truncation", "3"));

    train::TrainConfig tcfg;
    tcfg.lr = std::stof(get("lr", "0.001"));
    tcfg.batch_size = std::stoi(get("batch_size", "8"));
    tcfg.n_level = std::stoi(get("n_level", "2000"));
    tcfg.iterations = std::stoll(get("iterations", "6000"));
    tcfg.seed = std::stoull(get("seed", "0"));
    tcfg.crop_dx = std::stoi(get("crop_x", "64"));
    tcfg.crop_dy = std::stoi(get("crop_y", "64"));
    tcfg.crop_dz = std::stoi(get("crop_z", "128"));
    tcfg.checkpoint_every = std::stoll(get("checkpoint_every", "0"));
    tcfg.weights.occ = std::stof(get("w_occ", "1"));
    tcfg.weights.sdf = std::stof(get("w_sdf", "1"));
    tcfg.weights.final_sdf = std::stof(get("w_final", "1"));
    tcfg.resume_from = get("resume", "");
    tcfg.out_dir = out;

    model::SGNNModel m(mcfg, tcfg.seed);
    const auto result = train::train(dataset, m, tcfg);
    std::cerr << "trained " << result.final_iteration << " iterations; checkpoints in " << out << "\n";
    return 0;
}

int cmd_complete(const std::string& model_path, const std::string& in, const std::string& out) {
    const nn::Checkpoint ckpt = nn::read_checkpoint(model_path);
    model::SGNNModel m = model::SGNNModel::from_checkpoint(ckpt);
    const grid::SparseTSDF input = grid::read_tsdf(in);
    const model::BatchInput bi = model::make_model_input(std::span(&input, 1), m.config().input_repr);
    model::Tape tape;
    const model::HierarchyOutput hout = m.forward(tape, bi, m.config().num_levels, false, nullptr);
    const grid::SparseTSDF pred =
        model::final_to_tsdf(hout, input.voxel_size(), m.config().truncation, m.config().output_repr);
    grid::write_tsdf(out, pred);
    std::cerr << "completed: " << input.size() << " -> " << pred.size() << " voxels\n";
    return 0;
}

int cmd_mesh(const std::string& in, const std::string& out) {
    const grid::SparseTSDF s = grid::read_tsdf(in);
    const mesh::TriangleMesh m = mesh::marching_cubes(s);
    mesh::write_ply(out, m);
    std::cerr << "mesh: " << m.vertices.size() << " vertices, " << m.triangles.size() << " triangles\n";
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& target_path, const std::string& input_path,
             const std::string& box_arg) {
    const grid::SparseTSDF pred = grid::read_tsdf(pred_path);
    const grid::SparseTSDF target = grid::read_tsdf(target_path);
    std::optional<grid::SparseTSDF> input;
    if (!input_path.empty()) input = grid::read_tsdf(input_path);

    grid::CropSpec box;
    if (!box_arg.empty()) {
        std::istringstream bs(box_arg);
        std::string tok;
        int vals[6];
        for (int i = 0; i < 6; ++i) {
            if (!std::getline(bs, tok, ',')) throw UsageError("--box needs x,y,z,dx,dy,dz");
            vals[i] = std::stoi(tok);
        }
        box.origin = {vals[0], vals[1], vals[2], 0};
        box.dx = vals[3]; box.dy = vals[4]; box.dz = vals[5];
    } else {
        auto b = target.bounds();
        if (!b) throw UsageError("target is empty and no --box given");
        if (auto pb = pred.bounds()) {
            const int32_t x1 = std::max(b->origin.x + b->dx, pb->origin.x + pb->dx);
            const int32_t y1 = std::max(b->origin.y + b->dy, pb->origin.y + pb->dy);
            const int32_t z1 = std::max(b->origin.z + b->dz, pb->origin.z + pb->dz);
            b->origin.x = std::min(b->origin.x, pb->origin.x);
            b->origin.y = std::min(b->origin.y, pb->origin.y);
            b->origin.z = std::min(b->origin.z, pb->origin.z);
            b->dx = x1 - b->origin.x; b->dy = y1 - b->origin.y; b->dz = z1 - b->origin.z;
        }
        box.origin = b->origin;
        box.dx = b->dx; box.dy = b->dy; box.dz = b->dz;
    }

    const eval::MetricsReport rep = eval::l1_metrics(pred, target, box, input ? &*input : nullptr);
    std::cout << rep.csv() << "\n";
    std::cerr << rep.table();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse generative scene completion pipeline"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate synthetic scenes and rendered depth frames");
    int gd_scenes = 1, gd_frames = 24;
    uint64_t gd_seed = 0;
    std::string gd_out;
    gen->add_option("--scenes", gd_scenes, "number of scenes")->check(CLI::PositiveNumber);
    gen->add_option("--frames", gd_frames, "frames per scene")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gd_seed, "random seed");
    gen->add_option("--out", gd_out, "output directory")->required();

    // shared fusion options
    auto add_fusion_opts = [](CLI::App* cmd, fusion::FusionConfig& cfg) {
        cmd->add_option("--voxel-size", cfg.voxel_size, "voxel size in meters");
        cmd->add_option("--truncation", cfg.truncation, "truncation in voxel units");
        cmd->add_option("--max-depth", cfg.max_depth, "maximum depth in meters");
    };

    auto* fuse_cmd = app.add_subcommand("fuse", "fuse depth frames into a sparse TSDF");
    std::string fu_frames, fu_out;
    fusion::FusionConfig fu_cfg;
    fuse_cmd->add_option("--frames", fu_frames, "directory of .dep frames")->required();
    add_fusion_opts(fuse_cmd, fu_cfg);
    fuse_cmd->add_option("--out", fu_out, "output .tsdf path")->required();

    auto* pairs_cmd = app.add_subcommand("pairs", "build a self-supervision pair from frames");
    std::string pr_frames, pr_out, pr_mode = "frames";
    double pr_in = 0.5, pr_tgt = 1.0;
    uint64_t pr_seed = 0;
    fusion::FusionConfig pr_cfg;
    pairs_cmd->add_option("--frames", pr_frames, "directory of .dep frames")->required();
    pairs_cmd->add_option("--input-frac", pr_in, "input frame fraction");
    pairs_cmd->add_option("--target-frac", pr_tgt, "target frame fraction");
    pairs_cmd->add_option("--seed", pr_seed, "random seed");
    pairs_cmd->add_option("--mode", pr_mode, "frames|crops self-supervision mode");
    add_fusion_opts(pairs_cmd, pr_cfg);
    pairs_cmd->add_option("--out", pr_out, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train the completion model on pairs");
    std::string tr_pairs, tr_cfg, tr_out;
    train_cmd->add_option("--pairs", tr_pairs, "directory of pair directories")->required();
    train_cmd->add_option("--config", tr_cfg, "key=value training config file")->required();
    train_cmd->add_option("--out", tr_out, "output directory for checkpoints and logs")->required();

    auto* complete_cmd = app.add_subcommand("complete", "run completion inference on an input TSDF");
    std::string co_model, co_in, co_out;
    complete_cmd->add_option("--model", co_model, "checkpoint path")->required();
    complete_cmd->add_option("--in", co_in, "input .tsdf path")->required();
    complete_cmd->add_option("--out", co_out, "output .tsdf path")->required();

    auto* mesh_cmd = app.add_subcommand("mesh", "extract a marching-cubes mesh from a TSDF");
    std::string me_in, me_out;
    mesh_cmd->add_option("--in", me_in, "input .tsdf path")->required();
    mesh_cmd->add_option("--out", me_out, "output .ply path")->required();

    auto* eval_cmd = app.add_subcommand("eval", "masked l1 metrics between predicted and target TSDFs");
    std::string ev_pred, ev_target, ev_input, ev_box;
    eval_cmd->add_option("--pred", ev_pred, "predicted .tsdf")->required();
    eval_cmd->add_option("--target", ev_target, "target .tsdf")->required();
    eval_cmd->add_option("--input", ev_input, "input scan .tsdf (defines unobserved space)");
    eval_cmd->add_option("--box", ev_box, "evaluation box x,y,z,dx,dy,dz (default: data bounds)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gd_scenes, gd_frames, gd_seed, gd_out);
        if (fuse_cmd->parsed()) return cmd_fuse(fu_frames, fu_cfg, fu_out);
        if (pairs_cmd->parsed()) return cmd_pairs(pr_frames, pr_in, pr_tgt, pr_seed, pr_cfg, pr_mode, pr_out);
        if (train_cmd->parsed()) return cmd_train(tr_pairs, tr_cfg, tr_out);
        if (complete_cmd->parsed()) return cmd_complete(co_model, co_in, co_out);
        if (mesh_cmd->parsed()) return cmd_mesh(me_in, me_out);
        if (eval_cmd->parsed()) return cmd_eval(ev_pred, ev_target, ev_input, ev_box);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
