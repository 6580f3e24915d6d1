#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bapf/losses.hpp"
#include "bapf/model.hpp"
#include "bapf/optim.hpp"

namespace bapf {

enum class TrainStage { Structure, Texture, Both };

TrainStage parse_train_stage(const std::string& s);

struct TrainConfig {
    TrainStage stage = TrainStage::Both;
    int steps = 300;  // for Both: structure steps; texture gets steps / 2
    int64_t size = 64;
    uint64_t seed = 0;
    std::string data_dir;
    std::string out;        // checkpoint path; log and summary sit next to it
    std::string init_ckpt;  // structure checkpoint for a texture-only run
    bool no_first = false;  // texture-only run from scratch
    LossWeights weights;
    Ablation ablation;
    AdamConfig adam;
    int64_t base_channels = 16;
    int64_t disc_channels = 16;
    std::vector<std::string> mask_bins{"10-20", "20-30"};
    int eval_images = 8;
    bool flip = true;

    void validate() const;
    std::string log_path() const { return out + ".csv"; }
    std::string summary_path() const { return out + ".summary.json"; }
    std::string optimizer_path() const { return out + ".opt"; }
    std::string structure_path() const { return out + ".structure"; }
};

struct StageReport {
    Stage stage = Stage::Structure;
    int steps = 0;
    // Mean L1 over hole pixels on the fixed evaluation set, before the first
    // update of the stage and after the last one.
    double eval_hole_l1_start = 0;
    double eval_hole_l1_end = 0;
    int pf_degenerate_steps = 0;
    double seconds = 0;
};

struct TrainReport {
    std::vector<StageReport> stages;
    int total_steps = 0;
    std::string checkpoint;
    std::string log;
};

/// Runs the configured stages, writing the checkpoint, the loss CSV, the
/// optimizer state and a JSON summary. `progress` may be null.
TrainReport run_training(const TrainConfig& cfg, std::ostream* progress = nullptr);

/// Mean |prediction - truth| over hole pixels and channels, averaged over images.
double eval_hole_l1(const ModelParams<float>& params, const GeneratorArch& arch, Stage stage,
                    const std::vector<Tensor<float>>& images, const std::vector<Tensor<float>>& holes);

}  // namespace bapf
