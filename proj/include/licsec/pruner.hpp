#pragma once

#include <string>
#include <vector>

#include "licsec/codec.hpp"

namespace licsec::prune {

struct PruneSchedule {
    double per_iteration_ratio = 0.1;
    int iterations = 3;
    int finetune_steps = 150;

    double cumulative_ratio() const {
        double kept = 1.0;
        for (int i = 0; i < iterations; ++i) kept *= 1.0 - per_iteration_ratio;
        return 1.0 - kept;
    }
};

// L2 norm of each output-channel filter slice, per prunable layer.
struct LayerScores {
    std::string layer;
    std::vector<double> scores;  // one per output channel
};
std::vector<LayerScores> rank_channels(const codec::LicModel& model);

struct IterationStats {
    int iteration = 0;
    int channels_pruned = 0;
    int64_t params_after = 0;
    int64_t flops_after = 0;
    double final_loss = 0;
};

// Zero + mask the lowest-scored ceil(ratio*kept) channels of every prunable
// layer, then fine-tune with masked channels frozen at zero. The latent
// layer and the final decoder layer are structural and never pruned.
IterationStats prune_iteration(codec::LicModel& model, double ratio, int finetune_steps,
                               const std::vector<Image>& dataset,
                               const codec::TrainOptions& opts, int iteration_index = 0,
                               int64_t flops_h = 64, int64_t flops_w = 64);

// Physically remove masked channels (and the matching consumer input
// slices); forward outputs are bit-identical to the masked model.
codec::LicModel compact(const codec::LicModel& model);

// Analytic multiply-accumulate count for one [1,3,h,w] input; masked
// channels count as removed.
int64_t count_flops(const codec::LicModel& model, int h, int w);

std::string prune_report_csv(const std::vector<IterationStats>& stats);

}  // namespace licsec::prune
