#pragma once

#include <string>

#include "tlora/checkpoint.hpp"
#include "tlora/config.hpp"
#include "tlora/diffusion.hpp"

namespace tlora {

// A denoiser together with the pieces needed to train, sample and evaluate
// it. Round-trips through the checkpoint format bit-exactly.
struct Experiment {
    Denoiser denoiser;
    NoiseSchedule schedule;
    ToyDataset dataset;
    ExperimentConfig config;  // as recorded at creation time
    std::string phase;        // "pretrained" or "finetuned"
};

Experiment make_experiment(const ExperimentConfig& cfg);

Checkpoint to_checkpoint(const Experiment& exp);
Experiment from_checkpoint(const Checkpoint& ckpt);

}  // namespace tlora
