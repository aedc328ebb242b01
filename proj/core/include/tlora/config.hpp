#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tlora/adapters.hpp"
#include "tlora/diffusion.hpp"

namespace tlora {

struct DatasetConfig {
    int modes = 8;
    double mode_std = 0.05;
    double concept_cov_x = 0.01;
    double concept_cov_y = 0.0004;
    int concept_size = 4;
    int concept_mode = 0;

    ToyDataset to_dataset() const;
};

struct ScheduleConfig {
    int T = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;

    NoiseSchedule to_schedule() const { return NoiseSchedule::linear(T, beta_min, beta_max); }
};

struct SamplerConfig {
    TimestepSampler::Mode mode = TimestepSampler::Mode::Uniform;
    int lo = 0;
    int hi = 0;

    TimestepSampler to_sampler(int T) const;
};

struct StepsConfig {
    int pretrain = 20000;
    int finetune = 800;
    int batch_size = 32;
};

// Optional explicit paths for the CSV side outputs; when empty, the CLI
// derives them from the --out checkpoint path.
struct OutputsConfig {
    std::string loss_csv;
    std::string metrics_csv;
    std::string trace_csv;
};

// Declarative description of a pretrain/fine-tune/sample/analyze run.
// Parsed from a single strict JSON document: unknown keys and out-of-domain
// values are rejected with the offending field named, before any file is
// written.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    DatasetConfig dataset;
    ScheduleConfig schedule;
    DenoiserShape denoiser;
    std::optional<AdapterSpec> adapter;
    SamplerConfig sampler;
    StepsConfig steps;
    OutputsConfig outputs;
    AdamConfig adam;
    bool record_trace = false;

    // Non-fatal notes produced during validation (e.g. an ignored mask
    // block on an unmasked adapter kind).
    std::vector<std::string> warnings;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
};

}  // namespace tlora
