#include "tlora/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tlora/errors.hpp"

namespace tlora {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError("config: unknown key '" + key + "' in " + where);
        }
    }
}

json expect_object(const json& obj, const std::string& path) {
    if (!obj.is_object()) throw ConfigError("config: " + path + " must be an object");
    return obj;
}

double get_number(const json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError("config: " + path + "." + key + " must be a number");
    return v.get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) {
        throw ConfigError("config: " + path + "." + key + " must be an integer");
    }
    return v.get<int>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError("config: " + path + "." + key + " must be a string");
    return v.get<std::string>();
}

void require_range(bool ok, const std::string& field, const std::string& detail) {
    if (!ok) throw ConfigError("config: " + field + " " + detail);
}

}  // namespace

ToyDataset DatasetConfig::to_dataset() const {
    ToyDataset d;
    d.n_modes = modes;
    d.mode_std = mode_std;
    d.concept_cov_x = concept_cov_x;
    d.concept_cov_y = concept_cov_y;
    d.concept_size = concept_size;
    d.concept_mode = concept_mode;
    return d;
}

TimestepSampler SamplerConfig::to_sampler(int T) const {
    if (mode == TimestepSampler::Mode::Uniform) return TimestepSampler::uniform();
    return TimestepSampler::interval(lo, hi, T);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: JSON parse error: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    check_keys(root, "top level",
               {"seed", "dataset", "schedule", "denoiser", "adapter", "sampler", "steps",
                "outputs", "adam", "record_trace"});

    ExperimentConfig cfg;

    if (root.contains("seed")) {
        const json& s = root.at("seed");
        if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
            throw ConfigError("config: seed must be a non-negative integer");
        }
        cfg.seed = s.get<std::uint64_t>();
    }

    if (root.contains("dataset")) {
        const json d = expect_object(root.at("dataset"), "dataset");
        check_keys(d, "dataset",
                   {"modes", "mode_std", "concept_cov", "concept_size", "concept_mode"});
        cfg.dataset.modes = get_int(d, "dataset", "modes", cfg.dataset.modes);
        cfg.dataset.mode_std = get_number(d, "dataset", "mode_std", cfg.dataset.mode_std);
        if (d.contains("concept_cov")) {
            const json& cov = d.at("concept_cov");
            if (!cov.is_array() || cov.size() != 2 || !cov[0].is_number() || !cov[1].is_number()) {
                throw ConfigError("config: dataset.concept_cov must be [var_x, var_y]");
            }
            cfg.dataset.concept_cov_x = cov[0].get<double>();
            cfg.dataset.concept_cov_y = cov[1].get<double>();
        }
        cfg.dataset.concept_size = get_int(d, "dataset", "concept_size", cfg.dataset.concept_size);
        cfg.dataset.concept_mode = get_int(d, "dataset", "concept_mode", cfg.dataset.concept_mode);

        require_range(cfg.dataset.modes >= 2, "dataset.modes", "must be >= 2");
        require_range(cfg.dataset.mode_std > 0.0, "dataset.mode_std", "must be > 0");
        require_range(cfg.dataset.concept_cov_x > 0.0 && cfg.dataset.concept_cov_y > 0.0,
                      "dataset.concept_cov", "entries must be > 0");
        require_range(cfg.dataset.concept_size >= 1 && cfg.dataset.concept_size <= 8,
                      "dataset.concept_size", "must be in [1, 8]");
        require_range(cfg.dataset.concept_mode >= 0 && cfg.dataset.concept_mode < cfg.dataset.modes,
                      "dataset.concept_mode", "must be a valid mode index");
    }

    if (root.contains("schedule")) {
        const json s = expect_object(root.at("schedule"), "schedule");
        check_keys(s, "schedule", {"T", "beta_min", "beta_max"});
        cfg.schedule.T = get_int(s, "schedule", "T", cfg.schedule.T);
        cfg.schedule.beta_min = get_number(s, "schedule", "beta_min", cfg.schedule.beta_min);
        cfg.schedule.beta_max = get_number(s, "schedule", "beta_max", cfg.schedule.beta_max);
        require_range(cfg.schedule.T >= 1, "schedule.T", "must be >= 1");
        require_range(cfg.schedule.beta_min > 0.0 && cfg.schedule.beta_max < 1.0 &&
                          cfg.schedule.beta_min <= cfg.schedule.beta_max,
                      "schedule.beta_min/beta_max", "need 0 < beta_min <= beta_max < 1");
    }

    if (root.contains("denoiser")) {
        const json d = expect_object(root.at("denoiser"), "denoiser");
        check_keys(d, "denoiser",
                   {"data_dim", "time_dim", "cond_dim", "hidden_width", "hidden_layers"});
        cfg.denoiser.data_dim = get_int(d, "denoiser", "data_dim", cfg.denoiser.data_dim);
        cfg.denoiser.time_dim = get_int(d, "denoiser", "time_dim", cfg.denoiser.time_dim);
        cfg.denoiser.cond_dim = get_int(d, "denoiser", "cond_dim", cfg.denoiser.cond_dim);
        cfg.denoiser.hidden_width = get_int(d, "denoiser", "hidden_width", cfg.denoiser.hidden_width);
        cfg.denoiser.hidden_layers =
            get_int(d, "denoiser", "hidden_layers", cfg.denoiser.hidden_layers);
        require_range(cfg.denoiser.data_dim >= 1, "denoiser.data_dim", "must be >= 1");
        require_range(cfg.denoiser.time_dim >= 2 && cfg.denoiser.time_dim % 2 == 0,
                      "denoiser.time_dim", "must be an even integer >= 2");
        require_range(cfg.denoiser.cond_dim >= 1, "denoiser.cond_dim", "must be >= 1");
        require_range(cfg.denoiser.hidden_width >= 1, "denoiser.hidden_width", "must be >= 1");
        require_range(cfg.denoiser.hidden_layers >= 1, "denoiser.hidden_layers", "must be >= 1");
    }

    if (root.contains("adapter")) {
        const json a = expect_object(root.at("adapter"), "adapter");
        check_keys(a, "adapter", {"kind", "r", "r_min", "init", "lambda_reg"});
        AdapterSpec spec;
        spec.kind = adapter_kind_from_string(get_string(a, "adapter", "kind", "TLoRA"));
        spec.r = get_int(a, "adapter", "r", spec.r);
        require_range(spec.r >= 1, "adapter.r", "must be >= 1");
        if (a.contains("r_min")) {
            const int r_min = get_int(a, "adapter", "r_min", 0);
            if (kind_uses_mask(spec.kind)) {
                require_range(r_min >= 1, "adapter.r_min", "must be >= 1");
                require_range(r_min <= spec.r, "adapter.r_min",
                              "must be <= adapter.r (got " + std::to_string(r_min) + " > " +
                                  std::to_string(spec.r) + ")");
                spec.r_min = r_min;
            } else {
                cfg.warnings.push_back("adapter.r_min ignored: kind " +
                                       std::string(to_string(spec.kind)) + " uses no mask schedule");
            }
        } else if (kind_uses_mask(spec.kind)) {
            throw ConfigError("config: adapter.r_min is required for kind " +
                              std::string(to_string(spec.kind)));
        }
        spec.variant = init_variant_from_string(get_string(a, "adapter", "init", "from_r_last"));
        spec.lambda_reg = get_number(a, "adapter", "lambda_reg", 0.0);
        require_range(spec.lambda_reg >= 0.0, "adapter.lambda_reg", "must be >= 0");
        cfg.adapter = spec;
    }

    if (root.contains("sampler")) {
        const json s = expect_object(root.at("sampler"), "sampler");
        check_keys(s, "sampler", {"mode", "lo", "hi"});
        const std::string mode = get_string(s, "sampler", "mode", "uniform");
        if (mode == "uniform") {
            cfg.sampler.mode = TimestepSampler::Mode::Uniform;
            if (s.contains("lo") || s.contains("hi")) {
                cfg.warnings.push_back("sampler.lo/hi ignored in uniform mode");
            }
        } else if (mode == "interval") {
            cfg.sampler.mode = TimestepSampler::Mode::Interval;
            cfg.sampler.lo = get_int(s, "sampler", "lo", -1);
            cfg.sampler.hi = get_int(s, "sampler", "hi", -1);
            require_range(cfg.sampler.lo >= 0 && cfg.sampler.lo < cfg.sampler.hi &&
                              cfg.sampler.hi <= cfg.schedule.T,
                          "sampler.lo/hi", "need 0 <= lo < hi <= schedule.T");
        } else {
            throw ConfigError("config: sampler.mode must be 'uniform' or 'interval'");
        }
    }

    if (root.contains("steps")) {
        const json s = expect_object(root.at("steps"), "steps");
        check_keys(s, "steps", {"pretrain", "finetune", "batch_size"});
        cfg.steps.pretrain = get_int(s, "steps", "pretrain", cfg.steps.pretrain);
        cfg.steps.finetune = get_int(s, "steps", "finetune", cfg.steps.finetune);
        cfg.steps.batch_size = get_int(s, "steps", "batch_size", cfg.steps.batch_size);
        require_range(cfg.steps.pretrain >= 0, "steps.pretrain", "must be >= 0");
        require_range(cfg.steps.finetune >= 0, "steps.finetune", "must be >= 0");
        require_range(cfg.steps.batch_size >= 1, "steps.batch_size", "must be >= 1");
    }

    if (root.contains("outputs")) {
        const json o = expect_object(root.at("outputs"), "outputs");
        check_keys(o, "outputs", {"loss_csv", "metrics_csv", "trace_csv"});
        cfg.outputs.loss_csv = get_string(o, "outputs", "loss_csv", "");
        cfg.outputs.metrics_csv = get_string(o, "outputs", "metrics_csv", "");
        cfg.outputs.trace_csv = get_string(o, "outputs", "trace_csv", "");
    }

    if (root.contains("adam")) {
        const json a = expect_object(root.at("adam"), "adam");
        check_keys(a, "adam", {"lr", "beta1", "beta2", "epsilon", "weight_decay"});
        cfg.adam.lr = get_number(a, "adam", "lr", cfg.adam.lr);
        cfg.adam.beta1 = get_number(a, "adam", "beta1", cfg.adam.beta1);
        cfg.adam.beta2 = get_number(a, "adam", "beta2", cfg.adam.beta2);
        cfg.adam.epsilon = get_number(a, "adam", "epsilon", cfg.adam.epsilon);
        cfg.adam.weight_decay = get_number(a, "adam", "weight_decay", cfg.adam.weight_decay);
        require_range(cfg.adam.lr > 0.0, "adam.lr", "must be > 0");
        require_range(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0, "adam.beta1",
                      "must be in [0, 1)");
        require_range(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0, "adam.beta2",
                      "must be in [0, 1)");
        require_range(cfg.adam.epsilon > 0.0, "adam.epsilon", "must be > 0");
        require_range(cfg.adam.weight_decay >= 0.0, "adam.weight_decay", "must be >= 0");
    }

    if (root.contains("record_trace")) {
        const json& v = root.at("record_trace");
        if (!v.is_boolean()) throw ConfigError("config: record_trace must be a boolean");
        cfg.record_trace = v.get<bool>();
    }

    // Cross-field checks that only make sense with the whole document.
    if (cfg.adapter) {
        const int max_rank = cfg.denoiser.hidden_width;
        require_range(cfg.adapter->r <= max_rank, "adapter.r",
                      "must be <= denoiser.hidden_width (" + std::to_string(max_rank) + ")");
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

}  // namespace tlora
