#include "tlora/experiment.hpp"

#include <nlohmann/json.hpp>

#include "tlora/errors.hpp"

namespace tlora {

namespace {

using nlohmann::json;

std::string hidden_name(std::size_t i) { return "hidden" + std::to_string(i); }

void push_tensor(Checkpoint& ckpt, std::string name, const Matrix& value) {
    ckpt.tensors.push_back({std::move(name), value});
}

json dataset_meta(const ToyDataset& d) {
    return json{{"modes", d.n_modes},
                {"mode_std", d.mode_std},
                {"concept_cov", {d.concept_cov_x, d.concept_cov_y}},
                {"concept_size", d.concept_size},
                {"concept_mode", d.concept_mode}};
}

}  // namespace

Experiment make_experiment(const ExperimentConfig& cfg) {
    Experiment exp;
    exp.config = cfg;
    exp.dataset = cfg.dataset.to_dataset();
    exp.schedule = cfg.schedule.to_schedule();
    exp.denoiser = Denoiser::init(cfg.denoiser, cfg.dataset.modes, cfg.seed);
    exp.phase = "initialized";
    return exp;
}

Checkpoint to_checkpoint(const Experiment& exp) {
    const Denoiser& d = exp.denoiser;
    Checkpoint ckpt;
    push_tensor(ckpt, "in_proj.W", d.in_proj.weight_value());
    push_tensor(ckpt, "in_proj.b", d.in_proj.bias.value);
    for (std::size_t i = 0; i < d.hidden.size(); ++i) {
        const DenseLayer& layer = d.hidden[i];
        const std::string base = hidden_name(i);
        push_tensor(ckpt, base + ".W", layer.weight_value());
        push_tensor(ckpt, base + ".b", layer.bias.value);
        if (layer.adapted()) {
            const LinearAdapter& ad = layer.adapter();
            push_tensor(ckpt, base + ".A", ad.A.value);
            push_tensor(ckpt, base + ".B", ad.B.value);
            if (ad.S.present()) push_tensor(ckpt, base + ".S", ad.S.value);
            if (!ad.A0.empty()) {
                push_tensor(ckpt, base + ".A0", ad.A0);
                push_tensor(ckpt, base + ".B0", ad.B0);
                push_tensor(ckpt, base + ".S0", ad.S0);
            }
        }
    }
    push_tensor(ckpt, "head.W", d.head.weight_value());
    push_tensor(ckpt, "head.b", d.head.bias.value);
    push_tensor(ckpt, "cond.table", d.cond_table);

    json meta;
    meta["phase"] = exp.phase;
    meta["seed"] = exp.config.seed;
    meta["shape"] = {{"data_dim", d.shape.data_dim},
                     {"time_dim", d.shape.time_dim},
                     {"cond_dim", d.shape.cond_dim},
                     {"hidden_width", d.shape.hidden_width},
                     {"hidden_layers", d.shape.hidden_layers}};
    meta["dataset"] = dataset_meta(exp.dataset);
    meta["schedule"] = {{"T", exp.config.schedule.T},
                        {"beta_min", exp.config.schedule.beta_min},
                        {"beta_max", exp.config.schedule.beta_max}};
    if (d.adapted()) {
        const LinearAdapter& ad = d.hidden.front().adapter();
        json a;
        a["kind"] = to_string(ad.kind);
        a["r"] = ad.full_rank();
        if (ad.schedule) {
            a["r_min"] = ad.schedule->r_min;
            a["T"] = ad.schedule->T;
        }
        a["variant"] = to_string(ad.variant);
        a["lambda_reg"] = exp.config.adapter ? exp.config.adapter->lambda_reg : 0.0;
        a["seed"] = exp.config.seed;
        meta["adapter"] = a;
    } else {
        meta["adapter"] = nullptr;
    }
    ckpt.metadata_json = meta.dump();
    return ckpt;
}

Experiment from_checkpoint(const Checkpoint& ckpt) {
    json meta;
    try {
        meta = json::parse(ckpt.metadata_json);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("checkpoint: bad metadata JSON: ") + e.what());
    }

    Experiment exp;
    try {
        exp.phase = meta.at("phase").get<std::string>();
        exp.config.seed = meta.at("seed").get<std::uint64_t>();

        const json& shape = meta.at("shape");
        exp.config.denoiser.data_dim = shape.at("data_dim").get<int>();
        exp.config.denoiser.time_dim = shape.at("time_dim").get<int>();
        exp.config.denoiser.cond_dim = shape.at("cond_dim").get<int>();
        exp.config.denoiser.hidden_width = shape.at("hidden_width").get<int>();
        exp.config.denoiser.hidden_layers = shape.at("hidden_layers").get<int>();

        const json& ds = meta.at("dataset");
        exp.config.dataset.modes = ds.at("modes").get<int>();
        exp.config.dataset.mode_std = ds.at("mode_std").get<double>();
        exp.config.dataset.concept_cov_x = ds.at("concept_cov")[0].get<double>();
        exp.config.dataset.concept_cov_y = ds.at("concept_cov")[1].get<double>();
        exp.config.dataset.concept_size = ds.at("concept_size").get<int>();
        exp.config.dataset.concept_mode = ds.at("concept_mode").get<int>();

        const json& sc = meta.at("schedule");
        exp.config.schedule.T = sc.at("T").get<int>();
        exp.config.schedule.beta_min = sc.at("beta_min").get<double>();
        exp.config.schedule.beta_max = sc.at("beta_max").get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("checkpoint: incomplete metadata: ") + e.what());
    }

    exp.dataset = exp.config.dataset.to_dataset();
    exp.schedule = exp.config.schedule.to_schedule();

    Denoiser d;
    d.shape = exp.config.denoiser;
    d.n_context = exp.config.dataset.modes;
    d.in_proj.weight = Param(ckpt.require("in_proj.W"));
    d.in_proj.bias = Param(ckpt.require("in_proj.b"));

    std::optional<AdapterSpec> adapter_spec;
    if (!meta.at("adapter").is_null()) {
        const json& a = meta.at("adapter");
        AdapterSpec spec;
        spec.kind = adapter_kind_from_string(a.at("kind").get<std::string>());
        spec.r = a.at("r").get<int>();
        if (a.contains("r_min")) spec.r_min = a.at("r_min").get<int>();
        spec.variant = init_variant_from_string(a.at("variant").get<std::string>());
        spec.lambda_reg = a.value("lambda_reg", 0.0);
        adapter_spec = spec;
        exp.config.adapter = spec;
    }

    for (int i = 0; i < d.shape.hidden_layers; ++i) {
        const std::string base = hidden_name(static_cast<std::size_t>(i));
        DenseLayer layer;
        layer.weight = Param(ckpt.require(base + ".W"));
        layer.bias = Param(ckpt.require(base + ".b"));
        if (adapter_spec) {
            LinearAdapter ad;
            ad.kind = adapter_spec->kind;
            ad.variant = adapter_spec->variant;
            ad.W = ckpt.require(base + ".W");
            ad.A = Param(ckpt.require(base + ".A"));
            ad.B = Param(ckpt.require(base + ".B"));
            if (kind_has_scale(ad.kind)) ad.S = Param(ckpt.require(base + ".S"));
            if (kind_has_frozen_init(ad.kind)) {
                ad.A0 = ckpt.require(base + ".A0");
                ad.B0 = ckpt.require(base + ".B0");
                ad.S0 = ckpt.require(base + ".S0");
            }
            if (kind_uses_mask(ad.kind)) {
                if (!adapter_spec->r_min) {
                    throw ConfigError("checkpoint: masked adapter kind without r_min metadata");
                }
                ad.schedule = MaskSchedule(adapter_spec->r, *adapter_spec->r_min,
                                           exp.config.schedule.T);
            }
            layer.attach_adapter(std::move(ad));
        }
        d.hidden.push_back(std::move(layer));
    }

    d.head.weight = Param(ckpt.require("head.W"));
    d.head.bias = Param(ckpt.require("head.b"));
    d.cond_table = ckpt.require("cond.table");
    if (adapter_spec) {
        d.in_proj.weight.trainable = false;
        d.in_proj.bias.trainable = false;
        d.head.weight.trainable = false;
        d.head.bias.trainable = false;
    }
    exp.denoiser = std::move(d);
    return exp;
}

}  // namespace tlora
