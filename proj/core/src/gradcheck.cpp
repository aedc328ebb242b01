#include "tlora/gradcheck.hpp"

#include <cmath>

#include "tlora/rng.hpp"

namespace tlora {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kRelFloor = 1e-4;

struct NamedParam {
    std::string name;
    Param* param;
};

std::vector<NamedParam> named_trainable_params(Denoiser& d) {
    std::vector<NamedParam> out;
    const auto add_layer = [&out](const std::string& base, DenseLayer& layer) {
        if (layer.weight.present() && layer.weight.trainable) {
            out.push_back({base + ".W", &layer.weight});
        }
        if (layer.bias.trainable) out.push_back({base + ".b", &layer.bias});
        if (layer.adapted()) {
            LinearAdapter& ad = layer.adapter();
            if (ad.A.trainable) out.push_back({base + ".A", &ad.A});
            if (ad.B.trainable) out.push_back({base + ".B", &ad.B});
            if (ad.S.present() && ad.S.trainable) out.push_back({base + ".S", &ad.S});
        }
    };
    add_layer("in_proj", d.in_proj);
    for (std::size_t i = 0; i < d.hidden.size(); ++i) {
        add_layer("hidden" + std::to_string(i), d.hidden[i]);
    }
    add_layer("head", d.head);
    return out;
}

void jitter(Matrix& m, Rng& rng, double sd) {
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] += sd * rng.gaussian();
}

}  // namespace

GradCheckCase gradient_check_denoiser(const std::optional<AdapterSpec>& adapter,
                                      double lambda_reg, std::uint64_t seed,
                                      const std::string& name) {
    DenoiserShape shape;
    shape.data_dim = 2;
    shape.time_dim = 8;
    shape.cond_dim = 4;
    shape.hidden_width = 16;
    shape.hidden_layers = 3;
    const int horizon = 1000;

    Denoiser d = Denoiser::init(shape, 8, seed_for_stream(seed, 1));
    if (adapter) d.attach_adapters(*adapter, horizon, seed_for_stream(seed, 2));

    // Evaluate at a random point: fresh inits have exact zeros (B for plain
    // LoRA, biases) that would make the check vacuous.
    Rng rng(seed_for_stream(seed, 3));
    std::vector<NamedParam> params = named_trainable_params(d);
    for (NamedParam& np : params) jitter(np.param->value, rng, 0.2);

    const std::size_t batch = 3;
    const int ts[3] = {horizon, horizon / 2, 3};  // includes the fully masked endpoint
    Matrix z(2, batch), cond(static_cast<std::size_t>(shape.cond_dim), batch), target(2, batch);
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.gaussian();
    for (std::size_t i = 0; i < cond.size(); ++i) cond.data()[i] = rng.gaussian();
    for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] = rng.gaussian();

    const auto loss_only = [&]() {
        const Matrix pred = d.forward(z, ts, cond);
        double loss = mse_loss(pred, target).loss;
        if (lambda_reg > 0.0 && d.adapted()) {
            for (DenseLayer& layer : d.hidden) {
                loss += adalora_penalty(layer.adapter().A.value, layer.adapter().B.value,
                                        lambda_reg)
                            .value;
            }
        }
        return loss;
    };

    for (NamedParam& np : params) np.param->zero_grad();
    d.forward_backward(z, ts, cond, target);
    if (lambda_reg > 0.0 && d.adapted()) {
        for (DenseLayer& layer : d.hidden) {
            LinearAdapter& ad = layer.adapter();
            PenaltyResult pen = adalora_penalty(ad.A.value, ad.B.value, lambda_reg);
            add_scaled(ad.A.grad, pen.grad_a, 1.0);
            add_scaled(ad.B.grad, pen.grad_b, 1.0);
        }
    }

    GradCheckCase result;
    result.name = name;
    for (NamedParam& np : params) {
        Matrix analytic = np.param->grad;
        Matrix& value = np.param->value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value.data()[i];
            value.data()[i] = saved + kFdStep;
            const double lp = loss_only();
            value.data()[i] = saved - kFdStep;
            const double lm = loss_only();
            value.data()[i] = saved;
            const double numeric = (lp - lm) / (2.0 * kFdStep);
            const double a = analytic.data()[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), kRelFloor});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = np.name;
            }
        }
    }
    return result;
}

std::vector<GradCheckCase> run_gradient_checks(std::uint64_t seed) {
    std::vector<GradCheckCase> out;
    out.push_back(gradient_check_denoiser(std::nullopt, 0.0, seed, "raw"));

    const auto masked_spec = [](AdapterKind kind) {
        AdapterSpec s;
        s.kind = kind;
        s.r = 8;
        s.r_min = 4;
        return s;
    };
    const auto plain_spec = [](AdapterKind kind) {
        AdapterSpec s;
        s.kind = kind;
        s.r = 8;
        return s;
    };

    out.push_back(gradient_check_denoiser(plain_spec(AdapterKind::PlainLoRA), 0.0,
                                          seed_for_stream(seed, 11), "PlainLoRA"));
    out.push_back(gradient_check_denoiser(masked_spec(AdapterKind::VanillaTLoRA), 0.0,
                                          seed_for_stream(seed, 12), "VanillaTLoRA"));
    out.push_back(gradient_check_denoiser(plain_spec(AdapterKind::OrthoLoRA), 0.0,
                                          seed_for_stream(seed, 13), "OrthoLoRA"));
    out.push_back(gradient_check_denoiser(masked_spec(AdapterKind::TLoRA), 0.0,
                                          seed_for_stream(seed, 14), "TLoRA"));
    out.push_back(gradient_check_denoiser(plain_spec(AdapterKind::AdaLoRASVD), 0.1,
                                          seed_for_stream(seed, 15), "AdaLoRASVD+penalty"));
    return out;
}

}  // namespace tlora
