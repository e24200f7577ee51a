#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynamo/nn.hpp"
#include "dynamo/serialize.hpp"

namespace dynamo {

// ---------------------------------------------------------------------------
// L1 reconstruction
// ---------------------------------------------------------------------------

inline double l1_loss(const Tensor& generated, const Tensor& target) {
    if (!generated.same_shape(target))
        throw ShapeError("l1_loss: " + generated.shape_str() + " vs " + target.shape_str());
    double s = 0.0;
    for (int64_t i = 0; i < generated.numel(); ++i) s += std::abs(double(generated[i]) - double(target[i]));
    return s / double(generated.numel());
}

// accumulates weight * dL1/dgenerated into dgen
inline void l1_loss_backward(const Tensor& generated, const Tensor& target, float weight, Tensor& dgen) {
    const float g = weight / float(generated.numel());
    for (int64_t i = 0; i < generated.numel(); ++i) {
        const float d = generated[i] - target[i];
        dgen[i] += d > 0.0f ? g : (d < 0.0f ? -g : 0.0f);
    }
}

// ---------------------------------------------------------------------------
// Perceptual loss: sum over tapped layers of elementwise MSE between feature
// maps. Pretrained weights are not shippable at desk scale, so the default
// extractor is a seeded fixed-random conv stack with the same layout; real
// weights can be imported from a tensor archive.
// ---------------------------------------------------------------------------

class PerceptualExtractor {
public:
    enum class Source { fixed_random_seeded, pretrained_import };
    static constexpr int kStages = 5;

    PerceptualExtractor() = default;

    static PerceptualExtractor seeded(uint64_t seed, int base_width = 16) {
        PerceptualExtractor e;
        e.source_ = Source::fixed_random_seeded;
        e.base_width_ = base_width;
        Rng rng(seed);
        int cin = 3;
        for (int i = 0; i < kStages; ++i) {
            const int w = base_width * std::min(8, 1 << i);
            e.stages_[size_t(i)].a = nn::Conv2d(rng, cin, w, 3, 1);
            e.stages_[size_t(i)].b = nn::Conv2d(rng, w, w, 3, 1);
            cin = w;
        }
        e.initialized_ = true;
        return e;
    }

    static PerceptualExtractor import_archive(const std::string& path) {
        const TensorArchive a = TensorArchive::load(path);
        int bw = 16;
        try {
            bw = nlohmann::json::parse(a.config_text).value("base_width", 16);
        } catch (...) {
            throw IoError("perceptual import: bad archive header in " + path);
        }
        PerceptualExtractor e = seeded(0, bw);
        e.source_ = Source::pretrained_import;
        for (int i = 0; i < kStages; ++i)
            for (auto [conv, tag] : {std::pair<nn::Conv2d*, const char*>{&e.stages_[size_t(i)].a, "a"},
                                     std::pair<nn::Conv2d*, const char*>{&e.stages_[size_t(i)].b, "b"}}) {
                for (auto [param, t] : {std::pair<nn::Param*, const char*>{&conv->weight, "weight"},
                                        std::pair<nn::Param*, const char*>{&conv->bias_p, "bias"}}) {
                    const std::string key = "vgg/stage" + std::to_string(i) + tag + "/" + t;
                    const Tensor* found = a.find(key);
                    if (!found) throw IoError("perceptual import: missing " + key);
                    if (found->shape() != param->value.shape())
                        throw IoError("perceptual import: shape mismatch for " + key);
                    param->value = *found;
                }
            }
        return e;
    }

    void save(const std::string& path) const {
        TensorArchive a;
        a.config_text = "{\"kind\":\"perceptual\",\"base_width\":" + std::to_string(base_width_) + "}";
        for (int i = 0; i < kStages; ++i) {
            const auto& st = stages_[size_t(i)];
            a.add("vgg/stage" + std::to_string(i) + "a/weight", st.a.weight.value);
            a.add("vgg/stage" + std::to_string(i) + "a/bias", st.a.bias_p.value);
            a.add("vgg/stage" + std::to_string(i) + "b/weight", st.b.weight.value);
            a.add("vgg/stage" + std::to_string(i) + "b/bias", st.b.bias_p.value);
        }
        a.save(path);
    }

    bool initialized() const { return initialized_; }
    Source source() const { return source_; }

    // Pre-pooling activations of every stage. Mutates internal caches: when a
    // gradient is needed, run the non-grad image first and the grad image last.
    std::vector<Tensor> features(const Tensor& x) {
        require_init();
        std::vector<Tensor> taps;
        Tensor h = x;
        for (int i = 0; i < kStages; ++i) {
            auto& st = stages_[size_t(i)];
            st.act_a = nn::leaky_relu(st.a.forward(h));
            st.act_b = nn::leaky_relu(st.b.forward(st.act_a));
            taps.push_back(st.act_b);
            if (i + 1 < kStages) {
                st.pool_in_h = st.act_b.dim(2);
                st.pool_in_w = st.act_b.dim(3);
                h = nn::avgpool2(st.act_b);
            }
        }
        return taps;
    }

    // d(sum of taps . tap_grads)/dx given that the last features() call saw x
    Tensor backward(const std::vector<Tensor>& tap_grads) {
        require_init();
        Tensor d;
        for (int i = kStages - 1; i >= 0; --i) {
            auto& st = stages_[size_t(i)];
            if (i == kStages - 1) {
                d = tap_grads[size_t(i)];
            } else {
                d = nn::avgpool2_backward(d, st.pool_in_h, st.pool_in_w);
                for (int64_t j = 0; j < d.numel(); ++j) d[j] += tap_grads[size_t(i)][j];
            }
            d = nn::leaky_relu_backward(d, st.act_b);
            d = st.b.backward(d);
            d = nn::leaky_relu_backward(d, st.act_a);
            d = st.a.backward(d);
        }
        // the extractor is frozen: its accumulated parameter grads are unused
        for (auto& st : stages_) {
            for (auto* p : st.a.params()) p->zero_grad();
            for (auto* p : st.b.params()) p->zero_grad();
        }
        return d;
    }

private:
    struct Stage {
        nn::Conv2d a, b;
        Tensor act_a, act_b;
        int pool_in_h = 0, pool_in_w = 0;
    };
    std::array<Stage, kStages> stages_;
    bool initialized_ = false;
    int base_width_ = 16;
    Source source_ = Source::fixed_random_seeded;

    void require_init() const {
        if (!initialized_) throw ConfigError("PerceptualExtractor is uninitialized");
    }
};

inline double perceptual_loss(PerceptualExtractor& extractor, const Tensor& generated, const Tensor& target) {
    if (!generated.same_shape(target))
        throw ShapeError("perceptual_loss: " + generated.shape_str() + " vs " + target.shape_str());
    const std::vector<Tensor> ft = extractor.features(target);
    const std::vector<Tensor> fg = extractor.features(generated);
    double loss = 0.0;
    for (size_t k = 0; k < fg.size(); ++k) {
        double s = 0.0;
        for (int64_t i = 0; i < fg[k].numel(); ++i) {
            const double d = double(fg[k][i]) - double(ft[k][i]);
            s += d * d;
        }
        loss += s / double(fg[k].numel());
    }
    return loss;
}

// loss value; accumulates weight * dL/dgenerated into dgen
inline double perceptual_loss_and_grad(PerceptualExtractor& extractor, const Tensor& generated, const Tensor& target,
                                       float weight, Tensor& dgen) {
    if (!generated.same_shape(target))
        throw ShapeError("perceptual_loss: " + generated.shape_str() + " vs " + target.shape_str());
    const std::vector<Tensor> ft = extractor.features(target);
    const std::vector<Tensor> fg = extractor.features(generated);  // caches now hold the generated pass
    double loss = 0.0;
    std::vector<Tensor> tap_grads(fg.size());
    for (size_t k = 0; k < fg.size(); ++k) {
        tap_grads[k] = Tensor(fg[k].shape());
        const float s = 2.0f * weight / float(fg[k].numel());
        double acc = 0.0;
        for (int64_t i = 0; i < fg[k].numel(); ++i) {
            const double d = double(fg[k][i]) - double(ft[k][i]);
            acc += d * d;
            tap_grads[k][i] = s * float(d);
        }
        loss += acc / double(fg[k].numel());
    }
    const Tensor dx = extractor.backward(tap_grads);
    for (int64_t i = 0; i < dgen.numel(); ++i) dgen[i] += dx[i];
    return loss;
}

// ---------------------------------------------------------------------------
// Adversarial loss: non-saturating logistic (the canonical companion of the
// discriminator family used here). R1 lives in the trainer, it needs D.
// ---------------------------------------------------------------------------

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct GanLossParts {
    double generator = 0.0;      // softplus(-D(fake))
    double discriminator = 0.0;  // softplus(-D(real)) + softplus(D(fake))
};

inline GanLossParts gan_losses(const Tensor& d_real, const Tensor& d_fake) {
    if (!d_real.all_finite() || !d_fake.all_finite()) throw NumericError("gan_losses: non-finite logits");
    GanLossParts out;
    const int nr = int(d_real.numel()), nf = int(d_fake.numel());
    for (int i = 0; i < nf; ++i) out.generator += softplus(-double(d_fake[i]));
    out.generator /= nf;
    for (int i = 0; i < nr; ++i) out.discriminator += softplus(-double(d_real[i]));
    for (int i = 0; i < nf; ++i) out.discriminator += softplus(double(d_fake[i]));
    out.discriminator /= nr;  // nr == nf in training; keeps the scalar per-sample scaled
    return out;
}

// scalar-logit convenience used by tests
inline GanLossParts gan_losses(double d_real, double d_fake) {
    Tensor r({1}), f({1});
    r[0] = float(d_real);
    f[0] = float(d_fake);
    return gan_losses(r, f);
}

// d(generator term)/d(fake logits)
inline Tensor gan_generator_grad(const Tensor& d_fake, float weight = 1.0f) {
    Tensor g(d_fake.shape());
    const float n = float(d_fake.numel());
    for (int64_t i = 0; i < g.numel(); ++i) g[i] = -float(sigmoid(-double(d_fake[i]))) * weight / n;
    return g;
}

// d(discriminator term)/d(real logits), d(.)/d(fake logits)
inline std::pair<Tensor, Tensor> gan_discriminator_grads(const Tensor& d_real, const Tensor& d_fake) {
    Tensor gr(d_real.shape()), gf(d_fake.shape());
    const float n = float(d_real.numel());
    for (int64_t i = 0; i < gr.numel(); ++i) gr[i] = -float(sigmoid(-double(d_real[i]))) / n;
    for (int64_t i = 0; i < gf.numel(); ++i) gf[i] = float(sigmoid(double(d_fake[i]))) / n;
    return {gr, gf};
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

struct LossWeights {
    float l1 = 1.0f;
    float vgg = 1.0f;
    float gan = 1.0f;
};

inline double total_loss(double l1, double vgg, double gan, const LossWeights& w = {}) {
    return double(w.l1) * l1 + double(w.vgg) * vgg + double(w.gan) * gan;
}

}  // namespace dynamo
