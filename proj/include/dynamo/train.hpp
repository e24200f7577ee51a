#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynamo/dataset.hpp"
#include "dynamo/losses.hpp"
#include "dynamo/networks.hpp"

namespace dynamo {

struct TrainConfig {
    ArchConfig arch;
    int batch_size = 4;
    float learning_rate = 0.002f;
    float adam_beta1 = 0.0f;
    float adam_beta2 = 0.99f;
    int iterations = 20000;
    LossWeights loss_weights;
    float r1_gamma = 10.0f;
    int r1_interval = 16;
    uint64_t seed = 1234;
    int checkpoint_interval = 1000;
    std::string device = "cpu";
    bool boundary_drop = false;  // true: skip frames whose window leaves the sequence
    float ema_decay = 0.0f;      // 0 disables the generator weight average
    uint64_t vgg_seed = 7;
    int vgg_base_width = 8;
    std::string vgg_import;     // optional pretrained perceptual weights
    float early_stop_l1 = 0.0f;  // 0 disables; stop once smoothed train L1 crosses
    int smooth_window = 100;

    // hyperparameters exactly as printed in the paper
    static TrainConfig paper() {
        TrainConfig c;
        c.arch.image_size = 512;
        c.arch.base_width = 64;
        c.batch_size = 16;
        c.learning_rate = 0.02f;
        c.iterations = 100000;
        return c;
    }

    // commodity single-device defaults
    static TrainConfig desk() { return TrainConfig(); }

    static TrainConfig preset(const std::string& name) {
        if (name == "paper") return paper();
        if (name == "desk") return desk();
        throw ConfigError("unknown preset '" + name + "' (expected paper|desk)");
    }

    void validate() const {
        arch.validate();
        if (batch_size <= 0) throw ConfigError("batch_size must be positive");
        if (learning_rate <= 0.0f) throw ConfigError("learning_rate must be positive");
        if (iterations < 0) throw ConfigError("iterations must be >= 0");
        if (r1_interval <= 0) throw ConfigError("r1_interval must be positive");
        if (device != "cpu") throw ConfigError("device '" + device + "' unavailable (cpu only)");
    }

    // single flat JSON document
    nlohmann::json to_json() const {
        return {{"image_size", arch.image_size},
                {"base_width", arch.base_width},
                {"max_width", arch.max_width},
                {"window_offsets", arch.motion_offsets},
                {"refine_enabled", arch.refine_enabled},
                {"init_seed", arch.init_seed},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"adam_beta1", adam_beta1},
                {"adam_beta2", adam_beta2},
                {"iterations", iterations},
                {"loss_w_l1", loss_weights.l1},
                {"loss_w_vgg", loss_weights.vgg},
                {"loss_w_gan", loss_weights.gan},
                {"r1_gamma", r1_gamma},
                {"r1_interval", r1_interval},
                {"seed", seed},
                {"checkpoint_interval", checkpoint_interval},
                {"device", device},
                {"boundary_policy", boundary_drop ? "drop" : "clamp"},
                {"ema_decay", ema_decay},
                {"vgg_seed", vgg_seed},
                {"vgg_base_width", vgg_base_width},
                {"vgg_import", vgg_import},
                {"early_stop_l1", early_stop_l1},
                {"smooth_window", smooth_window}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("image_size", c.arch.image_size);
        get("base_width", c.arch.base_width);
        get("max_width", c.arch.max_width);
        get("window_offsets", c.arch.motion_offsets);
        get("refine_enabled", c.arch.refine_enabled);
        get("init_seed", c.arch.init_seed);
        get("batch_size", c.batch_size);
        get("learning_rate", c.learning_rate);
        get("adam_beta1", c.adam_beta1);
        get("adam_beta2", c.adam_beta2);
        get("iterations", c.iterations);
        get("loss_w_l1", c.loss_weights.l1);
        get("loss_w_vgg", c.loss_weights.vgg);
        get("loss_w_gan", c.loss_weights.gan);
        get("r1_gamma", c.r1_gamma);
        get("r1_interval", c.r1_interval);
        get("seed", c.seed);
        get("checkpoint_interval", c.checkpoint_interval);
        get("device", c.device);
        get("ema_decay", c.ema_decay);
        get("vgg_seed", c.vgg_seed);
        get("vgg_base_width", c.vgg_base_width);
        get("vgg_import", c.vgg_import);
        get("early_stop_l1", c.early_stop_l1);
        get("smooth_window", c.smooth_window);
        if (j.contains("window_offsets") && c.arch.motion_offsets.empty()) c.arch.refine_enabled = false;
        if (j.contains("boundary_policy")) {
            const std::string p = j.at("boundary_policy").get<std::string>();
            if (p != "clamp" && p != "drop") throw ConfigError("boundary_policy must be clamp|drop");
            c.boundary_drop = p == "drop";
        }
        return c;
    }
};

struct TrainLogRow {
    int iter = 0;
    double l1 = 0.0, vgg = 0.0, g_gan = 0.0, d_gan = 0.0;
};

// ---------------------------------------------------------------------------
// Trainer: alternating generator-side and discriminator-side Adam steps.
// Generator steps touch E_P, E_M, E_Refine, T only; discriminator steps touch
// D only. Lazy R1 applies every r1_interval discriminator steps.
// ---------------------------------------------------------------------------

class Trainer {
public:
    Trainer(ModelBundle& bundle, const SequenceDataset& data, TrainConfig cfg,
            RasterStyle style = RasterStyle::default_style())
        : bundle_(bundle),
          data_(data),
          cfg_(std::move(cfg)),
          style_(std::move(style)),
          cache_(data, style_),
          g_opt_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2),
          d_opt_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2),
          sample_rng_(Rng(cfg_.seed).child(1)),
          noise_rng_(Rng(cfg_.seed).child(2)) {
        cfg_.validate();
        if (data_.width() != cfg_.arch.image_size || data_.height() != cfg_.arch.image_size)
            throw ConfigError("Trainer: dataset resolution does not match the model config");
        const int max_off = cfg_.arch.motion_offsets.empty() ? 0 : cfg_.arch.motion_offsets.back();
        for (size_t i = 0; i < data_.size(); ++i) {
            if (data_.tag(i) != SplitTag::train) continue;
            if (cfg_.boundary_drop && int64_t(i) < max_off) continue;
            train_indices_.push_back(i);
        }
        if (train_indices_.empty()) throw ConfigError("Trainer: no usable training frames");
        vgg_ = cfg_.vgg_import.empty() ? PerceptualExtractor::seeded(cfg_.vgg_seed, cfg_.vgg_base_width)
                                       : PerceptualExtractor::import_archive(cfg_.vgg_import);
        if (cfg_.ema_decay > 0.0f)
            for (nn::Param* p : bundle_.params_g()) ema_.push_back(p->value);
    }

    const std::vector<size_t>& train_indices() const { return train_indices_; }
    const std::vector<TrainLogRow>& log() const { return log_; }
    double smoothed_l1() const {
        if (l1_window_.empty()) return 0.0;
        double s = 0.0;
        for (double v : l1_window_) s += v;
        return s / double(l1_window_.size());
    }

    TrainLogRow train_iteration() {
        const int n = cfg_.batch_size;
        std::vector<size_t> idx(size_t(n));
        for (auto& i : idx) i = train_indices_[size_t(sample_rng_.index(int64_t(train_indices_.size())))];
        Tensor psig, msig, target;
        assemble_batch(idx, psig, msig, target);

        TrainLogRow row;
        row.iter = iter_;
        const PipelineOut out = step_generator(psig, msig, target, row);
        step_discriminator(out.image, target, row);
        ++iter_;

        if (!std::isfinite(row.l1) || !std::isfinite(row.vgg) || !std::isfinite(row.g_gan) || !std::isfinite(row.d_gan))
            abort_with_snapshot(row);
        log_.push_back(row);
        l1_window_.push_back(row.l1);
        if (int(l1_window_.size()) > cfg_.smooth_window) l1_window_.pop_front();
        return row;
    }

    // Runs the configured number of iterations, writing config.json, log.csv
    // and ckpt/step_%08d under run_dir (empty run_dir = no files).
    void run(const std::string& run_dir) {
        namespace fs = std::filesystem;
        run_dir_ = run_dir;
        std::ofstream log_file;
        if (!run_dir.empty()) {
            fs::create_directories(fs::path(run_dir) / "ckpt");
            std::ofstream cfg_file((fs::path(run_dir) / "config.json").string());
            cfg_file << cfg_.to_json().dump(2) << "\n";
            log_file.open((fs::path(run_dir) / "log.csv").string());
            log_file << "iter,l1,vgg,g_gan,d_gan\n";
        }
        save_checkpoint();  // step 0 = initialization
        for (int it = 0; it < cfg_.iterations; ++it) {
            const TrainLogRow row = train_iteration();
            if (log_file.is_open()) {
                log_file << row.iter << "," << row.l1 << "," << row.vgg << "," << row.g_gan << "," << row.d_gan
                         << "\n";
                if (row.iter % 50 == 0) log_file.flush();
            }
            if (cfg_.checkpoint_interval > 0 && iter_ % cfg_.checkpoint_interval == 0) save_checkpoint();
            if (cfg_.early_stop_l1 > 0.0f && int(l1_window_.size()) >= cfg_.smooth_window &&
                smoothed_l1() < double(cfg_.early_stop_l1))
                break;
        }
        if (cfg_.ema_decay > 0.0f) apply_ema();
        save_checkpoint();
    }

    int iterations_done() const { return iter_; }

    void save_checkpoint() {
        if (run_dir_.empty()) return;
        char name[32];
        std::snprintf(name, sizeof(name), "step_%08d", iter_);
        bundle_.save((std::filesystem::path(run_dir_) / "ckpt" / name).string(), uint64_t(iter_));
    }

    // exposed separately so parameter-isolation can be asserted from tests
    PipelineOut step_generator(const Tensor& psig, const Tensor& msig, const Tensor& target, TrainLogRow& row) {
        nn::zero_grads(bundle_.params_g());
        const PipelineOut out = forward_pipeline(bundle_, psig, msig, nn::NoiseMode::train, &noise_rng_);
        Tensor dimg(out.image.shape());
        row.l1 = l1_loss(out.image, target);
        l1_loss_backward(out.image, target, cfg_.loss_weights.l1, dimg);
        row.vgg = perceptual_loss_and_grad(vgg_, out.image, target, cfg_.loss_weights.vgg, dimg);
        const Tensor logit_f = b_disc().forward(out.image);
        if (!logit_f.all_finite()) throw NumericError("step_generator: non-finite logits");
        row.g_gan = 0.0;
        for (int64_t i = 0; i < logit_f.numel(); ++i) row.g_gan += softplus(-double(logit_f[i]));
        row.g_gan /= double(logit_f.numel());
        const Tensor dlogit = gan_generator_grad(logit_f, cfg_.loss_weights.gan);
        const Tensor dimg_gan = b_disc().backward(dlogit);  // D grads polluted; D step re-zeros
        for (int64_t i = 0; i < dimg.numel(); ++i) dimg[i] += dimg_gan[i];
        backward_pipeline(bundle_, dimg);
        g_opt_.step(bundle_.params_g());
        if (cfg_.ema_decay > 0.0f) update_ema();
        return out;
    }

    void step_discriminator(const Tensor& fake, const Tensor& target, TrainLogRow& row) {
        nn::zero_grads(bundle_.params_d());
        const Tensor logit_r = b_disc().forward(target);
        const Tensor logit_f = b_disc().forward(fake);
        row.d_gan = gan_losses(logit_r, logit_f).discriminator;
        const auto [gr, gf] = gan_discriminator_grads(logit_r, logit_f);
        b_disc().backward(gf);  // caches currently hold the fake pass
        b_disc().forward(target);
        b_disc().backward(gr);
        if (cfg_.r1_gamma > 0.0f && (iter_ % cfg_.r1_interval) == 0) accumulate_r1(target);
        d_opt_.step(bundle_.params_d());
    }

    // R1 = (gamma_eff/2) * mean_b |grad_x D(x_b)|^2. The penalty value comes
    // from an exact input-gradient pass; its parameter gradient uses the
    // finite-difference Hessian-vector trick on x +- eps*v with v held fixed.
    double accumulate_r1(const Tensor& real) {
        const int n = real.dim(0);
        const float gamma_eff = cfg_.r1_gamma * float(cfg_.r1_interval);

        b_disc().forward(real);
        Tensor ones({n, 1});
        ones.fill(1.0f);
        std::vector<Tensor> saved;  // protect the already-accumulated grads
        for (nn::Param* p : bundle_.params_d()) saved.push_back(p->grad);
        const Tensor v = b_disc().backward(ones);
        {
            size_t k = 0;
            for (nn::Param* p : bundle_.params_d()) p->grad = saved[k++];
        }

        const int64_t per = v.numel() / n;
        double penalty = 0.0;
        std::vector<float> eps(size_t(n));
        for (int b = 0; b < n; ++b) {
            double ss = 0.0;
            for (int64_t i = 0; i < per; ++i) {
                const double g = v[int64_t(b) * per + i];
                ss += g * g;
            }
            penalty += ss;
            eps[size_t(b)] = float(1e-2 * std::sqrt(double(per)) / (std::sqrt(ss) + 1e-12));
        }
        penalty = 0.5 * double(gamma_eff) * penalty / double(n);

        Tensor shifted(real.shape());
        Tensor dlogit({n, 1});
        for (float sign : {1.0f, -1.0f}) {
            for (int b = 0; b < n; ++b)
                for (int64_t i = 0; i < per; ++i)
                    shifted[int64_t(b) * per + i] = real[int64_t(b) * per + i] + sign * eps[size_t(b)] * v[int64_t(b) * per + i];
            b_disc().forward(shifted);
            for (int b = 0; b < n; ++b) dlogit[b] = sign * gamma_eff / (4.0f * float(n) * eps[size_t(b)]);
            b_disc().backward(dlogit);
        }
        return penalty;
    }

    void assemble_batch(const std::vector<size_t>& idx, Tensor& psig, Tensor& msig, Tensor& target) const {
        const int n = int(idx.size());
        const int hw = cfg_.arch.image_size;
        psig = Tensor({n, 6, hw, hw});
        target = Tensor({n, 3, hw, hw});
        const bool motion = cfg_.arch.motion_enabled();
        if (motion) msig = Tensor({n, cfg_.arch.motion_channels(), hw, hw});
        for (int b = 0; b < n; ++b) {
            const Tensor& p = cache_.pose(idx[size_t(b)]).data;
            std::copy(p.data(), p.data() + p.numel(), psig.data() + int64_t(b) * p.numel());
            const Tensor& img = data_.frames[idx[size_t(b)]].image;
            std::copy(img.data(), img.data() + img.numel(), target.data() + int64_t(b) * img.numel());
            if (motion) {
                const MotionSignature m = cache_.motion(idx[size_t(b)], cfg_.arch.motion_offsets);
                std::copy(m.data.data(), m.data.data() + m.data.numel(), msig.data() + int64_t(b) * m.data.numel());
            }
        }
    }

private:
    ModelBundle& bundle_;
    const SequenceDataset& data_;
    TrainConfig cfg_;
    RasterStyle style_;
    SignatureCache cache_;
    nn::Adam g_opt_, d_opt_;
    Rng sample_rng_, noise_rng_;
    PerceptualExtractor vgg_;
    std::vector<size_t> train_indices_;
    std::vector<TrainLogRow> log_;
    std::deque<double> l1_window_;
    std::vector<Tensor> ema_;
    int iter_ = 0;
    std::string run_dir_;

    Discriminator& b_disc() { return bundle_.disc; }

    void update_ema() {
        const auto refs = bundle_.params_g();
        for (size_t i = 0; i < refs.size(); ++i)
            for (int64_t j = 0; j < ema_[i].numel(); ++j)
                ema_[i][j] = cfg_.ema_decay * ema_[i][j] + (1.0f - cfg_.ema_decay) * refs[i]->value[j];
    }
    void apply_ema() {
        const auto refs = bundle_.params_g();
        for (size_t i = 0; i < refs.size(); ++i) refs[i]->value = ema_[i];
    }

    void abort_with_snapshot(const TrainLogRow& row) {
        if (!run_dir_.empty()) {
            bundle_.save((std::filesystem::path(run_dir_) / "ckpt" / "diagnostic").string(), uint64_t(iter_));
            std::ofstream diag((std::filesystem::path(run_dir_) / "diagnostic.json").string());
            diag << nlohmann::json({{"iter", row.iter}, {"l1", row.l1}, {"vgg", row.vgg},
                                    {"g_gan", row.g_gan}, {"d_gan", row.d_gan}})
                        .dump(2)
                 << "\n";
        }
        throw NumericError("training aborted: non-finite loss at iteration " + std::to_string(iter_));
    }
};

// ---------------------------------------------------------------------------
// Sequence synthesis with forward / frozen / backward motion signatures.
// ---------------------------------------------------------------------------

enum class MotionMode { forward, frozen, backward };

inline MotionSignature motion_signature_for(const std::vector<PoseSignature>& poses, size_t i, MotionMode mode,
                                            const std::vector<int>& offsets) {
    if (mode == MotionMode::frozen) return frozen_motion_signature(poses.at(i), int(offsets.size()));
    MotionSignature m;
    m.data = Tensor({int(6 * offsets.size()), poses[i].data.dim(1), poses[i].data.dim(2)});
    for (size_t k = 0; k < offsets.size(); ++k) {
        const int64_t want = mode == MotionMode::forward ? int64_t(i) - offsets[k] : int64_t(i) + offsets[k];
        const size_t src = size_t(std::clamp(want, int64_t(0), int64_t(poses.size()) - 1));
        const Tensor& p = poses[src].data;
        std::copy(p.data(), p.data() + p.numel(), m.data.data() + int64_t(k) * p.numel());
    }
    return m;
}

// One image per requested frame index; noise_mode zero is fully deterministic,
// seeded derives a fixed stream per frame index.
inline std::vector<Tensor> synthesize_sequence(ModelBundle& bundle, const std::vector<PoseSignature>& poses,
                                               const std::vector<size_t>& frames, MotionMode mode,
                                               nn::NoiseMode noise_mode = nn::NoiseMode::zero,
                                               uint64_t noise_seed = 0) {
    const auto& cfg = bundle.config();
    std::vector<Tensor> out;
    out.reserve(frames.size());
    Rng master(noise_seed);
    for (size_t i : frames) {
        const PoseSignature& p = poses.at(i);
        Tensor psig = p.data.reshaped({1, p.data.dim(0), p.data.dim(1), p.data.dim(2)});
        Tensor msig;
        if (cfg.motion_enabled()) {
            const MotionSignature m = motion_signature_for(poses, i, mode, cfg.motion_offsets);
            msig = m.data.reshaped({1, m.data.dim(0), m.data.dim(1), m.data.dim(2)});
        }
        Rng frame_rng = master.child(i);
        const PipelineOut po = forward_pipeline(bundle, psig, msig, noise_mode, &frame_rng);
        out.push_back(po.image.reshaped({3, cfg.image_size, cfg.image_size}));
    }
    return out;
}

inline std::vector<PoseSignature> pose_signatures_of(const SequenceDataset& seq, const RasterStyle& style) {
    std::vector<PoseSignature> out;
    out.reserve(seq.size());
    for (size_t i = 0; i < seq.size(); ++i) out.push_back(pose_signature_of(seq, i, style));
    return out;
}

}  // namespace dynamo
