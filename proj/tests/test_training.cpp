#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dynamo/synth.hpp"
#include "dynamo/train.hpp"

using namespace dynamo;

namespace {

TrainConfig tiny_train_cfg() {
    TrainConfig cfg;
    cfg.arch.image_size = 32;
    cfg.arch.base_width = 8;
    cfg.arch.max_width = 64;
    cfg.arch.init_seed = 5;
    cfg.batch_size = 2;
    cfg.iterations = 3;
    cfg.checkpoint_interval = 0;
    cfg.vgg_base_width = 4;
    cfg.smooth_window = 4;
    return cfg;
}

SequenceDataset tiny_dataset(int frames = 48) {
    const auto spec = FigureSpec::default_figure();
    const auto script = MotionScript::generate(spec, frames, 24, 33);
    return split_dataset(render_sequence(spec, script, 32, 32).dataset);
}

}  // namespace

TEST_CASE("train: zero iterations leaves the bundle unchanged") {
    const auto data = tiny_dataset();
    TrainConfig cfg = tiny_train_cfg();
    cfg.iterations = 0;
    ModelBundle b(cfg.arch);
    const uint64_t hg = b.hash_params_g(), hd = b.hash_params_d();
    Trainer t(b, data, cfg);
    const std::string dir = "/tmp/dynamo_run_zero";
    std::filesystem::remove_all(dir);
    t.run(dir);
    REQUIRE(b.hash_params_g() == hg);
    REQUIRE(b.hash_params_d() == hd);
    // the written checkpoint equals a fresh initialization
    ModelBundle fresh(cfg.arch);
    auto loaded = ModelBundle::load(dir + "/ckpt/step_00000000");
    auto pa = fresh.params_all();
    auto pb = loaded->params_all();
    for (size_t i = 0; i < pa.size(); ++i) REQUIRE(bit_equal(pa[i]->value, pb[i]->value));
}

TEST_CASE("train: identical seeds give identical loss curves") {
    const auto data = tiny_dataset();
    const TrainConfig cfg = tiny_train_cfg();
    ModelBundle b1(cfg.arch), b2(cfg.arch);
    Trainer t1(b1, data, cfg), t2(b2, data, cfg);
    for (int i = 0; i < 3; ++i) {
        const TrainLogRow r1 = t1.train_iteration();
        const TrainLogRow r2 = t2.train_iteration();
        REQUIRE(r1.l1 == r2.l1);
        REQUIRE(r1.vgg == r2.vgg);
        REQUIRE(r1.g_gan == r2.g_gan);
        REQUIRE(r1.d_gan == r2.d_gan);
    }
    REQUIRE(b1.hash_params_g() == b2.hash_params_g());
    REQUIRE(b1.hash_params_d() == b2.hash_params_d());
}

TEST_CASE("train: generator steps never touch D and discriminator steps never touch G") {
    const auto data = tiny_dataset();
    const TrainConfig cfg = tiny_train_cfg();
    ModelBundle b(cfg.arch);
    Trainer t(b, data, cfg);
    Tensor psig, msig, target;
    t.assemble_batch({0, 5}, psig, msig, target);

    const uint64_t d_before = b.hash_params_d();
    TrainLogRow row;
    const PipelineOut out = t.step_generator(psig, msig, target, row);
    REQUIRE(b.hash_params_d() == d_before);

    const uint64_t g_before = b.hash_params_g();
    t.step_discriminator(out.image, target, row);
    REQUIRE(b.hash_params_g() == g_before);
}

TEST_CASE("checkpoint round-trip reproduces deterministic synthesis bit-exactly") {
    const auto data = tiny_dataset();
    TrainConfig cfg = tiny_train_cfg();
    cfg.iterations = 2;
    ModelBundle b(cfg.arch);
    Trainer t(b, data, cfg);
    const std::string dir = "/tmp/dynamo_run_ckpt";
    std::filesystem::remove_all(dir);
    t.run(dir);

    const auto poses = pose_signatures_of(data, RasterStyle::default_style());
    const std::vector<size_t> frames = {30, 31};
    const auto imgs = synthesize_sequence(b, poses, frames, MotionMode::forward);

    char name[32];
    std::snprintf(name, sizeof(name), "step_%08d", t.iterations_done());
    auto loaded = ModelBundle::load(dir + "/ckpt/" + name);
    const auto imgs2 = synthesize_sequence(*loaded, poses, frames, MotionMode::forward);
    REQUIRE(imgs.size() == imgs2.size());
    for (size_t i = 0; i < imgs.size(); ++i) REQUIRE(bit_equal(imgs[i], imgs2[i]));
}

TEST_CASE("synthesize_sequence: constant poses make forward equal frozen; M poses in, M images out") {
    const auto spec = FigureSpec::default_figure();
    const auto script = MotionScript::stationary(spec, 30, 24);
    const auto data = render_sequence(spec, script, 32, 32).dataset;
    ArchConfig cfg = tiny_train_cfg().arch;
    ModelBundle b(cfg);
    const auto poses = pose_signatures_of(data, RasterStyle::default_style());
    const std::vector<size_t> frames = {25, 26, 27};
    const auto fwd = synthesize_sequence(b, poses, frames, MotionMode::forward);
    const auto frz = synthesize_sequence(b, poses, frames, MotionMode::frozen);
    const auto bwd = synthesize_sequence(b, poses, frames, MotionMode::backward);
    REQUIRE(fwd.size() == 3);
    REQUIRE(frz.size() == 3);
    for (size_t i = 0; i < fwd.size(); ++i) {
        REQUIRE(bit_equal(fwd[i], frz[i]));
        REQUIRE(bit_equal(fwd[i], bwd[i]));
    }
}

TEST_CASE("one small generator step decreases the deterministic objective") {
    const auto data = tiny_dataset();
    TrainConfig cfg = tiny_train_cfg();
    ModelBundle b(cfg.arch);
    Trainer t(b, data, cfg);
    Tensor psig, msig, target;
    t.assemble_batch({2, 9}, psig, msig, target);
    PerceptualExtractor vgg = PerceptualExtractor::seeded(cfg.vgg_seed, cfg.vgg_base_width);

    auto objective = [&]() {
        const PipelineOut out = forward_pipeline(b, psig, msig, nn::NoiseMode::zero, nullptr);
        const Tensor logit = b.disc.forward(out.image);
        double gan = 0.0;
        for (int64_t i = 0; i < logit.numel(); ++i) gan += softplus(-double(logit[i]));
        return l1_loss(out.image, target) + perceptual_loss(vgg, out.image, target) + gan / double(logit.numel());
    };
    const double before = objective();
    nn::zero_grads(b.params_all());
    const PipelineOut out = forward_pipeline(b, psig, msig, nn::NoiseMode::zero, nullptr);
    Tensor dimg(out.image.shape());
    l1_loss_backward(out.image, target, 1.0f, dimg);
    perceptual_loss_and_grad(vgg, out.image, target, 1.0f, dimg);
    const Tensor logit = b.disc.forward(out.image);
    const Tensor dimg_gan = b.disc.backward(gan_generator_grad(logit));
    for (int64_t i = 0; i < dimg.numel(); ++i) dimg[i] += dimg_gan[i];
    backward_pipeline(b, dimg);
    nn::Adam opt(1e-4f, 0.0f, 0.99f);
    opt.step(b.params_g());
    REQUIRE(objective() < before);
}

TEST_CASE("r1 penalty parameter gradients agree with finite differences of the penalty") {
    TrainConfig cfg = tiny_train_cfg();
    cfg.r1_gamma = 2.0f;
    cfg.r1_interval = 1;
    const auto data = tiny_dataset();
    ModelBundle b(cfg.arch);
    Trainer t(b, data, cfg);
    Rng rng(3);
    Tensor real({2, 3, 32, 32});
    rng.fill_uniform(real, -0.9f, 0.9f);

    // exact penalty via the input-gradient pass (gamma_eff = gamma, N = 2)
    auto penalty = [&]() -> double {
        b.disc.forward(real);
        Tensor ones({2, 1});
        ones.fill(1.0f);
        nn::zero_grads(b.params_d());
        const Tensor v = b.disc.backward(ones);
        double s = 0.0;
        for (int64_t i = 0; i < v.numel(); ++i) s += double(v[i]) * double(v[i]);
        return 0.5 * double(cfg.r1_gamma) * s / 2.0;
    };

    nn::zero_grads(b.params_d());
    const double p0 = t.accumulate_r1(real);
    REQUIRE(p0 == Catch::Approx(penalty()).epsilon(1e-6));

    // directional agreement over all D params
    nn::zero_grads(b.params_d());
    t.accumulate_r1(real);
    nn::ParamRefs refs = b.params_d();
    std::vector<Tensor> grads;
    double norm2 = 0.0;
    for (auto* p : refs) {
        grads.push_back(p->grad);
        for (int64_t i = 0; i < p->grad.numel(); ++i) norm2 += double(p->grad[i]) * double(p->grad[i]);
    }
    const double norm = std::sqrt(norm2);
    REQUIRE(norm > 0.0);
    const float h = 1e-3f;
    std::vector<Tensor> saved;
    for (auto* p : refs) saved.push_back(p->value);
    auto apply = [&](float sign) {
        for (size_t pi = 0; pi < refs.size(); ++pi)
            for (int64_t i = 0; i < refs[pi]->value.numel(); ++i)
                refs[pi]->value[i] = saved[pi][i] + sign * h * float(double(grads[pi][i]) / norm);
    };
    apply(1.0f);
    const double pp = penalty();
    apply(-1.0f);
    const double pm = penalty();
    for (size_t pi = 0; pi < refs.size(); ++pi) refs[pi]->value = saved[pi];
    const double fd = (pp - pm) / (2.0 * double(h));
    INFO("|g| " << norm << " fd " << fd);
    REQUIRE(std::abs(fd - norm) / std::max(std::abs(fd), norm) < 5e-2);
}

TEST_CASE("non-finite loss aborts with a numeric error") {
    const auto data = tiny_dataset();
    const TrainConfig cfg = tiny_train_cfg();
    ModelBundle b(cfg.arch);
    Trainer t(b, data, cfg);
    b.gen.to_rgb_.weight.value[0] = std::numeric_limits<float>::quiet_NaN();
    REQUIRE_THROWS_AS(t.train_iteration(), NumericError);
}

TEST_CASE("train config json round-trip and presets") {
    TrainConfig c = TrainConfig::preset("desk");
    c.arch.image_size = 48;
    c.iterations = 123;
    c.boundary_drop = true;
    const TrainConfig back = TrainConfig::from_json(c.to_json());
    REQUIRE(back.arch.image_size == 48);
    REQUIRE(back.iterations == 123);
    REQUIRE(back.boundary_drop);
    REQUIRE(back.arch.motion_offsets == default_motion_offsets());

    const TrainConfig paper = TrainConfig::preset("paper");
    REQUIRE(paper.learning_rate == Catch::Approx(0.02));
    REQUIRE(paper.batch_size == 16);
    REQUIRE(paper.arch.image_size == 512);
    REQUIRE_THROWS_AS(TrainConfig::preset("nope"), ConfigError);
}
