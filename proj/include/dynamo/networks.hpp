#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynamo/nn.hpp"
#include "dynamo/serialize.hpp"
#include "dynamo/signature.hpp"

namespace dynamo {

// Interface widths fixed by the architecture contract: the pose feature is
// always 512 x W/16 x H/16 and the motion feature a 2048-vector, independent
// of the desk-scale channel multiplier.
constexpr int kPoseFeatureChannels = 512;
constexpr int kMotionFeatureDim = 2048;

struct ArchConfig {
    int image_size = 64;
    int base_width = 32;
    int max_width = 512;
    std::vector<int> motion_offsets = default_motion_offsets();
    bool refine_enabled = true;
    uint64_t init_seed = 1234;

    bool motion_enabled() const { return !motion_offsets.empty(); }
    int window() const { return int(motion_offsets.size()); }
    int motion_channels() const { return 6 * window(); }
    int feat_size() const { return image_size / 16; }

    // channel schedule per spatial resolution
    int channels(int res) const {
        const int c = base_width * image_size / (2 * res);
        return std::clamp(c, 8, max_width);
    }

    void validate() const {
        if (image_size < 32 || image_size % 16 != 0)
            throw ConfigError("ArchConfig: image size must be >= 32 and divisible by 16");
        for (size_t i = 0; i < motion_offsets.size(); ++i) {
            if (motion_offsets[i] <= 0) throw ConfigError("ArchConfig: motion offsets must be positive");
            if (i > 0 && motion_offsets[i] <= motion_offsets[i - 1])
                throw ConfigError("ArchConfig: motion offsets must be strictly increasing");
        }
        if (refine_enabled && !motion_enabled())
            throw ConfigError("ArchConfig: refinement needs a motion window");
    }

    nlohmann::json to_json() const {
        return {{"image_size", image_size}, {"base_width", base_width},   {"max_width", max_width},
                {"motion_offsets", motion_offsets}, {"refine_enabled", refine_enabled}, {"init_seed", init_seed}};
    }
    static ArchConfig from_json(const nlohmann::json& j) {
        ArchConfig c;
        c.image_size = j.at("image_size").get<int>();
        c.base_width = j.at("base_width").get<int>();
        c.max_width = j.at("max_width").get<int>();
        c.motion_offsets = j.at("motion_offsets").get<std::vector<int>>();
        c.refine_enabled = j.at("refine_enabled").get<bool>();
        c.init_seed = j.at("init_seed").get<uint64_t>();
        return c;
    }
};

// ---------------------------------------------------------------------------
// E_P: four stride-2 stages, 6 -> 512 channels, 16x spatial reduction.
// ---------------------------------------------------------------------------

class PoseEncoder {
public:
    PoseEncoder() = default;
    PoseEncoder(Rng rng, const ArchConfig& cfg) {
        const int w = cfg.image_size;
        const std::array<int, 4> widths = {cfg.channels(w / 2), cfg.channels(w / 4), cfg.channels(w / 8),
                                           kPoseFeatureChannels};
        int cin = 6;
        for (int i = 0; i < 4; ++i) {
            stages_[size_t(i)] = nn::Conv2d(rng, cin, widths[size_t(i)], 3, 2);
            cin = widths[size_t(i)];
        }
    }

    Tensor forward(const Tensor& psig) {
        Tensor h = psig;
        for (int i = 0; i < 4; ++i) {
            h = stages_[size_t(i)].forward(h);
            h = nn::leaky_relu(h);
            acts_[size_t(i)] = h;
        }
        return h;
    }

    Tensor backward(const Tensor& dfeat) {
        Tensor d = dfeat;
        for (int i = 3; i >= 0; --i) {
            d = nn::leaky_relu_backward(d, acts_[size_t(i)]);
            d = stages_[size_t(i)].backward(d);
        }
        return d;
    }

    nn::ParamRefs params() {
        nn::ParamRefs r;
        for (auto& s : stages_)
            for (auto* p : s.params()) r.push_back(p);
        return r;
    }

    std::array<nn::Conv2d, 4> stages_;

private:
    std::array<Tensor, 4> acts_;
};

// ---------------------------------------------------------------------------
// E_M: fixed conv stack 6K -> 64 -> 128 -> 256 -> 512 (stride 2 each), then
// adaptive 4x4 pooling, flatten, and two fully connected layers to 2048.
// ---------------------------------------------------------------------------

class MotionEncoder {
public:
    MotionEncoder() = default;
    MotionEncoder(Rng rng, const ArchConfig& cfg) {
        const std::array<int, 4> widths = {64, 128, 256, 512};
        int cin = cfg.motion_channels();
        for (int i = 0; i < 4; ++i) {
            stages_[size_t(i)] = nn::Conv2d(rng, cin, widths[size_t(i)], 3, 2);
            cin = widths[size_t(i)];
        }
        fc1_ = nn::Linear(rng, 512 * 16, kMotionFeatureDim);
        fc2_ = nn::Linear(rng, kMotionFeatureDim, kMotionFeatureDim);
    }

    Tensor forward(const Tensor& msig) {
        ++eval_count;
        Tensor h = msig;
        for (int i = 0; i < 4; ++i) {
            h = stages_[size_t(i)].forward(h);
            h = nn::leaky_relu(h);
            acts_[size_t(i)] = h;
        }
        pool_in_h_ = h.dim(2);
        pool_in_w_ = h.dim(3);
        h = nn::adaptive_avg_pool(h, 4, 4);
        const int n = h.dim(0);
        Tensor flat = h.reshaped({n, 512 * 16});
        Tensor f1 = fc1_.forward(flat);
        f1_act_ = nn::leaky_relu(f1);
        return fc2_.forward(f1_act_);
    }

    Tensor backward(const Tensor& dm) {
        Tensor d = fc2_.backward(dm);
        d = nn::leaky_relu_backward(d, f1_act_);
        d = fc1_.backward(d);
        const int n = d.dim(0);
        d = d.reshaped({n, 512, 4, 4});
        d = nn::adaptive_avg_pool_backward(d, pool_in_h_, pool_in_w_);
        for (int i = 3; i >= 0; --i) {
            d = nn::leaky_relu_backward(d, acts_[size_t(i)]);
            d = stages_[size_t(i)].backward(d);
        }
        return d;
    }

    nn::ParamRefs params() {
        nn::ParamRefs r;
        for (auto& s : stages_)
            for (auto* p : s.params()) r.push_back(p);
        for (auto* p : fc1_.params()) r.push_back(p);
        for (auto* p : fc2_.params()) r.push_back(p);
        return r;
    }

    mutable int64_t eval_count = 0;

    std::array<nn::Conv2d, 4> stages_;
    nn::Linear fc1_, fc2_;

private:
    std::array<Tensor, 4> acts_;
    Tensor f1_act_;
    int pool_in_h_ = 0, pool_in_w_ = 0;
};

// ---------------------------------------------------------------------------
// E_Refine: broadcast the motion feature to each spatial location, concat to
// 2560 channels, and regress a residual correction back to 512 channels.
// The last conv starts at zero so refinement begins as the identity.
// ---------------------------------------------------------------------------

class RefineNet {
public:
    RefineNet() = default;
    RefineNet(Rng rng, const ArchConfig&) {
        reduce_ = nn::Conv2d(rng, kPoseFeatureChannels + kMotionFeatureDim, kPoseFeatureChannels, 1, 1, 0);
        c1_ = nn::Conv2d(rng, kPoseFeatureChannels, kPoseFeatureChannels, 3, 1);
        c2_ = nn::Conv2d(rng, kPoseFeatureChannels, kPoseFeatureChannels, 3, 1);
        c2_.zero_weights();
    }

    Tensor forward(const Tensor& pose_feat, const Tensor& motion_feat) {
        concat_ = nn::concat_broadcast(pose_feat, motion_feat);
        Tensor h = nn::leaky_relu(reduce_.forward(concat_));
        a1_ = h;
        h = nn::leaky_relu(c1_.forward(h));
        a2_ = h;
        Tensor corr = c2_.forward(h);
        Tensor y = pose_feat;
        for (int64_t i = 0; i < y.numel(); ++i) y[i] += corr[i];
        return y;
    }

    // returns d(pose_feat); accumulates d(motion_feat) into dmotion
    Tensor backward(const Tensor& dy, Tensor& dmotion) {
        Tensor d = c2_.backward(dy);
        d = nn::leaky_relu_backward(d, a2_);
        d = c1_.backward(d);
        d = nn::leaky_relu_backward(d, a1_);
        d = reduce_.backward(d);
        Tensor dpose;
        nn::concat_broadcast_backward(d, kPoseFeatureChannels, dpose, dmotion);
        for (int64_t i = 0; i < dpose.numel(); ++i) dpose[i] += dy[i];  // residual path
        return dpose;
    }

    int concat_channels() const { return concat_.empty() ? 0 : concat_.dim(1); }

    nn::ParamRefs params() {
        nn::ParamRefs r;
        for (auto* p : reduce_.params()) r.push_back(p);
        for (auto* p : c1_.params()) r.push_back(p);
        for (auto* p : c2_.params()) r.push_back(p);
        return r;
    }

    nn::Conv2d reduce_, c1_, c2_;

private:
    Tensor concat_, a1_, a2_;
};

// ---------------------------------------------------------------------------
// Generator blocks
// ---------------------------------------------------------------------------

namespace detail_nets {

constexpr float kInvSqrt2 = 0.70710678f;

struct ModLayer {  // modulated conv + noise + bias + lrelu
    nn::ModulatedConv2d conv;
    nn::NoiseInject noise;
    nn::ChannelBias bias;
    Tensor act;

    ModLayer() = default;
    ModLayer(Rng& rng, int cin, int cout, int k, int& uid)
        : conv(rng, cin, cout, k, kMotionFeatureDim), noise(uid++), bias(cout) {}

    Tensor forward(const Tensor& x, const Tensor& style, nn::NoiseMode mode, Rng* rng) {
        Tensor h = conv.forward(x, style);
        h = noise.forward(h, mode, rng);
        bias.forward_inplace(h);
        act = nn::leaky_relu(h);
        return act;
    }
    Tensor backward(const Tensor& dy, Tensor& dstyle) {
        Tensor d = nn::leaky_relu_backward(dy, act);
        bias.backward(d);
        d = noise.backward(d);
        return conv.backward(d, dstyle);
    }
    nn::ParamRefs params() {
        nn::ParamRefs r = conv.params();
        r.push_back(&noise.strength);
        r.push_back(&bias.b);
        return r;
    }
};

struct GenResBlock {
    ModLayer l1, l2;

    GenResBlock() = default;
    GenResBlock(Rng& rng, int ch, int& uid) : l1(rng, ch, ch, 3, uid), l2(rng, ch, ch, 3, uid) {}

    Tensor forward(const Tensor& x, const Tensor& style, nn::NoiseMode mode, Rng* rng) {
        Tensor h = l1.forward(x, style, mode, rng);
        h = l2.forward(h, style, mode, rng);
        for (int64_t i = 0; i < h.numel(); ++i) h[i] = (h[i] + x[i]) * kInvSqrt2;
        return h;
    }
    Tensor backward(const Tensor& dy, Tensor& dstyle) {
        Tensor dh = dy;
        for (int64_t i = 0; i < dh.numel(); ++i) dh[i] *= kInvSqrt2;
        Tensor dx = l1.backward(l2.backward(dh, dstyle), dstyle);
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += dh[i];
        return dx;
    }
    nn::ParamRefs params() {
        nn::ParamRefs r = l1.params();
        for (auto* p : l2.params()) r.push_back(p);
        return r;
    }
};

struct GenUpBlock {
    ModLayer l1, l2;
    nn::Conv2d skip;  // 1x1, no bias

    GenUpBlock() = default;
    GenUpBlock(Rng& rng, int cin, int cout, int& uid)
        : l1(rng, cin, cout, 3, uid), l2(rng, cout, cout, 3, uid), skip(rng, cin, cout, 1, 1, 0, false) {}

    Tensor forward(const Tensor& x, const Tensor& style, nn::NoiseMode mode, Rng* rng) {
        up_ = nn::upsample2x(x);
        Tensor h = l1.forward(up_, style, mode, rng);
        h = l2.forward(h, style, mode, rng);
        Tensor s = skip.forward(up_);
        for (int64_t i = 0; i < h.numel(); ++i) h[i] = (h[i] + s[i]) * kInvSqrt2;
        return h;
    }
    Tensor backward(const Tensor& dy, Tensor& dstyle) {
        Tensor dh = dy;
        for (int64_t i = 0; i < dh.numel(); ++i) dh[i] *= kInvSqrt2;
        Tensor dup = l1.backward(l2.backward(dh, dstyle), dstyle);
        Tensor dskip = skip.backward(dh);
        for (int64_t i = 0; i < dup.numel(); ++i) dup[i] += dskip[i];
        return nn::upsample2x_backward(dup);
    }
    nn::ParamRefs params() {
        nn::ParamRefs r = l1.params();
        for (auto* p : l2.params()) r.push_back(p);
        for (auto* p : skip.params()) r.push_back(p);
        return r;
    }

private:
    Tensor up_;
};

}  // namespace detail_nets

// ---------------------------------------------------------------------------
// T: entry conv at W/16, four residual blocks, four upsampling residual
// blocks, toRGB + tanh. Every conv is modulated by an affine projection of
// the motion feature; noise is injected at every layer.
// ---------------------------------------------------------------------------

class Generator {
public:
    Generator() = default;
    Generator(Rng rng, const ArchConfig& cfg) {
        int uid = 0;
        const int ws = cfg.feat_size();
        entry_ = detail_nets::ModLayer(rng, kPoseFeatureChannels, cfg.channels(ws), 3, uid);
        for (int i = 0; i < 4; ++i) res_[size_t(i)] = detail_nets::GenResBlock(rng, cfg.channels(ws), uid);
        int r = ws;
        int cin = cfg.channels(ws);
        for (int i = 0; i < 4; ++i) {
            r *= 2;
            up_[size_t(i)] = detail_nets::GenUpBlock(rng, cin, cfg.channels(r), uid);
            cin = cfg.channels(r);
        }
        to_rgb_ = nn::ModulatedConv2d(rng, cin, 3, 1, kMotionFeatureDim, /*demodulate=*/false);
        rgb_bias_ = nn::ChannelBias(3);
    }

    Tensor forward(const Tensor& pose_feat, const Tensor& style, nn::NoiseMode mode, Rng* rng) {
        Tensor h = entry_.forward(pose_feat, style, mode, rng);
        for (auto& blk : res_) h = blk.forward(h, style, mode, rng);
        for (auto& blk : up_) h = blk.forward(h, style, mode, rng);
        Tensor rgb = to_rgb_.forward(h, style);
        rgb_bias_.forward_inplace(rgb);
        out_ = nn::tanh_forward(rgb);
        return out_;
    }

    // returns d(pose_feat); accumulates d(style) into dstyle
    Tensor backward(const Tensor& dimg, Tensor& dstyle) {
        Tensor d = nn::tanh_backward(dimg, out_);
        rgb_bias_.backward(d);
        d = to_rgb_.backward(d, dstyle);
        for (int i = 3; i >= 0; --i) d = up_[size_t(i)].backward(d, dstyle);
        for (int i = 3; i >= 0; --i) d = res_[size_t(i)].backward(d, dstyle);
        return entry_.backward(d, dstyle);
    }

    nn::ParamRefs params() {
        nn::ParamRefs r = entry_.params();
        for (auto& blk : res_)
            for (auto* p : blk.params()) r.push_back(p);
        for (auto& blk : up_)
            for (auto* p : blk.params()) r.push_back(p);
        for (auto* p : to_rgb_.params()) r.push_back(p);
        r.push_back(&rgb_bias_.b);
        return r;
    }

    detail_nets::ModLayer entry_;
    std::array<detail_nets::GenResBlock, 4> res_;
    std::array<detail_nets::GenUpBlock, 4> up_;
    nn::ModulatedConv2d to_rgb_;
    nn::ChannelBias rgb_bias_;

private:
    Tensor out_;
};

// ---------------------------------------------------------------------------
// D: residual downsampling stack to a scalar logit, image-only.
// ---------------------------------------------------------------------------

namespace detail_nets {

struct DBlock {
    nn::Conv2d c1, c2, skip;
    Tensor a1, a2;

    DBlock() = default;
    DBlock(Rng& rng, int cin, int cout)
        : c1(rng, cin, cin, 3, 1), c2(rng, cin, cout, 3, 2), skip(rng, cin, cout, 1, 2, 0, false) {}

    Tensor forward(const Tensor& x) {
        a1 = nn::leaky_relu(c1.forward(x));
        a2 = nn::leaky_relu(c2.forward(a1));
        Tensor s = skip.forward(x);
        Tensor y = a2;
        for (int64_t i = 0; i < y.numel(); ++i) y[i] = (y[i] + s[i]) * kInvSqrt2;
        return y;
    }
    Tensor backward(const Tensor& dy) {
        Tensor dh = dy;
        for (int64_t i = 0; i < dh.numel(); ++i) dh[i] *= kInvSqrt2;
        Tensor d = nn::leaky_relu_backward(dh, a2);
        d = c2.backward(d);
        d = nn::leaky_relu_backward(d, a1);
        Tensor dx = c1.backward(d);
        Tensor ds = skip.backward(dh);
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += ds[i];
        return dx;
    }
    nn::ParamRefs params() {
        nn::ParamRefs r = c1.params();
        for (auto* p : c2.params()) r.push_back(p);
        for (auto* p : skip.params()) r.push_back(p);
        return r;
    }
};

}  // namespace detail_nets

class Discriminator {
public:
    Discriminator() = default;
    Discriminator(Rng rng, const ArchConfig& cfg) {
        const int w = cfg.image_size;
        from_rgb_ = nn::Conv2d(rng, 3, cfg.channels(w), 1, 1, 0);
        int r = w;
        for (int i = 0; i < 4; ++i) {
            blocks_[size_t(i)] = detail_nets::DBlock(rng, cfg.channels(r), cfg.channels(r / 2));
            r /= 2;
        }
        const int cf = cfg.channels(r);
        final_conv_ = nn::Conv2d(rng, cf, cf, 3, 1);
        const int ws = cfg.feat_size();
        const int head = std::max(64, cfg.base_width * 2);
        fc1_ = nn::Linear(rng, cf * ws * ws, head);
        fc2_ = nn::Linear(rng, head, 1);
    }

    Tensor forward(const Tensor& img) {
        a0_ = nn::leaky_relu(from_rgb_.forward(img));
        Tensor h = a0_;
        for (auto& blk : blocks_) h = blk.forward(h);
        af_ = nn::leaky_relu(final_conv_.forward(h));
        const int n = af_.dim(0);
        conv_shape_ = af_.shape();
        Tensor flat = af_.reshaped({n, int(af_.numel() / n)});
        a1_ = nn::leaky_relu(fc1_.forward(flat));
        return fc2_.forward(a1_);  // [N,1] logits
    }

    Tensor backward(const Tensor& dlogit) {
        Tensor d = fc2_.backward(dlogit);
        d = nn::leaky_relu_backward(d, a1_);
        d = fc1_.backward(d);
        d = d.reshaped(conv_shape_);
        d = nn::leaky_relu_backward(d, af_);
        d = final_conv_.backward(d);
        for (int i = 3; i >= 0; --i) d = blocks_[size_t(i)].backward(d);
        d = nn::leaky_relu_backward(d, a0_);
        return from_rgb_.backward(d);
    }

    nn::ParamRefs params() {
        nn::ParamRefs r = from_rgb_.params();
        for (auto& blk : blocks_)
            for (auto* p : blk.params()) r.push_back(p);
        for (auto* p : final_conv_.params()) r.push_back(p);
        for (auto* p : fc1_.params()) r.push_back(p);
        for (auto* p : fc2_.params()) r.push_back(p);
        return r;
    }

    nn::Conv2d from_rgb_, final_conv_;
    std::array<detail_nets::DBlock, 4> blocks_;
    nn::Linear fc1_, fc2_;

private:
    Tensor a0_, af_, a1_;
    std::vector<int> conv_shape_;
};

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

class ModelBundle {
public:
    explicit ModelBundle(ArchConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        nn::set_num_threads(nn::default_threads());
        Rng root(cfg_.init_seed);
        ep = PoseEncoder(root.child(1), cfg_);
        if (cfg_.motion_enabled()) {
            em = MotionEncoder(root.child(2), cfg_);
            if (cfg_.refine_enabled) refine = RefineNet(root.child(3), cfg_);
        } else {
            null_motion.init({kMotionFeatureDim});
            Rng r = root.child(2);
            r.fill_normal(null_motion.value, 0.0f, 0.1f);
        }
        gen = Generator(root.child(4), cfg_);
        disc = Discriminator(root.child(5), cfg_);
        assign_names();
    }

    const ArchConfig& config() const { return cfg_; }

    nn::ParamRefs params_g() {
        nn::ParamRefs r = ep.params();
        if (cfg_.motion_enabled()) {
            for (auto* p : em.params()) r.push_back(p);
            if (cfg_.refine_enabled)
                for (auto* p : refine.params()) r.push_back(p);
        } else {
            r.push_back(&null_motion);
        }
        for (auto* p : gen.params()) r.push_back(p);
        return r;
    }

    nn::ParamRefs params_d() { return disc.params(); }

    nn::ParamRefs params_all() {
        nn::ParamRefs r = params_g();
        for (auto* p : params_d()) r.push_back(p);
        return r;
    }

    // Tile the trainable null-motion embedding for window-0 models.
    Tensor null_motion_batch(int n) const {
        Tensor m({n, kMotionFeatureDim});
        for (int b = 0; b < n; ++b)
            std::copy(null_motion.value.data(), null_motion.value.data() + kMotionFeatureDim,
                      m.data() + int64_t(b) * kMotionFeatureDim);
        return m;
    }

    void save(const std::string& path, uint64_t step) {
        TensorArchive a;
        a.step = step;
        a.config_text = cfg_.to_json().dump(2);
        for (nn::Param* p : params_all()) a.add(p->name, p->value);
        a.save(path);
    }

    static std::unique_ptr<ModelBundle> load(const std::string& path, uint64_t* step_out = nullptr) {
        TensorArchive a = TensorArchive::load(path);
        auto bundle = std::make_unique<ModelBundle>(ArchConfig::from_json(nlohmann::json::parse(a.config_text)));
        for (nn::Param* p : bundle->params_all()) {
            const Tensor* t = a.find(p->name);
            if (!t) throw IoError("checkpoint is missing tensor " + p->name);
            if (t->shape() != p->value.shape())
                throw IoError("checkpoint shape mismatch for " + p->name + ": " + t->shape_str() + " vs " +
                              p->value.shape_str());
            p->value = *t;
        }
        if (step_out) *step_out = a.step;
        return bundle;
    }

    uint64_t hash_params_g() {
        uint64_t h = 14695981039346656037ull;
        for (nn::Param* p : params_g()) h = h * 31 + content_hash(p->value);
        return h;
    }
    uint64_t hash_params_d() {
        uint64_t h = 14695981039346656037ull;
        for (nn::Param* p : params_d()) h = h * 31 + content_hash(p->value);
        return h;
    }

    PoseEncoder ep;
    MotionEncoder em;
    RefineNet refine;
    Generator gen;
    Discriminator disc;
    nn::Param null_motion;  // used when the motion window is empty

private:
    ArchConfig cfg_;

    // checkpoint keys follow {network}/{layer}/{tensor}
    void assign_names() {
        auto conv = [](nn::Conv2d& c, const std::string& layer) {
            c.weight.name = layer + "/weight";
            c.bias_p.name = layer + "/bias";
        };
        auto linear = [](nn::Linear& l, const std::string& layer) {
            l.weight.name = layer + "/weight";
            l.bias_p.name = layer + "/bias";
        };
        auto mod = [](detail_nets::ModLayer& m, const std::string& layer) {
            m.conv.weight.name = layer + "/weight";
            m.conv.affine_w.name = layer + "/affine_weight";
            m.conv.affine_b.name = layer + "/affine_bias";
            m.noise.strength.name = layer + "/noise_strength";
            m.bias.b.name = layer + "/bias";
        };
        for (int i = 0; i < 4; ++i) conv(ep.stages_[size_t(i)], "ep/stage" + std::to_string(i));
        if (cfg_.motion_enabled()) {
            for (int i = 0; i < 4; ++i) conv(em.stages_[size_t(i)], "em/stage" + std::to_string(i));
            linear(em.fc1_, "em/fc1");
            linear(em.fc2_, "em/fc2");
            if (cfg_.refine_enabled) {
                conv(refine.reduce_, "refine/reduce");
                conv(refine.c1_, "refine/conv1");
                conv(refine.c2_, "refine/conv2");
            }
        } else {
            null_motion.name = "em/null_motion/embedding";
        }
        mod(gen.entry_, "gen/entry");
        for (int i = 0; i < 4; ++i) {
            mod(gen.res_[size_t(i)].l1, "gen/res" + std::to_string(i) + "a");
            mod(gen.res_[size_t(i)].l2, "gen/res" + std::to_string(i) + "b");
        }
        for (int i = 0; i < 4; ++i) {
            mod(gen.up_[size_t(i)].l1, "gen/up" + std::to_string(i) + "a");
            mod(gen.up_[size_t(i)].l2, "gen/up" + std::to_string(i) + "b");
            conv(gen.up_[size_t(i)].skip, "gen/up" + std::to_string(i) + "skip");
        }
        gen.to_rgb_.weight.name = "gen/torgb/weight";
        gen.to_rgb_.affine_w.name = "gen/torgb/affine_weight";
        gen.to_rgb_.affine_b.name = "gen/torgb/affine_bias";
        gen.rgb_bias_.b.name = "gen/torgb/bias";
        conv(disc.from_rgb_, "disc/from_rgb");
        for (int i = 0; i < 4; ++i) {
            conv(disc.blocks_[size_t(i)].c1, "disc/block" + std::to_string(i) + "/conv1");
            conv(disc.blocks_[size_t(i)].c2, "disc/block" + std::to_string(i) + "/conv2");
            conv(disc.blocks_[size_t(i)].skip, "disc/block" + std::to_string(i) + "/skip");
        }
        conv(disc.final_conv_, "disc/final");
        linear(disc.fc1_, "disc/fc1");
        linear(disc.fc2_, "disc/fc2");
    }
};

// ---------------------------------------------------------------------------
// Eq.-style pipeline composition: the motion feature is evaluated once per
// frame and reused for both the refinement and the generator demodulation.
// ---------------------------------------------------------------------------

struct PipelineOut {
    Tensor image;        // [N,3,H,W]
    Tensor pose_feat;    // [N,512,ws,ws]
    Tensor refined;      // [N,512,ws,ws]
    Tensor motion_feat;  // [N,2048]
};

inline PipelineOut forward_pipeline(ModelBundle& b, const Tensor& psig, const Tensor& msig,
                                    nn::NoiseMode mode = nn::NoiseMode::zero, Rng* rng = nullptr) {
    const auto& cfg = b.config();
    const int n = psig.dim(0);
    PipelineOut out;
    if (cfg.motion_enabled()) {
        check_shape(msig, {n, cfg.motion_channels(), cfg.image_size, cfg.image_size}, "forward_pipeline motion signature");
        out.motion_feat = b.em.forward(msig);
    } else {
        out.motion_feat = b.null_motion_batch(n);
    }
    check_shape(psig, {n, 6, cfg.image_size, cfg.image_size}, "forward_pipeline pose signature");
    out.pose_feat = b.ep.forward(psig);
    out.refined = cfg.motion_enabled() && cfg.refine_enabled ? b.refine.forward(out.pose_feat, out.motion_feat)
                                                             : out.pose_feat;
    Rng fallback(0);
    out.image = b.gen.forward(out.refined, out.motion_feat, mode, rng ? rng : &fallback);
    if (!out.image.all_finite()) throw NumericError("forward_pipeline: non-finite activations in generated image");
    return out;
}

// Backpropagate d(image); parameter gradients accumulate inside the bundle.
inline void backward_pipeline(ModelBundle& b, const Tensor& dimg) {
    const auto& cfg = b.config();
    const int n = dimg.dim(0);
    Tensor dstyle({n, kMotionFeatureDim});
    Tensor dref = b.gen.backward(dimg, dstyle);
    Tensor dpose;
    if (cfg.motion_enabled() && cfg.refine_enabled)
        dpose = b.refine.backward(dref, dstyle);
    else
        dpose = dref;
    b.ep.backward(dpose);
    if (cfg.motion_enabled()) {
        b.em.backward(dstyle);
    } else {
        for (int bi = 0; bi < n; ++bi)
            for (int i = 0; i < kMotionFeatureDim; ++i)
                b.null_motion.grad[i] += dstyle[int64_t(bi) * kMotionFeatureDim + i];
    }
}

}  // namespace dynamo
