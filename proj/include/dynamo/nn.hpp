#pragma once

#include <cmath>
#include <cstdlib>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dynamo/random.hpp"
#include "dynamo/tensor.hpp"

namespace dynamo::nn {

inline void set_num_threads(int n) { Eigen::setNbThreads(n); }

inline int default_threads() {
    if (const char* env = std::getenv("DYNAMO_THREADS")) return std::max(1, std::atoi(env));
    return 2;
}

// Trainable tensor with its gradient accumulator.
struct Param {
    Tensor value;
    Tensor grad;
    std::string name;

    void init(std::vector<int> shape) {
        value = Tensor(shape);
        grad = Tensor(shape);
    }
    void zero_grad() { grad.zero(); }
};

using ParamRefs = std::vector<Param*>;

inline void zero_grads(const ParamRefs& params) {
    for (Param* p : params) p->zero_grad();
}

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

inline void im2col(const float* x, int c, int h, int w, int k, int stride, int pad, Tensor& col) {
    const int oh = conv_out_dim(h, k, stride, pad), ow = conv_out_dim(w, k, stride, pad);
    col = Tensor({c * k * k, oh * ow});
    float* dst = col.data();
    for (int ci = 0; ci < c; ++ci)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) *dst++ = 0.0f;
                        continue;
                    }
                    const float* row = x + (int64_t(ci) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        *dst++ = (ix < 0 || ix >= w) ? 0.0f : row[ix];
                    }
                }
            }
}

inline void col2im_add(const Tensor& col, int c, int h, int w, int k, int stride, int pad, float* dx) {
    const int oh = conv_out_dim(h, k, stride, pad), ow = conv_out_dim(w, k, stride, pad);
    const float* src = col.data();
    for (int ci = 0; ci < c; ++ci)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= h) {
                        src += ow;
                        continue;
                    }
                    float* row = dx + (int64_t(ci) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        if (ix >= 0 && ix < w) row[ix] += src[ox];
                    }
                    src += ow;
                }
            }
}

// ---------------------------------------------------------------------------
// Plain convolution
// ---------------------------------------------------------------------------

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(Rng& rng, int cin, int cout, int k, int stride = 1, int pad = -1, bool bias = true)
        : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad < 0 ? k / 2 : pad), has_bias_(bias) {
        weight.init({cout, cin * k * k});
        rng.fill_normal(weight.value, 0.0f, std::sqrt(2.0f / float(cin * k * k)));
        if (has_bias_) bias_p.init({cout});
    }

    // zero-init the kernel (used where a block must start as an identity map)
    void zero_weights() { weight.value.zero(); }

    Tensor forward(const Tensor& x) {
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        if (x.dim(1) != cin_) throw ShapeError("Conv2d: expected " + std::to_string(cin_) + " channels, got " + x.shape_str());
        const int oh = conv_out_dim(h, k_, stride_, pad_), ow = conv_out_dim(w, k_, stride_, pad_);
        in_h_ = h;
        in_w_ = w;
        cols_.resize(size_t(n));
        Tensor y({n, cout_, oh, ow});
        for (int b = 0; b < n; ++b) {
            im2col(x.data() + int64_t(b) * cin_ * h * w, cin_, h, w, k_, stride_, pad_, cols_[size_t(b)]);
            MapRM ym(y.data() + int64_t(b) * cout_ * oh * ow, cout_, oh * ow);
            ym.noalias() = weight.value.mat(cout_, cin_ * k_ * k_) * cols_[size_t(b)].mat(cin_ * k_ * k_, oh * ow);
        }
        if (has_bias_) {
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < cout_; ++c) {
                    float* p = y.data() + (int64_t(b) * cout_ + c) * oh * ow;
                    const float bv = bias_p.value[c];
                    for (int i = 0; i < oh * ow; ++i) p[i] += bv;
                }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const int n = dy.dim(0), oh = dy.dim(2), ow = dy.dim(3);
        Tensor dx({n, cin_, in_h_, in_w_});
        const int kk = cin_ * k_ * k_;
        Tensor dcol({kk, oh * ow});
        auto wgrad = weight.grad.mat(cout_, kk);
        for (int b = 0; b < n; ++b) {
            ConstMapRM dym(dy.data() + int64_t(b) * cout_ * oh * ow, cout_, oh * ow);
            wgrad.noalias() += dym * cols_[size_t(b)].mat(kk, oh * ow).transpose();
            dcol.mat(kk, oh * ow).noalias() = weight.value.mat(cout_, kk).transpose() * dym;
            col2im_add(dcol, cin_, in_h_, in_w_, k_, stride_, pad_, dx.data() + int64_t(b) * cin_ * in_h_ * in_w_);
        }
        if (has_bias_) {
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < cout_; ++c) {
                    const float* p = dy.data() + (int64_t(b) * cout_ + c) * oh * ow;
                    double s = 0.0;
                    for (int i = 0; i < oh * ow; ++i) s += p[i];
                    bias_p.grad[c] += float(s);
                }
        }
        return dx;
    }

    ParamRefs params() {
        ParamRefs r = {&weight};
        if (has_bias_) r.push_back(&bias_p);
        return r;
    }

    int out_channels() const { return cout_; }

    Param weight;
    Param bias_p;

private:
    int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    bool has_bias_ = true;
    int in_h_ = 0, in_w_ = 0;
    std::vector<Tensor> cols_;
};

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

class Linear {
public:
    Linear() = default;
    Linear(Rng& rng, int in, int out, float weight_scale = -1.0f) : in_(in), out_(out) {
        weight.init({out, in});
        rng.fill_normal(weight.value, 0.0f, weight_scale > 0.0f ? weight_scale : std::sqrt(2.0f / float(in)));
        bias_p.init({out});
    }

    Tensor forward(const Tensor& x) {
        const int n = x.dim(0);
        if (x.dim(1) != in_) throw ShapeError("Linear: expected " + std::to_string(in_) + " features, got " + x.shape_str());
        x_cache_ = x;
        Tensor y({n, out_});
        y.mat(n, out_).noalias() = x.mat(n, in_) * weight.value.mat(out_, in_).transpose();
        for (int b = 0; b < n; ++b)
            for (int o = 0; o < out_; ++o) y[int64_t(b) * out_ + o] += bias_p.value[o];
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const int n = dy.dim(0);
        Tensor dx({n, in_});
        weight.grad.mat(out_, in_).noalias() += dy.mat(n, out_).transpose() * x_cache_.mat(n, in_);
        dx.mat(n, in_).noalias() = dy.mat(n, out_) * weight.value.mat(out_, in_);
        for (int b = 0; b < n; ++b)
            for (int o = 0; o < out_; ++o) bias_p.grad[o] += dy[int64_t(b) * out_ + o];
        return dx;
    }

    ParamRefs params() { return {&weight, &bias_p}; }

    Param weight;
    Param bias_p;

private:
    int in_ = 0, out_ = 0;
    Tensor x_cache_;
};

// ---------------------------------------------------------------------------
// Activations (free functions; the caller keeps the outputs it needs)
// ---------------------------------------------------------------------------

inline Tensor leaky_relu(const Tensor& x, float slope = 0.2f) {
    Tensor y = x;
    for (int64_t i = 0; i < y.numel(); ++i)
        if (y[i] < 0.0f) y[i] *= slope;
    return y;
}

// dx from dy and the *output* y (sign of y matches sign of x for slope > 0)
inline Tensor leaky_relu_backward(const Tensor& dy, const Tensor& y, float slope = 0.2f) {
    Tensor dx = dy;
    for (int64_t i = 0; i < dx.numel(); ++i)
        if (y[i] < 0.0f) dx[i] *= slope;
    return dx;
}

inline Tensor tanh_forward(const Tensor& x) {
    Tensor y = x;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::tanh(y[i]);
    return y;
}

inline Tensor tanh_backward(const Tensor& dy, const Tensor& y) {
    Tensor dx = dy;
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] *= 1.0f - y[i] * y[i];
    return dx;
}

// ---------------------------------------------------------------------------
// Per-channel bias as a standalone parameter (the modulated convs carry none)
// ---------------------------------------------------------------------------

class ChannelBias {
public:
    ChannelBias() = default;
    explicit ChannelBias(int channels) { b.init({channels}); }

    void forward_inplace(Tensor& x) const {
        const int n = x.dim(0), c = x.dim(1);
        const int64_t plane = int64_t(x.dim(2)) * x.dim(3);
        for (int bn = 0; bn < n; ++bn)
            for (int ci = 0; ci < c; ++ci) {
                float* p = x.data() + (int64_t(bn) * c + ci) * plane;
                const float bv = b.value[ci];
                for (int64_t i = 0; i < plane; ++i) p[i] += bv;
            }
    }

    void backward(const Tensor& dy) {
        const int n = dy.dim(0), c = dy.dim(1);
        const int64_t plane = int64_t(dy.dim(2)) * dy.dim(3);
        for (int bn = 0; bn < n; ++bn)
            for (int ci = 0; ci < c; ++ci) {
                const float* p = dy.data() + (int64_t(bn) * c + ci) * plane;
                double s = 0.0;
                for (int64_t i = 0; i < plane; ++i) s += p[i];
                b.grad[ci] += float(s);
            }
    }

    ParamRefs params() { return {&b}; }

    Param b;
};

// ---------------------------------------------------------------------------
// Weight modulation / demodulation
// ---------------------------------------------------------------------------

// Scale kernel columns by per-input-channel scales; when demodulating, divide
// each output-channel filter by sqrt(sum of squared scaled weights + eps) so
// effective per-output-channel norms are one.
inline Tensor modulate_weights(const Tensor& weight, int cin, int kk, const float* scales, bool demodulate,
                               float eps = 1e-8f, std::vector<float>* out_sigma = nullptr) {
    const int cout = weight.dim(0);
    Tensor w2 = weight;  // [cout, cin*kk]
    for (int o = 0; o < cout; ++o) {
        float* row = w2.data() + int64_t(o) * cin * kk;
        for (int ci = 0; ci < cin; ++ci) {
            const float s = scales[ci];
            for (int j = 0; j < kk; ++j) row[ci * kk + j] *= s;
        }
    }
    if (out_sigma) out_sigma->assign(size_t(cout), 1.0f);
    if (demodulate) {
        for (int o = 0; o < cout; ++o) {
            float* row = w2.data() + int64_t(o) * cin * kk;
            double ss = 0.0;
            for (int j = 0; j < cin * kk; ++j) ss += double(row[j]) * double(row[j]);
            const float sigma = float(std::sqrt(ss + double(eps)));
            if (out_sigma) (*out_sigma)[size_t(o)] = sigma;
            const float inv = 1.0f / sigma;
            for (int j = 0; j < cin * kk; ++j) row[j] *= inv;
        }
    }
    return w2;
}

// Style-modulated convolution: per sample, the style vector passes through an
// affine projection (bias starts at one) to per-input-channel scales; the
// scaled kernel is demodulated and then convolved. Stride 1.
class ModulatedConv2d {
public:
    ModulatedConv2d() = default;
    ModulatedConv2d(Rng& rng, int cin, int cout, int k, int style_dim, bool demodulate = true)
        : cin_(cin), cout_(cout), k_(k), pad_(k / 2), style_dim_(style_dim), demod_(demodulate) {
        weight.init({cout, cin * k * k});
        rng.fill_normal(weight.value, 0.0f, 1.0f / std::sqrt(float(cin * k * k)));
        affine_w.init({cin, style_dim});
        rng.fill_normal(affine_w.value, 0.0f, 1.0f / std::sqrt(float(style_dim)));
        affine_b.init({cin});
        affine_b.value.fill(1.0f);
    }

    Tensor forward(const Tensor& x, const Tensor& style) {
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        if (x.dim(1) != cin_) throw ShapeError("ModulatedConv2d: channel mismatch " + x.shape_str());
        if (style.dim(0) != n || style.dim(1) != style_dim_) throw ShapeError("ModulatedConv2d: style mismatch " + style.shape_str());
        in_h_ = h;
        in_w_ = w;
        style_cache_ = style;
        const int oh = conv_out_dim(h, k_, 1, pad_), ow = conv_out_dim(w, k_, 1, pad_);
        scales_ = Tensor({n, cin_});
        scales_.mat(n, cin_).noalias() = style.mat(n, style_dim_) * affine_w.value.mat(cin_, style_dim_).transpose();
        for (int b = 0; b < n; ++b)
            for (int ci = 0; ci < cin_; ++ci) scales_[int64_t(b) * cin_ + ci] += affine_b.value[ci];

        cols_.resize(size_t(n));
        Tensor y({n, cout_, oh, ow});
        const int kk = k_ * k_;
        for (int b = 0; b < n; ++b) {
            im2col(x.data() + int64_t(b) * cin_ * h * w, cin_, h, w, k_, 1, pad_, cols_[size_t(b)]);
            const Tensor w2 = modulate_weights(weight.value, cin_, kk, scales_.data() + int64_t(b) * cin_, demod_);
            MapRM ym(y.data() + int64_t(b) * cout_ * oh * ow, cout_, oh * ow);
            ym.noalias() = w2.mat(cout_, cin_ * kk) * cols_[size_t(b)].mat(cin_ * kk, oh * ow);
        }
        return y;
    }

    // Accumulates the style gradient into dstyle ([N, style_dim], pre-zeroed
    // by the caller or shared across layers).
    Tensor backward(const Tensor& dy, Tensor& dstyle) {
        const int n = dy.dim(0), oh = dy.dim(2), ow = dy.dim(3);
        const int kk = k_ * k_, ckk = cin_ * kk;
        Tensor dx({n, cin_, in_h_, in_w_});
        Tensor dw2({cout_, ckk});
        Tensor dw1({cout_, ckk});
        Tensor dcol({ckk, oh * ow});
        Tensor dscales({n, cin_});
        std::vector<float> sigma;
        for (int b = 0; b < n; ++b) {
            const float* sc = scales_.data() + int64_t(b) * cin_;
            // recompute the modulated kernel (cheap next to the GEMMs)
            Tensor w1 = weight.value;
            for (int o = 0; o < cout_; ++o) {
                float* row = w1.data() + int64_t(o) * ckk;
                for (int ci = 0; ci < cin_; ++ci)
                    for (int j = 0; j < kk; ++j) row[ci * kk + j] *= sc[ci];
            }
            sigma.assign(size_t(cout_), 1.0f);
            if (demod_) {
                for (int o = 0; o < cout_; ++o) {
                    const float* row = w1.data() + int64_t(o) * ckk;
                    double ss = 0.0;
                    for (int j = 0; j < ckk; ++j) ss += double(row[j]) * double(row[j]);
                    sigma[size_t(o)] = float(std::sqrt(ss + 1e-8));
                }
            }
            Tensor w2 = w1;
            if (demod_)
                for (int o = 0; o < cout_; ++o) {
                    float* row = w2.data() + int64_t(o) * ckk;
                    const float inv = 1.0f / sigma[size_t(o)];
                    for (int j = 0; j < ckk; ++j) row[j] *= inv;
                }

            ConstMapRM dym(dy.data() + int64_t(b) * cout_ * oh * ow, cout_, oh * ow);
            // input gradient
            dcol.mat(ckk, oh * ow).noalias() = w2.mat(cout_, ckk).transpose() * dym;
            col2im_add(dcol, cin_, in_h_, in_w_, k_, 1, pad_, dx.data() + int64_t(b) * cin_ * in_h_ * in_w_);
            // gradient wrt the demodulated kernel
            dw2.mat(cout_, ckk).noalias() = dym * cols_[size_t(b)].mat(ckk, oh * ow).transpose();
            // back through demodulation: dw1 = dw2/sigma - w1 * (dw2.w1)/sigma^3
            if (demod_) {
                for (int o = 0; o < cout_; ++o) {
                    const float* g2 = dw2.data() + int64_t(o) * ckk;
                    const float* w1r = w1.data() + int64_t(o) * ckk;
                    float* g1 = dw1.data() + int64_t(o) * ckk;
                    double dot = 0.0;
                    for (int j = 0; j < ckk; ++j) dot += double(g2[j]) * double(w1r[j]);
                    const float s1 = 1.0f / sigma[size_t(o)];
                    const float s3 = float(dot) * s1 * s1 * s1;
                    for (int j = 0; j < ckk; ++j) g1[j] = g2[j] * s1 - w1r[j] * s3;
                }
            } else {
                dw1 = dw2;
            }
            // back through modulation: dweight += dw1 * s, dscales = sum(dw1 . weight)
            float* ds = dscales.data() + int64_t(b) * cin_;
            for (int ci = 0; ci < cin_; ++ci) ds[ci] = 0.0f;
            for (int o = 0; o < cout_; ++o) {
                const float* g1 = dw1.data() + int64_t(o) * ckk;
                const float* w0 = weight.value.data() + int64_t(o) * ckk;
                float* gw = weight.grad.data() + int64_t(o) * ckk;
                for (int ci = 0; ci < cin_; ++ci) {
                    const float s = sc[ci];
                    double acc = 0.0;
                    for (int j = 0; j < kk; ++j) {
                        gw[ci * kk + j] += g1[ci * kk + j] * s;
                        acc += double(g1[ci * kk + j]) * double(w0[ci * kk + j]);
                    }
                    ds[ci] += float(acc);
                }
            }
        }
        // affine backward: dstyle += dscales * affine_w; affine grads accumulate
        dstyle.mat(n, style_dim_).noalias() += dscales.mat(n, cin_) * affine_w.value.mat(cin_, style_dim_);
        affine_w.grad.mat(cin_, style_dim_).noalias() +=
            dscales.mat(n, cin_).transpose() * style_cache_.mat(n, style_dim_);
        for (int b = 0; b < n; ++b)
            for (int ci = 0; ci < cin_; ++ci) affine_b.grad[ci] += dscales[int64_t(b) * cin_ + ci];
        return dx;
    }

    ParamRefs params() { return {&weight, &affine_w, &affine_b}; }

    int out_channels() const { return cout_; }
    int in_channels() const { return cin_; }
    int kernel() const { return k_; }

    Param weight;    // [cout, cin*k*k]
    Param affine_w;  // [cin, style_dim]
    Param affine_b;  // [cin], init 1

private:
    int cin_ = 0, cout_ = 0, k_ = 0, pad_ = 0, style_dim_ = 0;
    bool demod_ = true;
    int in_h_ = 0, in_w_ = 0;
    Tensor style_cache_;
    Tensor scales_;
    std::vector<Tensor> cols_;
};

// ---------------------------------------------------------------------------
// Noise injection: y = x + strength * n, one noise map per sample broadcast
// across channels. Strength starts at zero.
// ---------------------------------------------------------------------------

enum class NoiseMode { train, seeded, zero };

class NoiseInject {
public:
    NoiseInject() = default;
    explicit NoiseInject(int layer_uid) : uid_(layer_uid) { strength.init({1}); }

    Tensor forward(const Tensor& x, NoiseMode mode, Rng* rng) {
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        if (mode == NoiseMode::zero) {
            noise_ = Tensor();
            return x;
        }
        noise_ = Tensor({n, 1, h, w});
        if (mode == NoiseMode::seeded) {
            // reproducible per (rng seed, layer): callers derive rng per frame
            Rng local = rng->child(uint64_t(uid_));
            local.fill_normal(noise_);
        } else {
            // training noise comes straight off the training stream; the layer
            // call order is fixed, so runs with equal seeds stay identical
            rng->fill_normal(noise_);
        }
        Tensor y = x;
        const int64_t plane = int64_t(h) * w;
        const float s = strength.value[0];
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < x.dim(1); ++c) {
                float* p = y.data() + (int64_t(b) * x.dim(1) + c) * plane;
                const float* np = noise_.data() + int64_t(b) * plane;
                for (int64_t i = 0; i < plane; ++i) p[i] += s * np[i];
            }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        if (noise_.empty()) return dy;
        const int n = dy.dim(0), c = dy.dim(1);
        const int64_t plane = int64_t(dy.dim(2)) * dy.dim(3);
        double acc = 0.0;
        for (int b = 0; b < n; ++b)
            for (int ci = 0; ci < c; ++ci) {
                const float* p = dy.data() + (int64_t(b) * c + ci) * plane;
                const float* np = noise_.data() + int64_t(b) * plane;
                for (int64_t i = 0; i < plane; ++i) acc += double(p[i]) * double(np[i]);
            }
        strength.grad[0] += float(acc);
        return dy;
    }

    ParamRefs params() { return {&strength}; }

    Param strength;

private:
    int uid_ = 0;
    Tensor noise_;
};

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

inline Tensor upsample2x(const Tensor& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({n, c, h * 2, w * 2});
    for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (int yy = 0; yy < h * 2; ++yy) {
                const float* src = x.data() + ((int64_t(b) * c + ci) * h + yy / 2) * w;
                float* dst = y.data() + ((int64_t(b) * c + ci) * h * 2 + yy) * (w * 2);
                for (int xx = 0; xx < w * 2; ++xx) dst[xx] = src[xx / 2];
            }
    return y;
}

inline Tensor upsample2x_backward(const Tensor& dy) {
    const int n = dy.dim(0), c = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
    Tensor dx({n, c, oh / 2, ow / 2});
    for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (int yy = 0; yy < oh; ++yy) {
                const float* src = dy.data() + ((int64_t(b) * c + ci) * oh + yy) * ow;
                float* dst = dx.data() + ((int64_t(b) * c + ci) * (oh / 2) + yy / 2) * (ow / 2);
                for (int xx = 0; xx < ow; ++xx) dst[xx / 2] += src[xx];
            }
    return dx;
}

inline Tensor avgpool2(const Tensor& x) {
    const int n = x.dim(0), c = x.dim(1), oh = x.dim(2) / 2, ow = x.dim(3) / 2;
    Tensor y({n, c, oh, ow});
    for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx)
                    y.at(b, ci, yy, xx) = 0.25f * (x.at(b, ci, 2 * yy, 2 * xx) + x.at(b, ci, 2 * yy, 2 * xx + 1) +
                                                   x.at(b, ci, 2 * yy + 1, 2 * xx) + x.at(b, ci, 2 * yy + 1, 2 * xx + 1));
    return y;
}

inline Tensor avgpool2_backward(const Tensor& dy, int in_h, int in_w) {
    const int n = dy.dim(0), c = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
    Tensor dx({n, c, in_h, in_w});
    for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx) {
                    const float g = 0.25f * dy.at(b, ci, yy, xx);
                    dx.at(b, ci, 2 * yy, 2 * xx) += g;
                    dx.at(b, ci, 2 * yy, 2 * xx + 1) += g;
                    dx.at(b, ci, 2 * yy + 1, 2 * xx) += g;
                    dx.at(b, ci, 2 * yy + 1, 2 * xx + 1) += g;
                }
    return dx;
}

// torch-style adaptive average pooling (fractional bins)
inline Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({n, c, out_h, out_w});
    for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < out_h; ++oy) {
                const int y0 = oy * h / out_h, y1 = ((oy + 1) * h + out_h - 1) / out_h;
                for (int ox = 0; ox < out_w; ++ox) {
                    const int x0 = ox * w / out_w, x1 = ((ox + 1) * w + out_w - 1) / out_w;
                    double s = 0.0;
                    for (int yy = y0; yy < y1; ++yy)
                        for (int xx = x0; xx < x1; ++xx) s += x.at(b, ci, yy, xx);
                    y.at(b, ci, oy, ox) = float(s / double((y1 - y0) * (x1 - x0)));
                }
            }
    return y;
}

inline Tensor adaptive_avg_pool_backward(const Tensor& dy, int in_h, int in_w) {
    const int n = dy.dim(0), c = dy.dim(1), out_h = dy.dim(2), out_w = dy.dim(3);
    Tensor dx({n, c, in_h, in_w});
    for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < out_h; ++oy) {
                const int y0 = oy * in_h / out_h, y1 = ((oy + 1) * in_h + out_h - 1) / out_h;
                for (int ox = 0; ox < out_w; ++ox) {
                    const int x0 = ox * in_w / out_w, x1 = ((ox + 1) * in_w + out_w - 1) / out_w;
                    const float g = dy.at(b, ci, oy, ox) / float((y1 - y0) * (x1 - x0));
                    for (int yy = y0; yy < y1; ++yy)
                        for (int xx = x0; xx < x1; ++xx) dx.at(b, ci, yy, xx) += g;
                }
            }
    return dx;
}

// Broadcast a per-sample vector across every spatial location and concatenate
// along channels: ([N,C,H,W], [N,D]) -> [N,C+D,H,W].
inline Tensor concat_broadcast(const Tensor& spatial, const Tensor& vec) {
    const int n = spatial.dim(0), c = spatial.dim(1), h = spatial.dim(2), w = spatial.dim(3);
    const int d = vec.dim(1);
    Tensor y({n, c + d, h, w});
    const int64_t plane = int64_t(h) * w;
    for (int b = 0; b < n; ++b) {
        std::copy(spatial.data() + int64_t(b) * c * plane, spatial.data() + int64_t(b + 1) * c * plane,
                  y.data() + int64_t(b) * (c + d) * plane);
        for (int di = 0; di < d; ++di) {
            float* p = y.data() + (int64_t(b) * (c + d) + c + di) * plane;
            const float v = vec[int64_t(b) * d + di];
            for (int64_t i = 0; i < plane; ++i) p[i] = v;
        }
    }
    return y;
}

inline void concat_broadcast_backward(const Tensor& dy, int c, Tensor& dspatial, Tensor& dvec_accum) {
    const int n = dy.dim(0), cd = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
    const int d = cd - c;
    dspatial = Tensor({n, c, h, w});
    const int64_t plane = int64_t(h) * w;
    for (int b = 0; b < n; ++b) {
        std::copy(dy.data() + int64_t(b) * cd * plane, dy.data() + int64_t(b) * cd * plane + int64_t(c) * plane,
                  dspatial.data() + int64_t(b) * c * plane);
        for (int di = 0; di < d; ++di) {
            const float* p = dy.data() + (int64_t(b) * cd + c + di) * plane;
            double s = 0.0;
            for (int64_t i = 0; i < plane; ++i) s += p[i];
            dvec_accum[int64_t(b) * d + di] += float(s);
        }
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

class Adam {
public:
    Adam(float lr, float beta1, float beta2, float eps = 1e-8f) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const ParamRefs& params) {
        ++t_;
        const float bc1 = 1.0f - std::pow(b1_, float(t_));
        const float bc2 = 1.0f - std::pow(b2_, float(t_));
        for (Param* p : params) {
            auto& st = state_[p];
            if (st.m.empty()) {
                st.m = Tensor(p->value.shape());
                st.v = Tensor(p->value.shape());
            }
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                const float g = p->grad[i];
                st.m[i] = b1_ * st.m[i] + (1.0f - b1_) * g;
                st.v[i] = b2_ * st.v[i] + (1.0f - b2_) * g * g;
                const float mh = st.m[i] / bc1;
                const float vh = st.v[i] / bc2;
                p->value[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
            }
        }
    }

    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }
    int steps() const { return t_; }

private:
    struct State {
        Tensor m, v;
    };
    float lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::unordered_map<Param*, State> state_;
};

}  // namespace dynamo::nn
