#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "dynamo/tensor.hpp"

namespace dynamo {

// ---------------------------------------------------------------------------
// MSE over [-1,1] sequences
// ---------------------------------------------------------------------------

inline double mse(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("mse: " + a.shape_str() + " vs " + b.shape_str());
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return s / double(a.numel());
}

inline double mse(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) throw ShapeError("mse: sequence length mismatch");
    double s = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!a[i].same_shape(b[i])) throw ShapeError("mse: frame shape mismatch");
        for (int64_t j = 0; j < a[i].numel(); ++j) {
            const double d = double(a[i][j]) - double(b[i][j]);
            s += d * d;
        }
        n += a[i].numel();
    }
    return n ? s / double(n) : 0.0;
}

// ---------------------------------------------------------------------------
// SSIM with the standard constants: k1=0.01, k2=0.03, 11x11 Gaussian window
// (sigma 1.5), dynamic range 2 for [-1,1] pixels. The local map is evaluated
// where the window fits entirely inside the image, then averaged per channel.
// ---------------------------------------------------------------------------

namespace detail_metrics {

inline const std::array<double, 11>& gaussian11() {
    static const std::array<double, 11> g = [] {
        std::array<double, 11> w{};
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double x = double(i - 5);
            w[size_t(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
            sum += w[size_t(i)];
        }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return g;
}

}  // namespace detail_metrics

inline double ssim(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("ssim: " + a.shape_str() + " vs " + b.shape_str());
    if (a.ndim() != 3) throw ShapeError("ssim expects [C,H,W]");
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    if (h < 11 || w < 11) throw ShapeError("ssim needs at least 11x11 images");
    const auto& g = detail_metrics::gaussian11();
    constexpr double kC1 = (0.01 * 2.0) * (0.01 * 2.0);
    constexpr double kC2 = (0.03 * 2.0) * (0.03 * 2.0);
    double total = 0.0;
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        int64_t count = 0;
        for (int y = 5; y < h - 5; ++y)
            for (int x = 5; x < w - 5; ++x) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int dy = -5; dy <= 5; ++dy) {
                    const double wy = g[size_t(dy + 5)];
                    for (int dx = -5; dx <= 5; ++dx) {
                        const double wgt = wy * g[size_t(dx + 5)];
                        const double va = a.at(ch, y + dy, x + dx);
                        const double vb = b.at(ch, y + dy, x + dx);
                        mx += wgt * va;
                        my += wgt * vb;
                        mxx += wgt * va * va;
                        myy += wgt * vb * vb;
                        mxy += wgt * va * vb;
                    }
                }
                const double sx = mxx - mx * mx, sy = myy - my * my, sxy = mxy - mx * my;
                const double num = (2.0 * mx * my + kC1) * (2.0 * sxy + kC2);
                const double den = (mx * mx + my * my + kC1) * (sx + sy + kC2);
                acc += num / den;
                ++count;
            }
        total += acc / double(count);
    }
    return total / double(c);
}

inline double ssim(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) throw ShapeError("ssim: sequence length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += ssim(a[i], b[i]);
    return a.empty() ? 0.0 : s / double(a.size());
}

// ---------------------------------------------------------------------------
// Optical flow: pyramidal Horn-Schunck with fixed iteration counts and
// smoothness weight alpha. Deterministic by construction.
// ---------------------------------------------------------------------------

struct FlowParams {
    float alpha = 0.25f;  // smoothness weight in [-1,1] intensity units
    int iterations = 60;  // Jacobi sweeps per warp round
    int warps = 2;        // relinearizations per pyramid level
    int max_levels = 3;
};

namespace detail_metrics {

inline Tensor to_gray(const Tensor& img) {
    const int h = img.dim(1), w = img.dim(2);
    Tensor g({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            g.at(0, y, x) = (img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x)) / 3.0f;
    return g;
}

inline Tensor down2(const Tensor& g) {
    const int h = g.dim(1) / 2, w = g.dim(2) / 2;
    Tensor out({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(0, y, x) = 0.25f * (g.at(0, 2 * y, 2 * x) + g.at(0, 2 * y, 2 * x + 1) + g.at(0, 2 * y + 1, 2 * x) +
                                       g.at(0, 2 * y + 1, 2 * x + 1));
    return out;
}

inline float sample_bilinear(const Tensor& g, float x, float y) {
    const int h = g.dim(1), w = g.dim(2);
    x = std::clamp(x, 0.0f, float(w - 1));
    y = std::clamp(y, 0.0f, float(h - 1));
    const int x0 = int(x), y0 = int(y);
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const float fx = x - float(x0), fy = y - float(y0);
    return g.at(0, y0, x0) * (1 - fx) * (1 - fy) + g.at(0, y0, x1) * fx * (1 - fy) +
           g.at(0, y1, x0) * (1 - fx) * fy + g.at(0, y1, x1) * fx * fy;
}

inline void horn_schunck_level(const Tensor& prev, const Tensor& next, Tensor& u, Tensor& v, const FlowParams& prm) {
    const int h = prev.dim(1), w = prev.dim(2);
    const float a2 = prm.alpha * prm.alpha;
    Tensor warped({1, h, w}), ix({1, h, w}), iy({1, h, w}), it({1, h, w});
    Tensor ub({1, h, w}), vb({1, h, w});
    for (int round = 0; round < prm.warps; ++round) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                warped.at(0, y, x) = sample_bilinear(next, float(x) + u.at(0, y, x), float(y) + v.at(0, y, x));
        auto cx = [&](const Tensor& g, int y, int x) {
            return 0.5f * (g.at(0, y, std::min(x + 1, w - 1)) - g.at(0, y, std::max(x - 1, 0)));
        };
        auto cy = [&](const Tensor& g, int y, int x) {
            return 0.5f * (g.at(0, std::min(y + 1, h - 1), x) - g.at(0, std::max(y - 1, 0), x));
        };
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                ix.at(0, y, x) = 0.5f * (cx(prev, y, x) + cx(warped, y, x));
                iy.at(0, y, x) = 0.5f * (cy(prev, y, x) + cy(warped, y, x));
                it.at(0, y, x) = warped.at(0, y, x) - prev.at(0, y, x);
            }
        Tensor du({1, h, w}), dv({1, h, w});
        for (int iter = 0; iter < prm.iterations; ++iter) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
                    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
                    ub.at(0, y, x) = 0.25f * (du.at(0, y, xm) + du.at(0, y, xp) + du.at(0, ym, x) + du.at(0, yp, x));
                    vb.at(0, y, x) = 0.25f * (dv.at(0, y, xm) + dv.at(0, y, xp) + dv.at(0, ym, x) + dv.at(0, yp, x));
                }
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const float gx = ix.at(0, y, x), gy = iy.at(0, y, x);
                    const float t = (gx * ub.at(0, y, x) + gy * vb.at(0, y, x) + it.at(0, y, x)) /
                                    (a2 + gx * gx + gy * gy);
                    du.at(0, y, x) = ub.at(0, y, x) - gx * t;
                    dv.at(0, y, x) = vb.at(0, y, x) - gy * t;
                }
        }
        for (int64_t i = 0; i < u.numel(); ++i) {
            u[i] += du[i];
            v[i] += dv[i];
        }
    }
}

}  // namespace detail_metrics

// Returns a [2,H,W] field: channel 0 horizontal, channel 1 vertical, in
// pixels per frame (prev -> next).
inline Tensor estimate_flow(const Tensor& prev, const Tensor& next, const FlowParams& prm = {}) {
    if (!prev.same_shape(next)) throw ShapeError("estimate_flow: shape mismatch");
    Tensor g0 = detail_metrics::to_gray(prev);
    Tensor g1 = detail_metrics::to_gray(next);
    std::vector<Tensor> pyr0 = {g0}, pyr1 = {g1};
    while (int(pyr0.size()) < prm.max_levels && pyr0.back().dim(1) >= 24 && pyr0.back().dim(2) >= 24) {
        pyr0.push_back(detail_metrics::down2(pyr0.back()));
        pyr1.push_back(detail_metrics::down2(pyr1.back()));
    }
    Tensor u({1, pyr0.back().dim(1), pyr0.back().dim(2)});
    Tensor v({1, pyr0.back().dim(1), pyr0.back().dim(2)});
    for (int level = int(pyr0.size()) - 1; level >= 0; --level) {
        if (level != int(pyr0.size()) - 1) {
            const int h = pyr0[size_t(level)].dim(1), w = pyr0[size_t(level)].dim(2);
            Tensor u2({1, h, w}), v2({1, h, w});
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    u2.at(0, y, x) = 2.0f * u.at(0, std::min(y / 2, u.dim(1) - 1), std::min(x / 2, u.dim(2) - 1));
                    v2.at(0, y, x) = 2.0f * v.at(0, std::min(y / 2, v.dim(1) - 1), std::min(x / 2, v.dim(2) - 1));
                }
            u = std::move(u2);
            v = std::move(v2);
        }
        detail_metrics::horn_schunck_level(pyr0[size_t(level)], pyr1[size_t(level)], u, v, prm);
    }
    Tensor flow({2, g0.dim(1), g0.dim(2)});
    std::copy(u.data(), u.data() + u.numel(), flow.data());
    std::copy(v.data(), v.data() + v.numel(), flow.data() + u.numel());
    return flow;
}

// ---------------------------------------------------------------------------
// tOF: mean end-point error between the flows of generated and ground-truth
// consecutive frame pairs. Directional: (generated, truth).
// ---------------------------------------------------------------------------

inline double tof(const std::vector<Tensor>& generated, const std::vector<Tensor>& truth,
                  const FlowParams& prm = {}) {
    if (generated.size() != truth.size()) throw ShapeError("tof: sequence length mismatch");
    if (generated.size() < 2) throw ShapeError("tof needs at least two frames");
    double total = 0.0;
    for (size_t i = 0; i + 1 < generated.size(); ++i) {
        const Tensor fg = estimate_flow(generated[i], generated[i + 1], prm);
        const Tensor ft = estimate_flow(truth[i], truth[i + 1], prm);
        const int64_t plane = int64_t(fg.dim(1)) * fg.dim(2);
        double s = 0.0;
        for (int64_t j = 0; j < plane; ++j) {
            const double du = double(fg[j]) - double(ft[j]);
            const double dv = double(fg[plane + j]) - double(ft[plane + j]);
            s += std::sqrt(du * du + dv * dv);
        }
        total += s / double(plane);
    }
    return total / double(generated.size() - 1);
}

// ---------------------------------------------------------------------------
// Slice plots: one pixel column / row per frame, stacked along time.
// ---------------------------------------------------------------------------

struct SlicePlots {
    Tensor vertical;    // [3, H, span] from column `col`
    Tensor horizontal;  // [3, span, W] from row `row`
};

inline SlicePlots slice_plot(const std::vector<Tensor>& seq, int row, int col, int span) {
    if (span <= 0 || size_t(span) > seq.size()) throw ShapeError("slice_plot: span outside sequence");
    const int h = seq[0].dim(1), w = seq[0].dim(2);
    if (row < 0 || row >= h || col < 0 || col >= w) throw ShapeError("slice_plot: row/col outside image");
    SlicePlots out;
    out.vertical = Tensor({3, h, span});
    out.horizontal = Tensor({3, span, w});
    for (int t = 0; t < span; ++t) {
        const Tensor& f = seq[size_t(t)];
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) out.vertical.at(c, y, t) = f.at(c, y, col);
            for (int x = 0; x < w; ++x) out.horizontal.at(c, t, x) = f.at(c, row, x);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scalar temporal-jitter proxy: mean absolute frame-to-frame difference
// inside a mask (full frame when the mask is empty).
// ---------------------------------------------------------------------------

inline double temporal_jitter_score(const std::vector<Tensor>& seq, const Tensor& mask = Tensor()) {
    if (seq.size() < 2) return 0.0;
    double total = 0.0;
    for (size_t i = 0; i + 1 < seq.size(); ++i) {
        const Tensor& a = seq[i];
        const Tensor& b = seq[i + 1];
        if (!a.same_shape(b)) throw ShapeError("temporal_jitter_score: frame shape mismatch");
        const int64_t plane = int64_t(a.dim(1)) * a.dim(2);
        double s = 0.0;
        int64_t n = 0;
        for (int c = 0; c < a.dim(0); ++c)
            for (int64_t j = 0; j < plane; ++j) {
                if (!mask.empty() && mask[j] <= 0.0f) continue;
                s += std::abs(double(a[int64_t(c) * plane + j]) - double(b[int64_t(c) * plane + j]));
                ++n;
            }
        total += n ? s / double(n) : 0.0;
    }
    return total / double(seq.size() - 1);
}

}  // namespace dynamo
