#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dynamo/keypoints.hpp"
#include "dynamo/tensor.hpp"

namespace dynamo {

// Three-channel dense body IUV map: channel 0 is the part index normalized to
// [0,1], channels 1-2 are within-part surface coordinates in [0,1].
// Background pixels are exactly (0,0,0).
struct DenseUVMap {
    Tensor data;  // [3,H,W] in [0,1]

    int width() const { return data.dim(2); }
    int height() const { return data.dim(1); }

    void validate() const {
        if (data.ndim() != 3 || data.dim(0) != 3) throw ShapeError("DenseUVMap must be [3,H,W], got " + data.shape_str());
        for (int64_t i = 0; i < data.numel(); ++i)
            if (data[i] < 0.0f || data[i] > 1.0f) throw NumericError("DenseUVMap values must lie in [0,1]");
    }
};

// 6-channel pose input: channels 0-2 the dense UV map, channels 3-5 the
// rasterized keypoints, both normalized to [-1,1].
struct PoseSignature {
    Tensor data;  // [6,H,W]

    int width() const { return data.dim(2); }
    int height() const { return data.dim(1); }
};

// Stack of K past pose signatures, nearest offset first: 6K channels.
struct MotionSignature {
    Tensor data;  // [6K,H,W]

    int blocks() const { return data.dim(0) / 6; }
};

// Past-frame offsets of the default motion window: K=10 frames sampled
// unevenly from the last 20, nearest first.
inline const std::vector<int>& default_motion_offsets() {
    static const std::vector<int> offsets = {1, 2, 3, 4, 6, 8, 10, 13, 16, 20};
    return offsets;
}

namespace detail {

inline float point_segment_distance(float px, float py, float ax, float ay, float bx, float by) {
    const float abx = bx - ax, aby = by - ay;
    const float len2 = abx * abx + aby * aby;
    float t = len2 > 0.0f ? ((px - ax) * abx + (py - ay) * aby) / len2 : 0.0f;
    t = std::clamp(t, 0.0f, 1.0f);
    const float dx = px - (ax + t * abx), dy = py - (ay + t * aby);
    return std::sqrt(dx * dx + dy * dy);
}

// Coverage-based anti-aliased stroke: full color inside the half-width, a
// 1-pixel linear falloff beyond it. Channels combine by max so overlapping
// bones are draw-order independent.
inline void stroke_segment(Tensor& img, float ax, float ay, float bx, float by, const std::array<float, 3>& color,
                           float half_width) {
    const int h = img.dim(1), w = img.dim(2);
    const int x0 = std::max(0, int(std::floor(std::min(ax, bx) - half_width - 1.0f)));
    const int x1 = std::min(w - 1, int(std::ceil(std::max(ax, bx) + half_width + 1.0f)));
    const int y0 = std::max(0, int(std::floor(std::min(ay, by) - half_width - 1.0f)));
    const int y1 = std::min(h - 1, int(std::ceil(std::max(ay, by) + half_width + 1.0f)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const float d = point_segment_distance(float(x) + 0.5f, float(y) + 0.5f, ax, ay, bx, by);
            const float cov = std::clamp(half_width + 0.5f - d, 0.0f, 1.0f);
            if (cov <= 0.0f) continue;
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::max(img.at(c, y, x), cov * color[size_t(c)]);
        }
}

}  // namespace detail

// Render a keypoint set as an RGB image in [0,1]. Deterministic; bones whose
// endpoints fall under the confidence threshold are omitted.
inline Tensor rasterize_keypoints(const KeypointSet& kp, int width, int height, const RasterStyle& style) {
    if (width <= 0 || height <= 0) throw ShapeError("rasterize_keypoints: non-positive canvas");
    Tensor img({3, height, width});
    const float hw = RasterStyle::line_width(width) * 0.5f;
    for (const auto& bone : style.bones) {
        const int ia = kp.find(bone.a), ib = kp.find(bone.b);
        if (ia < 0) throw ConfigError("rasterize_keypoints: unknown joint label '" + bone.a + "' in bone definition");
        if (ib < 0) throw ConfigError("rasterize_keypoints: unknown joint label '" + bone.b + "' in bone definition");
        const auto& a = kp.joints[size_t(ia)];
        const auto& b = kp.joints[size_t(ib)];
        if (a.c < style.confidence_threshold || b.c < style.confidence_threshold) continue;
        detail::stroke_segment(img, a.x, a.y, b.x, b.y, bone.color, hw);
    }
    if (style.draw_landmarks) {
        auto draw_dots = [&](const std::vector<Landmark>& pts) {
            for (const auto& p : pts) {
                if (p.c < style.confidence_threshold) continue;
                detail::stroke_segment(img, p.x, p.y, p.x, p.y, style.landmark_color, hw * 0.5f);
            }
        };
        draw_dots(kp.face);
        draw_dots(kp.hands);
    }
    return img;
}

// Concatenate the normalized UV map and keypoint rendering into the 6-channel
// pose signature; [0,1] inputs map to [-1,1].
inline PoseSignature build_pose_signature(const DenseUVMap& uv, const KeypointSet& kp, const RasterStyle& style) {
    if (uv.data.ndim() != 3 || uv.data.dim(0) != 3) throw ShapeError("build_pose_signature: UV must be [3,H,W]");
    const int h = uv.height(), w = uv.width();
    const Tensor raster = rasterize_keypoints(kp, w, h, style);
    PoseSignature sig;
    sig.data = Tensor({6, h, w});
    const int64_t plane = int64_t(h) * w;
    for (int64_t i = 0; i < 3 * plane; ++i) sig.data[i] = 2.0f * uv.data[i] - 1.0f;
    for (int64_t i = 0; i < 3 * plane; ++i) sig.data[3 * plane + i] = 2.0f * raster[i] - 1.0f;
    return sig;
}

// Repeat one pose for every past slot: the "frozen" still-motion signature.
inline MotionSignature frozen_motion_signature(const PoseSignature& p, int window = 10) {
    MotionSignature m;
    m.data = Tensor({6 * window, p.data.dim(1), p.data.dim(2)});
    const int64_t block = p.data.numel();
    for (int k = 0; k < window; ++k)
        std::copy(p.data.data(), p.data.data() + block, m.data.data() + int64_t(k) * block);
    return m;
}

}  // namespace dynamo
