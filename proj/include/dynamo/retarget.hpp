#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "dynamo/dataset.hpp"

namespace dynamo {

// ---------------------------------------------------------------------------
// Skeleton statistics of the training split: medians are robust against the
// occasional bad detection.
// ---------------------------------------------------------------------------

struct SkeletonStats {
    float median_height = 0.0f;
    float median_width = 0.0f;
    float median_center_x = 0.0f;
    float ground_y = 0.0f;  // median lowest-ankle y
};

namespace detail_retarget {

struct Bbox {
    float min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    int visible = 0;
};

inline Bbox visible_bbox(const KeypointSet& kp) {
    Bbox b;
    for (const auto& j : kp.joints) {
        if (j.c <= 0.0f) continue;
        if (b.visible == 0) {
            b.min_x = b.max_x = j.x;
            b.min_y = b.max_y = j.y;
        } else {
            b.min_x = std::min(b.min_x, j.x);
            b.max_x = std::max(b.max_x, j.x);
            b.min_y = std::min(b.min_y, j.y);
            b.max_y = std::max(b.max_y, j.y);
        }
        ++b.visible;
    }
    return b;
}

inline std::optional<float> lowest_ankle_y(const KeypointSet& kp) {
    std::optional<float> y;
    for (const char* name : {"l_ankle", "r_ankle"}) {
        const int i = kp.find(name);
        if (i >= 0 && kp.joints[size_t(i)].c > 0.0f) y = std::max(y.value_or(-1e9f), kp.joints[size_t(i)].y);
    }
    return y;
}

inline float median(std::vector<float> v) {
    if (v.empty()) return 0.0f;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5f * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail_retarget

inline SkeletonStats compute_skeleton_stats(const SequenceDataset& seq, SplitTag tag = SplitTag::train) {
    std::vector<float> heights, widths, centers, ankles;
    for (size_t i = 0; i < seq.size(); ++i) {
        if (seq.tag(i) != tag) continue;
        const auto b = detail_retarget::visible_bbox(seq.frames[i].keypoints);
        if (b.visible < 2) continue;
        heights.push_back(b.max_y - b.min_y);
        widths.push_back(b.max_x - b.min_x);
        centers.push_back(0.5f * (b.min_x + b.max_x));
        if (const auto y = detail_retarget::lowest_ankle_y(seq.frames[i].keypoints)) ankles.push_back(*y);
    }
    if (heights.empty()) throw ConfigError("compute_skeleton_stats: no usable frames in the requested split");
    SkeletonStats s;
    s.median_height = detail_retarget::median(heights);
    s.median_width = detail_retarget::median(widths);
    s.median_center_x = detail_retarget::median(centers);
    s.ground_y = detail_retarget::median(ankles.empty() ? heights : ankles);
    return s;
}

// ---------------------------------------------------------------------------
// Single-skeleton alignment: scale x/y so the source bbox matches the target
// medians, then translate vertically so the lowest ankle sits on the ground
// line. Falls back to height-only scaling when both ankles are missing.
// ---------------------------------------------------------------------------

struct AlignResult {
    KeypointSet keypoints;
    bool ankle_fallback = false;
};

inline AlignResult align_skeleton(const KeypointSet& source, const SkeletonStats& target_stats, float ground_y) {
    const auto b = detail_retarget::visible_bbox(source);
    if (b.visible < 2) throw ConfigError("align_skeleton: fewer than two visible joints");
    const float w_src = b.max_x - b.min_x, h_src = b.max_y - b.min_y;
    if (h_src <= 0.0f) throw ConfigError("align_skeleton: degenerate source skeleton");
    AlignResult out;
    const float sy = target_stats.median_height / h_src;
    float sx = w_src > 0.0f ? target_stats.median_width / w_src : sy;
    const auto ankle = detail_retarget::lowest_ankle_y(source);
    if (!ankle) {
        out.ankle_fallback = true;
        sx = sy;  // height-only alignment
    }
    const float cx = 0.5f * (b.min_x + b.max_x);
    const float cy = 0.5f * (b.min_y + b.max_y);
    out.keypoints = source;
    auto map_pt = [&](float x, float y) {
        return std::pair<float, float>{cx + (x - cx) * sx, cy + (y - cy) * sy};
    };
    for (auto& j : out.keypoints.joints) {
        const auto [x, y] = map_pt(j.x, j.y);
        j.x = x;
        j.y = y;
    }
    for (auto* list : {&out.keypoints.face, &out.keypoints.hands})
        for (auto& p : *list) {
            const auto [x, y] = map_pt(p.x, p.y);
            p.x = x;
            p.y = y;
        }
    // vertical placement: lowest ankle (or bbox bottom under fallback) on the ground line
    float anchor;
    if (ankle) {
        anchor = cy + (*ankle - cy) * sy;
    } else {
        anchor = cy + (b.max_y - cy) * sy;
    }
    const float ty = ground_y - anchor;
    for (auto& j : out.keypoints.joints) j.y += ty;
    for (auto* list : {&out.keypoints.face, &out.keypoints.hands})
        for (auto& p : *list) p.y += ty;
    return out;
}

// One global affine transform per sequence (stable against per-frame noise);
// the per-frame variant applies align_skeleton independently to each frame.
struct GlobalAlign {
    float sx = 1.0f, sy = 1.0f, bx = 0.0f, by = 0.0f;

    void apply(KeypointSet& kp) const {
        for (auto& j : kp.joints) {
            j.x = sx * j.x + bx;
            j.y = sy * j.y + by;
        }
        for (auto* list : {&kp.face, &kp.hands})
            for (auto& p : *list) {
                p.x = sx * p.x + bx;
                p.y = sy * p.y + by;
            }
    }
};

inline GlobalAlign compute_global_align(const SequenceDataset& source, const SkeletonStats& target_stats,
                                        float ground_y) {
    std::vector<float> heights, widths, centers, ankles;
    for (const auto& f : source.frames) {
        const auto b = detail_retarget::visible_bbox(f.keypoints);
        if (b.visible < 2) continue;
        heights.push_back(b.max_y - b.min_y);
        widths.push_back(b.max_x - b.min_x);
        centers.push_back(0.5f * (b.min_x + b.max_x));
        if (const auto y = detail_retarget::lowest_ankle_y(f.keypoints)) ankles.push_back(*y);
    }
    if (heights.empty()) throw ConfigError("compute_global_align: no usable source frames");
    GlobalAlign g;
    const float h_src = detail_retarget::median(heights);
    const float w_src = detail_retarget::median(widths);
    g.sy = target_stats.median_height / h_src;
    g.sx = w_src > 0.0f ? target_stats.median_width / w_src : g.sy;
    const float anchor_y = ankles.empty() ? 0.0f : detail_retarget::median(ankles);
    g.by = ground_y - g.sy * (ankles.empty() ? h_src : anchor_y);
    g.bx = target_stats.median_center_x - g.sx * detail_retarget::median(centers);
    return g;
}

// Warp an image-like tensor by the same affine transform (nearest neighbor so
// exact class values like DenseUV part codes survive).
inline Tensor warp_affine_nearest(const Tensor& img, const GlobalAlign& g) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor out({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            // inverse map: source pixel that lands here
            const int sxp = int(std::lround((float(x) - g.bx) / g.sx));
            const int syp = int(std::lround((float(y) - g.by) / g.sy));
            if (sxp < 0 || sxp >= w || syp < 0 || syp >= h) continue;
            for (int ch = 0; ch < c; ++ch) out.at(ch, y, x) = img.at(ch, syp, sxp);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor baseline: L2 pose distance over joints visible in both
// sets, renormalized by the common-joint count; ties break to the lower index.
// ---------------------------------------------------------------------------

inline size_t nearest_neighbor_baseline(const KeypointSet& query, const SequenceDataset& train_seq) {
    double best = 0.0;
    int64_t best_idx = -1;
    for (size_t i = 0; i < train_seq.size(); ++i) {
        if (train_seq.tag(i) != SplitTag::train) continue;
        const KeypointSet& t = train_seq.frames[i].keypoints;
        double s = 0.0;
        int common = 0;
        for (const auto& qj : query.joints) {
            if (qj.c <= 0.0f) continue;
            const int ti = t.find(qj.name);
            if (ti < 0 || t.joints[size_t(ti)].c <= 0.0f) continue;
            const double dx = double(qj.x) - double(t.joints[size_t(ti)].x);
            const double dy = double(qj.y) - double(t.joints[size_t(ti)].y);
            s += dx * dx + dy * dy;
            ++common;
        }
        if (common == 0) continue;
        const double d = std::sqrt(s / double(common));
        if (best_idx < 0 || d < best) {
            best = d;
            best_idx = int64_t(i);
        }
    }
    if (best_idx < 0) throw ConfigError("nearest_neighbor_baseline: no train frame shares a visible joint with the query");
    return size_t(best_idx);
}

// ---------------------------------------------------------------------------
// Motion speed: average keypoint displacement between consecutive frames of
// height-1-normalized skeletons, averaged over all frame pairs. The Seq 8
// value of 0.006 is the 1.0x unit used by the dataset statistics table.
// ---------------------------------------------------------------------------

constexpr double kMotionSpeedUnit = 0.006;

inline double motion_speed(const SequenceDataset& seq) {
    if (seq.size() < 2) throw ConfigError("motion_speed needs at least two frames");
    double total = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i + 1 < seq.size(); ++i) {
        const KeypointSet& a = seq.frames[i].keypoints;
        const KeypointSet& b = seq.frames[i + 1].keypoints;
        const auto ba = detail_retarget::visible_bbox(a);
        const auto bb = detail_retarget::visible_bbox(b);
        if (ba.visible == 0 || bb.visible == 0) continue;  // pair dropped
        const float ha = ba.max_y - ba.min_y, hb = bb.max_y - bb.min_y;
        if (ha <= 0.0f || hb <= 0.0f) continue;
        double s = 0.0;
        int common = 0;
        for (const auto& ja : a.joints) {
            if (ja.c <= 0.0f) continue;
            const int ib = b.find(ja.name);
            if (ib < 0 || b.joints[size_t(ib)].c <= 0.0f) continue;
            const double dx = double(ja.x) / ha - double(b.joints[size_t(ib)].x) / hb;
            const double dy = double(ja.y) / ha - double(b.joints[size_t(ib)].y) / hb;
            s += std::sqrt(dx * dx + dy * dy);
            ++common;
        }
        if (common == 0) continue;
        total += s / double(common);
        ++pairs;
    }
    return pairs ? total / double(pairs) : 0.0;
}

inline double motion_speed_ratio(double speed) { return speed / kMotionSpeedUnit; }

}  // namespace dynamo
