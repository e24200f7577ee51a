#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dynamo/dataset.hpp"
#include "dynamo/random.hpp"

namespace dynamo {

// ---------------------------------------------------------------------------
// Figure description
// ---------------------------------------------------------------------------

struct FigureJoint {
    std::string name;
    int parent = -1;       // index into joints; -1 for the pelvis root
    float rest_len = 0.0f; // normalized-height units
    float rest_dir = 0.0f; // radians, image coords (+x right, +y down)
};

enum class TextureId { plain, grid, glyphs, noise };

struct GarmentSpec {
    enum class Kind { none, skirt, cape } kind = Kind::skirt;
    int cols = 9;
    int rows = 6;
    float length = 0.40f;      // figure units
    float width_scale = 2.6f;  // relative to the anchor-joint span
    float stiffness = 40.0f;   // s^-2
    float damping = 6.0f;      // s^-1
    TextureId texture = TextureId::grid;
    std::array<float, 3> color = {0.92f, 0.16f, 0.10f};
};

struct BodyPart {
    std::string joint_a, joint_b;  // capsule along this bone
    float half_width = 0.03f;      // figure units
    std::array<float, 3> color = {0.5f, 0.5f, 0.5f};
    TextureId texture = TextureId::plain;
};

struct FigureSpec {
    std::vector<FigureJoint> joints;
    std::vector<BodyPart> parts;  // UV part index = position in this list + 1
    GarmentSpec garment;
    float height = 0.7f;        // pelvis-to-head chain length
    float head_radius = 0.095f; // figure units

    int joint_index(const std::string& name) const {
        for (size_t i = 0; i < joints.size(); ++i)
            if (joints[i].name == name) return int(i);
        throw ConfigError("FigureSpec: unknown joint '" + name + "'");
    }

    void validate() const {
        if (height <= 0.0f) throw ConfigError("FigureSpec: figure height must be positive");
        if (joints.empty() || joints[0].name != "pelvis" || joints[0].parent != -1)
            throw ConfigError("FigureSpec: joint 0 must be the pelvis root");
        for (size_t i = 1; i < joints.size(); ++i)
            if (joints[i].parent < 0 || joints[i].parent >= int(i))
                throw ConfigError("FigureSpec: bone graph must be a tree rooted at the pelvis");
        float sum = 0.0f;  // spine-to-head chain must sum to the declared height
        int j = joint_index("head");
        while (j != 0) {
            sum += joints[size_t(j)].rest_len;
            j = joints[size_t(j)].parent;
        }
        if (std::abs(sum - height) > 1e-5f)
            throw ConfigError("FigureSpec: spine-to-head rest lengths sum to " + std::to_string(sum) +
                              ", declared height is " + std::to_string(height));
    }

    static FigureSpec default_figure();
};

inline FigureSpec FigureSpec::default_figure() {
    const float up = -float(M_PI) / 2.0f, down = float(M_PI) / 2.0f;
    FigureSpec s;
    s.joints = {
        {"pelvis", -1, 0.0f, 0.0f},
        {"spine", 0, 0.25f, up},
        {"neck", 1, 0.25f, up},
        {"head", 2, 0.20f, up},
        {"l_shoulder", 2, 0.12f, 0.0f},
        {"l_elbow", 4, 0.18f, down + 0.35f},
        {"l_wrist", 5, 0.16f, down + 0.25f},
        {"r_shoulder", 2, 0.12f, float(M_PI)},
        {"r_elbow", 7, 0.18f, down - 0.35f},
        {"r_wrist", 8, 0.16f, down - 0.25f},
        {"l_hip", 0, 0.09f, 0.0f},
        {"l_knee", 10, 0.28f, down},
        {"l_ankle", 11, 0.26f, down},
        {"r_hip", 0, 0.09f, float(M_PI)},
        {"r_knee", 13, 0.28f, down},
        {"r_ankle", 14, 0.26f, down},
    };
    s.parts = {
        {"pelvis", "neck", 0.085f, {0.20f, 0.45f, 0.85f}, TextureId::glyphs},
        {"neck", "head", 0.0f, {0.80f, 0.72f, 0.55f}, TextureId::plain},  // head disc, uses head_radius
        {"l_shoulder", "l_elbow", 0.032f, {0.20f, 0.70f, 0.45f}, TextureId::plain},
        {"l_elbow", "l_wrist", 0.027f, {0.16f, 0.60f, 0.38f}, TextureId::plain},
        {"r_shoulder", "r_elbow", 0.032f, {0.15f, 0.55f, 0.75f}, TextureId::plain},
        {"r_elbow", "r_wrist", 0.027f, {0.12f, 0.47f, 0.65f}, TextureId::plain},
        {"l_hip", "l_knee", 0.045f, {0.45f, 0.45f, 0.52f}, TextureId::noise},
        {"l_knee", "l_ankle", 0.034f, {0.38f, 0.40f, 0.48f}, TextureId::plain},
        {"r_hip", "r_knee", 0.045f, {0.30f, 0.52f, 0.40f}, TextureId::noise},
        {"r_knee", "r_ankle", 0.034f, {0.28f, 0.44f, 0.36f}, TextureId::plain},
    };
    s.height = 0.70f;
    return s;
}

// ---------------------------------------------------------------------------
// Motion scripts: seeded sinusoid + random-walk angle tracks and a pelvis path.
// ---------------------------------------------------------------------------

struct ScriptParams {
    float limb_amplitude = 0.45f;
    float sway_amplitude = 0.10f;  // horizontal pelvis travel, scene units
    float bounce_amplitude = 0.015f;
    float min_hz = 0.25f, max_hz = 1.1f;
};

struct MotionScript {
    int fps = 24;
    int frame_count = 0;
    std::vector<std::vector<float>> angles;  // [frame][joint], radians
    std::vector<std::array<float, 2>> root;  // [frame] pelvis scene position in [0,1]^2

    static MotionScript generate(const FigureSpec& spec, int frames, int fps, uint64_t seed,
                                 const ScriptParams& prm = {});

    static MotionScript stationary(const FigureSpec& spec, int frames, int fps) {
        MotionScript s;
        s.fps = fps;
        s.frame_count = frames;
        s.angles.assign(size_t(frames), std::vector<float>(spec.joints.size(), 0.0f));
        s.root.assign(size_t(frames), {0.5f, 0.42f});
        return s;
    }
};

namespace detail {

inline float joint_angle_limit(const std::string& name) {
    if (name == "spine" || name == "neck") return 0.14f;
    if (name == "head") return 0.20f;
    if (name == "pelvis") return 0.05f;
    if (name.ends_with("shoulder") || name.ends_with("hip")) return 0.40f;
    if (name.ends_with("elbow") || name.ends_with("knee")) return 0.55f;
    return 0.35f;  // wrists/ankles
}

struct WalkTrack {  // piecewise-linear random walk through seeded knots
    std::vector<float> knots;
    int knot_spacing = 8;
    float eval(int frame) const {
        const float t = float(frame) / float(knot_spacing);
        const int i0 = std::min(int(t), int(knots.size()) - 2);
        const float u = std::min(t - float(i0), 1.0f);
        return knots[size_t(i0)] * (1.0f - u) + knots[size_t(i0) + 1] * u;
    }
};

}  // namespace detail

inline MotionScript MotionScript::generate(const FigureSpec& spec, int frames, int fps, uint64_t seed,
                                           const ScriptParams& prm) {
    MotionScript s;
    s.fps = fps;
    s.frame_count = frames;
    s.angles.assign(size_t(frames), std::vector<float>(spec.joints.size(), 0.0f));
    s.root.assign(size_t(frames), {0.5f, 0.42f});
    Rng master(seed);

    const int knot_spacing = std::max(4, fps / 2);
    for (size_t j = 0; j < spec.joints.size(); ++j) {
        Rng rng = master.child(100 + j);
        const float limit = detail::joint_angle_limit(spec.joints[j].name) * prm.limb_amplitude / 0.45f;
        struct Sine {
            float amp, hz, phase;
        };
        std::array<Sine, 2> sines;
        for (auto& sn : sines)
            sn = {limit * rng.uniform(0.25f, 0.55f), rng.uniform(prm.min_hz, prm.max_hz), rng.uniform(0.0f, 6.2831853f)};
        detail::WalkTrack walk;
        walk.knot_spacing = knot_spacing;
        walk.knots.resize(size_t(frames / knot_spacing + 2));
        for (auto& k : walk.knots) k = rng.normal(0.0f, limit * 0.30f);
        for (int f = 0; f < frames; ++f) {
            const float t = float(f) / float(fps);
            float a = walk.eval(f);
            for (const auto& sn : sines) a += sn.amp * std::sin(6.2831853f * sn.hz * t + sn.phase);
            s.angles[size_t(f)][j] = std::clamp(a, -limit, limit);
        }
    }
    {
        Rng rng = master.child(7);
        const float hz = rng.uniform(0.22f, 0.40f);
        const float phase = rng.uniform(0.0f, 6.2831853f);
        detail::WalkTrack walk;
        walk.knot_spacing = std::max(8, fps);
        walk.knots.resize(size_t(frames / walk.knot_spacing + 2));
        for (auto& k : walk.knots) k = rng.normal(0.0f, prm.sway_amplitude * 0.3f);
        const float bounce_hz = rng.uniform(0.8f, 1.4f), bounce_phase = rng.uniform(0.0f, 6.2831853f);
        for (int f = 0; f < frames; ++f) {
            const float t = float(f) / float(fps);
            const float x = 0.5f + prm.sway_amplitude * std::sin(6.2831853f * hz * t + phase) + walk.eval(f);
            const float y = 0.42f + prm.bounce_amplitude * std::sin(6.2831853f * bounce_hz * t + bounce_phase);
            s.root[size_t(f)] = {std::clamp(x, 0.28f, 0.72f), std::clamp(y, 0.38f, 0.46f)};
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Forward kinematics
// ---------------------------------------------------------------------------

struct SkeletonPose {
    std::vector<std::array<float, 2>> pos;  // pixels, one per joint
};

inline float figure_scale_px(int image_height) { return 0.56f * float(image_height) / 1.24f; }

inline SkeletonPose skeleton_at(const FigureSpec& spec, const MotionScript& script, int frame, int width, int height) {
    const float s = figure_scale_px(height);
    SkeletonPose out;
    out.pos.resize(spec.joints.size());
    std::vector<float> accum(spec.joints.size(), 0.0f);
    const auto& ang = script.angles.at(size_t(frame));
    const auto& root = script.root.at(size_t(frame));
    out.pos[0] = {root[0] * float(width), root[1] * float(height)};
    accum[0] = ang[0];
    for (size_t j = 1; j < spec.joints.size(); ++j) {
        const auto& joint = spec.joints[j];
        accum[j] = accum[size_t(joint.parent)] + ang[j];
        const float dir = joint.rest_dir + accum[j];
        const auto& pp = out.pos[size_t(joint.parent)];
        out.pos[j] = {pp[0] + joint.rest_len * s * std::cos(dir), pp[1] + joint.rest_len * s * std::sin(dir)};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Garment simulation: one damped spring chain per cloth column, anchored to a
// body line. The present shape depends on recent velocity history, which is
// exactly the signal the motion conditioning has to pick up. Columns are
// independent, so a stationary figure is a bitwise fixed point.
// ---------------------------------------------------------------------------

class GarmentSim {
public:
    GarmentSim(const GarmentSpec& spec, const std::vector<std::array<float, 2>>& anchors, float row_step_px)
        : spec_(spec), dr_(row_step_px) {
        pos_.assign(size_t(spec.rows) + 1, anchors);
        for (int r = 1; r <= spec_.rows; ++r)
            for (size_t c = 0; c < anchors.size(); ++c)
                pos_[size_t(r)][c] = {anchors[c][0], anchors[c][1] + dr_ * float(r)};
        vel_.assign(size_t(spec.rows) + 1, std::vector<std::array<float, 2>>(anchors.size(), {0.0f, 0.0f}));
    }

    void step(const std::vector<std::array<float, 2>>& anchors, float dt) {
        pos_[0] = anchors;
        const float k = spec_.stiffness;
        const float damp = std::max(0.0f, 1.0f - spec_.damping * dt);
        for (int r = 1; r <= spec_.rows; ++r) {
            auto& row = pos_[size_t(r)];
            const auto& above = pos_[size_t(r) - 1];
            auto& vrow = vel_[size_t(r)];
            for (size_t i = 0; i < row.size(); ++i) {
                const float ax = k * (above[i][0] - row[i][0]);
                const float ay = k * (above[i][1] + dr_ - row[i][1]);
                vrow[i][0] = (vrow[i][0] + dt * ax) * damp;
                vrow[i][1] = (vrow[i][1] + dt * ay) * damp;
                row[i][0] += dt * vrow[i][0];
                row[i][1] += dt * vrow[i][1];
                const float dx = row[i][0] - above[i][0], dy = row[i][1] - above[i][1];
                const float len = std::sqrt(dx * dx + dy * dy);
                const float lo = 0.55f * dr_, hi = 1.70f * dr_;
                if (len > hi || (len < lo && len > 0.0f)) {  // stretch clamp
                    const float want = len > hi ? hi : lo;
                    row[i][0] = above[i][0] + dx / len * want;
                    row[i][1] = above[i][1] + dy / len * want;
                }
            }
        }
    }

    const std::vector<std::vector<std::array<float, 2>>>& nodes() const { return pos_; }

    std::array<float, 2> centroid() const {
        double sx = 0.0, sy = 0.0;
        int n = 0;
        for (size_t r = 1; r < pos_.size(); ++r)
            for (const auto& p : pos_[r]) {
                sx += p[0];
                sy += p[1];
                ++n;
            }
        return {float(sx / double(n)), float(sy / double(n))};
    }

private:
    GarmentSpec spec_;
    float dr_;
    std::vector<std::vector<std::array<float, 2>>> pos_;  // [row][col], row 0 = anchors
    std::vector<std::vector<std::array<float, 2>>> vel_;
};

inline std::vector<std::array<float, 2>> garment_anchors(const FigureSpec& spec, const GarmentSpec& g,
                                                         const SkeletonPose& sk) {
    const char* ja = g.kind == GarmentSpec::Kind::cape ? "l_shoulder" : "l_hip";
    const char* jb = g.kind == GarmentSpec::Kind::cape ? "r_shoulder" : "r_hip";
    const auto& a = sk.pos[size_t(spec.joint_index(ja))];
    const auto& b = sk.pos[size_t(spec.joint_index(jb))];
    const float cx = 0.5f * (a[0] + b[0]), cy = 0.5f * (a[1] + b[1]);
    const float ex = (b[0] - a[0]) * 0.5f * g.width_scale, ey = (b[1] - a[1]) * 0.5f * g.width_scale;
    std::vector<std::array<float, 2>> anchors(size_t(g.cols));
    for (int c = 0; c < g.cols; ++c) {
        const float u = g.cols > 1 ? float(c) / float(g.cols - 1) * 2.0f - 1.0f : 0.0f;
        anchors[size_t(c)] = {cx + u * ex, cy + u * ey};
    }
    return anchors;
}

// ---------------------------------------------------------------------------
// Procedural textures (deterministic)
// ---------------------------------------------------------------------------

namespace detail {

inline uint32_t hash_u32(uint32_t x) {
    x ^= x >> 16;
    x *= 0x7feb352dU;
    x ^= x >> 15;
    x *= 0x846ca68bU;
    x ^= x >> 16;
    return x;
}
inline float hash01(int x, int y, uint32_t salt) {
    return float(hash_u32(uint32_t(x) * 0x9E3779B1U ^ uint32_t(y) * 0x85EBCA77U ^ salt) & 0xFFFFFF) / float(0xFFFFFF);
}

inline std::array<float, 3> sample_texture(TextureId id, float u, float v, const std::array<float, 3>& base,
                                           uint32_t salt) {
    auto mix = [](const std::array<float, 3>& a, const std::array<float, 3>& b, float t) {
        return std::array<float, 3>{a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
    };
    switch (id) {
        case TextureId::plain:
            return base;
        case TextureId::grid: {
            const float fu = u * 6.0f - std::floor(u * 6.0f);
            const float fv = v * 6.0f - std::floor(v * 6.0f);
            return (fu < 0.18f || fv < 0.18f) ? mix(base, {0.96f, 0.96f, 0.96f}, 0.85f) : base;
        }
        case TextureId::glyphs: {
            const int cx = int(std::floor(u * 10.0f)), cy = int(std::floor(v * 14.0f));
            const bool on = (hash_u32(uint32_t(cx) * 0x9E3779B1U ^ uint32_t(cy) * 0x85EBCA77U ^ salt) >> 3) % 3 == 0;
            return on ? mix(base, {0.02f, 0.02f, 0.02f}, 0.8f) : mix(base, {1.0f, 1.0f, 1.0f}, 0.25f);
        }
        case TextureId::noise: {
            const float gu = u * 6.0f, gv = v * 6.0f;
            const int iu = int(std::floor(gu)), iv = int(std::floor(gv));
            const float fu = gu - float(iu), fv = gv - float(iv);
            const float n00 = hash01(iu, iv, salt), n10 = hash01(iu + 1, iv, salt);
            const float n01 = hash01(iu, iv + 1, salt), n11 = hash01(iu + 1, iv + 1, salt);
            const float n = n00 * (1 - fu) * (1 - fv) + n10 * fu * (1 - fv) + n01 * (1 - fu) * fv + n11 * fu * fv;
            return {base[0] * (0.45f + 0.55f * n), base[1] * (0.45f + 0.55f * n), base[2] * (0.45f + 0.55f * n)};
        }
    }
    return base;
}

// Painters. RGB canvases are written with painter's order (later wins); the
// UV canvas stores exact (I,U,V) triplets so class values never blend.

struct Canvas {
    Tensor* rgb = nullptr;   // [3,H,W]
    Tensor* mask = nullptr;  // optional [1,H,W]
    int w() const { return rgb->dim(2); }
    int h() const { return rgb->dim(1); }
    void put(int x, int y, const std::array<float, 3>& c) {
        rgb->at(0, y, x) = c[0];
        rgb->at(1, y, x) = c[1];
        rgb->at(2, y, x) = c[2];
        if (mask) mask->at(0, y, x) = 1.0f;
    }
};

template <typename ColorFn>
inline void paint_capsule(Canvas cv, float ax, float ay, float bx, float by, float hw, ColorFn&& fn) {
    const int x0 = std::max(0, int(std::floor(std::min(ax, bx) - hw)));
    const int x1 = std::min(cv.w() - 1, int(std::ceil(std::max(ax, bx) + hw)));
    const int y0 = std::max(0, int(std::floor(std::min(ay, by) - hw)));
    const int y1 = std::min(cv.h() - 1, int(std::ceil(std::max(ay, by) + hw)));
    const float abx = bx - ax, aby = by - ay;
    const float len2 = abx * abx + aby * aby;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const float px = float(x) + 0.5f, py = float(y) + 0.5f;
            float t = len2 > 0.0f ? ((px - ax) * abx + (py - ay) * aby) / len2 : 0.0f;
            t = std::clamp(t, 0.0f, 1.0f);
            const float qx = ax + t * abx, qy = ay + t * aby;
            const float dx = px - qx, dy = py - qy;
            const float d2 = dx * dx + dy * dy;
            if (d2 > hw * hw) continue;
            // across-bone coordinate from the signed perpendicular distance
            float s = 0.5f;
            if (len2 > 0.0f && hw > 0.0f) {
                const float cross = (px - ax) * aby - (py - ay) * abx;
                s = std::clamp(cross / std::sqrt(len2) / hw * 0.5f + 0.5f, 0.0f, 1.0f);
            } else if (hw > 0.0f) {
                s = std::clamp(std::sqrt(d2) / hw, 0.0f, 1.0f);
            }
            cv.put(x, y, fn(t, s));
        }
}

template <typename ColorFn>
inline void paint_triangle(Canvas cv, const std::array<float, 2>& p0, const std::array<float, 2>& p1,
                           const std::array<float, 2>& p2, const std::array<float, 2>& uv0,
                           const std::array<float, 2>& uv1, const std::array<float, 2>& uv2, ColorFn&& fn) {
    const float area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
    if (area == 0.0f) return;
    const int x0 = std::max(0, int(std::floor(std::min({p0[0], p1[0], p2[0]}))));
    const int x1 = std::min(cv.w() - 1, int(std::ceil(std::max({p0[0], p1[0], p2[0]}))));
    const int y0 = std::max(0, int(std::floor(std::min({p0[1], p1[1], p2[1]}))));
    const int y1 = std::min(cv.h() - 1, int(std::ceil(std::max({p0[1], p1[1], p2[1]}))));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const float px = float(x) + 0.5f, py = float(y) + 0.5f;
            const float w0 = ((p1[0] - px) * (p2[1] - py) - (p1[1] - py) * (p2[0] - px)) / area;
            const float w1 = ((p2[0] - px) * (p0[1] - py) - (p2[1] - py) * (p0[0] - px)) / area;
            const float w2 = 1.0f - w0 - w1;
            if (w0 < 0.0f || w1 < 0.0f || w2 < 0.0f) continue;
            const float u = w0 * uv0[0] + w1 * uv1[0] + w2 * uv2[0];
            const float v = w0 * uv0[1] + w1 * uv1[1] + w2 * uv2[1];
            cv.put(x, y, fn(u, v));
        }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sequence rendering
// ---------------------------------------------------------------------------

struct RenderResult {
    SequenceDataset dataset;
    std::vector<Tensor> garment_mask;  // [1,H,W] per frame, 0/1
    std::vector<Tensor> figure_mask;   // [1,H,W] per frame, body+garment
};

// Renders the figure as filled textured capsules plus the simulated garment.
// Emits exact keypoints and a synthetic IUV map (part index / num-parts in
// channel 0, part-local coordinates in channels 1-2). The garment appears in
// the RGB frames only: pose inputs carry body information alone, so garment
// appearance must be inferred from motion downstream.
inline RenderResult render_sequence(const FigureSpec& spec, const MotionScript& script, int width, int height) {
    spec.validate();
    if (script.frame_count <= 0 || int(script.angles.size()) < script.frame_count)
        throw ConfigError("render_sequence: empty or inconsistent MotionScript");

    const int ss = 2;  // supersampling factor for RGB
    const float scale = figure_scale_px(height);
    const float dt = 1.0f / float(script.fps);
    const int n_parts = int(spec.parts.size());

    // sequential simulation pre-pass: skeletons + garment states
    std::vector<SkeletonPose> skeletons(size_t(script.frame_count));
    for (int f = 0; f < script.frame_count; ++f) skeletons[size_t(f)] = skeleton_at(spec, script, f, width, height);

    std::vector<std::vector<std::vector<std::array<float, 2>>>> garment_frames;
    if (spec.garment.kind != GarmentSpec::Kind::none) {
        const float row_step = spec.garment.length * scale / float(spec.garment.rows);
        GarmentSim sim(spec.garment, garment_anchors(spec, spec.garment, skeletons[0]), row_step);
        garment_frames.reserve(size_t(script.frame_count));
        garment_frames.push_back(sim.nodes());
        for (int f = 1; f < script.frame_count; ++f) {
            sim.step(garment_anchors(spec, spec.garment, skeletons[size_t(f)]), dt);
            garment_frames.push_back(sim.nodes());
        }
    }

    RenderResult out;
    out.dataset.fps = script.fps;
    out.dataset.frames.resize(size_t(script.frame_count));
    out.garment_mask.resize(size_t(script.frame_count));
    out.figure_mask.resize(size_t(script.frame_count));

    // painter order: far-side limbs, torso, head, near-side limbs, garment
    const std::array<int, 10> order = {4, 5, 8, 9, 0, 1, 6, 7, 2, 3};

    for (int f = 0; f < script.frame_count; ++f) {
        const SkeletonPose& sk = skeletons[size_t(f)];
        Tensor rgb_hi({3, height * ss, width * ss});
        Tensor fig_hi({1, height * ss, width * ss});
        Tensor uv({3, height, width});
        Tensor gmask({1, height, width});
        Tensor fmask({1, height, width});

        for (int oi : order) {
            const BodyPart& part = spec.parts[size_t(oi)];
            const int part_idx = oi + 1;
            const auto& a = sk.pos[size_t(spec.joint_index(part.joint_a))];
            const auto& b = sk.pos[size_t(spec.joint_index(part.joint_b))];
            const bool is_head = part.joint_b == "head";
            const float hw = (is_head ? spec.head_radius : part.half_width) * scale;
            const float ax = is_head ? b[0] : a[0], ay = is_head ? b[1] : a[1];
            const float bx = b[0], by = b[1];
            const uint32_t salt = uint32_t(part_idx) * 0x1000193U;
            auto tex = [&](float u, float v) { return detail::sample_texture(part.texture, u, v, part.color, salt); };
            detail::paint_capsule(detail::Canvas{&rgb_hi, &fig_hi}, ax * ss, ay * ss, bx * ss, by * ss, hw * float(ss),
                                  tex);
            const float iv = float(part_idx) / float(n_parts);
            auto uv_fn = [&](float u, float v) { return std::array<float, 3>{iv, u, v}; };
            detail::paint_capsule(detail::Canvas{&uv, &fmask}, ax, ay, bx, by, hw, uv_fn);
        }

        if (spec.garment.kind != GarmentSpec::Kind::none) {
            const auto& nodes = garment_frames[size_t(f)];
            const int rows = spec.garment.rows, cols = spec.garment.cols;
            const uint32_t salt = 0xC10FU;
            auto tex = [&](float u, float v) {
                return detail::sample_texture(spec.garment.texture, u, v, spec.garment.color, salt);
            };
            auto quad = [&](detail::Canvas cv, float sf, int r, int c, auto&& fn) {
                const std::array<float, 2> p00 = {nodes[size_t(r)][size_t(c)][0] * sf, nodes[size_t(r)][size_t(c)][1] * sf};
                const std::array<float, 2> p01 = {nodes[size_t(r)][size_t(c) + 1][0] * sf,
                                                  nodes[size_t(r)][size_t(c) + 1][1] * sf};
                const std::array<float, 2> p10 = {nodes[size_t(r) + 1][size_t(c)][0] * sf,
                                                  nodes[size_t(r) + 1][size_t(c)][1] * sf};
                const std::array<float, 2> p11 = {nodes[size_t(r) + 1][size_t(c) + 1][0] * sf,
                                                  nodes[size_t(r) + 1][size_t(c) + 1][1] * sf};
                const float u0 = float(c) / float(cols - 1), u1 = float(c + 1) / float(cols - 1);
                const float v0 = float(r) / float(rows), v1 = float(r + 1) / float(rows);
                detail::paint_triangle(cv, p00, p01, p11, {u0, v0}, {u1, v0}, {u1, v1}, fn);
                detail::paint_triangle(cv, p00, p11, p10, {u0, v0}, {u1, v1}, {u0, v1}, fn);
            };
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols - 1; ++c) {
                    quad(detail::Canvas{&rgb_hi, &fig_hi}, float(ss), r, c, tex);
                    Tensor dummy({3, height, width});  // garment is excluded from the UV map
                    quad(detail::Canvas{&dummy, &gmask}, 1.0f, r, c, [](float, float) {
                        return std::array<float, 3>{0, 0, 0};
                    });
                }
        }

        // downsample the supersampled RGB, quantize to the 8-bit grid, map to [-1,1]
        Frame& frame = out.dataset.frames[size_t(f)];
        frame.image = Tensor({3, height, width});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    float acc = 0.0f;
                    for (int dy = 0; dy < ss; ++dy)
                        for (int dx = 0; dx < ss; ++dx) acc += rgb_hi.at(c, y * ss + dy, x * ss + dx);
                    float v01 = acc / float(ss * ss);
                    v01 = std::floor(std::clamp(v01, 0.0f, 1.0f) * 255.0f + 0.5f) / 255.0f;
                    frame.image.at(c, y, x) = v01 * 2.0f - 1.0f;
                }
        // quantize the UV map the same way so memory and disk agree bit-exactly
        quantize8(uv);
        frame.uv.data = std::move(uv);

        frame.keypoints.joints.resize(spec.joints.size());
        for (size_t j = 0; j < spec.joints.size(); ++j)
            frame.keypoints.joints[j] = {spec.joints[j].name, sk.pos[j][0], sk.pos[j][1], 1.0f};

        // figure mask also covers the supersampled body footprint + garment
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                float m = fmask.at(0, y, x) + gmask.at(0, y, x);
                for (int dy = 0; dy < ss && m == 0.0f; ++dy)
                    for (int dx = 0; dx < ss && m == 0.0f; ++dx) m = fig_hi.at(0, y * ss + dy, x * ss + dx);
                fmask.at(0, y, x) = m > 0.0f ? 1.0f : 0.0f;
            }
        out.garment_mask[size_t(f)] = std::move(gmask);
        out.figure_mask[size_t(f)] = std::move(fmask);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pose corruption: mimics single-image estimator artifacts (temporal jitter,
// missing parts/limbs, left/right mislabels). Ground-truth RGB frames are
// never touched. The UV half of the pose input is corrupted as well (whole-map
// jitter shift + part dropout) unless corrupt_uv is cleared.
// ---------------------------------------------------------------------------

struct CorruptionConfig {
    float jitter_sigma = 0.0f;  // pixels
    float dropout_prob = 0.0f;  // per joint and per limb chain
    float swap_prob = 0.0f;     // per left/right joint pair
    uint64_t seed = 0;
    bool corrupt_uv = true;

    void validate() const {
        if (jitter_sigma < 0.0f) throw ConfigError("CorruptionConfig: jitter_sigma must be >= 0");
        for (float p : {dropout_prob, swap_prob})
            if (p < 0.0f || p > 1.0f) throw ConfigError("CorruptionConfig: probabilities must lie in [0,1]");
    }
};

namespace detail {

inline const std::vector<std::vector<const char*>>& limb_chains() {
    static const std::vector<std::vector<const char*>> chains = {
        {"l_shoulder", "l_elbow", "l_wrist"},
        {"r_shoulder", "r_elbow", "r_wrist"},
        {"l_hip", "l_knee", "l_ankle"},
        {"r_hip", "r_knee", "r_ankle"},
    };
    return chains;
}

inline const std::vector<std::pair<const char*, const char*>>& lr_pairs() {
    static const std::vector<std::pair<const char*, const char*>> pairs = {
        {"l_shoulder", "r_shoulder"}, {"l_elbow", "r_elbow"}, {"l_wrist", "r_wrist"},
        {"l_hip", "r_hip"},           {"l_knee", "r_knee"},   {"l_ankle", "r_ankle"},
    };
    return pairs;
}

inline Tensor shifted_uv(const Tensor& uv, int dx, int dy) {
    Tensor out({3, uv.dim(1), uv.dim(2)});
    const int h = uv.dim(1), w = uv.dim(2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int sx = x - dx, sy = y - dy;
            if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = uv.at(c, sy, sx);
        }
    return out;
}

}  // namespace detail

inline SequenceDataset corrupt_poses(const SequenceDataset& seq, const CorruptionConfig& cfg) {
    cfg.validate();
    SequenceDataset out = seq;
    const bool any = cfg.jitter_sigma > 0.0f || cfg.dropout_prob > 0.0f || cfg.swap_prob > 0.0f;
    if (!any) return out;
    Rng master(cfg.seed);
    for (size_t i = 0; i < out.frames.size(); ++i) {
        Rng rng = master.child(i);
        KeypointSet& kp = out.frames[i].keypoints;
        auto jitter_all = [&](std::vector<Landmark>& pts) {
            if (cfg.jitter_sigma <= 0.0f) return;
            for (auto& p : pts) {
                p.x += rng.normal(0.0f, cfg.jitter_sigma);
                p.y += rng.normal(0.0f, cfg.jitter_sigma);
            }
        };
        jitter_all(kp.joints);
        jitter_all(kp.face);
        jitter_all(kp.hands);
        if (cfg.swap_prob > 0.0f)
            for (const auto& [l, r] : detail::lr_pairs()) {
                const int il = kp.find(l), ir = kp.find(r);
                if (il < 0 || ir < 0) continue;
                if (rng.bernoulli(cfg.swap_prob)) {
                    std::swap(kp.joints[size_t(il)].x, kp.joints[size_t(ir)].x);
                    std::swap(kp.joints[size_t(il)].y, kp.joints[size_t(ir)].y);
                    std::swap(kp.joints[size_t(il)].c, kp.joints[size_t(ir)].c);
                }
            }
        if (cfg.dropout_prob > 0.0f) {
            for (auto& p : kp.joints)
                if (rng.bernoulli(cfg.dropout_prob)) p.c = 0.0f;
            for (auto& p : kp.face)
                if (rng.bernoulli(cfg.dropout_prob)) p.c = 0.0f;
            for (auto& p : kp.hands)
                if (rng.bernoulli(cfg.dropout_prob)) p.c = 0.0f;
            for (const auto& chain : detail::limb_chains())
                if (rng.bernoulli(cfg.dropout_prob))
                    for (const char* name : chain) {
                        const int idx = kp.find(name);
                        if (idx >= 0) kp.joints[size_t(idx)].c = 0.0f;
                    }
        }
        if (cfg.corrupt_uv) {
            Tensor& uv = out.frames[i].uv.data;
            if (cfg.jitter_sigma > 0.0f) {
                const int dx = int(std::lround(rng.normal(0.0f, cfg.jitter_sigma)));
                const int dy = int(std::lround(rng.normal(0.0f, cfg.jitter_sigma)));
                if (dx != 0 || dy != 0) uv = detail::shifted_uv(uv, dx, dy);
            }
            if (cfg.dropout_prob > 0.0f) {
                std::vector<float> codes;  // distinct part codes, sorted for determinism
                for (int64_t k = 0; k < int64_t(uv.dim(1)) * uv.dim(2); ++k) {
                    const float v = uv[k];
                    if (v > 0.0f && std::find(codes.begin(), codes.end(), v) == codes.end()) codes.push_back(v);
                }
                std::sort(codes.begin(), codes.end());
                for (float code : codes)
                    if (rng.bernoulli(cfg.dropout_prob)) {
                        const int h = uv.dim(1), w = uv.dim(2);
                        for (int y = 0; y < h; ++y)
                            for (int x = 0; x < w; ++x)
                                if (uv.at(0, y, x) == code) {
                                    uv.at(0, y, x) = 0.0f;
                                    uv.at(1, y, x) = 0.0f;
                                    uv.at(2, y, x) = 0.0f;
                                }
                    }
            }
        }
    }
    return out;
}

}  // namespace dynamo
