#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "dynamo/common.hpp"

namespace dynamo {

struct Landmark {
    std::string name;
    float x = 0.0f;  // pixels
    float y = 0.0f;  // pixels
    float c = 0.0f;  // confidence in [0,1]; 0 means missing
};

// Per-frame 2D keypoint detections. Joint order is fixed and identical across
// all frames of a dataset; missing detections carry confidence 0.
struct KeypointSet {
    std::vector<Landmark> joints;
    std::vector<Landmark> face;
    std::vector<Landmark> hands;

    int find(const std::string& name) const {
        for (size_t i = 0; i < joints.size(); ++i)
            if (joints[i].name == name) return int(i);
        return -1;
    }
    bool visible(int idx, float thresh = 0.0f) const {
        return idx >= 0 && idx < int(joints.size()) && joints[size_t(idx)].c > thresh;
    }
};

inline bool all_dropped(const KeypointSet& kp) {
    for (const auto& j : kp.joints)
        if (j.c > 0.0f) return false;
    return true;
}

struct BoneDef {
    std::string a, b;
    std::array<float, 3> color;  // [0,1] RGB
};

// Deterministic keypoint rendering scheme. The drawing rules are fixed so the
// rasterization is exactly reproducible: anti-aliased bone segments with a
// per-bone palette, joints under the confidence threshold (and their incident
// bones) omitted, black background.
struct RasterStyle {
    std::vector<BoneDef> bones;
    float confidence_threshold = 0.05f;
    bool draw_landmarks = true;  // face/hand dots when present
    std::array<float, 3> landmark_color = {0.9f, 0.9f, 0.9f};

    static float line_width(int image_width) { return std::max(2.0f, float(image_width) / 256.0f); }

    static RasterStyle default_style();
};

// 16-joint figure used by the synthetic datasets and the default rendering.
inline const std::vector<std::string>& default_joint_names() {
    static const std::vector<std::string> names = {
        "pelvis",     "spine",  "neck",    "head",        "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
        "r_elbow",    "r_wrist", "l_hip",  "l_knee",      "l_ankle",    "r_hip",   "r_knee",  "r_ankle"};
    return names;
}

inline RasterStyle RasterStyle::default_style() {
    RasterStyle s;
    s.bones = {
        {"pelvis", "spine", {0.85f, 0.10f, 0.10f}},  {"spine", "neck", {0.85f, 0.45f, 0.10f}},
        {"neck", "head", {0.85f, 0.80f, 0.10f}},     {"neck", "l_shoulder", {0.55f, 0.85f, 0.10f}},
        {"l_shoulder", "l_elbow", {0.10f, 0.85f, 0.20f}}, {"l_elbow", "l_wrist", {0.10f, 0.85f, 0.60f}},
        {"neck", "r_shoulder", {0.10f, 0.80f, 0.85f}},    {"r_shoulder", "r_elbow", {0.10f, 0.45f, 0.85f}},
        {"r_elbow", "r_wrist", {0.15f, 0.10f, 0.85f}},    {"pelvis", "l_hip", {0.50f, 0.10f, 0.85f}},
        {"l_hip", "l_knee", {0.85f, 0.10f, 0.80f}},       {"l_knee", "l_ankle", {0.85f, 0.10f, 0.45f}},
        {"pelvis", "r_hip", {0.60f, 0.60f, 0.85f}},       {"r_hip", "r_knee", {0.85f, 0.60f, 0.60f}},
        {"r_knee", "r_ankle", {0.60f, 0.85f, 0.60f}},
    };
    return s;
}

}  // namespace dynamo
