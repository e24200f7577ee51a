#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynamo/image_io.hpp"
#include "dynamo/signature.hpp"

namespace dynamo {

enum class SplitTag { train, gap, test };

enum class BoundaryPolicy { clamp, error };

struct Frame {
    Tensor image;  // [3,H,W] in [-1,1]
    KeypointSet keypoints;
    DenseUVMap uv;
};

// Ordered, consecutive frames at a fixed fps with per-frame split tags.
struct SequenceDataset {
    std::vector<Frame> frames;
    int fps = 24;
    std::vector<SplitTag> split;  // empty means "all train"

    size_t size() const { return frames.size(); }
    int width() const { return frames.empty() ? 0 : frames[0].image.dim(2); }
    int height() const { return frames.empty() ? 0 : frames[0].image.dim(1); }

    SplitTag tag(size_t i) const { return split.empty() ? SplitTag::train : split.at(i); }

    std::vector<size_t> indices_with_tag(SplitTag t) const {
        std::vector<size_t> out;
        for (size_t i = 0; i < frames.size(); ++i)
            if (tag(i) == t) out.push_back(i);
        return out;
    }

    // First n frames as an independent dataset (tags reset).
    SequenceDataset prefix(size_t n) const {
        SequenceDataset d;
        d.fps = fps;
        d.frames.assign(frames.begin(), frames.begin() + std::min(n, frames.size()));
        return d;
    }
};

// 85% train / 5% gap / 10% test, in temporal order (floor arithmetic on the
// first two segments, remainder is test).
inline SequenceDataset split_dataset(SequenceDataset seq) {
    const size_t n = seq.frames.size();
    if (n < 40) throw ConfigError("split_dataset: sequence too short (" + std::to_string(n) + " < 40 frames)");
    const size_t n_train = size_t(0.85 * double(n));
    const size_t n_gap = size_t(0.05 * double(n));
    seq.split.assign(n, SplitTag::test);
    for (size_t i = 0; i < n_train; ++i) seq.split[i] = SplitTag::train;
    for (size_t i = n_train; i < n_train + n_gap; ++i) seq.split[i] = SplitTag::gap;
    return seq;
}

inline PoseSignature pose_signature_of(const SequenceDataset& seq, size_t i, const RasterStyle& style) {
    const Frame& f = seq.frames.at(i);
    return build_pose_signature(f.uv, f.keypoints, style);
}

namespace detail {
inline size_t resolve_offset(int64_t want, size_t len, BoundaryPolicy policy, const char* what) {
    if (want >= 0 && want < int64_t(len)) return size_t(want);
    if (policy == BoundaryPolicy::error)
        throw ShapeError(std::string(what) + ": frame index " + std::to_string(want) + " outside sequence");
    return want < 0 ? 0 : len - 1;
}
}  // namespace detail

// Stack the pose signatures of the past frames i-offset[k], nearest first.
// Out-of-range indices clamp to frame 0 under the default policy.
inline MotionSignature build_motion_signature(const SequenceDataset& seq, size_t i, const RasterStyle& style,
                                              const std::vector<int>& offsets = default_motion_offsets(),
                                              BoundaryPolicy policy = BoundaryPolicy::clamp) {
    if (i >= seq.size()) throw ShapeError("build_motion_signature: index out of range");
    MotionSignature m;
    m.data = Tensor({int(6 * offsets.size()), seq.height(), seq.width()});
    for (size_t k = 0; k < offsets.size(); ++k) {
        const size_t src = detail::resolve_offset(int64_t(i) - offsets[k], seq.size(), policy, "build_motion_signature");
        const PoseSignature p = pose_signature_of(seq, src, style);
        std::copy(p.data.data(), p.data.data() + p.data.numel(), m.data.data() + int64_t(k) * p.data.numel());
    }
    return m;
}

// Motion signature hallucinated from the future frames in reverse order:
// block k holds the pose signature of frame i+offset[k].
inline MotionSignature backward_motion_signature(const SequenceDataset& seq, size_t i, const RasterStyle& style,
                                                 const std::vector<int>& offsets = default_motion_offsets(),
                                                 BoundaryPolicy policy = BoundaryPolicy::clamp) {
    if (i >= seq.size()) throw ShapeError("backward_motion_signature: index out of range");
    MotionSignature m;
    m.data = Tensor({int(6 * offsets.size()), seq.height(), seq.width()});
    for (size_t k = 0; k < offsets.size(); ++k) {
        const size_t src = detail::resolve_offset(int64_t(i) + offsets[k], seq.size(), policy, "backward_motion_signature");
        const PoseSignature p = pose_signature_of(seq, src, style);
        std::copy(p.data.data(), p.data.data() + p.data.numel(), m.data.data() + int64_t(k) * p.data.numel());
    }
    return m;
}

// Precomputed per-frame pose signatures; training touches each frame many times.
class SignatureCache {
public:
    SignatureCache(const SequenceDataset& seq, const RasterStyle& style) : seq_(&seq) {
        sigs_.reserve(seq.size());
        for (size_t i = 0; i < seq.size(); ++i) sigs_.push_back(pose_signature_of(seq, i, style));
    }

    const PoseSignature& pose(size_t i) const { return sigs_.at(i); }

    MotionSignature motion(size_t i, const std::vector<int>& offsets, BoundaryPolicy policy = BoundaryPolicy::clamp,
                           bool backward = false) const {
        MotionSignature m;
        m.data = Tensor({int(6 * offsets.size()), seq_->height(), seq_->width()});
        for (size_t k = 0; k < offsets.size(); ++k) {
            const int64_t want = backward ? int64_t(i) + offsets[k] : int64_t(i) - offsets[k];
            const size_t src = detail::resolve_offset(want, seq_->size(), policy, "SignatureCache::motion");
            const Tensor& p = sigs_[src].data;
            std::copy(p.data(), p.data() + p.numel(), m.data.data() + int64_t(k) * p.numel());
        }
        return m;
    }

private:
    const SequenceDataset* seq_;
    std::vector<PoseSignature> sigs_;
};

// ---------------------------------------------------------------------------
// On-disk layout:
//   frames/%06d.png      RGB, 8-bit
//   keypoints/%06d.json  {"joints":[{"name","x","y","c"}],"face":[...],"hands":[...]}
//   densepose/%06d.png   IUV as 8-bit RGB
//   meta.json            {"fps","width","height"}
// ---------------------------------------------------------------------------

namespace detail {
inline std::string frame_name(size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu%s", i, ext);
    return buf;
}
inline nlohmann::json landmarks_to_json(const std::vector<Landmark>& pts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : pts) arr.push_back({{"name", p.name}, {"x", p.x}, {"y", p.y}, {"c", p.c}});
    return arr;
}
inline std::vector<Landmark> landmarks_from_json(const nlohmann::json& arr) {
    std::vector<Landmark> out;
    for (const auto& e : arr)
        out.push_back({e.at("name").get<std::string>(), e.at("x").get<float>(), e.at("y").get<float>(),
                       e.at("c").get<float>()});
    return out;
}
}  // namespace detail

inline void save_dataset(const SequenceDataset& seq, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "frames");
    fs::create_directories(fs::path(dir) / "keypoints");
    fs::create_directories(fs::path(dir) / "densepose");
    for (size_t i = 0; i < seq.size(); ++i) {
        const Frame& f = seq.frames[i];
        Tensor img01({3, f.image.dim(1), f.image.dim(2)});
        for (int64_t k = 0; k < img01.numel(); ++k) img01[k] = (f.image[k] + 1.0f) * 0.5f;
        write_png((fs::path(dir) / "frames" / detail::frame_name(i, ".png")).string(), img01);
        write_png((fs::path(dir) / "densepose" / detail::frame_name(i, ".png")).string(), f.uv.data);
        nlohmann::json kp;
        kp["joints"] = detail::landmarks_to_json(f.keypoints.joints);
        kp["face"] = detail::landmarks_to_json(f.keypoints.face);
        kp["hands"] = detail::landmarks_to_json(f.keypoints.hands);
        std::ofstream out((fs::path(dir) / "keypoints" / detail::frame_name(i, ".json")).string());
        out << kp.dump(2) << "\n";
    }
    nlohmann::json meta = {{"fps", seq.fps}, {"width", seq.width()}, {"height", seq.height()}};
    std::ofstream out((fs::path(dir) / "meta.json").string());
    out << meta.dump(2) << "\n";
}

inline SequenceDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (!fs::exists(root / "meta.json")) throw IoError("load_dataset: missing " + (root / "meta.json").string());
    nlohmann::json meta;
    {
        std::ifstream in((root / "meta.json").string());
        in >> meta;
    }
    SequenceDataset seq;
    seq.fps = meta.at("fps").get<int>();
    const int w = meta.at("width").get<int>(), h = meta.at("height").get<int>();
    for (size_t i = 0;; ++i) {
        const fs::path img_path = root / "frames" / detail::frame_name(i, ".png");
        if (!fs::exists(img_path)) break;
        Frame f;
        Tensor img01 = read_png(img_path.string());
        if (img01.dim(1) != h || img01.dim(2) != w)
            throw IoError("load_dataset: " + img_path.string() + " does not match meta.json dimensions");
        f.image = Tensor({3, h, w});
        for (int64_t k = 0; k < f.image.numel(); ++k) f.image[k] = img01[k] * 2.0f - 1.0f;
        f.uv.data = read_png((root / "densepose" / detail::frame_name(i, ".png")).string());
        nlohmann::json kp;
        {
            std::ifstream in((root / "keypoints" / detail::frame_name(i, ".json")).string());
            if (!in) throw IoError("load_dataset: missing keypoints/" + detail::frame_name(i, ".json"));
            in >> kp;
        }
        f.keypoints.joints = detail::landmarks_from_json(kp.at("joints"));
        if (kp.contains("face")) f.keypoints.face = detail::landmarks_from_json(kp["face"]);
        if (kp.contains("hands")) f.keypoints.hands = detail::landmarks_from_json(kp["hands"]);
        seq.frames.push_back(std::move(f));
    }
    if (seq.frames.empty()) throw IoError("load_dataset: no frames under " + dir);
    return seq;
}

// Schema validation for `prepare`: every problem is reported as
// "<file>: <message>" so a bad dataset can be fixed line by line.
inline std::vector<std::string> validate_dataset_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> problems;
    const fs::path root(dir);
    auto complain = [&](const fs::path& p, const std::string& msg) { problems.push_back(p.string() + ": " + msg); };

    if (!fs::exists(root / "meta.json")) {
        complain(root / "meta.json", "missing");
        return problems;
    }
    nlohmann::json meta;
    try {
        std::ifstream in((root / "meta.json").string());
        in >> meta;
    } catch (const std::exception& e) {
        complain(root / "meta.json", std::string("parse error: ") + e.what());
        return problems;
    }
    for (const char* key : {"fps", "width", "height"})
        if (!meta.contains(key) || !meta[key].is_number_integer()) complain(root / "meta.json", std::string("missing integer field \"") + key + "\"");
    if (!problems.empty()) return problems;

    const int w = meta["width"].get<int>(), h = meta["height"].get<int>();
    size_t n = 0;
    while (fs::exists(root / "frames" / detail::frame_name(n, ".png"))) ++n;
    if (n == 0) complain(root / "frames", "no frames/%06d.png files starting at 000000");

    std::vector<std::string> joint_order;
    for (size_t i = 0; i < n; ++i) {
        const fs::path img_path = root / "frames" / detail::frame_name(i, ".png");
        try {
            Tensor img = read_png(img_path.string());
            if (img.dim(1) != h || img.dim(2) != w) complain(img_path, "dimensions do not match meta.json");
        } catch (const std::exception& e) {
            complain(img_path, e.what());
        }
        const fs::path uv_path = root / "densepose" / detail::frame_name(i, ".png");
        if (!fs::exists(uv_path)) {
            complain(uv_path, "missing");
        } else {
            try {
                Tensor uv = read_png(uv_path.string());
                if (uv.dim(1) != h || uv.dim(2) != w) complain(uv_path, "dimensions do not match meta.json");
            } catch (const std::exception& e) {
                complain(uv_path, e.what());
            }
        }
        const fs::path kp_path = root / "keypoints" / detail::frame_name(i, ".json");
        if (!fs::exists(kp_path)) {
            complain(kp_path, "missing");
            continue;
        }
        try {
            nlohmann::json kp;
            std::ifstream in(kp_path.string());
            in >> kp;
            if (!kp.contains("joints") || !kp["joints"].is_array()) {
                complain(kp_path, "missing \"joints\" array");
                continue;
            }
            std::vector<std::string> order;
            for (size_t j = 0; j < kp["joints"].size(); ++j) {
                const auto& e = kp["joints"][j];
                for (const char* key : {"name", "x", "y", "c"})
                    if (!e.contains(key)) complain(kp_path, "joints[" + std::to_string(j) + "] missing \"" + key + "\"");
                if (e.contains("name")) order.push_back(e["name"].get<std::string>());
                if (e.contains("c")) {
                    const float c = e["c"].get<float>();
                    if (c < 0.0f || c > 1.0f) complain(kp_path, "joints[" + std::to_string(j) + "].c outside [0,1]");
                }
            }
            if (joint_order.empty())
                joint_order = order;
            else if (order != joint_order)
                complain(kp_path, "joint order differs from frame 000000");
        } catch (const std::exception& e) {
            complain(kp_path, std::string("parse error: ") + e.what());
        }
    }
    return problems;
}

}  // namespace dynamo
