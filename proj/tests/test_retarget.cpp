#include <catch2/catch_amalgamated.hpp>

#include "dynamo/random.hpp"
#include "dynamo/retarget.hpp"

using namespace dynamo;

namespace {

KeypointSet skeleton_at(float cx, float top, float height, float width) {
    KeypointSet kp;
    auto add = [&](const char* name, float fx, float fy) {
        kp.joints.push_back({name, cx + fx * width - width / 2, top + fy * height, 1.0f});
    };
    add("head", 0.5f, 0.0f);
    add("neck", 0.5f, 0.15f);
    add("l_shoulder", 0.8f, 0.18f);
    add("r_shoulder", 0.2f, 0.18f);
    add("l_wrist", 1.0f, 0.45f);
    add("r_wrist", 0.0f, 0.45f);
    add("pelvis", 0.5f, 0.5f);
    add("l_knee", 0.62f, 0.75f);
    add("r_knee", 0.38f, 0.75f);
    add("l_ankle", 0.6f, 1.0f);
    add("r_ankle", 0.4f, 0.98f);
    return kp;
}

SequenceDataset dataset_of(const std::vector<KeypointSet>& kps) {
    SequenceDataset seq;
    for (const auto& kp : kps) {
        Frame f;
        f.image = Tensor({3, 4, 4});
        f.uv.data = Tensor({3, 4, 4});
        f.keypoints = kp;
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

double bone_length(const KeypointSet& kp, const char* a, const char* b) {
    const auto& ja = kp.joints[size_t(kp.find(a))];
    const auto& jb = kp.joints[size_t(kp.find(b))];
    return std::sqrt(std::pow(double(ja.x) - jb.x, 2.0) + std::pow(double(ja.y) - jb.y, 2.0));
}

}  // namespace

TEST_CASE("align_skeleton: already-matching source is an identity") {
    const auto target = dataset_of({skeleton_at(50, 20, 60, 24), skeleton_at(52, 21, 60, 24)});
    const SkeletonStats stats = compute_skeleton_stats(target);
    const KeypointSet src = skeleton_at(50, 20, 60, 24);
    const AlignResult out = align_skeleton(src, stats, stats.ground_y);
    REQUIRE(!out.ankle_fallback);
    for (size_t j = 0; j < src.joints.size(); ++j) {
        REQUIRE(std::abs(out.keypoints.joints[j].x - src.joints[j].x) < 1e-5f);
        REQUIRE(std::abs(out.keypoints.joints[j].y - src.joints[j].y) < 1e-5f);
        REQUIRE(out.keypoints.joints[j].c == src.joints[j].c);
    }
}

TEST_CASE("align_skeleton: double-size source halves every bone") {
    const auto target = dataset_of({skeleton_at(50, 20, 60, 24)});
    const SkeletonStats stats = compute_skeleton_stats(target);
    const KeypointSet big = skeleton_at(80, 10, 120, 48);
    const AlignResult out = align_skeleton(big, stats, stats.ground_y);
    for (auto [a, b] : {std::pair<const char*, const char*>{"neck", "pelvis"},
                        std::pair<const char*, const char*>{"l_knee", "l_ankle"},
                        std::pair<const char*, const char*>{"l_shoulder", "r_shoulder"}}) {
        REQUIRE(bone_length(out.keypoints, a, b) == Catch::Approx(bone_length(big, a, b) / 2.0).epsilon(1e-4));
    }
}

TEST_CASE("align_skeleton: lowest ankle lands on the ground line; alignment is idempotent") {
    const auto target = dataset_of({skeleton_at(50, 20, 60, 24)});
    const SkeletonStats stats = compute_skeleton_stats(target);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const KeypointSet src = skeleton_at(rng.uniform(30, 70), rng.uniform(5, 40), rng.uniform(30, 120),
                                            rng.uniform(10, 60));
        const AlignResult out = align_skeleton(src, stats, stats.ground_y);
        float lowest = -1e9f;
        for (const char* name : {"l_ankle", "r_ankle"})
            lowest = std::max(lowest, out.keypoints.joints[size_t(out.keypoints.find(name))].y);
        REQUIRE(std::abs(lowest - stats.ground_y) < 0.5f);

        const AlignResult again = align_skeleton(out.keypoints, stats, stats.ground_y);
        for (size_t j = 0; j < out.keypoints.joints.size(); ++j) {
            REQUIRE(std::abs(again.keypoints.joints[j].x - out.keypoints.joints[j].x) < 1e-3f);
            REQUIRE(std::abs(again.keypoints.joints[j].y - out.keypoints.joints[j].y) < 1e-3f);
        }
    }
}

TEST_CASE("align_skeleton: missing ankles fall back to height-only alignment with a flag") {
    const auto target = dataset_of({skeleton_at(50, 20, 60, 24)});
    const SkeletonStats stats = compute_skeleton_stats(target);
    KeypointSet src = skeleton_at(60, 10, 90, 40);
    src.joints[size_t(src.find("l_ankle"))].c = 0.0f;
    src.joints[size_t(src.find("r_ankle"))].c = 0.0f;
    const AlignResult out = align_skeleton(src, stats, stats.ground_y);
    REQUIRE(out.ankle_fallback);
    // uniform scale: aspect ratio of any bone pair is preserved
    const double r_before = bone_length(src, "l_shoulder", "r_shoulder") / bone_length(src, "neck", "pelvis");
    const double r_after =
        bone_length(out.keypoints, "l_shoulder", "r_shoulder") / bone_length(out.keypoints, "neck", "pelvis");
    REQUIRE(r_after == Catch::Approx(r_before).epsilon(1e-4));
}

TEST_CASE("nearest_neighbor_baseline: exact hit, tie-break, brute-force oracle, error case") {
    std::vector<KeypointSet> kps;
    for (int i = 0; i < 12; ++i) kps.push_back(skeleton_at(30.0f + 2.0f * float(i), 20, 60, 24));
    auto seq = dataset_of(kps);
    seq.split.assign(seq.size(), SplitTag::train);

    // query equal to train frame 7
    REQUIRE(nearest_neighbor_baseline(kps[7], seq) == 7);

    // query equidistant between frames 5 and 9 resolves to 5
    KeypointSet mid = skeleton_at(30.0f + 2.0f * 7.0f, 20, 60, 24);
    REQUIRE(nearest_neighbor_baseline(mid, seq) == 7);
    KeypointSet between = skeleton_at(30.0f + 2.0f * 7.0f, 20, 60, 24);
    // shift so it sits exactly between frames 5 and 9, both at distance 4 in x
    between = skeleton_at(30.0f + 2.0f * 7.0f, 20, 60, 24);
    {
        SequenceDataset two = dataset_of({kps[5], kps[9]});
        two.split.assign(2, SplitTag::train);
        REQUIRE(nearest_neighbor_baseline(between, two) == 0);
    }

    // 3-frame toy set against exhaustive search
    SequenceDataset toy = dataset_of({kps[1], kps[4], kps[11]});
    toy.split.assign(3, SplitTag::train);
    const KeypointSet q = skeleton_at(38.5f, 22, 61, 25);
    size_t best = 99;
    double best_d = 1e18;
    for (size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        int n = 0;
        for (const auto& qj : q.joints) {
            const int ti = toy.frames[i].keypoints.find(qj.name);
            s += std::pow(double(qj.x) - toy.frames[i].keypoints.joints[size_t(ti)].x, 2.0) +
                 std::pow(double(qj.y) - toy.frames[i].keypoints.joints[size_t(ti)].y, 2.0);
            ++n;
        }
        const double d = std::sqrt(s / n);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    REQUIRE(nearest_neighbor_baseline(q, toy) == best);

    // no common visible joints anywhere
    KeypointSet blind = kps[0];
    for (auto& j : blind.joints) j.c = 0.0f;
    REQUIRE_THROWS_AS(nearest_neighbor_baseline(blind, seq), ConfigError);
}

TEST_CASE("motion_speed: zero when static, exact for constant displacement, scale invariant") {
    std::vector<KeypointSet> kps(5, skeleton_at(50, 20, 60, 24));
    REQUIRE(motion_speed(dataset_of(kps)) == 0.0);

    // every joint moves 0.01 normalized units per frame (translation by 0.01*height)
    const float height = [&] {
        const auto b = detail_retarget::visible_bbox(kps[0]);
        return b.max_y - b.min_y;
    }();
    std::vector<KeypointSet> moving;
    for (int i = 0; i < 4; ++i) {
        KeypointSet kp = kps[0];
        for (auto& j : kp.joints) j.x += 0.01f * height * float(i);
        moving.push_back(kp);
    }
    REQUIRE(motion_speed(dataset_of(moving)) == Catch::Approx(0.01).epsilon(1e-5));

    // power-of-two scaling is exactly invariant
    std::vector<KeypointSet> scaled = moving;
    for (auto& kp : scaled)
        for (auto& j : kp.joints) {
            j.x *= 2.0f;
            j.y *= 2.0f;
        }
    REQUIRE(motion_speed(dataset_of(scaled)) == motion_speed(dataset_of(moving)));

    // frames with no visible joints drop their pairs
    std::vector<KeypointSet> holey = moving;
    for (auto& j : holey[1].joints) j.c = 0.0f;
    REQUIRE(std::isfinite(motion_speed(dataset_of(holey))));

    REQUIRE(motion_speed_ratio(kMotionSpeedUnit) == Catch::Approx(1.0));
    REQUIRE(motion_speed_ratio(0.012) == Catch::Approx(2.0));
}

TEST_CASE("global alignment warps UV maps with exact value preservation") {
    const auto target = dataset_of({skeleton_at(50, 20, 60, 24)});
    const SkeletonStats stats = compute_skeleton_stats(target);
    auto source = dataset_of({skeleton_at(40, 10, 90, 36), skeleton_at(42, 10, 90, 36)});
    const GlobalAlign g = compute_global_align(source, stats, stats.ground_y);
    REQUIRE(g.sy == Catch::Approx(60.0 / 90.0).epsilon(1e-4));

    Tensor uv({3, 16, 16});
    uv.at(0, 8, 8) = 0.5f;
    uv.at(1, 8, 8) = 0.25f;
    const Tensor warped = warp_affine_nearest(uv, g);
    // only exact source values may appear
    for (int64_t i = 0; i < warped.numel(); ++i)
        REQUIRE((warped[i] == 0.0f || warped[i] == 0.5f || warped[i] == 0.25f));
}
