#include <catch2/catch_amalgamated.hpp>

#include "dynamo/metrics.hpp"
#include "dynamo/random.hpp"

using namespace dynamo;

namespace {

Tensor random_image(int h, int w, Rng& rng) {
    Tensor t({3, h, w});
    rng.fill_uniform(t, -1.0f, 1.0f);
    return t;
}

// exactly periodic smooth texture so integer translations wrap cleanly
Tensor periodic_texture(int h, int w, uint64_t seed) {
    Rng rng(seed);
    struct Wave {
        float a, p, q, phi;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 6; ++k)
        waves.push_back({rng.uniform(0.1f, 0.3f), float(1 + rng.index(5)), float(1 + rng.index(5)),
                         rng.uniform(0.0f, 6.283f)});
    Tensor img({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float v = 0.0f;
            for (const auto& wv : waves)
                v += wv.a * std::sin(6.2831853f * (wv.p * float(x) / float(w) + wv.q * float(y) / float(h)) + wv.phi);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(v, -1.0f, 1.0f);
        }
    return img;
}

Tensor translate_periodic(const Tensor& img, int dx, int dy) {
    const int h = img.dim(1), w = img.dim(2);
    Tensor out({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(c, y, x) = img.at(c, ((y - dy) % h + h) % h, ((x - dx) % w + w) % w);
    return out;
}

// independent brute-force SSIM written directly from the formula
double ssim_oracle(const Tensor& a, const Tensor& b) {
    std::array<double, 11> g{};
    double gsum = 0.0;
    for (int i = 0; i < 11; ++i) {
        g[size_t(i)] = std::exp(-double(i - 5) * double(i - 5) / (2.0 * 2.25));
        gsum += g[size_t(i)];
    }
    for (auto& v : g) v /= gsum;
    const double c1 = std::pow(0.01 * 2.0, 2.0), c2 = std::pow(0.03 * 2.0, 2.0);
    double per_channel = 0.0;
    for (int ch = 0; ch < a.dim(0); ++ch) {
        double acc = 0.0;
        int cnt = 0;
        for (int y = 5; y + 5 < a.dim(1); ++y)
            for (int x = 5; x + 5 < a.dim(2); ++x) {
                double mx = 0, my = 0, vx = 0, vy = 0, cov = 0;
                for (int i = -5; i <= 5; ++i)
                    for (int j = -5; j <= 5; ++j) {
                        const double wgt = g[size_t(i + 5)] * g[size_t(j + 5)];
                        mx += wgt * a.at(ch, y + i, x + j);
                        my += wgt * b.at(ch, y + i, x + j);
                    }
                for (int i = -5; i <= 5; ++i)
                    for (int j = -5; j <= 5; ++j) {
                        const double wgt = g[size_t(i + 5)] * g[size_t(j + 5)];
                        vx += wgt * std::pow(a.at(ch, y + i, x + j) - mx, 2.0);
                        vy += wgt * std::pow(b.at(ch, y + i, x + j) - my, 2.0);
                        cov += wgt * (a.at(ch, y + i, x + j) - mx) * (b.at(ch, y + i, x + j) - my);
                    }
                acc += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++cnt;
            }
        per_channel += acc / cnt;
    }
    return per_channel / a.dim(0);
}

}  // namespace

TEST_CASE("mse: identity, endpoints, brute-force oracle") {
    Rng rng(1);
    const Tensor a = random_image(8, 8, rng);
    REQUIRE(mse(a, a) == 0.0);
    REQUIRE(mse(Tensor::full({3, 4, 4}, -1.0f), Tensor::full({3, 4, 4}, 1.0f)) == Catch::Approx(4.0));
    const Tensor b = random_image(8, 8, rng);
    double expect = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) expect += std::pow(double(a[i]) - double(b[i]), 2.0);
    expect /= double(a.numel());
    REQUIRE(mse(a, b) == Catch::Approx(expect).epsilon(1e-12));
    REQUIRE(mse(std::vector<Tensor>{a, b}, std::vector<Tensor>{a, b}) == 0.0);
}

TEST_CASE("ssim: identity is one, symmetric, matches the direct formula") {
    Rng rng(2);
    const Tensor a = random_image(32, 32, rng);
    REQUIRE(ssim(a, a) == Catch::Approx(1.0).margin(1e-9));
    const Tensor b = random_image(32, 32, rng);
    REQUIRE(ssim(a, b) == Catch::Approx(ssim(b, a)).margin(1e-12));

    // constant vs constant + 0.5 on 32x32 against the independent evaluation
    const Tensor c0 = Tensor::full({3, 32, 32}, -0.2f);
    const Tensor c1 = Tensor::full({3, 32, 32}, 0.3f);
    REQUIRE(ssim(c0, c1) == Catch::Approx(ssim_oracle(c0, c1)).margin(1e-6));
    REQUIRE(ssim(a, b) == Catch::Approx(ssim_oracle(a, b)).margin(1e-6));
}

TEST_CASE("estimate_flow: zero for identical frames, deterministic") {
    const Tensor img = periodic_texture(48, 48, 5);
    const Tensor f = estimate_flow(img, img);
    REQUIRE(f.shape() == std::vector<int>({2, 48, 48}));
    for (int64_t i = 0; i < f.numel(); ++i) REQUIRE(std::abs(f[i]) < 1e-6f);
    const Tensor g = estimate_flow(img, translate_periodic(img, 1, 0));
    const Tensor h = estimate_flow(img, translate_periodic(img, 1, 0));
    REQUIRE(bit_equal(g, h));
}

TEST_CASE("estimate_flow: recovers synthetic translations within 20%") {
    const Tensor img = periodic_texture(64, 64, 9);
    struct Case {
        int dx, dy;
    };
    for (const Case c : {Case{2, 0}, Case{0, 2}, Case{-3, 1}, Case{4, 0}, Case{1, -1}}) {
        const Tensor next = translate_periodic(img, c.dx, c.dy);
        const Tensor f = estimate_flow(img, next);
        const int64_t plane = int64_t(64) * 64;
        double mu = 0.0, mv = 0.0;
        for (int64_t i = 0; i < plane; ++i) {
            mu += f[i];
            mv += f[plane + i];
        }
        mu /= double(plane);
        mv /= double(plane);
        const double mag = std::sqrt(double(c.dx * c.dx + c.dy * c.dy));
        const double err = std::sqrt(std::pow(mu - c.dx, 2.0) + std::pow(mv - c.dy, 2.0));
        INFO("d=(" << c.dx << "," << c.dy << ") mean flow (" << mu << "," << mv << ")");
        REQUIRE(err < 0.2 * mag);
    }
}

TEST_CASE("tof: zero on identical sequences, positive for jitter, matches hand-composed oracle") {
    Rng rng(11);
    std::vector<Tensor> truth;
    for (int i = 0; i < 3; ++i) truth.push_back(periodic_texture(32, 32, 20 + uint64_t(i)));
    REQUIRE(tof(truth, truth) == 0.0);

    std::vector<Tensor> jittered;
    const Tensor base = periodic_texture(32, 32, 77);
    std::vector<Tensor> still(3, base);
    jittered.push_back(base);
    jittered.push_back(translate_periodic(base, 1, 0));
    jittered.push_back(base);
    REQUIRE(tof(jittered, still) > 0.0);

    // hand-composed oracle: mean over pairs of mean end-point error
    double expect = 0.0;
    for (int i = 0; i < 2; ++i) {
        const Tensor fg = estimate_flow(jittered[size_t(i)], jittered[size_t(i) + 1]);
        const Tensor ft = estimate_flow(still[size_t(i)], still[size_t(i) + 1]);
        const int64_t plane = int64_t(32) * 32;
        double s = 0.0;
        for (int64_t j = 0; j < plane; ++j)
            s += std::sqrt(std::pow(double(fg[j]) - double(ft[j]), 2.0) +
                           std::pow(double(fg[plane + j]) - double(ft[plane + j]), 2.0));
        expect += s / double(plane);
    }
    expect /= 2.0;
    REQUIRE(tof(jittered, still) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("slice_plot: static sequences are constant along time; span one copies the slice") {
    Rng rng(13);
    const Tensor frame = random_image(16, 16, rng);
    const std::vector<Tensor> seq(5, frame);
    const SlicePlots p = slice_plot(seq, 7, 3, 5);
    REQUIRE(p.vertical.shape() == std::vector<int>({3, 16, 5}));
    REQUIRE(p.horizontal.shape() == std::vector<int>({3, 5, 16}));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int t = 1; t < 5; ++t) REQUIRE(p.vertical.at(c, y, t) == p.vertical.at(c, y, 0));
    const SlicePlots one = slice_plot(seq, 7, 3, 1);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y) REQUIRE(one.vertical.at(c, y, 0) == frame.at(c, y, 3));
    for (int c = 0; c < 3; ++c)
        for (int x = 0; x < 16; ++x) REQUIRE(one.horizontal.at(c, 0, x) == frame.at(c, 7, x));
    REQUIRE_THROWS_AS(slice_plot(seq, 7, 3, 9), ShapeError);
}

TEST_CASE("temporal_jitter_score: zero for static, 2c for an alternating pair, matches oracle") {
    const Tensor a = Tensor::full({3, 8, 8}, 0.25f);
    const Tensor b = Tensor::full({3, 8, 8}, -0.25f);
    REQUIRE(temporal_jitter_score({a, a, a}) == 0.0);
    REQUIRE(temporal_jitter_score({a, b, a, b}) == Catch::Approx(0.5));

    Rng rng(17);
    std::vector<Tensor> seq;
    for (int i = 0; i < 4; ++i) seq.push_back(random_image(8, 8, rng));
    double expect = 0.0;
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < seq[0].numel(); ++j)
            s += std::abs(double(seq[size_t(i)][j]) - double(seq[size_t(i) + 1][j]));
        expect += s / double(seq[0].numel());
    }
    expect /= 3.0;
    REQUIRE(temporal_jitter_score(seq) == Catch::Approx(expect).epsilon(1e-12));

    // masked variant only counts selected pixels
    Tensor mask({1, 8, 8});
    mask.at(0, 0, 0) = 1.0f;
    const double masked = temporal_jitter_score({a, b}, mask);
    REQUIRE(masked == Catch::Approx(0.5));
}
