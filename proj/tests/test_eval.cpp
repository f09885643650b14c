#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "caitts/error.hpp"
#include "caitts/eval.hpp"

using namespace caitts;

namespace {

struct PathResult {
    double total = 0.0;
    std::size_t length = 0;
};

// Exhaustive enumeration of every monotone alignment path; returns the
// minimum-total-cost path. Only usable for tiny inputs.
PathResult exhaustive_dtw(std::size_t n_a, std::size_t n_b,
                          const std::function<double(std::size_t, std::size_t)>& cost) {
    PathResult best;
    best.total = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double, std::size_t)> walk =
        [&](std::size_t i, std::size_t j, double acc, std::size_t len) {
            acc += cost(i, j);
            ++len;
            if (i + 1 == n_a && j + 1 == n_b) {
                if (acc < best.total) best = {acc, len};
                return;
            }
            if (i + 1 < n_a) walk(i + 1, j, acc, len);
            if (j + 1 < n_b) walk(i, j + 1, acc, len);
            if (i + 1 < n_a && j + 1 < n_b) walk(i + 1, j + 1, acc, len);
        };
    walk(0, 0, 0.0, 0);
    return best;
}

std::vector<double> random_mel(std::size_t frames, std::size_t n_mels, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-4.0, 1.0);
    std::vector<double> mel(frames * n_mels);
    for (auto& v : mel) v = dist(rng);
    return mel;
}

}  // namespace

TEST_CASE("mcd_dtw is zero for identical and frame-duplicated mels") {
    std::mt19937_64 rng(1);
    const std::size_t n_mels = 20;
    const auto mel = random_mel(5, n_mels, rng);
    CHECK(eval::mcd_dtw(mel, 5, mel, 5, n_mels) == doctest::Approx(0.0));

    // duplicate frame 2
    std::vector<double> dup;
    for (std::size_t f = 0; f < 5; ++f) {
        dup.insert(dup.end(), mel.begin() + static_cast<long>(f * n_mels),
                   mel.begin() + static_cast<long>((f + 1) * n_mels));
        if (f == 2)
            dup.insert(dup.end(), mel.begin() + static_cast<long>(f * n_mels),
                       mel.begin() + static_cast<long>((f + 1) * n_mels));
    }
    CHECK(eval::mcd_dtw(mel, 5, dup, 6, n_mels) == doctest::Approx(0.0));
}

TEST_CASE("mcd_dtw matches the exhaustive-path oracle") {
    std::mt19937_64 rng(2);
    const std::size_t n_mels = 12;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t fa = 2 + rng() % 7, fb = 2 + rng() % 7;
        const auto a = random_mel(fa, n_mels, rng);
        const auto b = random_mel(fb, n_mels, rng);
        const auto ca = eval::mel_cepstra(a, fa, n_mels);
        const auto cb = eval::mel_cepstra(b, fb, n_mels);
        const std::size_t order = eval::kCepstralOrder;
        auto cost = [&](std::size_t i, std::size_t j) {
            double s = 0.0;
            for (std::size_t d = 0; d < order; ++d) {
                const double diff = ca[i * order + d] - cb[j * order + d];
                s += diff * diff;
            }
            return std::sqrt(s);
        };
        const auto best = exhaustive_dtw(fa, fb, cost);
        const double expect = (10.0 / std::log(10.0)) * std::sqrt(2.0) * best.total /
                              static_cast<double>(best.length);
        CHECK(eval::mcd_dtw(a, fa, b, fb, n_mels) == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("mcd_dtw is symmetric and rejects empty input") {
    std::mt19937_64 rng(3);
    const auto a = random_mel(4, 10, rng), b = random_mel(6, 10, rng);
    CHECK(eval::mcd_dtw(a, 4, b, 6, 10) == doctest::Approx(eval::mcd_dtw(b, 6, a, 4, 10)).epsilon(1e-9));
    CHECK_THROWS_AS(eval::mcd_dtw({}, 0, a, 4, 10), EmptyInput);
}

TEST_CASE("pitch_moments: symmetry, degenerate guard, oracle") {
    const auto sym = eval::pitch_moments({99.0, 100.0, 101.0});
    CHECK(sym.skewness == doctest::Approx(0.0));

    const auto flat = eval::pitch_moments({5.0, 5.0, 5.0});
    CHECK(flat.sigma == 0.0);
    CHECK(flat.skewness == 0.0);
    CHECK(flat.kurtosis == 0.0);

    CHECK_THROWS_AS(eval::pitch_moments({100.0}), InsufficientData);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> dist(80.0, 300.0);
    std::vector<double> xs(100);
    for (auto& v : xs) v = dist(rng);
    const auto m = eval::pitch_moments(xs);
    long double mean = 0.0L;
    for (double v : xs) mean += v;
    mean /= xs.size();
    long double m2 = 0.0L, m3 = 0.0L, m4 = 0.0L;
    for (double v : xs) {
        const long double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= xs.size();
    m3 /= xs.size();
    m4 /= xs.size();
    CHECK(m.sigma == doctest::Approx(static_cast<double>(std::sqrt(m2))).epsilon(1e-9));
    CHECK(m.skewness == doctest::Approx(static_cast<double>(m3 / (m2 * std::sqrt(m2)))).epsilon(1e-9));
    CHECK(m.kurtosis == doctest::Approx(static_cast<double>(m4 / (m2 * m2) - 3.0L)).epsilon(1e-9));
}

TEST_CASE("pitch_moments ignores unvoiced zeros") {
    const auto a = eval::pitch_moments({100.0, 0.0, 200.0, 0.0});
    const auto b = eval::pitch_moments({100.0, 200.0});
    CHECK(a.sigma == doctest::Approx(b.sigma));
}

TEST_CASE("pitch_dtw basics and oracle") {
    CHECK(eval::pitch_dtw({100, 150, 120}, {100, 150, 120}) == doctest::Approx(0.0));
    CHECK(eval::pitch_dtw({100, 100, 100}, {110, 110, 110}) == doctest::Approx(10.0));
    CHECK_THROWS_AS(eval::pitch_dtw({0.0, 0.0}, {100.0}), InsufficientData);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(80.0, 300.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> a(2 + rng() % 7), b(2 + rng() % 7);
        for (auto& v : a) v = dist(rng);
        for (auto& v : b) v = dist(rng);
        auto cost = [&](std::size_t i, std::size_t j) { return std::abs(a[i] - b[j]); };
        const auto best = exhaustive_dtw(a.size(), b.size(), cost);
        CHECK(eval::pitch_dtw(a, b) ==
              doctest::Approx(best.total / static_cast<double>(best.length)).epsilon(1e-9));
    }
}

TEST_CASE("energy_mae_dtw basics and oracle") {
    CHECK(eval::energy_mae_dtw({1, 1}, {1, 1}) == doctest::Approx(0.0));
    CHECK(eval::energy_mae_dtw({1, 1}, {2, 2}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(eval::energy_mae_dtw({}, {1.0}), EmptyInput);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> dist(0.0, 5.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> a(2 + rng() % 7), b(2 + rng() % 7);
        for (auto& v : a) v = dist(rng);
        for (auto& v : b) v = dist(rng);
        auto cost = [&](std::size_t i, std::size_t j) { return std::abs(a[i] - b[j]); };
        const auto best = exhaustive_dtw(a.size(), b.size(), cost);
        CHECK(eval::energy_mae_dtw(a, b) ==
              doctest::Approx(best.total / static_cast<double>(best.length)).epsilon(1e-9));
    }
}

TEST_CASE("duration_boundary_delta worked example") {
    CHECK(eval::duration_boundary_delta({3, 2, 4}, {3, 2, 4}, 0.0125) == 0.0);
    CHECK(eval::duration_boundary_delta({2, 2}, {3, 1}, 0.0125) == doctest::Approx(6.25));
    CHECK_THROWS_AS(eval::duration_boundary_delta({1, 2}, {1, 2, 3}, 0.0125), AlignmentMismatch);

    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 2 + rng() % 6;
        std::vector<std::size_t> p(n), g(n);
        for (auto& v : p) v = 1 + rng() % 9;
        for (auto& v : g) v = 1 + rng() % 9;
        double cp = 0.0, cg = 0.0, acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cp += static_cast<double>(p[i]);
            cg += static_cast<double>(g[i]);
            acc += std::abs(cp - cg);
        }
        const double expect = acc / static_cast<double>(n) * 0.0125 * 1000.0;
        CHECK(eval::duration_boundary_delta(p, g, 0.0125) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("categorize_intensity band boundaries") {
    CHECK(eval::categorize_intensity(0.2) == eval::IntensityBand::Slight);
    CHECK(eval::categorize_intensity(0.5) == eval::IntensityBand::Average);
    CHECK(eval::categorize_intensity(0.8) == eval::IntensityBand::Strong);
    CHECK(eval::categorize_intensity(0.349) == eval::IntensityBand::Slight);
    CHECK(eval::categorize_intensity(0.35) == eval::IntensityBand::Average);
    CHECK(eval::categorize_intensity(0.649) == eval::IntensityBand::Average);
    CHECK(eval::categorize_intensity(0.65) == eval::IntensityBand::Strong);
    CHECK(eval::categorize_intensity(0.02) == eval::IntensityBand::Slight);
    CHECK(eval::categorize_intensity(0.98) == eval::IntensityBand::Strong);

    // monotone step function
    eval::IntensityBand prev = eval::categorize_intensity(0.01);
    for (double i = 0.01; i < 1.0; i += 0.01) {
        const auto band = eval::categorize_intensity(i);
        CHECK(static_cast<int>(band) >= static_cast<int>(prev));
        prev = band;
    }
}

TEST_CASE("intensity_confusion counts") {
    std::array<std::array<std::size_t, 3>, 3> coarse{};
    std::array<std::array<std::size_t, 9>, 9> fine{};
    eval::intensity_confusion({{0.2, 0.2}, {0.5, 0.5}, {0.8, 0.8}}, coarse, fine);
    CHECK(coarse[0][0] == 1);
    CHECK(coarse[1][1] == 1);
    CHECK(coarse[2][2] == 1);
    CHECK(fine[1][1] == 1);
    CHECK(fine[4][4] == 1);
    CHECK(fine[7][7] == 1);

    coarse = {};
    fine = {};
    eval::intensity_confusion({{0.2, 0.8}}, coarse, fine);
    CHECK(coarse[0][2] == 1);
    std::size_t total = 0;
    for (const auto& row : coarse)
        for (std::size_t v : row) total += v;
    CHECK(total == 1);

    // random input: row sums equal intended-band counts
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    std::vector<std::pair<double, double>> pairs;
    std::array<std::size_t, 3> intended{};
    for (int i = 0; i < 50; ++i) {
        const double a = dist(rng), b = dist(rng);
        pairs.emplace_back(a, b);
        intended[static_cast<std::size_t>(eval::categorize_intensity(a))]++;
    }
    coarse = {};
    fine = {};
    eval::intensity_confusion(pairs, coarse, fine);
    for (std::size_t r = 0; r < 3; ++r) {
        std::size_t sum = 0;
        for (std::size_t c = 0; c < 3; ++c) sum += coarse[r][c];
        CHECK(sum == intended[r]);
    }
}
