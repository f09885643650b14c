#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "caitts/accent_features.hpp"
#include "caitts/error.hpp"

using namespace caitts;

namespace {

// independent direct-formula recomputation of the 9 functionals
std::array<double, 9> functionals_oracle(std::vector<double> xs) {
    std::array<double, 9> out{};
    if (xs.empty()) return out;
    const double n = static_cast<double>(xs.size());
    long double mean = 0.0L;
    for (double v : xs) mean += v;
    mean /= n;
    long double m2 = 0.0L, m3 = 0.0L, m4 = 0.0L;
    for (double v : xs) {
        const long double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const long double sd = std::sqrt(m2);
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size();
    long double num = 0.0L, den = 0.0L;
    const long double tbar = (n - 1.0) / 2.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const long double dt = static_cast<long double>(i) - tbar;
        num += dt * (xs[i] - mean);
        den += dt * dt;
    }
    out[0] = static_cast<double>(mean);
    out[1] = static_cast<double>(sd);
    out[2] = sorted.front();
    out[3] = sorted.back();
    out[4] = sorted.back() - sorted.front();
    out[5] = k % 2 == 1 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
    out[6] = sd < 1e-8 ? 0.0 : static_cast<double>(m3 / (m2 * sd));
    out[7] = sd < 1e-8 ? 0.0 : static_cast<double>(m4 / (m2 * m2) - 3.0L);
    out[8] = xs.size() < 2 ? 0.0 : static_cast<double>(num / den);
    return out;
}

}  // namespace

TEST_CASE("constant prosody collapses spread functionals to zero") {
    dsp::ProsodyTrack t;
    t.pitch_hz.assign(50, 200.0);
    t.energy.assign(50, 1.0);
    const auto v = features::compute_functionals(t).values;
    // F0 block
    CHECK(v[0] == doctest::Approx(200.0));
    for (std::size_t i : {1, 4, 6, 7, 8}) CHECK(v[i] == doctest::Approx(0.0));
    // dF0 block all zero
    for (std::size_t i = 9; i < 18; ++i) CHECK(v[i] == doctest::Approx(0.0));
    // energy block
    CHECK(v[18] == doctest::Approx(1.0));
    for (std::size_t i : {19, 22, 24, 25, 26}) CHECK(v[i] == doctest::Approx(0.0));
    // dEnergy block all zero
    for (std::size_t i = 27; i < 36; ++i) CHECK(v[i] == doctest::Approx(0.0));
}

TEST_CASE("linear pitch ramp: slope 1 Hz/frame, zero skewness") {
    dsp::ProsodyTrack t;
    for (int i = 0; i <= 100; ++i) {
        t.pitch_hz.push_back(100.0 + static_cast<double>(i));
        t.energy.push_back(1.0);
    }
    const auto v = features::compute_functionals(t).values;
    CHECK(v[8] == doctest::Approx(1.0).epsilon(1e-6));  // F0 slope
    CHECK(v[6] == doctest::Approx(0.0).epsilon(1e-6));  // F0 skewness
}

TEST_CASE("random track matches the direct-formula oracle") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> pd(80.0, 300.0), ed(0.0, 4.0);
    std::bernoulli_distribution voiced(0.8);
    dsp::ProsodyTrack t;
    for (int i = 0; i < 200; ++i) {
        t.pitch_hz.push_back(voiced(rng) ? pd(rng) : 0.0);
        t.energy.push_back(ed(rng));
    }
    std::vector<double> f0;
    for (double p : t.pitch_hz)
        if (p != 0.0) f0.push_back(p);
    auto delta = [](const std::vector<double>& xs) {
        std::vector<double> d;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) d.push_back(xs[i + 1] - xs[i]);
        return d;
    };
    const std::array<std::vector<double>, 4> tracks = {f0, delta(f0), t.energy, delta(t.energy)};
    const auto v = features::compute_functionals(t).values;
    for (std::size_t ti = 0; ti < 4; ++ti) {
        const auto expect = functionals_oracle(tracks[ti]);
        for (std::size_t fi = 0; fi < 9; ++fi)
            CHECK(v[ti * 9 + fi] == doctest::Approx(expect[fi]).epsilon(1e-9));
    }
}

TEST_CASE("empty track raises EmptyTrack") {
    CHECK_THROWS_AS(features::compute_functionals(dsp::ProsodyTrack{}), EmptyTrack);
}

TEST_CASE("fully unvoiced utterance zeroes the F0 blocks") {
    dsp::ProsodyTrack t;
    t.pitch_hz.assign(30, 0.0);
    t.energy.assign(30, 2.0);
    const auto v = features::compute_functionals(t).values;
    for (std::size_t i = 0; i < 18; ++i) CHECK(v[i] == 0.0);
    CHECK(v[18] == doctest::Approx(2.0));
}

TEST_CASE("order-free functionals are permutation invariant") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> ed(0.1, 3.0);
    dsp::ProsodyTrack t;
    for (int i = 0; i < 60; ++i) {
        t.pitch_hz.push_back(0.0);  // isolate the energy block
        t.energy.push_back(ed(rng));
    }
    dsp::ProsodyTrack shuffled = t;
    std::shuffle(shuffled.energy.begin(), shuffled.energy.end(), rng);
    const auto a = features::compute_functionals(t).values;
    const auto b = features::compute_functionals(shuffled).values;
    for (std::size_t i : {18, 19, 20, 21, 22, 23, 24, 25})  // all but the slope
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
}

TEST_CASE("pitch shift by +c moves location functionals, not shape ones") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> pd(100.0, 250.0);
    dsp::ProsodyTrack t;
    for (int i = 0; i < 80; ++i) {
        t.pitch_hz.push_back(pd(rng));
        t.energy.push_back(1.0);
    }
    dsp::ProsodyTrack shifted = t;
    const double c = 37.5;
    for (auto& p : shifted.pitch_hz) p += c;
    const auto a = features::compute_functionals(t).values;
    const auto b = features::compute_functionals(shifted).values;
    for (std::size_t i : {0, 2, 3, 5})  // mean, min, max, median
        CHECK(b[i] == doctest::Approx(a[i] + c).epsilon(1e-9));
    for (std::size_t i : {1, 6, 7})  // std, skewness, kurtosis
        CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
}

TEST_CASE("feature TSV round trip") {
    namespace fs = std::filesystem;
    std::vector<features::AccentFeatureVector> vs(3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        vs[i].utterance_id = "utt" + std::to_string(i);
        vs[i].speaker_id = "spk0";
        vs[i].accent_id = static_cast<int>(i);
        for (auto& x : vs[i].values) x = dist(rng);
    }
    const auto path = fs::temp_directory_path() / "caitts_features_roundtrip.tsv";
    features::write_feature_tsv(path.string(), vs);
    const auto back = features::read_feature_tsv(path.string());
    REQUIRE(back.size() == vs.size());
    for (std::size_t i = 0; i < vs.size(); ++i) {
        CHECK(back[i].utterance_id == vs[i].utterance_id);
        CHECK(back[i].accent_id == vs[i].accent_id);
        for (std::size_t k = 0; k < features::kFeatureDim; ++k)
            CHECK(back[i].values[k] == vs[i].values[k]);
    }
    fs::remove(path);
}
