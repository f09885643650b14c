#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "caitts/corpus.hpp"
#include "caitts/error.hpp"

using namespace caitts;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const auto p = fs::temp_directory_path() / ("caitts_corpus_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
    std::map<std::string, std::vector<char>> fa, fb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) fa[fs::relative(e.path(), a).string()] = slurp(e.path());
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) fb[fs::relative(e.path(), b).string()] = slurp(e.path());
    return fa == fb;
}

corpus::SyntheticSpec small_spec() {
    corpus::SyntheticSpec spec;
    spec.n_speakers = 1;
    spec.n_accents = 2;
    spec.utterances_per_speaker = 3;
    spec.accent_magnitudes = {0.3, 1.0};
    spec.seed = 21;
    return spec;
}

}  // namespace

TEST_CASE("zero perturbation leaves L2 identical to L1") {
    corpus::SyntheticSpec spec = small_spec();
    spec.n_accents = 1;
    spec.accent_magnitudes = {0.0};
    spec.magnitude_jitter = 0.0;
    const auto dir = temp_dir("zero");
    const auto m = corpus::generate_synthetic_corpus(spec, dir.string());
    std::map<std::string, std::pair<std::string, std::string>> pairs;
    for (const auto& r : m.records)
        (r.domain == "L1" ? pairs[r.utterance_id].first : pairs[r.utterance_id].second) = r.wav_path;
    CHECK(!pairs.empty());
    for (const auto& [utt, paths] : pairs)
        CHECK(slurp(dir / paths.first) == slurp(dir / paths.second));
    fs::remove_all(dir);
}

TEST_CASE("generation is byte-identical under a fixed seed") {
    const auto d1 = temp_dir("det1"), d2 = temp_dir("det2");
    corpus::generate_synthetic_corpus(small_spec(), d1.string());
    corpus::generate_synthetic_corpus(small_spec(), d2.string());
    CHECK(dirs_identical(d1, d2));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("measured pitch shift tracks the configured perturbation") {
    corpus::SyntheticSpec spec;
    spec.n_speakers = 1;
    spec.n_accents = 1;
    spec.utterances_per_speaker = 4;
    spec.accent_magnitudes = {1.0};
    spec.magnitude_jitter = 0.0;
    spec.perturbation.pitch_shift_hz = 30.0;
    spec.perturbation.pitch_contour_gain_hz = 0.0;
    spec.perturbation.duration_stretch = 0.0;
    spec.seed = 33;
    const auto dir = temp_dir("shift");
    const auto m = corpus::generate_synthetic_corpus(spec, dir.string());
    const dsp::AudioConfig cfg;
    std::map<std::string, std::pair<double, double>> means;
    for (const auto& r : m.records) {
        const auto w = dsp::read_wav((dir / r.wav_path).string(), cfg.sample_rate);
        const auto pitch = dsp::extract_pitch(w, cfg);
        double mean = 0.0;
        std::size_t n = 0;
        for (double p : pitch)
            if (p != 0.0) {
                mean += p;
                ++n;
            }
        REQUIRE(n > 0);
        mean /= static_cast<double>(n);
        (r.domain == "L1" ? means[r.utterance_id].first : means[r.utterance_id].second) = mean;
    }
    for (const auto& [utt, mm] : means)
        CHECK(mm.second - mm.first == doctest::Approx(30.0).epsilon(5.0 / 30.0));
    fs::remove_all(dir);
}

TEST_CASE("load_corpus on an empty directory raises ParseError") {
    const auto dir = temp_dir("empty");
    CHECK_THROWS_AS(corpus::load_corpus(dir.string(), dsp::AudioConfig{}), ParseError);
    fs::remove_all(dir);
}

TEST_CASE("duration shortfall up to 3 frames is reconciled on the final phoneme") {
    const auto dir = temp_dir("reconcile");
    const auto m = corpus::generate_synthetic_corpus(small_spec(), dir.string());

    // shrink one record's final duration by 3 in the manifest
    corpus::CorpusManifest edited = m;
    REQUIRE(edited.records[0].durations.back() > 3);
    edited.records[0].durations.back() -= 3;
    const std::size_t expect = edited.records[0].durations.back() + 3;
    corpus::save_manifest(edited, "manifest.tsv");

    const auto back = corpus::load_corpus(dir.string(), dsp::AudioConfig{});
    CHECK(back.records[0].durations.back() == expect);
    fs::remove_all(dir);
}

TEST_CASE("manifest write/read round trip") {
    const auto dir = temp_dir("roundtrip");
    const auto m = corpus::generate_synthetic_corpus(small_spec(), dir.string());
    const auto back = corpus::load_corpus(dir.string(), dsp::AudioConfig{});
    REQUIRE(back.records.size() == m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        CHECK(back.records[i].utterance_id == m.records[i].utterance_id);
        CHECK(back.records[i].speaker_id == m.records[i].speaker_id);
        CHECK(back.records[i].accent_id == m.records[i].accent_id);
        CHECK(back.records[i].domain == m.records[i].domain);
        CHECK(back.records[i].phonemes == m.records[i].phonemes);
        CHECK(back.records[i].durations == m.records[i].durations);
    }
    fs::remove_all(dir);
}

TEST_CASE("split_corpus assigns 8:1:1 per speaker deterministically") {
    corpus::CorpusManifest m;
    for (int s = 0; s < 2; ++s)
        for (int u = 0; u < 10; ++u) {
            corpus::UtteranceRecord r;
            r.utterance_id = "s" + std::to_string(s) + "u" + std::to_string(u);
            r.speaker_id = "spk" + std::to_string(s);
            r.domain = "L2";
            m.records.push_back(r);
        }
    corpus::split_corpus(m, 5);
    std::map<std::string, std::array<int, 3>> counts;
    for (const auto& r : m.records) counts[r.speaker_id][static_cast<std::size_t>(r.split)]++;
    for (const auto& [spk, c] : counts) {
        CHECK(c[0] == 8);
        CHECK(c[1] == 1);
        CHECK(c[2] == 1);
    }

    corpus::CorpusManifest m2 = m;
    corpus::split_corpus(m2, 5);
    for (std::size_t i = 0; i < m.records.size(); ++i)
        CHECK(m.records[i].split == m2.records[i].split);
}

TEST_CASE("split_corpus: 1130 utterances go 904/113/113") {
    corpus::CorpusManifest m;
    for (int u = 0; u < 1130; ++u) {
        corpus::UtteranceRecord r;
        r.utterance_id = "u" + std::to_string(u);
        r.speaker_id = "spk0";
        r.domain = "L2";
        m.records.push_back(r);
    }
    corpus::split_corpus(m, 9);
    std::array<int, 3> counts{};
    for (const auto& r : m.records) counts[static_cast<std::size_t>(r.split)]++;
    CHECK(counts[0] == 904);
    CHECK(counts[1] == 113);
    CHECK(counts[2] == 113);
}

TEST_CASE("split_corpus rejects tiny corpora") {
    corpus::CorpusManifest m;
    for (int u = 0; u < 5; ++u) {
        corpus::UtteranceRecord r;
        r.utterance_id = "u" + std::to_string(u);
        r.speaker_id = "spk0";
        m.records.push_back(r);
    }
    CHECK_THROWS_AS(corpus::split_corpus(m, 1), CorpusTooSmall);
}

TEST_CASE("label_intensity labels exactly the L2 half, inside (0,1)") {
    const auto dir = temp_dir("label");
    auto m = corpus::generate_synthetic_corpus(small_spec(), dir.string());
    corpus::LabelingOptions opt;
    opt.seed = 7;
    const auto res = corpus::label_intensity(m, opt);
    CHECK(res.ordered_pair_accuracy >= 0.95);
    for (const auto& r : m.records) {
        if (r.domain == "L2") {
            REQUIRE(r.intensity.has_value());
            CHECK(*r.intensity > 0.0);
            CHECK(*r.intensity < 1.0);
        } else {
            CHECK(!r.intensity.has_value());
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("mean label rises with perturbation magnitude") {
    corpus::SyntheticSpec spec;
    spec.n_speakers = 2;
    spec.n_accents = 3;
    spec.utterances_per_speaker = 5;
    spec.accent_magnitudes = {0.2, 0.5, 1.0};
    spec.seed = 44;
    const auto dir = temp_dir("ordering");
    auto m = corpus::generate_synthetic_corpus(spec, dir.string());
    corpus::LabelingOptions opt;
    opt.seed = 7;
    corpus::label_intensity(m, opt);
    std::array<double, 3> sum{};
    std::array<int, 3> n{};
    for (const auto& r : m.records)
        if (r.domain == "L2") {
            sum[static_cast<std::size_t>(r.accent_id)] += *r.intensity;
            n[static_cast<std::size_t>(r.accent_id)]++;
        }
    CHECK(sum[0] / n[0] < sum[1] / n[1]);
    CHECK(sum[1] / n[1] < sum[2] / n[2]);
    fs::remove_all(dir);
}

TEST_CASE("zero-perturbation corpus yields degenerate mid labels") {
    corpus::SyntheticSpec spec = small_spec();
    spec.n_accents = 1;
    spec.accent_magnitudes = {0.0};
    spec.magnitude_jitter = 0.0;
    spec.utterances_per_speaker = 4;
    const auto dir = temp_dir("degenerate");
    auto m = corpus::generate_synthetic_corpus(spec, dir.string());
    corpus::LabelingOptions opt;
    opt.seed = 7;
    corpus::label_intensity(m, opt);
    for (const auto& r : m.records)
        if (r.domain == "L2") CHECK(std::abs(*r.intensity - 0.5) <= 0.2);
    fs::remove_all(dir);
}

TEST_CASE("label_intensity rejects unpaired L2 records") {
    const auto dir = temp_dir("unpaired");
    auto m = corpus::generate_synthetic_corpus(small_spec(), dir.string());
    // drop the first L1 record
    for (std::size_t i = 0; i < m.records.size(); ++i)
        if (m.records[i].domain == "L1") {
            m.records.erase(m.records.begin() + static_cast<long>(i));
            break;
        }
    corpus::LabelingOptions opt;
    opt.seed = 7;
    CHECK_THROWS_AS(corpus::label_intensity(m, opt), UnpairedUtterance);
    fs::remove_all(dir);
}

TEST_CASE("phoneme ids are stable and include silence") {
    const auto& inv = corpus::arpabet_inventory();
    CHECK(inv.size() >= 40);
    CHECK(corpus::phoneme_id(inv[0]) == 0);
    CHECK_THROWS_AS(corpus::phoneme_id("NOPE"), IndexError);
}
