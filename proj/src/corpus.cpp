#include "caitts/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "caitts/error.hpp"

namespace caitts::corpus {

namespace fs = std::filesystem;

const std::vector<std::string>& arpabet_inventory() {
    static const std::vector<std::string> inv = {
        "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER",
        "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG",
        "OW", "OY", "P",  "R",  "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",
        "Y",  "Z",  "ZH", "SIL"};
    return inv;
}

std::size_t phoneme_id(const std::string& name) {
    const auto& inv = arpabet_inventory();
    const auto it = std::find(inv.begin(), inv.end(), name);
    if (it == inv.end()) throw IndexError("unknown phoneme " + name);
    return static_cast<std::size_t>(it - inv.begin());
}

namespace {

constexpr double kPi = std::numbers::pi;

struct UtterancePlan {
    std::vector<std::string> phonemes;
    std::vector<std::size_t> base_durations;
    double base_f0 = 170.0;
    double contour_phase = 0.0;
    std::vector<double> phoneme_amp;
};

// Harmonic synthesis from per-frame pitch/amplitude contours. The waveform
// length is chosen so the STFT frame count equals the duration sum exactly.
dsp::Waveform synthesize_utterance(const std::vector<double>& f0_per_frame,
                                   const std::vector<double>& amp_per_frame,
                                   const dsp::AudioConfig& cfg) {
    const std::size_t frame = cfg.frame_samples();
    const std::size_t hop = cfg.hop_samples();
    const std::size_t n_frames = f0_per_frame.size();
    const std::size_t n_samples = frame + (n_frames - 1) * hop;

    dsp::Waveform w;
    w.sample_rate = cfg.sample_rate;
    w.samples.resize(n_samples);
    double phase = 0.0;
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double fpos = std::min(static_cast<double>(n) / static_cast<double>(hop),
                                     static_cast<double>(n_frames - 1));
        const std::size_t fi = static_cast<std::size_t>(fpos);
        const std::size_t fj = std::min(fi + 1, n_frames - 1);
        const double t = fpos - static_cast<double>(fi);
        const double f0 = (1.0 - t) * f0_per_frame[fi] + t * f0_per_frame[fj];
        const double amp = (1.0 - t) * amp_per_frame[fi] + t * amp_per_frame[fj];
        phase += 2.0 * kPi * f0 / cfg.sample_rate;
        // three harmonics give a vowel-like timbre
        const double v = std::sin(phase) + 0.5 * std::sin(2.0 * phase) + 0.25 * std::sin(3.0 * phase);
        w.samples[n] = std::clamp(amp * v / 1.75, -1.0, 1.0);
    }
    return w;
}

std::pair<std::vector<double>, std::vector<double>> prosody_contours(
    const UtterancePlan& plan, const std::vector<std::size_t>& durations, double magnitude,
    const PerturbationModel& p) {
    std::size_t n_frames = 0;
    for (std::size_t d : durations) n_frames += d;
    std::vector<double> f0(n_frames), amp(n_frames);
    std::size_t off = 0;
    for (std::size_t ph = 0; ph < durations.size(); ++ph) {
        for (std::size_t i = 0; i < durations[ph]; ++i, ++off) {
            const double pos = static_cast<double>(off) / static_cast<double>(n_frames);
            const double contour =
                p.pitch_contour_gain_hz * magnitude * std::sin(2.0 * kPi * pos + plan.contour_phase);
            f0[off] = plan.base_f0 + p.pitch_shift_hz * magnitude + contour;
            amp[off] = plan.phoneme_amp[ph] * (1.0 + p.energy_gain * magnitude);
        }
    }
    return {f0, amp};
}

std::size_t frame_count_of(const std::string& wav_path, const dsp::AudioConfig& cfg) {
    const dsp::Waveform w = dsp::read_wav(wav_path, cfg.sample_rate);
    return dsp::stft_frame_count(w.samples.size(), cfg.frame_samples(), cfg.hop_samples());
}

}  // namespace

CorpusManifest generate_synthetic_corpus(const SyntheticSpec& spec, const std::string& root) {
    if (spec.accent_magnitudes.size() < spec.n_accents)
        throw ConfigError("need one magnitude per accent");
    fs::create_directories(fs::path(root) / "wav");

    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> n_ph_dist(4, 6);
    std::uniform_int_distribution<std::size_t> dur_dist(4, 8);
    std::uniform_real_distribution<double> f0_dist(140.0, 220.0);
    std::uniform_real_distribution<double> amp_dist(0.15, 0.35);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> jitter_dist(1.0 - spec.magnitude_jitter,
                                                       1.0 + spec.magnitude_jitter);
    // vowel-heavy inventory keeps every frame voiced
    const std::vector<std::string> vowels = {"AA", "AE", "AH", "EH", "ER", "IH",
                                             "IY", "OW", "UH", "UW", "AO", "EY"};
    std::uniform_int_distribution<std::size_t> vowel_dist(0, vowels.size() - 1);

    CorpusManifest m;
    m.root = root;
    for (std::size_t spk = 0; spk < spec.n_speakers; ++spk) {
        const double speaker_f0 = f0_dist(rng);
        for (std::size_t acc = 0; acc < spec.n_accents; ++acc) {
            for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u) {
                UtterancePlan plan;
                plan.base_f0 = speaker_f0;
                plan.contour_phase = phase_dist(rng);
                const std::size_t n_ph = n_ph_dist(rng);
                for (std::size_t i = 0; i < n_ph; ++i) {
                    plan.phonemes.push_back(vowels[vowel_dist(rng)]);
                    plan.base_durations.push_back(dur_dist(rng));
                    plan.phoneme_amp.push_back(amp_dist(rng));
                }
                const double magnitude = spec.accent_magnitudes[acc] * jitter_dist(rng);

                std::ostringstream id;
                id << "spk" << spk << "_acc" << acc << "_utt" << u;

                // L1: zero perturbation (flat prosody base)
                // L2: accent-scaled perturbation of the same base
                for (int domain = 0; domain < 2; ++domain) {
                    const bool is_l2 = domain == 1;
                    const double mag = is_l2 ? magnitude : 0.0;
                    std::vector<std::size_t> durations = plan.base_durations;
                    if (is_l2)
                        for (std::size_t& d : durations)
                            d = std::max<std::size_t>(
                                1, static_cast<std::size_t>(std::llround(
                                       static_cast<double>(d) *
                                       (1.0 + spec.perturbation.duration_stretch * mag))));
                    const auto [f0, amp] =
                        prosody_contours(plan, durations, mag, spec.perturbation);
                    const dsp::Waveform w = synthesize_utterance(f0, amp, spec.audio);

                    UtteranceRecord rec;
                    rec.utterance_id = id.str();
                    rec.speaker_id = "spk" + std::to_string(spk);
                    rec.accent_id = static_cast<int>(acc);
                    rec.domain = is_l2 ? "L2" : "L1";
                    rec.wav_path = "wav/" + rec.utterance_id + (is_l2 ? "_L2" : "_L1") + ".wav";
                    rec.phonemes = plan.phonemes;
                    rec.durations = durations;
                    if (is_l2) rec.true_magnitude = magnitude;
                    dsp::write_wav((fs::path(root) / rec.wav_path).string(), w);
                    m.records.push_back(std::move(rec));
                }
            }
        }
    }

    nlohmann::json meta;
    meta["generator"] = "synthetic-harmonic";
    meta["seed"] = spec.seed;
    meta["accent_magnitudes"] = spec.accent_magnitudes;
    meta["magnitude_jitter"] = spec.magnitude_jitter;
    m.metadata_json = meta.dump();

    save_manifest(m, "manifest.tsv");
    std::ofstream meta_out(fs::path(root) / "metadata.json");
    meta_out << m.metadata_json << "\n";
    return m;
}

void save_manifest(const CorpusManifest& m, const std::string& filename) {
    std::ofstream out(fs::path(m.root) / filename);
    if (!out) throw MissingAsset("cannot write manifest in " + m.root);
    out << "utterance_id\tspeaker_id\taccent_id\tdomain\twav_path\tphonemes\tdurations\tintensity\n";
    out.precision(17);
    for (const auto& r : m.records) {
        out << r.utterance_id << '\t' << r.speaker_id << '\t' << r.accent_id << '\t' << r.domain
            << '\t' << r.wav_path << '\t';
        for (std::size_t i = 0; i < r.phonemes.size(); ++i)
            out << (i ? " " : "") << r.phonemes[i];
        out << '\t';
        for (std::size_t i = 0; i < r.durations.size(); ++i)
            out << (i ? " " : "") << r.durations[i];
        out << '\t';
        if (r.intensity)
            out << *r.intensity;
        else
            out << "-";
        out << "\n";
    }
}

CorpusManifest load_corpus(const std::string& root, const dsp::AudioConfig& cfg,
                           const std::string& manifest_override) {
    const fs::path manifest_path =
        manifest_override.empty() ? fs::path(root) / "manifest.tsv" : fs::path(manifest_override);
    std::ifstream in(manifest_path);
    if (!in) throw ParseError("missing manifest " + manifest_path.string());

    CorpusManifest m;
    m.root = root;
    std::string line;
    std::getline(in, line);  // header
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() < 7)
            throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                             ": expected >= 7 columns");
        UtteranceRecord r;
        r.utterance_id = cols[0];
        r.speaker_id = cols[1];
        try {
            r.accent_id = std::stoi(cols[2]);
        } catch (const std::exception&) {
            throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                             ": bad accent_id");
        }
        r.domain = cols[3];
        if (r.domain != "L1" && r.domain != "L2")
            throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                             ": domain must be L1 or L2");
        r.wav_path = cols[4];
        std::stringstream phs(cols[5]);
        std::string tok;
        while (phs >> tok) r.phonemes.push_back(tok);
        std::stringstream ds(cols[6]);
        while (ds >> tok) {
            try {
                r.durations.push_back(std::stoul(tok));
            } catch (const std::exception&) {
                throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                                 ": bad duration");
            }
        }
        if (r.phonemes.empty() || r.phonemes.size() != r.durations.size())
            throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                             ": phoneme/duration count mismatch");
        if (cols.size() >= 8 && cols[7] != "-" && !cols[7].empty()) {
            try {
                r.intensity = std::stod(cols[7]);
            } catch (const std::exception&) {
                throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                                 ": bad intensity");
            }
        }
        if (!fs::exists(fs::path(root) / r.wav_path))
            throw MissingAsset((fs::path(root) / r.wav_path).string());
        m.records.push_back(std::move(r));
    }

    // reconcile duration sums with actual frame counts
    for (auto& r : m.records) {
        const std::size_t frames = frame_count_of((fs::path(root) / r.wav_path).string(), cfg);
        long long total = 0;
        for (std::size_t d : r.durations) total += static_cast<long long>(d);
        const long long delta = static_cast<long long>(frames) - total;
        if (delta == 0) continue;
        if (std::llabs(delta) > 3)
            throw AlignmentMismatch(r.utterance_id + ": durations sum " + std::to_string(total) +
                                    " vs " + std::to_string(frames) + " frames");
        const long long adjusted = static_cast<long long>(r.durations.back()) + delta;
        if (adjusted < 1)
            throw AlignmentMismatch(r.utterance_id + ": reconciliation would empty final phoneme");
        std::cerr << "warning: " << r.utterance_id << ": adjusting final phoneme by " << delta
                  << " frame(s)\n";
        r.durations.back() = static_cast<std::size_t>(adjusted);
    }

    const fs::path meta_path = fs::path(root) / "metadata.json";
    if (fs::exists(meta_path)) {
        std::ifstream meta_in(meta_path);
        std::stringstream buf;
        buf << meta_in.rdbuf();
        m.metadata_json = buf.str();
    }
    return m;
}

void split_corpus(CorpusManifest& m, std::uint64_t seed) {
    // unique utterance ids per speaker; both domains share the assignment
    std::map<std::string, std::vector<std::string>> by_speaker;
    for (const auto& r : m.records) {
        auto& ids = by_speaker[r.speaker_id];
        if (std::find(ids.begin(), ids.end(), r.utterance_id) == ids.end())
            ids.push_back(r.utterance_id);
    }
    std::map<std::string, int> assignment;
    for (auto& [speaker, ids] : by_speaker) {
        if (ids.size() < 10)
            throw CorpusTooSmall(speaker + " has " + std::to_string(ids.size()) +
                                 " utterances; need >= 10");
        std::sort(ids.begin(), ids.end());
        std::seed_seq seq{seed, std::hash<std::string>{}(speaker)};
        std::mt19937_64 rng(seq);
        std::shuffle(ids.begin(), ids.end(), rng);
        const std::size_t n = ids.size();
        const std::size_t n_val = static_cast<std::size_t>(std::llround(n / 10.0));
        const std::size_t n_test = n_val;
        for (std::size_t i = 0; i < n; ++i)
            assignment[ids[i]] = i < n - n_val - n_test ? 0 : (i < n - n_test ? 1 : 2);
    }
    for (auto& r : m.records) r.split = assignment.at(r.utterance_id);
}

features::AccentFeatureVector utterance_features(const UtteranceRecord& rec,
                                                 const std::string& root,
                                                 const dsp::AudioConfig& cfg) {
    const dsp::Waveform w =
        dsp::read_wav((fs::path(root) / rec.wav_path).string(), cfg.sample_rate);
    features::AccentFeatureVector v = features::compute_functionals(dsp::extract_prosody(w, cfg));
    v.utterance_id = rec.utterance_id;
    v.speaker_id = rec.speaker_id;
    v.accent_id = rec.accent_id;
    return v;
}

namespace {

LabelingResult label_group(CorpusManifest& m, const std::vector<std::size_t>& l1_idx,
                           const std::vector<std::size_t>& l2_idx, int accent_id,
                           const LabelingOptions& opt) {
    std::vector<features::AccentFeatureVector> l1(l1_idx.size()), l2(l2_idx.size());
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(l1_idx.size()); ++i)
        l1[i] = utterance_features(m.records[l1_idx[i]], m.root, opt.audio);
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(l2_idx.size()); ++i)
        l2[i] = utterance_features(m.records[l2_idx[i]], m.root, opt.audio);

    // standardize features so the solver is well conditioned; a monotone
    // per-dimension affine map keeps the ranking problem equivalent
    for (std::size_t d = 0; d < features::kFeatureDim; ++d) {
        std::vector<double> col;
        col.reserve(l1.size() + l2.size());
        for (const auto& v : l1) col.push_back(v.values[d]);
        for (const auto& v : l2) col.push_back(v.values[d]);
        const auto [stats, unused] = dsp::fit_normalize(col);
        for (auto& v : l1) v.values[d] = (v.values[d] - stats.mean) / stats.std_dev;
        for (auto& v : l2) v.values[d] = (v.values[d] - stats.mean) / stats.std_dev;
    }

    const std::size_t k = opt.random_pairs > 0 ? opt.random_pairs : 2 * l2.size();
    const ranker::ConstraintSets cs = ranker::build_constraint_sets(
        l1, l2, ranker::PairingPolicy::MatchedUtterance, k, opt.seed);
    ranker::RankModel model = ranker::train_rank_svm(cs, opt.C);
    model.accent_id = accent_id;

    std::size_t correct = 0;
    for (const auto& v : l2) {
        for (const auto& u : l1)
            if (u.utterance_id == v.utterance_id && ranker::score(model, v) > ranker::score(model, u))
                ++correct;
    }

    const double pair_accuracy =
        l2.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(l2.size());

    if (pair_accuracy < 0.6) {
        // The ranking direction fails to separate matched L1/L2 pairs, so the
        // score spread carries no accent signal (e.g. an unaccented corpus);
        // min-max normalization would stretch noise across (0,1).  Assign the
        // neutral midpoint instead.
        for (std::size_t i : l2_idx) m.records[i].intensity = 0.5;
        model.score_min = 0.0;
        model.score_max = 0.0;
    } else {
        std::vector<double> raw(l2.size());
        for (std::size_t i = 0; i < l2.size(); ++i) raw[i] = ranker::score(model, l2[i]);
        const auto [labels, bounds] = ranker::normalize_intensities(raw);
        model.score_min = bounds.first;
        model.score_max = bounds.second;
        for (std::size_t i = 0; i < l2.size(); ++i) m.records[l2_idx[i]].intensity = labels[i];
    }

    LabelingResult res;
    res.ordered_pair_accuracy = pair_accuracy;
    res.models.push_back(std::move(model));
    return res;
}

}  // namespace

LabelingResult label_intensity(CorpusManifest& m, const LabelingOptions& opt) {
    std::map<std::string, std::size_t> l1_by_utt;
    for (std::size_t i = 0; i < m.records.size(); ++i)
        if (m.records[i].domain == "L1") l1_by_utt[m.records[i].utterance_id] = i;

    std::map<int, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        if (r.domain != "L2") continue;
        const auto it = l1_by_utt.find(r.utterance_id);
        if (it == l1_by_utt.end()) throw UnpairedUtterance("no L1 match for " + r.utterance_id);
        const int key = opt.per_accent ? r.accent_id : -1;
        groups[key].second.push_back(i);
        groups[key].first.push_back(it->second);
    }
    if (groups.empty()) throw EmptyInput("no L2 records to label");

    LabelingResult res;
    double acc_weighted = 0.0;
    std::size_t total = 0;
    for (auto& [accent, idx] : groups) {
        LabelingResult g = label_group(m, idx.first, idx.second, accent, opt);
        acc_weighted += g.ordered_pair_accuracy * static_cast<double>(idx.second.size());
        total += idx.second.size();
        for (auto& model : g.models) res.models.push_back(std::move(model));
    }
    res.ordered_pair_accuracy = acc_weighted / static_cast<double>(total);
    return res;
}

}  // namespace caitts::corpus
