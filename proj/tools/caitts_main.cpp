// Command-line front end wiring the pipeline end to end:
// gen-corpus -> extract-features -> train-ranker / label-intensity ->
// train-tts -> synthesize -> evaluate -> plot, plus grad-check.

#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "caitts/corpus.hpp"
#include "caitts/error.hpp"
#include "caitts/eval.hpp"
#include "caitts/model.hpp"
#include "caitts/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace caitts;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw MissingAsset("cannot write " + path.string());
    out << text;
    if (text.empty() || text.back() != '\n') out << "\n";
}

void write_effective_config(const std::string& out_dir, const json& cfg) {
    write_text(fs::path(out_dir) / "effective_config.json", cfg.dump(2));
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

void write_mel_tsv(const fs::path& path, const std::vector<double>& mel, std::size_t frames,
                   std::size_t n_mels) {
    std::ofstream out(path);
    out.precision(17);
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t m = 0; m < n_mels; ++m) out << (m ? "\t" : "") << mel[f * n_mels + m];
        out << "\n";
    }
}

std::pair<std::vector<double>, std::size_t> read_mel_tsv(const fs::path& path,
                                                         std::size_t n_mels) {
    std::ifstream in(path);
    if (!in) throw MissingAsset("cannot open " + path.string());
    std::vector<double> mel;
    std::string line;
    std::size_t frames = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        double v;
        std::size_t count = 0;
        while (ss >> v) {
            mel.push_back(v);
            ++count;
        }
        if (count != n_mels) throw ParseError(path.string() + ": expected " +
                                              std::to_string(n_mels) + " columns");
        ++frames;
    }
    return {mel, frames};
}

// --- minimal SVG rendering -------------------------------------------------

std::string svg_header(int w, int h) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return s.str();
}

void render_curve_svg(const fs::path& path, const std::vector<double>& ys,
                      const std::string& title) {
    const int W = 640, H = 400, pad = 50;
    double lo = *std::min_element(ys.begin(), ys.end());
    double hi = *std::max_element(ys.begin(), ys.end());
    if (hi <= lo) hi = lo + 1.0;
    std::ostringstream s;
    s << svg_header(W, H);
    s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const double x = pad + (W - 2.0 * pad) * static_cast<double>(i) /
                                   std::max<std::size_t>(1, ys.size() - 1);
        const double y = H - pad - (H - 2.0 * pad) * (ys[i] - lo) / (hi - lo);
        s << x << "," << y << " ";
    }
    s << "\"/>\n<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad
      << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n<line x1=\"" << pad << "\" y1=\"" << pad
      << "\" x2=\"" << pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n</svg>";
    write_text(path, s.str());
}

template <std::size_t N>
void render_heatmap_svg(const fs::path& path,
                        const std::array<std::array<std::size_t, N>, N>& m,
                        const std::string& title) {
    const int cell = N <= 3 ? 100 : 44, pad = 60;
    const int W = pad * 2 + cell * static_cast<int>(N), H = W + 20;
    std::size_t mx = 1;
    for (const auto& row : m)
        for (std::size_t v : row) mx = std::max(mx, v);
    std::ostringstream s;
    s << svg_header(W, H);
    s << "<text x=\"" << W / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const double t = static_cast<double>(m[i][j]) / static_cast<double>(mx);
            const int shade = static_cast<int>(255 - 205 * t);
            s << "<rect x=\"" << pad + cell * static_cast<int>(j) << "\" y=\""
              << pad + cell * static_cast<int>(i) << "\" width=\"" << cell << "\" height=\"" << cell
              << "\" fill=\"rgb(" << shade << "," << shade << ",255)\" stroke=\"gray\"/>\n"
              << "<text x=\"" << pad + cell * static_cast<int>(j) + cell / 2 << "\" y=\""
              << pad + cell * static_cast<int>(i) + cell / 2 + 5
              << "\" text-anchor=\"middle\" font-size=\"13\">" << m[i][j] << "</text>\n";
        }
    s << "</svg>";
    write_text(path, s.str());
}

// --- grad-check suite ------------------------------------------------------

double run_grad_checks(std::ostream& os) {
    using nn::Tensor;
    std::mt19937_64 rng(321);
    double worst = 0.0;
    auto report = [&](const std::string& name, double err) {
        os << "  " << name << ": max rel err " << err << "\n";
        worst = std::max(worst, err);
    };

    {
        auto fn = [](std::vector<Tensor>& in) {
            return nn::sum(nn::linear_forward(in[0], in[1], in[2]));
        };
        report("linear", nn::grad_check(fn, {nn::init_uniform({5, 4}, 4, rng),
                                             nn::init_uniform({4, 3}, 4, rng),
                                             nn::init_uniform({3}, 4, rng)}));
    }
    {
        auto fn = [](std::vector<Tensor>& in) {
            return nn::sum(nn::mul(nn::embedding_lookup(in[0], {0, 2, 2, 1}), in[1]));
        };
        report("embedding", nn::grad_check(fn, {nn::init_uniform({4, 3}, 3, rng),
                                                nn::init_uniform({4, 3}, 3, rng)}));
    }
    {
        auto fn = [](std::vector<Tensor>& in) {
            return nn::sum(nn::conv1d_forward(in[0], in[1], in[2]));
        };
        report("conv1d", nn::grad_check(fn, {nn::init_uniform({6, 3}, 3, rng),
                                             nn::init_uniform({3, 3, 2}, 9, rng),
                                             nn::init_uniform({2}, 9, rng)}));
    }
    {
        auto fn = [](std::vector<Tensor>& in) {
            return nn::sum(nn::self_attention_forward(in[0], 2, in[1], in[2], in[3], in[4]));
        };
        std::vector<Tensor> in{nn::init_uniform({4, 6}, 6, rng)};
        for (int i = 0; i < 4; ++i) in.push_back(nn::init_uniform({6, 6}, 6, rng));
        report("self_attention", nn::grad_check(fn, in));
    }
    {
        auto fn = [](std::vector<Tensor>& in) {
            nn::GruParams p{in[1], in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9]};
            nn::GruParams q{in[10], in[11], in[12], in[13], in[14], in[15], in[16], in[17], in[18]};
            return nn::sum(nn::gru_forward(in[0], Tensor::zeros({1, 3}), p, &q).outputs);
        };
        std::vector<Tensor> in{nn::init_uniform({4, 2}, 2, rng)};
        for (int dir = 0; dir < 2; ++dir) {
            for (int i = 0; i < 3; ++i) in.push_back(nn::init_uniform({2, 3}, 2, rng));
            for (int i = 0; i < 3; ++i) in.push_back(nn::init_uniform({3, 3}, 3, rng));
            for (int i = 0; i < 3; ++i) in.push_back(nn::init_uniform({3}, 3, rng));
        }
        report("bi-gru", nn::grad_check(fn, in));
    }
    {
        auto fn = [](std::vector<Tensor>& in) {
            return nn::sum(nn::layer_norm(in[0], in[1], in[2]));
        };
        report("layer_norm", nn::grad_check(fn, {nn::init_uniform({5, 4}, 4, rng),
                                                 nn::init_uniform({4}, 4, rng),
                                                 nn::init_uniform({4}, 4, rng)}));
    }
    {
        auto fn = [](std::vector<Tensor>& in) { return nn::mse_loss(in[0], in[1]); };
        report("mse_loss", nn::grad_check(fn, {nn::init_uniform({3, 3}, 3, rng),
                                               nn::init_uniform({3, 3}, 3, rng)}));
    }
    {
        // full CAI-TTS loss on a 2-phoneme toy batch
        model::ModelConfig cfg;
        cfg.n_fft_blocks = 1;
        cfg.hidden_dim = 8;
        cfg.n_heads = 2;
        cfg.accent_dim = 4;
        cfg.intensity_dim = 4;
        cfg.speaker_dim = 8;
        cfg.predictor_channels = 6;
        cfg.mel_dim = 5;
        cfg.gru_hidden = 4;
        cfg.n_phonemes = 5;
        cfg.n_speakers = 2;
        cfg.n_accents = 2;
        model::CaiTts m(cfg, 99);
        model::TrainingTargets targets;
        targets.durations = {2, 2};
        targets.n_frames = 4;
        targets.mel.assign(4 * cfg.mel_dim, 0.3);
        targets.phoneme_pitch = {0.5, -0.5};
        targets.phoneme_energy = {0.2, -0.2};
        targets.intensity = 0.7;

        std::vector<Tensor> leaves;
        for (auto& [name, t] : m.params().items()) leaves.push_back(t);
        auto fn = [&](std::vector<Tensor>&) {
            std::mt19937_64 r(0);
            return m.training_step_forward({1, 3}, 0, 1, targets, true, false, r).l_final;
        };
        report("full_model_loss", nn::grad_check(fn, leaves));
    }
    return worst;
}

// --- shared model/audio option bundles -------------------------------------

struct ModelOpts {
    std::string preset = "desk";
    std::size_t blocks = 0, hidden = 0, heads = 0, gru = 0;
    double dropout = -1.0;

    model::ModelConfig build() const {
        model::ModelConfig c =
            preset == "full" ? model::ModelConfig::full_scale() : model::ModelConfig::desk_scale();
        if (blocks) c.n_fft_blocks = blocks;
        if (hidden) {
            c.hidden_dim = hidden;
            c.speaker_dim = hidden;
            c.accent_dim = hidden / 2;
            c.intensity_dim = hidden - c.accent_dim;
        }
        if (heads) c.n_heads = heads;
        if (gru) c.gru_hidden = gru;
        if (dropout >= 0.0) c.dropout = dropout;
        return c;
    }
    json to_json() const {
        return {{"preset", preset}, {"blocks", blocks},   {"hidden", hidden},
                {"heads", heads},   {"gru_hidden", gru},  {"dropout", dropout}};
    }
};

void add_model_opts(CLI::App* cmd, ModelOpts& m) {
    cmd->add_option("--preset", m.preset, "model preset: desk or full")
        ->check(CLI::IsMember({"desk", "full"}));
    cmd->add_option("--fft-blocks", m.blocks, "FFT block count override");
    cmd->add_option("--hidden", m.hidden, "hidden width override");
    cmd->add_option("--heads", m.heads, "attention head count override");
    cmd->add_option("--gru-hidden", m.gru, "intensity predictor GRU width override");
    cmd->add_option("--dropout", m.dropout, "dropout rate override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"controllable accent-intensity TTS pipeline"};
    app.require_subcommand(1);

    // --config FILE: JSON defaults, overridden by explicit flags. We expand
    // the file into synthetic argv entries placed before the user's flags.
    std::vector<std::string> args(argv + 1, argv + argc);
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] != "--config") continue;
        if (i + 1 >= args.size()) {
            std::cerr << "error: --config needs a file argument\n";
            return 2;
        }
        std::ifstream cfg_in(args[i + 1]);
        if (!cfg_in) {
            std::cerr << "error: --config: cannot open " << args[i + 1] << "\n";
            return 2;
        }
        json cfg;
        try {
            cfg_in >> cfg;
        } catch (const std::exception& e) {
            std::cerr << "error: --config: " << e.what() << "\n";
            return 2;
        }
        std::vector<std::string> expanded;
        for (const auto& [key, value] : cfg.items()) {
            expanded.push_back("--" + key);
            if (value.is_array()) {
                for (const auto& v : value)
                    expanded.push_back(v.is_string() ? v.get<std::string>() : v.dump());
                continue;
            }
            if (!value.is_boolean())
                expanded.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
        args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
        // insert after the subcommand token so flags bind to it
        args.insert(args.begin() + 1, expanded.begin(), expanded.end());
        break;
    }

    // ---- gen-corpus ----
    auto* gen = app.add_subcommand("gen-corpus", "generate a paired synthetic L1/L2 corpus");
    std::string gen_out;
    corpus::SyntheticSpec spec;
    gen->add_option("--out", gen_out, "output corpus directory")->required();
    gen->add_option("--seed", spec.seed, "rng seed")->required();
    gen->add_option("--speakers", spec.n_speakers, "speaker count");
    gen->add_option("--accents", spec.n_accents, "accent count");
    gen->add_option("--utterances", spec.utterances_per_speaker, "utterances per speaker per accent");
    gen->add_option("--magnitudes", spec.accent_magnitudes, "per-accent perturbation magnitudes");
    gen->add_option("--jitter", spec.magnitude_jitter, "per-utterance magnitude jitter");
    gen->add_option("--pitch-shift", spec.perturbation.pitch_shift_hz, "pitch shift Hz at magnitude 1");
    gen->add_option("--contour-gain", spec.perturbation.pitch_contour_gain_hz,
                    "pitch contour gain Hz at magnitude 1");
    gen->add_option("--energy-gain", spec.perturbation.energy_gain, "energy gain at magnitude 1");
    gen->add_option("--duration-stretch", spec.perturbation.duration_stretch,
                    "duration stretch at magnitude 1");

    // ---- extract-features ----
    auto* exf = app.add_subcommand("extract-features", "accent feature vectors for a corpus");
    std::string exf_corpus, exf_out;
    int exf_jobs = 0;
    exf->add_option("--corpus", exf_corpus, "corpus directory")->required();
    exf->add_option("--out", exf_out, "output directory")->required();
    exf->add_option("--jobs", exf_jobs, "max parallel feature-extraction jobs");

    // ---- train-ranker ----
    auto* trr = app.add_subcommand("train-ranker", "train the accent-intensity ranking function");
    std::string trr_corpus, trr_out;
    corpus::LabelingOptions trr_opt;
    trr->add_option("--corpus", trr_corpus, "corpus directory")->required();
    trr->add_option("--out", trr_out, "output directory")->required();
    trr->add_option("--C", trr_opt.C, "rank-SVM regularization weight");
    trr->add_option("--seed", trr_opt.seed, "rng seed for random pairs")->required();
    trr->add_option("--random-pairs", trr_opt.random_pairs, "random pair count (0: 2x matched)");
    trr->add_flag("--per-accent", trr_opt.per_accent, "one ranker per accent category");

    // ---- label-intensity ----
    auto* lab = app.add_subcommand("label-intensity", "write intensity labels for L2 records");
    std::string lab_corpus, lab_out;
    corpus::LabelingOptions lab_opt;
    lab->add_option("--corpus", lab_corpus, "corpus directory")->required();
    lab->add_option("--out", lab_out, "output directory")->required();
    lab->add_option("--C", lab_opt.C, "rank-SVM regularization weight");
    lab->add_option("--seed", lab_opt.seed, "rng seed for random pairs")->required();
    lab->add_option("--random-pairs", lab_opt.random_pairs, "random pair count (0: 2x matched)");
    lab->add_flag("--per-accent", lab_opt.per_accent, "one ranker per accent category");

    // ---- train-tts ----
    auto* trt = app.add_subcommand("train-tts", "train the acoustic model");
    std::string trt_corpus, trt_manifest, trt_out;
    training::TrainOptions trt_opt;
    ModelOpts trt_model;
    bool trt_no_cc = false;
    std::uint64_t trt_init_seed = 5;
    trt->add_option("--corpus", trt_corpus, "corpus directory")->required();
    trt->add_option("--manifest", trt_manifest, "labeled manifest path (default corpus/manifest.labeled.tsv)");
    trt->add_option("--out", trt_out, "output directory")->required();
    trt->add_option("--steps", trt_opt.steps, "optimizer steps");
    trt->add_option("--seed", trt_opt.seed, "training rng seed")->required();
    trt->add_option("--init-seed", trt_init_seed, "parameter init seed");
    trt->add_option("--warmup", trt_opt.adam.warmup_steps, "Noam warmup steps");
    trt->add_option("--lr-scale", trt_opt.adam.base_scale, "Noam base learning-rate scale");
    trt->add_flag("--no-consistency", trt_no_cc, "ablation: drop the consistency loss");
    add_model_opts(trt, trt_model);

    // ---- synthesize ----
    auto* syn = app.add_subcommand("synthesize", "generate mel-spectrograms");
    std::string syn_ckpt, syn_out, syn_phonemes, syn_sweep;
    std::size_t syn_speaker = 0, syn_accent = 0;
    double syn_intensity = 0.5;
    syn->add_option("--checkpoint", syn_ckpt, "model checkpoint")->required();
    syn->add_option("--out", syn_out, "output directory")->required();
    syn->add_option("--phonemes", syn_phonemes, "space-separated ARPAbet sequence")->required();
    syn->add_option("--speaker", syn_speaker, "speaker index");
    syn->add_option("--accent", syn_accent, "accent id");
    syn->add_option("--intensity", syn_intensity, "accent intensity in (0,1)");
    syn->add_option("--sweep", syn_sweep, "intensity sweep start:stop:step, e.g. 0.1:0.9:0.1");

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "objective metrics against ground truth");
    std::string ev_corpus, ev_manifest, ev_ckpt, ev_stats, ev_out, ev_split = "all";
    ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
    ev->add_option("--manifest", ev_manifest, "labeled manifest path");
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--stats", ev_stats, "train_stats.json from train-tts")->required();
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--split", ev_split, "evaluate on: all, train, val, test")
        ->check(CLI::IsMember({"all", "train", "val", "test"}));
    std::uint64_t ev_seed = 1;
    ev->add_option("--seed", ev_seed, "split seed (when --split != all)");

    // ---- plot ----
    auto* pl = app.add_subcommand("plot", "render SVG artifacts");
    std::string pl_report, pl_log, pl_wav, pl_out;
    pl->add_option("--report", pl_report, "report.json from evaluate");
    pl->add_option("--train-log", pl_log, "train_log.json from train-tts");
    pl->add_option("--wav", pl_wav, "wav file for a pitch-contour plot");
    pl->add_option("--out", pl_out, "output directory")->required();

    // ---- grad-check ----
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
    std::string gc_out;
    gc->add_option("--out", gc_out, "output directory")->required();

    try {
        std::vector<const char*> cargs;
        cargs.push_back(argv[0]);
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
            app.exit(e);
            return 0;
        }
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    const dsp::AudioConfig audio;  // 22.05 kHz / 50 ms / 12.5 ms defaults throughout

    try {
        if (gen->parsed()) {
            corpus::generate_synthetic_corpus(spec, gen_out);
            write_effective_config(
                gen_out, {{"command", "gen-corpus"},
                          {"seed", spec.seed},
                          {"speakers", spec.n_speakers},
                          {"accents", spec.n_accents},
                          {"utterances", spec.utterances_per_speaker},
                          {"magnitudes", spec.accent_magnitudes},
                          {"jitter", spec.magnitude_jitter},
                          {"pitch_shift", spec.perturbation.pitch_shift_hz},
                          {"contour_gain", spec.perturbation.pitch_contour_gain_hz},
                          {"energy_gain", spec.perturbation.energy_gain},
                          {"duration_stretch", spec.perturbation.duration_stretch}});
            std::cout << "wrote corpus to " << gen_out << "\n";
        } else if (exf->parsed()) {
            if (exf_jobs > 0) omp_set_num_threads(exf_jobs);
            const corpus::CorpusManifest m = corpus::load_corpus(exf_corpus, audio);
            std::vector<features::AccentFeatureVector> l1, l2;
            std::vector<std::size_t> idx(m.records.size());
            std::vector<features::AccentFeatureVector> all(m.records.size());
#pragma omp parallel for schedule(dynamic)
            for (long long i = 0; i < static_cast<long long>(m.records.size()); ++i)
                all[i] = corpus::utterance_features(m.records[i], m.root, audio);
            for (std::size_t i = 0; i < m.records.size(); ++i)
                (m.records[i].domain == "L1" ? l1 : l2).push_back(all[i]);
            fs::create_directories(exf_out);
            features::write_feature_tsv((fs::path(exf_out) / "features.l1.tsv").string(), l1);
            features::write_feature_tsv((fs::path(exf_out) / "features.l2.tsv").string(), l2);
            write_effective_config(exf_out, {{"command", "extract-features"},
                                             {"corpus", exf_corpus},
                                             {"jobs", exf_jobs}});
            std::cout << "wrote " << l1.size() << " L1 and " << l2.size() << " L2 vectors\n";
        } else if (trr->parsed() || lab->parsed()) {
            const bool labeling = lab->parsed();
            const std::string corpus_dir = labeling ? lab_corpus : trr_corpus;
            const std::string out_dir = labeling ? lab_out : trr_out;
            corpus::LabelingOptions opt = labeling ? lab_opt : trr_opt;
            opt.audio = audio;
            corpus::CorpusManifest m = corpus::load_corpus(corpus_dir, audio);
            const corpus::LabelingResult res = corpus::label_intensity(m, opt);
            fs::create_directories(out_dir);
            for (const auto& model : res.models) {
                const std::string name = model.accent_id < 0
                                             ? "rank_model.json"
                                             : "rank_model_acc" + std::to_string(model.accent_id) + ".json";
                model.save((fs::path(out_dir) / name).string());
            }
            if (labeling) {
                corpus::CorpusManifest out_manifest = m;
                out_manifest.root = out_dir;
                corpus::save_manifest(out_manifest, "manifest.labeled.tsv");
            }
            write_effective_config(out_dir, {{"command", labeling ? "label-intensity" : "train-ranker"},
                                             {"corpus", corpus_dir},
                                             {"C", opt.C},
                                             {"seed", opt.seed},
                                             {"random_pairs", opt.random_pairs},
                                             {"per_accent", opt.per_accent}});
            std::cout << "ordered-pair accuracy " << res.ordered_pair_accuracy << "\n";
        } else if (trt->parsed()) {
            const std::string manifest =
                trt_manifest.empty() ? (fs::path(trt_corpus) / "manifest.labeled.tsv").string()
                                     : trt_manifest;
            const corpus::CorpusManifest m = corpus::load_corpus(trt_corpus, audio, manifest);
            model::ModelConfig cfg = trt_model.build();
            const training::TrainingSet set = training::prepare_training_set(m, audio, cfg);
            trt_opt.with_consistency = !trt_no_cc;
            trt_opt.adam.model_dim = cfg.hidden_dim;
            model::CaiTts model(cfg, trt_init_seed);
            const training::TrainLog log = training::train(model, set, trt_opt);
            fs::create_directories(trt_out);
            model.save_checkpoint((fs::path(trt_out) / "checkpoint.cait").string(), trt_opt.steps);

            json stats = {{"pitch_mean", set.pitch_stats.mean},
                          {"pitch_std", set.pitch_stats.std_dev},
                          {"energy_mean", set.energy_stats.mean},
                          {"energy_std", set.energy_stats.std_dev},
                          {"speakers", json::object()}};
            for (const auto& [name, idx2] : set.speaker_index) stats["speakers"][name] = idx2;
            write_text(fs::path(trt_out) / "train_stats.json", stats.dump(2));

            json jlog;
            jlog["step_losses"] = log.step_losses;
            jlog["points"] = json::array();
            for (const auto& p : log.points)
                jlog["points"].push_back({{"step", p.step},
                                          {"l_mel", p.l_mel},
                                          {"l_dur", p.l_dur},
                                          {"l_p_pitch", p.l_p_pitch},
                                          {"l_p_energy", p.l_p_energy},
                                          {"l_cc", p.l_cc},
                                          {"l_final", p.l_final}});
            write_text(fs::path(trt_out) / "train_log.json", jlog.dump(2));
            write_effective_config(trt_out, {{"command", "train-tts"},
                                             {"corpus", trt_corpus},
                                             {"manifest", manifest},
                                             {"steps", trt_opt.steps},
                                             {"seed", trt_opt.seed},
                                             {"init_seed", trt_init_seed},
                                             {"warmup", trt_opt.adam.warmup_steps},
                                             {"lr_scale", trt_opt.adam.base_scale},
                                             {"no_consistency", trt_no_cc},
                                             {"model", trt_model.to_json()}});
            std::cout << "final l_final " << log.points.back().l_final << "\n";
        } else if (syn->parsed()) {
            std::vector<double> intensities;
            if (!syn_sweep.empty()) {
                double a, b, c;
                char c1, c2;
                std::stringstream ss(syn_sweep);
                if (!(ss >> a >> c1 >> b >> c2 >> c) || c1 != ':' || c2 != ':' || c <= 0.0) {
                    std::cerr << "error: --sweep must be start:stop:step\n";
                    return 2;
                }
                for (double v = a; v <= b + 1e-9; v += c) intensities.push_back(v);
            } else {
                intensities.push_back(syn_intensity);
            }
            for (double v : intensities)
                if (!(v > 0.0 && v < 1.0)) {
                    std::cerr << "error: --intensity must lie in the open interval (0,1), got " << v
                              << "\n";
                    return 2;
                }
            const model::CaiTts model = model::CaiTts::load_checkpoint(syn_ckpt);
            std::vector<std::size_t> phoneme_ids;
            for (const auto& p : split_tokens(syn_phonemes))
                phoneme_ids.push_back(corpus::phoneme_id(p));
            fs::create_directories(syn_out);
            for (double v : intensities) {
                model::SynthesisRequest req{phoneme_ids, syn_speaker, syn_accent, v};
                const auto r = model.infer(req);
                std::ostringstream name;
                name.precision(2);
                name << std::fixed << "mel_i" << v << ".tsv";
                write_mel_tsv(fs::path(syn_out) / name.str(), r.mel, r.n_frames,
                              model.config().mel_dim);
            }
            write_effective_config(syn_out, {{"command", "synthesize"},
                                             {"checkpoint", syn_ckpt},
                                             {"phonemes", syn_phonemes},
                                             {"speaker", syn_speaker},
                                             {"accent", syn_accent},
                                             {"intensity", syn_intensity},
                                             {"sweep", syn_sweep}});
            std::cout << "wrote " << intensities.size() << " mel file(s)\n";
        } else if (ev->parsed()) {
            const std::string manifest =
                ev_manifest.empty() ? (fs::path(ev_corpus) / "manifest.labeled.tsv").string()
                                    : ev_manifest;
            corpus::CorpusManifest m = corpus::load_corpus(ev_corpus, audio, manifest);
            if (ev_split != "all") corpus::split_corpus(m, ev_seed);
            const int want_split = ev_split == "train" ? 0 : ev_split == "val" ? 1 : 2;

            const model::CaiTts model = model::CaiTts::load_checkpoint(ev_ckpt);
            std::ifstream stats_in(ev_stats);
            if (!stats_in) throw MissingAsset("cannot open " + ev_stats);
            json stats;
            stats_in >> stats;
            const dsp::NormStats pitch_stats{stats.at("pitch_mean").get<double>(),
                                             stats.at("pitch_std").get<double>()};
            const dsp::NormStats energy_stats{stats.at("energy_mean").get<double>(),
                                              stats.at("energy_std").get<double>()};
            const auto speakers = stats.at("speakers").get<std::map<std::string, std::size_t>>();

            eval::EvalReport report;
            std::vector<double> pooled_pitch;
            std::vector<std::pair<double, double>> intensity_pairs;
            std::size_t count = 0;
            double mcd_sum = 0.0, pdtw_sum = 0.0, mae_sum = 0.0, delta_sum = 0.0;
            for (const auto& r : m.records) {
                if (r.domain != "L2" || !r.intensity) continue;
                if (ev_split != "all" && r.split != want_split) continue;
                std::vector<std::size_t> phoneme_ids;
                for (const auto& p : r.phonemes) phoneme_ids.push_back(corpus::phoneme_id(p));
                model::SynthesisRequest req{phoneme_ids, speakers.at(r.speaker_id),
                                            static_cast<std::size_t>(r.accent_id), *r.intensity};
                const auto pred = model.infer(req);

                const dsp::Waveform w =
                    dsp::read_wav((fs::path(m.root) / r.wav_path).string(), audio.sample_rate);
                std::size_t gt_frames = 0;
                const std::vector<double> gt_mel = dsp::mel_spectrogram(w, audio, &gt_frames);
                const dsp::ProsodyTrack gt_track = dsp::extract_prosody(w, audio);

                mcd_sum += eval::mcd_dtw(pred.mel, pred.n_frames, gt_mel, gt_frames, audio.n_mels);

                // expand predicted phoneme scalars to frame level
                std::vector<double> pred_pitch, pred_energy;
                for (std::size_t ph = 0; ph < pred.durations.size(); ++ph)
                    for (std::size_t f = 0; f < pred.durations[ph]; ++f) {
                        pred_pitch.push_back(pred.phoneme_pitch[ph] * pitch_stats.std_dev +
                                             pitch_stats.mean);
                        pred_energy.push_back(pred.phoneme_energy[ph] * energy_stats.std_dev +
                                              energy_stats.mean);
                    }
                pooled_pitch.insert(pooled_pitch.end(), pred_pitch.begin(), pred_pitch.end());
                pdtw_sum += eval::pitch_dtw(pred_pitch, gt_track.pitch_hz);
                mae_sum += eval::energy_mae_dtw(pred_energy, gt_track.energy);
                if (pred.durations.size() == r.durations.size())
                    delta_sum += eval::duration_boundary_delta(pred.durations, r.durations,
                                                               audio.frame_shift);

                const double predicted_intensity =
                    model
                        .predict_intensity(
                            nn::Tensor({pred.n_frames, model.config().mel_dim}, pred.mel))
                        .item();
                intensity_pairs.emplace_back(*r.intensity, predicted_intensity);
                ++count;
            }
            if (count == 0) throw EmptyInput("no records selected for evaluation");
            report.mcd_db = mcd_sum / static_cast<double>(count);
            report.pitch = eval::pitch_moments(pooled_pitch);
            report.pitch_dtw = pdtw_sum / static_cast<double>(count);
            report.energy_mae = mae_sum / static_cast<double>(count);
            report.duration_delta_ms = delta_sum / static_cast<double>(count);
            eval::intensity_confusion(intensity_pairs, report.coarse_confusion,
                                      report.fine_confusion);
            fs::create_directories(ev_out);
            write_text(fs::path(ev_out) / "report.json", report.to_json());
            write_effective_config(ev_out, {{"command", "evaluate"},
                                            {"corpus", ev_corpus},
                                            {"manifest", manifest},
                                            {"checkpoint", ev_ckpt},
                                            {"stats", ev_stats},
                                            {"split", ev_split},
                                            {"seed", ev_seed}});
            std::cout << "evaluated " << count << " utterances; MCD " << report.mcd_db << " dB\n";
        } else if (pl->parsed()) {
            fs::create_directories(pl_out);
            if (!pl_log.empty()) {
                std::ifstream in(pl_log);
                if (!in) throw MissingAsset("cannot open " + pl_log);
                json j;
                in >> j;
                const auto losses = j.at("step_losses").get<std::vector<double>>();
                render_curve_svg(fs::path(pl_out) / "loss_curve.svg", losses, "training loss");
            }
            if (!pl_report.empty()) {
                std::ifstream in(pl_report);
                if (!in) throw MissingAsset("cannot open " + pl_report);
                json j;
                in >> j;
                std::array<std::array<std::size_t, 3>, 3> coarse{};
                std::array<std::array<std::size_t, 9>, 9> fine{};
                for (std::size_t i = 0; i < 3; ++i)
                    for (std::size_t k = 0; k < 3; ++k)
                        coarse[i][k] = j.at("coarse_confusion")[i][k];
                for (std::size_t i = 0; i < 9; ++i)
                    for (std::size_t k = 0; k < 9; ++k) fine[i][k] = j.at("fine_confusion")[i][k];
                render_heatmap_svg(fs::path(pl_out) / "confusion_coarse.svg", coarse,
                                   "intended vs predicted intensity (coarse)");
                render_heatmap_svg(fs::path(pl_out) / "confusion_fine.svg", fine,
                                   "intended vs predicted intensity (fine)");
            }
            if (!pl_wav.empty()) {
                const dsp::Waveform w = dsp::read_wav(pl_wav, audio.sample_rate);
                render_curve_svg(fs::path(pl_out) / "pitch_contour.svg",
                                 dsp::extract_pitch(w, audio), "pitch contour (Hz)");
            }
            write_effective_config(pl_out, {{"command", "plot"},
                                            {"report", pl_report},
                                            {"train_log", pl_log},
                                            {"wav", pl_wav}});
        } else if (gc->parsed()) {
            fs::create_directories(gc_out);
            std::ostringstream os;
            const double worst = run_grad_checks(os);
            os << "max relative error: " << worst << "\n";
            std::cout << os.str();
            write_text(fs::path(gc_out) / "grad_check.txt", os.str());
            write_effective_config(gc_out, {{"command", "grad-check"}});
            return worst < 1e-4 ? 0 : 1;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
