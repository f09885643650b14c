#include "caitts/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "caitts/error.hpp"

namespace caitts::model {

using nn::Tensor;

ModelConfig ModelConfig::desk_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.n_fft_blocks = 6;
    c.hidden_dim = 256;
    c.n_heads = 2;
    c.n_speakers = 14;
    c.speaker_dim = 256;
    c.n_accents = 6;
    c.accent_dim = 128;
    c.intensity_dim = 128;
    c.predictor_channels = 256;
    c.gru_hidden = 128;
    return c;
}

void ModelConfig::validate() const {
    if (accent_dim + intensity_dim != hidden_dim)
        throw ConfigError("accent_dim + intensity_dim must equal hidden_dim");
    if (speaker_dim != hidden_dim) throw ConfigError("speaker_dim must equal hidden_dim");
    if (hidden_dim % n_heads != 0) throw ConfigError("hidden_dim must be divisible by n_heads");
    if (conv_kernel % 2 == 0 || upsample_kernel % 2 == 0)
        throw ConfigError("conv kernels must be odd");
}

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"n_fft_blocks", c.n_fft_blocks},
            {"hidden_dim", c.hidden_dim},
            {"n_heads", c.n_heads},
            {"conv_kernel", c.conv_kernel},
            {"n_phonemes", c.n_phonemes},
            {"n_speakers", c.n_speakers},
            {"speaker_dim", c.speaker_dim},
            {"n_accents", c.n_accents},
            {"accent_dim", c.accent_dim},
            {"intensity_dim", c.intensity_dim},
            {"predictor_channels", c.predictor_channels},
            {"upsample_kernel", c.upsample_kernel},
            {"mel_dim", c.mel_dim},
            {"dropout", c.dropout},
            {"gru_hidden", c.gru_hidden}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_fft_blocks = j.at("n_fft_blocks");
    c.hidden_dim = j.at("hidden_dim");
    c.n_heads = j.at("n_heads");
    c.conv_kernel = j.at("conv_kernel");
    c.n_phonemes = j.at("n_phonemes");
    c.n_speakers = j.at("n_speakers");
    c.speaker_dim = j.at("speaker_dim");
    c.n_accents = j.at("n_accents");
    c.accent_dim = j.at("accent_dim");
    c.intensity_dim = j.at("intensity_dim");
    c.predictor_channels = j.at("predictor_channels");
    c.upsample_kernel = j.at("upsample_kernel");
    c.mel_dim = j.at("mel_dim");
    c.dropout = j.at("dropout");
    c.gru_hidden = j.at("gru_hidden");
    return c;
}

}  // namespace

CaiTts::CaiTts(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t h = cfg_.hidden_dim;
    const std::size_t k = cfg_.conv_kernel;
    const std::size_t pc = cfg_.predictor_channels;

    params_.add("phoneme_table", nn::init_normal({cfg_.n_phonemes, h}, 0.01, rng));

    auto add_fft_stack = [&](const std::string& prefix) {
        for (std::size_t b = 0; b < cfg_.n_fft_blocks; ++b) {
            const std::string p = prefix + ".block" + std::to_string(b);
            for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
                params_.add(p + w, nn::init_uniform({h, h}, h, rng));
            params_.add(p + ".ln1.gamma", Tensor::full({h}, 1.0, true));
            params_.add(p + ".ln1.beta", Tensor::zeros({h}, true));
            params_.add(p + ".conv1.K", nn::init_uniform({k, h, h}, k * h, rng));
            params_.add(p + ".conv1.b", Tensor::zeros({h}, true));
            params_.add(p + ".conv2.K", nn::init_uniform({k, h, h}, k * h, rng));
            params_.add(p + ".conv2.b", Tensor::zeros({h}, true));
            params_.add(p + ".ln2.gamma", Tensor::full({h}, 1.0, true));
            params_.add(p + ".ln2.beta", Tensor::zeros({h}, true));
        }
    };
    add_fft_stack("encoder");

    params_.add("adaptor.speaker_table", nn::init_normal({cfg_.n_speakers, cfg_.speaker_dim}, 0.01, rng));
    params_.add("adaptor.accent_table", nn::init_normal({cfg_.n_accents, cfg_.accent_dim}, 0.01, rng));
    params_.add("adaptor.intensity.W", nn::init_uniform({1, cfg_.intensity_dim}, 1, rng));
    params_.add("adaptor.intensity.b", Tensor::zeros({cfg_.intensity_dim}, true));

    auto add_predictor = [&](const std::string& p, bool with_upsample) {
        params_.add(p + ".conv1.K", nn::init_uniform({k, h, pc}, k * h, rng));
        params_.add(p + ".conv1.b", Tensor::zeros({pc}, true));
        params_.add(p + ".conv2.K", nn::init_uniform({k, pc, pc}, k * pc, rng));
        params_.add(p + ".conv2.b", Tensor::zeros({pc}, true));
        params_.add(p + ".fc.W", nn::init_uniform({pc, 1}, pc, rng));
        params_.add(p + ".fc.b", Tensor::zeros({1}, true));
        if (with_upsample) {
            params_.add(p + ".up.K", nn::init_uniform({cfg_.upsample_kernel, 1, h}, cfg_.upsample_kernel, rng));
            params_.add(p + ".up.b", Tensor::zeros({h}, true));
        }
    };
    add_predictor("adaptor.pitch", true);
    add_predictor("adaptor.energy", true);
    add_predictor("adaptor.duration", false);

    add_fft_stack("decoder");
    params_.add("decoder.proj.W", nn::init_uniform({h, cfg_.mel_dim}, h, rng));
    params_.add("decoder.proj.b", Tensor::zeros({cfg_.mel_dim}, true));

    const std::size_t gh = cfg_.gru_hidden;
    for (const char* dir : {"fwd", "bwd"}) {
        const std::string p = std::string("intensity_predictor.gru.") + dir;
        for (const char* g : {"Wz", "Wr", "Wn"})
            params_.add(p + "." + g, nn::init_uniform({cfg_.mel_dim, gh}, cfg_.mel_dim, rng));
        for (const char* g : {"Uz", "Ur", "Un"})
            params_.add(p + "." + g, nn::init_uniform({gh, gh}, gh, rng));
        for (const char* g : {"bz", "br", "bn"})
            params_.add(p + "." + g, Tensor::zeros({gh}, true));
    }
    params_.add("intensity_predictor.fc.W", nn::init_uniform({2 * gh, 1}, 2 * gh, rng));
    params_.add("intensity_predictor.fc.b", Tensor::zeros({1}, true));
}

Tensor CaiTts::positional_embedding(std::size_t n, std::size_t dim) const {
    std::vector<double> pe(n * dim);
    for (std::size_t pos = 0; pos < n; ++pos)
        for (std::size_t i = 0; i < dim; ++i) {
            const double angle = static_cast<double>(pos) /
                                 std::pow(10000.0, static_cast<double>(2 * (i / 2)) /
                                                       static_cast<double>(dim));
            pe[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return Tensor({n, dim}, std::move(pe), false);
}

Tensor CaiTts::fft_block_stack(const Tensor& x, const std::string& prefix, bool train,
                               std::mt19937_64& rng) const {
    Tensor h = x;
    for (std::size_t b = 0; b < cfg_.n_fft_blocks; ++b) {
        const std::string p = prefix + ".block" + std::to_string(b);
        Tensor a = nn::self_attention_forward(h, cfg_.n_heads, params_.get(p + ".attn.wq"),
                                              params_.get(p + ".attn.wk"),
                                              params_.get(p + ".attn.wv"),
                                              params_.get(p + ".attn.wo"));
        a = nn::dropout(a, cfg_.dropout, train, rng);
        h = nn::layer_norm(nn::add(h, a), params_.get(p + ".ln1.gamma"), params_.get(p + ".ln1.beta"));
        Tensor c = nn::conv1d_forward(h, params_.get(p + ".conv1.K"), params_.get(p + ".conv1.b"));
        c = nn::relu(c);
        c = nn::conv1d_forward(c, params_.get(p + ".conv2.K"), params_.get(p + ".conv2.b"));
        c = nn::dropout(c, cfg_.dropout, train, rng);
        h = nn::layer_norm(nn::add(h, c), params_.get(p + ".ln2.gamma"), params_.get(p + ".ln2.beta"));
    }
    return h;
}

Tensor CaiTts::encode_text(const std::vector<std::size_t>& phoneme_ids, bool train,
                           std::mt19937_64& rng) const {
    if (phoneme_ids.empty()) throw EmptyInput("empty phoneme sequence");
    Tensor emb = nn::embedding_lookup(params_.get("phoneme_table"), phoneme_ids);
    emb = nn::add(emb, positional_embedding(phoneme_ids.size(), cfg_.hidden_dim));
    return fft_block_stack(emb, "encoder", train, rng);
}

Tensor CaiTts::scalar_predictor(const Tensor& x, const std::string& prefix, bool train,
                                std::mt19937_64& rng) const {
    Tensor h = nn::relu(nn::conv1d_forward(x, params_.get(prefix + ".conv1.K"),
                                           params_.get(prefix + ".conv1.b")));
    h = nn::dropout(h, cfg_.dropout, train, rng);
    h = nn::relu(nn::conv1d_forward(h, params_.get(prefix + ".conv2.K"),
                                    params_.get(prefix + ".conv2.b")));
    h = nn::dropout(h, cfg_.dropout, train, rng);
    return nn::linear_forward(h, params_.get(prefix + ".fc.W"), params_.get(prefix + ".fc.b"));
}

Tensor CaiTts::upsample_scalar(const Tensor& scalars, const std::string& prefix) const {
    return nn::conv1d_forward(scalars, params_.get(prefix + ".up.K"), params_.get(prefix + ".up.b"));
}

AdaptorOutput CaiTts::accent_variance_adaptor(const Tensor& h_ph, std::size_t speaker_id,
                                              std::size_t accent_id, double intensity,
                                              const std::vector<std::size_t>* gt_durations,
                                              const std::vector<double>* gt_pitch,
                                              const std::vector<double>* gt_energy, bool train,
                                              std::mt19937_64& rng) const {
    if (!(intensity > 0.0 && intensity < 1.0))
        throw IntensityRange("intensity must lie in (0,1), got " + std::to_string(intensity));
    if (speaker_id >= cfg_.n_speakers) throw IndexError("speaker_id out of range");
    if (accent_id >= cfg_.n_accents) throw IndexError("accent_id out of range");
    const std::size_t T = h_ph.rows();

    const Tensor e_s = nn::embedding_lookup(params_.get("adaptor.speaker_table"), {speaker_id});
    const Tensor e_a = nn::embedding_lookup(params_.get("adaptor.accent_table"), {accent_id});
    const Tensor e_i = nn::linear_forward(Tensor({1, 1}, {intensity}),
                                          params_.get("adaptor.intensity.W"),
                                          params_.get("adaptor.intensity.b"));
    const Tensor accent_code = nn::concat_cols(e_a, e_i);  // [1, hidden]
    Tensor h_acc = nn::add(h_ph, nn::broadcast_row(nn::reshape(e_s, {cfg_.hidden_dim}), T));
    h_acc = nn::add(h_acc, nn::broadcast_row(nn::reshape(accent_code, {cfg_.hidden_dim}), T));

    AdaptorOutput out;
    out.pitch_pred = scalar_predictor(h_acc, "adaptor.pitch", train, rng);
    out.energy_pred = scalar_predictor(h_acc, "adaptor.energy", train, rng);
    out.log_duration_pred = scalar_predictor(h_acc, "adaptor.duration", train, rng);

    // Teacher forcing: ground-truth scalars feed the upsampling convolution
    // during training; predicted scalars at inference.
    Tensor pitch_in, energy_in;
    if (gt_pitch && gt_energy) {
        if (gt_pitch->size() != T || gt_energy->size() != T)
            throw AlignmentMismatch("ground-truth scalar count != phoneme count");
        pitch_in = Tensor({T, 1}, *gt_pitch);
        energy_in = Tensor({T, 1}, *gt_energy);
    } else {
        pitch_in = out.pitch_pred;
        energy_in = out.energy_pred;
    }
    out.pitch_embedding = upsample_scalar(pitch_in, "adaptor.pitch");
    out.energy_embedding = upsample_scalar(energy_in, "adaptor.energy");

    out.accented_phoneme_embedding =
        nn::add(nn::add(h_acc, out.pitch_embedding), out.energy_embedding);

    if (gt_durations) {
        if (gt_durations->size() != T) throw AlignmentMismatch("duration count != phoneme count");
        out.frame_durations = *gt_durations;
    } else {
        out.frame_durations.resize(T);
        for (std::size_t t = 0; t < T; ++t) {
            const double d = std::expm1(out.log_duration_pred.data()[t]);
            out.frame_durations[t] =
                static_cast<std::size_t>(std::max(1.0, std::round(d)));
        }
    }
    out.frame_embedding = nn::repeat_rows(out.accented_phoneme_embedding, out.frame_durations);
    return out;
}

Tensor CaiTts::decode_mel(const Tensor& h_fm, bool train, std::mt19937_64& rng) const {
    if (h_fm.rows() == 0) throw EmptyInput("empty frame sequence");
    Tensor h = nn::add(h_fm, positional_embedding(h_fm.rows(), cfg_.hidden_dim));
    h = fft_block_stack(h, "decoder", train, rng);
    return nn::linear_forward(h, params_.get("decoder.proj.W"), params_.get("decoder.proj.b"));
}

Tensor CaiTts::predict_intensity(const Tensor& mel) const {
    if (mel.rows() == 0) throw EmptyInput("empty mel input");
    nn::GruParams fwd = gru_params("intensity_predictor.gru.fwd");
    nn::GruParams bwd = gru_params("intensity_predictor.gru.bwd");
    const Tensor h0 = Tensor::zeros({1, cfg_.gru_hidden});
    const nn::GruOutput g = nn::gru_forward(mel, h0, fwd, &bwd);
    const Tensor state = nn::concat_cols(g.final_fwd, g.final_bwd);
    const Tensor logit = nn::linear_forward(state, params_.get("intensity_predictor.fc.W"),
                                            params_.get("intensity_predictor.fc.b"));
    return nn::sigmoid(nn::reshape(logit, {1}));
}

nn::GruParams CaiTts::gru_params(const std::string& prefix) const {
    nn::GruParams p;
    p.Wz = params_.get(prefix + ".Wz");
    p.Wr = params_.get(prefix + ".Wr");
    p.Wn = params_.get(prefix + ".Wn");
    p.Uz = params_.get(prefix + ".Uz");
    p.Ur = params_.get(prefix + ".Ur");
    p.Un = params_.get(prefix + ".Un");
    p.bz = params_.get(prefix + ".bz");
    p.br = params_.get(prefix + ".br");
    p.bn = params_.get(prefix + ".bn");
    return p;
}

Losses CaiTts::total_loss(const Tensor& mel_pred, const AdaptorOutput& adaptor,
                          const Tensor& intensity_pred, const TrainingTargets& targets,
                          bool with_consistency) const {
    if (mel_pred.size() != targets.mel.size()) throw ShapeError("mel prediction/target mismatch");
    const std::size_t T = targets.durations.size();
    if (adaptor.pitch_pred.rows() != T || targets.phoneme_pitch.size() != T ||
        targets.phoneme_energy.size() != T)
        throw ShapeError("phoneme-level target mismatch");

    Losses l;
    l.l_mel = nn::mse_loss(mel_pred, Tensor({targets.n_frames, cfg_.mel_dim}, targets.mel));

    std::vector<double> log_dur(T);
    for (std::size_t t = 0; t < T; ++t) log_dur[t] = std::log1p(static_cast<double>(targets.durations[t]));
    l.l_dur = nn::mse_loss(adaptor.log_duration_pred, Tensor({T, 1}, log_dur));
    l.l_p_pitch = nn::mse_loss(adaptor.pitch_pred, Tensor({T, 1}, targets.phoneme_pitch));
    l.l_p_energy = nn::mse_loss(adaptor.energy_pred, Tensor({T, 1}, targets.phoneme_energy));
    l.l_cc = with_consistency
                 ? nn::mse_loss(intensity_pred, Tensor::scalar(targets.intensity))
                 : Tensor::scalar(0.0);
    l.l_final = nn::add(nn::add(nn::add(nn::add(l.l_mel, l.l_dur), l.l_p_pitch), l.l_p_energy),
                        l.l_cc);
    return l;
}

Losses CaiTts::training_step_forward(const std::vector<std::size_t>& phoneme_ids,
                                     std::size_t speaker_id, std::size_t accent_id,
                                     const TrainingTargets& targets, bool with_consistency,
                                     bool train, std::mt19937_64& rng) const {
    const Tensor h_ph = encode_text(phoneme_ids, train, rng);
    const AdaptorOutput adaptor = accent_variance_adaptor(
        h_ph, speaker_id, accent_id, targets.intensity, &targets.durations,
        &targets.phoneme_pitch, &targets.phoneme_energy, train, rng);
    const Tensor mel_pred = decode_mel(adaptor.frame_embedding, train, rng);
    // l_cc is measured on the generated mel so its gradient reaches the
    // generator, not only the predictor.
    Tensor intensity_pred =
        with_consistency ? predict_intensity(mel_pred) : Tensor::scalar(0.5);
    return total_loss(mel_pred, adaptor, intensity_pred, targets, with_consistency);
}

CaiTts::InferenceResult CaiTts::infer(const SynthesisRequest& req) const {
    std::mt19937_64 rng(0);  // unused in eval mode
    const Tensor h_ph = encode_text(req.phoneme_ids, false, rng);
    const AdaptorOutput adaptor = accent_variance_adaptor(
        h_ph, req.speaker_id, req.accent_id, req.intensity, nullptr, nullptr, nullptr, false, rng);
    const Tensor mel = decode_mel(adaptor.frame_embedding, false, rng);
    InferenceResult out;
    out.mel = mel.data();
    out.n_frames = mel.rows();
    out.durations = adaptor.frame_durations;
    out.phoneme_pitch = adaptor.pitch_pred.data();
    out.phoneme_energy = adaptor.energy_pred.data();
    return out;
}

std::vector<double> CaiTts::synthesize(const SynthesisRequest& req, std::size_t* out_frames) const {
    InferenceResult r = infer(req);
    if (out_frames) *out_frames = r.n_frames;
    return std::move(r.mel);
}

void CaiTts::save_checkpoint(const std::string& path, std::size_t step) const {
    nlohmann::json meta;
    meta["config"] = config_to_json(cfg_);
    meta["step"] = step;
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, t] : params_.items())
        manifest.push_back({{"name", name}, {"shape", t.shape()}});
    meta["manifest"] = manifest;
    const std::string meta_str = meta.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingAsset("cannot write " + path);
    out.write("CAIT", 4);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t meta_len = meta_str.size();
    out.write(reinterpret_cast<const char*>(&meta_len), 8);
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (const auto& [name, t] : params_.items())
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
}

CaiTts CaiTts::load_checkpoint(const std::string& path, std::size_t* out_step) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingAsset("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, "CAIT", 4) != 0) throw ParseError(path + ": bad checkpoint magic");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) throw ParseError(path + ": unsupported checkpoint version");
    std::uint64_t meta_len = 0;
    in.read(reinterpret_cast<char*>(&meta_len), 8);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    const nlohmann::json meta = nlohmann::json::parse(meta_str);

    CaiTts model(config_from_json(meta.at("config")), 0);
    if (out_step) *out_step = meta.at("step").get<std::size_t>();
    for (const auto& entry : meta.at("manifest")) {
        const std::string name = entry.at("name");
        const nn::Shape shape = entry.at("shape").get<nn::Shape>();
        Tensor& t = model.params_.get(name);
        if (t.shape() != shape) throw ParseError(path + ": shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(t.data().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!in) throw ParseError(path + ": truncated checkpoint");
    return model;
}

}  // namespace caitts::model
