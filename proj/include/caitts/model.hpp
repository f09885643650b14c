#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caitts/nn.hpp"

namespace caitts::model {

struct ModelConfig {
    std::size_t n_fft_blocks = 2;
    std::size_t hidden_dim = 64;
    std::size_t n_heads = 2;
    std::size_t conv_kernel = 3;
    std::size_t n_phonemes = 48;
    std::size_t n_speakers = 14;
    std::size_t speaker_dim = 64;     // = hidden_dim
    std::size_t n_accents = 6;
    std::size_t accent_dim = 32;
    std::size_t intensity_dim = 32;   // accent_dim + intensity_dim = hidden_dim
    std::size_t predictor_channels = 64;
    std::size_t upsample_kernel = 9;
    std::size_t mel_dim = 80;
    double dropout = 0.5;
    std::size_t gru_hidden = 32;

    static ModelConfig desk_scale();
    static ModelConfig full_scale();
    void validate() const;
};

struct AdaptorOutput {
    nn::Tensor accented_phoneme_embedding;  // H''_ph [T, hidden]
    nn::Tensor pitch_pred;                  // [T, 1] normalized scalar
    nn::Tensor energy_pred;                 // [T, 1]
    nn::Tensor log_duration_pred;           // [T, 1] log(1+d)
    nn::Tensor pitch_embedding;             // [T, hidden]
    nn::Tensor energy_embedding;            // [T, hidden]
    nn::Tensor frame_embedding;             // H_fm [frames, hidden]
    std::vector<std::size_t> frame_durations;
};

struct Losses {
    nn::Tensor l_mel, l_dur, l_p_pitch, l_p_energy, l_cc, l_final;
};

struct SynthesisRequest {
    std::vector<std::size_t> phoneme_ids;
    std::size_t speaker_id = 0;
    std::size_t accent_id = 0;
    double intensity = 0.5;
};

// Targets for one training utterance (normalized phoneme-level scalars).
struct TrainingTargets {
    std::vector<double> mel;             // [frames x mel_dim]
    std::size_t n_frames = 0;
    std::vector<std::size_t> durations;  // per phoneme, frames
    std::vector<double> phoneme_pitch;   // normalized
    std::vector<double> phoneme_energy;  // normalized
    double intensity = 0.5;
};

class CaiTts {
public:
    CaiTts(ModelConfig cfg, std::uint64_t seed);

    nn::ParamRegistry& params() { return params_; }
    const ModelConfig& config() const { return cfg_; }

    nn::Tensor encode_text(const std::vector<std::size_t>& phoneme_ids, bool train,
                           std::mt19937_64& rng) const;

    AdaptorOutput accent_variance_adaptor(const nn::Tensor& h_ph, std::size_t speaker_id,
                                          std::size_t accent_id, double intensity,
                                          const std::vector<std::size_t>* gt_durations,
                                          const std::vector<double>* gt_pitch,
                                          const std::vector<double>* gt_energy, bool train,
                                          std::mt19937_64& rng) const;

    nn::Tensor decode_mel(const nn::Tensor& h_fm, bool train, std::mt19937_64& rng) const;

    nn::Tensor predict_intensity(const nn::Tensor& mel) const;

    Losses total_loss(const nn::Tensor& mel_pred, const AdaptorOutput& adaptor,
                      const nn::Tensor& intensity_pred, const TrainingTargets& targets,
                      bool with_consistency = true) const;

    // Full training-mode forward for one utterance.
    Losses training_step_forward(const std::vector<std::size_t>& phoneme_ids,
                                 std::size_t speaker_id, std::size_t accent_id,
                                 const TrainingTargets& targets, bool with_consistency, bool train,
                                 std::mt19937_64& rng) const;

    struct InferenceResult {
        std::vector<double> mel;  // [frames x mel_dim]
        std::size_t n_frames = 0;
        std::vector<std::size_t> durations;
        std::vector<double> phoneme_pitch;   // normalized scalars
        std::vector<double> phoneme_energy;  // normalized scalars
    };

    // Eval-mode synthesis with predicted durations.
    InferenceResult infer(const SynthesisRequest& req) const;
    std::vector<double> synthesize(const SynthesisRequest& req, std::size_t* out_frames) const;

    void save_checkpoint(const std::string& path, std::size_t step) const;
    // Restores parameters; returns the stored step.
    static CaiTts load_checkpoint(const std::string& path, std::size_t* out_step = nullptr);

private:
    ModelConfig cfg_;
    nn::ParamRegistry params_;

    nn::Tensor positional_embedding(std::size_t n, std::size_t dim) const;
    nn::Tensor fft_block_stack(const nn::Tensor& x, const std::string& prefix, bool train,
                               std::mt19937_64& rng) const;
    // Conv1D k3 -> ReLU -> Conv1D k3 -> ReLU -> FC to scalar per position.
    nn::Tensor scalar_predictor(const nn::Tensor& x, const std::string& prefix, bool train,
                                std::mt19937_64& rng) const;
    // Scalar track -> Conv1D k9 up to hidden-dim embedding.
    nn::Tensor upsample_scalar(const nn::Tensor& scalars, const std::string& prefix) const;
    nn::GruParams gru_params(const std::string& prefix) const;
};

}  // namespace caitts::model
