#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "atc/label.hpp"
#include "atc/metrics.hpp"

namespace atc::model {

struct ModelConfig {
    int lstm_layers = 2;
    int lstm_units = 64;
    int mode_count = 3;
    int cat_action_count = 3;
    int cont_action_count = 4;
    double gumbel_temperature = 1.0;
    double learning_rate = 1e-3;
    int epochs = 60;
    int batch_size = 8;
    std::uint64_t seed = 1;
    int feature_dim = 0;  // set from the data when training
};

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;  // row major

    static Mat zeros(int r, int c) { return Mat{r, c, std::vector<double>(static_cast<std::size_t>(r) * c, 0.0)}; }
    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

/// One LSTM layer, gates fused in i|f|g|o order.
struct LstmLayer {
    int in = 0, hidden = 0;
    Mat w;                  // 4H x in
    Mat u;                  // 4H x H
    std::vector<double> b;  // 4H
};

struct Stack {
    std::vector<LstmLayer> layers;
};

/// Parameters of the reaction model. The encoder predicts the behaviour mode
/// from the previous mode and the current state; the decoder, when present,
/// predicts the action class and the continuous targets from the sampled
/// mode and the state, and its errors backpropagate into the encoder.
struct Params {
    Stack enc;
    Mat enc_head_w;
    std::vector<double> enc_head_b;

    bool has_decoder = false;
    Stack dec;
    Mat act_head_w;
    std::vector<double> act_head_b;
    Mat cont_head_w;
    std::vector<double> cont_head_b;
};

/// Visit every tensor as a flat double span (used by the optimizer, the
/// serializer and the gradient checks). Order is fixed.
void for_each_tensor(Params& p, const std::function<void(const std::string&, std::vector<double>&)>& fn);
void for_each_tensor(const Params& p, const std::function<void(const std::string&, const std::vector<double>&)>& fn);

Params init_params(const ModelConfig& cfg, bool with_decoder, std::mt19937_64& rng);
Params zeros_like(const Params& p);

/// Feature standardization fitted on training data. Neighbor-slot features
/// use statistics over present slots only and standardize to zero when the
/// slot is absent; presence flags pass through untouched.
struct Standardizer {
    std::vector<double> mean, stdev;            // per feature
    std::array<double, 4> cont_mean{}, cont_stdev{};  // continuous targets
    int slots = 0;

    std::vector<double> apply(const std::vector<double>& raw) const;
    std::array<double, 4> standardize_cont(const std::array<double, 4>& c) const;
    std::array<double, 4> destandardize_cont(const std::array<double, 4>& c) const;
};

struct Sequence {
    traj::FlightId id;
    std::vector<std::vector<double>> feats;
    std::vector<int> modes;
    std::vector<int> actions;
    std::vector<std::array<double, 4>> cont;
    std::vector<double> ts;
    std::vector<bool> actual, annotated;
};

std::vector<Sequence> to_sequences(const label::LabeledDataset& data);

Standardizer fit_standardizer(const std::vector<Sequence>& train, int feature_dim, int slots);

/// Recurrent state of one stack (per-layer h and c).
struct StackState {
    std::vector<std::vector<double>> h, c;
    static StackState zeros(const Stack& s);
};

/// One encoder step: mode logits from [state, previous-mode one-hot].
std::vector<double> encoder_step(const Params& p, const std::vector<double>& state,
                                 const std::vector<double>& prev_mode_onehot, StackState& st);

struct DecoderOut {
    std::vector<double> act_logits;
    std::vector<double> cont;
};

/// One decoder step: action logits and continuous outputs from
/// [state, mode vector].
DecoderOut decoder_step(const Params& p, const std::vector<double>& state,
                        const std::vector<double>& mode_vec, StackState& st);

std::vector<double> softmax(const std::vector<double>& logits);

/// Relaxed categorical sample: softmax((logits + gumbel_noise) / temperature).
std::vector<double> gumbel_softmax_sample(const std::vector<double>& logits, double temperature,
                                          std::mt19937_64& rng);

/// Hard categorical sample via the same perturbation (argmax of logits+noise).
int gumbel_argmax_sample(const std::vector<double>& logits, std::mt19937_64& rng);

struct LossBreakdown {
    double total = 0.0;
    double enc_ce = 0.0;
    double dec_ce = 0.0;
    double dec_mse = 0.0;
    std::size_t steps = 0;
};

/// Mean per-step loss over the batch: encoder mode cross-entropy plus, with
/// a decoder, action cross-entropy and continuous MSE conditioned on the
/// relaxed mode sample (whose gradient reaches the encoder). The previous
/// mode fed to the encoder is the ground truth (teacher forcing). Pass
/// `grads` to also accumulate gradients. Noise is drawn from `rng` in a
/// fixed order, so reseeding reproduces the same loss surface.
LossBreakdown loss_and_grads(const Params& p, const std::vector<const Sequence*>& batch,
                             const Standardizer& stdz, const ModelConfig& cfg,
                             std::mt19937_64& rng, Params* grads);

struct TrainResult {
    ModelConfig cfg;
    Params params;
    Standardizer stdz;
    std::vector<double> loss_curve;  // mean per-step loss per epoch
};

/// Adam-optimized training, deterministic for a fixed seed. Throws when the
/// loss diverges (above ten times the initial loss for ten epochs).
TrainResult train(const label::LabeledDataset& data, ModelConfig cfg, bool with_decoder);

enum class Feedback { TeacherForced, SelfFed };

struct PredictionRow {
    std::array<double, 3> mode_probs{};
    int mode = 0;
    std::array<double, 3> action_probs{};
    int action = 0;
    std::array<double, 4> cont{};
};

std::vector<PredictionRow> predict(const TrainResult& model, const Sequence& seq, Feedback fb);

/// Predictions joined with the truth into the evaluation stream format.
metrics::EvalStream eval_stream(const TrainResult& model, const std::vector<Sequence>& test,
                                Feedback fb);

void save_model(const TrainResult& model, const std::string& path);
TrainResult load_model(const std::string& path);

struct FoldOutcome {
    metrics::Report report;
    int fold = 0;
    int repeat = 0;
};

struct CrossvalOutcome {
    std::vector<FoldOutcome> folds;
    metrics::Report pooled;
};

/// Repeated k-fold cross-validation over flights; folds train and predict
/// independently (self-fed) and may run on several threads. Deterministic
/// for a fixed config seed.
CrossvalOutcome cross_validate(const label::LabeledDataset& data, ModelConfig cfg,
                               bool with_decoder, int folds, int repeats, int threads = 2);

std::string loss_curve_csv(const std::vector<double>& curve);

}  // namespace atc::model
