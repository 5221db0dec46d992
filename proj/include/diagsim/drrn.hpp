#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "diagsim/embed.hpp"

namespace diagsim {

/// Running sum of observation embeddings: e(s_t) = e(s_{t-1}) + e(o_t).
struct EmbeddedState {
    SentenceVector values;
    int num_observations = 0;

    bool operator==(const EmbeddedState&) const = default;
};

/// How the state updater folds a new observation embedding into the state.
/// Summation is the production rule; mean and max pooling are the tried
/// alternatives, kept available as config variants.
enum class StateUpdateRule { sum, mean, max };

EmbeddedState make_zero_state(int dimension);
EmbeddedState update_state(const EmbeddedState& prev, const SentenceVector& obs_vec,
                           StateUpdateRule rule = StateUpdateRule::sum);

struct LinearLayer {
    std::vector<std::vector<double>> weights;  // [out][in]
    std::vector<double> biases;                // [out]

    int in_dim() const { return weights.empty() ? 0 : static_cast<int>(weights[0].size()); }
    int out_dim() const { return static_cast<int>(weights.size()); }
    bool operator==(const LinearLayer&) const = default;
};

/// Fully connected stack; ReLU between layers, linear final layer.
struct Mlp {
    std::vector<LinearLayer> layers;

    int in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    int out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
    bool operator==(const Mlp&) const = default;
};

struct QNetworkConfig {
    int embedding_dim = 64;
    int encoder_hidden = 128;
    int encoder_out = 64;
    int scorer_hidden = 128;

    bool operator==(const QNetworkConfig&) const = default;
};

/// State and action encoders plus a scorer over their concatenation,
/// estimating Q(state, action).
struct QNetwork {
    QNetworkConfig config;
    Mlp state_encoder;   // embedding_dim -> encoder_hidden -> encoder_out
    Mlp action_encoder;  // embedding_dim -> encoder_hidden -> encoder_out
    Mlp scorer;          // 2*encoder_out -> scorer_hidden -> 1

    bool operator==(const QNetwork&) const = default;
};

/// Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))) from the seed, zero biases.
QNetwork make_q_network(const QNetworkConfig& config, std::uint64_t seed);

double q_value(const QNetwork& net, const EmbeddedState& state,
               const SentenceVector& action_vec);

/// Split forward pass, so one state encoding can be scored against many
/// actions (and vice versa) without repeating encoder work.
std::vector<double> encode_state(const QNetwork& net, const EmbeddedState& state);
std::vector<double> encode_action(const QNetwork& net, const SentenceVector& action_vec);
double score_encoded(const QNetwork& net, const std::vector<double>& state_encoding,
                     const std::vector<double>& action_encoding);

// ---------------------------------------------------------------------------
// Forward/backward plumbing (exposed for the finite-difference tests)
// ---------------------------------------------------------------------------

struct MlpCache {
    std::vector<std::vector<double>> inputs;           // input to each layer
    std::vector<std::vector<double>> pre_activations;  // W x + b per layer
};

std::vector<double> mlp_forward(const Mlp& mlp, const std::vector<double>& input,
                                MlpCache* cache);

/// Gradients use the same Mlp shape with weight/bias slots holding dL/dw.
Mlp make_zero_like(const Mlp& mlp);

/// Accumulates parameter gradients into `grads` and returns dL/d(input).
std::vector<double> mlp_backward(const Mlp& mlp, const MlpCache& cache,
                                 const std::vector<double>& upstream, Mlp& grads);

struct QNetworkGrads {
    Mlp state_encoder;
    Mlp action_encoder;
    Mlp scorer;
};

QNetworkGrads make_zero_grads(const QNetwork& net);

struct QForwardCache {
    MlpCache state_cache;
    MlpCache action_cache;
    MlpCache scorer_cache;
};

double q_forward(const QNetwork& net, const EmbeddedState& state,
                 const SentenceVector& action_vec, QForwardCache& cache);

/// Backpropagates dL/dQ = upstream through scorer and both encoders.
void q_backward(const QNetwork& net, const QForwardCache& cache, double upstream,
                QNetworkGrads& grads);

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

/// softmax(q / temperature) with max-subtraction; sums to 1.
std::vector<double> softmax_probs(const std::vector<double>& q_values, double temperature);

std::size_t select_action(const std::vector<double>& q_values, double temperature,
                          std::mt19937_64& rng);

struct TemperatureSchedule {
    double t_start = 1.0;
    double t_end = 0.001;
    long total_steps = 1;

    /// Linear decay, clamped at t_end once step reaches total_steps.
    double at(long step) const;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct Transition {
    EmbeddedState state;
    SentenceVector action_vec;
    double reward = 0.0;
    bool done = false;
    EmbeddedState next_state;
    std::vector<SentenceVector> next_action_vecs;  // empty iff done
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 10000);

    void push(Transition transition);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return items_.at(i); }

    /// Uniform sampling with replacement.
    std::vector<Transition> sample(std::size_t batch_size, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> items_;
};

struct TrainHyperparams {
    double gamma = 0.99;
    // Plain SGD needs a coarse step size here: sentence embeddings are means
    // of near-orthogonal token vectors (norm well below 1), so gradients are
    // small and 1e-3-style rates stall for tens of thousands of updates.
    double learning_rate = 0.1;
    double grad_clip_norm = 5.0;
    int batch_size = 32;
    int target_sync_interval = 100;  // updates between target-network syncs
    std::size_t replay_capacity = 10000;
    int validation_interval = 50;  // episodes between validation passes

    bool operator==(const TrainHyperparams&) const = default;
};

/// One SGD step on the mean squared TD error of the batch against targets
/// bootstrapped through `target_net` (target = reward when done). Gradients
/// are clipped to a global norm of `grad_clip_norm`. Returns the pre-update
/// loss; throws on an empty batch or a non-finite loss.
double td_train_step(QNetwork& net, const QNetwork& target_net,
                     const std::vector<Transition>& batch, double gamma, double lr,
                     double grad_clip_norm);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
    QNetwork net;
    TrainHyperparams hyper;
    std::uint64_t seed = 0;
    EmbedderSpec embedder;
    std::map<std::string, double> metrics;  // e.g. episodes trained, best validation score
};

/// JSON on disk; doubles round-trip losslessly, so a loaded network produces
/// bit-identical Q-values.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace diagsim
