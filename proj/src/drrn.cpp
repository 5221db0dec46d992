#include "diagsim/drrn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace diagsim {

EmbeddedState make_zero_state(int dimension) {
    if (dimension <= 0) throw std::invalid_argument("make_zero_state: dimension must be positive");
    return EmbeddedState{SentenceVector(static_cast<std::size_t>(dimension), 0.0), 0};
}

EmbeddedState update_state(const EmbeddedState& prev, const SentenceVector& obs_vec,
                           StateUpdateRule rule) {
    if (prev.values.size() != obs_vec.size())
        throw std::invalid_argument("update_state: dimension mismatch");
    EmbeddedState next = prev;
    const double n = static_cast<double>(prev.num_observations);
    for (std::size_t i = 0; i < next.values.size(); ++i) {
        switch (rule) {
            case StateUpdateRule::sum: next.values[i] += obs_vec[i]; break;
            case StateUpdateRule::mean:
                // running mean over all observations folded so far
                next.values[i] = (next.values[i] * n + obs_vec[i]) / (n + 1.0);
                break;
            case StateUpdateRule::max:
                next.values[i] = prev.num_observations == 0
                                     ? obs_vec[i]
                                     : std::max(next.values[i], obs_vec[i]);
                break;
        }
    }
    next.num_observations = prev.num_observations + 1;
    return next;
}

namespace {

/// Uniform double in [0, 1) from the top 53 bits, so the draw sequence is
/// identical on every platform (std::uniform_real_distribution is not).
double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

LinearLayer glorot_layer(int in_dim, int out_dim, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    LinearLayer layer;
    layer.weights.assign(static_cast<std::size_t>(out_dim),
                         std::vector<double>(static_cast<std::size_t>(in_dim), 0.0));
    layer.biases.assign(static_cast<std::size_t>(out_dim), 0.0);
    for (auto& row : layer.weights)
        for (auto& w : row) w = (2.0 * uniform01(rng) - 1.0) * limit;
    return layer;
}

Mlp make_mlp(const std::vector<int>& dims, std::mt19937_64& rng) {
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        mlp.layers.push_back(glorot_layer(dims[i], dims[i + 1], rng));
    return mlp;
}

}  // namespace

QNetwork make_q_network(const QNetworkConfig& config, std::uint64_t seed) {
    if (config.embedding_dim <= 0 || config.encoder_hidden <= 0 || config.encoder_out <= 0 ||
        config.scorer_hidden <= 0)
        throw std::invalid_argument("make_q_network: all layer sizes must be positive");
    std::mt19937_64 rng(seed);
    QNetwork net;
    net.config = config;
    net.state_encoder = make_mlp({config.embedding_dim, config.encoder_hidden, config.encoder_out}, rng);
    net.action_encoder = make_mlp({config.embedding_dim, config.encoder_hidden, config.encoder_out}, rng);
    net.scorer = make_mlp({2 * config.encoder_out, config.scorer_hidden, 1}, rng);
    return net;
}

std::vector<double> mlp_forward(const Mlp& mlp, const std::vector<double>& input,
                                MlpCache* cache) {
    if (mlp.layers.empty()) throw std::invalid_argument("mlp_forward: empty network");
    if (static_cast<int>(input.size()) != mlp.in_dim())
        throw std::invalid_argument("mlp_forward: input dimension mismatch");
    if (cache) {
        cache->inputs.clear();
        cache->pre_activations.clear();
    }
    std::vector<double> current = input;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const auto& layer = mlp.layers[l];
        if (cache) cache->inputs.push_back(current);
        std::vector<double> z(layer.biases);
        for (std::size_t o = 0; o < layer.weights.size(); ++o)
            for (std::size_t i = 0; i < layer.weights[o].size(); ++i)
                z[o] += layer.weights[o][i] * current[i];
        if (cache) cache->pre_activations.push_back(z);
        if (l + 1 < mlp.layers.size())
            for (auto& v : z) v = std::max(0.0, v);  // ReLU on hidden layers only
        current = std::move(z);
    }
    return current;
}

Mlp make_zero_like(const Mlp& mlp) {
    Mlp zero = mlp;
    for (auto& layer : zero.layers) {
        for (auto& row : layer.weights) std::fill(row.begin(), row.end(), 0.0);
        std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
    }
    return zero;
}

std::vector<double> mlp_backward(const Mlp& mlp, const MlpCache& cache,
                                 const std::vector<double>& upstream, Mlp& grads) {
    if (cache.inputs.size() != mlp.layers.size())
        throw std::invalid_argument("mlp_backward: cache does not match network");
    std::vector<double> delta = upstream;  // dL/d(layer output)
    for (std::size_t l = mlp.layers.size(); l-- > 0;) {
        const auto& layer = mlp.layers[l];
        if (l + 1 < mlp.layers.size())  // undo the hidden-layer ReLU
            for (std::size_t o = 0; o < delta.size(); ++o)
                if (cache.pre_activations[l][o] <= 0.0) delta[o] = 0.0;
        auto& grad_layer = grads.layers[l];
        const auto& input = cache.inputs[l];
        for (std::size_t o = 0; o < layer.weights.size(); ++o) {
            grad_layer.biases[o] += delta[o];
            for (std::size_t i = 0; i < layer.weights[o].size(); ++i)
                grad_layer.weights[o][i] += delta[o] * input[i];
        }
        std::vector<double> next_delta(input.size(), 0.0);
        for (std::size_t o = 0; o < layer.weights.size(); ++o)
            for (std::size_t i = 0; i < layer.weights[o].size(); ++i)
                next_delta[i] += layer.weights[o][i] * delta[o];
        delta = std::move(next_delta);
    }
    return delta;
}

QNetworkGrads make_zero_grads(const QNetwork& net) {
    return QNetworkGrads{make_zero_like(net.state_encoder), make_zero_like(net.action_encoder),
                         make_zero_like(net.scorer)};
}

double q_forward(const QNetwork& net, const EmbeddedState& state,
                 const SentenceVector& action_vec, QForwardCache& cache) {
    const auto state_z = mlp_forward(net.state_encoder, state.values, &cache.state_cache);
    const auto action_z = mlp_forward(net.action_encoder, action_vec, &cache.action_cache);
    std::vector<double> concat(state_z);
    concat.insert(concat.end(), action_z.begin(), action_z.end());
    const auto out = mlp_forward(net.scorer, concat, &cache.scorer_cache);
    return out[0];
}

void q_backward(const QNetwork& net, const QForwardCache& cache, double upstream,
                QNetworkGrads& grads) {
    const auto concat_grad =
        mlp_backward(net.scorer, cache.scorer_cache, {upstream}, grads.scorer);
    const std::size_t split = static_cast<std::size_t>(net.state_encoder.out_dim());
    const std::vector<double> state_up(concat_grad.begin(),
                                       concat_grad.begin() + static_cast<long>(split));
    const std::vector<double> action_up(concat_grad.begin() + static_cast<long>(split),
                                        concat_grad.end());
    mlp_backward(net.state_encoder, cache.state_cache, state_up, grads.state_encoder);
    mlp_backward(net.action_encoder, cache.action_cache, action_up, grads.action_encoder);
}

double q_value(const QNetwork& net, const EmbeddedState& state,
               const SentenceVector& action_vec) {
    QForwardCache cache;
    return q_forward(net, state, action_vec, cache);
}

std::vector<double> encode_state(const QNetwork& net, const EmbeddedState& state) {
    return mlp_forward(net.state_encoder, state.values, nullptr);
}

std::vector<double> encode_action(const QNetwork& net, const SentenceVector& action_vec) {
    return mlp_forward(net.action_encoder, action_vec, nullptr);
}

double score_encoded(const QNetwork& net, const std::vector<double>& state_encoding,
                     const std::vector<double>& action_encoding) {
    std::vector<double> concat(state_encoding);
    concat.insert(concat.end(), action_encoding.begin(), action_encoding.end());
    return mlp_forward(net.scorer, concat, nullptr)[0];
}

std::vector<double> softmax_probs(const std::vector<double>& q_values, double temperature) {
    if (q_values.empty()) throw std::invalid_argument("softmax_probs: empty Q-value list");
    if (!(temperature > 0.0))
        throw std::invalid_argument("softmax_probs: temperature must be positive");
    const double max_q = *std::max_element(q_values.begin(), q_values.end());
    std::vector<double> probs(q_values.size());
    double total = 0.0;
    for (std::size_t i = 0; i < q_values.size(); ++i) {
        probs[i] = std::exp((q_values[i] - max_q) / temperature);
        total += probs[i];
    }
    for (auto& p : probs) p /= total;
    return probs;
}

std::size_t select_action(const std::vector<double>& q_values, double temperature,
                          std::mt19937_64& rng) {
    const auto probs = softmax_probs(q_values, temperature);
    const double u = uniform01(rng);
    double cumulative = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cumulative += probs[i];
        if (u < cumulative) return i;
    }
    return probs.size() - 1;  // guard against rounding in the final bin
}

double TemperatureSchedule::at(long step) const {
    if (total_steps <= 0)
        throw std::invalid_argument("TemperatureSchedule: total_steps must be positive");
    if (step < 0) throw std::invalid_argument("TemperatureSchedule: negative step");
    const double progress =
        std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return t_start + (t_end - t_start) * progress;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
}

void ReplayBuffer::push(Transition transition) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(transition));
    } else {
        items_[next_] = std::move(transition);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size,
                                             std::mt19937_64& rng) const {
    if (items_.empty()) throw std::logic_error("ReplayBuffer::sample: buffer is empty");
    std::vector<Transition> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i)
        batch.push_back(items_[static_cast<std::size_t>(rng() % items_.size())]);
    return batch;
}

namespace {

double grads_squared_norm(const QNetworkGrads& grads) {
    double total = 0.0;
    for (const Mlp* mlp : {&grads.state_encoder, &grads.action_encoder, &grads.scorer})
        for (const auto& layer : mlp->layers) {
            for (const auto& row : layer.weights)
                for (double w : row) total += w * w;
            for (double b : layer.biases) total += b * b;
        }
    return total;
}

void apply_sgd(Mlp& mlp, const Mlp& grads, double lr, double scale) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        for (std::size_t o = 0; o < mlp.layers[l].weights.size(); ++o) {
            mlp.layers[l].biases[o] -= lr * scale * grads.layers[l].biases[o];
            for (std::size_t i = 0; i < mlp.layers[l].weights[o].size(); ++i)
                mlp.layers[l].weights[o][i] -= lr * scale * grads.layers[l].weights[o][i];
        }
    }
}

}  // namespace

double td_train_step(QNetwork& net, const QNetwork& target_net,
                     const std::vector<Transition>& batch, double gamma, double lr,
                     double grad_clip_norm) {
    if (batch.empty()) throw std::invalid_argument("td_train_step: empty batch");

    std::vector<double> targets;
    targets.reserve(batch.size());
    for (const auto& t : batch) {
        double target = t.reward;
        if (!t.done) {
            if (t.next_action_vecs.empty())
                throw std::invalid_argument(
                    "td_train_step: non-terminal transition without next actions");
            const auto state_z = encode_state(target_net, t.next_state);
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& av : t.next_action_vecs)
                best = std::max(best, score_encoded(target_net, state_z,
                                                    encode_action(target_net, av)));
            target += gamma * best;
        }
        targets.push_back(target);
    }

    auto grads = make_zero_grads(net);
    double loss = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        QForwardCache cache;
        const double q = q_forward(net, batch[i].state, batch[i].action_vec, cache);
        const double err = q - targets[i];
        loss += err * err * inv_batch;
        q_backward(net, cache, 2.0 * err * inv_batch, grads);
    }
    if (!std::isfinite(loss)) throw std::runtime_error("td_train_step: non-finite loss");

    double scale = 1.0;
    const double norm = std::sqrt(grads_squared_norm(grads));
    if (norm > grad_clip_norm && norm > 0.0) scale = grad_clip_norm / norm;
    apply_sgd(net.state_encoder, grads.state_encoder, lr, scale);
    apply_sgd(net.action_encoder, grads.action_encoder, lr, scale);
    apply_sgd(net.scorer, grads.scorer, lr, scale);
    return loss;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json layer_to_json(const LinearLayer& layer) {
    return json{{"weights", layer.weights}, {"biases", layer.biases}};
}

LinearLayer layer_from_json(const json& j) {
    LinearLayer layer;
    layer.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    layer.biases = j.at("biases").get<std::vector<double>>();
    const std::size_t in = layer.weights.empty() ? 0 : layer.weights[0].size();
    for (const auto& row : layer.weights)
        if (row.size() != in) throw std::runtime_error("checkpoint: ragged weight matrix");
    if (layer.biases.size() != layer.weights.size())
        throw std::runtime_error("checkpoint: bias/weight row mismatch");
    return layer;
}

json mlp_to_json(const Mlp& mlp) {
    json layers = json::array();
    for (const auto& layer : mlp.layers) layers.push_back(layer_to_json(layer));
    return layers;
}

Mlp mlp_from_json(const json& j) {
    Mlp mlp;
    for (const auto& layer : j) mlp.layers.push_back(layer_from_json(layer));
    return mlp;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    json j;
    j["format"] = "diagsim-checkpoint-v1";
    j["seed"] = checkpoint.seed;
    j["hyperparams"] = {{"gamma", checkpoint.hyper.gamma},
                        {"learning_rate", checkpoint.hyper.learning_rate},
                        {"grad_clip_norm", checkpoint.hyper.grad_clip_norm},
                        {"batch_size", checkpoint.hyper.batch_size},
                        {"target_sync_interval", checkpoint.hyper.target_sync_interval},
                        {"replay_capacity", checkpoint.hyper.replay_capacity},
                        {"validation_interval", checkpoint.hyper.validation_interval}};
    j["embedder"] = {{"kind", checkpoint.embedder.kind},
                     {"dimension", checkpoint.embedder.dimension},
                     {"seed", checkpoint.embedder.seed},
                     {"vectors_path", checkpoint.embedder.vectors_path}};
    if (checkpoint.embedder.max_vocab) j["embedder"]["max_vocab"] = *checkpoint.embedder.max_vocab;
    j["config"] = {{"embedding_dim", checkpoint.net.config.embedding_dim},
                   {"encoder_hidden", checkpoint.net.config.encoder_hidden},
                   {"encoder_out", checkpoint.net.config.encoder_out},
                   {"scorer_hidden", checkpoint.net.config.scorer_hidden}};
    j["metrics"] = checkpoint.metrics;
    j["weights"] = {{"state_encoder", mlp_to_json(checkpoint.net.state_encoder)},
                    {"action_encoder", mlp_to_json(checkpoint.net.action_encoder)},
                    {"scorer", mlp_to_json(checkpoint.net.scorer)}};

    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open checkpoint file for writing");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error(path + ": failed writing checkpoint");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open checkpoint file");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": checkpoint is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "diagsim-checkpoint-v1")
            throw std::runtime_error("unsupported checkpoint format");
        Checkpoint checkpoint;
        checkpoint.seed = j.at("seed").get<std::uint64_t>();
        const auto& h = j.at("hyperparams");
        checkpoint.hyper.gamma = h.at("gamma").get<double>();
        checkpoint.hyper.learning_rate = h.at("learning_rate").get<double>();
        checkpoint.hyper.grad_clip_norm = h.at("grad_clip_norm").get<double>();
        checkpoint.hyper.batch_size = h.at("batch_size").get<int>();
        checkpoint.hyper.target_sync_interval = h.at("target_sync_interval").get<int>();
        checkpoint.hyper.replay_capacity = h.at("replay_capacity").get<std::size_t>();
        checkpoint.hyper.validation_interval = h.at("validation_interval").get<int>();
        const auto& e = j.at("embedder");
        checkpoint.embedder.kind = e.at("kind").get<std::string>();
        checkpoint.embedder.dimension = e.at("dimension").get<int>();
        checkpoint.embedder.seed = e.at("seed").get<std::uint64_t>();
        checkpoint.embedder.vectors_path = e.at("vectors_path").get<std::string>();
        if (e.contains("max_vocab"))
            checkpoint.embedder.max_vocab = e.at("max_vocab").get<std::size_t>();
        const auto& c = j.at("config");
        checkpoint.net.config.embedding_dim = c.at("embedding_dim").get<int>();
        checkpoint.net.config.encoder_hidden = c.at("encoder_hidden").get<int>();
        checkpoint.net.config.encoder_out = c.at("encoder_out").get<int>();
        checkpoint.net.config.scorer_hidden = c.at("scorer_hidden").get<int>();
        if (j.contains("metrics"))
            checkpoint.metrics = j.at("metrics").get<std::map<std::string, double>>();
        const auto& w = j.at("weights");
        checkpoint.net.state_encoder = mlp_from_json(w.at("state_encoder"));
        checkpoint.net.action_encoder = mlp_from_json(w.at("action_encoder"));
        checkpoint.net.scorer = mlp_from_json(w.at("scorer"));
        return checkpoint;
    } catch (const json::exception& ex) {
        throw std::runtime_error(path + ": malformed checkpoint: " + ex.what());
    }
}

}  // namespace diagsim
