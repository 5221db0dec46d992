#include "diagsim/cli.hpp"

#include "diagsim/hashing.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

namespace diagsim {

namespace fs = std::filesystem;

namespace {

std::string fixed6(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

std::vector<fs::path> list_scenario_files(const std::string& dir) {
    if (!fs::exists(dir)) throw UserError(dir + ": scenario directory does not exist");
    if (!fs::is_directory(dir)) throw UserError(dir + ": not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<Scenario> load_corpus(const std::string& dir) {
    const auto files = list_scenario_files(dir);
    if (files.empty()) throw UserError("no scenarios found in " + dir);
    std::vector<Scenario> scenarios;
    scenarios.reserve(files.size());
    for (const auto& file : files) scenarios.push_back(load_scenario(file.string()));
    return scenarios;
}

EmbedderSpec embedder_spec_from_config(const RunConfig& config) {
    EmbedderSpec spec;
    if (!config.vectors_path.empty()) {
        spec.kind = "vectors";
        spec.vectors_path = config.vectors_path;
    }
    return spec;  // default: hash, dimension 64, seed 0
}

/// Strict wording split when possible; otherwise the documented degradation
/// (train = validation = test = everything) with a visible notice.
SplitSpec splits_with_fallback(const Scenario& scenario, std::uint64_t seed,
                               std::ostream& progress) {
    try {
        return make_splits(scenario, seed);
    } catch (const SplitError& e) {
        progress << "note: " << e.what() << "\n";
        progress << "note: " << scenario.patient_id
                 << ": falling back to a degraded split (train = validation = test = all "
                    "subtasks); scores measure memorisation, not wording generalisation\n";
        return make_degraded_splits(scenario, seed);
    }
}

std::uint64_t subtask_seed(std::uint64_t seed, const Subtask& subtask) {
    const std::string key =
        subtask.scenario_id + "|" + subtask.cause_id + "|" + std::to_string(subtask.wording_index);
    return mix_seed(seed, fnv1a64(key));
}

std::string sanitize_for_filename(const std::string& text) {
    std::string out;
    for (char c : text)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int cmd_validate(const std::string& scenario_dir, std::ostream& out) {
    const auto files = list_scenario_files(scenario_dir);
    if (files.empty()) {
        out << "no scenarios found in " << scenario_dir << "\n";
        return kExitUserError;
    }
    bool all_valid = true;
    for (const auto& file : files) {
        try {
            const Scenario scenario = load_scenario(file.string());
            out << file.filename().string() << ": ok (" << scenario.causes.size() << " causes, "
                << scenario.wordings_per_cause() << " wordings, " << scenario.key_questions.size()
                << " key questions)\n";
        } catch (const ValidationError& e) {
            out << file.filename().string() << ": INVALID: " << e.what() << "\n";
            all_valid = false;
        }
    }
    return all_valid ? kExitOk : kExitUserError;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

struct TrainContext {
    QNetwork net;
    QNetwork target;
    ReplayBuffer buffer;
    std::mt19937_64 rng;
    long updates = 0;
    double loss_sum = 0.0;
    long loss_count = 0;
};

void play_training_episode(const Scenario& scenario, const Subtask& subtask, double temperature,
                           const EmbeddingCache& embeddings, const TrainHyperparams& hyper,
                           TrainContext& ctx) {
    Episode episode(scenario, subtask);
    StepResult current = episode.reset();
    EmbeddedState state = make_zero_state(embeddings.dimension());
    state = update_state(state, embeddings.get(current.observation.rendered()));

    while (!current.done) {
        const std::vector<Action> valid = current.valid_actions;
        const auto state_z = encode_state(ctx.net, state);
        std::vector<double> qs;
        qs.reserve(valid.size());
        for (const auto& action : valid)
            qs.push_back(score_encoded(ctx.net, state_z,
                                       encode_action(ctx.net, embeddings.get(action.text))));
        const Action action = valid[select_action(qs, temperature, ctx.rng)];

        Transition transition;
        transition.state = state;
        transition.action_vec = embeddings.get(action.text);
        current = episode.step(action);
        transition.reward = current.reward;
        transition.done = current.done;
        state = update_state(state, embeddings.get(current.observation.rendered()));
        transition.next_state = state;
        if (!current.done)
            for (const auto& next : current.valid_actions)
                transition.next_action_vecs.push_back(embeddings.get(next.text));
        ctx.buffer.push(std::move(transition));

        if (ctx.buffer.size() >= static_cast<std::size_t>(hyper.batch_size)) {
            const auto batch =
                ctx.buffer.sample(static_cast<std::size_t>(hyper.batch_size), ctx.rng);
            ctx.loss_sum += td_train_step(ctx.net, ctx.target, batch, hyper.gamma,
                                          hyper.learning_rate, hyper.grad_clip_norm);
            ++ctx.loss_count;
            if (++ctx.updates % hyper.target_sync_interval == 0) ctx.target = ctx.net;
        }
    }
}

double validation_posttest_mean(const std::vector<Scenario>& scenarios,
                                const std::vector<std::pair<std::size_t, Subtask>>& subtasks,
                                const QNetwork& net, const EmbeddingCache& embeddings,
                                std::uint64_t seed) {
    double total = 0.0;
    for (const auto& [scenario_index, subtask] : subtasks) {
        std::mt19937_64 rng(subtask_seed(seed, subtask));
        EpisodeConfig config;
        config.kind.type = AgentType::rl;
        config.net = &net;
        config.embeddings = &embeddings;
        config.rng = &rng;
        const Transcript transcript = run_episode(scenarios[scenario_index], subtask, config);
        total += posttest_score(transcript);
    }
    return total / static_cast<double>(subtasks.size());
}

}  // namespace

std::string cmd_train(const RunConfig& config, std::ostream& progress) {
    if (config.episodes < 1) throw UserError("--episodes must be >= 1");
    if (config.agent.type != AgentType::rl)
        throw UserError("only the rl agent is trainable; " + config.agent.label() +
                        " has no training step");
    const auto scenarios = load_corpus(config.scenario_dir);

    const EmbedderSpec embedder_spec = embedder_spec_from_config(config);
    const auto embedder = make_embedder(embedder_spec);
    EmbeddingCache embeddings(*embedder);

    std::vector<std::pair<std::size_t, Subtask>> train_subtasks;
    std::vector<std::pair<std::size_t, Subtask>> validation_subtasks;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const SplitSpec splits = splits_with_fallback(scenarios[i], config.seed, progress);
        for (const auto& subtask : splits.train) train_subtasks.emplace_back(i, subtask);
        for (const auto& subtask : splits.validation) validation_subtasks.emplace_back(i, subtask);
    }

    QNetworkConfig net_config;
    net_config.embedding_dim = embedder->dimension();
    TrainContext ctx{make_q_network(net_config, config.seed),
                     QNetwork{},
                     ReplayBuffer(config.hyper.replay_capacity),
                     std::mt19937_64(mix_seed(config.seed, fnv1a64("training"))),
                     0,
                     0.0,
                     0};
    ctx.target = ctx.net;

    TemperatureSchedule schedule{1.0, 0.001, config.episodes};

    QNetwork best_net = ctx.net;
    double best_validation = -1.0;
    long best_episode = 0;
    std::ostringstream curve;
    curve << "episode,temperature,mean_loss,validation_posttest\n";

    for (int episode = 0; episode < config.episodes; ++episode) {
        const double temperature = schedule.at(episode);
        const auto& [scenario_index, subtask] =
            train_subtasks[static_cast<std::size_t>(ctx.rng() % train_subtasks.size())];
        play_training_episode(scenarios[scenario_index], subtask, temperature, embeddings,
                              config.hyper, ctx);

        const bool last = episode + 1 == config.episodes;
        if ((episode + 1) % config.hyper.validation_interval == 0 || last) {
            const double score = validation_posttest_mean(scenarios, validation_subtasks, ctx.net,
                                                          embeddings, config.seed);
            const double mean_loss =
                ctx.loss_count > 0 ? ctx.loss_sum / static_cast<double>(ctx.loss_count) : 0.0;
            ctx.loss_sum = 0.0;
            ctx.loss_count = 0;
            curve << episode + 1 << ',' << fixed6(temperature) << ',' << fixed6(mean_loss) << ','
                  << fixed6(score) << '\n';
            progress << "episode " << episode + 1 << ": validation posttest " << fixed6(score)
                     << "\n";
            if (score > best_validation) {
                best_validation = score;
                best_net = ctx.net;
                best_episode = episode + 1;
            }
        }
    }

    fs::create_directories(config.out);
    const std::string curve_path = (fs::path(config.out) / "training_curve.csv").string();
    {
        std::ofstream out(curve_path);
        if (!out) throw std::runtime_error(curve_path + ": cannot write training curve");
        out << curve.str();
    }

    Checkpoint checkpoint;
    checkpoint.net = std::move(best_net);
    checkpoint.hyper = config.hyper;
    checkpoint.seed = config.seed;
    checkpoint.embedder = embedder_spec;
    checkpoint.embedder.dimension = embedder->dimension();
    checkpoint.metrics = {{"episodes_trained", static_cast<double>(config.episodes)},
                          {"best_validation_posttest", best_validation},
                          {"best_episode", static_cast<double>(best_episode)}};
    const std::string checkpoint_path =
        config.checkpoint_path.empty() ? (fs::path(config.out) / "checkpoint.json").string()
                                       : config.checkpoint_path;
    save_checkpoint(checkpoint, checkpoint_path);
    progress << "best validation posttest " << fixed6(best_validation) << " at episode "
             << best_episode << "\n";
    progress << "checkpoint written to " << checkpoint_path << "\n";
    progress << "training curve written to " << curve_path << "\n";
    return checkpoint_path;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

namespace {

struct EvalTask {
    std::size_t scenario_index = 0;
    Subtask subtask;
};

}  // namespace

std::string cmd_eval(const RunConfig& config, std::ostream& progress) {
    if (config.split != "validation" && config.split != "test")
        throw UserError("--split must be validation or test");
    if (config.workers < 1) throw UserError("--workers must be >= 1");
    config.agent.validate();
    const auto scenarios = load_corpus(config.scenario_dir);

    // Embeddings and network: RL-backed agents take both from the checkpoint
    // so evaluation sees exactly the vectors it was trained with.
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<QNetwork> net;
    if (config.agent.needs_network()) {
        if (config.checkpoint_path.empty())
            throw UserError("the " + config.agent.label() + " agent needs --checkpoint");
        if (!fs::exists(config.checkpoint_path))
            throw UserError(config.checkpoint_path + ": checkpoint not found");
        Checkpoint checkpoint = load_checkpoint(config.checkpoint_path);
        embedder = make_embedder(checkpoint.embedder);
        net = std::make_unique<QNetwork>(std::move(checkpoint.net));
        if (net->config.embedding_dim != embedder->dimension())
            throw UserError(config.checkpoint_path +
                            ": checkpoint network and embedder dimensions disagree");
    } else {
        embedder = make_embedder(embedder_spec_from_config(config));
    }
    EmbeddingCache embeddings(*embedder);

    // Shared provider, unless the oracle is requested (one per subtask).
    std::unique_ptr<ChatProvider> shared_provider;
    if (config.agent.needs_provider()) {
        if (config.provider == "replay") {
            if (config.replay_file.empty())
                throw UserError("provider replay needs --replay <file>");
            shared_provider =
                std::make_unique<ReplayProvider>(ReplayProvider::from_file(config.replay_file));
        } else if (config.provider == "http") {
            if (config.endpoint.empty() || config.model.empty())
                throw UserError("provider http needs --endpoint and --model");
            HttpProviderConfig http;
            http.endpoint = config.endpoint;
            http.model = config.model;
            http.api_key = api_key_from_env();
            fs::create_directories(config.out);
            http.replay_log_path = (fs::path(config.out) / "replay_log.jsonl").string();
            shared_provider = std::make_unique<HttpChatProvider>(std::move(http));
        } else if (config.provider != "oracle") {
            throw UserError("--provider must be oracle, replay or http");
        }
    }

    std::vector<EvalTask> tasks;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const SplitSpec splits = splits_with_fallback(scenarios[i], config.seed, progress);
        for (const auto& subtask : split_set(splits, config.split))
            tasks.push_back({i, subtask});
    }
    if (tasks.empty()) throw UserError("the " + config.split + " split is empty");

    fs::create_directories(fs::path(config.out) / "transcripts");

    std::vector<ResultRow> rows(tasks.size());
    std::vector<ScoreCard> cards(tasks.size());
    const auto run_task = [&](std::size_t task_index) {
        const EvalTask& task = tasks[task_index];
        const Scenario& scenario = scenarios[task.scenario_index];

        std::unique_ptr<OracleProvider> oracle;
        ChatProvider* provider = shared_provider.get();
        if (config.agent.needs_provider() && !provider) {
            oracle = std::make_unique<OracleProvider>(scenario, task.subtask);
            provider = oracle.get();
        }

        std::mt19937_64 rng(subtask_seed(config.seed, task.subtask));
        EpisodeConfig episode_config;
        episode_config.kind = config.agent;
        episode_config.net = net.get();
        episode_config.provider = provider;
        episode_config.embeddings = &embeddings;
        episode_config.rng = &rng;
        const TrialsResult result =
            run_trials(scenario, task.subtask, episode_config, config.agent.max_trials());

        rows[task_index] = make_result_row(config.agent.label(), result.best_card,
                                           result.best_trial);
        cards[task_index] = result.best_card;

        const std::string name = sanitize_for_filename(task.subtask.scenario_id) + "__" +
                                 sanitize_for_filename(task.subtask.cause_id) + "__w" +
                                 std::to_string(task.subtask.wording_index) + ".jsonl";
        const std::string path = (fs::path(config.out) / "transcripts" / name).string();
        std::ofstream transcript_out(path);
        if (!transcript_out) throw std::runtime_error(path + ": cannot write transcript");
        write_transcript_jsonl(result.best_transcript, transcript_out);
    };

    if (config.workers == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        const std::size_t workers =
            std::min<std::size_t>(static_cast<std::size_t>(config.workers), tasks.size());
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> failures(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < tasks.size(); i += workers) run_task(i);
                } catch (...) {
                    failures[w] = std::current_exception();
                }
            });
        for (auto& thread : pool) thread.join();
        for (const auto& failure : failures)
            if (failure) std::rethrow_exception(failure);
    }

    const std::string results_path = (fs::path(config.out) / "results.csv").string();
    {
        std::ofstream out(results_path);
        if (!out) throw std::runtime_error(results_path + ": cannot write results");
        write_results_csv(rows, out);
    }

    std::vector<ResultRow> stats_rows = rows;
    for (const auto& compare_path : config.compare_paths) {
        std::ifstream in(compare_path);
        if (!in) throw UserError(compare_path + ": cannot open comparison results");
        const auto prior = read_results_csv(in, compare_path);
        stats_rows.insert(stats_rows.end(), prior.begin(), prior.end());
    }
    const std::string stats_path = (fs::path(config.out) / "stats.txt").string();
    {
        std::ofstream out(stats_path);
        if (!out) throw std::runtime_error(stats_path + ": cannot write stats report");
        out << stats_report(stats_rows);
    }

    for (const auto& row : aggregate(cards, AggregateBy::overall))
        progress << config.agent.label() << " " << config.split << " (" << row.count
                 << " subtasks): posttest " << fixed6(row.posttest_mean) << ", trajectory "
                 << fixed6(row.trajectory_mean) << ", combined " << fixed6(row.combined_mean)
                 << "\n";
    for (const auto& row : aggregate(cards, AggregateBy::patient))
        progress << "  " << row.group << ": posttest " << fixed6(row.posttest_mean)
                 << ", trajectory " << fixed6(row.trajectory_mean) << ", combined "
                 << fixed6(row.combined_mean) << " (" << row.count << " subtasks)\n";
    progress << "results written to " << results_path << "\n";
    progress << "stats written to " << stats_path << "\n";
    return results_path;
}

// ---------------------------------------------------------------------------
// play
// ---------------------------------------------------------------------------

int cmd_play(const RunConfig& config, std::istream& in, std::ostream& out) {
    const auto scenarios = load_corpus(config.scenario_dir);
    const Scenario* scenario = &scenarios.front();
    if (!config.patient.empty()) {
        const auto it = std::find_if(scenarios.begin(), scenarios.end(), [&](const Scenario& s) {
            return s.patient_id == config.patient;
        });
        if (it == scenarios.end())
            throw UserError("no scenario with patient id \"" + config.patient + "\"");
        scenario = &*it;
    }

    Subtask subtask{scenario->patient_id,
                    config.cause.empty() ? scenario->causes.front().cause_id : config.cause,
                    config.wording};
    if (!scenario->find_cause(subtask.cause_id))
        throw UserError("scenario " + scenario->patient_id + " has no cause \"" +
                        subtask.cause_id + "\"");
    if (config.wording < 0 ||
        static_cast<std::size_t>(config.wording) >= scenario->wordings_per_cause())
        throw UserError("--wording out of range; scenario has " +
                        std::to_string(scenario->wordings_per_cause()) + " wordings");

    Episode episode(*scenario, subtask);
    StepResult current = episode.reset();
    Transcript transcript;
    transcript.subtask = subtask;
    transcript.opening = current.observation;

    out << current.observation.rendered() << "\n";
    int step_number = 0;
    while (!current.done) {
        const std::vector<Action> valid = current.valid_actions;
        const Phase phase = episode.phase();
        out << "\n";
        for (std::size_t i = 0; i < valid.size(); ++i)
            out << "  " << i + 1 << ") " << valid[i].text << "\n";
        out << "> " << std::flush;

        std::string line;
        if (!std::getline(in, line)) {
            out << "\naborted.\n";
            return kExitOk;
        }
        std::size_t choice = 0;
        try {
            choice = static_cast<std::size_t>(std::stoul(line));
        } catch (const std::exception&) {
            out << "please enter a number between 1 and " << valid.size() << "\n";
            continue;
        }
        if (choice < 1 || choice > valid.size()) {
            out << "please enter a number between 1 and " << valid.size() << "\n";
            continue;
        }

        const Action action = valid[choice - 1];
        current = episode.step(action);
        out << current.observation.rendered() << "\n";

        TranscriptStep step;
        step.step = ++step_number;
        step.phase = phase;
        step.action = action;
        step.observation = current.observation;
        step.reward = current.reward;
        step.done = current.done;
        step.audit.source = "human";
        transcript.steps.push_back(std::move(step));
    }
    transcript.outcome = episode.outcome();

    const ScoreCard card = score_transcript(transcript, *scenario);
    out << "\nPost-test Performance: " << card.posttest
        << "\nTrajectory Quality: " << fixed6(card.trajectory_quality)
        << "\nCombined Score: " << fixed6(card.combined)
        << "\nTotal reward: " << fixed6(transcript.total_reward()) << "\n";

    if (!config.out.empty() && config.out != ".") {
        std::ofstream transcript_out(config.out);
        if (!transcript_out)
            throw std::runtime_error(config.out + ": cannot write transcript");
        write_transcript_jsonl(transcript, transcript_out);
        out << "transcript written to " << config.out << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// argv entry point
// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err) {
    CLI::App app{"text-based diagnostic-scenario simulation engine"};
    app.require_subcommand(1);

    RunConfig config;
    std::string agent_name = "rl";

    const auto add_scenarios = [&](CLI::App* cmd) {
        cmd->add_option("--scenarios", config.scenario_dir, "scenario corpus directory")
            ->required();
    };

    CLI::App* validate = app.add_subcommand("validate", "check every scenario file in a corpus");
    add_scenarios(validate);

    CLI::App* train = app.add_subcommand("train", "train the RL agent on the train split");
    add_scenarios(train);
    train->add_option("--vectors", config.vectors_path, "word-vector file (.vec text format)");
    train->add_option("--seed", config.seed, "master seed");
    train->add_option("--episodes", config.episodes, "training episode budget")
        ->default_val(20000);
    train->add_option("--checkpoint", config.checkpoint_path,
                      "checkpoint output path (default <out>/checkpoint.json)");
    train->add_option("--out", config.out, "output directory")->default_val(".");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate an agent on a held-out split");
    add_scenarios(eval_cmd);
    eval_cmd->add_option("--vectors", config.vectors_path,
                         "word-vector file (LLM agent without a checkpoint)");
    eval_cmd->add_option("--provider", config.provider, "chat provider")
        ->check(CLI::IsMember({"oracle", "replay", "http"}))
        ->default_val("oracle");
    eval_cmd->add_option("--replay", config.replay_file, "replay file for --provider replay");
    eval_cmd->add_option("--endpoint", config.endpoint, "chat endpoint for --provider http");
    eval_cmd->add_option("--model", config.model, "model name for --provider http");
    eval_cmd->add_option("--seed", config.seed, "master seed");
    eval_cmd->add_option("--agent", agent_name, "agent to run")
        ->check(CLI::IsMember({"rl", "llm", "sa_rl", "da_rl"}))
        ->default_val("rl");
    eval_cmd->add_flag("--reflective", config.agent.reflective,
                       "enable the reflection loop (3 trials per subtask)");
    eval_cmd->add_option("--checkpoint", config.checkpoint_path, "trained checkpoint to load");
    eval_cmd->add_option("--split", config.split, "which held-out split to run")
        ->check(CLI::IsMember({"validation", "test"}))
        ->default_val("validation");
    eval_cmd->add_option("--out", config.out, "output directory")->default_val(".");
    eval_cmd->add_option("--workers", config.workers, "parallel subtask runners")
        ->default_val(1);
    eval_cmd->add_option("--compare", config.compare_paths,
                         "earlier results CSVs to include in the stats battery");

    CLI::App* play = app.add_subcommand("play", "play one episode interactively");
    add_scenarios(play);
    play->add_option("--patient", config.patient, "patient id (default: first scenario)");
    play->add_option("--cause", config.cause, "true cause id (default: first cause)");
    play->add_option("--wording", config.wording, "wording index")->default_val(0);
    play->add_option("--out", config.out, "write the transcript to this JSONL file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUserError;
    }

    try {
        if (validate->parsed()) return cmd_validate(config.scenario_dir, out);
        if (train->parsed()) {
            cmd_train(config, out);
            return kExitOk;
        }
        if (eval_cmd->parsed()) {
            config.agent.type = agent_type_from_name(agent_name);
            cmd_eval(config, out);
            return kExitOk;
        }
        if (play->parsed()) return cmd_play(config, in, out);
        err << "error: no subcommand given\n";
        return kExitUserError;
    } catch (const UserError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const SplitError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        return kExitRuntimeError;
    }
}

}  // namespace diagsim
