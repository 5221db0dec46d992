#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "diagsim/agents.hpp"
#include "diagsim/drrn.hpp"

namespace diagsim {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;   // bad flags, bad corpus, missing inputs
inline constexpr int kExitRuntimeError = 2;  // transport failures, non-finite loss, I/O

/// Configuration or input problems attributable to the caller (exit 1).
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string scenario_dir;
    std::string vectors_path;         // empty: deterministic hash embeddings
    std::string provider = "oracle";  // "oracle" | "replay" | "http"
    std::string replay_file;          // provider = replay
    std::string endpoint;             // provider = http
    std::string model;                // provider = http
    std::uint64_t seed = 0;
    AgentKind agent;
    int episodes = 20000;  // 2,000 suffices for the mini fixture
    std::string checkpoint_path;
    std::string split = "validation";  // "validation" | "test"
    std::string out = ".";             // directory (train/eval) or transcript file (play)
    int workers = 1;
    // cmd_play subtask selection
    std::string patient;
    std::string cause;
    int wording = 0;
    // cmd_eval: previously written results CSVs to fold into the stats battery
    std::vector<std::string> compare_paths;
    TrainHyperparams hyper;
};

/// Loads every scenario in the directory, printing one status line per file.
/// Returns 0 iff every file is valid; an empty directory is an error.
int cmd_validate(const std::string& scenario_dir, std::ostream& out);

/// Trains the DRRN over the train splits of every scenario in the corpus:
/// a random train subtask per episode, softmax exploration on the linear
/// temperature schedule, replay-buffer TD updates with a periodically synced
/// target network, validation every `hyper.validation_interval` episodes, and
/// the best-validation checkpoint kept. Writes the checkpoint and a training
/// curve CSV; returns the checkpoint path.
std::string cmd_train(const RunConfig& config, std::ostream& progress);

/// Evaluates the configured agent over the chosen split of every scenario
/// with run_trials, writing per-subtask transcripts, a results CSV and a
/// statistics report; returns the results CSV path.
std::string cmd_eval(const RunConfig& config, std::ostream& progress);

/// Interactive episode: numbered action menu on stdin/stdout; prints the
/// score card at the end. EOF aborts gracefully.
int cmd_play(const RunConfig& config, std::istream& in, std::ostream& out);

/// Full argv entry point (subcommands validate/train/eval/play); maps
/// exceptions onto the exit-code contract.
int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace diagsim
