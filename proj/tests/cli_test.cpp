#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "diagsim/cli.hpp"
#include "diagsim/eval.hpp"
#include "diagsim/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace diagsim;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args, const std::string& input = "") {
    args.insert(args.begin(), "diagsim");
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& arg : args) argv.push_back(arg.c_str());
    std::istringstream in(input);
    std::ostringstream out;
    std::ostringstream err;
    CliResult result;
    result.code = run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
    result.out = out.str();
    result.err = err.str();
    return result;
}

/// Fresh, empty directory under the system temp root.
std::string fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "diagsim_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

/// Corpus directory holding only the three-wording fixture, so training and
/// evaluation runs stay fast and exercise the degraded-split fallback.
std::string mini_corpus() {
    static const std::string dir = [] {
        const std::string d = fresh_dir("corpus_mini");
        fs::copy_file(fs::path(DIAGSIM_DATA_DIR) / "mini_fever.json",
                      fs::path(d) / "mini_fever.json");
        return d;
    }();
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t count = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size()))
        ++count;
    return count;
}

}  // namespace

TEST_CASE("help and argument errors map to the exit-code contract") {
    const auto help = run({"--help"});
    CHECK(help.code == kExitOk);
    for (const char* cmd : {"validate", "train", "eval", "play"})
        CHECK(help.out.find(cmd) != std::string::npos);

    // Missing required flag, unknown subcommand, unknown enum value: all
    // argument errors, all exit 1.
    CHECK(run({"validate"}).code == kExitUserError);
    CHECK(run({"validate"}).err.find("--scenarios") != std::string::npos);
    CHECK(run({"bogus"}).code == kExitUserError);
    CHECK(run({}).code == kExitUserError);
    CHECK(run({"eval", "--scenarios", DIAGSIM_DATA_DIR, "--split", "bogus"}).code ==
          kExitUserError);
    CHECK(run({"eval", "--scenarios", DIAGSIM_DATA_DIR, "--agent", "bogus"}).code ==
          kExitUserError);
}

TEST_CASE("validate reports every scenario in the corpus") {
    const auto result = run({"validate", "--scenarios", DIAGSIM_DATA_DIR});
    CHECK(result.code == kExitOk);
    CHECK(result.err.empty());
    CHECK(result.out.find("mini_fever.json: ok (2 causes, 3 wordings, 2 key questions)") !=
          std::string::npos);
    CHECK(result.out.find(
              "infant_diarrhea.json: ok (4 causes, 10 wordings, 4 key questions)") !=
          std::string::npos);
    CHECK(count_occurrences(result.out, ": ok (") == 4);
}

TEST_CASE("validate flags broken files and degenerate directories") {
    const std::string dir = fresh_dir("validate_broken");
    fs::copy_file(fs::path(DIAGSIM_DATA_DIR) / "mini_fever.json",
                  fs::path(dir) / "mini_fever.json");
    {
        std::ofstream broken(fs::path(dir) / "broken.json");
        broken << "{ not json";
    }
    {
        std::ofstream ignored(fs::path(dir) / "notes.txt");
        ignored << "not a scenario";
    }
    const auto result = run({"validate", "--scenarios", dir});
    CHECK(result.code == kExitUserError);
    CHECK(result.out.find("broken.json: INVALID:") != std::string::npos);
    CHECK(result.out.find("mini_fever.json: ok") != std::string::npos);
    CHECK(result.out.find("notes.txt") == std::string::npos);

    const auto empty = run({"validate", "--scenarios", fresh_dir("validate_empty")});
    CHECK(empty.code == kExitUserError);
    CHECK(empty.out.find("no scenarios found") != std::string::npos);

    const auto missing = run({"validate", "--scenarios", "/definitely/not/here"});
    CHECK(missing.code == kExitUserError);
    CHECK(missing.err.find("error: ") != std::string::npos);
    CHECK(missing.err.find("does not exist") != std::string::npos);
}

TEST_CASE("play runs a scripted episode to a perfect score") {
    // Menu order on the mini scenario: 1) temperature 2) ears 3) appetite
    // 4) suggest; then the two cause choices with the true cause first.
    const auto result = run({"play", "--scenarios", DIAGSIM_DATA_DIR, "--patient",
                             "mini_fever"},
                            "1\n2\n4\n1\n");
    CHECK(result.code == kExitOk);
    CHECK(result.out.find("I think the most probable cause is an ear infection.") !=
          std::string::npos);
    CHECK(result.out.find("Post-test Performance: 1") != std::string::npos);
    CHECK(result.out.find("Trajectory Quality: 1.000000") != std::string::npos);
    CHECK(result.out.find("Combined Score: 1.000000") != std::string::npos);
    // Two asks and the suggestion cost 0.01 each; the correct choice pays 1.
    CHECK(result.out.find("Total reward: 0.970000") != std::string::npos);
}

TEST_CASE("play re-prompts on garbage input and scores wrong choices") {
    const auto result = run({"play", "--scenarios", DIAGSIM_DATA_DIR, "--patient",
                             "mini_fever"},
                            "abc\n\n99\n0\n1\n4\n2\n");
    CHECK(result.code == kExitOk);
    CHECK(count_occurrences(result.out, "please enter a number between 1 and 4") == 4);
    CHECK(result.out.find("Post-test Performance: 0") != std::string::npos);
    CHECK(result.out.find("Trajectory Quality: 0.500000") != std::string::npos);
    CHECK(result.out.find("Combined Score: 0.000000") != std::string::npos);
    CHECK(result.out.find("Total reward: -1.020000") != std::string::npos);
}

TEST_CASE("play aborts gracefully on end of input and writes transcripts") {
    const auto eof = run({"play", "--scenarios", DIAGSIM_DATA_DIR, "--patient",
                          "mini_fever"},
                         "");
    CHECK(eof.code == kExitOk);
    CHECK(eof.out.find("aborted.") != std::string::npos);

    const auto mid = run({"play", "--scenarios", DIAGSIM_DATA_DIR, "--patient",
                          "mini_fever"},
                         "1\n");
    CHECK(mid.code == kExitOk);
    CHECK(mid.out.find("aborted.") != std::string::npos);

    const std::string transcript =
        (fs::path(fresh_dir("play_out")) / "episode.jsonl").string();
    const auto full = run({"play", "--scenarios", DIAGSIM_DATA_DIR, "--patient",
                           "mini_fever", "--out", transcript},
                          "1\n2\n4\n1\n");
    CHECK(full.code == kExitOk);
    CHECK(full.out.find("transcript written to " + transcript) != std::string::npos);
    const std::string contents = slurp(transcript);
    CHECK(contents.find("action_text") != std::string::npos);
    CHECK(count_occurrences(contents, "\n") == 4);  // one line per action

    // Bad subtask selectors are user errors.
    CHECK(run({"play", "--scenarios", DIAGSIM_DATA_DIR, "--patient", "nobody"}).code ==
          kExitUserError);
    CHECK(run({"play", "--scenarios", DIAGSIM_DATA_DIR, "--patient", "mini_fever",
               "--cause", "nope"})
              .code == kExitUserError);
    const auto wording = run({"play", "--scenarios", DIAGSIM_DATA_DIR, "--patient",
                              "mini_fever", "--wording", "99"});
    CHECK(wording.code == kExitUserError);
    CHECK(wording.err.find("out of range") != std::string::npos);
}

TEST_CASE("train writes a checkpoint and curve and is seed-deterministic") {
    const std::string out_a = fresh_dir("train_a");
    const auto result = run({"train", "--scenarios", mini_corpus(), "--episodes", "40",
                             "--seed", "5", "--out", out_a});
    CHECK(result.code == kExitOk);
    CHECK(result.out.find("falling back to a degraded split") != std::string::npos);
    CHECK(result.out.find("checkpoint written to ") != std::string::npos);
    CHECK(result.out.find("training curve written to ") != std::string::npos);

    const std::string curve_a = slurp(out_a + "/training_curve.csv");
    CHECK(curve_a.rfind("episode,temperature,mean_loss,validation_posttest\n", 0) == 0);
    CHECK(count_occurrences(curve_a, "\n") >= 2);  // header plus final validation row

    const Checkpoint checkpoint = load_checkpoint(out_a + "/checkpoint.json");
    CHECK(checkpoint.seed == 5);
    CHECK(checkpoint.metrics.at("episodes_trained") == 40.0);
    CHECK(checkpoint.net.config.embedding_dim == 64);

    // Same seed, fresh run: byte-identical curve and checkpoint.
    const std::string out_b = fresh_dir("train_b");
    CHECK(run({"train", "--scenarios", mini_corpus(), "--episodes", "40", "--seed", "5",
               "--out", out_b})
              .code == kExitOk);
    CHECK(slurp(out_b + "/training_curve.csv") == curve_a);
    CHECK(slurp(out_b + "/checkpoint.json") == slurp(out_a + "/checkpoint.json"));

    // A different seed must train differently.
    const std::string out_c = fresh_dir("train_c");
    CHECK(run({"train", "--scenarios", mini_corpus(), "--episodes", "40", "--seed", "6",
               "--out", out_c})
              .code == kExitOk);
    CHECK(slurp(out_c + "/checkpoint.json") != slurp(out_a + "/checkpoint.json"));

    const auto zero = run({"train", "--scenarios", mini_corpus(), "--episodes", "0"});
    CHECK(zero.code == kExitUserError);
    CHECK(zero.err.find("--episodes must be >= 1") != std::string::npos);
}

TEST_CASE("eval with the scripted provider scores perfectly and reproducibly") {
    const std::string out_a = fresh_dir("eval_llm_a");
    const auto result = run({"eval", "--scenarios", mini_corpus(), "--agent", "llm",
                             "--provider", "oracle", "--split", "test", "--seed", "3",
                             "--out", out_a});
    CHECK(result.code == kExitOk);
    CHECK(result.out.find("falling back to a degraded split") != std::string::npos);
    CHECK(result.out.find("llm test (6 subtasks): posttest 1.000000, trajectory "
                          "1.000000, combined 1.000000") != std::string::npos);
    CHECK(result.out.find("  mini_fever: posttest 1.000000") != std::string::npos);
    CHECK(result.out.find("results written to ") != std::string::npos);
    CHECK(result.out.find("stats written to ") != std::string::npos);

    std::ifstream results_in(out_a + "/results.csv");
    const auto rows = read_results_csv(results_in, "results.csv");
    REQUIRE(rows.size() == 6);
    for (const auto& row : rows) {
        CHECK(row.agent == "llm");
        CHECK(row.patient == "mini_fever");
        CHECK(row.posttest == 1);
        CHECK(row.trajectory_quality == 1.0);
        CHECK(row.combined == 1.0);
        CHECK(row.trial == 1);
    }

    CHECK(slurp(out_a + "/stats.txt").find("Only one agent group present") !=
          std::string::npos);
    CHECK(fs::exists(fs::path(out_a) / "transcripts" / "mini_fever__ear_infection__w0.jsonl"));
    std::size_t transcript_count = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(out_a) / "transcripts"))
        if (entry.path().extension() == ".jsonl") ++transcript_count;
    CHECK(transcript_count == 6);

    // Same configuration, fresh run: byte-identical results.
    const std::string out_b = fresh_dir("eval_llm_b");
    CHECK(run({"eval", "--scenarios", mini_corpus(), "--agent", "llm", "--provider",
               "oracle", "--split", "test", "--seed", "3", "--out", out_b})
              .code == kExitOk);
    CHECK(slurp(out_b + "/results.csv") == slurp(out_a + "/results.csv"));

    // Parallel workers change the schedule, never the results.
    const std::string out_w = fresh_dir("eval_llm_workers");
    CHECK(run({"eval", "--scenarios", mini_corpus(), "--agent", "llm", "--provider",
               "oracle", "--split", "test", "--seed", "3", "--out", out_w, "--workers",
               "2"})
              .code == kExitOk);
    CHECK(slurp(out_w + "/results.csv") == slurp(out_a + "/results.csv"));
}

TEST_CASE("eval loads RL checkpoints and folds comparison results into the stats") {
    // A saved untrained network is enough to drive the evaluation path.
    const std::string dir = fresh_dir("eval_rl");
    const std::string checkpoint_path = dir + "/checkpoint.json";
    Checkpoint checkpoint;
    checkpoint.net = make_q_network(QNetworkConfig{}, 1);
    checkpoint.seed = 1;
    save_checkpoint(checkpoint, checkpoint_path);

    // First an llm run to produce a results file to compare against.
    const std::string llm_out = fresh_dir("eval_rl_llm_side");
    REQUIRE(run({"eval", "--scenarios", mini_corpus(), "--agent", "llm", "--provider",
                 "oracle", "--split", "test", "--seed", "3", "--out", llm_out})
                .code == kExitOk);

    const std::string rl_out = fresh_dir("eval_rl_out");
    const auto result = run({"eval", "--scenarios", mini_corpus(), "--agent", "rl",
                             "--checkpoint", checkpoint_path, "--split", "test", "--seed",
                             "3", "--out", rl_out, "--compare",
                             llm_out + "/results.csv"});
    CHECK(result.code == kExitOk);

    std::ifstream results_in(rl_out + "/results.csv");
    const auto rows = read_results_csv(results_in, "results.csv");
    REQUIRE(rows.size() == 6);
    for (const auto& row : rows) CHECK(row.agent == "rl");

    const std::string stats = slurp(rl_out + "/stats.txt");
    CHECK(stats.find("Groups: llm (n=6) rl (n=6)") != std::string::npos);
    CHECK(stats.find("Metric: combined") != std::string::npos);
    CHECK(stats.find("llm vs rl: U = ") != std::string::npos);
    CHECK(stats.find(", p_adj = ") != std::string::npos);
}

TEST_CASE("eval distinguishes user errors from runtime failures") {
    // Missing or unlocatable inputs the caller controls: exit 1.
    const auto no_checkpoint =
        run({"eval", "--scenarios", mini_corpus(), "--agent", "rl"});
    CHECK(no_checkpoint.code == kExitUserError);
    CHECK(no_checkpoint.err.find("needs --checkpoint") != std::string::npos);

    const auto gone = run({"eval", "--scenarios", mini_corpus(), "--agent", "rl",
                           "--checkpoint", "/no/such/checkpoint.json"});
    CHECK(gone.code == kExitUserError);
    CHECK(gone.err.find("checkpoint not found") != std::string::npos);

    const auto no_replay = run({"eval", "--scenarios", mini_corpus(), "--agent", "llm",
                                "--provider", "replay"});
    CHECK(no_replay.code == kExitUserError);
    CHECK(no_replay.err.find("provider replay needs --replay") != std::string::npos);

    const auto no_endpoint = run({"eval", "--scenarios", mini_corpus(), "--agent", "llm",
                                  "--provider", "http"});
    CHECK(no_endpoint.code == kExitUserError);
    CHECK(no_endpoint.err.find("--endpoint and --model") != std::string::npos);

    const auto empty_corpus =
        run({"eval", "--scenarios", fresh_dir("eval_empty"), "--agent", "llm"});
    CHECK(empty_corpus.code == kExitUserError);
    CHECK(empty_corpus.err.find("no scenarios found") != std::string::npos);

    // Broken content behind a valid path is a runtime failure: exit 2.
    const std::string dir = fresh_dir("eval_runtime");
    const std::string bad_checkpoint = dir + "/checkpoint.json";
    {
        std::ofstream out(bad_checkpoint);
        out << "{ this is not json";
    }
    const auto corrupt = run({"eval", "--scenarios", mini_corpus(), "--agent", "rl",
                              "--checkpoint", bad_checkpoint});
    CHECK(corrupt.code == kExitRuntimeError);
    CHECK(corrupt.err.find("runtime failure: ") != std::string::npos);

    const auto bad_replay = run({"eval", "--scenarios", mini_corpus(), "--agent", "llm",
                                 "--provider", "replay", "--replay",
                                 "/no/such/replay.jsonl"});
    CHECK(bad_replay.code == kExitRuntimeError);
    CHECK(bad_replay.err.find("runtime failure: ") != std::string::npos);
}
