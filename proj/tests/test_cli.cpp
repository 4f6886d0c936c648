// End-to-end checks of the polaris binary: exit codes, artifact shapes,
// determinism. Each case shells the real executable into a scratch dir.
#include <sys/wait.h>

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "polaris/baselines.hpp"

namespace fs = std::filesystem;
using namespace polaris;

namespace {

const std::string kMicro = std::string(POLARIS_SOURCE_DIR) + "/workloads/micro.json";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(POLARIS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("polaris_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// name -> bytes for every regular file under dir.
std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("cli exit codes separate usage errors from runtime failures", "[cli]") {
  const auto dir = scratch_dir("codes");
  const std::string od = " --out-dir " + dir.string();

  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);                  // subcommand required
  CHECK(run_cli("no-such-command") == 2);
  CHECK(run_cli("gen-data --workload " + kMicro + " --fidelity low --n 0" + od) == 2);
  CHECK(run_cli("gen-data --workload " + kMicro + " --fidelity warm --n 4" + od) == 2);
  CHECK(run_cli("train-high --dataset x.jsonl" + od) == 2);  // transfer source required
  CHECK(run_cli("run-baseline --workload " + kMicro + " --kind dkl_scratch" + od) == 2);
  // Runtime failure: dataset file does not exist.
  CHECK(run_cli("train-low --dataset missing.jsonl" + od) == 1);
  CHECK(run_cli("gen-data --workload " + dir.string() + "/nope.json --fidelity low --n 4" +
                od) == 1);
}

TEST_CASE("cli gen-data writes a header plus one line per sample, deterministically",
          "[cli]") {
  const auto dir = scratch_dir("gendata");
  const std::string od = " --out-dir " + dir.string();
  const std::string cmd =
      "gen-data --workload " + kMicro + " --fidelity low --n 32 --seed 7" + od;

  REQUIRE(run_cli(cmd) == 0);
  const fs::path out = dir / "dataset_low_micro_n32_s7.jsonl";
  REQUIRE(fs::exists(out));
  const std::string first = slurp(out);
  CHECK(count_lines(first) == 33);  // header + 32 samples

  const Dataset ds = load_dataset(out.string());
  CHECK(ds.samples.size() == 32);
  CHECK(ds.oracle_id == "low");

  REQUIRE(run_cli(cmd) == 0);
  CHECK(slurp(out) == first);

  // POLARIS_SEED feeds the default seed.
  REQUIRE(std::system(("POLARIS_SEED=9 " + std::string(POLARIS_CLI_PATH) +
                       " gen-data --workload " + kMicro + " --fidelity high --n 8" + od +
                       " >/dev/null 2>&1")
                          .c_str()) == 0);
  CHECK(fs::exists(dir / "dataset_high_micro_n8_s9.jsonl"));
}

TEST_CASE("cli training commands emit checkpoints plus history CSVs", "[cli]") {
  const auto dir = scratch_dir("train");
  const std::string od = " --out-dir " + dir.string();

  REQUIRE(run_cli("gen-data --workload " + kMicro + " --fidelity low --n 64 --seed 3 --out "
                  "low.jsonl" + od) == 0);
  REQUIRE(run_cli("gen-data --workload " + kMicro + " --fidelity high --n 32 --seed 5 --out "
                  "high.jsonl" + od) == 0);

  SECTION("train-low") {
    REQUIRE(run_cli("train-low --dataset low.jsonl --epochs 12 --batch-size 32" + od) == 0);
    const fs::path ckpt = dir / "checkpoint_low_s0.json";
    REQUIRE(fs::exists(ckpt));
    const StarlightLowModel low = load_starlight_low(ckpt.string());
    CHECK(!low.encoder.layers.empty());
    CHECK(!low.dataset_hash.empty());

    const std::string hist = slurp(dir / "history_low_s0.csv");
    CHECK(count_lines(hist) == 2 + 12);  // provenance + columns + one row per epoch
    CHECK(hist.rfind("# polaris cfg=", 0) == 0);
    CHECK(hist.find("epoch,pred,recon,kl,total") != std::string::npos);

    // Fidelity mismatch is a runtime error.
    CHECK(run_cli("train-low --dataset high.jsonl" + od) == 1);
  }

  SECTION("train-high, transfer and scratch") {
    REQUIRE(run_cli("train-low --dataset low.jsonl --epochs 10 --batch-size 32 --out "
                    "low_ckpt.json" + od) == 0);
    REQUIRE(run_cli("train-high --dataset high.jsonl --low-checkpoint low_ckpt.json "
                    "--epochs 40" + od) == 0);
    REQUIRE(fs::exists(dir / "checkpoint_high_s0.json"));
    const std::string hist = slurp(dir / "history_high_s0.csv");
    CHECK(count_lines(hist) == 2 + 40 / std::max(1, 40 / 20));  // epochs / eval-interval

    REQUIRE(run_cli("train-high --dataset high.jsonl --from-scratch --epochs 15" + od) == 0);
    REQUIRE(fs::exists(dir / "checkpoint_scratch_s0.json"));
    CHECK(run_cli("train-high --dataset low.jsonl --from-scratch" + od) == 1);
  }
}

TEST_CASE("cli run-dse writes one history per trial plus a summary", "[cli]") {
  const auto dir = scratch_dir("rundse");
  const std::string od = " --out-dir " + dir.string();

  REQUIRE(run_cli("gen-data --workload " + kMicro + " --fidelity high --n 24 --seed 5 --out "
                  "high.jsonl" + od) == 0);
  REQUIRE(run_cli("train-high --dataset high.jsonl --from-scratch --epochs 15" + od) == 0);

  REQUIRE(run_cli("run-dse --workload " + kMicro + " --checkpoint checkpoint_scratch_s0.json "
                  "--n-outer 2 --m-inner 2 --pool 64 --probe 4 --refit 2 --trials 3" + od) ==
          0);
  for (int s = 0; s < 3; ++s) {
    const fs::path h = dir / ("history_polaris_micro_s" + std::to_string(s) + ".jsonl");
    REQUIRE(fs::exists(h));
    const RunHistory run = load_history(h.string());
    CHECK(run.seed == static_cast<std::uint64_t>(s));
    CHECK(run.n_high_evals == 2 * 2 * 1);  // n_outer * m_inner * layers
  }
  const std::string summary = slurp(dir / "summary_polaris_micro_s0.csv");
  CHECK(summary.find("final_edp_median,micro/polaris") != std::string::npos);
  CHECK(summary.find("final_edp_min") != std::string::npos);
  CHECK(summary.find("final_edp_max") != std::string::npos);
  CHECK(summary.find(";v0.1.0") != std::string::npos);

  SECTION("software-only DSE on fixed hardware") {
    REQUIRE(run_cli("run-dse --workload " + kMicro +
                    " --checkpoint checkpoint_scratch_s0.json --fix-hw 8,16,16 --sw-iters 3" +
                    od) == 0);
    const RunHistory run = load_history((dir / "history_polaris-sw_micro_s0.jsonl").string());
    CHECK(run.method == "polaris-sw");
    CHECK(run.n_high_evals == 3);  // sw-iters * layers
    CHECK(run_cli("run-dse --workload " + kMicro +
                  " --checkpoint checkpoint_scratch_s0.json --fix-hw 9,16,16" + od) == 2);
  }
}

TEST_CASE("cli run-baseline enforces baseline contracts", "[cli]") {
  const auto dir = scratch_dir("baseline");
  const std::string od = " --out-dir " + dir.string();

  REQUIRE(run_cli("gen-data --workload " + kMicro + " --fidelity high --n 24 --seed 5 --out "
                  "high.jsonl" + od) == 0);
  REQUIRE(run_cli("train-high --dataset high.jsonl --from-scratch --epochs 15" + od) == 0);

  REQUIRE(run_cli("run-baseline --workload " + kMicro + " --kind offline_random "
                  "--checkpoint checkpoint_scratch_s0.json --samples-per-layer 400" + od) ==
          0);
  const RunHistory rnd = load_history((dir / "history_offline_random_micro_s0.jsonl").string());
  CHECK(rnd.n_high_evals == 1);  // exactly one high-fidelity call per layer

  CHECK(run_cli("run-baseline --workload " + kMicro + " --kind offline_random" + od) == 2);

  REQUIRE(run_cli("run-baseline --workload " + kMicro + " --kind vanilla_bo "
                  "--n-outer 2 --m-inner 2 --pool 64 --probe 4 --refit 2" + od) == 0);
  const RunHistory vbo = load_history((dir / "history_vanilla_bo_micro_s0.jsonl").string());
  CHECK(vbo.method == "vanilla_bo");
  CHECK(vbo.n_high_evals == 2 * 2 * 1);
}

TEST_CASE("cli report merges histories and honors the method filter", "[cli]") {
  const auto dir = scratch_dir("report");
  const std::string od = " --out-dir " + dir.string();

  REQUIRE(run_cli("gen-data --workload " + kMicro + " --fidelity high --n 24 --seed 5 --out "
                  "high.jsonl" + od) == 0);
  REQUIRE(run_cli("train-high --dataset high.jsonl --from-scratch --epochs 15" + od) == 0);
  REQUIRE(run_cli("run-dse --workload " + kMicro + " --checkpoint checkpoint_scratch_s0.json "
                  "--n-outer 2 --m-inner 2 --pool 64 --probe 4 --refit 2" + od) == 0);
  REQUIRE(run_cli("run-baseline --workload " + kMicro + " --kind vanilla_bo --n-outer 2 "
                  "--m-inner 2 --pool 64 --probe 4 --refit 2" + od) == 0);

  REQUIRE(run_cli("report --in-dir ." + od) == 0);
  const std::string both = slurp(dir / "report.csv");
  CHECK(both.find("micro/polaris") != std::string::npos);
  CHECK(both.find("micro/vanilla_bo") != std::string::npos);

  REQUIRE(run_cli("report --in-dir . --compare polaris --out polaris_only.csv" + od) == 0);
  const std::string filtered = slurp(dir / "polaris_only.csv");
  CHECK(filtered.find("micro/polaris") != std::string::npos);
  CHECK(filtered.find("vanilla_bo") == std::string::npos);

  CHECK(run_cli("report --in-dir . --compare no_such_method" + od) == 1);
  CHECK(run_cli("report" + od) == 2);  // no inputs at all
}

TEST_CASE("cli smoke pipeline reruns byte-identically", "[cli]") {
  const auto dir1 = scratch_dir("figs_a");
  const auto dir2 = scratch_dir("figs_b");
  const std::string wd = " --workload-dir " + std::string(POLARIS_SOURCE_DIR) + "/workloads";

  REQUIRE(run_cli("make-paper-figures --scale smoke --out-dir " + dir1.string() + wd) == 0);
  REQUIRE(run_cli("make-paper-figures --scale smoke --out-dir " + dir2.string() + wd) == 0);

  const auto a = dir_contents(dir1);
  const auto b = dir_contents(dir2);
  REQUIRE(!a.empty());
  REQUIRE(a.size() == b.size());
  for (const auto& [name, bytes] : a) {
    INFO(name);
    REQUIRE(b.count(name) == 1);
    CHECK(b.at(name) == bytes);
  }
}
