#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "ldpf/serialization.hpp"

namespace fs = std::filesystem;
using ldpf::Json;
using ldpf::read_text_file;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

struct ScratchDir {
  fs::path path;
  ScratchDir() : path(fs::temp_directory_path() / ("ldpf_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

fs::path scratch() {
  static const ScratchDir dir;
  return dir.path;
}

Run run_cli(const std::string& args) {
  const fs::path out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd = std::string(LDPF_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out.string());
  r.err = read_text_file(err.string());
  return r;
}

Json json_file(const fs::path& p) { return Json::parse(read_text_file(p.string())); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 1") {
    CHECK(run_cli("").code == 1);
    CHECK(run_cli("frobnicate").code == 1);
    CHECK(run_cli("train --epochs abc").code == 1);
    CHECK(run_cli("train --fusion-mode best --out " + (scratch() / "x").string()).code == 1);
    const Run r = run_cli("oracle");
    CHECK(r.code == 1);
  }

  TEST_CASE("help exits cleanly") { CHECK(run_cli("--help").code == 0); }

  TEST_CASE("a missing dataset root is a runtime failure naming the problem") {
    const Run r = run_cli("train --dataset /nonexistent/ldpf-data --out " + (scratch() / "missing").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("missing root") != std::string::npos);
  }

  TEST_CASE("zero epochs writes a checkpoint of the initialized model") {
    const fs::path out = scratch() / "zero";
    const Run r = run_cli("train --epochs 0 --seed 0 --split 0 --out " + out.string());
    REQUIRE(r.code == 0);
    CHECK(fs::exists(out / "config.json"));
    CHECK(fs::exists(out / "seed_0/split_0/checkpoint.json"));
    CHECK(read_text_file((out / "seed_0/split_0/log.jsonl").string()).empty());
    CHECK(json_file(out / "train_report.json")["runs"][0]["epochs"] == 0);
  }

  TEST_CASE("train, eval sweep, oracle and inspect-clusters on one split") {
    const fs::path out = scratch() / "pipeline";
    const std::string train_args = "train --epochs 4 --seed 1 --split 2 --plot --out ";
    REQUIRE(run_cli(train_args + out.string()).code == 0);
    const fs::path ckpt = out / "seed_1/split_2/checkpoint.json";
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(out / "seed_1/split_2/losses.svg"));
    const Json config = json_file(out / "config.json");
    CHECK(config["train"]["epochs"] == 4);
    CHECK(config["seeds"] == Json::array({1}));

    // rerun into the same directory: every artifact is reproduced byte for byte
    const std::string first_ckpt = read_text_file(ckpt.string());
    const std::string first_report = read_text_file((out / "train_report.json").string());
    const std::string first_log = read_text_file((out / "seed_1/split_2/log.jsonl").string());
    fs::remove_all(out);
    REQUIRE(run_cli(train_args + out.string()).code == 0);
    CHECK(read_text_file(ckpt.string()) == first_ckpt);
    CHECK(read_text_file((out / "train_report.json").string()) == first_report);
    CHECK(read_text_file((out / "seed_1/split_2/log.jsonl").string()) == first_log);

    const fs::path eval_dir = scratch() / "eval";
    const Run ev = run_cli("eval --fusion-mode sweep --out " + eval_dir.string() + " " + ckpt.string());
    REQUIRE(ev.code == 0);
    const Json report = json_file(eval_dir / "eval_report.json");
    REQUIRE(report["summary"].size() == 3);
    CHECK(report["summary"][0]["fusion_mode"] == "similarity");
    CHECK(report["summary"][1]["fusion_mode"] == "greedy");
    CHECK(report["summary"][2]["fusion_mode"] == "average");
    CHECK(report["runs"][0]["target_domain"] == 2);

    const fs::path dump = eval_dir / "predictions_0_similarity.jsonl";
    REQUIRE(fs::exists(dump));
    const fs::path oracle_dir = scratch() / "oracle";
    REQUIRE(run_cli("oracle --plot --out " + oracle_dir.string() + " " + dump.string()).code == 0);
    const Json bound = json_file(oracle_dir / "oracle_report.json");
    CHECK(bound.contains("gap"));
    CHECK(bound["U_sel"].get<double>() >= bound["per_prompt_accuracy"][0].get<double>());
    CHECK(bound["status"].get<std::string>().size() > 0);
    CHECK(fs::exists(oracle_dir / "oracle.svg"));

    const fs::path inspect_dir = scratch() / "inspect";
    REQUIRE(run_cli("inspect-clusters --plot --out " + inspect_dir.string() + " " + ckpt.string()).code == 0);
    const Json clusters = json_file(inspect_dir / "cluster_report.json");
    CHECK(clusters.contains("agreement"));
    CHECK(clusters["annotated_domains"].size() == 2);
    CHECK(fs::exists(inspect_dir / "clusters.svg"));
  }

  TEST_CASE("a written manifest replays the same training run") {
    const fs::path a = scratch() / "replay_a", b = scratch() / "replay_b";
    REQUIRE(run_cli("train --epochs 2 --seed 0 --split 1 --out " + a.string()).code == 0);
    REQUIRE(fs::exists(a / "manifest.json"));
    REQUIRE(run_cli("train --epochs 2 --seed 0 --split 1 --dataset " + (a / "manifest.json").string() + " --out " +
                    b.string())
                .code == 0);
    CHECK(json_file(b / "config.json")["dataset"]["kind"] == "manifest");
    CHECK(json_file(a / "train_report.json")["runs"] == json_file(b / "train_report.json")["runs"]);
    const Json ca = json_file(a / "seed_0/split_1/checkpoint.json");
    const Json cb = json_file(b / "seed_0/split_1/checkpoint.json");
    CHECK(ca["prompts"] == cb["prompts"]);
    CHECK(ca["latent_domain"] == cb["latent_domain"]);
  }

  TEST_CASE("malformed prediction dumps name the offending line") {
    const fs::path dump = scratch() / "bad.jsonl";
    ldpf::write_text_file(dump.string(), "{\"sample_id\": \"a\"}\n");
    const Run r = run_cli("oracle --out " + (scratch() / "bad").string() + " " + dump.string());
    CHECK(r.code == 2);
    CHECK(r.err.find("line 1") != std::string::npos);
  }

  TEST_CASE("config files are applied and unknown keys rejected") {
    const fs::path cfg = scratch() / "cfg.json";
    ldpf::write_text_file(cfg.string(), R"({"train": {"epochs": 1, "m2": 2}, "seeds": [3]})");
    const fs::path out = scratch() / "from_config";
    REQUIRE(run_cli("train --config " + cfg.string() + " --split 0 --out " + out.string()).code == 0);
    const Json echoed = json_file(out / "config.json");
    CHECK(echoed["train"]["m2"] == 2);
    CHECK(fs::exists(out / "seed_3/split_0/checkpoint.json"));

    ldpf::write_text_file(cfg.string(), R"({"train": {"epochz": 1}})");
    CHECK(run_cli("train --config " + cfg.string() + " --out " + out.string()).code != 0);
  }

  TEST_CASE("ablate emits every variant") {
    const fs::path out = scratch() / "ablate";
    REQUIRE(run_cli("ablate --epochs 1 --seed 0 --split 0 --out " + out.string()).code == 0);
    const Json report = json_file(out / "ablation_report.json");
    REQUIRE(report["variants"].size() == 7);
    CHECK(report["variants"][0]["variant"] == "full");
    CHECK(report["variants"][0]["delta_vs_full"] == 0.0);
  }
}
