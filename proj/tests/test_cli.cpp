// Copyright 2026 The Triplex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// End-to-end exercises of the `triplex` command-line interface, including
// its exit-code contract: 0 success, 1 runtime failure, 2 usage/config.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "triplex/checkpoint.hpp"
#include "triplex/manifest.hpp"
#include "test_util.hpp"

namespace {

const std::string kScratch = triplex_test::scratch_dir("cli");

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(TRIPLEX_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_config(const std::string& path, double stage3_lr) {
  std::ofstream f(path);
  f << "seed=5\n"
    << "data.train_manifest=corpus/train.jsonl\n"
    << "encoder.d_model=16\n"
    << "encoder.n_layers=1\n"
    << "encoder.n_heads=2\n"
    << "encoder.dropout=0.0\n"
    << "adapter.splice_k=4\n"
    << "adapter.d_hidden=32\n"
    << "llm.d_llm=16\n"
    << "llm.n_layers=1\n"
    << "llm.n_heads=2\n"
    << "llm.max_seq=128\n"
    << "stage1.max_steps=5\n"
    << "stage1.lr=0.003\n"
    << "stage1.batch_size=2\n"
    << "stage2.max_steps=5\n"
    << "stage2.lr=0.002\n"
    << "stage2.batch_size=2\n"
    << "stage3.max_steps=2\n"
    << "stage3.lr=" << stage3_lr << "\n"
    << "stage3.batch_size=2\n";
}

}  // namespace

TEST_CASE("cli pipeline: synth, train stages, decode, score, ablate") {
  // synth determinism: same seed twice gives byte-identical corpora
  REQUIRE(run_cli("synth --out " + kScratch + "/c1 --n-utts 4 --seed 9").exit_code == 0);
  REQUIRE(run_cli("synth --out " + kScratch + "/c2 --n-utts 4 --seed 9").exit_code == 0);
  REQUIRE(slurp(kScratch + "/c1/train.jsonl") == slurp(kScratch + "/c2/train.jsonl"));
  REQUIRE(slurp(kScratch + "/c1/wav/utt_0000.wav") ==
          slurp(kScratch + "/c2/wav/utt_0000.wav"));

  REQUIRE(run_cli("synth --out " + kScratch + "/corpus --n-utts 4 --seed 9")
              .exit_code == 0);
  write_config(kScratch + "/run.conf", 2e-4);

  // usage errors exit with 2
  REQUIRE(run_cli("train --stage 2 --config " + kScratch + "/run.conf --out " +
                  kScratch + "/x.ckpt")
              .exit_code == 2);
  REQUIRE(run_cli("bogus-subcommand").exit_code == 2);
  REQUIRE(run_cli("train --stage 7 --config c --out o").exit_code == 2);

  // unknown config keys exit with 2
  {
    std::ofstream f(kScratch + "/bad.conf");
    f << "definitely.not.a.key=1\n";
  }
  REQUIRE(run_cli("train --stage 1 --config " + kScratch + "/bad.conf --out " +
                  kScratch + "/x.ckpt")
              .exit_code == 2);

  // the three stages in order
  REQUIRE(run_cli("train --stage 1 --config " + kScratch + "/run.conf --out " +
                  kScratch + "/s1.ckpt")
              .exit_code == 0);
  REQUIRE(std::filesystem::exists(kScratch + "/s1.ckpt.log.jsonl"));
  REQUIRE(run_cli("train --stage 2 --config " + kScratch + "/run.conf --init " +
                  kScratch + "/s1.ckpt --out " + kScratch + "/s2.ckpt")
              .exit_code == 0);

  // stage 3 must reduce the learning rate
  write_config(kScratch + "/bad_lr.conf", 2e-3);
  REQUIRE(run_cli("train --stage 3 --config " + kScratch +
                  "/bad_lr.conf --init " + kScratch + "/s2.ckpt --out " +
                  kScratch + "/s3.ckpt")
              .exit_code == 2);
  REQUIRE(run_cli("train --stage 3 --config " + kScratch + "/run.conf --init " +
                  kScratch + "/s2.ckpt --out " + kScratch + "/s3.ckpt")
              .exit_code == 0);

  const triplex::Checkpoint s3 = triplex::load_checkpoint(kScratch + "/s3.ckpt");
  REQUIRE(s3.stage == 3);

  // decoding is deterministic byte-for-byte
  const std::string manifest = kScratch + "/corpus/train.jsonl";
  REQUIRE(run_cli("decode --ckpt " + kScratch + "/s3.ckpt --manifest " + manifest +
                  " --beam 2 --max-len 12 --out " + kScratch + "/hyp1.txt")
              .exit_code == 0);
  REQUIRE(run_cli("decode --ckpt " + kScratch + "/s3.ckpt --manifest " + manifest +
                  " --beam 2 --max-len 12 --out " + kScratch + "/hyp2.txt")
              .exit_code == 0);
  REQUIRE(slurp(kScratch + "/hyp1.txt") == slurp(kScratch + "/hyp2.txt"));

  // scoring the references against themselves is all zeros
  {
    const auto entries = triplex::load_manifest(manifest);
    std::ofstream f(kScratch + "/ref_as_hyp.txt");
    for (const auto& e : entries) f << e.text << "\n";
  }
  const RunResult score =
      run_cli("score --ref " + manifest + " --hyp " + kScratch + "/ref_as_hyp.txt");
  REQUIRE(score.exit_code == 0);
  REQUIRE(score.output.find("overall") != std::string::npos);
  REQUIRE(score.output.find("0.00") != std::string::npos);

  // mismatched hypothesis count is a runtime failure
  {
    std::ofstream f(kScratch + "/short_hyp.txt");
    f << "one line only\n";
  }
  REQUIRE(run_cli("score --ref " + manifest + " --hyp " + kScratch +
                  "/short_hyp.txt")
              .exit_code == 1);

  // ablation table + jsonl twin
  const RunResult ablate =
      run_cli("ablate --ckpt " + kScratch + "/s3.ckpt --manifest " + manifest +
              " --sizes 2,3 --max-len 10 --out " + kScratch + "/ablation");
  REQUIRE(ablate.exit_code == 0);
  REQUIRE(ablate.output.find("System") != std::string::npos);
  const std::string jsonl = slurp(kScratch + "/ablation.jsonl");
  REQUIRE(jsonl.find("\"beam\":2") != std::string::npos);
  REQUIRE(jsonl.find("\"beam\":3") != std::string::npos);

  // decoding a stage-1 checkpoint is a runtime failure (incomplete model)
  REQUIRE(run_cli("decode --ckpt " + kScratch + "/s1.ckpt --manifest " + manifest +
                  " --beam 2 --out " + kScratch + "/nope.txt")
              .exit_code == 1);
}

TEST_CASE("TRIPLEX_SEED overrides the flag seed") {
  REQUIRE(run_cli("synth --out " + kScratch + "/env1 --n-utts 2 --seed 1").exit_code == 0);

  // same command with a different --seed but TRIPLEX_SEED=1 in the env
  const std::string cmd = std::string("TRIPLEX_SEED=1 ") + TRIPLEX_CLI_PATH +
                          " synth --out " + kScratch +
                          "/env2 --n-utts 2 --seed 2 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[1024];
  while (fread(buf, 1, sizeof(buf), pipe) > 0) {
  }
  REQUIRE(WEXITSTATUS(pclose(pipe)) == 0);

  REQUIRE(slurp(kScratch + "/env1/train.jsonl") == slurp(kScratch + "/env2/train.jsonl"));
  REQUIRE(slurp(kScratch + "/env1/wav/utt_0000.wav") ==
          slurp(kScratch + "/env2/wav/utt_0000.wav"));
}
