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

// triplex command line: synthetic corpus generation, staged training,
// decoding, scoring, and the beam-size ablation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "triplex/config.hpp"
#include "triplex/decode_eval.hpp"
#include "triplex/synth.hpp"
#include "triplex/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t env_seed_or(std::uint64_t fallback) {
  if (const char* env = std::getenv("TRIPLEX_SEED"))
    return static_cast<std::uint64_t>(std::stoull(env));
  return fallback;
}

std::string resolve_relative(const std::string& path, const std::string& anchor) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(anchor).parent_path() / p).string();
}

void write_step_log(const std::vector<triplex::StepLog>& log,
                    const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw triplex::IoFailure("cannot write step log: " + path);
  for (const auto& s : log)
    f << "{\"step\":" << s.step << ",\"loss\":" << nlohmann::json(s.loss).dump()
      << ",\"lr\":" << nlohmann::json(s.lr).dump() << "}\n";
}

void write_lines(const std::vector<std::string>& lines, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw triplex::IoFailure("cannot write " + path);
  for (const auto& l : lines) f << l << "\n";
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw triplex::MissingFile("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

int cmd_synth(const std::string& out_dir, std::size_t n_utts, std::uint64_t seed) {
  triplex::synth_corpus(out_dir, n_utts, env_seed_or(seed));
  std::cout << "wrote " << n_utts << " utterances under " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(int stage, const std::string& config_path,
              const std::string& init_path, const std::string& out_path) {
  triplex::RunConfig cfg = triplex::parse_run_config(config_path);
  triplex::apply_seed_override(cfg);
  if (cfg.train_manifest.empty())
    throw triplex::ConfigError("config: data.train_manifest is required");
  const auto manifest =
      triplex::load_manifest(resolve_relative(cfg.train_manifest, config_path));

  triplex::TrainResult result;
  if (stage == 1) {
    result = triplex::run_stage1(manifest, cfg.pipeline, cfg.stage1);
  } else {
    const triplex::Checkpoint init = triplex::load_checkpoint(init_path);
    result = stage == 2
                 ? triplex::run_stage2(manifest, cfg.pipeline, cfg.stage2, init)
                 : triplex::run_stage3(manifest, cfg.pipeline, cfg.stage3, init);
  }
  triplex::save_checkpoint(result.checkpoint, out_path);
  write_step_log(result.log, out_path + ".log.jsonl");
  std::cout << "stage " << stage << " done: " << result.log.size()
            << " steps, checkpoint " << out_path << "\n";
  return kExitOk;
}

int cmd_decode(const std::string& ckpt_path, const std::string& manifest_path,
               const triplex::DecodeConfig& dcfg, const std::string& out_path) {
  const triplex::Pipeline pipeline =
      triplex::pipeline_from_checkpoint(triplex::load_checkpoint(ckpt_path));
  const auto manifest = triplex::load_manifest(manifest_path);
  const auto hyps = triplex::decode_corpus(manifest, pipeline, dcfg);
  write_lines(hyps, out_path);
  std::cout << "decoded " << hyps.size() << " utterances -> " << out_path << "\n";
  return kExitOk;
}

int cmd_score(const std::string& ref_path, const std::string& hyp_path) {
  const auto refs = triplex::load_manifest(ref_path, /*check_audio=*/false);
  auto hyps = read_lines(hyp_path);
  // a single trailing blank line is file-format noise, not a hypothesis
  while (hyps.size() > refs.size() && !hyps.empty() && hyps.back().empty())
    hyps.pop_back();
  const triplex::WerReport report = triplex::score_corpus(refs, hyps);
  std::cout << triplex::render_wer_report(report);
  return kExitOk;
}

int cmd_ablate(const std::string& ckpt_path, const std::string& manifest_path,
               const std::vector<int>& sizes, const triplex::DecodeConfig& dcfg,
               const std::string& system, const std::string& out_prefix) {
  const triplex::Pipeline pipeline =
      triplex::pipeline_from_checkpoint(triplex::load_checkpoint(ckpt_path));
  const auto manifest = triplex::load_manifest(manifest_path);
  const auto rows = triplex::ablate_beam(pipeline, manifest, sizes, dcfg, system);
  const std::string table = triplex::render_ablation_table(rows);
  std::cout << table;
  if (!out_prefix.empty()) {
    std::ofstream t(out_prefix + ".txt", std::ios::binary | std::ios::trunc);
    t << table;
    std::ofstream j(out_prefix + ".jsonl", std::ios::binary | std::ios::trunc);
    j << triplex::render_ablation_jsonl(rows);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triplex: desk-scale encoder-adapter-LLM speech recognition"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic tone-code corpus");
  std::string synth_out;
  std::size_t synth_n = 8;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n-utts", synth_n, "number of utterances");
  synth->add_option("--seed", synth_seed, "generator seed");

  auto* train = app.add_subcommand("train", "run one training stage");
  int train_stage = 0;
  std::string train_config, train_init, train_out;
  train->add_option("--stage", train_stage, "training stage (1, 2, or 3)")
      ->required()
      ->check(CLI::Range(1, 3));
  train->add_option("--config", train_config, "key=value config file")->required();
  train->add_option("--init", train_init, "init checkpoint (stages 2 and 3)");
  train->add_option("--out", train_out, "output checkpoint path")->required();

  auto* decode = app.add_subcommand("decode", "transcribe a manifest");
  std::string dec_ckpt, dec_manifest, dec_out;
  int dec_beam = 8;
  int dec_max_len = 64;
  double dec_len_penalty = 0.0;
  decode->add_option("--ckpt", dec_ckpt, "checkpoint")->required();
  decode->add_option("--manifest", dec_manifest, "evaluation manifest")->required();
  decode->add_option("--beam", dec_beam, "beam size");
  decode->add_option("--max-len", dec_max_len, "max generated tokens");
  decode->add_option("--length-penalty", dec_len_penalty, "score length penalty");
  decode->add_option("--out", dec_out, "hypothesis output file")->required();

  auto* score = app.add_subcommand("score", "score hypotheses against a manifest");
  std::string score_ref, score_hyp;
  score->add_option("--ref", score_ref, "reference manifest")->required();
  score->add_option("--hyp", score_hyp, "hypothesis file, one line per utterance")
      ->required();

  auto* ablate = app.add_subcommand("ablate", "beam-size ablation table");
  std::string abl_ckpt, abl_manifest, abl_out, abl_system = "triplex";
  std::string abl_sizes = "2,3,5,8";
  int abl_max_len = 64;
  ablate->add_option("--ckpt", abl_ckpt, "checkpoint")->required();
  ablate->add_option("--manifest", abl_manifest, "evaluation manifest")->required();
  ablate->add_option("--sizes", abl_sizes, "comma-separated beam sizes");
  ablate->add_option("--max-len", abl_max_len, "max generated tokens");
  ablate->add_option("--system", abl_system, "system label for the table");
  ablate->add_option("--out", abl_out, "output prefix (.txt and .jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_out, synth_n, synth_seed);
    if (train->parsed()) {
      if (train_stage != 1 && train_init.empty())
        throw UsageError("train: --init is required for stages 2 and 3");
      return cmd_train(train_stage, train_config, train_init, train_out);
    }
    if (decode->parsed()) {
      triplex::DecodeConfig dcfg{dec_beam, dec_max_len, dec_len_penalty};
      dcfg.validate();
      return cmd_decode(dec_ckpt, dec_manifest, dcfg, dec_out);
    }
    if (score->parsed()) return cmd_score(score_ref, score_hyp);
    if (ablate->parsed()) {
      std::vector<int> sizes;
      std::stringstream ss(abl_sizes);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) sizes.push_back(std::stoi(tok));
      triplex::DecodeConfig dcfg{8, abl_max_len, 0.0};
      return cmd_ablate(abl_ckpt, abl_manifest, sizes, dcfg, abl_system, abl_out);
    }
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const triplex::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const triplex::LrNotReduced& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const triplex::TriplexError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
