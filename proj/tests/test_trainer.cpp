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

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "triplex/synth.hpp"
#include "triplex/trainer.hpp"
#include "test_util.hpp"

using namespace triplex;
using triplex_test::bitwise_equal;
using triplex_test::rand_tensor;

namespace {

const std::string kScratch = triplex_test::scratch_dir("trainer");

PipelineConfig micro_pipeline() {
  PipelineConfig cfg;
  cfg.encoder.d_model = 16;
  cfg.encoder.n_layers = 1;
  cfg.encoder.n_heads = 2;
  cfg.encoder.dropout = 0.0;
  cfg.adapter.splice_k = 4;
  cfg.adapter.d_hidden = 32;
  cfg.llm.d_llm = 16;
  cfg.llm.n_layers = 1;
  cfg.llm.n_heads = 2;
  cfg.llm.max_seq = 128;
  cfg.finalize();
  return cfg;
}

StageConfig micro_stage(int stage, long long steps, double lr) {
  StageConfig s;
  s.stage = stage;
  s.lr = lr;
  s.max_steps = steps;
  s.batch_size = 2;
  s.warmup_steps = 5;
  s.augment = true;
  s.seed = 11;
  return s;
}

const std::vector<ManifestEntry>& micro_corpus() {
  static const std::vector<ManifestEntry> entries =
      synth_corpus(kScratch + "/corpus", 6, 21);
  return entries;
}

bool group_changed(const Checkpoint& a, const Checkpoint& b,
                   const ParamStore& model, const std::string& group) {
  for (const auto& name : model.names_in_group(group)) {
    const Tensor& ta = a.tensors.at(name);
    const Tensor& tb = b.tensors.at(name);
    if (!bitwise_equal(ta, tb)) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("checkpoint save/load round trip is bit exact") {
  Rng rng(1);
  Checkpoint ckpt;
  ckpt.stage = 2;
  ckpt.step = 123;
  ckpt.config_snapshot = "stage.lr=0.001\n";
  ckpt.tokenizer_text = "0\tfdd0\n1\tfdd1\n2\tfdd2\n3\tfdd3\n4\t61\n";
  ckpt.tokenizer_hash = fnv1a64(ckpt.tokenizer_text);
  ckpt.tensors["a"] = rand_tensor(rng, {3, 4});
  ckpt.tensors["b.weight"] = rand_tensor(rng, {2, 3, 5});
  ckpt.tensors["c"] = Tensor({2}, {-0.0, 1e-308});

  const std::string path = kScratch + "/roundtrip.ckpt";
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  REQUIRE(back.stage == 2);
  REQUIRE(back.step == 123);
  REQUIRE(back.config_snapshot == ckpt.config_snapshot);
  REQUIRE(back.tokenizer_text == ckpt.tokenizer_text);
  REQUIRE(back.tensors.size() == 3);
  for (const auto& [name, t] : ckpt.tensors)
    REQUIRE(bitwise_equal(back.tensors.at(name), t));
}

TEST_CASE("checkpoint loader rejects corruption and version drift") {
  Rng rng(2);
  Checkpoint ckpt;
  ckpt.tensors["w"] = rand_tensor(rng, {4, 4});
  const std::string path = kScratch + "/corrupt.ckpt";
  save_checkpoint(ckpt, path);

  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(f)),
                 std::istreambuf_iterator<char>());
  }

  const std::string truncated = kScratch + "/truncated.ckpt";
  std::ofstream(truncated, std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  REQUIRE_THROWS_AS(load_checkpoint(truncated), Corrupt);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  bad_magic[1] = 'X';
  bad_magic[2] = 'X';
  bad_magic[3] = 'X';
  const std::string magic_path = kScratch + "/magic.ckpt";
  std::ofstream(magic_path, std::ios::binary) << bad_magic;
  REQUIRE_THROWS_AS(load_checkpoint(magic_path), Corrupt);

  std::string bad_version = bytes;
  bad_version[4] = 2;
  const std::string version_path = kScratch + "/version.ckpt";
  std::ofstream(version_path, std::ios::binary) << bad_version;
  REQUIRE_THROWS_AS(load_checkpoint(version_path), VersionMismatch);

  REQUIRE_THROWS_AS(load_checkpoint(kScratch + "/missing.ckpt"), MissingFile);
}

TEST_CASE("feature dump container stores a single mel tensor") {
  Rng rng(3);
  Tensor mel = rand_tensor(rng, {17, 128});
  const std::string path = kScratch + "/mel.dump";
  save_feature_dump(mel, path);
  REQUIRE(bitwise_equal(load_feature_dump(path), mel));
}

TEST_CASE("manifest loading validates structure, text and audio presence") {
  const std::string dir = kScratch + "/manifests";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/bad_json.jsonl");
    f << "{not json}\n";
  }
  REQUIRE_THROWS_AS(load_manifest(dir + "/bad_json.jsonl"), Corrupt);
  {
    std::ofstream f(dir + "/empty_text.jsonl");
    f << R"({"audio":"x.wav","text":"","lang":"en"})" << "\n";
  }
  REQUIRE_THROWS_AS(load_manifest(dir + "/empty_text.jsonl"), Corrupt);
  {
    std::ofstream f(dir + "/missing_audio.jsonl");
    f << R"({"audio":"nope.wav","text":"ab","lang":"en"})" << "\n";
  }
  REQUIRE_THROWS_AS(load_manifest(dir + "/missing_audio.jsonl"), MissingFile);
  REQUIRE_THROWS_AS(load_manifest(dir + "/nonexistent.jsonl"), MissingFile);
}

TEST_CASE("batch stream order is deterministic in the seed") {
  BatchStream a(10, 3, 42, true);
  BatchStream b(10, 3, 42, true);
  for (int i = 0; i < 20; ++i) {
    const auto ba = a.next();
    const auto bb = b.next();
    for (std::size_t j = 0; j < ba.size(); ++j) {
      REQUIRE(ba[j].index == bb[j].index);
      REQUIRE(ba[j].speed_factor == bb[j].speed_factor);
      REQUIRE(ba[j].specaug_seed == bb[j].specaug_seed);
    }
  }
}

TEST_CASE("every epoch visits each utterance exactly once") {
  BatchStream s(8, 4, 7, false);
  std::vector<int> seen(8, 0);
  for (int b = 0; b < 2; ++b)
    for (const auto& item : s.next()) seen[item.index] += 1;
  for (int c : seen) REQUIRE(c == 1);
}

TEST_CASE("without augmentation the features equal the plain frontend output") {
  const auto& entries = micro_corpus();
  FrontendConfig fcfg;
  FeatureCache cache(entries, fcfg);
  BatchStream s(entries.size(), 1, 5, false);
  for (int i = 0; i < 4; ++i) {
    const TrainItem item = s.next().front();
    REQUIRE(item.speed_factor == 1.0);
    const MelSpectrogram& cached = cache.mel(item.index, item.speed_factor);
    const MelSpectrogram direct =
        log_mel_spectrogram(load_wav(entries[item.index].audio), fcfg);
    REQUIRE(bitwise_equal(cached.frames, direct.frames));
  }
}

TEST_CASE("speed factors are drawn uniformly (chi-square, p > 0.01)") {
  BatchStream s(4, 1, 1234, true);
  std::map<double, long long> counts = {{0.9, 0}, {1.0, 0}, {1.1, 0}};
  const int draws = 3000;
  for (int i = 0; i < draws; ++i) counts.at(s.next().front().speed_factor) += 1;
  const double expect = draws / 3.0;
  double chi2 = 0.0;
  for (const auto& [factor, c] : counts) {
    const double d = static_cast<double>(c) - expect;
    chi2 += d * d / expect;
  }
  REQUIRE(chi2 <= 9.21);  // chi-square(2 dof) at p = 0.01
}

TEST_CASE("stage 1 training loss falls (moving average over 50 steps)") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  StageConfig scfg = micro_stage(1, 50, 3e-3);
  TrainResult r = run_stage1(entries, pcfg, scfg);
  REQUIRE(r.log.size() == 50);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += r.log[static_cast<std::size_t>(i)].loss;
    tail += r.log[static_cast<std::size_t>(40 + i)].loss;
  }
  REQUIRE(tail < head);
}

TEST_CASE("stage 1 changes exactly the encoder and head groups in one step") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  Checkpoint before = run_stage1(entries, pcfg, micro_stage(1, 0, 1e-3)).checkpoint;
  Checkpoint after = run_stage1(entries, pcfg, micro_stage(1, 1, 1e-3)).checkpoint;

  const Tokenizer tok = tokenizer_for(entries, pcfg.prompt_template);
  ParamStore model = build_stage1_model(pcfg, tok.vocab_size(), 0);
  REQUIRE(group_changed(before, after, model, "encoder"));
  REQUIRE(group_changed(before, after, model, "heads"));
  // the stage-1 model holds nothing else
  for (const auto& [name, t] : after.tensors) {
    const std::string g = model.group(name);
    REQUIRE((g == "encoder" || g == "heads"));
  }
}

TEST_CASE("same seed gives byte-identical stage-1 checkpoints") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  StageConfig scfg = micro_stage(1, 8, 2e-3);
  const std::string p1 = kScratch + "/det1.ckpt";
  const std::string p2 = kScratch + "/det2.ckpt";
  save_checkpoint(run_stage1(entries, pcfg, scfg).checkpoint, p1);
  save_checkpoint(run_stage1(entries, pcfg, scfg).checkpoint, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  REQUIRE(b1 == b2);
}

TEST_CASE("stage 2 freezes encoder and llm core, trains only the adapter") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  Checkpoint stage1 = run_stage1(entries, pcfg, micro_stage(1, 5, 2e-3)).checkpoint;

  Checkpoint init = run_stage2(entries, pcfg, micro_stage(2, 0, 2e-3), stage1).checkpoint;
  Checkpoint trained =
      run_stage2(entries, pcfg, micro_stage(2, 12, 2e-3), stage1).checkpoint;

  const Tokenizer tok = tokenizer_for(entries, pcfg.prompt_template);
  ParamStore model = build_full_model(pcfg, tok.vocab_size(), 0);
  REQUIRE(!group_changed(init, trained, model, "encoder"));
  REQUIRE(!group_changed(init, trained, model, "llm_core"));
  REQUIRE(!group_changed(init, trained, model, "llm_lora"));
  REQUIRE(group_changed(init, trained, model, "adapter"));

  // the encoder came verbatim from the stage-1 checkpoint
  for (const auto& name : model.names_in_group("encoder"))
    REQUIRE(bitwise_equal(trained.tensors.at(name), stage1.tensors.at(name)));
}

TEST_CASE("stage 2 step-0 loss is near ln(vocab) on a fresh LLM") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  Checkpoint stage1 = run_stage1(entries, pcfg, micro_stage(1, 3, 2e-3)).checkpoint;
  StageConfig scfg = micro_stage(2, 1, 1e-3);
  scfg.augment = false;
  TrainResult r = run_stage2(entries, pcfg, scfg, stage1);
  const Tokenizer tok = tokenizer_for(entries, pcfg.prompt_template);
  const double expect = std::log(static_cast<double>(tok.vocab_size()));
  REQUIRE(r.log.front().loss > 0.8 * expect);
  REQUIRE(r.log.front().loss < 1.2 * expect);
}

TEST_CASE("stage 3 freezes the llm core and enforces the reduced lr") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  Checkpoint stage1 = run_stage1(entries, pcfg, micro_stage(1, 3, 2e-3)).checkpoint;
  Checkpoint stage2 =
      run_stage2(entries, pcfg, micro_stage(2, 6, 2e-3), stage1).checkpoint;

  REQUIRE_THROWS_AS(
      run_stage3(entries, pcfg, micro_stage(3, 4, 2e-3), stage2), LrNotReduced);
  REQUIRE_THROWS_AS(
      run_stage3(entries, pcfg, micro_stage(3, 4, 5e-3), stage2), LrNotReduced);

  Checkpoint trained =
      run_stage3(entries, pcfg, micro_stage(3, 10, 2e-4), stage2).checkpoint;
  const Tokenizer tok = tokenizer_for(entries, pcfg.prompt_template);
  ParamStore model = build_full_model(pcfg, tok.vocab_size(), 0);
  REQUIRE(!group_changed(stage2, trained, model, "llm_core"));
  REQUIRE(!group_changed(stage2, trained, model, "encoder"));
  REQUIRE(group_changed(stage2, trained, model, "adapter"));
  REQUIRE(group_changed(stage2, trained, model, "llm_lora"));
}

TEST_CASE("stage 3 with zero steps returns the init weights verbatim") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  Checkpoint stage1 = run_stage1(entries, pcfg, micro_stage(1, 2, 2e-3)).checkpoint;
  Checkpoint stage2 =
      run_stage2(entries, pcfg, micro_stage(2, 2, 2e-3), stage1).checkpoint;
  Checkpoint stage3 =
      run_stage3(entries, pcfg, micro_stage(3, 0, 1e-4), stage2).checkpoint;
  REQUIRE(stage3.stage == 3);
  for (const auto& [name, t] : stage3.tensors)
    REQUIRE(bitwise_equal(t, stage2.tensors.at(name)));
}

TEST_CASE("stage 2 requires an encoder group in the init checkpoint") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  Checkpoint bogus;  // empty tensor set
  REQUIRE_THROWS_AS(
      run_stage2(entries, pcfg, micro_stage(2, 1, 1e-3), bogus), Corrupt);
}

TEST_CASE("training aborts with the failing step on divergence") {
  const auto& entries = micro_corpus();
  PipelineConfig pcfg = micro_pipeline();
  StageConfig scfg = micro_stage(1, 40, 1e9);  // absurd lr forces non-finite loss
  scfg.warmup_steps = 0;
  try {
    run_stage1(entries, pcfg, scfg);
    FAIL("expected DivergedLoss");
  } catch (const DivergedLoss& e) {
    REQUIRE(e.step >= 1);
    REQUIRE(e.step <= 40);
  }
}

TEST_CASE("synthetic corpus is deterministic and tone-coded") {
  const std::string d1 = kScratch + "/synth_a";
  const std::string d2 = kScratch + "/synth_b";
  const auto e1 = synth_corpus(d1, 4, 99);
  const auto e2 = synth_corpus(d2, 4, 99);
  REQUIRE(e1.size() == 4);
  for (std::size_t i = 0; i < e1.size(); ++i) {
    REQUIRE(e1[i].text == e2[i].text);
    REQUIRE(e1[i].lang == e2[i].lang);
    std::ifstream f1(e1[i].audio, std::ios::binary), f2(e2[i].audio, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(!b1.empty());
    REQUIRE(b1 == b2);
  }

  // duration is exactly 0.1 s per character
  for (const auto& e : e1) {
    const AudioBuffer a = load_wav(e.audio);
    REQUIRE(a.samples.size() == e.text.size() * 1600);
  }
}

TEST_CASE("each tone lands in the mel region of its character frequency") {
  FrontendConfig fcfg;
  const double mel_max = hz_to_mel(fcfg.sample_rate / 2.0);
  const double grid = mel_max / (fcfg.n_mels + 1);
  const AudioBuffer audio = synth_utterance_audio("a");
  const MelSpectrogram mel = log_mel_spectrogram(audio, fcfg);
  const double freq = synth_char_frequency('a');

  // frames fully inside the 100 ms tone window
  for (std::size_t t = 2; t + 3 < mel.num_frames(); ++t) {
    int argmax = 0;
    for (int m = 1; m < fcfg.n_mels; ++m)
      if (mel.frames(t, static_cast<std::size_t>(m)) >
          mel.frames(t, static_cast<std::size_t>(argmax)))
        argmax = m;
    const double center_mel = grid * (argmax + 1);
    REQUIRE(std::abs(center_mel - hz_to_mel(freq)) <= 2.5 * grid);
  }
}

TEST_CASE("run configs parse, reject unknown keys, and snapshot round-trip") {
  const std::string path = kScratch + "/run.conf";
  {
    std::ofstream f(path);
    f << "# comment\n"
      << "seed=99\n"
      << "data.train_manifest=train.jsonl\n"
      << "encoder.d_model=24\n"
      << "encoder.n_heads=3\n"
      << "stage2.lr=0.004\n"
      << "stage3.lr=0.0004\n"
      << "decode.beam_size=5\n";
  }
  RunConfig cfg = parse_run_config(path);
  REQUIRE(cfg.seed == 99);
  REQUIRE(cfg.pipeline.encoder.d_model == 24);
  REQUIRE(cfg.pipeline.adapter.d_in == 24);
  REQUIRE(cfg.stage2.lr == 0.004);
  REQUIRE(cfg.decode.beam_size == 5);

  {
    std::ofstream f(path, std::ios::app);
    f << "definitely.unknown=1\n";
  }
  REQUIRE_THROWS_AS(parse_run_config(path), ConfigError);

  PipelineConfig p = micro_pipeline();
  PipelineConfig back = pipeline_config_from_snapshot(render_kv(p.to_map()));
  REQUIRE(back.to_map() == p.to_map());
}
