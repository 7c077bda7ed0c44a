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

#include "triplex/fdcheck.hpp"
#include "triplex/llm.hpp"
#include "test_util.hpp"

using namespace triplex;
using triplex_test::bitwise_equal;
using triplex_test::rand_tensor;

namespace {

LlmConfig tiny_llm() {
  LlmConfig cfg;
  cfg.d_llm = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.max_seq = 64;
  return cfg;
}

struct TinyModel {
  LlmConfig cfg = tiny_llm();
  LoraConfig lora;
  ParamStore store;
  int vocab = 9;

  explicit TinyModel(std::uint64_t seed) {
    init_llm_params(store, cfg, vocab, seed);
    init_lora_params(store, cfg, lora, seed);
  }
};

PackedSequence tiny_sequence(std::size_t audio_rows, bool with_target) {
  std::vector<int> prompt = {4, 5, 6};
  std::optional<std::vector<int>> target;
  if (with_target) target = std::vector<int>{7, 8};
  return build_packed_sequence(prompt, audio_rows, target, 64);
}

}  // namespace

TEST_CASE("tokenizer builds specials plus sorted corpus characters") {
  Tokenizer tok = build_tokenizer({"ab", "ba"});
  REQUIRE(tok.vocab_size() == 6);
  REQUIRE(tok.tokenize("ab") == std::vector<int>{4, 5});
  REQUIRE(tok.tokenize("ba") == std::vector<int>{5, 4});
}

TEST_CASE("tokenizer construction is deterministic") {
  Tokenizer a = build_tokenizer({"hello", "world"});
  Tokenizer b = build_tokenizer({"hello", "world"});
  REQUIRE(a.serialize() == b.serialize());
  REQUIRE(a.hash() == b.hash());
}

TEST_CASE("tokenizer handles multi-byte characters and rejects unseen ones") {
  Tokenizer tok = build_tokenizer({"caf\xc3\xa9"});  // café
  REQUIRE(tok.has_char(0xe9));
  REQUIRE_THROWS_AS(tok.tokenize("x"), UnknownCharacter);
  const std::string text = "caf\xc3\xa9";
  REQUIRE(tok.detokenize(tok.tokenize(text)) == text);
}

TEST_CASE("tokenizer round-trips through its text serialization") {
  Tokenizer tok = build_tokenizer({"abc xyz", "0123"});
  const std::string blob = tok.serialize();
  Tokenizer back = Tokenizer::deserialize(blob);
  REQUIRE(back.serialize() == blob);
  REQUIRE(back.tokenize("abc") == tok.tokenize("abc"));

  // one line per id: "id<TAB>hex", specials first
  REQUIRE(blob.rfind("0\tfdd0\n1\tfdd1\n2\tfdd2\n3\tfdd3\n", 0) == 0);
}

TEST_CASE("tokenizer detokenize strips specials") {
  Tokenizer tok = build_tokenizer({"hi"});
  std::vector<int> ids = {Tokenizer::kBos};
  for (int id : tok.tokenize("hi")) ids.push_back(id);
  ids.push_back(Tokenizer::kEos);
  REQUIRE(tok.detokenize(ids) == "hi");
}

TEST_CASE("empty corpus is rejected") {
  REQUIRE_THROWS_AS(build_tokenizer({}), EmptyCorpus);
}

TEST_CASE("packed sequence layout and mask counts") {
  std::vector<int> prompt(5, 4);
  std::vector<int> target(7, 5);
  PackedSequence seq = build_packed_sequence(prompt, 10, target, 512);
  REQUIRE(seq.length() == 23);  // 1 + 5 + 10 + 7

  std::size_t trues = 0;
  for (bool b : seq.loss_mask) trues += b ? 1 : 0;
  REQUIRE(trues == 8);  // positions predicting a target token or EOS

  // the last audio position predicts the first target token
  REQUIRE(seq.loss_mask[15]);
  REQUIRE(seq.targets[15] == 5);
  // the final position predicts EOS
  REQUIRE(seq.targets[22] == Tokenizer::kEos);
  // prompt positions predict nothing
  for (std::size_t i = 0; i < 5; ++i) REQUIRE(!seq.loss_mask[i]);
}

TEST_CASE("packed sequence without a target is a decode prefix") {
  PackedSequence seq = build_packed_sequence({4, 5}, 6, std::nullopt, 512);
  REQUIRE(seq.length() == 9);
  for (bool b : seq.loss_mask) REQUIRE(!b);
  for (int t : seq.targets) REQUIRE(t == -1);
}

TEST_CASE("packed sequence construction is deterministic and bounded") {
  PackedSequence a = tiny_sequence(4, true);
  PackedSequence b = tiny_sequence(4, true);
  REQUIRE(a.loss_mask == b.loss_mask);
  REQUIRE(a.targets == b.targets);
  REQUIRE(a.length() == b.length());

  REQUIRE_THROWS_AS(build_packed_sequence({4}, 100, std::nullopt, 32),
                    SequenceTooLong);
  REQUIRE_THROWS_AS(build_packed_sequence({4}, 2, std::vector<int>{}, 32),
                    MissingTarget);
  REQUIRE_THROWS_AS(build_packed_sequence({}, 2, std::nullopt, 32), ConfigError);
}

TEST_CASE("zero-initialized LoRA leaves logits bit-identical") {
  TinyModel m(50);
  Rng rng(51);
  Tensor audio = rand_tensor(rng, {4, 16});
  PackedSequence seq = tiny_sequence(4, true);
  Tensor with = lm_forward(seq, audio, m.store, m.cfg, m.lora, true);
  Tensor without = lm_forward(seq, audio, m.store, m.cfg, m.lora, false);
  REQUIRE(bitwise_equal(with, without));
}

TEST_CASE("causality: changing the last position leaves earlier logits alone") {
  TinyModel m(60);
  Rng rng(61);
  Tensor audio = rand_tensor(rng, {3, 16});

  PackedSequence seq = tiny_sequence(3, true);
  Tensor base = lm_forward(seq, audio, m.store, m.cfg, m.lora, false);

  PackedSequence altered = seq;
  altered.positions.back().token_id = 4;  // was 8
  Tensor changed = lm_forward(altered, audio, m.store, m.cfg, m.lora, false);

  const std::size_t v = base.dims[1];
  for (std::size_t i = 0; i + 1 < base.dims[0]; ++i)
    for (std::size_t j = 0; j < v; ++j) REQUIRE(base(i, j) == changed(i, j));
}

TEST_CASE("causality holds at every position under random perturbation") {
  TinyModel m(62);
  Rng rng(63);
  Tensor audio = rand_tensor(rng, {2, 16});
  PackedSequence seq = tiny_sequence(2, true);
  Tensor base = lm_forward(seq, audio, m.store, m.cfg, m.lora, false);

  for (std::size_t pos = 1; pos < seq.length(); ++pos) {
    if (seq.positions[pos].is_audio) continue;
    PackedSequence altered = seq;
    altered.positions[pos].token_id = (altered.positions[pos].token_id + 1) % 9;
    Tensor changed = lm_forward(altered, audio, m.store, m.cfg, m.lora, false);
    for (std::size_t i = 0; i < pos; ++i)
      for (std::size_t j = 0; j < base.dims[1]; ++j)
        REQUIRE(base(i, j) == changed(i, j));
  }
}

TEST_CASE("gradients through the LoRA factors pass finite differences") {
  TinyModel m(70);
  Rng rng(71);
  // nonzero factors so both sides of the product matter
  m.store.load_tensor("lora.l0.q.a", rand_tensor(rng, {4, 16}, 0.1));
  m.store.load_tensor("lora.l0.q.b", rand_tensor(rng, {16, 4}, 0.1));
  m.store.load_tensor("lora.l0.v.a", rand_tensor(rng, {4, 16}, 0.1));
  m.store.load_tensor("lora.l0.v.b", rand_tensor(rng, {16, 4}, 0.1));
  m.store.set_trainable("llm_lora", true);

  Tensor audio = rand_tensor(rng, {2, 16});
  PackedSequence seq = build_packed_sequence({4, 5}, 2, std::vector<int>{6}, 64);
  auto loss_at = [&]() {
    Var logits =
        lm_forward(seq, Var::constant(audio), m.store, m.cfg, m.lora, true);
    return masked_cross_entropy(logits, seq.targets, seq.loss_mask);
  };

  Var loss = loss_at();
  backward(loss);

  // hand-rolled central differences over every LoRA element; h sized for
  // the deep composition (loss ~ O(1), per-element grads ~ 1e-4)
  const double h = 1e-4;
  double max_rel = 0.0;
  for (const auto& name : m.store.names_in_group("llm_lora")) {
    REQUIRE(m.store.at(name).has_grad());
    const Tensor analytic = m.store.at(name).grad();
    Tensor work = m.store.at(name).value();
    for (std::size_t i = 0; i < work.size(); ++i) {
      const double orig = work.data[i];
      work.data[i] = orig + h;
      m.store.load_tensor(name, work);
      const double fp = loss_at().value().item();
      work.data[i] = orig - h;
      m.store.load_tensor(name, work);
      const double fm = loss_at().value().item();
      work.data[i] = orig;
      m.store.load_tensor(name, work);
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom =
          std::max({std::abs(analytic.data[i]), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(analytic.data[i] - numeric) / denom);
    }
  }
  REQUIRE(max_rel <= 1e-4);
  REQUIRE(max_rel <= 1e-6);
}

TEST_CASE("lm_forward gradients reach LoRA and audio but not frozen core") {
  TinyModel m(80);
  m.store.set_trainable("llm_lora", true);
  Rng rng(81);
  Var audio(rand_tensor(rng, {3, 16}), /*requires_grad=*/true);
  PackedSequence seq = tiny_sequence(3, true);
  Var logits = lm_forward(seq, audio, m.store, m.cfg, m.lora, true);
  Var loss = masked_cross_entropy(logits, seq.targets, seq.loss_mask);
  backward(loss);

  REQUIRE(audio.has_grad());
  bool lora_grad = false;
  for (const auto& name : m.store.names_in_group("llm_lora"))
    lora_grad = lora_grad || m.store.at(name).has_grad();
  REQUIRE(lora_grad);
  for (const auto& name : m.store.names_in_group("llm_core"))
    REQUIRE(!m.store.at(name).has_grad());
  REQUIRE(m.store.collect_grads().count("llm.l0.attn.wq") == 0);
}

TEST_CASE("lora_merge with zero B returns the original weights bitwise") {
  TinyModel m(90);
  ParamStore merged = lora_merge(m.store, m.cfg, m.lora);
  REQUIRE(bitwise_equal(merged.at("llm.l0.attn.wq").value(),
                        m.store.at("llm.l0.attn.wq").value()));
  REQUIRE(merged.names_in_group("llm_lora").empty());
}

TEST_CASE("rank-1 lora_merge adds the exact outer product") {
  LlmConfig cfg = tiny_llm();
  LoraConfig lora;
  lora.rank = 1;
  lora.alpha = 1.0;  // scaling alpha/r = 1
  ParamStore store;
  init_llm_params(store, cfg, 9, 91);
  init_lora_params(store, cfg, lora, 91);

  Tensor a = Tensor::zeros({1, 16});
  Tensor b = Tensor::zeros({16, 1});
  for (std::size_t i = 0; i < 16; ++i) {
    a.data[i] = static_cast<double>(i + 1);
    b.data[i] = static_cast<double>(i + 1);
  }
  store.load_tensor("lora.l0.q.a", a);
  store.load_tensor("lora.l0.q.b", b);
  const Tensor before = store.at("llm.l0.attn.wq").value();
  ParamStore merged = lora_merge(store, cfg, lora);
  const Tensor& after = merged.at("llm.l0.attn.wq").value();
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      REQUIRE(after(i, j) ==
              before(i, j) + static_cast<double>((i + 1) * (j + 1)));
}

TEST_CASE("merged LoRA agrees with the unmerged forward within 1e-6") {
  TinyModel m(92);
  Rng rng(93);
  // random nonzero factors
  ParamStore& s = m.store;
  s.load_tensor("lora.l0.q.a", rand_tensor(rng, {4, 16}, 0.3));
  s.load_tensor("lora.l0.q.b", rand_tensor(rng, {16, 4}, 0.3));
  s.load_tensor("lora.l0.v.a", rand_tensor(rng, {4, 16}, 0.3));
  s.load_tensor("lora.l0.v.b", rand_tensor(rng, {16, 4}, 0.3));

  Tensor audio = rand_tensor(rng, {3, 16});
  PackedSequence seq = tiny_sequence(3, true);
  Tensor unmerged = lm_forward(seq, audio, s, m.cfg, m.lora, true);
  ParamStore merged = lora_merge(s, m.cfg, m.lora);
  Tensor merged_logits = lm_forward(seq, audio, merged, m.cfg, m.lora, false);
  for (std::size_t i = 0; i < unmerged.size(); ++i)
    REQUIRE(std::abs(unmerged.data[i] - merged_logits.data[i]) <= 1e-6);
}

TEST_CASE("lora_merge requires the factors to exist") {
  LlmConfig cfg = tiny_llm();
  LoraConfig lora;
  ParamStore store;
  init_llm_params(store, cfg, 9, 94);  // no lora params registered
  REQUIRE_THROWS_AS(lora_merge(store, cfg, lora), MissingLoraFactors);
  PackedSequence seq = tiny_sequence(0, true);
  Rng rng(95);
  REQUIRE_THROWS_AS(
      lm_forward(seq, Tensor::zeros({0, 16}), store, cfg, lora, true),
      MissingLoraFactors);
}

TEST_CASE("prompt template substitutes the language code") {
  REQUIRE(render_prompt("Transcribe the <lang> speech:", "en") ==
          "Transcribe the en speech:");
  REQUIRE(render_prompt("no placeholder", "en") == "no placeholder");
}
