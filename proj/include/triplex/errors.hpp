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

#pragma once

#include <stdexcept>
#include <string>

namespace triplex {

// Base class for all library errors. Subclasses are named after the
// failure they report so call sites can catch them individually.
struct TriplexError : std::runtime_error {
  explicit TriplexError(const std::string& msg) : std::runtime_error(msg) {}
};

#define TRIPLEX_DEFINE_ERROR(NAME)                                     \
  struct NAME : TriplexError {                                         \
    explicit NAME(const std::string& msg) : TriplexError(msg) {}       \
  }

// tensor / neural runtime
TRIPLEX_DEFINE_ERROR(ShapeMismatch);
TRIPLEX_DEFINE_ERROR(EmptyMask);
TRIPLEX_DEFINE_ERROR(TargetTooLong);
TRIPLEX_DEFINE_ERROR(GradForFrozenGroup);

// audio frontend
TRIPLEX_DEFINE_ERROR(MissingFile);
TRIPLEX_DEFINE_ERROR(UnsupportedFormat);
TRIPLEX_DEFINE_ERROR(NonPositiveFactor);
TRIPLEX_DEFINE_ERROR(AudioTooShort);

// tokenizer / llm
TRIPLEX_DEFINE_ERROR(EmptyCorpus);
TRIPLEX_DEFINE_ERROR(UnknownCharacter);
TRIPLEX_DEFINE_ERROR(SequenceTooLong);
TRIPLEX_DEFINE_ERROR(MissingTarget);
TRIPLEX_DEFINE_ERROR(MissingLoraFactors);
TRIPLEX_DEFINE_ERROR(InputTooLong);

// trainer / checkpoints / config
TRIPLEX_DEFINE_ERROR(Corrupt);
TRIPLEX_DEFINE_ERROR(VersionMismatch);
TRIPLEX_DEFINE_ERROR(LrNotReduced);
TRIPLEX_DEFINE_ERROR(ConfigError);
TRIPLEX_DEFINE_ERROR(IoFailure);

// decoding / scoring
TRIPLEX_DEFINE_ERROR(EmptyBeam);
TRIPLEX_DEFINE_ERROR(CountMismatch);
TRIPLEX_DEFINE_ERROR(EmptyReference);

#undef TRIPLEX_DEFINE_ERROR

// Loss became non-finite during training; carries the failing step.
struct DivergedLoss : TriplexError {
  DivergedLoss(const std::string& msg, long long at_step)
      : TriplexError(msg), step(at_step) {}
  long long step;
};

}  // namespace triplex
