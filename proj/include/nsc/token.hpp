#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nsc {

using TokenId = int32_t;

// Reserved vocabulary slots, fixed across every table in the system.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr size_t kNumReserved = 4;

inline const std::string kPadText = "<pad>";
inline const std::string kEosText = "</s>";
inline const std::string kBosText = "<s>";
inline const std::string kUnkText = "UNK";

using TokenSeq = std::vector<TokenId>;
using Sentence = std::vector<std::string>;

}  // namespace nsc
