#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace selma {

// Lowercase word tokens: whitespace split, per-token strip of the
// punctuation set .,!?;:"'() from both ends, empties dropped.
using TokenSeq = std::vector<std::string>;

TokenSeq tokenize(std::string_view text);

// Longest common subsequence length (symmetric, <= min(|a|, |b|)).
int lcs_length(const TokenSeq& a, const TokenSeq& b);

// ROUGE-L F-measure with beta = 1:
//   P = LCS/|candidate|, R = LCS/|reference|, F = 2PR/(P+R).
// Returns 0 when either side is empty or P+R vanishes.
double rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

struct AcceptDecision {
  bool accepted = true;
  double max_score = 0.0;
};

// Diversity filter: accept a candidate iff its highest ROUGE-L score against
// the pool does not exceed the threshold (strictly-greater rejects). An empty
// pool always accepts. Throws std::invalid_argument for threshold outside
// [0, 1].
AcceptDecision accept_prompt(const std::string& candidate,
                             const std::vector<std::string>& pool,
                             double threshold);

}  // namespace selma
