#include <doctest.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "selma/rng.hpp"
#include "selma/textsim.hpp"

using namespace selma;

namespace {

bool is_subsequence(const TokenSeq& sub, const TokenSeq& seq) {
  std::size_t i = 0;
  for (const std::string& t : seq)
    if (i < sub.size() && sub[i] == t) ++i;
  return i == sub.size();
}

// Exhaustive oracle: enumerate every subsequence of a (|a| <= 10 keeps this
// at <= 1024 subsets) and keep the longest that is also a subsequence of b.
int lcs_oracle(const TokenSeq& a, const TokenSeq& b) {
  int best = 0;
  for (unsigned mask = 0; mask < (1u << a.size()); ++mask) {
    TokenSeq sub;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask & (1u << i)) sub.push_back(a[i]);
    if (static_cast<int>(sub.size()) > best && is_subsequence(sub, b))
      best = static_cast<int>(sub.size());
  }
  return best;
}

TokenSeq random_seq(Rng& rng, int max_len) {
  static const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  TokenSeq s;
  const int n = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(max_len + 1)));
  for (int i = 0; i < n; ++i) s.push_back(alphabet[rng.bounded(4)]);
  return s;
}

}  // namespace

TEST_CASE("tokenize lowercases, splits, strips punctuation") {
  CHECK(tokenize("Three Red circles.") == TokenSeq{"three", "red", "circles"});
  CHECK(tokenize("") == TokenSeq{});
  CHECK(tokenize("a  a") == TokenSeq{"a", "a"});
  CHECK(tokenize("\"Hello,\" (world)!") == TokenSeq{"hello", "world"});
  CHECK(tokenize("...") == TokenSeq{});
  for (const std::string& t : tokenize("Mixed: CASE; tokens?")) {
    CHECK(!t.empty());
    for (char c : t) {
      CHECK(c != ' ');
      CHECK(std::string(".,!?;:\"'()").find(c) == std::string::npos);
    }
  }
}

TEST_CASE("lcs_length matches exhaustive subsequence oracle on 1000 pairs") {
  Rng rng(2024, 1);
  for (int k = 0; k < 1000; ++k) {
    const TokenSeq a = random_seq(rng, 10);
    const TokenSeq b = random_seq(rng, 10);
    const int got = lcs_length(a, b);
    CHECK(got == lcs_oracle(a, b));
    CHECK(got == lcs_length(b, a));
    CHECK(got <= static_cast<int>(std::min(a.size(), b.size())));
  }
}

TEST_CASE("lcs_length fixed cases") {
  CHECK(lcs_length({"a", "b", "c"}, {"a", "b", "c"}) == 3);
  CHECK(lcs_length({"a", "b", "c"}, {}) == 0);
  CHECK(lcs_length({"a", "b", "c"}, {"a", "c", "b"}) == 2);
}

TEST_CASE("rouge_l matches closed-form F1 from the oracle LCS") {
  Rng rng(7, 2);
  for (int k = 0; k < 1000; ++k) {
    const TokenSeq a = random_seq(rng, 10);
    const TokenSeq b = random_seq(rng, 10);
    const double got = rouge_l(a, b);
    if (a.empty() || b.empty()) {
      CHECK(got == 0.0);
      continue;
    }
    const int l = lcs_oracle(a, b);
    const double p = static_cast<double>(l) / static_cast<double>(a.size());
    const double r = static_cast<double>(l) / static_cast<double>(b.size());
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    CHECK(got == doctest::Approx(f).epsilon(1e-12));
    CHECK(got == rouge_l(b, a));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("rouge_l fixed values") {
  CHECK(rouge_l({"a", "b", "c"}, {"a", "b", "c"}) == doctest::Approx(1.0));
  CHECK(rouge_l({"a", "b", "c"}, {"a", "c", "b"}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rouge_l({"a"}, {}) == 0.0);
  CHECK(rouge_l({}, {"a"}) == 0.0);
  CHECK(rouge_l({"x"}, {"y"}) == 0.0);
}

TEST_CASE("accept_prompt boundary: exactly at threshold accepts, above rejects") {
  // "a b c" vs pool entry "a c b": rouge = 2/3; threshold at the score accepts.
  const std::vector<std::string> pool = {"a c b"};
  CHECK(accept_prompt("a b c", pool, 2.0 / 3.0).accepted);
  CHECK(!accept_prompt("a b c", pool, 2.0 / 3.0 - 1e-9).accepted);
  // Identical prompt scores 1.0: rejected at any threshold below 1.
  CHECK(!accept_prompt("a c b", pool, 0.8).accepted);
  CHECK(accept_prompt("a c b", pool, 1.0).accepted);
}

TEST_CASE("accept_prompt at the 0.8 default keeps 0.75 and drops 0.9") {
  // 4-token candidate vs 4-token pool entry with LCS 3: F1 = 0.75 exactly.
  CHECK(accept_prompt("a b c d", {"a b c x"}, 0.8).accepted);
  // 10 vs 10 with LCS 9 scores 0.9 > 0.8: rejected.
  CHECK(!accept_prompt("a b c d e f g h i j", {"a b c d e f g h i x"}, 0.8)
             .accepted);
}

TEST_CASE("accept_prompt reports the max pool score and handles empty pool") {
  const AcceptDecision d = accept_prompt("anything at all", {}, 0.0);
  CHECK(d.accepted);
  CHECK(d.max_score == 0.0);
  const AcceptDecision e =
      accept_prompt("a b c", {"x y", "a c b", "a b c d"}, 0.9);
  CHECK(e.max_score == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
  CHECK(e.accepted);
}

TEST_CASE("accept_prompt is monotone in the threshold") {
  Rng rng(11, 3);
  const std::vector<std::string> pool = {"a b c d", "b c", "d d a"};
  for (int k = 0; k < 200; ++k) {
    TokenSeq cand = random_seq(rng, 8);
    std::string text;
    for (const std::string& t : cand) text += t + " ";
    const double t1 = rng.next_double();
    const double t2 = t1 + (1.0 - t1) * rng.next_double();
    const bool lo = accept_prompt(text, pool, t1).accepted;
    const bool hi = accept_prompt(text, pool, t2).accepted;
    if (lo) CHECK(hi);
  }
}

TEST_CASE("accept_prompt rejects thresholds outside [0,1]") {
  CHECK_THROWS_AS(accept_prompt("a", {"b"}, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(accept_prompt("a", {"b"}, 1.1), std::invalid_argument);
}
