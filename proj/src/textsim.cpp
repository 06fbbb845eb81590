#include "selma/textsim.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace selma {

namespace {

constexpr std::string_view kStrip = ".,!?;:\"'()";

bool is_strip_char(char c) { return kStrip.find(c) != std::string_view::npos; }

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::size_t b = i;
      std::size_t e = j;
      while (b < e && is_strip_char(text[b])) ++b;
      while (e > b && is_strip_char(text[e - 1])) --e;
      if (e > b) {
        std::string tok(text.substr(b, e - b));
        std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) {
          return static_cast<char>(std::tolower(c));
        });
        out.push_back(std::move(tok));
      }
    }
    i = j;
  }
  return out;
}

int lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n == 0 || m == 0) return 0;
  // Rolling single-row DP over b.
  std::vector<int> row(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    int diag = 0;  // row[j-1] from the previous iteration of i
    for (std::size_t j = 1; j <= m; ++j) {
      const int up = row[j];
      row[j] = (a[i - 1] == b[j - 1]) ? diag + 1 : std::max(up, row[j - 1]);
      diag = up;
    }
  }
  return row[m];
}

double rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

AcceptDecision accept_prompt(const std::string& candidate,
                             const std::vector<std::string>& pool,
                             double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("accept_prompt: threshold must lie in [0, 1]");
  }
  const TokenSeq cand = tokenize(candidate);
  AcceptDecision d;
  for (const std::string& ref : pool) {
    d.max_score = std::max(d.max_score, rouge_l(cand, tokenize(ref)));
  }
  d.accepted = !(d.max_score > threshold);
  return d;
}

}  // namespace selma
