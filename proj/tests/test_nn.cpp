#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "selma/nn.hpp"
#include "selma/rng.hpp"
#include "selma/types.hpp"

using namespace selma;

TEST_CASE("dense_forward computes W x + b") {
  DenseLayerT<float> l;
  l.name = "demo";
  l.W.resize(2, 2);
  l.W << 1, 2, 3, 4;
  l.b = MatrixF::Zero(2, 1);
  VectorF x(2);
  x << 1, 1;
  const VectorF y = dense_forward(l, x);
  CHECK(y[0] == 3.0f);
  CHECK(y[1] == 7.0f);
  l.b(0, 0) = 10.0f;
  CHECK(dense_forward(l, x)[0] == 13.0f);
}

TEST_CASE("dense_forward rejects mismatched input size") {
  DenseLayerT<float> l;
  l.W = MatrixF::Zero(2, 3);
  l.b = MatrixF::Zero(2, 1);
  VectorF x = VectorF::Zero(4);
  CHECK_THROWS_AS(dense_forward(l, x), std::invalid_argument);
}

TEST_CASE("adam first step moves each parameter by about lr") {
  // With bias correction, the very first Adam update is
  // lr * g / (|g| + ~eps), i.e. close to lr in magnitude, sign of -g.
  MatrixF p = MatrixF::Zero(3, 2);
  GradMap<float> g;
  MatrixF gm(3, 2);
  gm << 1, -2, 3, -4, 0.5, -0.25;
  g["p"] = gm;
  AdamState<float> st;
  st.lr = 0.01f;
  std::map<std::string, MatrixF*> params{{"p", &p}};
  adam_step(params, g, st);
  for (int i = 0; i < p.rows(); ++i)
    for (int j = 0; j < p.cols(); ++j) {
      CHECK(std::abs(std::abs(p(i, j)) - st.lr) < 1e-4f);
      CHECK(p(i, j) * gm(i, j) < 0.0f);
    }
  CHECK(st.step == 1);
}

TEST_CASE("adam leaves parameters with exactly zero gradient unchanged") {
  MatrixF p = MatrixF::Constant(2, 2, 5.0f);
  GradMap<float> g;
  g["p"] = MatrixF::Zero(2, 2);
  AdamState<float> st;
  std::map<std::string, MatrixF*> params{{"p", &p}};
  adam_step(params, g, st);
  CHECK((p.array() == 5.0f).all());
}

TEST_CASE("adam rejects unknown names, shape mismatch, and non-finite values") {
  MatrixF p = MatrixF::Zero(2, 2);
  std::map<std::string, MatrixF*> params{{"p", &p}};
  AdamState<float> st;
  GradMap<float> unknown;
  unknown["q"] = MatrixF::Zero(2, 2);
  CHECK_THROWS_AS(adam_step(params, unknown, st), std::invalid_argument);
  GradMap<float> wrong;
  wrong["p"] = MatrixF::Zero(3, 2);
  CHECK_THROWS_AS(adam_step(params, wrong, st), std::invalid_argument);
  GradMap<float> nan;
  nan["p"] = MatrixF::Constant(2, 2, std::nanf(""));
  CHECK_THROWS_AS(adam_step(params, nan, st), std::runtime_error);
}

TEST_CASE("adam converges on a quadratic") {
  // Minimize 0.5*(p - 3)^2; gradient is (p - 3).
  MatrixF p = MatrixF::Zero(1, 1);
  AdamState<float> st;
  st.lr = 0.05f;
  std::map<std::string, MatrixF*> params{{"p", &p}};
  for (int i = 0; i < 500; ++i) {
    GradMap<float> g;
    g["p"] = p.array() - 3.0f;
    adam_step(params, g, st);
  }
  CHECK(p(0, 0) == doctest::Approx(3.0f).epsilon(1e-2));
}

TEST_CASE("token_bucket is stable and within the vocab range") {
  Rng rng(3, 1);
  for (int i = 0; i < 500; ++i) {
    std::string tok;
    const int n = 1 + static_cast<int>(rng.bounded(8));
    for (int k = 0; k < n; ++k)
      tok.push_back(static_cast<char>('a' + rng.bounded(26)));
    const int b = token_bucket(tok);
    CHECK(b >= 0);
    CHECK(b < kVocabBuckets);
    CHECK(b == token_bucket(tok));
  }
  CHECK(token_bucket("red") != token_bucket("blue"));
}

TEST_CASE("embed_prompt is the mean of token embeddings, order-invariant") {
  Rng rng(4, 2);
  EmbeddingT<float> e;
  e.table = MatrixF::Zero(kVocabBuckets, kPromptEmbDim);
  for (int i = 0; i < e.table.size(); ++i)
    e.table.data()[i] = static_cast<float>(rng.normal());

  const VectorF a = embed_prompt(e, "a red circle");
  const VectorF b = embed_prompt(e, "circle red a");
  CHECK((a - b).norm() == 0.0f);

  // Single-token prompt embeds to exactly its table row.
  const VectorF one = embed_prompt(e, "red");
  const VectorF row = e.table.row(token_bucket("red")).transpose();
  CHECK((one - row).norm() == 0.0f);

  // Two-token prompt is the exact average of the two rows.
  const VectorF two = embed_prompt(e, "red blue");
  const VectorF avg = 0.5f * (e.table.row(token_bucket("red")) +
                              e.table.row(token_bucket("blue")))
                                 .transpose();
  CHECK((two - avg).norm() < 1e-6f);
}

TEST_CASE("embedding the empty prompt gives the zero vector") {
  EmbeddingT<float> e;
  e.table = MatrixF::Constant(kVocabBuckets, kPromptEmbDim, 3.0f);
  const VectorF v = embed_prompt(e, "");
  CHECK(v.size() == kPromptEmbDim);
  CHECK(v.norm() == 0.0f);
  CHECK(embed_prompt(e, "  . , ").norm() == 0.0f);
}

TEST_CASE("time_embedding has the documented shape and structure") {
  const VectorF t0 = time_embedding<float>(0);
  REQUIRE(t0.size() == kTimeEmbDim);
  const int half = kTimeEmbDim / 2;
  // sin(0) = 0 for the first half, cos(0) = 1 for the second half.
  for (int i = 0; i < half; ++i) {
    CHECK(t0[i] == doctest::Approx(0.0f));
    CHECK(t0[half + i] == doctest::Approx(1.0f));
  }
  const VectorF a = time_embedding<float>(7);
  const VectorF b = time_embedding<float>(7);
  CHECK((a - b).norm() == 0.0f);
  CHECK((a - t0).norm() > 0.0f);
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a[i] >= -1.0f);
    CHECK(a[i] <= 1.0f);
  }
}

TEST_CASE("prompt_buckets mirrors tokenize") {
  const std::vector<int> b = prompt_buckets("Two Red circles.");
  REQUIRE(b.size() == 3);
  CHECK(b[0] == token_bucket("two"));
  CHECK(b[1] == token_bucket("red"));
  CHECK(b[2] == token_bucket("circles"));
}
