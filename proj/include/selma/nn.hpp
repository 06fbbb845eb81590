#pragma once

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "selma/rng.hpp"
#include "selma/textsim.hpp"
#include "selma/types.hpp"

namespace selma {

// Named gradients / parameters. Vectors are carried as n x 1 matrices so one
// container covers every parameter class.
template <typename S>
using GradMap = std::map<std::string, Matrix<S>>;
using NameSet = std::set<std::string>;

template <typename S>
struct DenseLayerT {
  std::string name;
  Matrix<S> W;  // d_out x d_in
  Matrix<S> b;  // d_out x 1
};
using DenseLayerF = DenseLayerT<float>;

template <typename S>
Vector<S> dense_forward(const DenseLayerT<S>& l, const Vector<S>& x) {
  if (x.size() != l.W.cols())
    throw std::invalid_argument("dense_forward: input size mismatch in layer " +
                                l.name);
  return l.W * x + l.b.col(0);
}

template <typename S>
bool all_finite(const Matrix<S>& m) {
  return m.allFinite();
}

// ---- Adam ----

template <typename S>
struct AdamState {
  struct Slot {
    Matrix<S> m, v;
  };
  std::map<std::string, Slot> slots;
  long step = 0;
  S lr = static_cast<S>(3e-4);
  S beta1 = static_cast<S>(0.9);
  S beta2 = static_cast<S>(0.999);
  S eps = static_cast<S>(1e-8);
};

// Standard Adam with bias correction over the named parameter set. Throws on
// non-finite gradients and on non-finite parameters after the update.
template <typename S>
void adam_step(const std::map<std::string, Matrix<S>*>& params,
               const GradMap<S>& grads, AdamState<S>& st) {
  for (const auto& [name, g] : grads)
    if (!all_finite(g))
      throw std::runtime_error("adam_step: non-finite gradient for " + name);
  ++st.step;
  const S bc1 = static_cast<S>(1) - static_cast<S>(std::pow(static_cast<double>(st.beta1), static_cast<double>(st.step)));
  const S bc2 = static_cast<S>(1) - static_cast<S>(std::pow(static_cast<double>(st.beta2), static_cast<double>(st.step)));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end())
      throw std::invalid_argument("adam_step: unknown parameter " + name);
    Matrix<S>& p = *it->second;
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw std::invalid_argument("adam_step: shape mismatch for " + name);
    auto& slot = st.slots[name];
    if (slot.m.size() == 0) {
      slot.m = Matrix<S>::Zero(g.rows(), g.cols());
      slot.v = Matrix<S>::Zero(g.rows(), g.cols());
    }
    slot.m = st.beta1 * slot.m + (static_cast<S>(1) - st.beta1) * g;
    slot.v.array() =
        st.beta2 * slot.v.array() + (static_cast<S>(1) - st.beta2) * g.array().square();
    const auto mhat = slot.m.array() / bc1;
    const auto vhat = slot.v.array() / bc2;
    p.array() -= st.lr * mhat / (vhat.sqrt() + st.eps);
    if (!all_finite(p))
      throw std::runtime_error("adam_step: non-finite parameter after update: " +
                               name);
  }
}

// ---- Tokenizer / embedding ----

constexpr int kVocabBuckets = 256;

inline int token_bucket(std::string_view token) {
  return static_cast<int>(fnv1a64(token) % kVocabBuckets);
}

inline std::vector<int> prompt_buckets(const std::string& text) {
  std::vector<int> out;
  for (const std::string& tok : tokenize(text)) out.push_back(token_bucket(tok));
  return out;
}

template <typename S>
struct EmbeddingT {
  Matrix<S> table;  // kVocabBuckets x kPromptEmbDim
};

// Mean of the hashed tokens' embedding rows — order-invariant by design, so
// captions with equal token multisets embed identically. Empty text gives the
// zero vector, which doubles as the unconditional embedding for
// classifier-free guidance.
template <typename S>
Vector<S> embed_prompt(const EmbeddingT<S>& e, const std::string& text) {
  Vector<S> v = Vector<S>::Zero(kPromptEmbDim);
  const std::vector<int> buckets = prompt_buckets(text);
  if (buckets.empty()) return v;
  for (int b : buckets) v += e.table.row(b).transpose();
  return v / static_cast<S>(buckets.size());
}

// 32-dim sinusoidal position code of the raw integer step.
template <typename S>
Vector<S> time_embedding(int t) {
  constexpr int half = kTimeEmbDim / 2;
  Vector<S> v(kTimeEmbDim);
  for (int i = 0; i < half; ++i) {
    const double f = std::exp(-std::log(10000.0) * i / (half - 1));
    v[i] = static_cast<S>(std::sin(t * f));
    v[half + i] = static_cast<S>(std::cos(t * f));
  }
  return v;
}

}  // namespace selma
