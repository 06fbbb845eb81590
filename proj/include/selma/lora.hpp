#pragma once

#include <algorithm>
#include <cassert>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "selma/nn.hpp"

namespace selma {

template <typename S>
struct LoraEntry {
  Matrix<S> A;  // rank x d_in
  Matrix<S> B;  // d_out x rank
};

template <typename S>
struct LoraT {
  std::string skill;
  int rank = 0;
  S alpha = 0;  // scale = alpha / rank, 1.0 at defaults
  std::map<std::string, LoraEntry<S>> layers;
  S scale() const { return alpha / static_cast<S>(rank); }
};
using LoraF = LoraT<float>;

template <typename S>
struct MoeGateT {
  int k = 0;                              // active experts per call
  std::map<std::string, Matrix<S>> wg;    // |experts| x d_in per layer
};
using MoeGateF = MoeGateT<float>;

// y = W0 x + b + scale * B (A x). The base term reuses dense_forward's exact
// expression so a zero-B adapter reproduces the base output bit-for-bit.
template <typename S>
Vector<S> apply(const DenseLayerT<S>& l, const LoraEntry<S>& e, S scale,
                const Vector<S>& x) {
  if (x.size() != l.W.cols() || e.A.cols() != l.W.cols() ||
      e.B.rows() != l.W.rows() || e.A.rows() != e.B.cols())
    throw std::invalid_argument("lora apply: shape mismatch in layer " + l.name);
  Vector<S> y = dense_forward(l, x);
  y += scale * (e.B * (e.A * x));
  return y;
}

template <typename S>
bool same_structure(const LoraT<S>& a, const LoraT<S>& b) {
  if (a.rank != b.rank || a.alpha != b.alpha || a.layers.size() != b.layers.size())
    return false;
  for (auto ia = a.layers.begin(), ib = b.layers.begin(); ia != a.layers.end();
       ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.A.rows() != ib->second.A.rows() ||
        ia->second.A.cols() != ib->second.A.cols() ||
        ia->second.B.rows() != ib->second.B.rows() ||
        ia->second.B.cols() != ib->second.B.cols())
      return false;
  }
  return true;
}

// Elementwise (weighted) mean of the A factors and of the B factors — the
// factors are averaged, not the ΔW products. Summation runs in ascending
// skill-name order so permuted inputs give identical floats.
template <typename S>
LoraT<S> merge(const std::vector<LoraT<S>>& adapters,
               const std::vector<S>* weights = nullptr) {
  if (adapters.empty()) throw std::invalid_argument("merge: empty adapter list");
  for (const LoraT<S>& a : adapters)
    if (!same_structure(adapters.front(), a))
      throw std::invalid_argument("merge: structural mismatch among adapters");
  std::vector<S> w;
  if (weights) {
    if (weights->size() != adapters.size())
      throw std::invalid_argument("merge: weight count mismatch");
    S sum = 0;
    for (S x : *weights) {
      if (x < static_cast<S>(0))
        throw std::invalid_argument("merge: negative weight");
      sum += x;
    }
    if (std::abs(static_cast<double>(sum) - 1.0) > 1e-9)
      throw std::invalid_argument("merge: weights must sum to 1");
    w = *weights;
  } else {
    w.assign(adapters.size(), static_cast<S>(1) / static_cast<S>(adapters.size()));
  }
  std::vector<std::size_t> order(adapters.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return adapters[i].skill < adapters[j].skill;
  });
  LoraT<S> m;
  m.skill = "merged";
  m.rank = adapters.front().rank;
  m.alpha = adapters.front().alpha;
  for (const auto& [name, e] : adapters.front().layers) {
    m.layers[name].A = Matrix<S>::Zero(e.A.rows(), e.A.cols());
    m.layers[name].B = Matrix<S>::Zero(e.B.rows(), e.B.cols());
  }
  for (std::size_t i : order) {
    for (const auto& [name, e] : adapters[i].layers) {
      m.layers[name].A += w[i] * e.A;
      m.layers[name].B += w[i] * e.B;
    }
  }
  return m;
}

// Top-K selection over linear gate logits, softmax-normalized over the
// selected K; ties broken toward the lower expert index.
template <typename S>
std::vector<std::pair<int, S>> gate_weights(const Vector<S>& logits, int k) {
  const int n = static_cast<int>(logits.size());
  if (k < 1 || k > n) throw std::invalid_argument("gate: K out of range");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return logits[a] > logits[b]; });
  idx.resize(static_cast<std::size_t>(k));
  S mx = logits[idx[0]];
  S denom = 0;
  std::vector<std::pair<int, S>> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i : idx) {
    const S e = std::exp(logits[i] - mx);
    denom += e;
    out.push_back({i, e});
  }
  for (auto& [i, e] : out) e /= denom;
  std::sort(out.begin(), out.end());
  return out;
}

// y = W0 x + b + sum_selected w_i * scale_i * B_i (A_i x)
template <typename S>
Vector<S> moe_forward(const MoeGateT<S>& gate,
                      const std::vector<const LoraT<S>*>& experts,
                      const DenseLayerT<S>& layer, const Vector<S>& x) {
  const auto git = gate.wg.find(layer.name);
  if (git == gate.wg.end())
    throw std::invalid_argument("moe: no gate for layer " + layer.name);
  if (gate.k > static_cast<int>(experts.size()))
    throw std::invalid_argument("moe: K exceeds expert count");
  const Vector<S> logits = git->second * x;
  if (logits.size() != static_cast<long>(experts.size()))
    throw std::invalid_argument("moe: gate row count != expert count");
  const auto sel = gate_weights(logits, gate.k);
  Vector<S> y = dense_forward(layer, x);
  S total = 0;
  for (const auto& [i, w] : sel) {
    assert(w >= static_cast<S>(0));
    total += w;
    const LoraT<S>& ex = *experts[static_cast<std::size_t>(i)];
    const LoraEntry<S>& e = ex.layers.at(layer.name);
    y += w * ex.scale() * (e.B * (e.A * x));
  }
  assert(std::abs(static_cast<double>(total) - 1.0) < 1e-4);
  (void)total;
  return y;
}

}  // namespace selma
