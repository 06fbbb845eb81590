#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "selma/lora.hpp"
#include "selma/nn.hpp"
#include "selma/schedule.hpp"

namespace selma {

// Conditional denoiser: 832 -> hidden -> hidden -> 768 with ReLU between, fed
// with [x_t | time embedding | prompt embedding].
template <typename S>
struct ModelT {
  EmbeddingT<S> embed;
  DenseLayerT<S> dense1, dense2, dense3;
  NoiseSchedule schedule;
  int hidden() const { return static_cast<int>(dense1.W.rows()); }
};
using ModelF = ModelT<float>;
using ModelD = ModelT<double>;

template <typename S>
ModelT<S> init_model(int hidden, const NoiseSchedule& sched, Rng& rng) {
  if (hidden < 1) throw std::invalid_argument("init_model: hidden must be >= 1");
  ModelT<S> m;
  m.schedule = sched;
  auto gauss = [&](Matrix<S>& dst, long r, long c, double stddev) {
    dst.resize(r, c);
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < c; ++j)
        dst(i, j) = static_cast<S>(rng.normal() * stddev);
  };
  gauss(m.embed.table, kVocabBuckets, kPromptEmbDim, 1.0);
  m.dense1.name = "dense1";
  gauss(m.dense1.W, hidden, kDenoiserInDim, std::sqrt(2.0 / kDenoiserInDim));
  m.dense1.b = Matrix<S>::Zero(hidden, 1);
  m.dense2.name = "dense2";
  gauss(m.dense2.W, hidden, hidden, std::sqrt(2.0 / hidden));
  m.dense2.b = Matrix<S>::Zero(hidden, 1);
  // The output layer starts at zero so the initial function is the optimal
  // constant epsilon-predictor. A gaussian output layer gives Adam a steep
  // shortcut: rotate dense2 rows until every hidden pre-activation is
  // negative, which silences the output but permanently kills the ReLUs and
  // freezes the net as a constant.
  m.dense3.name = "dense3";
  m.dense3.W = Matrix<S>::Zero(kImageDim, hidden);
  m.dense3.b = Matrix<S>::Zero(kImageDim, 1);
  return m;
}

template <typename From, typename To>
Matrix<To> cast_matrix(const Matrix<From>& m) {
  return m.template cast<To>();
}

template <typename S>
ModelD to_double(const ModelT<S>& m) {
  ModelD d;
  d.embed.table = m.embed.table.template cast<double>();
  for (auto [src, dst] : {std::pair{&m.dense1, &d.dense1},
                          std::pair{&m.dense2, &d.dense2},
                          std::pair{&m.dense3, &d.dense3}}) {
    dst->name = src->name;
    dst->W = src->W.template cast<double>();
    dst->b = src->b.template cast<double>();
  }
  d.schedule = m.schedule;
  return d;
}

template <typename S>
LoraT<double> lora_to_double(const LoraT<S>& a) {
  LoraT<double> d;
  d.skill = a.skill;
  d.rank = a.rank;
  d.alpha = static_cast<double>(a.alpha);
  for (const auto& [name, e] : a.layers) {
    d.layers[name].A = e.A.template cast<double>();
    d.layers[name].B = e.B.template cast<double>();
  }
  return d;
}

// A ~ Gaussian(0, 1/rank), B = 0, so the fresh adapter is an exact no-op.
template <typename S>
LoraT<S> init_adapter(const ModelT<S>& m, int rank, Rng& rng, S alpha = 0) {
  LoraT<S> a;
  a.rank = rank;
  a.alpha = alpha == static_cast<S>(0) ? static_cast<S>(rank) : alpha;
  const double stddev = std::sqrt(1.0 / rank);
  for (const DenseLayerT<S>* l : {&m.dense1, &m.dense2, &m.dense3}) {
    if (rank < 1 || rank > std::min(l->W.rows(), l->W.cols()))
      throw std::invalid_argument("init_adapter: rank incompatible with layer " +
                                  l->name);
    LoraEntry<S> e;
    e.A.resize(rank, l->W.cols());
    for (long i = 0; i < e.A.rows(); ++i)
      for (long j = 0; j < e.A.cols(); ++j)
        e.A(i, j) = static_cast<S>(rng.normal() * stddev);
    e.B = Matrix<S>::Zero(l->W.rows(), rank);
    a.layers[l->name] = std::move(e);
  }
  return a;
}

// Exactly one of lora/gate may be active; gate requires the expert list.
template <typename S>
struct AdapterCtx {
  const LoraT<S>* lora = nullptr;
  const MoeGateT<S>* gate = nullptr;
  std::vector<const LoraT<S>*> experts;
};
using AdapterCtxF = AdapterCtx<float>;

template <typename S>
std::map<std::string, Matrix<S>*> param_refs(ModelT<S>& m, LoraT<S>* lora,
                                             MoeGateT<S>* gate) {
  std::map<std::string, Matrix<S>*> p;
  p["embed.table"] = &m.embed.table;
  for (DenseLayerT<S>* l : {&m.dense1, &m.dense2, &m.dense3}) {
    p[l->name + ".W"] = &l->W;
    p[l->name + ".b"] = &l->b;
  }
  if (lora)
    for (auto& [name, e] : lora->layers) {
      p["lora." + name + ".A"] = &e.A;
      p["lora." + name + ".B"] = &e.B;
    }
  if (gate)
    for (auto& [name, wg] : gate->wg) p["gate." + name + ".Wg"] = &wg;
  return p;
}

template <typename S>
NameSet available_param_names(const ModelT<S>& m, const AdapterCtx<S>& ad) {
  NameSet n{"embed.table"};
  for (const DenseLayerT<S>* l : {&m.dense1, &m.dense2, &m.dense3}) {
    n.insert(l->name + ".W");
    n.insert(l->name + ".b");
  }
  if (ad.lora)
    for (const auto& [name, e] : ad.lora->layers) {
      n.insert("lora." + name + ".A");
      n.insert("lora." + name + ".B");
    }
  if (ad.gate)
    for (const auto& [name, wg] : ad.gate->wg) n.insert("gate." + name + ".Wg");
  return n;
}

template <typename S>
NameSet lora_param_names(const LoraT<S>& a) {
  NameSet n;
  for (const auto& [name, e] : a.layers) {
    n.insert("lora." + name + ".A");
    n.insert("lora." + name + ".B");
  }
  return n;
}

template <typename S>
NameSet gate_param_names(const MoeGateT<S>& g) {
  NameSet n;
  for (const auto& [name, wg] : g.wg) n.insert("gate." + name + ".Wg");
  return n;
}

template <typename S>
Vector<S> predict_eps(const ModelT<S>& m, const AdapterCtx<S>& ad,
                      const Vector<S>& x_t, int t, const Vector<S>& pemb) {
  if (x_t.size() != kImageDim || pemb.size() != kPromptEmbDim)
    throw std::invalid_argument("predict_eps: bad input sizes");
  Vector<S> in(kDenoiserInDim);
  in << x_t, time_embedding<S>(t), pemb;
  auto layer_out = [&](const DenseLayerT<S>& l, const Vector<S>& v) {
    if (ad.lora) {
      auto it = ad.lora->layers.find(l.name);
      if (it != ad.lora->layers.end())
        return apply(l, it->second, ad.lora->scale(), v);
    } else if (ad.gate) {
      return moe_forward(*ad.gate, ad.experts, l, v);
    }
    return dense_forward(l, v);
  };
  const Vector<S> a1 = layer_out(m.dense1, in).cwiseMax(static_cast<S>(0));
  const Vector<S> a2 = layer_out(m.dense2, a1).cwiseMax(static_cast<S>(0));
  return layer_out(m.dense3, a2);
}

template <typename S>
struct TrainBatch {
  Matrix<S> x0;                      // kImageDim x B
  std::vector<std::string> prompts;  // size B
};

// Per-item noise decisions, drawn once so the loss is a pure function of the
// parameters (required by the finite-difference oracle).
template <typename S>
struct NoiseDraw {
  std::vector<int> t;
  Matrix<S> eps;  // kImageDim x B
  std::vector<char> dropped;
};

template <typename S>
NoiseDraw<S> draw_noise(int batch, int T, double cond_dropout, Rng& rng) {
  NoiseDraw<S> d;
  d.t.resize(static_cast<std::size_t>(batch));
  d.eps.resize(kImageDim, batch);
  d.dropped.resize(static_cast<std::size_t>(batch));
  for (int j = 0; j < batch; ++j) {
    d.t[static_cast<std::size_t>(j)] =
        1 + static_cast<int>(rng.bounded(static_cast<std::uint32_t>(T)));
    for (int i = 0; i < kImageDim; ++i) d.eps(i, j) = static_cast<S>(rng.normal());
    d.dropped[static_cast<std::size_t>(j)] = rng.next_double() < cond_dropout;
  }
  return d;
}

// Epsilon-prediction MSE over the batch, with exact reverse-mode gradients for
// the masked parameter names accumulated into *grads when requested.
template <typename S>
S diffusion_loss(const ModelT<S>& m, const AdapterCtx<S>& ad,
                 const TrainBatch<S>& batch, const NoiseDraw<S>& draw,
                 const NameSet* mask, GradMap<S>* grads) {
  const int B = static_cast<int>(batch.x0.cols());
  if (B == 0) throw std::invalid_argument("diffusion_loss: empty batch");
  if (batch.x0.rows() != kImageDim ||
      batch.prompts.size() != static_cast<std::size_t>(B) ||
      draw.eps.cols() != B || draw.t.size() != static_cast<std::size_t>(B))
    throw std::invalid_argument("diffusion_loss: batch/draw shape mismatch");
  if (ad.lora && ad.gate)
    throw std::invalid_argument("diffusion_loss: lora and gate are exclusive");

  const bool want_grads = grads != nullptr;
  NameSet wanted;
  if (want_grads) {
    if (!mask) throw std::invalid_argument("diffusion_loss: grads need a mask");
    const NameSet avail = available_param_names(m, ad);
    for (const std::string& n : *mask)
      if (!avail.count(n))
        throw std::invalid_argument("diffusion_loss: unknown parameter " + n);
    wanted = *mask;
  }
  auto want = [&](const std::string& n) { return wanted.count(n) != 0; };

  // Input assembly.
  Matrix<S> in(kDenoiserInDim, B);
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(B));
  for (int j = 0; j < B; ++j) {
    const std::size_t ju = static_cast<std::size_t>(j);
    const double ab =
        m.schedule.alphas_bar[static_cast<std::size_t>(draw.t[ju])];
    in.col(j).head(kImageDim) =
        static_cast<S>(std::sqrt(ab)) * batch.x0.col(j) +
        static_cast<S>(std::sqrt(1.0 - ab)) * draw.eps.col(j);
    in.col(j).segment(kImageDim, kTimeEmbDim) = time_embedding<S>(draw.t[ju]);
    if (draw.dropped[ju]) {
      in.col(j).tail(kPromptEmbDim).setZero();
    } else {
      buckets[ju] = prompt_buckets(batch.prompts[ju]);
      in.col(j).tail(kPromptEmbDim) = embed_prompt(m.embed, batch.prompts[ju]);
    }
  }

  const int E = static_cast<int>(ad.experts.size());
  const std::array<const DenseLayerT<S>*, 3> layers = {&m.dense1, &m.dense2,
                                                       &m.dense3};
  std::array<Matrix<S>, 3> xin;   // layer inputs
  std::array<Matrix<S>, 3> ax;    // lora A*x caches
  std::array<Matrix<S>, 3> wt;    // moe weights (E x B)
  std::array<Matrix<S>, 3> preact;
  std::array<std::vector<Matrix<S>>, 3> contrib;  // moe per-expert B(Ax)*scale

  Matrix<S> cur = std::move(in);
  for (int li = 0; li < 3; ++li) {
    const std::size_t l = static_cast<std::size_t>(li);
    const DenseLayerT<S>& L = *layers[l];
    xin[l] = std::move(cur);
    Matrix<S> h = (L.W * xin[l]).colwise() + L.b.col(0);
    if (ad.lora) {
      auto it = ad.lora->layers.find(L.name);
      if (it != ad.lora->layers.end()) {
        ax[l] = it->second.A * xin[l];
        h += ad.lora->scale() * (it->second.B * ax[l]);
      }
    } else if (ad.gate) {
      const Matrix<S>& wg = ad.gate->wg.at(L.name);
      const Matrix<S> logits = wg * xin[l];
      wt[l] = Matrix<S>::Zero(E, B);
      for (int j = 0; j < B; ++j) {
        const Vector<S> col = logits.col(j);
        for (const auto& [i, w] : gate_weights(col, ad.gate->k)) wt[l](i, j) = w;
      }
      contrib[l].resize(static_cast<std::size_t>(E));
      for (int e = 0; e < E; ++e) {
        const LoraT<S>& ex = *ad.experts[static_cast<std::size_t>(e)];
        const LoraEntry<S>& en = ex.layers.at(L.name);
        contrib[l][static_cast<std::size_t>(e)] =
            ex.scale() * (en.B * (en.A * xin[l]));
        h.array() += contrib[l][static_cast<std::size_t>(e)].array().rowwise() *
                     wt[l].row(e).array();
      }
    }
    preact[l] = h;
    cur = li < 2 ? h.cwiseMax(static_cast<S>(0)).eval() : std::move(h);
  }

  const Matrix<S> resid = cur - draw.eps;
  const S denom = static_cast<S>(kImageDim) * static_cast<S>(B);
  const S loss = resid.squaredNorm() / denom;
  if (!want_grads) return loss;

  // const_cast only to reuse the name->tensor map for shape lookups
  const auto refs = param_refs(const_cast<ModelT<S>&>(m),
                               const_cast<LoraT<S>*>(ad.lora),
                               const_cast<MoeGateT<S>*>(ad.gate));
  for (const std::string& n : wanted) {
    const Matrix<S>& ref = *refs.at(n);
    (*grads)[n] = Matrix<S>::Zero(ref.rows(), ref.cols());
  }

  Matrix<S> dh = (static_cast<S>(2) / denom) * resid;
  for (int li = 2; li >= 0; --li) {
    const std::size_t l = static_cast<std::size_t>(li);
    const DenseLayerT<S>& L = *layers[l];
    if (li < 2)  // dh currently holds d(activation); apply ReLU mask
      dh.array() *= (preact[l].array() > static_cast<S>(0)).template cast<S>();
    if (want(L.name + ".W")) (*grads)[L.name + ".W"] += dh * xin[l].transpose();
    if (want(L.name + ".b")) (*grads)[L.name + ".b"] += dh.rowwise().sum();
    Matrix<S> dx = L.W.transpose() * dh;
    if (ad.lora) {
      auto it = ad.lora->layers.find(L.name);
      if (it != ad.lora->layers.end()) {
        const S sc = ad.lora->scale();
        const Matrix<S> btdh = it->second.B.transpose() * dh;  // r x B
        if (want("lora." + L.name + ".B"))
          (*grads)["lora." + L.name + ".B"] += sc * (dh * ax[l].transpose());
        if (want("lora." + L.name + ".A"))
          (*grads)["lora." + L.name + ".A"] += sc * (btdh * xin[l].transpose());
        dx += sc * (it->second.A.transpose() * btdh);
      }
    } else if (ad.gate) {
      // dw_e,j = contrib_e(:,j) . dh(:,j); softmax backward over selected.
      Matrix<S> dwex(E, B);
      for (int e = 0; e < E; ++e)
        dwex.row(e) = (contrib[l][static_cast<std::size_t>(e)].array() *
                       dh.array())
                          .colwise()
                          .sum();
      Matrix<S> dlogit = Matrix<S>::Zero(E, B);
      for (int j = 0; j < B; ++j) {
        S inner = 0;
        for (int e = 0; e < E; ++e) inner += wt[l](e, j) * dwex(e, j);
        for (int e = 0; e < E; ++e)
          if (wt[l](e, j) != static_cast<S>(0))
            dlogit(e, j) = wt[l](e, j) * (dwex(e, j) - inner);
      }
      const Matrix<S>& wg = ad.gate->wg.at(L.name);
      if (want("gate." + L.name + ".Wg"))
        (*grads)["gate." + L.name + ".Wg"] += dlogit * xin[l].transpose();
      dx += wg.transpose() * dlogit;
      for (int e = 0; e < E; ++e) {
        const LoraT<S>& ex = *ad.experts[static_cast<std::size_t>(e)];
        const LoraEntry<S>& en = ex.layers.at(L.name);
        const Matrix<S> scaled =
            dh.array().rowwise() * wt[l].row(e).array();  // d_out x B
        dx += ex.scale() * (en.A.transpose() * (en.B.transpose() * scaled));
      }
    }
    dh = std::move(dx);
  }

  // dh is now d(input); distribute the prompt-embedding slice over the mean's
  // contributing table rows.
  if (want("embed.table")) {
    Matrix<S>& dt = (*grads)["embed.table"];
    for (int j = 0; j < B; ++j) {
      const std::size_t ju = static_cast<std::size_t>(j);
      if (draw.dropped[ju] || buckets[ju].empty()) continue;
      const S inv = static_cast<S>(1) / static_cast<S>(buckets[ju].size());
      for (int b : buckets[ju])
        dt.row(b) += inv * dh.col(j).tail(kPromptEmbDim).transpose();
    }
  }
  return loss;
}

template <typename S>
GradMap<S> compute_gradients(const ModelT<S>& m, const AdapterCtx<S>& ad,
                             const TrainBatch<S>& batch, const NoiseDraw<S>& draw,
                             const NameSet& mask) {
  GradMap<S> g;
  diffusion_loss(m, ad, batch, draw, &mask, &g);
  return g;
}

template <typename S>
S denoise_loss(const ModelT<S>& m, const AdapterCtx<S>& ad,
               const TrainBatch<S>& batch, Rng& rng, double cond_dropout,
               const NameSet* mask = nullptr, GradMap<S>* grads = nullptr) {
  const NoiseDraw<S> draw = draw_noise<S>(static_cast<int>(batch.x0.cols()),
                                          m.schedule.T, cond_dropout, rng);
  return diffusion_loss(m, ad, batch, draw, mask, grads);
}

}  // namespace selma
