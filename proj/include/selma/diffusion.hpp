#pragma once

#include <Eigen/QR>

#include <functional>

#include "selma/model.hpp"
#include "selma/toyworld.hpp"

namespace selma {

struct SamplerConfig {
  int steps = 50;
  double cfg_scale = 7.5;
  std::uint64_t seed = 0;
};

// Observation hook: (t, eps_uncond, eps_cond, eps_guided) per reverse step.
using SampleTrace =
    std::function<void(int, const VectorF&, const VectorF&, const VectorF&)>;

// Orthonormal basis of the denoiser's reachable output span: the columns of
// the output layer weight plus any adapter B-factor columns feeding it. The
// chain noise is drawn inside this span (see sample below). All-zero B
// columns are dropped before factorization and rank-revealing QR truncates
// dependent ones; a zero-ΔW adapter therefore hands QR the exact base-model
// matrix, and an identity adapter reproduces the base model bit-for-bit.
inline MatrixF output_span_basis(const ModelF& m, const AdapterCtxF& ad) {
  std::vector<const MatrixF*> bs;
  if (ad.lora) {
    auto it = ad.lora->layers.find(m.dense3.name);
    if (it != ad.lora->layers.end()) bs.push_back(&it->second.B);
  } else if (ad.gate) {
    for (const LoraF* ex : ad.experts) {
      auto it = ex->layers.find(m.dense3.name);
      if (it != ex->layers.end()) bs.push_back(&it->second.B);
    }
  }
  long extra = 0;
  for (const MatrixF* B : bs) extra += B->cols();
  MatrixF span(kImageDim, m.dense3.W.cols() + extra);
  span.leftCols(m.dense3.W.cols()) = m.dense3.W;
  long at = m.dense3.W.cols();
  for (const MatrixF* B : bs)
    for (long c = 0; c < B->cols(); ++c)
      if (B->col(c).squaredNorm() > 0.0f) span.col(at++) = B->col(c);
  Eigen::ColPivHouseholderQR<MatrixF> qr(span.leftCols(at));
  const long rank = qr.rank();
  return qr.householderQ().setLength(rank) * MatrixF::Identity(kImageDim, rank);
}

// Ancestral DDPM sampling with classifier-free guidance
//   eps_hat = eps_u + s (eps_c - eps_u),
// computed as the algebraically identical (1-s) eps_u + s eps_c with explicit
// branches at s = 0 and s = 1 so both endpoints are bit-exact.
//
// The chain runs inside the denoiser's reachable output span: x_T and the
// per-step noise are drawn from N(0, P) where P projects onto that span. A
// hidden width below the image dimension leaves directions the model cannot
// predict in; noise seeded there can never be removed by any reverse step and
// would reach the final image as a full-field overlay, so the ideal chain is
// projected onto the subspace where denoising is actually identifiable.
inline Image sample(const ModelF& m, const AdapterCtxF& ad,
                    const std::string& prompt, const SamplerConfig& cfg,
                    const SampleTrace& trace = {}) {
  if (cfg.steps < 1 || cfg.steps > m.schedule.T)
    throw std::invalid_argument("sample: steps must lie in [1, T]");
  if (cfg.cfg_scale < 0.0)
    throw std::invalid_argument("sample: cfg_scale must be >= 0");
  Rng rng(cfg.seed, streams::kSample);
  const MatrixF basis = output_span_basis(m, ad);
  VectorF u(basis.cols());
  auto span_noise = [&](float scale) {
    for (long i = 0; i < u.size(); ++i) u[i] = static_cast<float>(rng.normal());
    return VectorF(scale * (basis * u));
  };
  VectorF x = span_noise(1.0f);
  const VectorF cond = embed_prompt(m.embed, prompt);
  const VectorF uncond = VectorF::Zero(kPromptEmbDim);
  const float s = static_cast<float>(cfg.cfg_scale);
  for (int t = cfg.steps; t >= 1; --t) {
    const VectorF e_c = predict_eps(m, ad, x, t, cond);
    const VectorF e_u = predict_eps(m, ad, x, t, uncond);
    VectorF e;
    if (cfg.cfg_scale == 0.0)
      e = e_u;
    else if (cfg.cfg_scale == 1.0)
      e = e_c;
    else
      e = (1.0f - s) * e_u + s * e_c;
    if (trace) trace(t, e_u, e_c, e);
    const double beta = m.schedule.betas[static_cast<std::size_t>(t) - 1];
    const double ab_t = m.schedule.alphas_bar[static_cast<std::size_t>(t)];
    const double ab_prev = m.schedule.alphas_bar[static_cast<std::size_t>(t) - 1];
    // Posterior mean in x0-form with the x0 estimate clamped to the pixel box
    // each step. Without the clamp the reverse recursion is expansive (each
    // step divides by sqrt(alpha_t)) in every direction the denoiser cannot
    // express, and a hidden width below the image dimension leaves such
    // directions; the clamp bounds them so the injected noise cannot compound.
    const float sab_t = static_cast<float>(std::sqrt(ab_t));
    const float somab_t = static_cast<float>(std::sqrt(1.0 - ab_t));
    const VectorF x0 =
        ((x - somab_t * e) / sab_t).cwiseMax(0.0f).cwiseMin(1.0f);
    const float c0 =
        static_cast<float>(std::sqrt(ab_prev) * beta / (1.0 - ab_t));
    const float ct = static_cast<float>(std::sqrt(1.0 - beta) * (1.0 - ab_prev) /
                                        (1.0 - ab_t));
    x = c0 * x0 + ct * x;
    if (t > 1) {
      const float sigma =
          static_cast<float>(std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * beta));
      x += span_noise(sigma);
    }
  }
  Image img;
  img.data = x.cwiseMax(0.0f).cwiseMin(1.0f);
  return img;
}

}  // namespace selma
