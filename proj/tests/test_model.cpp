#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "selma/lora.hpp"
#include "selma/model.hpp"
#include "selma/rng.hpp"
#include "selma/schedule.hpp"
#include "selma/toyworld.hpp"
#include "selma/types.hpp"

using namespace selma;

namespace {

using MatrixD = Matrix<double>;

struct GradFixture {
  ModelT<double> m;
  LoraT<double> lora;
  MoeGateT<double> gate;
  std::vector<LoraT<double>> expert_store;
  TrainBatch<double> batch;
  NoiseDraw<double> draw;
};

// A small double-precision problem with every parameter class live: random
// output layer, random LoRA B (a zero B hides the A gradient), gate over two
// random experts.
GradFixture make_fixture(std::uint64_t seed) {
  GradFixture f;
  Rng rng(seed, streams::kInit);
  const NoiseSchedule sched = make_schedule(10);
  f.m = init_model<double>(16, sched, rng);
  auto fill = [&](MatrixD& m, double scale) {
    for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  };
  fill(f.m.dense3.W, 0.3);
  fill(f.m.dense3.b, 0.1);

  f.lora = init_adapter(f.m, 2, rng);
  for (auto& [name, e] : f.lora.layers) fill(e.B, 0.3);

  for (int k = 0; k < 2; ++k) {
    LoraT<double> ex = init_adapter(f.m, 2, rng);
    ex.skill = k == 0 ? "COUNT" : "COLOR";
    for (auto& [name, e] : ex.layers) fill(e.B, 0.3);
    f.expert_store.push_back(std::move(ex));
  }
  f.gate.k = 2;
  for (const std::string& name : {"dense1", "dense2", "dense3"}) {
    MatrixD wg;
    const long d_in = name == "dense1" ? kDenoiserInDim : 16;
    wg.resize(2, d_in);
    fill(wg, 0.2);
    f.gate.wg[name] = wg;
  }

  Rng srng(seed, streams::kScene);
  f.batch.x0.resize(kImageDim, 4);
  for (int j = 0; j < 4; ++j) {
    const ToyScene scene = sample_scene(kAllSkills[j % kNumSkills], srng);
    const Image img = render(scene);
    f.batch.x0.col(j) = img.data.cast<double>();
    f.batch.prompts.push_back(caption(scene));
  }
  Rng nrng(seed, streams::kNoise);
  f.draw = draw_noise<double>(4, sched.T, 0.25, nrng);
  return f;
}

// Central-difference check of one coordinate against the analytic gradient.
double numeric_grad(const ModelT<double>& m, const AdapterCtx<double>& ad,
                    const TrainBatch<double>& batch,
                    const NoiseDraw<double>& draw, double* coord) {
  const double h = 1e-5;
  const double saved = *coord;
  *coord = saved + h;
  const double lp = diffusion_loss<double>(m, ad, batch, draw, nullptr, nullptr);
  *coord = saved - h;
  const double lm = diffusion_loss<double>(m, ad, batch, draw, nullptr, nullptr);
  *coord = saved;
  return (lp - lm) / (2 * h);
}

int check_gradients(GradFixture& f, bool use_gate, int coords_per_tensor,
                    std::uint64_t seed) {
  AdapterCtx<double> ad;
  if (use_gate) {
    ad.gate = &f.gate;
    for (const LoraT<double>& e : f.expert_store) ad.experts.push_back(&e);
  } else {
    ad.lora = &f.lora;
  }
  const NameSet mask = available_param_names(f.m, ad);
  GradMap<double> grads;
  diffusion_loss(f.m, ad, f.batch, f.draw, &mask, &grads);

  auto params = param_refs(f.m, use_gate ? nullptr : &f.lora,
                           use_gate ? &f.gate : nullptr);
  Rng pick(seed, 99);
  int checked = 0;
  for (const std::string& name : mask) {
    REQUIRE(grads.count(name) == 1);
    MatrixD* p = params.at(name);
    const MatrixD& g = grads.at(name);
    REQUIRE(g.rows() == p->rows());
    REQUIRE(g.cols() == p->cols());
    for (int c = 0; c < coords_per_tensor; ++c) {
      // Prefer live coordinates: with |g| near the finite-difference noise
      // floor the relative comparison measures the oracle, not the gradient.
      long idx = static_cast<long>(
          pick.bounded(static_cast<std::uint32_t>(p->size())));
      for (int tries = 0; tries < 64 && std::abs(g.data()[idx]) < 1e-4;
           ++tries) {
        const long cand = static_cast<long>(
            pick.bounded(static_cast<std::uint32_t>(p->size())));
        if (std::abs(g.data()[cand]) > std::abs(g.data()[idx])) idx = cand;
      }
      const double analytic = g.data()[idx];
      const double numeric =
          numeric_grad(f.m, ad, f.batch, f.draw, p->data() + idx);
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      CHECK(rel < 1e-6);
      ++checked;
    }
  }
  return checked;
}

}  // namespace

TEST_CASE("analytic gradients match central differences for every class") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    GradFixture f = make_fixture(seed);
    const int lora_checked = check_gradients(f, false, 2, seed);
    const int gate_checked = check_gradients(f, true, 2, seed);
    // 13 tensors in the lora pass, 10 in the gate pass, 2 coords each.
    CHECK(lora_checked == 26);
    CHECK(gate_checked == 20);
  }
}

TEST_CASE("the zero output layer predicts zero and costs exactly mean eps^2") {
  Rng rng(11, streams::kInit);
  const NoiseSchedule sched = make_schedule(10);
  ModelT<double> m = init_model<double>(8, sched, rng);
  TrainBatch<double> batch;
  batch.x0 = MatrixD::Zero(kImageDim, 3).array() + 0.5;
  batch.prompts = {"a red circle", "two blue squares", "a large green triangle"};
  Rng nrng(11, streams::kNoise);
  const NoiseDraw<double> draw = draw_noise<double>(3, sched.T, 0.0, nrng);
  const double loss = diffusion_loss<double>(m, AdapterCtx<double>{}, batch, draw,
                                     nullptr, nullptr);
  CHECK(loss ==
        doctest::Approx(draw.eps.squaredNorm() / (kImageDim * 3)).epsilon(1e-12));
}

TEST_CASE("zero output layer blocks gradients to the layers beneath it") {
  Rng rng(12, streams::kInit);
  const NoiseSchedule sched = make_schedule(10);
  ModelT<double> m = init_model<double>(8, sched, rng);
  TrainBatch<double> batch;
  batch.x0 = MatrixD::Constant(kImageDim, 2, 0.25);
  batch.prompts = {"a red circle", "three cyan squares"};
  Rng nrng(12, streams::kNoise);
  const NoiseDraw<double> draw = draw_noise<double>(2, sched.T, 0.0, nrng);
  const NameSet mask = {"dense1.W", "dense2.W", "embed.table", "dense3.W"};
  GradMap<double> grads;
  diffusion_loss(m, AdapterCtx<double>{}, batch, draw, &mask, &grads);
  CHECK(grads.at("dense1.W").norm() == 0.0);
  CHECK(grads.at("dense2.W").norm() == 0.0);
  CHECK(grads.at("embed.table").norm() == 0.0);
  // The output layer itself still learns.
  CHECK(grads.at("dense3.W").norm() > 0.0);
}

TEST_CASE("full conditioning dropout makes the loss prompt-independent") {
  GradFixture f = make_fixture(21);
  Rng nrng(21, streams::kNoise);
  f.draw = draw_noise<double>(4, f.m.schedule.T, 1.0, nrng);
  AdapterCtx<double> ad;
  ad.lora = &f.lora;
  const double a = diffusion_loss<double>(f.m, ad, f.batch, f.draw, nullptr, nullptr);
  TrainBatch<double> other = f.batch;
  other.prompts = {"a blue square", "four red circles", "a small cyan circle",
                   "two green triangles"};
  const double b = diffusion_loss<double>(f.m, ad, other, f.draw, nullptr, nullptr);
  CHECK(a == b);
}

TEST_CASE("a lora-only mask yields exactly the adapter gradient entries") {
  GradFixture f = make_fixture(31);
  AdapterCtx<double> ad;
  ad.lora = &f.lora;
  const NameSet mask = lora_param_names(f.lora);
  GradMap<double> grads;
  diffusion_loss(f.m, ad, f.batch, f.draw, &mask, &grads);
  CHECK(grads.size() == 6);
  for (const std::string& layer : {"dense1", "dense2", "dense3"}) {
    CHECK(grads.count("lora." + layer + ".A") == 1);
    CHECK(grads.count("lora." + layer + ".B") == 1);
  }
}

TEST_CASE("a fresh adapter is an exact no-op on predictions") {
  Rng rng(41, streams::kInit);
  const NoiseSchedule sched = make_schedule(10);
  ModelT<float> m = init_model<float>(16, sched, rng);
  for (long i = 0; i < m.dense3.W.size(); ++i)
    m.dense3.W.data()[i] = static_cast<float>(rng.normal() * 0.3);
  LoraT<float> fresh = init_adapter(m, 4, rng);
  VectorF x = VectorF::Constant(kImageDim, 0.4f);
  const VectorF pe = embed_prompt(m.embed, "a red circle");
  AdapterCtx<float> none;
  AdapterCtx<float> with;
  with.lora = &fresh;
  const VectorF a = predict_eps(m, none, x, 3, pe);
  const VectorF b = predict_eps(m, with, x, 3, pe);
  CHECK((a - b).norm() == 0.0f);
}

TEST_CASE("init_adapter draws A from Gaussian(0, 1/rank) and zeroes B") {
  Rng rng(43, streams::kInit);
  const NoiseSchedule sched = make_schedule(10);
  ModelT<float> m = init_model<float>(64, sched, rng);
  LoraT<float> a = init_adapter(m, 4, rng);
  CHECK(a.rank == 4);
  CHECK(a.alpha == doctest::Approx(4.0f));
  CHECK(a.scale() == doctest::Approx(1.0f));
  double sumsq = 0.0;
  long n = 0;
  for (const auto& [name, e] : a.layers) {
    CHECK(e.B.norm() == 0.0f);
    CHECK(e.A.rows() == 4);
    CHECK(e.B.cols() == 4);
    sumsq += e.A.cast<double>().array().square().sum();
    n += e.A.size();
  }
  // Var(A) = 1/rank = 0.25.
  CHECK(sumsq / static_cast<double>(n) == doctest::Approx(0.25).epsilon(0.15));
}

TEST_CASE("predict_eps validates input sizes") {
  Rng rng(51, streams::kInit);
  const NoiseSchedule sched = make_schedule(10);
  ModelT<float> m = init_model<float>(8, sched, rng);
  AdapterCtx<float> none;
  VectorF x = VectorF::Zero(kImageDim);
  VectorF pe = VectorF::Zero(kPromptEmbDim);
  CHECK_THROWS_AS(predict_eps(m, none, VectorF::Zero(10).eval(), 1, pe),
                  std::invalid_argument);
  CHECK_THROWS_AS(predict_eps(m, none, x, 1, VectorF::Zero(3).eval()),
                  std::invalid_argument);
}

TEST_CASE("diffusion_loss rejects malformed calls") {
  GradFixture f = make_fixture(61);
  AdapterCtx<double> ad;
  ad.lora = &f.lora;

  TrainBatch<double> empty;
  empty.x0.resize(kImageDim, 0);
  CHECK_THROWS_AS(diffusion_loss<double>(f.m, ad, empty, f.draw, nullptr, nullptr),
                  std::invalid_argument);

  TrainBatch<double> short_prompts = f.batch;
  short_prompts.prompts.pop_back();
  CHECK_THROWS_AS(
      diffusion_loss<double>(f.m, ad, short_prompts, f.draw, nullptr, nullptr),
      std::invalid_argument);

  AdapterCtx<double> both;
  both.lora = &f.lora;
  both.gate = &f.gate;
  for (const LoraT<double>& e : f.expert_store) both.experts.push_back(&e);
  CHECK_THROWS_AS(diffusion_loss<double>(f.m, both, f.batch, f.draw, nullptr, nullptr),
                  std::invalid_argument);

  GradMap<double> grads;
  CHECK_THROWS_AS(diffusion_loss(f.m, ad, f.batch, f.draw, nullptr, &grads),
                  std::invalid_argument);

  const NameSet bogus = {"dense9.W"};
  CHECK_THROWS_AS(diffusion_loss(f.m, ad, f.batch, f.draw, &bogus, &grads),
                  std::invalid_argument);
}

TEST_CASE("to_double round trips the model weights") {
  Rng rng(71, streams::kInit);
  const NoiseSchedule sched = make_schedule(10);
  ModelT<float> m = init_model<float>(8, sched, rng);
  const ModelD d = to_double(m);
  CHECK(d.dense1.W.cast<float>().isApprox(m.dense1.W, 0.0f));
  CHECK(d.embed.table.cast<float>().isApprox(m.embed.table, 0.0f));
  CHECK(d.schedule.T == m.schedule.T);
}
