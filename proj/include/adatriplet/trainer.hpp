#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adatriplet/automargin.hpp"
#include "adatriplet/batching.hpp"
#include "adatriplet/core.hpp"
#include "adatriplet/errors.hpp"
#include "adatriplet/losses.hpp"
#include "adatriplet/rng.hpp"

namespace adatriplet {

enum class EncoderMode { FreeEmbedding, Linear };

// Trainable parameters. FreeEmbedding keeps one unnormalized row per dataset
// sample; Linear is a single D x In map. forward() normalizes either way, so
// the raw parameters are unconstrained.
struct EncoderParams {
  EncoderMode mode = EncoderMode::FreeEmbedding;
  int rows = 0;
  int cols = 0;
  std::vector<double> w;  // row-major

  std::span<const double> row(int r) const {
    return {w.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  static EncoderParams free_embedding(int n_samples, int dim, double init_scale, Rng& rng) {
    if (n_samples < 1 || dim < 2)
      throw std::invalid_argument("free_embedding: need n_samples >= 1 and dim >= 2");
    EncoderParams p{EncoderMode::FreeEmbedding, n_samples, dim, {}};
    p.w = rng.normals(static_cast<std::size_t>(n_samples) * dim);
    for (double& x : p.w) x *= init_scale;
    return p;
  }

  static EncoderParams linear(int embed_dim, int input_dim, double init_scale, Rng& rng) {
    if (embed_dim < 2 || input_dim < 1)
      throw std::invalid_argument("linear: need embed_dim >= 2 and input_dim >= 1");
    EncoderParams p{EncoderMode::Linear, embed_dim, input_dim, {}};
    p.w = rng.normals(static_cast<std::size_t>(embed_dim) * input_dim);
    for (double& x : p.w) x *= init_scale;
    return p;
  }
};

// FreeEmbedding forward: normalized table row.
inline UnitVector forward(const EncoderParams& params, int sample_index) {
  if (params.mode != EncoderMode::FreeEmbedding)
    throw std::invalid_argument("forward(index): encoder is not FreeEmbedding");
  if (sample_index < 0 || sample_index >= params.rows)
    throw std::invalid_argument("forward: sample index out of range");
  const auto r = params.row(sample_index);
  return normalize(RawVector(std::vector<double>(r.begin(), r.end())));
}

// Linear forward: normalize(W x).
inline UnitVector forward(const EncoderParams& params, const RawVector& input) {
  if (params.mode != EncoderMode::Linear)
    throw std::invalid_argument("forward(input): encoder is not Linear");
  if (static_cast<int>(input.size()) != params.cols)
    throw DimensionMismatchError("forward: input dimension mismatch");
  std::vector<double> y(params.rows);
  for (int r = 0; r < params.rows; ++r) y[r] = dot(params.row(r), input.span());
  return normalize(RawVector(std::move(y)));
}

inline UnitVector forward(const EncoderParams& params, const std::vector<LabeledSample>& dataset,
                          int index) {
  if (index < 0 || index >= static_cast<int>(dataset.size()))
    throw std::invalid_argument("forward: dataset index out of range");
  return params.mode == EncoderMode::FreeEmbedding ? forward(params, index)
                                                   : forward(params, dataset[index].input);
}

enum class LossKind { Triplet, AdaTriplet, Contrastive };

struct LossConfig {
  LossKind kind = LossKind::AdaTriplet;
  double lambda = 1.0;
  double m_pos = 0.5;   // contrastive only
  double m_neg = 0.75;  // contrastive only
};

// Per-triplet loss value and (d phi_ap, d phi_an) under the configured loss.
// Contrastive is applied per triplet as its positive-pair term plus its
// negative-pair term, reusing the triplet enumeration.
inline std::pair<double, PhiGrad> triplet_loss_and_phi_grad(const TripletSims& sims,
                                                            const LossConfig& cfg,
                                                            const MarginState& m) {
  switch (cfg.kind) {
    case LossKind::Triplet: {
      const double loss = triplet_cos(sims, m.epsilon);
      const bool active = loss > 0.0;
      return {loss, {active ? -1.0 : 0.0, active ? 1.0 : 0.0}};
    }
    case LossKind::AdaTriplet:
      return {adatriplet_loss(sims, m), adatriplet_grad(sims, m)};
    case LossKind::Contrastive: {
      const double pos = contrastive(sims.phi_ap, true, cfg.m_pos, cfg.m_neg);
      const double neg = contrastive(sims.phi_an, false, cfg.m_pos, cfg.m_neg);
      return {pos + neg, {pos > 0.0 ? -2.0 : 0.0, neg > 0.0 ? 2.0 : 0.0}};
    }
  }
  throw std::logic_error("triplet_loss_and_phi_grad: bad loss kind");
}

// Uniform-bin histogram; values outside [lo, hi] fall into the edge bins.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<long long> counts;

  Histogram() = default;
  Histogram(double lo_, double hi_, int bins) : lo(lo_), hi(hi_), counts(bins, 0) {
    if (bins < 1 || !(hi > lo)) throw std::invalid_argument("Histogram: bad range or bins");
  }

  void add(double x) {
    const int bins = static_cast<int>(counts.size());
    int k = static_cast<int>((x - lo) / (hi - lo) * bins);
    k = std::clamp(k, 0, bins - 1);
    ++counts[k];
  }

  long long total() const {
    long long t = 0;
    for (long long c : counts) t += c;
    return t;
  }

  double bin_left(int k) const { return lo + (hi - lo) * k / static_cast<double>(counts.size()); }
  double bin_right(int k) const {
    return lo + (hi - lo) * (k + 1) / static_cast<double>(counts.size());
  }

  // Bin-center weighted mean.
  double mean() const {
    const long long t = total();
    if (t == 0) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k)
      s += counts[k] * 0.5 * (bin_left(static_cast<int>(k)) + bin_right(static_cast<int>(k)));
    return s / static_cast<double>(t);
  }
};

namespace detail {

// Accumulates the per-triplet similarity diagnostics of an epoch.
struct EpochAccum {
  Histogram delta_hist;
  Histogram phi_an_hist;
  double delta_sum = 0.0;
  double an_sum = 0.0;
  long long count = 0;

  EpochAccum(int bins) : delta_hist(-2.0, 2.0, bins), phi_an_hist(-1.0, 1.0, bins) {}

  void add(const TripletSims& s) {
    delta_hist.add(s.delta);
    phi_an_hist.add(s.phi_an);
    delta_sum += s.delta;
    an_sum += s.phi_an;
    ++count;
  }
};

inline std::vector<UnitVector> batch_embeddings(const EncoderParams& params,
                                                const std::vector<LabeledSample>& dataset,
                                                const BatchPlan& plan) {
  std::vector<UnitVector> embeds;
  embeds.reserve(plan.indices.size());
  for (int idx : plan.indices) embeds.push_back(forward(params, dataset, idx));
  return embeds;
}

struct BatchEval {
  double loss = 0.0;
  BatchStats stats;
  std::vector<double> grads;  // empty unless requested
};

// Single pass over the batch triplets: loss, stats, and (optionally) the
// parameter gradient accumulated through the normalization chain rule.
inline BatchEval batch_eval(const EncoderParams& params,
                            const std::vector<LabeledSample>& dataset, const BatchPlan& plan,
                            std::span<const Triplet> triplets, const LossConfig& cfg,
                            const MarginState& margins, bool with_grads,
                            EpochAccum* accum = nullptr) {
  if (triplets.empty()) throw NoTripletsError("batch_eval: batch yields no triplets");
  const std::vector<UnitVector> embeds = batch_embeddings(params, dataset, plan);
  const int b = static_cast<int>(embeds.size());
  const int d = static_cast<int>(embeds.front().size());

  double loss_sum = 0.0;
  double delta_sum = 0.0;
  double an_sum = 0.0;
  std::vector<double> g_embed;
  if (with_grads) g_embed.assign(static_cast<std::size_t>(b) * d, 0.0);

  for (const Triplet& t : triplets) {
    const TripletSims sims = TripletSims::from_embeddings(embeds[t.a], embeds[t.p], embeds[t.n]);
    delta_sum += sims.delta;
    an_sum += sims.phi_an;
    if (accum) accum->add(sims);
    const auto [l, g] = triplet_loss_and_phi_grad(sims, cfg, margins);
    loss_sum += l;
    if (with_grads && (g.d_phi_ap != 0.0 || g.d_phi_an != 0.0)) {
      double* ga = g_embed.data() + static_cast<std::size_t>(t.a) * d;
      double* gp = g_embed.data() + static_cast<std::size_t>(t.p) * d;
      double* gn = g_embed.data() + static_cast<std::size_t>(t.n) * d;
      const UnitVector& fa = embeds[t.a];
      const UnitVector& fp = embeds[t.p];
      const UnitVector& fn = embeds[t.n];
      for (int i = 0; i < d; ++i) {
        ga[i] += g.d_phi_ap * fp[i] + g.d_phi_an * fn[i];
        gp[i] += g.d_phi_ap * fa[i];
        gn[i] += g.d_phi_an * fa[i];
      }
    }
  }

  const double tcount = static_cast<double>(triplets.size());
  BatchEval out;
  out.loss = loss_sum / tcount;
  out.stats = {delta_sum / tcount, an_sum / tcount, triplets.size()};
  if (!with_grads) return out;

  for (double& x : g_embed) x /= tcount;
  out.grads.assign(params.w.size(), 0.0);
  for (int bi = 0; bi < b; ++bi) {
    const std::span<const double> upstream{g_embed.data() + static_cast<std::size_t>(bi) * d,
                                           static_cast<std::size_t>(d)};
    const int idx = plan.indices[bi];
    if (params.mode == EncoderMode::FreeEmbedding) {
      const auto r = params.row(idx);
      const std::vector<double> u =
          normalize_vjp(RawVector(std::vector<double>(r.begin(), r.end())), upstream);
      double* grow = out.grads.data() + static_cast<std::size_t>(idx) * d;
      for (int i = 0; i < d; ++i) grow[i] += u[i];
    } else {
      const RawVector& x = dataset[idx].input;
      std::vector<double> y(params.rows);
      for (int r = 0; r < params.rows; ++r) y[r] = dot(params.row(r), x.span());
      const std::vector<double> u = normalize_vjp(RawVector(std::move(y)), upstream);
      for (int r = 0; r < params.rows; ++r) {
        double* grow = out.grads.data() + static_cast<std::size_t>(r) * params.cols;
        for (int c = 0; c < params.cols; ++c) grow[c] += u[r] * x[c];
      }
    }
  }
  return out;
}

}  // namespace detail

struct BatchResult {
  double loss;
  std::vector<double> grads;
  BatchStats stats;
};

// Mean loss over the batch's exhaustive triplet enumeration, the matching
// parameter gradient, and the batch similarity statistics.
inline BatchResult batch_loss_and_grad(const EncoderParams& params,
                                       const std::vector<LabeledSample>& dataset,
                                       const BatchPlan& plan, const LossConfig& cfg,
                                       const MarginState& margins) {
  const std::vector<Triplet> triplets = enumerate_triplets(plan.labels);
  detail::BatchEval ev = detail::batch_eval(params, dataset, plan, triplets, cfg, margins, true);
  return {ev.loss, std::move(ev.grads), ev.stats};
}

// Similarities of every triplet in the batch, in enumeration order.
inline std::vector<TripletSims> batch_sims(const EncoderParams& params,
                                           const std::vector<LabeledSample>& dataset,
                                           const BatchPlan& plan,
                                           std::span<const Triplet> triplets) {
  const std::vector<UnitVector> embeds = detail::batch_embeddings(params, dataset, plan);
  std::vector<TripletSims> sims;
  sims.reserve(triplets.size());
  for (const Triplet& t : triplets)
    sims.push_back(TripletSims::from_embeddings(embeds[t.a], embeds[t.p], embeds[t.n]));
  return sims;
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stab = 1e-8;
  double weight_decay = 0.0;

  static AdamState for_params(const EncoderParams& params, double lr, double weight_decay) {
    AdamState st;
    st.m.assign(params.w.size(), 0.0);
    st.v.assign(params.w.size(), 0.0);
    st.lr = lr;
    st.weight_decay = weight_decay;
    return st;
  }
};

// Bias-corrected Adam; weight decay enters as an additive L2 gradient term.
inline void adam_step(AdamState& st, EncoderParams& params, std::span<const double> grads) {
  if (grads.size() != params.w.size() || st.m.size() != params.w.size() ||
      st.v.size() != params.w.size())
    throw ShapeMismatchError("adam_step: parameter/gradient shapes differ");
  if (!(st.lr > 0.0) || !(st.beta1 > 0.0 && st.beta1 < 1.0) ||
      !(st.beta2 > 0.0 && st.beta2 < 1.0) || !(st.eps_stab > 0.0) || !(st.weight_decay >= 0.0))
    throw std::invalid_argument("adam_step: bad optimizer hyperparameters");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.w.size(); ++i) {
    const double g = grads[i] + st.weight_decay * params.w[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double m_hat = st.m[i] / bc1;
    const double v_hat = st.v[i] / bc2;
    params.w[i] -= st.lr * m_hat / (std::sqrt(v_hat) + st.eps_stab);
  }
}

// Max over parameters of |analytic - central difference| relative error.
// corrupt_first_grad is a harness self-test hook: it offsets the first
// analytic gradient entry so a broken-gradient report can be exercised.
inline double finite_diff_check(const EncoderParams& params,
                                const std::vector<LabeledSample>& dataset, const BatchPlan& plan,
                                const LossConfig& cfg, const MarginState& margins, double h,
                                double corrupt_first_grad = 0.0) {
  if (!(h >= 1e-8 && h <= 1e-3))
    throw std::invalid_argument("finite_diff_check: h must be in [1e-8, 1e-3]");
  const std::vector<Triplet> triplets = enumerate_triplets(plan.labels);
  detail::BatchEval ev = detail::batch_eval(params, dataset, plan, triplets, cfg, margins, true);
  if (corrupt_first_grad != 0.0 && !ev.grads.empty()) ev.grads[0] += corrupt_first_grad;

  EncoderParams probe = params;
  double max_rel = 0.0;
  for (std::size_t j = 0; j < probe.w.size(); ++j) {
    const double saved = probe.w[j];
    probe.w[j] = saved + h;
    const double f_plus =
        detail::batch_eval(probe, dataset, plan, triplets, cfg, margins, false).loss;
    probe.w[j] = saved - h;
    const double f_minus =
        detail::batch_eval(probe, dataset, plan, triplets, cfg, margins, false).loss;
    probe.w[j] = saved;
    const double central = (f_plus - f_minus) / (2.0 * h);
    const double rel = std::abs(ev.grads[j] - central) /
                       std::max({std::abs(ev.grads[j]), std::abs(central), 1e-12});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

struct EpochHistory {
  int epoch = 0;
  double mean_loss = 0.0;
  double epsilon = 0.0;
  double beta = 0.0;
  double mean_delta = 0.0;   // exact mean over the epoch's triplets
  double mean_phi_an = 0.0;  // exact mean over the epoch's triplets
  Histogram delta_hist;      // over [-2, 2]
  Histogram phi_an_hist;     // over [-1, 1]
};

// Per-batch margin record; with AutoMargin each row satisfies the update
// equations against its own (mu_delta, mu_an) exactly.
struct BatchTrace {
  int epoch;
  int batch;
  double epsilon;
  double beta;
  double mu_delta;
  double mu_an;
};

enum class MarginMode { Fixed, AutoMargin, Quartile };

struct TrainConfig {
  LossConfig loss;
  EncoderMode encoder = EncoderMode::FreeEmbedding;
  int embed_dim = 16;
  double init_scale = 0.01;
  MarginMode margin_mode = MarginMode::AutoMargin;
  double epsilon = 0.25;  // fixed mode
  double beta = 0.5;      // fixed mode, adatriplet only
  AutoMarginConfig automargin{};
  Quartile quartile = Quartile::Q1;
  int epochs = 100;
  int batch_size = 128;
  int per_subject = 4;
  std::size_t triplet_cap = 0;  // 0 = exhaustive enumeration
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int hist_bins = 80;
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<EpochHistory> history;
  std::vector<BatchTrace> margin_trace;
  EncoderParams params;
};

inline int count_subjects(const std::vector<LabeledSample>& dataset) {
  std::set<int> subjects;
  for (const LabeledSample& s : dataset) subjects.insert(s.subject_id);
  return static_cast<int>(subjects.size());
}

// Training loop: sample batch -> enumerate triplets -> (update margins from
// this batch's statistics) -> loss/grad with the updated margins -> Adam.
// One epoch covers ceil(#subjects / subjects-per-batch) batches.
inline TrainResult train(const std::vector<LabeledSample>& dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw EmptyInputError("train: empty dataset");
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (cfg.per_subject < 2) throw ConfigError("train: per_subject must be >= 2");
  if (cfg.batch_size % cfg.per_subject != 0)
    throw ConfigError("train: batch_size must be a multiple of per_subject");
  const int groups = cfg.batch_size / cfg.per_subject;
  if (groups < 2) throw ConfigError("train: batch must cover at least 2 subjects");
  if (cfg.loss.kind == LossKind::Contrastive && cfg.margin_mode != MarginMode::Fixed)
    throw ConfigError("train: contrastive loss supports only fixed margins");

  Rng sampler(cfg.seed, "sampler");
  Rng init(cfg.seed, "init");

  const bool is_triplet = cfg.loss.kind == LossKind::Triplet;
  const bool uses_margins = cfg.loss.kind != LossKind::Contrastive;
  const double lambda_eff = cfg.loss.kind == LossKind::AdaTriplet ? cfg.loss.lambda : 0.0;

  TrainResult result{
      {},
      {},
      cfg.encoder == EncoderMode::FreeEmbedding
          ? EncoderParams::free_embedding(static_cast<int>(dataset.size()), cfg.embed_dim,
                                          cfg.init_scale, init)
          : EncoderParams::linear(cfg.embed_dim, static_cast<int>(dataset[0].input.size()),
                                  cfg.init_scale, init)};
  AdamState adam = AdamState::for_params(result.params, cfg.lr, cfg.weight_decay);
  adam.beta1 = cfg.adam_beta1;
  adam.beta2 = cfg.adam_beta2;
  adam.eps_stab = cfg.adam_eps;

  const int n_subjects = count_subjects(dataset);
  const int batches_per_epoch = (n_subjects + groups - 1) / groups;

  // Margins start at zero and are replaced per batch in the adaptive modes.
  double cur_eps = 0.0;
  double cur_beta = is_triplet ? 1.0 : 0.0;
  if (cfg.margin_mode == MarginMode::Fixed && uses_margins) {
    cur_eps = cfg.epsilon;
    cur_beta = is_triplet ? 1.0 : cfg.beta;
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::EpochAccum accum(cfg.hist_bins);
    double loss_sum = 0.0;
    double eps_sum = 0.0;
    double beta_sum = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      const BatchPlan plan = sample_batch(dataset, cfg.batch_size, cfg.per_subject, sampler);
      std::vector<Triplet> triplets = enumerate_triplets(plan.labels);
      if (cfg.triplet_cap != 0)
        triplets = subsample_triplets(std::move(triplets), cfg.triplet_cap, sampler);

      if (uses_margins && cfg.margin_mode != MarginMode::Fixed) {
        const std::vector<TripletSims> sims = batch_sims(result.params, dataset, plan, triplets);
        if (cfg.margin_mode == MarginMode::AutoMargin) {
          const MarginPair mp = update_margins(batch_stats(sims), cfg.automargin);
          cur_eps = mp.epsilon;
          if (!is_triplet) cur_beta = mp.beta;
        } else {
          std::vector<double> deltas;
          std::vector<double> phi_ans;
          deltas.reserve(sims.size());
          phi_ans.reserve(sims.size());
          for (const TripletSims& s : sims) {
            deltas.push_back(s.delta);
            phi_ans.push_back(s.phi_an);
          }
          const MarginPair mp = quartile_margins(deltas, phi_ans, cfg.quartile);
          cur_eps = mp.epsilon;
          if (!is_triplet) cur_beta = mp.beta;
        }
      }

      const MarginState margins(cur_eps, cur_beta, lambda_eff);
      const detail::BatchEval ev = detail::batch_eval(result.params, dataset, plan, triplets,
                                                      cfg.loss, margins, true, &accum);

      if (cfg.margin_mode == MarginMode::AutoMargin && uses_margins) {
        // Runtime assertion: the margins used must satisfy the update
        // equations against the statistics of the very batch they came from.
        const MarginPair check = update_margins(ev.stats, cfg.automargin);
        if (check.epsilon != cur_eps || (!is_triplet && check.beta != cur_beta))
          throw std::logic_error("train: automargin update/statistics mismatch");
      }

      adam_step(adam, result.params, ev.grads);
      loss_sum += ev.loss;
      eps_sum += cur_eps;
      beta_sum += cur_beta;
      result.margin_trace.push_back(
          {epoch, b, cur_eps, cur_beta, ev.stats.mu_delta, ev.stats.mu_an});
    }

    EpochHistory eh;
    eh.epoch = epoch;
    eh.mean_loss = loss_sum / batches_per_epoch;
    eh.epsilon = eps_sum / batches_per_epoch;
    eh.beta = beta_sum / batches_per_epoch;
    eh.mean_delta = accum.count ? accum.delta_sum / static_cast<double>(accum.count) : 0.0;
    eh.mean_phi_an = accum.count ? accum.an_sum / static_cast<double>(accum.count) : 0.0;
    eh.delta_hist = std::move(accum.delta_hist);
    eh.phi_an_hist = std::move(accum.phi_an_hist);
    result.history.push_back(std::move(eh));
  }
  return result;
}

}  // namespace adatriplet
