#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "adatriplet/io.hpp"
#include "adatriplet/metrics.hpp"
#include "adatriplet/synth.hpp"
#include "adatriplet/trainer.hpp"

namespace adatriplet {

using ordered_json = nlohmann::ordered_json;

// Flat experiment configuration shared by all subcommands. One seed feeds
// every random stream (synth, init, sampler) through named splitting.
struct ExperimentConfig {
  // data source: synthesize unless dataset_csv is set
  std::string dataset_csv;
  int n_subjects = 50;
  int years = 8;
  int input_dim = 16;
  double class_sep = 10.0;
  double drift = 0.5;
  double noise_std = 0.2;
  // encoder
  EncoderMode encoder = EncoderMode::FreeEmbedding;
  int embed_dim = 16;
  double init_scale = 0.01;
  // loss and margins
  LossKind loss = LossKind::AdaTriplet;
  double lambda = 1.0;
  double m_pos = 0.5;
  double m_neg = 0.75;
  MarginMode margin_mode = MarginMode::AutoMargin;
  double epsilon = 0.25;
  double beta = 0.5;
  int k_delta = 2;
  int k_an = 2;
  Quartile quartile = Quartile::Q1;
  // optimizer and loop
  int epochs = 100;
  int batch_size = 128;
  int per_subject = 4;
  int train_years = 0;  // restrict training to years < train_years (0 = all)
  long long triplet_cap = 0;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int hist_bins = 80;
  std::uint64_t seed = 1;
  // eval inputs
  std::string embeddings_csv;
  // surface
  int resolution = 101;
  // gradcheck
  int gradcheck_batches = 20;
  double gradcheck_h = 1e-6;
  double gradcheck_tolerance = 1e-5;
  // sweep
  std::string sweep_parameter;
  std::vector<double> sweep_values;
  int sweep_seeds = 5;
};

// --- enum <-> string -------------------------------------------------------

inline std::string to_string(EncoderMode m) {
  return m == EncoderMode::FreeEmbedding ? "free" : "linear";
}
inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Triplet: return "triplet";
    case LossKind::AdaTriplet: return "adatriplet";
    case LossKind::Contrastive: return "contrastive";
  }
  return "?";
}
inline std::string to_string(MarginMode m) {
  switch (m) {
    case MarginMode::Fixed: return "fixed";
    case MarginMode::AutoMargin: return "automargin";
    case MarginMode::Quartile: return "quartile";
  }
  return "?";
}
inline std::string to_string(Quartile q) { return q == Quartile::Q1 ? "q1" : "q2"; }

inline EncoderMode parse_encoder(const std::string& s) {
  if (s == "free") return EncoderMode::FreeEmbedding;
  if (s == "linear") return EncoderMode::Linear;
  throw ConfigError("encoder: expected 'free' or 'linear', got '" + s + "'");
}
inline LossKind parse_loss(const std::string& s) {
  if (s == "triplet") return LossKind::Triplet;
  if (s == "adatriplet") return LossKind::AdaTriplet;
  if (s == "contrastive") return LossKind::Contrastive;
  throw ConfigError("loss: expected 'triplet', 'adatriplet' or 'contrastive', got '" + s + "'");
}
inline MarginMode parse_margin_mode(const std::string& s) {
  if (s == "fixed") return MarginMode::Fixed;
  if (s == "automargin") return MarginMode::AutoMargin;
  if (s == "quartile") return MarginMode::Quartile;
  throw ConfigError("margin_mode: expected 'fixed', 'automargin' or 'quartile', got '" + s +
                    "'");
}
inline Quartile parse_quartile(const std::string& s) {
  if (s == "q1") return Quartile::Q1;
  if (s == "q2") return Quartile::Q2;
  throw ConfigError("quartile: expected 'q1' or 'q2', got '" + s + "'");
}

// --- JSON round trip --------------------------------------------------------

inline ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["dataset_csv"] = c.dataset_csv;
  j["n_subjects"] = c.n_subjects;
  j["years"] = c.years;
  j["input_dim"] = c.input_dim;
  j["class_sep"] = c.class_sep;
  j["drift"] = c.drift;
  j["noise_std"] = c.noise_std;
  j["encoder"] = to_string(c.encoder);
  j["embed_dim"] = c.embed_dim;
  j["init_scale"] = c.init_scale;
  j["loss"] = to_string(c.loss);
  j["lambda"] = c.lambda;
  j["m_pos"] = c.m_pos;
  j["m_neg"] = c.m_neg;
  j["margin_mode"] = to_string(c.margin_mode);
  j["epsilon"] = c.epsilon;
  j["beta"] = c.beta;
  j["k_delta"] = c.k_delta;
  j["k_an"] = c.k_an;
  j["quartile"] = to_string(c.quartile);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["per_subject"] = c.per_subject;
  j["train_years"] = c.train_years;
  j["triplet_cap"] = c.triplet_cap;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["hist_bins"] = c.hist_bins;
  j["seed"] = c.seed;
  j["embeddings_csv"] = c.embeddings_csv;
  j["resolution"] = c.resolution;
  j["gradcheck_batches"] = c.gradcheck_batches;
  j["gradcheck_h"] = c.gradcheck_h;
  j["gradcheck_tolerance"] = c.gradcheck_tolerance;
  j["sweep_parameter"] = c.sweep_parameter;
  j["sweep_values"] = c.sweep_values;
  j["sweep_seeds"] = c.sweep_seeds;
  return j;
}

inline ExperimentConfig config_from_json(const ordered_json& j, ExperimentConfig c = {}) {
  try {
    c.dataset_csv = j.value("dataset_csv", c.dataset_csv);
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.years = j.value("years", c.years);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.class_sep = j.value("class_sep", c.class_sep);
    c.drift = j.value("drift", c.drift);
    c.noise_std = j.value("noise_std", c.noise_std);
    if (j.contains("encoder")) c.encoder = parse_encoder(j.at("encoder").get<std::string>());
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.init_scale = j.value("init_scale", c.init_scale);
    if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
    c.lambda = j.value("lambda", c.lambda);
    c.m_pos = j.value("m_pos", c.m_pos);
    c.m_neg = j.value("m_neg", c.m_neg);
    if (j.contains("margin_mode"))
      c.margin_mode = parse_margin_mode(j.at("margin_mode").get<std::string>());
    c.epsilon = j.value("epsilon", c.epsilon);
    c.beta = j.value("beta", c.beta);
    c.k_delta = j.value("k_delta", c.k_delta);
    c.k_an = j.value("k_an", c.k_an);
    if (j.contains("quartile")) c.quartile = parse_quartile(j.at("quartile").get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.per_subject = j.value("per_subject", c.per_subject);
    c.train_years = j.value("train_years", c.train_years);
    c.triplet_cap = j.value("triplet_cap", c.triplet_cap);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.hist_bins = j.value("hist_bins", c.hist_bins);
    c.seed = j.value("seed", c.seed);
    c.embeddings_csv = j.value("embeddings_csv", c.embeddings_csv);
    c.resolution = j.value("resolution", c.resolution);
    c.gradcheck_batches = j.value("gradcheck_batches", c.gradcheck_batches);
    c.gradcheck_h = j.value("gradcheck_h", c.gradcheck_h);
    c.gradcheck_tolerance = j.value("gradcheck_tolerance", c.gradcheck_tolerance);
    c.sweep_parameter = j.value("sweep_parameter", c.sweep_parameter);
    if (j.contains("sweep_values")) c.sweep_values = j.at("sweep_values").get<std::vector<double>>();
    c.sweep_seeds = j.value("sweep_seeds", c.sweep_seeds);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path,
                                         ExperimentConfig base = {}) {
  std::ifstream in = open_input(path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

inline void write_effective_config(const std::filesystem::path& out_dir,
                                   const ExperimentConfig& cfg) {
  std::ofstream out = open_output(out_dir / "config.json");
  out << to_json(cfg).dump(2) << "\n";
}

// --- validation --------------------------------------------------------------

inline void validate_train_fields(const ExperimentConfig& c) {
  if (c.epochs < 0) throw ConfigError("epochs: must be >= 0");
  if (c.per_subject < 2) throw ConfigError("per_subject: must be >= 2");
  if (c.batch_size < 1 || c.batch_size % c.per_subject != 0)
    throw ConfigError("batch_size: must be a positive multiple of per_subject");
  if (c.batch_size / c.per_subject < 2)
    throw ConfigError("batch_size: batch must cover at least 2 subjects");
  if (c.embed_dim < 2) throw ConfigError("embed_dim: must be >= 2");
  if (!(c.init_scale > 0.0)) throw ConfigError("init_scale: must be > 0");
  if (!(c.lr > 0.0)) throw ConfigError("lr: must be > 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay: must be >= 0");
  if (!(c.adam_beta1 > 0.0 && c.adam_beta1 < 1.0)) throw ConfigError("adam_beta1: must be in (0, 1)");
  if (!(c.adam_beta2 > 0.0 && c.adam_beta2 < 1.0)) throw ConfigError("adam_beta2: must be in (0, 1)");
  if (!(c.adam_eps > 0.0)) throw ConfigError("adam_eps: must be > 0");
  if (c.hist_bins < 1) throw ConfigError("hist_bins: must be >= 1");
  if (c.triplet_cap < 0) throw ConfigError("triplet_cap: must be >= 0");
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda: must be >= 0");
  if (!(c.epsilon >= 0.0 && c.epsilon < 2.0)) throw ConfigError("epsilon: must be in [0, 2)");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) throw ConfigError("beta: must be in [0, 1]");
  if (c.k_delta < 1) throw ConfigError("k_delta: must be a positive integer");
  if (c.k_an < 1) throw ConfigError("k_an: must be a positive integer");
  if (!(c.m_pos >= 0.0)) throw ConfigError("m_pos: must be >= 0");
  if (!(c.m_neg >= 0.0)) throw ConfigError("m_neg: must be >= 0");
  if (c.loss == LossKind::Contrastive && c.margin_mode != MarginMode::Fixed)
    throw ConfigError("margin_mode: contrastive loss supports only 'fixed'");
  if (c.train_years < 0) throw ConfigError("train_years: must be >= 0");
  if (c.train_years > 0 && c.encoder != EncoderMode::Linear)
    throw ConfigError("train_years: year-restricted training requires encoder 'linear'");
  if (c.dataset_csv.empty()) {
    SynthConfig s{c.n_subjects, c.years, c.input_dim, c.class_sep, c.drift, c.noise_std, c.seed};
    validate(s);
  }
}

inline SynthConfig synth_config(const ExperimentConfig& c) {
  return {c.n_subjects, c.years, c.input_dim, c.class_sep, c.drift, c.noise_std, c.seed};
}

inline TrainConfig train_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.loss = {c.loss, c.lambda, c.m_pos, c.m_neg};
  t.encoder = c.encoder;
  t.embed_dim = c.embed_dim;
  t.init_scale = c.init_scale;
  t.margin_mode = c.margin_mode;
  t.epsilon = c.epsilon;
  t.beta = c.beta;
  t.automargin = AutoMarginConfig(c.k_delta, c.k_an);
  t.quartile = c.quartile;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.per_subject = c.per_subject;
  t.triplet_cap = static_cast<std::size_t>(c.triplet_cap);
  t.lr = c.lr;
  t.weight_decay = c.weight_decay;
  t.adam_beta1 = c.adam_beta1;
  t.adam_beta2 = c.adam_beta2;
  t.adam_eps = c.adam_eps;
  t.hist_bins = c.hist_bins;
  t.seed = c.seed;
  return t;
}

inline std::vector<LabeledSample> load_or_generate_dataset(const ExperimentConfig& c) {
  if (!c.dataset_csv.empty()) return read_dataset_csv(c.dataset_csv);
  return generate(synth_config(c));
}

// Baseline-era training subset; 0 keeps the whole dataset.
inline std::vector<LabeledSample> training_subset(const std::vector<LabeledSample>& dataset,
                                                  int train_years) {
  if (train_years <= 0) return dataset;
  std::vector<LabeledSample> subset;
  for (const LabeledSample& s : dataset)
    if (s.year < train_years) subset.push_back(s);
  if (subset.empty()) throw ConfigError("train_years: no samples with year < train_years");
  return subset;
}

// --- shared evaluation plumbing ----------------------------------------------

inline std::vector<UnitVector> embed_all(const EncoderParams& params,
                                         const std::vector<LabeledSample>& dataset) {
  std::vector<UnitVector> out;
  out.reserve(dataset.size());
  for (int i = 0; i < static_cast<int>(dataset.size()); ++i)
    out.push_back(forward(params, dataset, i));
  return out;
}

// Gallery = baseline visits (year 0); queries = all later visits.
inline std::vector<RetrievalCase> build_retrieval_cases(
    const std::vector<int>& subjects, const std::vector<int>& years,
    const std::vector<UnitVector>& embeddings) {
  std::vector<GalleryItem> gallery;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    if (years[i] == 0) gallery.push_back({embeddings[i], subjects[i]});
  if (gallery.empty()) throw DataError("evaluation: no year-0 gallery rows");

  std::vector<RetrievalCase> cases;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    if (years[i] >= 1) cases.push_back({embeddings[i], subjects[i], years[i], gallery});
  if (cases.empty()) throw DataError("evaluation: no query rows with year >= 1");
  return cases;
}

inline std::vector<RetrievalCase> build_retrieval_cases(
    const std::vector<LabeledSample>& dataset, const std::vector<UnitVector>& embeddings) {
  std::vector<int> subjects;
  std::vector<int> years;
  subjects.reserve(dataset.size());
  years.reserve(dataset.size());
  for (const LabeledSample& s : dataset) {
    subjects.push_back(s.subject_id);
    years.push_back(s.year);
  }
  return build_retrieval_cases(subjects, years, embeddings);
}

inline void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  ordered_json j;
  j["excluded_queries"] = report.excluded_queries;
  j["rows"] = ordered_json::array();
  for (const YearMetrics& m : report.rows) {
    ordered_json row;
    row["year"] = year_label(m.year);
    row["n_queries"] = m.n_queries;
    row["map"] = m.map;
    row["map_at_r"] = m.map_at_r;
    row["cmc1"] = m.cmc1;
    j["rows"].push_back(row);
  }
  std::ofstream out = open_output(path);
  out << j.dump(2) << "\n";
}

// Human-readable table, percentages with one decimal.
inline void print_report(std::ostream& os, const EvalReport& report) {
  char line[128];
  std::snprintf(line, sizeof(line), "%-6s %10s %8s %8s %8s\n", "year", "n_queries", "mAP",
                "mAP@R", "CMC@1");
  os << line;
  for (const YearMetrics& m : report.rows) {
    std::snprintf(line, sizeof(line), "%-6s %10zu %8.1f %8.1f %8.1f\n",
                  year_label(m.year).c_str(), m.n_queries, 100.0 * m.map, 100.0 * m.map_at_r,
                  100.0 * m.cmc1);
    os << line;
  }
  if (report.excluded_queries != 0)
    os << "warning: " << report.excluded_queries
       << " queries had no relevant gallery item and were excluded\n";
}

// --- subcommands ---------------------------------------------------------------

inline int cmd_synth(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const SynthConfig sc = synth_config(cfg);
  validate(sc);
  const std::vector<LabeledSample> samples = generate(sc);
  write_dataset_csv(out_dir / "dataset.csv", samples);
  write_effective_config(out_dir, cfg);
  std::cout << "wrote " << samples.size() << " samples to " << (out_dir / "dataset.csv").string()
            << "\n";
  return 0;
}

inline int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  validate_train_fields(cfg);
  const std::vector<LabeledSample> dataset = load_or_generate_dataset(cfg);
  const TrainResult result = train(training_subset(dataset, cfg.train_years), train_config(cfg));
  const std::vector<UnitVector> embeddings = embed_all(result.params, dataset);

  write_history_csv(out_dir / "history.csv", result.history);
  write_histogram_csv(out_dir / "delta_hist.csv", result.history, true);
  write_histogram_csv(out_dir / "phi_an_hist.csv", result.history, false);
  write_margin_trace_csv(out_dir / "margin_trace.csv", result.margin_trace);
  write_embeddings_csv(out_dir / "embeddings.csv", dataset, embeddings);
  write_effective_config(out_dir, cfg);

  if (!result.history.empty()) {
    const EpochHistory& last = result.history.back();
    std::cout << "trained " << result.history.size() << " epochs; final mean loss "
              << fmt_g17(last.mean_loss) << ", epsilon " << fmt_g17(last.epsilon) << ", beta "
              << fmt_g17(last.beta) << "\n";
  } else {
    std::cout << "trained 0 epochs\n";
  }
  return 0;
}

inline int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.embeddings_csv.empty()) throw ConfigError("embeddings_csv: required for eval");
  if (cfg.dataset_csv.empty()) throw ConfigError("dataset_csv: required for eval");
  const std::vector<EmbeddingRow> rows = read_embeddings_csv(cfg.embeddings_csv);
  const std::vector<LabeledSample> dataset = read_dataset_csv(cfg.dataset_csv);
  if (rows.size() != dataset.size())
    throw DataError("eval: embeddings rows (" + std::to_string(rows.size()) +
                    ") != dataset rows (" + std::to_string(dataset.size()) + ")");
  std::vector<int> subjects;
  std::vector<int> years;
  std::vector<UnitVector> embeddings;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].subject_id != dataset[i].subject_id || rows[i].year != dataset[i].year)
      throw DataError("eval: row " + std::to_string(i) + " labels differ between files");
    subjects.push_back(rows[i].subject_id);
    years.push_back(rows[i].year);
    embeddings.push_back(UnitVector(rows[i].values));
  }
  const EvalReport report = evaluate_by_year(build_retrieval_cases(subjects, years, embeddings));
  write_report_csv(out_dir / "report.csv", report);
  write_report_json(out_dir / "report.json", report);
  write_effective_config(out_dir, cfg);
  print_report(std::cout, report);
  return 0;
}

inline int cmd_surface(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.loss == LossKind::Contrastive)
    throw ConfigError("loss: surface supports 'triplet' and 'adatriplet' only");
  if (cfg.resolution < 2) throw ConfigError("resolution: must be >= 2");
  const MarginState m(cfg.epsilon, cfg.beta, cfg.loss == LossKind::AdaTriplet ? cfg.lambda : 0.0);
  const SurfaceLoss which =
      cfg.loss == LossKind::AdaTriplet ? SurfaceLoss::AdaTriplet : SurfaceLoss::Triplet;
  const std::vector<SurfaceCell> cells = surface_grid(which, m, cfg.resolution);
  write_surface_csv(out_dir / "surface.csv", cells);
  write_effective_config(out_dir, cfg);
  std::cout << "wrote " << cells.size() << " grid cells to " << (out_dir / "surface.csv").string()
            << "\n";
  return 0;
}

struct GradcheckRow {
  std::string mode;
  int batch;
  double max_rel_error;
};

// Distance of the batch's triplets to the nearest hinge boundary under the
// configured loss; batches too close to a kink are re-rolled.
inline double min_boundary_distance(std::span<const TripletSims> sims, const LossConfig& loss,
                                    const MarginState& m) {
  double best = 1e300;
  for (const TripletSims& s : sims) {
    switch (loss.kind) {
      case LossKind::Triplet:
        best = std::min(best, std::abs(s.phi_an - s.phi_ap + m.epsilon));
        break;
      case LossKind::AdaTriplet:
        best = std::min(best, std::abs(s.phi_an - s.phi_ap + m.epsilon));
        best = std::min(best, std::abs(s.phi_an - m.beta));
        break;
      case LossKind::Contrastive:
        best = std::min(best, std::abs(2.0 - 2.0 * s.phi_ap - loss.m_pos));
        best = std::min(best, std::abs(loss.m_neg - (2.0 - 2.0 * s.phi_an)));
        break;
    }
  }
  return best;
}

inline int cmd_gradcheck(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                         bool corrupt = false) {
  validate_train_fields(cfg);
  if (cfg.gradcheck_batches < 1) throw ConfigError("gradcheck_batches: must be >= 1");
  if (!(cfg.gradcheck_h >= 1e-8 && cfg.gradcheck_h <= 1e-3))
    throw ConfigError("gradcheck_h: must be in [1e-8, 1e-3]");
  const std::vector<LabeledSample> dataset = load_or_generate_dataset(cfg);
  const LossConfig loss{cfg.loss, cfg.loss == LossKind::AdaTriplet ? cfg.lambda : 0.0, cfg.m_pos,
                        cfg.m_neg};
  const MarginState margins(cfg.epsilon, cfg.loss == LossKind::AdaTriplet ? cfg.beta : 1.0,
                            loss.lambda);

  Rng sampler(cfg.seed, "sampler");
  Rng init(cfg.seed, "init");
  std::vector<GradcheckRow> rows;
  double overall = 0.0;
  bool first = true;
  for (const EncoderMode mode : {EncoderMode::FreeEmbedding, EncoderMode::Linear}) {
    for (int b = 0; b < cfg.gradcheck_batches; ++b) {
      EncoderParams params{};
      BatchPlan plan;
      bool found = false;
      for (int attempt = 0; attempt < 500 && !found; ++attempt) {
        params = mode == EncoderMode::FreeEmbedding
                     ? EncoderParams::free_embedding(static_cast<int>(dataset.size()),
                                                     cfg.embed_dim, cfg.init_scale, init)
                     : EncoderParams::linear(cfg.embed_dim,
                                             static_cast<int>(dataset[0].input.size()),
                                             cfg.init_scale, init);
        plan = sample_batch(dataset, cfg.batch_size, cfg.per_subject, sampler);
        const std::vector<Triplet> triplets = enumerate_triplets(plan.labels);
        const std::vector<TripletSims> sims = batch_sims(params, dataset, plan, triplets);
        found = min_boundary_distance(sims, loss, margins) > 1e-4;
      }
      if (!found) throw DataError("gradcheck: could not draw a batch away from hinge kinks");
      const double corrupt_delta = (corrupt && first) ? 1e-3 : 0.0;
      first = false;
      const double err = finite_diff_check(params, dataset, plan, loss, margins,
                                           cfg.gradcheck_h, corrupt_delta);
      rows.push_back({to_string(mode), b, err});
      overall = std::max(overall, err);
    }
  }

  {
    std::ofstream out = open_output(out_dir / "gradcheck.csv");
    out << "mode,batch,max_rel_error\n";
    for (const GradcheckRow& r : rows)
      out << r.mode << "," << r.batch << "," << fmt_g17(r.max_rel_error) << "\n";
  }
  write_effective_config(out_dir, cfg);
  std::cout << "gradcheck: max relative error " << fmt_g17(overall) << " over " << rows.size()
            << " batches (tolerance " << fmt_g17(cfg.gradcheck_tolerance) << ")\n";
  if (!(overall < cfg.gradcheck_tolerance)) {
    std::cout << "gradcheck: FAIL\n";
    return 3;
  }
  std::cout << "gradcheck: PASS\n";
  return 0;
}

struct SweepRow {
  double value;
  std::uint64_t seed;
  double map;
  double map_at_r;
  double cmc1;
  double map_last_year;
};

// One full train + retrieval evaluation. Training uses the baseline-era
// subset when train_years is set; evaluation always covers the whole dataset.
inline EvalReport run_train_eval(const ExperimentConfig& cfg) {
  validate_train_fields(cfg);
  const std::vector<LabeledSample> dataset = load_or_generate_dataset(cfg);
  const TrainResult result = train(training_subset(dataset, cfg.train_years), train_config(cfg));
  return evaluate_by_year(build_retrieval_cases(dataset, embed_all(result.params, dataset)));
}

inline ExperimentConfig apply_sweep_value(ExperimentConfig cfg, const std::string& parameter,
                                          double value) {
  if (parameter == "epsilon") {
    if (cfg.margin_mode != MarginMode::Fixed)
      throw ConfigError("sweep_parameter: epsilon sweep requires margin_mode 'fixed'");
    cfg.epsilon = value;
  } else if (parameter == "lambda") {
    if (cfg.loss != LossKind::AdaTriplet)
      throw ConfigError("sweep_parameter: lambda sweep requires loss 'adatriplet'");
    cfg.lambda = value;
  } else if (parameter == "k_delta" || parameter == "k_an") {
    if (cfg.margin_mode != MarginMode::AutoMargin)
      throw ConfigError("sweep_parameter: K sweeps require margin_mode 'automargin'");
    const int k = static_cast<int>(value);
    if (k < 1 || static_cast<double>(k) != value)
      throw ConfigError("sweep_values: K values must be positive integers");
    (parameter == "k_delta" ? cfg.k_delta : cfg.k_an) = k;
  } else {
    throw ConfigError("sweep_parameter: expected epsilon, lambda, k_delta or k_an");
  }
  return cfg;
}

// Train + eval per (value, seed) with a shared seed set across values.
inline int cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.sweep_values.empty()) throw ConfigError("sweep_values: must be non-empty");
  if (cfg.sweep_seeds < 1) throw ConfigError("sweep_seeds: must be >= 1");
  validate_train_fields(apply_sweep_value(cfg, cfg.sweep_parameter, cfg.sweep_values.front()));

  std::vector<SweepRow> rows;
  for (const double value : cfg.sweep_values) {
    for (int i = 0; i < cfg.sweep_seeds; ++i) {
      ExperimentConfig run = apply_sweep_value(cfg, cfg.sweep_parameter, value);
      run.seed = cfg.seed + static_cast<std::uint64_t>(i);
      const EvalReport report = run_train_eval(run);
      SweepRow row{value, run.seed, 0.0, 0.0, 0.0, 0.0};
      int last_year = -1;
      for (const YearMetrics& m : report.rows) {
        if (m.year < 0) {
          row.map = m.map;
          row.map_at_r = m.map_at_r;
          row.cmc1 = m.cmc1;
        } else if (m.year > last_year) {
          last_year = m.year;
          row.map_last_year = m.map;
        }
      }
      rows.push_back(row);
    }
  }

  {
    std::ofstream out = open_output(out_dir / "sweep.csv");
    out << "parameter,value,seed,map,map_at_r,cmc1,map_last_year\n";
    for (const SweepRow& r : rows)
      out << cfg.sweep_parameter << "," << fmt_g17(r.value) << "," << r.seed << ","
          << fmt_g17(r.map) << "," << fmt_g17(r.map_at_r) << "," << fmt_g17(r.cmc1) << ","
          << fmt_g17(r.map_last_year) << "\n";
  }
  write_effective_config(out_dir, cfg);

  for (const double value : cfg.sweep_values) {
    double sum = 0.0;
    int n = 0;
    for (const SweepRow& r : rows)
      if (r.value == value) {
        sum += r.map;
        ++n;
      }
    std::cout << cfg.sweep_parameter << "=" << fmt_g17(value) << ": mean mAP "
              << fmt_g17(sum / n) << " over " << n << " seeds\n";
  }
  return 0;
}

}  // namespace adatriplet
