#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adatriplet/experiment.hpp"

using namespace adatriplet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adatriplet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

ExperimentConfig small_cfg() {
  ExperimentConfig cfg;
  cfg.n_subjects = 8;
  cfg.years = 3;
  cfg.input_dim = 5;
  cfg.class_sep = 3.0;
  cfg.embed_dim = 4;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.per_subject = 2;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("config JSON round-trips", "[experiment]") {
  ExperimentConfig cfg = small_cfg();
  cfg.loss = LossKind::Contrastive;
  cfg.margin_mode = MarginMode::Fixed;
  cfg.quartile = Quartile::Q2;
  cfg.sweep_values = {0.1, 0.25};
  cfg.sweep_parameter = "epsilon";
  const ordered_json j = to_json(cfg);
  const ExperimentConfig back = config_from_json(j);
  CHECK(to_json(back).dump() == j.dump());

  CHECK_THROWS_AS(config_from_json(ordered_json{{"loss", "bogus"}}), ConfigError);
}

TEST_CASE("cmd_synth writes the dataset", "[experiment]") {
  const fs::path out = fresh_dir("synth");
  ExperimentConfig cfg = small_cfg();
  REQUIRE(cmd_synth(cfg, out) == 0);
  const auto rows = read_dataset_csv(out / "dataset.csv");
  CHECK(rows.size() == 8 * 3);

  // missing output dir is created
  const fs::path nested = out / "a" / "b";
  REQUIRE(cmd_synth(cfg, nested) == 0);
  CHECK(fs::exists(nested / "dataset.csv"));

  cfg.n_subjects = 1;
  CHECK_THROWS_AS(cmd_synth(cfg, out), ConfigError);
}

TEST_CASE("cmd_train writes history with the expected epsilon behavior", "[experiment]") {
  const fs::path out1 = fresh_dir("train_auto");
  ExperimentConfig cfg = small_cfg();
  cfg.loss = LossKind::AdaTriplet;
  cfg.margin_mode = MarginMode::AutoMargin;
  REQUIRE(cmd_train(cfg, out1) == 0);
  const auto hist = lines_of(slurp(out1 / "history.csv"));
  REQUIRE(hist.size() == 5);  // header + 4 epochs
  CHECK(hist[0] == "epoch,mean_loss,epsilon,beta");
  // epsilon column nonconstant across epochs
  std::set<std::string> eps_values;
  for (std::size_t i = 1; i < hist.size(); ++i)
    eps_values.insert(split_csv_line(hist[i])[2]);
  CHECK(eps_values.size() > 1);

  const fs::path out2 = fresh_dir("train_fixed");
  cfg.loss = LossKind::Triplet;
  cfg.margin_mode = MarginMode::Fixed;
  cfg.epsilon = 0.25;
  REQUIRE(cmd_train(cfg, out2) == 0);
  const auto hist2 = lines_of(slurp(out2 / "history.csv"));
  std::set<std::string> eps2;
  for (std::size_t i = 1; i < hist2.size(); ++i) eps2.insert(split_csv_line(hist2[i])[2]);
  CHECK(eps2.size() == 1);
  CHECK(*eps2.begin() == "0.25");

  // margin trace satisfies the update equations per batch (automargin run)
  const auto trace = lines_of(slurp(out1 / "margin_trace.csv"));
  REQUIRE(trace.size() > 1);
  CHECK(trace[0] == "epoch,batch,epsilon,beta,mu_delta,mu_an");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto f = split_csv_line(trace[i]);
    const double eps = parse_double(f[2]);
    const double beta = parse_double(f[3]);
    const double mu_d = parse_double(f[4]);
    const double mu_a = parse_double(f[5]);
    const MarginPair mp = update_margins({mu_d, mu_a, 1}, AutoMarginConfig(cfg.k_delta, cfg.k_an));
    CHECK(eps == mp.epsilon);
    CHECK(beta == mp.beta);
  }
}

TEST_CASE("cmd_train re-runs are byte-identical from the persisted config", "[experiment]") {
  const fs::path out1 = fresh_dir("train_repro1");
  const fs::path out2 = fresh_dir("train_repro2");
  const ExperimentConfig cfg = small_cfg();
  REQUIRE(cmd_train(cfg, out1) == 0);
  const ExperimentConfig replay = load_config_file(out1 / "config.json");
  REQUIRE(cmd_train(replay, out2) == 0);
  for (const char* name :
       {"history.csv", "delta_hist.csv", "phi_an_hist.csv", "margin_trace.csv",
        "embeddings.csv", "config.json"})
    CHECK(slurp(out1 / name) == slurp(out2 / name));
}

TEST_CASE("cmd_eval scores perfect one-hot embeddings at 1.0", "[experiment]") {
  const fs::path out = fresh_dir("eval_perfect");
  // dataset: 4 subjects x 2 years, embeddings = one-hot per subject
  std::vector<LabeledSample> ds;
  std::vector<UnitVector> embeds;
  for (int s = 0; s < 4; ++s) {
    for (int t = 0; t < 2; ++t) {
      ds.push_back({RawVector({double(s), double(t), 1.0}), s, t});
      std::vector<double> e(4, 0.0);
      e[s] = 1.0;
      embeds.push_back(UnitVector(std::move(e)));
    }
  }
  write_dataset_csv(out / "dataset.csv", ds);
  write_embeddings_csv(out / "embeddings.csv", ds, embeds);

  ExperimentConfig cfg;
  cfg.dataset_csv = (out / "dataset.csv").string();
  cfg.embeddings_csv = (out / "embeddings.csv").string();
  REQUIRE(cmd_eval(cfg, out) == 0);
  const auto report = lines_of(slurp(out / "report.csv"));
  REQUIRE(report.size() == 3);  // header + year 1 + all
  CHECK(report[0] == "year,n_queries,map,map_at_r,cmc1");
  const auto all_row = split_csv_line(report[2]);
  CHECK(all_row[0] == "all");
  CHECK(parse_double(all_row[2]) == 1.0);
  CHECK(parse_double(all_row[3]) == 1.0);
  CHECK(parse_double(all_row[4]) == 1.0);

  // mismatched row counts must error
  std::vector<LabeledSample> short_ds(ds.begin(), ds.end() - 1);
  write_dataset_csv(out / "short.csv", short_ds);
  cfg.dataset_csv = (out / "short.csv").string();
  CHECK_THROWS_AS(cmd_eval(cfg, out), DataError);
}

TEST_CASE("random embeddings score near chance CMC@1", "[experiment]") {
  // 50 subjects, gallery of 50; chance CMC@1 = 1/50
  Rng rng(65, "test-experiment");
  std::vector<LabeledSample> ds;
  std::vector<UnitVector> embeds;
  for (int s = 0; s < 50; ++s) {
    for (int t = 0; t < 8; ++t) {
      ds.push_back({RawVector({double(s), double(t)}), s, t});
      std::vector<double> v = rng.normals(16);
      embeds.push_back(normalize(RawVector(std::move(v))));
    }
  }
  const EvalReport rep = evaluate_by_year(build_retrieval_cases(ds, embeds));
  const YearMetrics& all = rep.rows.back();
  REQUIRE(all.year == -1);
  CHECK(all.n_queries == 50 * 7);
  // binomial(350, 0.02): sd ~ 0.0075; allow 4 sd
  CHECK(all.cmc1 > 0.02 - 0.03);
  CHECK(all.cmc1 < 0.02 + 0.03);
}

TEST_CASE("cmd_surface exports the grid and the lambda=0 identity", "[experiment]") {
  const fs::path out_ada = fresh_dir("surface_ada");
  ExperimentConfig cfg;
  cfg.loss = LossKind::AdaTriplet;
  cfg.epsilon = 0.25;
  cfg.beta = 0.1;
  cfg.lambda = 1.0;
  cfg.resolution = 101;
  REQUIRE(cmd_surface(cfg, out_ada) == 0);
  const auto rows = lines_of(slurp(out_ada / "surface.csv"));
  REQUIRE(rows.size() == 1 + 101 * 101);
  CHECK(rows[0] == "phi_an,phi_ap,loss,neg_grad_ap,neg_grad_an");

  // lambda = 0 AdaTriplet grid equals the Triplet grid byte-for-byte
  const fs::path out_l0 = fresh_dir("surface_l0");
  cfg.lambda = 0.0;
  REQUIRE(cmd_surface(cfg, out_l0) == 0);
  const fs::path out_tri = fresh_dir("surface_tri");
  cfg.loss = LossKind::Triplet;
  REQUIRE(cmd_surface(cfg, out_tri) == 0);
  CHECK(slurp(out_l0 / "surface.csv") == slurp(out_tri / "surface.csv"));

  cfg.loss = LossKind::Contrastive;
  CHECK_THROWS_AS(cmd_surface(cfg, out_tri), ConfigError);
}

TEST_CASE("cmd_gradcheck passes and the corrupt hook fails", "[experiment]") {
  const fs::path out = fresh_dir("gradcheck");
  ExperimentConfig cfg;
  cfg.n_subjects = 6;
  cfg.years = 2;
  cfg.input_dim = 5;
  cfg.embed_dim = 6;
  cfg.batch_size = 8;
  cfg.per_subject = 2;
  cfg.init_scale = 1.0;
  cfg.gradcheck_batches = 3;
  CHECK(cmd_gradcheck(cfg, out) == 0);
  CHECK(cmd_gradcheck(cfg, out, true) == 3);
}

TEST_CASE("cmd_sweep covers the lambda scan set", "[experiment]") {
  const fs::path out = fresh_dir("sweep_lambda");
  ExperimentConfig cfg = small_cfg();
  cfg.loss = LossKind::AdaTriplet;
  cfg.margin_mode = MarginMode::AutoMargin;
  cfg.sweep_parameter = "lambda";
  cfg.sweep_values = {0.0, 0.5, 1.0, 2.0};
  cfg.sweep_seeds = 1;
  cfg.epochs = 2;
  REQUIRE(cmd_sweep(cfg, out) == 0);
  const auto rows = lines_of(slurp(out / "sweep.csv"));
  REQUIRE(rows.size() == 1 + 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(split_csv_line(rows[i])[0] == "lambda");
}

TEST_CASE("cmd_train with train_years restricts training but embeds everything",
          "[experiment]") {
  const fs::path out = fresh_dir("train_years");
  ExperimentConfig cfg = small_cfg();
  cfg.encoder = EncoderMode::Linear;
  cfg.train_years = 1;  // baseline visits only
  REQUIRE(cmd_train(cfg, out) == 0);
  const auto rows = read_embeddings_csv(out / "embeddings.csv");
  CHECK(rows.size() == 8 * 3);  // all years embedded

  cfg.encoder = EncoderMode::FreeEmbedding;
  CHECK_THROWS_AS(cmd_train(cfg, out), ConfigError);
}

TEST_CASE("cmd_sweep emits one row per value and seed, deterministically", "[experiment]") {
  const fs::path out1 = fresh_dir("sweep1");
  ExperimentConfig cfg = small_cfg();
  cfg.loss = LossKind::Triplet;
  cfg.margin_mode = MarginMode::Fixed;
  cfg.sweep_parameter = "epsilon";
  cfg.sweep_values = {0.1, 0.3};
  cfg.sweep_seeds = 2;
  cfg.epochs = 2;
  REQUIRE(cmd_sweep(cfg, out1) == 0);
  const auto rows = lines_of(slurp(out1 / "sweep.csv"));
  REQUIRE(rows.size() == 1 + 2 * 2);
  CHECK(rows[0] == "parameter,value,seed,map,map_at_r,cmc1,map_last_year");

  const fs::path out2 = fresh_dir("sweep2");
  REQUIRE(cmd_sweep(cfg, out2) == 0);
  CHECK(slurp(out1 / "sweep.csv") == slurp(out2 / "sweep.csv"));

  cfg.sweep_parameter = "lambda";  // requires adatriplet
  CHECK_THROWS_AS(cmd_sweep(cfg, out2), ConfigError);
}
