// Experiment front-end: dataset generation, training, retrieval evaluation,
// loss-surface export, gradient verification, hyperparameter sweeps.
//
// Option precedence: built-in defaults < --config file < command-line flags.
// Exit codes: 0 success, 1 config error, 2 runtime error, 3 gradient
// verification failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "adatriplet/adatriplet.hpp"

namespace {

using adatriplet::ExperimentConfig;

std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

std::string find_subcommand(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (!a.empty() && a[0] != '-') return a;
  }
  return {};
}

void add_options(CLI::App* cmd, ExperimentConfig& cfg, std::string& out_dir,
                 std::string& encoder_s, std::string& loss_s, std::string& margin_mode_s,
                 std::string& quartile_s, std::string& config_file) {
  cmd->add_option("--config", config_file, "JSON config file (already applied)");
  cmd->add_option("--out", out_dir, "output directory");

  cmd->add_option("--dataset", cfg.dataset_csv, "dataset CSV (omit to synthesize)");
  cmd->add_option("--n-subjects", cfg.n_subjects, "synthetic subjects");
  cmd->add_option("--years", cfg.years, "synthetic follow-up years per subject");
  cmd->add_option("--input-dim", cfg.input_dim, "synthetic input dimension");
  cmd->add_option("--class-sep", cfg.class_sep, "subject-center dispersion");
  cmd->add_option("--drift", cfg.drift, "per-year drift magnitude");
  cmd->add_option("--noise-std", cfg.noise_std, "per-visit noise std");

  cmd->add_option("--encoder", encoder_s, "encoder mode: free|linear");
  cmd->add_option("--embed-dim", cfg.embed_dim, "embedding dimension");
  cmd->add_option("--init-scale", cfg.init_scale, "parameter init scale");

  cmd->add_option("--loss", loss_s, "loss: triplet|adatriplet|contrastive");
  cmd->add_option("--lambda", cfg.lambda, "anchor-negative regularizer weight");
  cmd->add_option("--m-pos", cfg.m_pos, "contrastive positive margin");
  cmd->add_option("--m-neg", cfg.m_neg, "contrastive negative margin");
  cmd->add_option("--margin-mode", margin_mode_s, "margin mode: fixed|automargin|quartile");
  cmd->add_option("--epsilon", cfg.epsilon, "fixed strict margin");
  cmd->add_option("--beta", cfg.beta, "fixed relaxing margin");
  cmd->add_option("--k-delta", cfg.k_delta, "automargin K_delta");
  cmd->add_option("--k-an", cfg.k_an, "automargin K_an");
  cmd->add_option("--quartile", quartile_s, "quartile baseline: q1|q2");

  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--batch-size", cfg.batch_size, "batch size");
  cmd->add_option("--per-subject", cfg.per_subject, "samples per subject per batch");
  cmd->add_option("--train-years", cfg.train_years,
                  "train only on samples with year < N (0 = all; linear encoder)");
  cmd->add_option("--triplet-cap", cfg.triplet_cap, "uniform triplet subsample cap (0 = off)");
  cmd->add_option("--lr", cfg.lr, "Adam learning rate");
  cmd->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay");
  cmd->add_option("--hist-bins", cfg.hist_bins, "histogram bins");
  cmd->add_option("--seed", cfg.seed, "experiment seed");

  cmd->add_option("--embeddings", cfg.embeddings_csv, "embeddings CSV (eval)");
  cmd->add_option("--resolution", cfg.resolution, "surface grid resolution");
  cmd->add_option("--batches", cfg.gradcheck_batches, "gradcheck batches per mode");
  cmd->add_option("--fd-step", cfg.gradcheck_h, "finite difference step");
  cmd->add_option("--parameter", cfg.sweep_parameter, "sweep parameter");
  cmd->add_option("--values", cfg.sweep_values, "sweep values");
  cmd->add_option("--sweep-seeds", cfg.sweep_seeds, "seeds per sweep value");
}

}  // namespace

int main(int argc, char** argv) {
  const std::string sub = find_subcommand(argc, argv);
  const std::string config_path = find_config_arg(argc, argv);

  ExperimentConfig base;
  if (sub == "gradcheck") {
    // Desk-scale defaults keep the exhaustive per-parameter check fast. The
    // O(1) init scale keeps similarity values well away from hinge kinks
    // under the finite-difference perturbations.
    base.n_subjects = 6;
    base.years = 2;
    base.input_dim = 5;
    base.embed_dim = 6;
    base.batch_size = 8;
    base.per_subject = 2;
    base.init_scale = 1.0;
  }

  ExperimentConfig cfg;
  try {
    cfg = config_path.empty() ? base : adatriplet::load_config_file(config_path, base);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  std::string out_dir = "out";
  std::string encoder_s = adatriplet::to_string(cfg.encoder);
  std::string loss_s = adatriplet::to_string(cfg.loss);
  std::string margin_mode_s = adatriplet::to_string(cfg.margin_mode);
  std::string quartile_s = adatriplet::to_string(cfg.quartile);
  std::string config_file_echo;
  bool corrupt = false;

  CLI::App app{"AdaTriplet loss, AutoMargin scheduling, and retrieval benchmarks"};
  app.require_subcommand(1);

  CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic longitudinal dataset");
  CLI::App* c_train =
      app.add_subcommand("train", "train an encoder; write history, histograms, embeddings");
  CLI::App* c_eval =
      app.add_subcommand("eval", "score embeddings against the baseline-year gallery");
  CLI::App* c_surface =
      app.add_subcommand("surface", "export a loss-surface / negative-gradient grid");
  CLI::App* c_gradcheck = app.add_subcommand(
      "gradcheck", "verify analytic gradients against central finite differences");
  CLI::App* c_sweep =
      app.add_subcommand("sweep", "train+eval across a list of hyperparameter values");

  for (CLI::App* cmd : {c_synth, c_train, c_eval, c_surface, c_gradcheck, c_sweep})
    add_options(cmd, cfg, out_dir, encoder_s, loss_s, margin_mode_s, quartile_s,
                config_file_echo);
  c_gradcheck->add_flag("--corrupt", corrupt, "perturb one analytic gradient (self-test)")
      ->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.encoder = adatriplet::parse_encoder(encoder_s);
    cfg.loss = adatriplet::parse_loss(loss_s);
    cfg.margin_mode = adatriplet::parse_margin_mode(margin_mode_s);
    cfg.quartile = adatriplet::parse_quartile(quartile_s);

    const std::filesystem::path out{out_dir};
    if (c_synth->parsed()) return adatriplet::cmd_synth(cfg, out);
    if (c_train->parsed()) return adatriplet::cmd_train(cfg, out);
    if (c_eval->parsed()) return adatriplet::cmd_eval(cfg, out);
    if (c_surface->parsed()) return adatriplet::cmd_surface(cfg, out);
    if (c_gradcheck->parsed()) return adatriplet::cmd_gradcheck(cfg, out, corrupt);
    if (c_sweep->parsed()) return adatriplet::cmd_sweep(cfg, out);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
