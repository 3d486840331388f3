#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "adatriplet/batching.hpp"
#include "adatriplet/errors.hpp"
#include "adatriplet/rng.hpp"

namespace adatriplet {

// Synthetic longitudinal identity data: per-subject Gaussian centers, one
// shared drift direction with per-subject rates (population-level aging with
// individual progression speed), isotropic noise per visit.
struct SynthConfig {
  int n_subjects = 50;
  int years = 8;
  int input_dim = 16;
  double class_sep = 10.0;  // subject-center dispersion
  double drift = 0.5;       // per-year systematic shift magnitude
  double noise_std = 0.2;
  std::uint64_t seed = 1;
};

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_subjects < 2) throw ConfigError("synth: n_subjects must be >= 2");
  if (cfg.years < 1) throw ConfigError("synth: years must be >= 1");
  if (cfg.input_dim < 2) throw ConfigError("synth: input_dim must be >= 2");
  if (!(cfg.class_sep > 0.0)) throw ConfigError("synth: class_sep must be > 0");
  if (!(cfg.drift >= 0.0)) throw ConfigError("synth: drift must be >= 0");
  if (!(cfg.noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
}

inline std::vector<LabeledSample> generate(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed, "synth");

  std::vector<double> drift_dir = rng.normals(cfg.input_dim);
  {
    const double n = l2_norm(drift_dir);
    if (n <= 1e-12) {
      drift_dir.assign(cfg.input_dim, 0.0);
      drift_dir[0] = 1.0;
    } else {
      for (double& x : drift_dir) x /= n;
    }
  }

  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_subjects) * cfg.years);
  for (int s = 0; s < cfg.n_subjects; ++s) {
    std::vector<double> center = rng.normals(cfg.input_dim);
    for (double& c : center) c *= cfg.class_sep;
    const double rate = std::abs(rng.normal()) * cfg.drift;
    for (int t = 0; t < cfg.years; ++t) {
      std::vector<double> x(cfg.input_dim);
      for (int i = 0; i < cfg.input_dim; ++i)
        x[i] = center[i] + t * rate * drift_dir[i] + cfg.noise_std * rng.normal();
      out.push_back({RawVector(std::move(x)), s, t});
    }
  }
  return out;
}

}  // namespace adatriplet
