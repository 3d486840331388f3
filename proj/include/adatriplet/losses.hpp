#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "adatriplet/core.hpp"
#include "adatriplet/errors.hpp"

namespace adatriplet {

inline double hinge(double x) { return x > 0.0 ? x : 0.0; }

// Cosine similarities of one (anchor, positive, negative) triplet. delta is
// stored redundantly and must equal phi_ap - phi_an exactly.
struct TripletSims {
  double phi_ap;
  double phi_an;
  double delta;

  TripletSims(double ap, double an) : TripletSims(ap, an, ap - an) {}

  TripletSims(double ap, double an, double d) : phi_ap(ap), phi_an(an), delta(d) {
    if (!(std::abs(phi_ap) <= 1.0) || !(std::abs(phi_an) <= 1.0))
      throw std::invalid_argument("TripletSims: similarity outside [-1, 1]");
    if (delta != phi_ap - phi_an)
      throw std::invalid_argument("TripletSims: delta != phi_ap - phi_an");
  }

  static TripletSims from_embeddings(const UnitVector& f_a, const UnitVector& f_p,
                                     const UnitVector& f_n) {
    return TripletSims(cosine_sim(f_a, f_p), cosine_sim(f_a, f_n));
  }
};

// Margins in effect for one loss evaluation: epsilon in [0, 2) (strict
// margin), beta in [0, 1] (relaxing margin, the cosine of the virtual angle
// threshold), lambda >= 0 (regularizer weight).
struct MarginState {
  double epsilon;
  double beta;
  double lambda;

  MarginState(double eps, double b, double lam) : epsilon(eps), beta(b), lambda(lam) {
    if (!(epsilon >= 0.0 && epsilon < 2.0))
      throw MarginOutOfRangeError("MarginState: epsilon must be in [0, 2)");
    if (!(beta >= 0.0 && beta <= 1.0))
      throw MarginOutOfRangeError("MarginState: beta must be in [0, 1]");
    if (!(lambda >= 0.0)) throw MarginOutOfRangeError("MarginState: lambda must be >= 0");
  }
};

enum class TripletRegion { HardBoth, HardNegOnly, HardTripletOnly, Easy };

// Active sets are defined by strict inequalities; on a hinge boundary the
// hinge counts as inactive, so loss zero and gradient zero coincide on the
// closure of the easy region.
inline bool in_t_plus(const TripletSims& s, const MarginState& m) {
  return s.phi_an - s.phi_ap + m.epsilon > 0.0;
}

inline bool in_p_plus(const TripletSims& s, const MarginState& m) { return s.phi_an > m.beta; }

// Squared-L2 form; on unit vectors the margin range is [0, 4).
inline double triplet_l2(const UnitVector& f_a, const UnitVector& f_p, const UnitVector& f_n,
                         double epsilon4) {
  if (!(epsilon4 >= 0.0 && epsilon4 < 4.0))
    throw MarginOutOfRangeError("triplet_l2: margin must be in [0, 4)");
  return hinge(squared_l2(f_a, f_p) - squared_l2(f_a, f_n) + epsilon4);
}

// Cosine form on normalized features; identical to optimize to the L2 form
// with twice the margin.
inline double triplet_cos(const TripletSims& sims, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 2.0))
    throw MarginOutOfRangeError("triplet_cos: margin must be in [0, 2)");
  return hinge(sims.phi_an - sims.phi_ap + epsilon);
}

// Anchor-negative regularizer: penalizes negatives closer than the virtual
// angle threshold arccos(beta).
inline double an_penalty(double phi_an, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw MarginOutOfRangeError("an_penalty: beta must be in [0, 1]");
  if (!(std::abs(phi_an) <= 1.0))
    throw std::invalid_argument("an_penalty: phi_an outside [-1, 1]");
  return hinge(phi_an - beta);
}

inline double adatriplet_loss(const TripletSims& sims, const MarginState& m) {
  return triplet_cos(sims, m.epsilon) + m.lambda * an_penalty(sims.phi_an, m.beta);
}

struct PhiGrad {
  double d_phi_ap;
  double d_phi_an;
};

// The four-case gradient table of the loss partition.
inline PhiGrad adatriplet_grad(const TripletSims& sims, const MarginState& m) {
  const bool t = in_t_plus(sims, m);
  const bool p = in_p_plus(sims, m);
  if (t && p) return {-1.0, 1.0 + m.lambda};
  if (!t && p) return {0.0, m.lambda};
  if (t) return {-1.0, 1.0};
  return {0.0, 0.0};
}

inline TripletRegion classify_triplet(const TripletSims& sims, const MarginState& m) {
  const bool t = in_t_plus(sims, m);
  const bool p = in_p_plus(sims, m);
  if (t && p) return TripletRegion::HardBoth;
  if (!t && p) return TripletRegion::HardNegOnly;
  if (t) return TripletRegion::HardTripletOnly;
  return TripletRegion::Easy;
}

inline const char* to_string(TripletRegion r) {
  switch (r) {
    case TripletRegion::HardBoth: return "HardBoth";
    case TripletRegion::HardNegOnly: return "HardNegOnly";
    case TripletRegion::HardTripletOnly: return "HardTripletOnly";
    case TripletRegion::Easy: return "Easy";
  }
  return "?";
}

// Two-margin contrastive baseline in squared-L2 distance form on unit
// vectors: dist2 = 2 - 2*phi.
inline double contrastive(double phi, bool is_positive, double m_pos, double m_neg) {
  if (!(m_pos >= 0.0) || !(m_neg >= 0.0))
    throw MarginOutOfRangeError("contrastive: margins must be >= 0");
  if (!(std::abs(phi) <= 1.0))
    throw std::invalid_argument("contrastive: phi outside [-1, 1]");
  const double dist2 = 2.0 - 2.0 * phi;
  return is_positive ? hinge(dist2 - m_pos) : hinge(m_neg - dist2);
}

enum class SurfaceLoss { Triplet, AdaTriplet };

struct SurfaceCell {
  double phi_an;
  double phi_ap;
  double loss;
  double neg_grad_ap;
  double neg_grad_an;
};

// Uniform grid over [-1,1]^2 with x = phi_an, y = phi_ap, emitted row-major
// with x fastest. Each cell carries the loss and the negative gradient.
inline std::vector<SurfaceCell> surface_grid(SurfaceLoss which, const MarginState& m,
                                             int resolution) {
  if (resolution < 2) throw std::invalid_argument("surface_grid: resolution must be >= 2");
  std::vector<SurfaceCell> cells;
  cells.reserve(static_cast<std::size_t>(resolution) * resolution);
  for (int iy = 0; iy < resolution; ++iy) {
    const double phi_ap = -1.0 + 2.0 * iy / (resolution - 1);
    for (int ix = 0; ix < resolution; ++ix) {
      const double phi_an = -1.0 + 2.0 * ix / (resolution - 1);
      const TripletSims sims(phi_ap, phi_an);
      double loss = 0.0;
      double d_ap = 0.0;
      double d_an = 0.0;
      if (which == SurfaceLoss::AdaTriplet) {
        loss = adatriplet_loss(sims, m);
        const PhiGrad g = adatriplet_grad(sims, m);
        d_ap = g.d_phi_ap;
        d_an = g.d_phi_an;
      } else {
        loss = triplet_cos(sims, m.epsilon);
        const bool t = in_t_plus(sims, m);
        d_ap = t ? -1.0 : 0.0;
        d_an = t ? 1.0 : 0.0;
      }
      cells.push_back({phi_an, phi_ap, loss, 0.0 - d_ap, 0.0 - d_an});
    }
  }
  return cells;
}

struct TripletEmbeddingGrads {
  std::vector<double> g_a;
  std::vector<double> g_p;
  std::vector<double> g_n;
};

// Chain rule from (d phi_ap, d phi_an) back to the three embeddings:
// phi_ap = f_a . f_p and phi_an = f_a . f_n.
inline TripletEmbeddingGrads triplet_grad_to_embeddings(const UnitVector& f_a,
                                                        const UnitVector& f_p,
                                                        const UnitVector& f_n, double d_phi_ap,
                                                        double d_phi_an) {
  if (f_a.size() != f_p.size() || f_a.size() != f_n.size())
    throw DimensionMismatchError("triplet_grad_to_embeddings: dimensions differ");
  if (!std::isfinite(d_phi_ap) || !std::isfinite(d_phi_an))
    throw std::invalid_argument("triplet_grad_to_embeddings: non-finite gradient");
  const std::size_t d = f_a.size();
  TripletEmbeddingGrads out;
  out.g_a.resize(d);
  out.g_p.resize(d);
  out.g_n.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.g_a[i] = d_phi_ap * f_p[i] + d_phi_an * f_n[i];
    out.g_p[i] = d_phi_ap * f_a[i];
    out.g_n[i] = d_phi_an * f_a[i];
  }
  return out;
}

}  // namespace adatriplet
