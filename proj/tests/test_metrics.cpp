#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "adatriplet/metrics.hpp"
#include "adatriplet/rng.hpp"

using namespace adatriplet;

namespace {

UnitVector unit2(double angle) { return UnitVector({std::cos(angle), std::sin(angle)}); }

UnitVector random_unit(Rng& rng, std::size_t dim) {
  while (true) {
    std::vector<double> v = rng.normals(dim);
    if (l2_norm(v) > 1e-6) return normalize(RawVector(std::move(v)));
  }
}

// Brute-force AP/AP@R/CMC computed straight from the definitions with an
// independent ranking (repeated max selection).
struct BruteScores {
  double ap;
  double ap_at_r;
  bool hit1;
  std::vector<bool> rel_by_rank;

  bool hit_top(int k) const {
    for (int i = 0; i < k && i < static_cast<int>(rel_by_rank.size()); ++i)
      if (rel_by_rank[i]) return true;
    return false;
  }
};

BruteScores brute_force_scores(const RetrievalCase& c) {
  const std::size_t n = c.gallery.size();
  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i) sims[i] = cosine_sim(c.query, c.gallery[i].embedding);

  std::vector<bool> used(n, false);
  std::vector<int> order;
  for (std::size_t round = 0; round < n; ++round) {
    int best = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      if (best < 0 || sims[i] > sims[best]) best = static_cast<int>(i);
    }
    used[best] = true;
    order.push_back(best);
  }

  long double r_total = 0.0L;
  for (std::size_t i = 0; i < n; ++i)
    if (c.gallery[i].subject_id == c.query_subject) r_total += 1.0L;

  long double ap = 0.0L;
  long double ap_r = 0.0L;
  long double hits = 0.0L;
  BruteScores out{};
  for (std::size_t i = 0; i < n; ++i) {
    const bool rel = c.gallery[order[i]].subject_id == c.query_subject;
    out.rel_by_rank.push_back(rel);
    if (!rel) continue;
    hits += 1.0L;
    const long double prec = hits / static_cast<long double>(i + 1);
    ap += prec;
    if (static_cast<long double>(i + 1) <= r_total) ap_r += prec;
  }
  out.ap = static_cast<double>(ap / r_total);
  out.ap_at_r = static_cast<double>(ap_r / r_total);
  out.hit1 = c.gallery[order[0]].subject_id == c.query_subject;
  return out;
}

}  // namespace

TEST_CASE("rank_gallery examples", "[metrics]") {
  RetrievalCase c{UnitVector({1.0, 0.0}), 0, 1, {}};
  c.gallery.push_back({UnitVector({0.0, 1.0}), 1});
  c.gallery.push_back({UnitVector({1.0, 0.0}), 0});
  CHECK(rank_gallery(c) == std::vector<int>{1, 0});

  RetrievalCase ties{UnitVector({1.0, 0.0}), 0, 1, {}};
  for (int i = 0; i < 4; ++i) ties.gallery.push_back({UnitVector({1.0, 0.0}), i});
  CHECK(rank_gallery(ties) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("rank_gallery matches a brute-force sort", "[metrics]") {
  Rng rng(61, "test-metrics");
  for (int it = 0; it < 30; ++it) {
    RetrievalCase c{random_unit(rng, 4), 0, 1, {}};
    for (int i = 0; i < 6; ++i) c.gallery.push_back({random_unit(rng, 4), i % 3});
    const std::vector<int> order = rank_gallery(c);
    for (std::size_t i = 1; i < order.size(); ++i) {
      const double a = cosine_sim(c.query, c.gallery[order[i - 1]].embedding);
      const double b = cosine_sim(c.query, c.gallery[order[i]].embedding);
      CHECK(a >= b);
    }
  }
}

TEST_CASE("cmc_top_k examples", "[metrics]") {
  RetrievalCase first{unit2(0.0), 0, 1, {}};
  first.gallery.push_back({unit2(0.1), 0});
  first.gallery.push_back({unit2(1.0), 1});
  CHECK(cmc_top_k(std::vector<RetrievalCase>{first}, 1) == 1.0);

  RetrievalCase second{unit2(0.0), 0, 1, {}};
  second.gallery.push_back({unit2(0.1), 1});
  second.gallery.push_back({unit2(0.4), 0});
  CHECK(cmc_top_k(std::vector<RetrievalCase>{second}, 1) == 0.0);
  CHECK(cmc_top_k(std::vector<RetrievalCase>{second}, 2) == 1.0);

  CHECK_THROWS_AS(cmc_top_k(std::vector<RetrievalCase>{}, 1), EmptyInputError);
}

TEST_CASE("mean_average_precision examples", "[metrics]") {
  // single relevant ranked 1 of 3 -> AP 1
  RetrievalCase a{unit2(0.0), 0, 1, {}};
  a.gallery.push_back({unit2(0.05), 0});
  a.gallery.push_back({unit2(0.8), 1});
  a.gallery.push_back({unit2(1.2), 2});
  CHECK(mean_average_precision(std::vector<RetrievalCase>{a}) == 1.0);

  // single relevant ranked 2 of 3 -> AP 0.5
  RetrievalCase b{unit2(0.0), 0, 1, {}};
  b.gallery.push_back({unit2(0.05), 1});
  b.gallery.push_back({unit2(0.2), 0});
  b.gallery.push_back({unit2(1.2), 2});
  CHECK(mean_average_precision(std::vector<RetrievalCase>{b}) == 0.5);
}

TEST_CASE("map_at_r examples", "[metrics]") {
  // R=1, relevant at rank 1 -> 1.0
  RetrievalCase a{unit2(0.0), 0, 1, {}};
  a.gallery.push_back({unit2(0.05), 0});
  a.gallery.push_back({unit2(0.8), 1});
  CHECK(map_at_r(std::vector<RetrievalCase>{a}) == 1.0);

  // R=1, relevant at rank 2 -> 0.0
  RetrievalCase b{unit2(0.0), 0, 1, {}};
  b.gallery.push_back({unit2(0.05), 1});
  b.gallery.push_back({unit2(0.2), 0});
  CHECK(map_at_r(std::vector<RetrievalCase>{b}) == 0.0);

  // R=2, relevant at ranks 1 and 3 -> 0.5
  RetrievalCase c{unit2(0.0), 0, 1, {}};
  c.gallery.push_back({unit2(0.05), 0});
  c.gallery.push_back({unit2(0.2), 1});
  c.gallery.push_back({unit2(0.4), 0});
  CHECK(map_at_r(std::vector<RetrievalCase>{c}) == 0.5);
  CHECK(brute_force_scores(c).ap_at_r == 0.5);
}

TEST_CASE("metrics match brute force on random small galleries", "[metrics]") {
  Rng rng(62, "test-metrics");
  std::vector<RetrievalCase> cases;
  for (int it = 0; it < 200; ++it) {
    const int n = 2 + static_cast<int>(rng.index(7));
    RetrievalCase c{random_unit(rng, 3), 0, 1, {}};
    bool any_rel = false;
    for (int i = 0; i < n; ++i) {
      const int subject = static_cast<int>(rng.index(3));
      if (subject == 0) any_rel = true;
      c.gallery.push_back({random_unit(rng, 3), subject});
    }
    if (!any_rel) c.gallery[rng.index(c.gallery.size())].subject_id = 0;
    cases.push_back(std::move(c));
  }

  long double map_sum = 0.0L;
  long double map_r_sum = 0.0L;
  long double cmc_sum = 0.0L;
  long double cmc3_sum = 0.0L;
  for (const RetrievalCase& c : cases) {
    const BruteScores s = brute_force_scores(c);
    map_sum += s.ap;
    map_r_sum += s.ap_at_r;
    cmc_sum += s.hit1 ? 1.0L : 0.0L;
    cmc3_sum += s.hit_top(3) ? 1.0L : 0.0L;
  }
  const double n = static_cast<double>(cases.size());
  CHECK(std::abs(mean_average_precision(cases) - static_cast<double>(map_sum) / n) <= 1e-12);
  CHECK(std::abs(map_at_r(cases) - static_cast<double>(map_r_sum) / n) <= 1e-12);
  CHECK(std::abs(cmc_top_k(cases, 1) - static_cast<double>(cmc_sum) / n) <= 1e-12);
  CHECK(std::abs(cmc_top_k(cases, 3) - static_cast<double>(cmc3_sum) / n) <= 1e-12);
}

TEST_CASE("metric invariants", "[metrics]") {
  Rng rng(63, "test-metrics");
  std::vector<RetrievalCase> cases;
  for (int it = 0; it < 40; ++it) {
    RetrievalCase c{random_unit(rng, 4), 0, 1, {}};
    const int n = 3 + static_cast<int>(rng.index(5));
    bool any_rel = false;
    for (int i = 0; i < n; ++i) {
      const int subject = static_cast<int>(rng.index(3));
      if (subject == 0) any_rel = true;
      c.gallery.push_back({random_unit(rng, 4), subject});
    }
    if (!any_rel) c.gallery[0].subject_id = 0;
    cases.push_back(std::move(c));
  }

  // CMC monotone in k; CMC@|gallery| = 1
  double prev = 0.0;
  for (int k = 1; k <= 8; ++k) {
    const double v = cmc_top_k(cases, k);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(cmc_top_k(cases, 8) == 1.0);

  // mAP@R <= mAP
  CHECK(map_at_r(cases) <= mean_average_precision(cases) + 1e-15);

  // permutation invariance when all similarities are distinct
  RetrievalCase base{random_unit(rng, 5), 0, 1, {}};
  for (int i = 0; i < 6; ++i) base.gallery.push_back({random_unit(rng, 5), i % 2});
  std::vector<RetrievalCase> v1{base};
  RetrievalCase shuffled = base;
  std::reverse(shuffled.gallery.begin(), shuffled.gallery.end());
  std::vector<RetrievalCase> v2{shuffled};
  CHECK(mean_average_precision(v1) == Catch::Approx(mean_average_precision(v2)).margin(1e-15));
  CHECK(map_at_r(v1) == Catch::Approx(map_at_r(v2)).margin(1e-15));
  CHECK(cmc_top_k(v1, 2) == cmc_top_k(v2, 2));
}

TEST_CASE("perfect embedding scores 1.0 everywhere", "[metrics]") {
  std::vector<RetrievalCase> cases;
  for (int q = 0; q < 5; ++q) {
    RetrievalCase c{unit2(0.1 * q), q, 1, {}};
    for (int i = 0; i < 5; ++i) c.gallery.push_back({unit2(0.1 * i + (i == q ? 0.0 : 1.5)), i});
    cases.push_back(std::move(c));
  }
  CHECK(mean_average_precision(cases) == 1.0);
  CHECK(map_at_r(cases) == 1.0);
  CHECK(cmc_top_k(cases, 1) == 1.0);
}

TEST_CASE("evaluate_by_year matches an independent per-year recomputation", "[metrics]") {
  Rng rng(66, "test-metrics");
  std::vector<RetrievalCase> cases;
  for (int year = 1; year <= 3; ++year) {
    for (int q = 0; q < 6; ++q) {
      RetrievalCase c{random_unit(rng, 4), q % 4, year, {}};
      for (int i = 0; i < 5; ++i) c.gallery.push_back({random_unit(rng, 4), i % 4});
      cases.push_back(std::move(c));
    }
  }
  const EvalReport rep = evaluate_by_year(cases);
  REQUIRE(rep.rows.size() == 4);  // years 1..3 + pooled

  // oracle: regroup and recompute from the rankings
  for (const YearMetrics& row : rep.rows) {
    long double map_sum = 0.0L;
    long double map_r_sum = 0.0L;
    long double cmc_sum = 0.0L;
    std::size_t n = 0;
    for (const RetrievalCase& c : cases) {
      if (row.year >= 0 && c.query_year != row.year) continue;
      const BruteScores s = brute_force_scores(c);
      map_sum += s.ap;
      map_r_sum += s.ap_at_r;
      cmc_sum += s.hit1 ? 1.0L : 0.0L;
      ++n;
    }
    REQUIRE(row.n_queries == n);
    CHECK(std::abs(row.map - static_cast<double>(map_sum) / n) <= 1e-12);
    CHECK(std::abs(row.map_at_r - static_cast<double>(map_r_sum) / n) <= 1e-12);
    CHECK(std::abs(row.cmc1 - static_cast<double>(cmc_sum) / n) <= 1e-12);
  }
}

TEST_CASE("evaluate_by_year groups and pools", "[metrics]") {
  Rng rng(64, "test-metrics");
  std::vector<RetrievalCase> cases;
  // one year group only
  for (int q = 0; q < 4; ++q) {
    RetrievalCase c{random_unit(rng, 3), q, 1, {}};
    for (int i = 0; i < 4; ++i) c.gallery.push_back({random_unit(rng, 3), i});
    cases.push_back(std::move(c));
  }
  const EvalReport rep = evaluate_by_year(cases);
  REQUIRE(rep.rows.size() == 2);  // year 1 + pooled
  CHECK(rep.rows[0].year == 1);
  CHECK(rep.rows[1].year == -1);
  CHECK(rep.rows[0].map == rep.rows[1].map);
  CHECK(rep.rows[0].n_queries == 4);

  // a query with no relevant item is excluded and counted
  std::vector<RetrievalCase> with_orphan = cases;
  RetrievalCase orphan{random_unit(rng, 3), 99, 2, {}};
  for (int i = 0; i < 4; ++i) orphan.gallery.push_back({random_unit(rng, 3), i});
  with_orphan.push_back(orphan);
  const EvalReport rep2 = evaluate_by_year(with_orphan);
  CHECK(rep2.excluded_queries == 1);
  REQUIRE(rep2.rows.size() == 2);  // year-2 group disappears entirely
  CHECK(rep2.rows[0].year == 1);

  CHECK_THROWS_AS(evaluate_by_year(std::vector<RetrievalCase>{}), EmptyInputError);
}
