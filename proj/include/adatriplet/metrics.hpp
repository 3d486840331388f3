#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "adatriplet/core.hpp"
#include "adatriplet/errors.hpp"

namespace adatriplet {

struct GalleryItem {
  UnitVector embedding;
  int subject_id;
};

struct RetrievalCase {
  UnitVector query;
  int query_subject;
  int query_year;
  std::vector<GalleryItem> gallery;
};

// Gallery indices by descending cosine similarity to the query; ties broken
// by ascending gallery index so rankings are reproducible.
inline std::vector<int> rank_gallery(const RetrievalCase& c) {
  if (c.gallery.empty()) throw EmptyInputError("rank_gallery: empty gallery");
  std::vector<double> sims(c.gallery.size());
  for (std::size_t i = 0; i < c.gallery.size(); ++i)
    sims[i] = cosine_sim(c.query, c.gallery[i].embedding);
  std::vector<int> order(c.gallery.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    if (sims[i] != sims[j]) return sims[i] > sims[j];
    return i < j;
  });
  return order;
}

namespace detail {

// Per-case scores; score_case returns nullopt when the case has no relevant
// item, and such cases are excluded from aggregation.
struct CaseScores {
  std::size_t relevant = 0;
  double ap = 0.0;
  double ap_at_r = 0.0;
  std::vector<bool> rel_in_rank_order;
};

inline std::optional<CaseScores> score_case(const RetrievalCase& c) {
  const std::vector<int> order = rank_gallery(c);
  CaseScores s;
  s.rel_in_rank_order.reserve(order.size());
  for (int idx : order) {
    const bool rel = c.gallery[idx].subject_id == c.query_subject;
    s.rel_in_rank_order.push_back(rel);
    if (rel) ++s.relevant;
  }
  if (s.relevant == 0) return std::nullopt;

  std::size_t hits = 0;
  double ap_sum = 0.0;
  double ap_at_r_sum = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (!s.rel_in_rank_order[i]) continue;
    ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(i + 1);
    ap_sum += precision;
    if (i + 1 <= s.relevant) ap_at_r_sum += precision;
  }
  s.ap = ap_sum / static_cast<double>(s.relevant);
  s.ap_at_r = ap_at_r_sum / static_cast<double>(s.relevant);
  return s;
}

inline bool hit_top_k(const CaseScores& s, int k) {
  const int limit = std::min<int>(k, static_cast<int>(s.rel_in_rank_order.size()));
  for (int i = 0; i < limit; ++i)
    if (s.rel_in_rank_order[i]) return true;
  return false;
}

}  // namespace detail

// Fraction of cases whose top-k ranked gallery contains a same-subject item.
// Cases without any relevant gallery item are excluded.
inline double cmc_top_k(std::span<const RetrievalCase> cases, int k) {
  if (cases.empty()) throw EmptyInputError("cmc_top_k: no cases");
  if (k < 1) throw std::invalid_argument("cmc_top_k: k must be >= 1");
  std::size_t scored = 0;
  std::size_t hits = 0;
  for (const RetrievalCase& c : cases) {
    const auto s = detail::score_case(c);
    if (!s) continue;
    ++scored;
    if (detail::hit_top_k(*s, k)) ++hits;
  }
  if (scored == 0) throw NoRelevantItemsError("cmc_top_k: no case has a relevant item");
  return static_cast<double>(hits) / static_cast<double>(scored);
}

inline double mean_average_precision(std::span<const RetrievalCase> cases) {
  if (cases.empty()) throw EmptyInputError("mean_average_precision: no cases");
  std::size_t scored = 0;
  double sum = 0.0;
  for (const RetrievalCase& c : cases) {
    const auto s = detail::score_case(c);
    if (!s) continue;
    ++scored;
    sum += s->ap;
  }
  if (scored == 0)
    throw NoRelevantItemsError("mean_average_precision: no case has a relevant item");
  return sum / static_cast<double>(scored);
}

// mAP@R: average precision truncated at R, the case's number of relevant
// gallery items.
inline double map_at_r(std::span<const RetrievalCase> cases) {
  if (cases.empty()) throw EmptyInputError("map_at_r: no cases");
  std::size_t scored = 0;
  double sum = 0.0;
  for (const RetrievalCase& c : cases) {
    const auto s = detail::score_case(c);
    if (!s) continue;
    ++scored;
    sum += s->ap_at_r;
  }
  if (scored == 0) throw NoRelevantItemsError("map_at_r: no case has a relevant item");
  return sum / static_cast<double>(scored);
}

struct YearMetrics {
  int year = -1;  // -1 marks the pooled "All" row
  std::size_t n_queries = 0;
  double map = 0.0;
  double map_at_r = 0.0;
  double cmc1 = 0.0;
};

struct EvalReport {
  std::vector<YearMetrics> rows;       // per year ascending, then the pooled row
  std::size_t excluded_queries = 0;    // cases without any relevant gallery item
};

// Metrics per query-year group plus a pooled "All" row. Year groups whose
// cases are all excluded produce no row.
inline EvalReport evaluate_by_year(std::span<const RetrievalCase> queries) {
  if (queries.empty()) throw EmptyInputError("evaluate_by_year: no queries");

  struct Scored {
    int year;
    detail::CaseScores scores;
  };
  std::vector<Scored> scored;
  scored.reserve(queries.size());
  EvalReport report;
  for (const RetrievalCase& c : queries) {
    auto s = detail::score_case(c);
    if (!s) {
      ++report.excluded_queries;
      continue;
    }
    scored.push_back({c.query_year, std::move(*s)});
  }
  if (scored.empty()) throw NoRelevantItemsError("evaluate_by_year: no scoreable query");

  std::map<int, std::vector<const detail::CaseScores*>> by_year;
  for (const Scored& s : scored) by_year[s.year].push_back(&s.scores);

  const auto aggregate = [](const std::vector<const detail::CaseScores*>& group, int year) {
    YearMetrics m;
    m.year = year;
    m.n_queries = group.size();
    double map_sum = 0.0;
    double map_r_sum = 0.0;
    std::size_t hits = 0;
    for (const detail::CaseScores* s : group) {
      map_sum += s->ap;
      map_r_sum += s->ap_at_r;
      if (detail::hit_top_k(*s, 1)) ++hits;
    }
    const double n = static_cast<double>(group.size());
    m.map = map_sum / n;
    m.map_at_r = map_r_sum / n;
    m.cmc1 = static_cast<double>(hits) / n;
    return m;
  };

  std::vector<const detail::CaseScores*> all;
  all.reserve(scored.size());
  for (const auto& [year, group] : by_year) {
    report.rows.push_back(aggregate(group, year));
    all.insert(all.end(), group.begin(), group.end());
  }
  report.rows.push_back(aggregate(all, -1));
  return report;
}

}  // namespace adatriplet
