#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "adatriplet/core.hpp"
#include "adatriplet/errors.hpp"
#include "adatriplet/rng.hpp"

namespace adatriplet {

// One sample of a longitudinal dataset: input vector, subject identity, and
// follow-up year (0 = baseline visit).
struct LabeledSample {
  RawVector input;
  int subject_id;
  int year;
};

// Indices into a dataset plus the parallel subject labels.
struct BatchPlan {
  std::vector<int> indices;
  std::vector<int> labels;
};

struct Triplet {
  int a, p, n;  // anchor, positive, negative positions within the batch
};

// M-per-class sampling: batch_size/per_subject distinct subjects, per_subject
// samples each. Subjects with fewer samples than per_subject are filled by
// drawing with replacement.
inline BatchPlan sample_batch(const std::vector<LabeledSample>& dataset, int batch_size,
                              int per_subject, Rng& rng) {
  if (per_subject < 1 || batch_size < 1 || batch_size % per_subject != 0)
    throw std::invalid_argument(
        "sample_batch: batch_size must be a positive multiple of per_subject");
  const int groups = batch_size / per_subject;

  std::map<int, std::vector<int>> by_subject;  // subject id -> sample indices
  for (int i = 0; i < static_cast<int>(dataset.size()); ++i)
    by_subject[dataset[i].subject_id].push_back(i);
  if (static_cast<int>(by_subject.size()) < groups)
    throw InsufficientSubjectsError("sample_batch: need " + std::to_string(groups) +
                                    " subjects, dataset has " +
                                    std::to_string(by_subject.size()));

  std::vector<int> subjects;
  subjects.reserve(by_subject.size());
  for (const auto& [s, _] : by_subject) subjects.push_back(s);
  rng.partial_shuffle(subjects, static_cast<std::size_t>(groups));

  BatchPlan plan;
  plan.indices.reserve(batch_size);
  plan.labels.reserve(batch_size);
  for (int g = 0; g < groups; ++g) {
    const int subject = subjects[g];
    const std::vector<int>& pool = by_subject[subject];
    if (static_cast<int>(pool.size()) >= per_subject) {
      std::vector<int> picks = pool;
      rng.partial_shuffle(picks, static_cast<std::size_t>(per_subject));
      for (int k = 0; k < per_subject; ++k) plan.indices.push_back(picks[k]);
    } else {
      for (int k = 0; k < per_subject; ++k) plan.indices.push_back(pool[rng.index(pool.size())]);
    }
    for (int k = 0; k < per_subject; ++k) plan.labels.push_back(subject);
  }
  return plan;
}

// All (a, p, n) with labels[a] == labels[p], a != p, labels[n] != labels[a],
// in lexicographic (a, p, n) order.
inline std::vector<Triplet> enumerate_triplets(const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  std::size_t expected = 0;
  {
    std::map<int, std::size_t> counts;
    for (int l : labels) ++counts[l];
    for (const auto& [_, c] : counts) expected += c * (c - 1) * (labels.size() - c);
  }
  std::vector<Triplet> out;
  out.reserve(expected);
  for (int a = 0; a < n; ++a) {
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int neg = 0; neg < n; ++neg) {
        if (labels[neg] == labels[a]) continue;
        out.push_back({a, p, neg});
      }
    }
  }
  return out;
}

// Uniform subsample without replacement; cap == 0 disables capping.
inline std::vector<Triplet> subsample_triplets(std::vector<Triplet> triplets, std::size_t cap,
                                               Rng& rng) {
  if (cap == 0 || triplets.size() <= cap) return triplets;
  rng.partial_shuffle(triplets, cap);
  triplets.resize(cap);
  return triplets;
}

}  // namespace adatriplet
