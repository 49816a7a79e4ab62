#pragma once

// Independent references for the set-algebra checks: plain subset
// enumeration for diversity, membership re-evaluation for atomic regions,
// and clause recomputation for certificates.

#include <cstdint>
#include <random>
#include <vector>

#include "ddl/setalg.hpp"

namespace setoracle {

using ddl::DiversityClause;
using ddl::IndexSet;
using ddl::SupportMatrix;

inline SupportMatrix random_support(std::mt19937_64& rng, std::size_t d_x, std::size_t d_z, double p) {
  std::bernoulli_distribution coin(p);
  while (true) {
    std::vector<IndexSet> rows(d_x);
    for (auto& r : rows)
      for (std::size_t j = 0; j < d_z; ++j)
        if (coin(rng)) r.insert(j);
    if (SupportMatrix::relaxed(d_x, d_z, rows).covers_all()) return SupportMatrix(d_x, d_z, rows);
  }
}

/// First satisfied clause in the order 3, 1, 2 for `latent`, by enumerating
/// every subset A of rows and every k in A.
inline DiversityClause brute_force_clause(const SupportMatrix& s, std::size_t latent) {
  const std::size_t d_x = s.d_x();
  const IndexSet universe = IndexSet::full(s.d_z());
  const IndexSet target{latent};
  bool c1 = false, c2 = false, c3 = false;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << d_x); ++mask) {
    std::vector<std::size_t> a;
    for (std::size_t i = 0; i < d_x; ++i)
      if ((mask >> i) & 1U) a.push_back(i);
    IndexSet inter = universe, uni;
    for (auto i : a) {
      inter = inter & s.row(i);
      uni = uni | s.row(i);
    }
    if (inter == target) c3 = true;
    if (uni != universe) continue;
    for (auto k : a) {
      IndexSet rest_union, rest_inter = universe;
      for (auto i : a) {
        if (i == k) continue;
        rest_union = rest_union | s.row(i);
        rest_inter = rest_inter & s.row(i);
      }
      if ((s.row(k) - rest_union) == target) c1 = true;
      if ((rest_inter - s.row(k)) == target) c2 = true;
    }
  }
  if (c3) return DiversityClause::Singleton;
  if (c1) return DiversityClause::Union;
  if (c2) return DiversityClause::Intersection;
  return DiversityClause::None;
}

struct DiversityTally {
  std::size_t supports{0};
  std::size_t verdicts{0};
  std::size_t disagreements{0};
  std::size_t bad_witnesses{0};
};

/// check_sufficient_diversity against enumeration on random supports with
/// d_z <= d_x <= 6; each reported witness is re-evaluated.
inline DiversityTally compare_diversity(std::size_t count, std::uint64_t seed) {
  DiversityTally t;
  std::mt19937_64 rng(seed);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t d_z = 1 + rng() % 6;
    const std::size_t d_x = d_z + rng() % (7 - d_z);
    const double p = 0.2 + 0.6 * static_cast<double>(rng() % 1000) / 1000.0;
    const auto s = random_support(rng, d_x, d_z, p);
    for (const auto& v : ddl::check_sufficient_diversity(s)) {
      ++t.verdicts;
      const auto expected = brute_force_clause(s, v.latent);
      if (v.clause != expected || v.satisfied != (expected != DiversityClause::None)) ++t.disagreements;
      if (v.satisfied) {
        const auto set = ddl::diversity_clause_set(s.rows(), d_z, v.clause, v.witness, v.distinguished);
        if (!set || *set != IndexSet{v.latent}) ++t.bad_witnesses;
      }
    }
    ++t.supports;
  }
  return t;
}

struct PartitionTally {
  std::size_t families{0};
  std::size_t failures{0};
};

/// Regions are nonempty, disjoint, cover [d_z], and each one's members have
/// exactly its signature.
inline PartitionTally check_partitions(std::size_t count, std::uint64_t seed) {
  PartitionTally t;
  std::mt19937_64 rng(seed);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t d = 1 + rng() % 16;
    const std::size_t m = 1 + rng() % 5;
    std::vector<IndexSet> family;
    for (std::size_t k = 0; k < m; ++k) family.push_back(IndexSet::from_bits(rng() & ((std::uint64_t{1} << d) - 1)));
    bool ok = true;
    IndexSet seen;
    for (const auto& r : ddl::atomic_regions(family, d)) {
      if (r.members.empty() || !(seen & r.members).empty()) ok = false;
      seen = seen | r.members;
      if (ddl::evaluate_signature(family, r.signature, d) != r.members) ok = false;
      for (auto i : r.members.members())
        for (std::size_t k = 0; k < m; ++k)
          if (family[k].contains(i) != r.signature[k]) ok = false;
    }
    if (seen != IndexSet::full(d)) ok = false;
    ++t.families;
    if (!ok) ++t.failures;
  }
  return t;
}

/// I1 = {0,1,2,3}, I2 = {1,2,4,5}, I3 = {2,3,5,6} over seven latents: one
/// latent in every Venn cell.
inline std::vector<IndexSet> three_set_family() { return {IndexSet{0, 1, 2, 3}, IndexSet{1, 2, 4, 5}, IndexSet{2, 3, 5, 6}}; }

struct CertificateTally {
  std::size_t regions{0};
  std::size_t certified{0};
  std::size_t verified{0};
  std::size_t steps_recomputed{0};
};

/// Certifies every region of the three-set family, re-verifies each
/// certificate and recomputes each listed pair from derived_pairs_prop1.
inline CertificateTally certify_three_set_family(std::size_t max_union = 2) {
  CertificateTally t;
  const auto family = three_set_family();
  auto union_of = [&](ddl::ObsSet obs) {
    IndexSet u;
    for (auto k : obs.members()) u = u | family[k];
    return u;
  };
  for (const auto& region : ddl::atomic_regions(family, 7)) {
    ++t.regions;
    const auto res = ddl::certify_region(region, family, 7, max_union);
    if (!std::holds_alternative<ddl::Certificate>(res)) continue;
    ++t.certified;
    const auto& cert = std::get<ddl::Certificate>(res);
    if (ddl::verify_certificate(cert, family, 7)) ++t.verified;
    bool steps_ok = true;
    for (const auto& step : cert.steps) {
      const auto allowed = ddl::derived_pairs_prop1(union_of(step.k), union_of(step.v));
      for (auto p : step.covered)
        if (!allowed.contains(p, step.clause)) steps_ok = false;
    }
    if (steps_ok) ++t.steps_recomputed;
  }
  return t;
}

}  // namespace setoracle
