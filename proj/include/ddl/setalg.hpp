#pragma once

// Exact set algebra over latent index sets: disentanglement pair clauses,
// atomic Venn regions, region certificates and the sufficient-diversity check.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ddl/bitset64.hpp"

namespace ddl {

/// Boolean d_x x d_z dependency structure; row i holds the latents observed
/// variable i depends on.
class SupportMatrix {
 public:
  /// Validating constructor: every row and every column must be nonzero.
  SupportMatrix(std::size_t d_x, std::size_t d_z, std::vector<IndexSet> rows);

  /// Skips the row/column coverage check. Used for supports read off a learned
  /// decoder, where a collapsed latent leaves an empty column.
  static SupportMatrix relaxed(std::size_t d_x, std::size_t d_z, std::vector<IndexSet> rows);

  static SupportMatrix dense(std::size_t d_x, std::size_t d_z);
  static SupportMatrix identity(std::size_t d);

  std::size_t d_x() const { return d_x_; }
  std::size_t d_z() const { return d_z_; }
  const std::vector<IndexSet>& rows() const { return rows_; }
  const IndexSet& row(std::size_t i) const { return rows_.at(i); }
  bool at(std::size_t i, std::size_t j) const { return rows_.at(i).contains(j); }
  ObsSet column(std::size_t j) const;
  std::size_t nnz() const;

  /// True when every row and column is nonzero.
  bool covers_all() const;

  SupportMatrix permute_columns(const std::vector<std::size_t>& perm) const;

  /// Header "dx dz" then one '0'/'1' line per observed variable.
  std::string to_text() const;
  static SupportMatrix from_text(std::string_view text);

  friend bool operator==(const SupportMatrix&, const SupportMatrix&) = default;

 private:
  SupportMatrix() = default;
  std::size_t d_x_{0};
  std::size_t d_z_{0};
  std::vector<IndexSet> rows_;
};

/// Latents influencing any observed variable in `obs`.
IndexSet index_set(const SupportMatrix& support, ObsSet obs);

enum class Clause {
  Intersection,
  SymmetricDifference,
  Complement,
  ObjectCentric,
  IndividualCentric,
  SharedCentric,
};

std::string_view clause_name(Clause c);
Clause clause_from_name(std::string_view name);

struct LatentPair {
  std::size_t i{0};
  std::size_t j{0};
  friend auto operator<=>(const LatentPair&, const LatentPair&) = default;
};

struct TaggedPair {
  std::size_t i{0};
  std::size_t j{0};
  Clause clause{Clause::Intersection};
  friend auto operator<=>(const TaggedPair&, const TaggedPair&) = default;
  LatentPair pair() const { return {i, j}; }
};

/// Pairs (i, j) such that Z_i may not be a function of the estimate matched
/// to Z_j, each tagged with the clause that produced it. A pair may appear
/// under several clauses.
class ForbiddenPairSet {
 public:
  void add(std::size_t i, std::size_t j, Clause c) { pairs_.insert({i, j, c}); }
  const std::set<TaggedPair>& tagged() const { return pairs_; }
  std::set<LatentPair> untagged() const;
  std::set<LatentPair> with_clause(Clause c) const;
  bool contains(LatentPair p, Clause c) const { return pairs_.count({p.i, p.j, c}) != 0; }
  bool empty() const { return pairs_.empty(); }
  std::size_t size() const { return pairs_.size(); }

 private:
  std::set<TaggedPair> pairs_;
};

/// Intersection / symmetric-difference / complement clauses.
ForbiddenPairSet forbidden_pairs_defn4(IndexSet ik, IndexSet iv);

/// Object-centric / individual-centric / shared-centric clauses.
ForbiddenPairSet derived_pairs_prop1(IndexSet ik, IndexSet iv);

struct AtomicRegion {
  std::vector<bool> signature;  // membership per family set
  IndexSet members;

  /// The region of latents outside every set of the family.
  bool outside() const;
  friend bool operator==(const AtomicRegion&, const AtomicRegion&) = default;
};

/// Intersection of sets where `signature` is true minus the union of the rest.
IndexSet evaluate_signature(const std::vector<IndexSet>& family, const std::vector<bool>& signature,
                            std::size_t d_z);

/// All nonempty membership classes of [d_z], ordered by smallest member.
/// The all-false class is included when nonempty.
std::vector<AtomicRegion> atomic_regions(const std::vector<IndexSet>& family, std::size_t d_z);

struct CertificateStep {
  ObsSet k;
  ObsSet v;
  Clause clause{Clause::SharedCentric};
  std::vector<LatentPair> covered;
};

struct Certificate {
  AtomicRegion region;
  std::vector<CertificateStep> steps;
};

struct CertificateFailure {
  AtomicRegion region;
  std::vector<LatentPair> uncovered;
};

using CertifyResult = std::variant<Certificate, CertificateFailure>;

/// Every (i in region, j outside region) pair must be covered by some
/// derived_pairs_prop1 clause of a pair of observed-variable unions (K, V),
/// each of size <= max_union. Greedy cover over candidates ordered by
/// |K| + |V| then lexicographically; redundant steps are pruned afterwards.
/// `family[k]` is the latent index set of observed variable k.
CertifyResult certify_region(const AtomicRegion& region, const std::vector<IndexSet>& family,
                             std::size_t d_z, std::size_t max_union);
CertifyResult certify_region(const AtomicRegion& region, const SupportMatrix& support,
                             std::size_t max_union);

/// Independent re-check: coverage of all external pairs, and every listed
/// pair recomputed from derived_pairs_prop1 under the named clause.
bool verify_certificate(const Certificate& cert, const std::vector<IndexSet>& family, std::size_t d_z);

enum class DiversityClause { None = 0, Union = 1, Intersection = 2, Singleton = 3 };

struct DiversityVerdict {
  std::size_t latent{0};
  bool satisfied{false};
  DiversityClause clause{DiversityClause::None};
  ObsSet witness;
  std::optional<std::size_t> distinguished;
};

struct DiversitySearch {
  std::size_t exhaustive_limit{12};  // enumerate all subsets when d_x <= this
  std::size_t max_union{4};          // otherwise subsets up to this size
};

/// Set produced by a diversity clause on subset `a` with distinguished `k`;
/// nullopt when the clause's coverage requirement ([d_z] = union of A) fails.
std::optional<IndexSet> diversity_clause_set(const std::vector<IndexSet>& family, std::size_t d_z,
                                             DiversityClause clause, ObsSet a,
                                             std::optional<std::size_t> k);

/// Clause order per latent: 3, then 1, then 2.
std::vector<DiversityVerdict> check_sufficient_diversity(const SupportMatrix& support,
                                                         const DiversitySearch& search = {});

bool element_identifiability_predicted(const SupportMatrix& support,
                                       const DiversitySearch& search = {});

}  // namespace ddl
