#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "ddl/errors.hpp"
#include "ddl/setalg.hpp"
#include "setalg_oracle.hpp"

using namespace ddl;

namespace {

using Pairs = std::set<LatentPair>;

Pairs cross(IndexSet a, IndexSet b) {
  Pairs out;
  for (auto i : a.members())
    for (auto j : b.members())
      if (i != j) out.insert({i, j});
  return out;
}

Pairs unite(const Pairs& a, const Pairs& b) {
  Pairs out = a;
  out.insert(b.begin(), b.end());
  return out;
}

}  // namespace

TEST_CASE("index_set reads rows and unions them") {
  SupportMatrix s(2, 3, {IndexSet{0, 1}, IndexSet{1, 2}});
  CHECK(index_set(s, ObsSet{0}) == IndexSet{0, 1});
  CHECK(index_set(s, ObsSet{0, 1}) == IndexSet{0, 1, 2});
  CHECK(index_set(s, ObsSet{}).empty());
  CHECK_THROWS_AS(index_set(s, ObsSet{2}), std::invalid_argument);
}

TEST_CASE("SupportMatrix validation and text format") {
  CHECK_THROWS_AS(SupportMatrix(2, 2, {IndexSet{0}, IndexSet{}}), std::invalid_argument);
  CHECK_THROWS_AS(SupportMatrix(2, 2, {IndexSet{0}, IndexSet{0}}), std::invalid_argument);
  CHECK_NOTHROW(SupportMatrix::relaxed(2, 2, {IndexSet{0}, IndexSet{0}}));

  const auto dense = SupportMatrix::dense(3, 3);
  CHECK(dense.to_text() == "3 3\n111\n111\n111\n");
  const auto id = SupportMatrix::identity(4);
  CHECK(SupportMatrix::from_text(id.to_text()) == id);
  CHECK(id.nnz() == 4);
  CHECK(id.column(2) == ObsSet{2});

  CHECK_THROWS_AS(SupportMatrix::from_text(""), FormatError);
  CHECK_THROWS_AS(SupportMatrix::from_text("2 2\n10\n"), FormatError);
  CHECK_THROWS_AS(SupportMatrix::from_text("2 2\n10\n0x\n"), FormatError);
  CHECK_THROWS_AS(SupportMatrix::from_text("2 2\n10\n00\n"), FormatError);

  const auto p = SupportMatrix(2, 2, {IndexSet{0}, IndexSet{0, 1}}).permute_columns({1, 0});
  CHECK(p.row(0) == IndexSet{1});
}

TEST_CASE("forbidden_pairs_defn4 clause examples") {
  const auto f = forbidden_pairs_defn4(IndexSet{0, 1}, IndexSet{1, 2});
  CHECK(f.with_clause(Clause::Intersection) == Pairs{{1, 0}, {1, 2}});
  CHECK(f.with_clause(Clause::SymmetricDifference) == Pairs{{0, 1}, {2, 1}});
  CHECK(f.with_clause(Clause::Complement) == Pairs{{0, 2}, {2, 0}});

  CHECK(forbidden_pairs_defn4(IndexSet{0, 1}, IndexSet{0, 1}).empty());

  const auto disjoint = forbidden_pairs_defn4(IndexSet{0}, IndexSet{1});
  CHECK(disjoint.untagged() == Pairs{{0, 1}, {1, 0}});
  CHECK(disjoint.with_clause(Clause::Complement).size() == 2);
}

TEST_CASE("derived_pairs_prop1 clause examples") {
  const auto p = derived_pairs_prop1(IndexSet{0, 1}, IndexSet{1, 2});
  const auto obj = p.with_clause(Clause::ObjectCentric);
  for (LatentPair q : {LatentPair{0, 2}, LatentPair{1, 2}, LatentPair{1, 0}, LatentPair{2, 0}}) CHECK(obj.count(q) == 1);
  const auto ind = p.with_clause(Clause::IndividualCentric);
  for (LatentPair q : {LatentPair{0, 1}, LatentPair{0, 2}, LatentPair{2, 0}, LatentPair{2, 1}}) CHECK(ind.count(q) == 1);

  // I_K a subset of I_V: only pairs pointing into I_V \ I_K or out of it.
  const auto sub = derived_pairs_prop1(IndexSet{0}, IndexSet{0, 1});
  CHECK(sub.with_clause(Clause::ObjectCentric) == Pairs{{0, 1}});
  CHECK(sub.with_clause(Clause::IndividualCentric) == Pairs{{1, 0}});
}

TEST_CASE("clause names round-trip") {
  for (auto c : {Clause::Intersection, Clause::SymmetricDifference, Clause::Complement, Clause::ObjectCentric,
                 Clause::IndividualCentric, Clause::SharedCentric}) {
    CHECK(clause_from_name(clause_name(c)) == c);
  }
  CHECK_THROWS(clause_from_name("nonsense"));
}

TEST_CASE("derived clauses are unions of forbidden-pair clauses, exhaustively for d_z <= 5") {
  for (std::size_t d = 1; d <= 5; ++d) {
    const std::uint64_t n = std::uint64_t{1} << d;
    for (std::uint64_t a = 0; a < n; ++a) {
      for (std::uint64_t b = 0; b < n; ++b) {
        const auto ik = IndexSet::from_bits(a), iv = IndexSet::from_bits(b);
        const auto d4 = forbidden_pairs_defn4(ik, iv);
        const auto p1 = derived_pairs_prop1(ik, iv);
        const auto in = d4.with_clause(Clause::Intersection);
        const auto sd = d4.with_clause(Clause::SymmetricDifference);
        const auto co = d4.with_clause(Clause::Complement);
        REQUIRE(p1.with_clause(Clause::ObjectCentric) == unite(in, co));
        REQUIRE(p1.with_clause(Clause::IndividualCentric) == unite(sd, co));
        REQUIRE(p1.with_clause(Clause::SharedCentric) == in);
        const auto all4 = d4.untagged();
        const auto all1 = p1.untagged();
        REQUIRE(std::includes(all1.begin(), all1.end(), all4.begin(), all4.end()));
      }
    }
  }
}

TEST_CASE("forbidden-pair symmetry and derived clauses on random pairs up to d_z = 8") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 1 + rng() % 8;
    const auto ik = IndexSet::from_bits(rng() & ((std::uint64_t{1} << d) - 1));
    const auto iv = IndexSet::from_bits(rng() & ((std::uint64_t{1} << d) - 1));
    const auto f = forbidden_pairs_defn4(ik, iv);
    const auto both = ik & iv, sym = ik ^ iv;
    CHECK(f.with_clause(Clause::Intersection) == cross(both, sym));
    CHECK(f.with_clause(Clause::SymmetricDifference) == cross(sym, both));
    for (auto p : f.with_clause(Clause::Complement)) CHECK(f.contains({p.j, p.i}, Clause::Complement));
    for (auto p : f.with_clause(Clause::Intersection)) CHECK(f.contains({p.j, p.i}, Clause::SymmetricDifference));
    for (const auto& p : f.tagged()) CHECK(p.i != p.j);
    const auto obj = unite(cross(ik, iv - ik), cross(iv, ik - iv));
    CHECK(derived_pairs_prop1(ik, iv).with_clause(Clause::ObjectCentric) == obj);
  }
}

TEST_CASE("atomic_regions examples") {
  const auto fig3 = setoracle::three_set_family();
  const auto regions = atomic_regions(fig3, 7);
  REQUIRE(regions.size() == 7);
  for (std::size_t r = 0; r < 7; ++r) CHECK(regions[r].members == IndexSet{r});
  std::set<std::vector<bool>> signatures;
  for (const auto& r : regions) signatures.insert(r.signature);
  CHECK(signatures.size() == 7);

  const auto single = atomic_regions({IndexSet{0, 1}}, 3);
  REQUIRE(single.size() == 2);
  CHECK(single[0].members == IndexSet{0, 1});
  CHECK(single[1].members == IndexSet{2});
  CHECK(single[1].outside());
  CHECK_FALSE(single[0].outside());

  const std::vector<IndexSet> disjoint{IndexSet{0, 3}, IndexSet{1}, IndexSet{2, 4}};
  const auto dr = atomic_regions(disjoint, 5);
  REQUIRE(dr.size() == 3);
  for (const auto& r : dr) CHECK(std::find(disjoint.begin(), disjoint.end(), r.members) != disjoint.end());

  CHECK_THROWS_AS(atomic_regions({}, 3), std::invalid_argument);
  CHECK_THROWS_AS(atomic_regions({IndexSet{0}}, 0), std::invalid_argument);
}

TEST_CASE("atomic_regions partition and signature soundness on 1000 random families") {
  const auto t = setoracle::check_partitions(1000, 7);
  CHECK(t.families == 1000);
  CHECK(t.failures == 0);
}

TEST_CASE("three-set family: every region certified and re-verified") {
  const auto t = setoracle::certify_three_set_family();
  CHECK(t.regions == 7);
  CHECK(t.certified == 7);
  CHECK(t.verified == 7);
  CHECK(t.steps_recomputed == 7);
}

TEST_CASE("worked example steps for (I1 and I2) minus I3 verify") {
  const auto fig3 = setoracle::three_set_family();
  const auto regions = atomic_regions(fig3, 7);
  const auto it = std::find_if(regions.begin(), regions.end(),
                               [](const AtomicRegion& r) { return r.signature == std::vector<bool>{true, true, false}; });
  REQUIRE(it != regions.end());
  CHECK(it->members == IndexSet{1});

  Certificate cert{*it, {}};
  cert.steps.push_back({ObsSet{0}, ObsSet{1}, Clause::SharedCentric, {{1, 0}, {1, 3}, {1, 4}, {1, 5}}});
  cert.steps.push_back({ObsSet{0, 1}, ObsSet{2}, Clause::IndividualCentric, {{1, 2}, {1, 3}, {1, 5}, {1, 6}}});
  CHECK(verify_certificate(cert, fig3, 7));

  // Dropping the second step leaves (1, 2) and (1, 6) uncovered.
  Certificate partial = cert;
  partial.steps.pop_back();
  CHECK_FALSE(verify_certificate(partial, fig3, 7));

  // A pair not produced by the named clause is rejected.
  Certificate wrong = cert;
  wrong.steps[0].clause = Clause::ObjectCentric;
  wrong.steps[0].covered.push_back({1, 6});
  CHECK_FALSE(verify_certificate(wrong, fig3, 7));
}

TEST_CASE("certify_region trivial and failing cases") {
  const std::vector<IndexSet> whole{IndexSet{0, 1, 2}};
  const auto r = atomic_regions(whole, 3);
  REQUIRE(r.size() == 1);
  const auto ok = certify_region(r[0], whole, 3, 2);
  REQUIRE(std::holds_alternative<Certificate>(ok));
  CHECK(std::get<Certificate>(ok).steps.empty());

  const std::vector<IndexSet> partial{IndexSet{0, 1}};
  const auto regions = atomic_regions(partial, 3);
  const auto fail = certify_region(regions[0], partial, 3, 4);
  REQUIRE(std::holds_alternative<CertificateFailure>(fail));
  const auto& uncovered = std::get<CertificateFailure>(fail).uncovered;
  CHECK(uncovered == std::vector<LatentPair>{{0, 2}, {1, 2}});
}

TEST_CASE("sufficient diversity examples") {
  SupportMatrix pairs(3, 3, {IndexSet{0, 1}, IndexSet{1, 2}, IndexSet{0, 2}});
  for (const auto& v : check_sufficient_diversity(pairs)) {
    CHECK(v.satisfied);
    CHECK(v.clause == DiversityClause::Singleton);
  }
  CHECK(element_identifiability_predicted(pairs));

  for (const auto& v : check_sufficient_diversity(SupportMatrix::identity(4))) {
    CHECK(v.clause == DiversityClause::Singleton);
    CHECK(v.witness.size() == 1);
  }
  CHECK(element_identifiability_predicted(SupportMatrix::identity(4)));

  for (const auto& v : check_sufficient_diversity(SupportMatrix::dense(3, 3))) {
    CHECK_FALSE(v.satisfied);
    CHECK(v.clause == DiversityClause::None);
  }
  CHECK_FALSE(element_identifiability_predicted(SupportMatrix::dense(3, 3)));
}

TEST_CASE("diversity checker equals brute force on 1000 random supports") {
  const auto t = setoracle::compare_diversity(1000, 2024);
  CHECK(t.supports == 1000);
  CHECK(t.verdicts > 1000);
  CHECK(t.disagreements == 0);
  CHECK(t.bad_witnesses == 0);
}
