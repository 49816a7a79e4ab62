#include "ddl/setalg.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ddl/errors.hpp"

namespace ddl {

namespace {

void check_dims(std::size_t d_x, std::size_t d_z) {
  if (d_x == 0 || d_z == 0) throw std::invalid_argument("SupportMatrix: dimensions must be positive");
  if (d_x > kMaxDim || d_z > kMaxDim) throw std::invalid_argument("SupportMatrix: dimensions must be <= 64");
}

void check_range(IndexSet s, std::size_t d_z, const char* what) {
  if (s.extent() > d_z) {
    throw std::invalid_argument(std::string(what) + ": index set " + to_string(s) + " exceeds d_z=" +
                                std::to_string(d_z));
  }
}

IndexSet union_of(const std::vector<IndexSet>& family, ObsSet obs) {
  IndexSet out;
  for (auto k : obs.members()) out |= family[k];
  return out;
}

// A clause is a union of rectangular blocks src x dst.
struct Block {
  IndexSet src;
  IndexSet dst;
};

std::vector<Block> clause_blocks(Clause c, IndexSet ik, IndexSet iv) {
  const IndexSet both = ik & iv;
  const IndexSet sym = ik ^ iv;
  const IndexSet k_only = ik - iv;
  const IndexSet v_only = iv - ik;
  switch (c) {
    case Clause::Intersection: return {{both, sym}};
    case Clause::SymmetricDifference: return {{sym, both}};
    case Clause::Complement: return {{k_only, v_only}, {v_only, k_only}};
    case Clause::ObjectCentric: return {{ik, v_only}, {iv, k_only}};
    case Clause::IndividualCentric: return {{k_only, iv}, {v_only, ik}};
    case Clause::SharedCentric: return {{both, sym}};
  }
  return {};
}

ForbiddenPairSet pairs_for(std::initializer_list<Clause> clauses, IndexSet ik, IndexSet iv) {
  ForbiddenPairSet out;
  for (auto c : clauses) {
    for (const auto& b : clause_blocks(c, ik, iv)) {
      for (auto i : b.src.members()) {
        for (auto j : b.dst.members()) {
          if (i != j) out.add(i, j, c);
        }
      }
    }
  }
  return out;
}

constexpr std::array<Clause, 3> kProp1Clauses{Clause::ObjectCentric, Clause::IndividualCentric,
                                              Clause::SharedCentric};

// Nonempty subsets of {0..n-1} of size <= max_size, ordered by size then
// lexicographically by sorted members.
std::vector<ObsSet> subsets_by_size(std::size_t n, std::size_t max_size) {
  std::vector<ObsSet> out;
  max_size = std::min(max_size, n);
  for (std::size_t size = 1; size <= max_size; ++size) {
    std::vector<std::size_t> idx(size);
    for (std::size_t t = 0; t < size; ++t) idx[t] = t;
    while (true) {
      out.push_back(ObsSet::from_members(idx));
      std::size_t pos = size;
      while (pos > 0 && idx[pos - 1] == n - size + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t t = pos; t < size; ++t) idx[t] = idx[t - 1] + 1;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// SupportMatrix

SupportMatrix::SupportMatrix(std::size_t d_x, std::size_t d_z, std::vector<IndexSet> rows)
    : SupportMatrix(relaxed(d_x, d_z, std::move(rows))) {
  for (std::size_t i = 0; i < d_x_; ++i) {
    if (rows_[i].empty()) {
      throw std::invalid_argument("SupportMatrix: observed variable " + std::to_string(i) +
                                  " depends on no latent");
    }
  }
  for (std::size_t j = 0; j < d_z_; ++j) {
    if (column(j).empty()) {
      throw std::invalid_argument("SupportMatrix: latent " + std::to_string(j) + " influences nothing");
    }
  }
}

SupportMatrix SupportMatrix::relaxed(std::size_t d_x, std::size_t d_z, std::vector<IndexSet> rows) {
  check_dims(d_x, d_z);
  if (rows.size() != d_x) throw std::invalid_argument("SupportMatrix: row count differs from d_x");
  for (const auto& r : rows) check_range(r, d_z, "SupportMatrix");
  SupportMatrix s;
  s.d_x_ = d_x;
  s.d_z_ = d_z;
  s.rows_ = std::move(rows);
  return s;
}

SupportMatrix SupportMatrix::dense(std::size_t d_x, std::size_t d_z) {
  check_dims(d_x, d_z);
  return SupportMatrix(d_x, d_z, std::vector<IndexSet>(d_x, IndexSet::full(d_z)));
}

SupportMatrix SupportMatrix::identity(std::size_t d) {
  check_dims(d, d);
  std::vector<IndexSet> rows(d);
  for (std::size_t i = 0; i < d; ++i) rows[i].insert(i);
  return SupportMatrix(d, d, std::move(rows));
}

ObsSet SupportMatrix::column(std::size_t j) const {
  ObsSet col;
  for (std::size_t i = 0; i < d_x_; ++i) {
    if (rows_[i].contains(j)) col.insert(i);
  }
  return col;
}

std::size_t SupportMatrix::nnz() const {
  std::size_t n = 0;
  for (const auto& r : rows_) n += r.size();
  return n;
}

bool SupportMatrix::covers_all() const {
  IndexSet all;
  for (const auto& r : rows_) {
    if (r.empty()) return false;
    all |= r;
  }
  return all == IndexSet::full(d_z_);
}

SupportMatrix SupportMatrix::permute_columns(const std::vector<std::size_t>& perm) const {
  if (perm.size() != d_z_) throw std::invalid_argument("permute_columns: permutation size mismatch");
  std::vector<IndexSet> rows(d_x_);
  for (std::size_t i = 0; i < d_x_; ++i) {
    for (std::size_t j = 0; j < d_z_; ++j) {
      if (rows_[i].contains(j)) rows[i].insert(perm[j]);
    }
  }
  return relaxed(d_x_, d_z_, std::move(rows));
}

std::string SupportMatrix::to_text() const {
  std::ostringstream os;
  os << d_x_ << ' ' << d_z_ << '\n';
  for (const auto& r : rows_) {
    for (std::size_t j = 0; j < d_z_; ++j) os << (r.contains(j) ? '1' : '0');
    os << '\n';
  }
  return os.str();
}

SupportMatrix SupportMatrix::from_text(std::string_view text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw FormatError("support text: missing \"dx dz\" header");

  std::istringstream header(lines[0]);
  long long dx = -1;
  long long dz = -1;
  std::string extra;
  if (!(header >> dx >> dz) || (header >> extra) || dx <= 0 || dz <= 0 ||
      dx > static_cast<long long>(kMaxDim) || dz > static_cast<long long>(kMaxDim)) {
    throw FormatError("support text: bad header \"" + lines[0] + "\"");
  }
  if (lines.size() != static_cast<std::size_t>(dx) + 1) {
    throw FormatError("support text: expected " + std::to_string(dx) + " rows, found " +
                      std::to_string(lines.size() - 1));
  }
  std::vector<IndexSet> rows(static_cast<std::size_t>(dx));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& line = lines[i + 1];
    if (line.size() != static_cast<std::size_t>(dz)) {
      throw FormatError("support text: row " + std::to_string(i + 1) + " has length " +
                        std::to_string(line.size()) + ", expected " + std::to_string(dz));
    }
    for (std::size_t j = 0; j < line.size(); ++j) {
      if (line[j] == '1') {
        rows[i].insert(j);
      } else if (line[j] != '0') {
        throw FormatError("support text: invalid character in row " + std::to_string(i + 1));
      }
    }
  }
  try {
    return SupportMatrix(static_cast<std::size_t>(dx), static_cast<std::size_t>(dz), std::move(rows));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("support text: ") + e.what());
  }
}

IndexSet index_set(const SupportMatrix& support, ObsSet obs) {
  if (obs.extent() > support.d_x()) {
    throw std::invalid_argument("index_set: observed subset " + to_string(obs) + " exceeds d_x=" +
                                std::to_string(support.d_x()));
  }
  return union_of(support.rows(), obs);
}

// ---------------------------------------------------------------------------
// Pair clauses

std::string_view clause_name(Clause c) {
  switch (c) {
    case Clause::Intersection: return "intersection";
    case Clause::SymmetricDifference: return "symmetric-difference";
    case Clause::Complement: return "complement";
    case Clause::ObjectCentric: return "object-centric";
    case Clause::IndividualCentric: return "individual-centric";
    case Clause::SharedCentric: return "shared-centric";
  }
  return "?";
}

Clause clause_from_name(std::string_view name) {
  for (auto c : {Clause::Intersection, Clause::SymmetricDifference, Clause::Complement,
                 Clause::ObjectCentric, Clause::IndividualCentric, Clause::SharedCentric}) {
    if (clause_name(c) == name) return c;
  }
  throw FormatError("unknown clause name \"" + std::string(name) + "\"");
}

std::set<LatentPair> ForbiddenPairSet::untagged() const {
  std::set<LatentPair> out;
  for (const auto& p : pairs_) out.insert(p.pair());
  return out;
}

std::set<LatentPair> ForbiddenPairSet::with_clause(Clause c) const {
  std::set<LatentPair> out;
  for (const auto& p : pairs_) {
    if (p.clause == c) out.insert(p.pair());
  }
  return out;
}

ForbiddenPairSet forbidden_pairs_defn4(IndexSet ik, IndexSet iv) {
  return pairs_for({Clause::Intersection, Clause::SymmetricDifference, Clause::Complement}, ik, iv);
}

ForbiddenPairSet derived_pairs_prop1(IndexSet ik, IndexSet iv) {
  return pairs_for({Clause::ObjectCentric, Clause::IndividualCentric, Clause::SharedCentric}, ik, iv);
}

// ---------------------------------------------------------------------------
// Atomic regions

bool AtomicRegion::outside() const {
  return std::none_of(signature.begin(), signature.end(), [](bool b) { return b; });
}

IndexSet evaluate_signature(const std::vector<IndexSet>& family, const std::vector<bool>& signature,
                            std::size_t d_z) {
  if (signature.size() != family.size()) throw std::invalid_argument("evaluate_signature: size mismatch");
  IndexSet inside = IndexSet::full(d_z);
  IndexSet excluded;
  for (std::size_t s = 0; s < family.size(); ++s) {
    if (signature[s]) {
      inside &= family[s];
    } else {
      excluded |= family[s];
    }
  }
  return inside - excluded;
}

std::vector<AtomicRegion> atomic_regions(const std::vector<IndexSet>& family, std::size_t d_z) {
  if (family.empty()) throw std::invalid_argument("atomic_regions: empty family");
  if (d_z == 0 || d_z > kMaxDim) throw std::invalid_argument("atomic_regions: d_z must be in [1, 64]");
  for (const auto& s : family) check_range(s, d_z, "atomic_regions");

  // Latents visited in increasing order, so regions come out ordered by their
  // smallest member.
  std::map<std::vector<bool>, std::size_t> slot;
  std::vector<AtomicRegion> out;
  for (std::size_t j = 0; j < d_z; ++j) {
    std::vector<bool> sig(family.size());
    for (std::size_t s = 0; s < family.size(); ++s) sig[s] = family[s].contains(j);
    auto [it, inserted] = slot.emplace(sig, out.size());
    if (inserted) out.push_back({sig, {}});
    out[it->second].members.insert(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Certificates

namespace {

// uncovered[i] = external latents j still to be covered for region member i.
using Obligations = std::vector<IndexSet>;

std::size_t count(const Obligations& ob) {
  std::size_t n = 0;
  for (const auto& s : ob) n += s.size();
  return n;
}

Obligations cover(const Obligations& ob, IndexSet region, Clause c, IndexSet ik, IndexSet iv) {
  Obligations hit(ob.size());
  for (const auto& b : clause_blocks(c, ik, iv)) {
    for (auto i : (b.src & region).members()) hit[i] |= (b.dst - region) & ob[i];
  }
  return hit;
}

std::vector<LatentPair> to_pairs(const Obligations& ob) {
  std::vector<LatentPair> out;
  for (std::size_t i = 0; i < ob.size(); ++i) {
    for (auto j : ob[i].members()) out.push_back({i, j});
  }
  return out;
}

}  // namespace

CertifyResult certify_region(const AtomicRegion& region, const std::vector<IndexSet>& family,
                             std::size_t d_z, std::size_t max_union) {
  if (family.empty()) throw std::invalid_argument("certify_region: empty family");
  if (family.size() > kMaxDim) throw std::invalid_argument("certify_region: family larger than 64");
  if (max_union < 1) throw std::invalid_argument("certify_region: max_union must be >= 1");
  if (region.members.empty()) throw std::invalid_argument("certify_region: empty region");
  check_range(region.members, d_z, "certify_region");
  for (const auto& s : family) check_range(s, d_z, "certify_region");

  const IndexSet reg = region.members;
  const IndexSet outside = IndexSet::full(d_z) - reg;
  Obligations remaining(d_z);
  for (auto i : reg.members()) remaining[i] = outside;

  const auto subsets = subsets_by_size(family.size(), max_union);
  std::vector<std::pair<ObsSet, ObsSet>> candidates;
  for (const auto& k : subsets) {
    for (const auto& v : subsets) {
      if (k != v) candidates.emplace_back(k, v);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.first.size() + a.second.size() < b.first.size() + b.second.size();
  });

  struct Chosen {
    ObsSet k, v;
    Clause clause;
    Obligations hit;
  };
  std::vector<Chosen> chosen;
  for (const auto& [k, v] : candidates) {
    if (count(remaining) == 0) break;
    const IndexSet ik = union_of(family, k);
    const IndexSet iv = union_of(family, v);
    std::size_t best_n = 0;
    Clause best_c = Clause::SharedCentric;
    Obligations best_hit;
    for (auto c : kProp1Clauses) {
      auto hit = cover(remaining, reg, c, ik, iv);
      const auto n = count(hit);
      if (n > best_n) {
        best_n = n;
        best_c = c;
        best_hit = std::move(hit);
      }
    }
    if (best_n == 0) continue;
    for (std::size_t i = 0; i < d_z; ++i) remaining[i] = remaining[i] - best_hit[i];
    chosen.push_back({k, v, best_c, {}});
  }

  if (count(remaining) != 0) return CertificateFailure{region, to_pairs(remaining)};

  // Full coverage of each chosen step, then drop steps made redundant by later ones.
  Obligations full(d_z);
  for (auto i : reg.members()) full[i] = outside;
  for (auto& ch : chosen) ch.hit = cover(full, reg, ch.clause, union_of(family, ch.k), union_of(family, ch.v));
  for (std::size_t s = chosen.size(); s-- > 0;) {
    Obligations rest(d_z);
    for (std::size_t t = 0; t < chosen.size(); ++t) {
      if (t == s) continue;
      for (std::size_t i = 0; i < d_z; ++i) rest[i] |= chosen[t].hit[i];
    }
    bool redundant = true;
    for (auto i : reg.members()) redundant = redundant && outside.is_subset_of(rest[i]);
    if (redundant) chosen.erase(chosen.begin() + static_cast<std::ptrdiff_t>(s));
  }

  Certificate cert{region, {}};
  for (const auto& ch : chosen) cert.steps.push_back({ch.k, ch.v, ch.clause, to_pairs(ch.hit)});
  return cert;
}

CertifyResult certify_region(const AtomicRegion& region, const SupportMatrix& support, std::size_t max_union) {
  return certify_region(region, support.rows(), support.d_z(), max_union);
}

bool verify_certificate(const Certificate& cert, const std::vector<IndexSet>& family, std::size_t d_z) {
  std::set<LatentPair> covered;
  for (const auto& step : cert.steps) {
    if (step.k.extent() > family.size() || step.v.extent() > family.size()) return false;
    if (step.k.empty() || step.v.empty()) return false;
    const auto allowed = derived_pairs_prop1(union_of(family, step.k), union_of(family, step.v));
    for (const auto& p : step.covered) {
      if (!allowed.contains(p, step.clause)) return false;
      covered.insert(p);
    }
  }
  for (auto i : cert.region.members.members()) {
    for (std::size_t j = 0; j < d_z; ++j) {
      if (!cert.region.members.contains(j) && covered.count({i, j}) == 0) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Sufficient diversity

std::optional<IndexSet> diversity_clause_set(const std::vector<IndexSet>& family, std::size_t d_z,
                                             DiversityClause clause, ObsSet a, std::optional<std::size_t> k) {
  if (a.empty() || a.extent() > family.size()) return std::nullopt;
  const IndexSet full = IndexSet::full(d_z);
  if (clause == DiversityClause::Singleton) {
    IndexSet inter = full;
    for (auto m : a.members()) inter &= family[m];
    return inter;
  }
  if (clause == DiversityClause::None || !k || !a.contains(*k)) return std::nullopt;
  if (union_of(family, a) != full) return std::nullopt;
  ObsSet rest = a;
  rest.erase(*k);
  if (clause == DiversityClause::Union) return family[*k] - union_of(family, rest);
  IndexSet inter = full;
  for (auto m : rest.members()) inter &= family[m];
  return inter - family[*k];
}

std::vector<DiversityVerdict> check_sufficient_diversity(const SupportMatrix& support,
                                                         const DiversitySearch& search) {
  const auto& family = support.rows();
  const std::size_t d_z = support.d_z();
  const std::size_t d_x = support.d_x();
  const std::size_t max_size = d_x <= search.exhaustive_limit ? d_x : search.max_union;
  const auto subsets = subsets_by_size(d_x, max_size);
  const IndexSet full = IndexSet::full(d_z);

  // First witness per latent for each clause, in enumeration order.
  std::vector<std::optional<std::pair<ObsSet, std::optional<std::size_t>>>> found1(d_z), found2(d_z), found3(d_z);
  for (const auto& a : subsets) {
    IndexSet inter = full;
    for (auto m : a.members()) inter &= family[m];
    if (inter.size() == 1 && !found3[inter.front()]) found3[inter.front()] = {{a, std::nullopt}};

    if (union_of(family, a) != full) continue;
    for (auto k : a.members()) {
      ObsSet rest = a;
      rest.erase(k);
      const IndexSet u1 = family[k] - union_of(family, rest);
      if (u1.size() == 1 && !found1[u1.front()]) found1[u1.front()] = {{a, k}};
      IndexSet rest_inter = full;
      for (auto m : rest.members()) rest_inter &= family[m];
      const IndexSet u2 = rest_inter - family[k];
      if (u2.size() == 1 && !found2[u2.front()]) found2[u2.front()] = {{a, k}};
    }
  }

  std::vector<DiversityVerdict> out(d_z);
  for (std::size_t i = 0; i < d_z; ++i) {
    out[i].latent = i;
    const std::pair<DiversityClause, const decltype(found3)*> order[] = {
        {DiversityClause::Singleton, &found3}, {DiversityClause::Union, &found1}, {DiversityClause::Intersection, &found2}};
    for (const auto& [clause, table] : order) {
      const auto& hit = (*table)[i];
      if (hit) {
        out[i].satisfied = true;
        out[i].clause = clause;
        out[i].witness = hit->first;
        out[i].distinguished = hit->second;
        break;
      }
    }
  }
  return out;
}

bool element_identifiability_predicted(const SupportMatrix& support, const DiversitySearch& search) {
  const auto verdicts = check_sufficient_diversity(support, search);
  return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.satisfied; });
}

}  // namespace ddl
