#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rbo::chem {

enum class BondOrder : std::uint8_t { kSingle = 1, kDouble = 2, kTriple = 3, kAromatic = 4 };

struct Atom {
  std::string symbol;  // element symbol, capitalised ("C", "Cl", ...)
  int atomic_number = 0;
  int formal_charge = 0;
  bool aromatic = false;
  std::optional<int> explicit_hydrogens;  // set only for bracket atoms
  bool in_ring = false;
};

struct Bond {
  std::size_t begin = 0;
  std::size_t end = 0;
  BondOrder order = BondOrder::kSingle;
};

// Molecular graph produced by parse_smiles. Hydrogens are implicit.
class MolGraph {
 public:
  MolGraph() = default;
  MolGraph(std::vector<Atom> atoms, std::vector<Bond> bonds);

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::vector<Bond>& bonds() const noexcept { return bonds_; }
  std::size_t atom_count() const noexcept { return atoms_.size(); }
  std::size_t bond_count() const noexcept { return bonds_.size(); }

  // Bond indices incident to `atom`.
  const std::vector<std::size_t>& incident_bonds(std::size_t atom) const { return adjacency_[atom]; }
  std::size_t neighbor(std::size_t bond, std::size_t atom) const {
    const Bond& b = bonds_[bond];
    return b.begin == atom ? b.end : b.begin;
  }

  std::size_t heavy_degree(std::size_t atom) const { return adjacency_[atom].size(); }

  // Hydrogen count: the bracket count when given, otherwise derived from the
  // lowest standard valence that accommodates the explicit bonds.
  int hydrogen_count(std::size_t atom) const;

 private:
  void validate_and_index();
  void perceive_rings();

  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

// Parses the supported SMILES subset. Stereo markers are accepted and dropped.
// Throws rbo::ParseError carrying the byte offset of the offending token.
MolGraph parse_smiles(std::string_view text);

// Fixed-width bit vector.
class Fingerprint {
 public:
  Fingerprint() = default;
  explicit Fingerprint(std::size_t nbits, int radius = 0);

  std::size_t nbits() const noexcept { return nbits_; }
  int radius() const noexcept { return radius_; }
  bool test(std::size_t bit) const;
  void set(std::size_t bit);
  void reset(std::size_t bit);
  std::size_t popcount() const noexcept;
  std::vector<std::uint32_t> on_bits() const;
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  // nbits/4 hex digits, most significant bit first. Requires nbits % 4 == 0.
  std::string to_hex() const;
  static Fingerprint from_hex(std::string_view hex, int radius = 0);

  friend bool operator==(const Fingerprint& a, const Fingerprint& b) {
    return a.nbits_ == b.nbits_ && a.words_ == b.words_;
  }

 private:
  std::size_t nbits_ = 0;
  int radius_ = 0;
  std::vector<std::uint64_t> words_;
};

inline constexpr int kDefaultRadius = 3;
inline constexpr std::size_t kDefaultBits = 2048;

// The 64-bit mixer used for environment identifiers (splitmix64 finaliser).
std::uint64_t mix64(std::uint64_t x) noexcept;
// Order-dependent combination: mix64(seed ^ (value + 0x9e3779b97f4a7c15 + (seed << 6) + (seed >> 2))).
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept;

// Atom seed invariant: (atomic number, heavy degree, formal charge, H count, ring flag).
std::vector<std::uint64_t> initial_invariants(const MolGraph& graph);

// Deduplicated circular-environment identifiers for radii 0..radius.
std::vector<std::uint64_t> environment_ids(const MolGraph& graph, int radius);

Fingerprint morgan_fingerprint(const MolGraph& graph, int radius = kDefaultRadius,
                               std::size_t nbits = kDefaultBits);

// |a & b| / |a | b|; 0 when both are empty. Throws on width mismatch.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

// Element lookup; returns 0 for unknown symbols.
int atomic_number(std::string_view symbol) noexcept;

}  // namespace rbo::chem
