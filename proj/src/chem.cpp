#include "rbo/chem.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <utility>

#include "rbo/error.hpp"

namespace rbo::chem {

namespace {

constexpr std::array<std::string_view, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

std::vector<int> standard_valences(int z) {
  switch (z) {
    case 5: return {3};
    case 6: return {4};
    case 7: return {3, 5};
    case 8: return {2};
    case 15: return {3, 5};
    case 16: return {2, 4, 6};
    case 9:
    case 17:
    case 35:
    case 53: return {1};
    default: return {};
  }
}

bool is_bond_char(char c) {
  return c == '-' || c == '=' || c == '#' || c == ':' || c == '/' || c == '\\';
}

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view text) : text_(text) {}

  MolGraph parse() {
    if (text_.empty()) throw ParseError("empty SMILES", 0);
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(') {
        if (!prev_) throw ParseError("branch without preceding atom", pos_);
        if (pending_) throw ParseError("bond symbol with no following atom", pending_->offset);
        branches_.push_back({*prev_, pos_});
        ++pos_;
      } else if (c == ')') {
        if (branches_.empty()) throw ParseError("unbalanced parenthesis", pos_);
        if (pending_) throw ParseError("bond symbol with no following atom", pending_->offset);
        prev_ = branches_.back().atom;
        branches_.pop_back();
        ++pos_;
      } else if (is_bond_char(c)) {
        if (pending_) throw ParseError("consecutive bond symbols", pos_);
        if (!prev_) throw ParseError("bond symbol with no preceding atom", pos_);
        pending_ = PendingBond{bond_from_char(c), pos_};
        ++pos_;
      } else if (c == '.') {
        if (pending_) throw ParseError("bond symbol with no following atom", pending_->offset);
        prev_.reset();
        ++pos_;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        ring_closure();
      } else if (c == '[') {
        bracket_atom();
      } else {
        organic_atom();
      }
    }
    if (pending_) throw ParseError("bond symbol with no following atom", pending_->offset);
    if (!branches_.empty()) throw ParseError("unbalanced parenthesis", branches_.back().offset);
    if (!rings_.empty()) {
      std::size_t first = text_.size();
      for (const auto& [num, open] : rings_) first = std::min(first, open.offset);
      throw ParseError("unmatched ring closure", first);
    }
    try {
      return MolGraph(std::move(atoms_), std::move(bonds_));
    } catch (const DataError& e) {
      throw ParseError(e.what(), 0);
    }
  }

 private:
  struct PendingBond {
    std::optional<BondOrder> order;  // nullopt for '/' and '\'
    std::size_t offset;
  };
  struct Branch {
    std::size_t atom;
    std::size_t offset;
  };
  struct RingOpen {
    std::size_t atom;
    std::optional<BondOrder> order;
    std::size_t offset;
  };

  static std::optional<BondOrder> bond_from_char(char c) {
    switch (c) {
      case '-': return BondOrder::kSingle;
      case '=': return BondOrder::kDouble;
      case '#': return BondOrder::kTriple;
      case ':': return BondOrder::kAromatic;
      default: return std::nullopt;
    }
  }

  BondOrder implicit_order(std::size_t a, std::size_t b) const {
    return atoms_[a].aromatic && atoms_[b].aromatic ? BondOrder::kAromatic : BondOrder::kSingle;
  }

  void add_bond(std::size_t a, std::size_t b, std::optional<BondOrder> order, std::size_t offset) {
    if (a == b) throw ParseError("ring closure bonds an atom to itself", offset);
    for (const Bond& existing : bonds_) {
      if ((existing.begin == a && existing.end == b) || (existing.begin == b && existing.end == a)) {
        throw ParseError("duplicate bond", offset);
      }
    }
    const BondOrder resolved = order.value_or(implicit_order(a, b));
    if (resolved == BondOrder::kAromatic && !(atoms_[a].aromatic && atoms_[b].aromatic)) {
      throw ParseError("aromatic bond between non-aromatic atoms", offset);
    }
    bonds_.push_back({a, b, resolved});
  }

  void push_atom(Atom atom, std::size_t offset) {
    atoms_.push_back(std::move(atom));
    const std::size_t idx = atoms_.size() - 1;
    if (prev_) {
      const auto order = pending_ ? pending_->order : std::nullopt;
      add_bond(*prev_, idx, order, pending_ ? pending_->offset : offset);
    }
    pending_.reset();
    prev_ = idx;
  }

  void organic_atom() {
    const std::size_t start = pos_;
    const std::string_view rest = text_.substr(pos_);
    Atom atom;
    if (rest.starts_with("Cl") || rest.starts_with("Br")) {
      atom.symbol = std::string(rest.substr(0, 2));
      pos_ += 2;
    } else {
      const char c = rest.front();
      switch (c) {
        case 'B':
        case 'C':
        case 'N':
        case 'O':
        case 'P':
        case 'S':
        case 'F':
        case 'I':
          atom.symbol = std::string(1, c);
          break;
        case 'b':
        case 'c':
        case 'n':
        case 'o':
        case 'p':
        case 's':
          atom.symbol = std::string(1, static_cast<char>(std::toupper(c)));
          atom.aromatic = true;
          break;
        default:
          throw ParseError("unknown atom symbol '" + std::string(1, c) + "'", start);
      }
      ++pos_;
    }
    atom.atomic_number = atomic_number(atom.symbol);
    push_atom(std::move(atom), start);
  }

  int read_int() {
    int value = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + (text_[pos_] - '0');
      ++pos_;
    }
    return value;
  }

  bool at_digit() const {
    return pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]));
  }

  void bracket_atom() {
    const std::size_t open = pos_;
    ++pos_;
    const auto fail_unclosed = [&] { throw ParseError("unclosed bracket atom", open); };
    if (pos_ >= text_.size()) fail_unclosed();
    read_int();  // isotope, discarded

    Atom atom;
    const std::size_t sym_start = pos_;
    const std::string_view rest = text_.substr(pos_);
    bool found = false;
    for (std::string_view arom : {"se", "as", "te"}) {
      if (rest.starts_with(arom)) {
        atom.symbol = {static_cast<char>(std::toupper(arom[0])), arom[1]};
        atom.aromatic = true;
        pos_ += 2;
        found = true;
        break;
      }
    }
    if (!found && !rest.empty()) {
      const char c = rest.front();
      if (c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 'p' || c == 's') {
        atom.symbol = std::string(1, static_cast<char>(std::toupper(c)));
        atom.aromatic = true;
        pos_ += 1;
        found = true;
      } else if (std::isupper(static_cast<unsigned char>(c))) {
        if (rest.size() >= 2 && std::islower(static_cast<unsigned char>(rest[1])) &&
            atomic_number(rest.substr(0, 2)) != 0) {
          atom.symbol = std::string(rest.substr(0, 2));
          pos_ += 2;
          found = true;
        } else if (atomic_number(rest.substr(0, 1)) != 0) {
          atom.symbol = std::string(1, c);
          pos_ += 1;
          found = true;
        }
      }
    }
    if (!found) throw ParseError("unknown atom symbol", sym_start);
    atom.atomic_number = atomic_number(atom.symbol);

    // Chirality: '@', '@@', or '@' followed by a class tag such as TH1/AL2/SP3/TB10/OH20.
    while (pos_ < text_.size() && text_[pos_] == '@') ++pos_;
    for (std::string_view tag : {"TH", "AL", "SP", "TB", "OH"}) {
      if (text_.substr(pos_).starts_with(tag)) {
        pos_ += 2;
        read_int();
        break;
      }
    }

    int hydrogens = 0;
    if (pos_ < text_.size() && text_[pos_] == 'H') {
      ++pos_;
      hydrogens = at_digit() ? read_int() : 1;
    }
    atom.explicit_hydrogens = hydrogens;

    if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
      const char sign_char = text_[pos_];
      const int sign = sign_char == '+' ? 1 : -1;
      ++pos_;
      int magnitude = 1;
      if (at_digit()) {
        magnitude = read_int();
      } else {
        while (pos_ < text_.size() && text_[pos_] == sign_char) {
          ++magnitude;
          ++pos_;
        }
      }
      atom.formal_charge = sign * magnitude;
    }

    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      if (!at_digit()) throw ParseError("atom class requires a number", pos_);
      read_int();
    }
    if (pos_ >= text_.size()) fail_unclosed();
    if (text_[pos_] != ']') throw ParseError("unexpected character in bracket atom", pos_);
    ++pos_;
    push_atom(std::move(atom), open);
  }

  void ring_closure() {
    const std::size_t start = pos_;
    int number = 0;
    if (text_[pos_] == '%') {
      if (pos_ + 2 >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
          !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
        throw ParseError("'%' must be followed by two digits", start);
      }
      number = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
      pos_ += 3;
    } else {
      number = text_[pos_] - '0';
      ++pos_;
    }
    if (!prev_) throw ParseError("ring closure without preceding atom", start);

    std::optional<BondOrder> order;
    if (pending_) order = pending_->order;
    pending_.reset();

    auto it = rings_.find(number);
    if (it == rings_.end()) {
      rings_[number] = RingOpen{*prev_, order, start};
      return;
    }
    const RingOpen open = it->second;
    rings_.erase(it);
    if (open.order && order && *open.order != *order) {
      throw ParseError("conflicting ring closure bond orders", start);
    }
    add_bond(open.atom, *prev_, order ? order : open.order, start);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::optional<std::size_t> prev_;
  std::optional<PendingBond> pending_;
  std::vector<Branch> branches_;
  std::map<int, RingOpen> rings_;
};

int bond_code(BondOrder order) { return static_cast<int>(order); }

}  // namespace

int atomic_number(std::string_view symbol) noexcept {
  for (std::size_t i = 0; i < kElements.size(); ++i) {
    if (kElements[i] == symbol) return static_cast<int>(i) + 1;
  }
  return 0;
}

MolGraph::MolGraph(std::vector<Atom> atoms, std::vector<Bond> bonds)
    : atoms_(std::move(atoms)), bonds_(std::move(bonds)) {
  validate_and_index();
  perceive_rings();
}

void MolGraph::validate_and_index() {
  adjacency_.assign(atoms_.size(), {});
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < bonds_.size(); ++i) {
    const Bond& b = bonds_[i];
    if (b.begin >= atoms_.size() || b.end >= atoms_.size()) {
      throw DataError("bond " + std::to_string(i) + " references a missing atom");
    }
    if (b.begin == b.end) throw DataError("bond " + std::to_string(i) + " is a self-loop");
    if (!seen.insert(std::minmax(b.begin, b.end)).second) {
      throw DataError("duplicate bond between atoms " + std::to_string(b.begin) + " and " +
                      std::to_string(b.end));
    }
    if (b.order == BondOrder::kAromatic && !(atoms_[b.begin].aromatic && atoms_[b.end].aromatic)) {
      throw DataError("aromatic bond between non-aromatic atoms");
    }
    adjacency_[b.begin].push_back(i);
    adjacency_[b.end].push_back(i);
  }
}

// A bond lies on a ring iff it is not a bridge; an atom is in a ring iff it
// has at least one ring bond.
void MolGraph::perceive_rings() {
  const std::size_t n = atoms_.size();
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<bool> bridge(bonds_.size(), false);
  int timer = 0;

  std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t u, std::size_t parent_bond) {
    disc[u] = low[u] = timer++;
    for (std::size_t b : adjacency_[u]) {
      if (b == parent_bond) continue;
      const std::size_t v = neighbor(b, u);
      if (disc[v] < 0) {
        dfs(v, b);
        low[u] = std::min(low[u], low[v]);
        if (low[v] > disc[u]) bridge[b] = true;
      } else {
        low[u] = std::min(low[u], disc[v]);
      }
    }
  };
  for (std::size_t u = 0; u < n; ++u) {
    if (disc[u] < 0) dfs(u, bonds_.size());
  }
  for (Atom& a : atoms_) a.in_ring = false;
  for (std::size_t b = 0; b < bonds_.size(); ++b) {
    if (!bridge[b]) {
      atoms_[bonds_[b].begin].in_ring = true;
      atoms_[bonds_[b].end].in_ring = true;
    }
  }
}

int MolGraph::hydrogen_count(std::size_t atom) const {
  const Atom& a = atoms_[atom];
  if (a.explicit_hydrogens) return *a.explicit_hydrogens;
  int used = 0;
  for (std::size_t b : adjacency_[atom]) {
    const BondOrder order = bonds_[b].order;
    used += order == BondOrder::kAromatic ? 1 : static_cast<int>(order);
  }
  if (a.aromatic) used += 1;
  for (int v : standard_valences(a.atomic_number)) {
    if (v >= used) return v - used;
  }
  return 0;
}

MolGraph parse_smiles(std::string_view text) { return SmilesParser(text).parse(); }

// ---------------------------------------------------------------------------
// Fingerprint

Fingerprint::Fingerprint(std::size_t nbits, int radius)
    : nbits_(nbits), radius_(radius), words_((nbits + 63) / 64, 0) {
  if (nbits == 0) throw ConfigError("fingerprint width must be positive");
}

bool Fingerprint::test(std::size_t bit) const {
  if (bit >= nbits_) throw std::out_of_range("fingerprint bit out of range");
  return (words_[bit / 64] >> (bit % 64)) & 1U;
}

void Fingerprint::set(std::size_t bit) {
  if (bit >= nbits_) throw std::out_of_range("fingerprint bit out of range");
  words_[bit / 64] |= std::uint64_t{1} << (bit % 64);
}

void Fingerprint::reset(std::size_t bit) {
  if (bit >= nbits_) throw std::out_of_range("fingerprint bit out of range");
  words_[bit / 64] &= ~(std::uint64_t{1} << (bit % 64));
}

std::size_t Fingerprint::popcount() const noexcept {
  std::size_t count = 0;
  for (std::uint64_t w : words_) count += static_cast<std::size_t>(std::popcount(w));
  return count;
}

std::vector<std::uint32_t> Fingerprint::on_bits() const {
  std::vector<std::uint32_t> bits;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t word = words_[w];
    while (word != 0) {
      const int tz = std::countr_zero(word);
      bits.push_back(static_cast<std::uint32_t>(w * 64 + static_cast<std::size_t>(tz)));
      word &= word - 1;
    }
  }
  return bits;
}

std::string Fingerprint::to_hex() const {
  if (nbits_ % 4 != 0) throw ConfigError("hex serialisation requires nbits divisible by 4");
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(nbits_ / 4, '0');
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t top = nbits_ - 1 - 4 * k;
    unsigned value = 0;
    for (std::size_t j = 0; j < 4; ++j) value = (value << 1) | (test(top - j) ? 1U : 0U);
    out[k] = kDigits[value];
  }
  return out;
}

Fingerprint Fingerprint::from_hex(std::string_view hex, int radius) {
  if (hex.empty()) throw DataError("empty fingerprint hex string");
  Fingerprint fp(hex.size() * 4, radius);
  const std::size_t nbits = fp.nbits();
  for (std::size_t k = 0; k < hex.size(); ++k) {
    const char c = hex[k];
    unsigned value;
    if (c >= '0' && c <= '9') {
      value = static_cast<unsigned>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      value = static_cast<unsigned>(c - 'a' + 10);
    } else if (c >= 'A' && c <= 'F') {
      value = static_cast<unsigned>(c - 'A' + 10);
    } else {
      throw DataError("invalid hex digit in fingerprint");
    }
    const std::size_t top = nbits - 1 - 4 * k;
    for (std::size_t j = 0; j < 4; ++j) {
      if ((value >> (3 - j)) & 1U) fp.set(top - j);
    }
  }
  return fp;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return mix64(seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

std::vector<std::uint64_t> initial_invariants(const MolGraph& graph) {
  std::vector<std::uint64_t> inv(graph.atom_count());
  for (std::size_t i = 0; i < graph.atom_count(); ++i) {
    const Atom& a = graph.atoms()[i];
    std::uint64_t h = mix64(static_cast<std::uint64_t>(a.atomic_number));
    h = hash_combine(h, graph.heavy_degree(i));
    h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(a.formal_charge) + 128));
    h = hash_combine(h, static_cast<std::uint64_t>(graph.hydrogen_count(i)));
    h = hash_combine(h, a.in_ring ? 1U : 0U);
    inv[i] = h;
  }
  return inv;
}

std::vector<std::uint64_t> environment_ids(const MolGraph& graph, int radius) {
  const std::size_t n = graph.atom_count();
  const std::size_t words = (graph.bond_count() + 63) / 64;
  using BondSet = std::vector<std::uint64_t>;

  std::vector<std::uint64_t> inv = initial_invariants(graph);
  std::vector<std::uint64_t> ids(inv.begin(), inv.end());

  std::vector<BondSet> cover(n, BondSet(words, 0));
  std::set<BondSet> seen;
  seen.insert(BondSet(words, 0));

  for (int r = 1; r <= radius; ++r) {
    std::vector<std::uint64_t> next(n);
    std::vector<BondSet> next_cover(n);
    std::vector<std::pair<BondSet, std::uint64_t>> candidates;
    candidates.reserve(n);
    for (std::size_t a = 0; a < n; ++a) {
      std::vector<std::pair<int, std::uint64_t>> env;
      BondSet grown = cover[a];
      for (std::size_t b : graph.incident_bonds(a)) {
        const std::size_t nb = graph.neighbor(b, a);
        env.emplace_back(bond_code(graph.bonds()[b].order), inv[nb]);
        grown[b / 64] |= std::uint64_t{1} << (b % 64);
        for (std::size_t w = 0; w < words; ++w) grown[w] |= cover[nb][w];
      }
      std::sort(env.begin(), env.end());
      std::uint64_t h = hash_combine(static_cast<std::uint64_t>(r), inv[a]);
      for (const auto& [order, value] : env) {
        h = hash_combine(h, static_cast<std::uint64_t>(order));
        h = hash_combine(h, value);
      }
      next[a] = h;
      next_cover[a] = grown;
      candidates.emplace_back(std::move(grown), h);
    }
    // One identifier per newly covered substructure; the smallest wins ties so
    // the choice does not depend on atom numbering.
    std::sort(candidates.begin(), candidates.end());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (i > 0 && candidates[i].first == candidates[i - 1].first) continue;
      if (seen.insert(candidates[i].first).second) ids.push_back(candidates[i].second);
    }
    inv = std::move(next);
    cover = std::move(next_cover);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

Fingerprint morgan_fingerprint(const MolGraph& graph, int radius, std::size_t nbits) {
  if (radius < 0) throw ConfigError("fingerprint radius must be non-negative");
  Fingerprint fp(nbits, radius);
  for (std::uint64_t id : environment_ids(graph, radius)) fp.set(id % nbits);
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.nbits() != b.nbits()) {
    throw DataError("fingerprint width mismatch: " + std::to_string(a.nbits()) + " vs " +
                    std::to_string(b.nbits()));
  }
  std::size_t both = 0, either = 0;
  const auto& wa = a.words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) {
    both += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
    either += static_cast<std::size_t>(std::popcount(wa[i] | wb[i]));
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

}  // namespace rbo::chem
