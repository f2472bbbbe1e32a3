#pragma once

// Writes a parsed molecule back to SMILES with a random root atom and random
// neighbour order, giving a different atom ordering of the same graph.

#include <cctype>
#include <string>
#include <vector>

#include "rbo/chem.hpp"
#include "rbo/random.hpp"

namespace testing_util {

class RandomSmilesWriter {
 public:
  RandomSmilesWriter(const rbo::chem::MolGraph& g, rbo::Rng& rng) : g_(g), rng_(rng) {}

  std::string write() {
    const std::size_t n = g_.atom_count();
    visited_.assign(n, false);
    children_.assign(n, {});
    ring_bonds_.assign(n, {});
    parent_bond_.assign(n, kNone);
    bond_seen_.assign(g_.bond_count(), false);
    digit_of_.assign(g_.bond_count(), 0);
    free_digits_.assign(100, true);

    // Disconnected components in random order, joined by '.'.
    std::vector<std::size_t> roots(n);
    for (std::size_t i = 0; i < n; ++i) roots[i] = i;
    rbo::shuffle(roots, rng_);
    std::string out;
    for (std::size_t r : roots) {
      if (visited_[r]) continue;
      plan(r);
      if (!out.empty()) out += '.';
      emit(r, out);
    }
    return out;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  void plan(std::size_t atom) {
    visited_[atom] = true;
    std::vector<std::size_t> bonds = g_.incident_bonds(atom);
    rbo::shuffle(bonds, rng_);
    for (std::size_t b : bonds) {
      if (b == parent_bond_[atom] || bond_seen_[b]) continue;
      bond_seen_[b] = true;
      const std::size_t other = g_.neighbor(b, atom);
      if (visited_[other]) {
        // Back edge: opened at the ancestor, closed here.
        ring_bonds_[other].push_back(b);
        ring_bonds_[atom].push_back(b);
      } else {
        parent_bond_[other] = b;
        children_[atom].push_back(other);
        plan(other);
      }
    }
  }

  std::string bond_symbol(std::size_t b) const {
    const auto& bond = g_.bonds()[b];
    const bool both_aromatic = g_.atoms()[bond.begin].aromatic && g_.atoms()[bond.end].aromatic;
    switch (bond.order) {
      case rbo::chem::BondOrder::kSingle: return both_aromatic ? "-" : "";
      case rbo::chem::BondOrder::kDouble: return "=";
      case rbo::chem::BondOrder::kTriple: return "#";
      case rbo::chem::BondOrder::kAromatic: return "";
    }
    return "";
  }

  std::string atom_text(std::size_t i) const {
    const auto& a = g_.atoms()[i];
    std::string sym = a.symbol;
    if (a.aromatic) sym[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(sym[0])));
    if (!a.explicit_hydrogens && a.formal_charge == 0) return sym;
    std::string s = "[" + sym;
    const int h = a.explicit_hydrogens.value_or(0);
    if (h > 0) s += h == 1 ? "H" : "H" + std::to_string(h);
    if (a.formal_charge != 0) {
      s += a.formal_charge > 0 ? '+' : '-';
      const int mag = a.formal_charge > 0 ? a.formal_charge : -a.formal_charge;
      if (mag > 1) s += std::to_string(mag);
    }
    return s + "]";
  }

  static std::string digit_text(int d) { return d < 10 ? std::to_string(d) : "%" + std::to_string(d); }

  void emit(std::size_t atom, std::string& out) {
    out += atom_text(atom);
    // Digits closed here are released only after this atom, so one atom never
    // closes and reopens the same digit.
    std::vector<int> released;
    for (std::size_t b : ring_bonds_[atom]) {
      if (digit_of_[b] == 0) {
        int d = 1;
        while (!free_digits_[d]) ++d;
        free_digits_[d] = false;
        digit_of_[b] = d;
        out += bond_symbol(b) + digit_text(d);
      } else {
        out += digit_text(digit_of_[b]);
        released.push_back(digit_of_[b]);
      }
    }
    for (int d : released) free_digits_[d] = true;
    const auto& kids = children_[atom];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool last = k + 1 == kids.size();
      if (!last) out += '(';
      out += bond_symbol(parent_bond_[kids[k]]);
      emit(kids[k], out);
      if (!last) out += ')';
    }
  }

  const rbo::chem::MolGraph& g_;
  rbo::Rng& rng_;
  std::vector<bool> visited_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::vector<std::size_t>> ring_bonds_;
  std::vector<std::size_t> parent_bond_;
  std::vector<bool> bond_seen_;
  std::vector<int> digit_of_;
  std::vector<bool> free_digits_;
};

inline std::string random_smiles(const rbo::chem::MolGraph& g, rbo::Rng& rng) {
  return RandomSmilesWriter(g, rng).write();
}

}  // namespace testing_util
