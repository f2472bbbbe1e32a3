#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rbo/chem.hpp"
#include "rbo/error.hpp"
#include "smiles_writer.hpp"

using namespace rbo;
using namespace rbo::chem;

namespace {

std::vector<std::string> corpus() {
  std::ifstream in(RBO_TEST_DATA_DIR "/corpus.smi");
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::size_t parse_error_offset(const std::string& smiles) {
  try {
    parse_smiles(smiles);
  } catch (const ParseError& e) {
    return e.offset();
  }
  FAIL("expected a parse error for " << smiles);
  return 0;
}

}  // namespace

TEST_SUITE("chem") {
  TEST_CASE("hydrogen counts follow default valences") {
    const MolGraph ethanol = parse_smiles("CCO");
    CHECK(ethanol.atom_count() == 3);
    CHECK(ethanol.hydrogen_count(0) == 3);
    CHECK(ethanol.hydrogen_count(1) == 2);
    CHECK(ethanol.hydrogen_count(2) == 1);

    const MolGraph benzene = parse_smiles("c1ccccc1");
    CHECK(benzene.bond_count() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(benzene.hydrogen_count(i) == 1);
      CHECK(benzene.atoms()[i].in_ring);
    }

    const MolGraph pyrrole = parse_smiles("c1cc[nH]c1");
    CHECK(pyrrole.hydrogen_count(3) == 1);

    const MolGraph ammonium = parse_smiles("[NH4+]");
    CHECK(ammonium.hydrogen_count(0) == 4);
    CHECK(ammonium.atoms()[0].formal_charge == 1);

    const MolGraph dmso = parse_smiles("CS(C)=O");
    CHECK(dmso.hydrogen_count(1) == 0);
  }

  TEST_CASE("ring flags only on cycle atoms") {
    const MolGraph toluene = parse_smiles("Cc1ccccc1");
    CHECK_FALSE(toluene.atoms()[0].in_ring);
    for (std::size_t i = 1; i < 7; ++i) CHECK(toluene.atoms()[i].in_ring);
  }

  TEST_CASE("two-digit ring closures and stereo markers") {
    CHECK(parse_smiles("C%10CCCCC%10").bond_count() == 6);
    CHECK(parse_smiles("C[C@@H](O)C(=O)O").atom_count() == 6);
    CHECK(parse_smiles("F/C=C/F").bond_count() == 3);
  }

  TEST_CASE("syntax errors carry byte offsets") {
    CHECK(parse_error_offset("C(C") == 1);
    CHECK(parse_error_offset("CC)") == 2);
    CHECK(parse_error_offset("C1CC") == 1);
    CHECK(parse_error_offset("CXC") == 1);
    CHECK(parse_error_offset("CC=") == 2);
    CHECK_THROWS_AS(parse_smiles(""), ParseError);
  }

  TEST_CASE("hex round trip, most significant bit first") {
    Fingerprint fp(16);
    fp.set(15);
    fp.set(0);
    CHECK(fp.to_hex() == "8001");
    CHECK(Fingerprint::from_hex("8001") == fp);
    CHECK_THROWS_AS(Fingerprint::from_hex("80g1"), DataError);
  }

  TEST_CASE("tanimoto matches bitwise counting") {
    Rng rng = make_rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      const auto a = oracle::random_fingerprint(rng, 256, 0.1);
      const auto b = oracle::random_fingerprint(rng, 256, 0.1);
      CHECK(tanimoto(a, b) == doctest::Approx(oracle::tanimoto(a, b)).epsilon(1e-15));
      CHECK(tanimoto(a, b) == tanimoto(b, a));
    }
    CHECK(tanimoto(Fingerprint(64), Fingerprint(64)) == 0.0);
    CHECK_THROWS_AS(tanimoto(Fingerprint(64), Fingerprint(128)), DataError);
  }

  TEST_CASE("fingerprints are deterministic and non-trivial") {
    const auto a = morgan_fingerprint(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"));
    const auto b = morgan_fingerprint(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"));
    CHECK(a == b);
    CHECK(a.nbits() == kDefaultBits);
    CHECK(a.popcount() > 10);
    CHECK(morgan_fingerprint(parse_smiles("CCO")) != morgan_fingerprint(parse_smiles("CCN")));
  }

  TEST_CASE("larger radius never loses bits") {
    const auto g = parse_smiles("CN1C=NC2=C1C(=O)N(C(=O)N2C)C");
    std::size_t prev = 0;
    for (int r = 0; r <= 3; ++r) {
      const auto ids = environment_ids(g, r);
      CHECK(ids.size() >= prev);
      prev = ids.size();
    }
  }

  TEST_CASE("random atom orderings give the same fingerprint") {
    Rng rng = make_rng(11);
    const auto smiles = corpus();
    REQUIRE(smiles.size() == 100);
    for (const auto& s : smiles) {
      const MolGraph g = parse_smiles(s);
      const Fingerprint ref = morgan_fingerprint(g);
      for (int k = 0; k < 3; ++k) {
        const std::string permuted = testing_util::random_smiles(g, rng);
        INFO(s << " -> " << permuted);
        CHECK(morgan_fingerprint(parse_smiles(permuted)) == ref);
      }
    }
  }
}
