#pragma once

// A surrogate that reads the true objective, for bounding what any trained
// model could achieve.

#include <memory>
#include <span>
#include <stdexcept>

#include "rbo/bayesopt.hpp"
#include "rbo/surrogate.hpp"

namespace oracle {

class TruthSurrogate : public rbo::surrogate::Surrogate {
 public:
  rbo::PredDist predict(std::span<const rbo::chem::Fingerprint>, rbo::Rng&) const override {
    throw std::logic_error("truth surrogate needs candidate ids");
  }
  rbo::PredDist predict_ids(const rbo::data::Dataset& dataset, std::span<const std::size_t> ids,
                            rbo::Rng&) const override {
    rbo::PredDist out;
    for (std::size_t id : ids) {
      out.mean.push_back(dataset.optimization_target(id));
      out.std.push_back(0.0);
    }
    return out;
  }
  nlohmann::json diagnostics() const override { return {{"kind", "truth"}}; }
  std::vector<std::uint8_t> parameter_blob() const override { return {}; }
  bool ranking() const override { return false; }
};

inline rbo::bayesopt::SurrogateFactory truth_factory() {
  return [](const rbo::data::Dataset&, std::span<const std::size_t>, rbo::Rng&) {
    return std::make_unique<TruthSurrogate>();
  };
}

}  // namespace oracle
