#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedjets/nn/matrix.hpp"
#include "fedjets/nn/net.hpp"

namespace fedjets::data {

struct LabeledDataset {
  nn::Matrix inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  // class_index[c] lists the rows with label c, ascending.
  std::vector<std::vector<std::size_t>> class_index;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.cols; }

  static LabeledDataset from_rows(nn::Matrix inputs, std::vector<int> labels, std::size_t num_classes);
  void validate() const;
  nn::Batch batch(std::span<const std::size_t> rows) const;
};

/// Isotropic unit-variance Gaussian per class, centred at a random unit
/// direction scaled by `separation`.
LabeledDataset synth_dataset(std::size_t num_classes, std::size_t dim, std::size_t per_class, double separation,
                             std::uint64_t seed);

struct TrainTestSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Moves the last `test_per_class` samples of every class into the test set.
TrainTestSplit split_per_class(const LabeledDataset& ds, std::size_t test_per_class);

}  // namespace fedjets::data
