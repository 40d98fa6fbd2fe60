#include "fedjets/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fedjets/error.hpp"
#include "fedjets/rng.hpp"

namespace fedjets::data {

LabeledDataset LabeledDataset::from_rows(nn::Matrix inputs, std::vector<int> labels, std::size_t num_classes) {
  LabeledDataset ds;
  ds.inputs = std::move(inputs);
  ds.labels = std::move(labels);
  ds.num_classes = num_classes;
  ds.class_index.assign(num_classes, {});
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const int y = ds.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw ConfigError("dataset label out of range");
    ds.class_index[static_cast<std::size_t>(y)].push_back(i);
  }
  ds.validate();
  return ds;
}

void LabeledDataset::validate() const {
  if (inputs.rows != labels.size()) throw ConfigError("dataset has " + std::to_string(inputs.rows) +
                                                      " rows but " + std::to_string(labels.size()) + " labels");
  if (class_index.size() != num_classes) throw ConfigError("class index size differs from class count");
  std::size_t total = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (class_index[c].empty()) throw ConfigError("class " + std::to_string(c) + " has no samples");
    for (auto i : class_index[c])
      if (i >= labels.size() || labels[i] != static_cast<int>(c)) throw ConfigError("class index inconsistent");
    total += class_index[c].size();
  }
  if (total != labels.size()) throw ConfigError("class index does not cover every sample");
  if (!nn::all_finite(inputs.data)) throw ConfigError("dataset inputs must be finite");
}

nn::Batch LabeledDataset::batch(std::span<const std::size_t> rows) const {
  nn::Batch b;
  b.inputs = nn::gather_rows(inputs, rows);
  b.labels.reserve(rows.size());
  for (auto r : rows) b.labels.push_back(labels[r]);
  return b;
}

LabeledDataset synth_dataset(std::size_t num_classes, std::size_t dim, std::size_t per_class, double separation,
                             std::uint64_t seed) {
  if (num_classes < 2 || dim < 2 || per_class < 2) throw ConfigError("synth_dataset needs C >= 2, d >= 2, n >= 2");
  if (separation < 0.0) throw ConfigError("separation must be non-negative");
  Rng rng = make_rng({seed, stream::kData});
  std::normal_distribution<double> gauss(0.0, 1.0);

  nn::Matrix means(num_classes, dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double norm = 0.0;
    for (auto& v : means.row(c)) {
      v = gauss(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : means.row(c)) v = separation * v / norm;
  }

  nn::Matrix inputs(num_classes * per_class, dim);
  std::vector<int> labels(num_classes * per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t r = c * per_class + i;
      labels[r] = static_cast<int>(c);
      for (std::size_t k = 0; k < dim; ++k) inputs(r, k) = means(c, k) + gauss(rng);
    }
  }
  return LabeledDataset::from_rows(std::move(inputs), std::move(labels), num_classes);
}

TrainTestSplit split_per_class(const LabeledDataset& ds, std::size_t test_per_class) {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (const auto& idx : ds.class_index) {
    if (idx.size() <= test_per_class) throw ConfigError("test split would leave a class without training samples");
    const std::size_t cut = idx.size() - test_per_class;
    train_rows.insert(train_rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    test_rows.insert(test_rows.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  auto take = [&](const std::vector<std::size_t>& rows) {
    auto b = ds.batch(rows);
    return LabeledDataset::from_rows(std::move(b.inputs), std::move(b.labels), ds.num_classes);
  };
  return {take(train_rows), take(test_rows)};
}

}  // namespace fedjets::data
