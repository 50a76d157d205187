#pragma once

#include <string>
#include <vector>

#include "topo/graph.hpp"
#include "topo/tensor.hpp"

namespace topo {

struct PcaResult {
  Tensor components;  // [k, h], orthonormal rows, variance-sorted
  std::vector<double> explained_variance_ratio;
  Tensor mean_vec;  // [1, h]
};

/// PCA by eigendecomposition of the centered covariance. Sign convention:
/// the largest-magnitude coordinate of each component is positive.
PcaResult pca(const Tensor& embeddings, int k);

/// Centered data projected onto the components -> [n, k].
Tensor pca_project(const PcaResult& p, const Tensor& embeddings);

struct CorrEntry {
  int component;
  std::string metric;
  double signed_r2;  // sign(pearson) * pearson^2
  bool defined;      // false when the metric is constant
};

struct CorrelationTable {
  int num_components = 0;
  std::vector<std::string> metric_names;
  std::vector<CorrEntry> entries;  // component-major
  /// Per component: metric names sorted by |signed R2| descending
  /// (undefined metrics excluded).
  std::vector<std::vector<std::string>> ranking;

  const CorrEntry& at(int component, const std::string& metric) const;
};

/// Signed R^2 between every projection column and every graph metric.
CorrelationTable r2_correlations(const Tensor& projections,
                                 const std::vector<MetricRecord>& metrics);

/// Writes correlations.csv and scatter_<component>_<metric>.csv (plus SVG
/// scatter plots when `svg` is set) under out_dir.
void emit_report(const PcaResult& p, const CorrelationTable& table, const Tensor& projections,
                 const std::vector<MetricRecord>& metrics, const std::string& out_dir,
                 bool svg = false);

/// Metric column names in emission order.
std::vector<std::string> metric_column_names();
/// One row of metric values in column order.
std::vector<double> metric_columns(const MetricRecord& m);

}  // namespace topo
