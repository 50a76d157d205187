#include "topo/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace topo {

PcaResult pca(const Tensor& embeddings, int k) {
  if (embeddings.rank() != 2)
    throw std::invalid_argument("pca: want rank 2, got " + shape_str(embeddings.shape()));
  const int n = embeddings.dim(0);
  const int h = embeddings.dim(1);
  if (k < 1 || k >= n)
    throw std::invalid_argument("pca: need n > k >= 1, got n=" + std::to_string(n) +
                                " k=" + std::to_string(k));
  if (k > h) throw std::invalid_argument("pca: k exceeds embedding width");

  Eigen::MatrixXd x(n, h);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < h; ++j) x(i, j) = embeddings.at(i, j);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca: eigendecomposition failed");
  const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd evecs = solver.eigenvectors();

  double total = 0.0;
  for (int i = 0; i < h; ++i) total += std::max(0.0, evals(i));

  PcaResult r;
  r.components = Tensor({k, h});
  r.mean_vec = Tensor({1, h});
  for (int j = 0; j < h; ++j) r.mean_vec[j] = static_cast<float>(mean(j));
  r.explained_variance_ratio.resize(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c) {
    const int src = h - 1 - c;  // descending variance
    Eigen::VectorXd v = evecs.col(src);
    int arg = 0;
    for (int j = 1; j < h; ++j)
      if (std::fabs(v(j)) > std::fabs(v(arg))) arg = j;
    if (v(arg) < 0.0) v = -v;
    for (int j = 0; j < h; ++j) r.components[c * h + j] = static_cast<float>(v(j));
    r.explained_variance_ratio[static_cast<size_t>(c)] =
        total > 0.0 ? std::max(0.0, evals(src)) / total : 0.0;
  }
  return r;
}

Tensor pca_project(const PcaResult& p, const Tensor& embeddings) {
  const int n = embeddings.dim(0);
  const int h = embeddings.dim(1);
  if (h != p.components.dim(1))
    throw std::invalid_argument("pca_project: width mismatch");
  const int k = p.components.dim(0);
  Tensor out({n, k});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) {
      double acc = 0.0;
      for (int j = 0; j < h; ++j)
        acc += (embeddings.at(i, j) - p.mean_vec[j]) * p.components.at(c, j);
      out[i * k + c] = static_cast<float>(acc);
    }
  return out;
}

std::vector<std::string> metric_column_names() {
  return {"nodes", "edges", "density", "diameter", "clustering", "transitivity"};
}

std::vector<double> metric_columns(const MetricRecord& m) {
  return {static_cast<double>(m.nodes), static_cast<double>(m.edges), m.density,
          static_cast<double>(m.diameter), m.avg_clustering, m.transitivity};
}

const CorrEntry& CorrelationTable::at(int component, const std::string& metric) const {
  for (const CorrEntry& e : entries)
    if (e.component == component && e.metric == metric) return e;
  throw std::out_of_range("correlation table: no entry for component " +
                          std::to_string(component) + " metric " + metric);
}

CorrelationTable r2_correlations(const Tensor& projections,
                                 const std::vector<MetricRecord>& metrics) {
  if (projections.rank() != 2)
    throw std::invalid_argument("r2_correlations: want rank 2 projections");
  const int n = projections.dim(0);
  const int k = projections.dim(1);
  if (static_cast<size_t>(n) != metrics.size())
    throw std::invalid_argument("r2_correlations: " + std::to_string(n) + " rows vs " +
                                std::to_string(metrics.size()) + " metric records");
  if (n < 3) throw std::invalid_argument("r2_correlations: need n >= 3");

  const auto names = metric_column_names();
  std::vector<std::vector<double>> cols(names.size(), std::vector<double>(static_cast<size_t>(n)));
  for (int i = 0; i < n; ++i) {
    const auto row = metric_columns(metrics[static_cast<size_t>(i)]);
    for (size_t m = 0; m < names.size(); ++m) cols[m][static_cast<size_t>(i)] = row[m];
  }

  CorrelationTable table;
  table.num_components = k;
  table.metric_names = names;
  for (int c = 0; c < k; ++c) {
    std::vector<std::pair<double, std::string>> ranked;
    for (size_t m = 0; m < names.size(); ++m) {
      double sx = 0.0, sy = 0.0;
      for (int i = 0; i < n; ++i) {
        sx += projections.at(i, c);
        sy += cols[m][static_cast<size_t>(i)];
      }
      const double mx = sx / n;
      const double my = sy / n;
      double sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int i = 0; i < n; ++i) {
        const double dx = projections.at(i, c) - mx;
        const double dy = cols[m][static_cast<size_t>(i)] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
      }
      CorrEntry e;
      e.component = c;
      e.metric = names[m];
      if (syy <= 0.0 || sxx <= 0.0) {
        e.signed_r2 = 0.0;
        e.defined = false;  // constant metric (or collapsed component)
      } else {
        const double r = sxy / std::sqrt(sxx * syy);
        e.signed_r2 = (r >= 0.0 ? 1.0 : -1.0) * r * r;
        e.defined = true;
        ranked.emplace_back(std::fabs(e.signed_r2), names[m]);
      }
      table.entries.push_back(e);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> names_only;
    for (const auto& [mag, name] : ranked) names_only.push_back(name);
    table.ranking.push_back(std::move(names_only));
  }
  return table;
}

namespace {

void write_scatter_svg(const std::string& path, const std::vector<double>& xs,
                       const std::vector<double>& ys, const std::string& xlabel,
                       const std::string& ylabel) {
  const double w = 480.0, h = 360.0, pad = 40.0;
  double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
  for (double x : xs) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
  }
  for (double y : ys) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"" << h - 6 << "\" font-size=\"12\" text-anchor=\"middle\">"
      << xlabel << "</text>\n";
  out << "<text x=\"12\" y=\"" << h / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 "
      << h / 2 << ")\">" << ylabel << "</text>\n";
  for (size_t i = 0; i < xs.size(); ++i) {
    const double px = pad + (xs[i] - xmin) / (xmax - xmin) * (w - 2 * pad);
    const double py = h - pad - (ys[i] - ymin) / (ymax - ymin) * (h - 2 * pad);
    out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2\" fill=\"steelblue\" fill-opacity=\"0.6\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void emit_report(const PcaResult& p, const CorrelationTable& table, const Tensor& projections,
                 const std::vector<MetricRecord>& metrics, const std::string& out_dir, bool svg) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw std::runtime_error("emit_report: cannot create directory " + out_dir);

  const int n = projections.dim(0);
  {
    std::ofstream out(out_dir + "/correlations.csv");
    if (!out) throw std::runtime_error("emit_report: cannot write correlations.csv");
    out << "component,variance_ratio,metric,signed_r2,rank\n";
    for (const CorrEntry& e : table.entries) {
      char buf[64];
      out << e.component << ",";
      std::snprintf(buf, sizeof(buf), "%.9g",
                    p.explained_variance_ratio[static_cast<size_t>(e.component)]);
      out << buf << "," << e.metric << ",";
      if (e.defined) {
        std::snprintf(buf, sizeof(buf), "%.9g", e.signed_r2);
        out << buf << ",";
        const auto& ranking = table.ranking[static_cast<size_t>(e.component)];
        const auto it = std::find(ranking.begin(), ranking.end(), e.metric);
        out << (it - ranking.begin() + 1);
      } else {
        out << "undefined,";
      }
      out << "\n";
    }
  }

  for (int c = 0; c < table.num_components; ++c) {
    for (size_t m = 0; m < table.metric_names.size(); ++m) {
      std::vector<double> xs(static_cast<size_t>(n));
      std::vector<double> ys(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        xs[static_cast<size_t>(i)] = projections.at(i, c);
        ys[static_cast<size_t>(i)] = metric_columns(metrics[static_cast<size_t>(i)])[m];
      }
      const std::string stem =
          out_dir + "/scatter_" + std::to_string(c) + "_" + table.metric_names[m];
      std::ofstream out(stem + ".csv");
      if (!out) throw std::runtime_error("emit_report: cannot write " + stem + ".csv");
      out << "projection," << table.metric_names[m] << "\n";
      for (int i = 0; i < n; ++i) {
        char buf[80];
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", xs[static_cast<size_t>(i)],
                      ys[static_cast<size_t>(i)]);
        out << buf;
      }
      if (svg)
        write_scatter_svg(stem + ".svg", xs, ys, "component " + std::to_string(c),
                          table.metric_names[m]);
    }
  }
}

}  // namespace topo
