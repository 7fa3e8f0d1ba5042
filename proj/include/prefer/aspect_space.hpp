#pragma once

// Latent aspect discovery: row-normalized embeddings -> PCA -> K-means ->
// temperature-calibrated soft assignment onto the aspect simplex.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "prefer/core.hpp"

namespace prefer::aspects {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Embedding matrix

struct EmbeddingMatrix {
  Matrix data;  // rows x dim
  bool normalized = false;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

inline EmbeddingMatrix normalize_rows(EmbeddingMatrix emb) {
  require(emb.rows() >= 1 && emb.dim() >= 1, "embedding matrix is empty");
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    require(emb.data.row(i).allFinite(),
            "embedding row " + std::to_string(i) + " has non-finite entries",
            ErrorCode::numerical);
    const double n = emb.data.row(i).norm();
    require(n > 0.0, "embedding row " + std::to_string(i) + " is zero",
            ErrorCode::numerical);
    emb.data.row(i) /= n;
  }
  emb.normalized = true;
  return emb;
}

/// Reads `{"rows":M,"dim":d,"dtype":"f32le"}\n` followed by M*d little-endian
/// float32 values, row-major.
inline EmbeddingMatrix read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line))
    throw Error(ErrorCode::parse_error, path + ": missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::parse_error, path + ": bad header: " + e.what());
  }
  const auto rows = header.value("rows", std::int64_t{-1});
  const auto dim = header.value("dim", std::int64_t{-1});
  const auto dtype = header.value("dtype", std::string{});
  require(rows >= 1 && dim >= 1, path + ": header needs positive rows and dim",
          ErrorCode::parse_error);
  require(dtype == "f32le", path + ": unsupported dtype '" + dtype + "'",
          ErrorCode::parse_error);
  std::vector<unsigned char> raw(static_cast<std::size_t>(rows * dim) * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw Error(ErrorCode::parse_error,
                path + ": truncated payload at byte offset " +
                    std::to_string(header_line.size() + 1 + in.gcount()));
  EmbeddingMatrix emb;
  emb.data.resize(rows, dim);
  for (std::int64_t i = 0; i < rows * dim; ++i) {
    const unsigned char* p = raw.data() + 4 * i;
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               static_cast<std::uint32_t>(p[1]) << 8 |
                               static_cast<std::uint32_t>(p[2]) << 16 |
                               static_cast<std::uint32_t>(p[3]) << 24;
    float f;
    std::memcpy(&f, &bits, sizeof f);
    emb.data(i / dim, i % dim) = static_cast<double>(f);
  }
  return emb;
}

inline void write_embeddings(const std::string& path, const Matrix& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
  nlohmann::json header{{"rows", data.rows()}, {"dim", data.cols()}, {"dtype", "f32le"}};
  out << header.dump() << '\n';
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const float f = static_cast<float>(data(i, j));
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      const unsigned char b[4] = {static_cast<unsigned char>(bits & 0xFF),
                                  static_cast<unsigned char>((bits >> 8) & 0xFF),
                                  static_cast<unsigned char>((bits >> 16) & 0xFF),
                                  static_cast<unsigned char>((bits >> 24) & 0xFF)};
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
  if (!out) throw Error(ErrorCode::io, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// PCA

struct PcaTarget {
  std::optional<int> components;
  std::optional<double> variance_target;

  static PcaTarget fixed(int m) { return {m, std::nullopt}; }
  static PcaTarget variance(double v) { return {std::nullopt, v}; }
};

struct PcaModel {
  Vector mean;                 // d
  Matrix basis;                // m x d, orthonormal rows
  Vector explained_variance;   // m, nonincreasing
  double total_variance = 0.0;

  int components() const { return static_cast<int>(basis.rows()); }

  Vector project(const Vector& row) const { return basis * (row - mean); }

  Vector reconstruct(const Vector& reduced) const {
    return basis.transpose() * reduced + mean;
  }

  double explained_ratio() const {
    return total_variance > 0.0 ? explained_variance.sum() / total_variance : 0.0;
  }
};

/// Exact PCA by SVD of the mean-centred matrix.
inline PcaModel fit_pca(const EmbeddingMatrix& emb, const PcaTarget& target) {
  require(emb.normalized, "fit_pca expects row-normalized embeddings");
  require(target.components.has_value() != target.variance_target.has_value(),
          "give exactly one of components or variance_target");
  const Eigen::Index n = emb.rows();
  const Eigen::Index d = emb.dim();
  PcaModel model;
  model.mean = emb.data.colwise().mean().transpose();
  const Matrix centered = emb.data.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const Vector variances = sv.array().square() / denom;
  model.total_variance = variances.sum();

  const double tol = static_cast<double>(std::max(n, d)) *
                     std::numeric_limits<double>::epsilon() *
                     (sv.size() > 0 ? sv(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  require(rank > 0, "embeddings have zero total variance (all rows identical)",
          ErrorCode::numerical);

  Eigen::Index m = 0;
  if (target.components) {
    m = *target.components;
    require(m >= 1 && m <= std::min(n, d),
            "components must be in [1, min(rows, dim)] = [1, " +
                std::to_string(std::min(n, d)) + "]");
    require(m <= rank, "requested " + std::to_string(m) +
                           " components but the data has rank " +
                           std::to_string(rank),
            ErrorCode::numerical);
  } else {
    const double v = *target.variance_target;
    require(v > 0.0 && v <= 1.0, "variance_target must be in (0, 1]");
    double cumulative = 0.0;
    for (m = 0; m < rank;) {
      cumulative += variances(m);
      ++m;
      if (cumulative / model.total_variance >= v - 1e-12) break;
    }
  }
  model.basis = svd.matrixV().leftCols(m).transpose();
  model.explained_variance = variances.head(m);
  return model;
}

/// Reduced representations of every row.
inline Matrix project_rows(const PcaModel& pca, const Matrix& data) {
  return (data.rowwise() - pca.mean.transpose()) * pca.basis.transpose();
}

// ---------------------------------------------------------------------------
// K-means

struct KMeansOptions {
  int k = 10;
  int n_init = 10;
  int max_iter = 300;
  double tol = 1e-10;
  std::uint64_t seed = 7;
};

struct KMeansResult {
  Matrix centroids;                    // k x m
  std::vector<int> labels;             // per row
  double inertia = 0.0;
  std::vector<double> inertia_history;  // per Lloyd iteration of the best restart
  int best_restart = 0;
};

namespace detail {

inline double sq_dist(const Matrix& x, Eigen::Index i, const Matrix& c, Eigen::Index k) {
  return (x.row(i) - c.row(k)).squaredNorm();
}

inline Matrix kmeanspp_init(const Matrix& x, int k, rng::Stream& stream) {
  const Eigen::Index n = x.rows();
  Matrix c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(stream.next_index(n)));
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      best[i] = std::min(best[i], sq_dist(x, i, c, j - 1));
      total += best[i];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = stream.next_uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= best[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(stream.next_index(n));
    }
    c.row(j) = x.row(pick);
  }
  return c;
}

/// Assigns each row to its nearest centroid (lowest index on ties);
/// returns the resulting inertia.
inline double assign(const Matrix& x, const Matrix& c, std::vector<int>& labels,
                     std::vector<double>* costs = nullptr) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best_k = 0;
    double best_d = sq_dist(x, i, c, 0);
    for (Eigen::Index k = 1; k < c.rows(); ++k) {
      const double d = sq_dist(x, i, c, k);
      if (d < best_d) {
        best_d = d;
        best_k = static_cast<int>(k);
      }
    }
    labels[i] = best_k;
    if (costs) (*costs)[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace detail

/// Lloyd iterations from one k-means++ start. Empty clusters are re-seeded
/// from the point currently farthest from its centroid.
inline KMeansResult lloyd(const Matrix& x, const KMeansOptions& opt, int restart) {
  const Eigen::Index n = x.rows();
  rng::Stream stream(rng::hash({opt.seed, static_cast<std::uint64_t>(restart), 0x6B6D65616E73ULL}));
  KMeansResult r;
  r.centroids = detail::kmeanspp_init(x, opt.k, stream);
  r.labels.assign(n, -1);
  std::vector<double> costs(n);
  std::vector<int> previous;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    r.inertia = detail::assign(x, r.centroids, r.labels, &costs);
    r.inertia_history.push_back(r.inertia);
    if (r.labels == previous) break;
    previous = r.labels;

    Matrix sums = Matrix::Zero(opt.k, x.cols());
    std::vector<Eigen::Index> counts(opt.k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.labels[i]) += x.row(i);
      ++counts[r.labels[i]];
    }
    double shift = 0.0;
    for (int k = 0; k < opt.k; ++k) {
      Eigen::RowVectorXd next;
      if (counts[k] > 0) {
        next = sums.row(k) / static_cast<double>(counts[k]);
      } else {
        const auto far = static_cast<Eigen::Index>(
            std::max_element(costs.begin(), costs.end()) - costs.begin());
        next = x.row(far);
        costs[far] = 0.0;
      }
      shift += (next - r.centroids.row(k)).squaredNorm();
      r.centroids.row(k) = next;
    }
    if (shift <= opt.tol) {
      r.inertia = detail::assign(x, r.centroids, r.labels, &costs);
      r.inertia_history.push_back(r.inertia);
      break;
    }
  }
  r.best_restart = restart;
  return r;
}

inline KMeansResult fit_kmeans(const Matrix& reduced, const KMeansOptions& opt) {
  require(opt.k >= 1, "K must be >= 1");
  require(opt.n_init >= 1, "n_init must be >= 1");
  require(opt.k <= reduced.rows(), "K=" + std::to_string(opt.k) + " exceeds the " +
                                       std::to_string(reduced.rows()) + " available points");
  std::optional<KMeansResult> best;
  for (int restart = 0; restart < opt.n_init; ++restart) {
    KMeansResult r = lloyd(reduced, opt, restart);
    if (!best || r.inertia < best->inertia) best = std::move(r);
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Temperature calibration and soft assignment

/// Squared distances to every centroid.
inline Vector squared_distances(const Matrix& centroids, const Vector& point) {
  return (centroids.rowwise() - point.transpose()).rowwise().squaredNorm();
}

/// d2_(2) - d2_(1) for one point.
inline double nearest_gap(const Matrix& centroids, const Vector& point) {
  require(centroids.rows() >= 2, "the nearest-centroid gap needs >= 2 centroids");
  const Vector d = squared_distances(centroids, point);
  double first = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    if (d(k) < first) {
      second = first;
      first = d(k);
    } else if (d(k) < second) {
      second = d(k);
    }
  }
  return second - first;
}

/// Median with the midpoint of the two central order statistics for even n.
inline double median(std::vector<double> values) {
  require(!values.empty(), "median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

/// Chooses tau so a point with the median gap gives the nearest centroid
/// r times the membership of the runner-up: tau = log(r) / median gap.
inline double calibrate_tau(const Matrix& sample, const Matrix& centroids, double r) {
  require(r > 1.0, "r must exceed 1");
  require(sample.rows() >= 1, "tau calibration needs a non-empty sample");
  std::vector<double> gaps;
  gaps.reserve(sample.rows());
  for (Eigen::Index i = 0; i < sample.rows(); ++i)
    gaps.push_back(nearest_gap(centroids, sample.row(i).transpose()));
  const double med = median(std::move(gaps));
  require(med > 0.0,
          "median nearest-centroid gap is zero; perturb the data or pick another K",
          ErrorCode::numerical);
  return std::log(r) / med;
}

/// Row indices of a uniform sample of at most `limit` rows (sorted).
inline std::vector<Eigen::Index> sample_rows(Eigen::Index rows, Eigen::Index limit,
                                             std::uint64_t seed) {
  std::vector<Eigen::Index> idx(rows);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (rows <= limit) return idx;
  rng::Stream stream(rng::hash({seed, 0x746175ULL}));
  for (Eigen::Index i = 0; i < limit; ++i) {  // partial Fisher-Yates
    const auto j = i + static_cast<Eigen::Index>(stream.next_index(rows - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// phi_k proportional to exp(-tau * |x - c_k|^2), max-subtracted.
inline AspectVector soft_assign_reduced(const Matrix& centroids, double tau,
                                        const Vector& reduced) {
  require(reduced.allFinite(), "non-finite reduced vector", ErrorCode::numerical);
  const Vector d = squared_distances(centroids, reduced);
  const double dmin = d.minCoeff();
  std::vector<double> w(d.size());
  for (Eigen::Index k = 0; k < d.size(); ++k) w[k] = std::exp(-tau * (d(k) - dmin));
  return AspectVector::from_weights(std::move(w));
}

// ---------------------------------------------------------------------------
// Frozen aspect model

struct AspectModel {
  PcaModel pca;
  Matrix centroids;  // K x m
  double tau = 1.0;

  int K() const { return static_cast<int>(centroids.rows()); }
  int m() const { return pca.components(); }

  void validate() const {
    require(K() >= 2, "aspect model needs K >= 2");
    require(tau > 0.0 && std::isfinite(tau), "tau must be positive and finite");
    require(centroids.allFinite(), "centroids must be finite");
    require(centroids.cols() == pca.basis.rows(), "centroid dimension != PCA components");
    const Matrix gram = pca.basis * pca.basis.transpose();
    require((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-6,
            "PCA basis rows are not orthonormal");
  }

  Vector reduce(const Vector& emb_row) const { return pca.project(emb_row); }

  /// Soft assignment of a raw (row-normalized) embedding.
  AspectVector soft_assign(const Vector& emb_row) const {
    require(emb_row.allFinite(), "non-finite embedding entries", ErrorCode::numerical);
    require(emb_row.size() == pca.mean.size(), "embedding dimension mismatch");
    return aspects::soft_assign_reduced(centroids, tau, reduce(emb_row));
  }

  AspectVector soft_assign_reduced(const Vector& reduced) const {
    return aspects::soft_assign_reduced(centroids, tau, reduced);
  }
};

/// Per-sentence features derived from a model: reduced vectors and phi.
struct SentenceFeatures {
  std::vector<Vector> reduced;
  std::vector<AspectVector> phi;

  std::size_t size() const { return phi.size(); }
};

inline SentenceFeatures compute_features(const AspectModel& model, const Matrix& reduced) {
  SentenceFeatures f;
  f.reduced.reserve(reduced.rows());
  f.phi.reserve(reduced.rows());
  for (Eigen::Index i = 0; i < reduced.rows(); ++i) {
    f.reduced.emplace_back(reduced.row(i).transpose());
    f.phi.push_back(model.soft_assign_reduced(f.reduced.back()));
  }
  return f;
}

struct DiscoveryOptions {
  PcaTarget pca = PcaTarget::variance(0.5);
  KMeansOptions kmeans;
  double r = 10.0;
  Eigen::Index tau_sample = 100000;
};

struct Discovery {
  AspectModel model;
  Matrix reduced;
  KMeansResult clustering;
  SentenceFeatures features;
};

/// The full offline pipeline over already normalized embeddings.
inline Discovery discover(const EmbeddingMatrix& emb, const DiscoveryOptions& opt) {
  Discovery out;
  out.model.pca = fit_pca(emb, opt.pca);
  out.reduced = project_rows(out.model.pca, emb.data);
  out.clustering = fit_kmeans(out.reduced, opt.kmeans);
  out.model.centroids = out.clustering.centroids;
  const auto rows = sample_rows(out.reduced.rows(), opt.tau_sample, opt.kmeans.seed);
  Matrix sample(static_cast<Eigen::Index>(rows.size()), out.reduced.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    sample.row(static_cast<Eigen::Index>(i)) = out.reduced.row(rows[i]);
  out.model.tau = calibrate_tau(sample, out.model.centroids, opt.r);
  out.features = compute_features(out.model, out.reduced);
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct ClusterScores {
  int k = 0;
  double inertia = 0.0;
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  double davies_bouldin = 0.0;
};

/// Mean silhouette over all points; singleton clusters score 0.
inline double silhouette(const Matrix& x, const std::vector<int>& labels, int k) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> sizes(k, 0);
  for (int l : labels) ++sizes[l];
  double total = 0.0;
  std::vector<double> sum_to(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sum_to.begin(), sum_to.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sum_to[labels[j]] += (x.row(i) - x.row(j)).norm();
    const int own = labels[i];
    if (sizes[own] <= 1) continue;
    const double a = sum_to[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, sum_to[c] / static_cast<double>(sizes[c]));
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

inline double calinski_harabasz(const Matrix& x, const std::vector<int>& labels,
                                const Matrix& centroids) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = centroids.rows();
  if (k < 2 || n <= k) return 0.0;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  std::vector<Eigen::Index> sizes(k, 0);
  double within = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    ++sizes[labels[i]];
    within += (x.row(i) - centroids.row(labels[i])).squaredNorm();
  }
  double between = 0.0;
  for (Eigen::Index c = 0; c < k; ++c)
    between += static_cast<double>(sizes[c]) * (centroids.row(c) - mean).squaredNorm();
  if (within <= 0.0) return std::numeric_limits<double>::infinity();
  return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

inline double davies_bouldin(const Matrix& x, const std::vector<int>& labels,
                             const Matrix& centroids) {
  const Eigen::Index k = centroids.rows();
  std::vector<double> scatter(k, 0.0);
  std::vector<Eigen::Index> sizes(k, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    scatter[labels[i]] += (x.row(i) - centroids.row(labels[i])).norm();
    ++sizes[labels[i]];
  }
  for (Eigen::Index c = 0; c < k; ++c)
    if (sizes[c] > 0) scatter[c] /= static_cast<double>(sizes[c]);
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      const double sep = (centroids.row(i) - centroids.row(j)).norm();
      if (sep > 0.0) worst = std::max(worst, (scatter[i] + scatter[j]) / sep);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

inline ClusterScores score_clustering(const Matrix& x, const KMeansResult& r) {
  ClusterScores s;
  s.k = static_cast<int>(r.centroids.rows());
  s.inertia = r.inertia;
  s.silhouette = silhouette(x, r.labels, s.k);
  s.calinski_harabasz = calinski_harabasz(x, r.labels, r.centroids);
  s.davies_bouldin = davies_bouldin(x, r.labels, r.centroids);
  return s;
}

/// Clustering diagnostics for each candidate K (silhouette is quadratic in
/// the rows, so callers pass a sample for large corpora).
inline std::vector<ClusterScores> k_selection_report(const Matrix& reduced,
                                                     const std::vector<int>& candidates,
                                                     KMeansOptions opt) {
  std::vector<ClusterScores> out;
  for (int k : candidates) {
    require(k >= 2, "candidate K must be >= 2");
    opt.k = k;
    out.push_back(score_clustering(reduced, fit_kmeans(reduced, opt)));
  }
  return out;
}

struct UserProfileDiagnostic {
  std::string user_id;
  AspectVector w_hat_empirical;
  double normalized_entropy = 0.0;
};

/// Mean phi over each user's sentences; users without sentences do not appear.
inline std::vector<UserProfileDiagnostic> user_profiles(
    const std::vector<AspectVector>& phi, const std::vector<std::string>& user_of) {
  require(phi.size() == user_of.size(), "phi table and user ids differ in length");
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> acc;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    auto& [sum, count] = acc[user_of[i]];
    if (sum.empty()) sum.assign(phi[i].size(), 0.0);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += phi[i][k];
    ++count;
  }
  std::vector<UserProfileDiagnostic> out;
  for (auto& [user, entry] : acc) {
    auto& [sum, count] = entry;
    for (double& v : sum) v /= static_cast<double>(count);
    UserProfileDiagnostic d;
    d.user_id = user;
    d.w_hat_empirical = AspectVector::from_weights(sum);
    d.normalized_entropy = normalized_entropy(d.w_hat_empirical);
    out.push_back(std::move(d));
  }
  return out;
}

/// m_k = sum_i phi_ik / sum_{j,i} phi_ij.
inline AspectVector corpus_aspect_mass(const std::vector<AspectVector>& phi) {
  require(!phi.empty(), "empty phi table");
  std::vector<double> mass(phi.front().size(), 0.0);
  for (const auto& p : phi)
    for (std::size_t k = 0; k < mass.size(); ++k) mass[k] += p[k];
  return AspectVector::from_weights(std::move(mass));
}

// ---------------------------------------------------------------------------
// JSON persistence

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows[0].size(), "ragged matrix in JSON", ErrorCode::parse_error);
    for (std::size_t c = 0; c < rows[i].size(); ++c) m(i, c) = rows[i][c];
  }
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Model document; `features` (per-sentence reduced vectors) is optional and
/// lets consumers run without the embedding file.
inline nlohmann::json to_json(const AspectModel& model, const SentenceFeatures* features = nullptr) {
  nlohmann::json j{{"K", model.K()},
                   {"m", model.m()},
                   {"tau", model.tau},
                   {"mean", vector_to_json(model.pca.mean)},
                   {"basis", matrix_to_json(model.pca.basis)},
                   {"explained_variance", vector_to_json(model.pca.explained_variance)},
                   {"total_variance", model.pca.total_variance},
                   {"centroids", matrix_to_json(model.centroids)}};
  if (features) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : features->reduced) rows.push_back(vector_to_json(r));
    j["features"] = std::move(rows);
  }
  return j;
}

inline AspectModel model_from_json(const nlohmann::json& j) {
  AspectModel m;
  try {
    m.tau = j.at("tau").get<double>();
    m.pca.mean = vector_from_json(j.at("mean"));
    m.pca.basis = matrix_from_json(j.at("basis"));
    m.pca.explained_variance = vector_from_json(j.at("explained_variance"));
    m.pca.total_variance = j.value("total_variance", m.pca.explained_variance.sum());
    m.centroids = matrix_from_json(j.at("centroids"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("aspect model: ") + e.what());
  }
  require(j.value("K", m.K()) == m.K() && j.value("m", m.m()) == m.m(),
          "aspect model: K/m header disagrees with matrices", ErrorCode::parse_error);
  m.validate();
  return m;
}

inline std::optional<SentenceFeatures> features_from_json(const AspectModel& model,
                                                          const nlohmann::json& j) {
  if (!j.contains("features")) return std::nullopt;
  SentenceFeatures f;
  for (const auto& row : j.at("features")) {
    Vector r = vector_from_json(row);
    require(r.size() == model.m(), "feature row has wrong dimension", ErrorCode::parse_error);
    f.phi.push_back(model.soft_assign_reduced(r));
    f.reduced.push_back(std::move(r));
  }
  return f;
}

}  // namespace prefer::aspects
