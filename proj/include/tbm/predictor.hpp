#pragma once

#include <cmath>
#include <cstddef>
#include <set>
#include <vector>

#include "tbm/errors.hpp"
#include "tbm/matrix.hpp"

namespace tbm {

struct fit_config {
  double l2_penalty = 1e-4;   // on weights, never on intercepts
  int max_epochs = 2000;
  double learning_rate = 0.1;
  double convergence_tol = 1e-8;
};

struct regression_fit {
  std::vector<double> weights;
  double intercept = 0.0;
};

struct classification_fit {
  std::vector<std::vector<double>> weights;  // [class][concept]
  std::vector<double> intercepts;            // [class]
};

// Raw score before the intercept-last sum; summation order is fixed
// (ascending concept index) so contributions add back to it bit-exactly.
inline double predict_regression(const std::vector<double>& weights, double intercept,
                                 const std::vector<double>& x) {
  if (weights.size() != x.size())
    fail(errc::dimension_mismatch, "feature vector length does not match weights");
  double acc = intercept;
  for (size_t j = 0; j < weights.size(); ++j) acc += weights[j] * x[j];
  return acc;
}

// Mean squared error plus L2 on weights; the quantity both the closed form
// and the gradient oracle minimize.
inline double regression_objective(const matrix& X, const std::vector<double>& y,
                                   const std::vector<double>& w, double b, double l2) {
  double acc = 0.0;
  for (size_t i = 0; i < X.rows; ++i) {
    double p = b;
    for (size_t j = 0; j < X.cols; ++j) p += w[j] * X(i, j);
    double r = p - y[i];
    acc += r * r;
  }
  acc /= static_cast<double>(X.rows);
  for (double wj : w) acc += l2 * wj * wj;
  return acc;
}

namespace detail {

// Cholesky solve of an SPD system; the ridge diagonal keeps it SPD for any
// penalty > 0 regardless of column rank.
inline std::vector<double> solve_spd(std::vector<std::vector<double>> M, std::vector<double> v) {
  size_t n = M.size();
  std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
  for (size_t j = 0; j < n; ++j) {
    double d = M[j][j];
    for (size_t k = 0; k < j; ++k) d -= L[j][k] * L[j][k];
    if (!(d > 0.0)) fail(errc::data_error, "normal equations not positive definite");
    L[j][j] = std::sqrt(d);
    for (size_t i = j + 1; i < n; ++i) {
      double s = M[i][j];
      for (size_t k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
      L[i][j] = s / L[j][j];
    }
  }
  // forward then back substitution
  std::vector<double> z(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double s = v[i];
    for (size_t k = 0; k < i; ++k) s -= L[i][k] * z[k];
    z[i] = s / L[i][i];
  }
  std::vector<double> x(n, 0.0);
  for (size_t ii = n; ii-- > 0;) {
    double s = z[ii];
    for (size_t k = ii + 1; k < n; ++k) s -= L[k][ii] * x[k];
    x[ii] = s / L[ii][ii];
  }
  return x;
}

}  // namespace detail

// Closed-form ridge fit: ((1/n) A'A + l2*D) theta = (1/n) A'y with the
// intercept column unpenalized.
inline regression_fit fit_regression(const matrix& X, const std::vector<double>& y,
                                     const fit_config& cfg = {}) {
  if (X.rows == 0 || X.rows != y.size())
    fail(errc::length_mismatch, "rows of X and y differ or are empty");
  size_t d = X.cols;
  size_t n = X.rows;
  double inv_n = 1.0 / static_cast<double>(n);
  std::vector<std::vector<double>> M(d + 1, std::vector<double>(d + 1, 0.0));
  std::vector<double> v(d + 1, 0.0);
  auto cell = [&](size_t i, size_t j) { return j < d ? X(i, j) : 1.0; };
  for (size_t a = 0; a <= d; ++a) {
    for (size_t b = a; b <= d; ++b) {
      double s = 0.0;
      for (size_t i = 0; i < n; ++i) s += cell(i, a) * cell(i, b);
      M[a][b] = M[b][a] = s * inv_n;
    }
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += cell(i, a) * y[i];
    v[a] = s * inv_n;
  }
  for (size_t j = 0; j < d; ++j) M[j][j] += cfg.l2_penalty;
  std::vector<double> theta = detail::solve_spd(std::move(M), std::move(v));
  regression_fit fit;
  fit.weights.assign(theta.begin(), theta.begin() + d);
  fit.intercept = theta[d];
  return fit;
}

inline std::vector<double> class_logits(const classification_fit& f, const std::vector<double>& x) {
  std::vector<double> out(f.weights.size(), 0.0);
  for (size_t c = 0; c < f.weights.size(); ++c) {
    if (f.weights[c].size() != x.size())
      fail(errc::dimension_mismatch, "feature vector length does not match weights");
    double acc = f.intercepts[c];
    for (size_t j = 0; j < x.size(); ++j) acc += f.weights[c][j] * x[j];
    out[c] = acc;
  }
  return out;
}

// Softmax with max subtraction; probabilities sum to 1 within 1e-9.
inline std::vector<double> softmax(std::vector<double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logits) v /= z;
  return logits;
}

// Argmax; exact ties resolve to the earlier class in the fixed class order.
inline size_t predict_class(const classification_fit& f, const std::vector<double>& x) {
  std::vector<double> logits = class_logits(f, x);
  size_t best = 0;
  for (size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

// Mean cross-entropy plus L2 on weights.
inline double classification_objective(const matrix& X, const std::vector<size_t>& y,
                                       const classification_fit& f, double l2) {
  double acc = 0.0;
  for (size_t i = 0; i < X.rows; ++i) {
    std::vector<double> p = softmax(class_logits(f, X.row(i)));
    acc -= std::log(std::max(p[y[i]], 1e-300));
  }
  acc /= static_cast<double>(X.rows);
  for (const auto& row : f.weights)
    for (double w : row) acc += l2 * w * w;
  return acc;
}

// Analytic gradient, exposed so tests can check it against finite differences.
inline void classification_gradient(const matrix& X, const std::vector<size_t>& y,
                                    const classification_fit& f, double l2,
                                    std::vector<std::vector<double>>& gw,
                                    std::vector<double>& gb) {
  size_t k = f.weights.size();
  size_t d = X.cols;
  double inv_n = 1.0 / static_cast<double>(X.rows);
  gw.assign(k, std::vector<double>(d, 0.0));
  gb.assign(k, 0.0);
  for (size_t i = 0; i < X.rows; ++i) {
    std::vector<double> p = softmax(class_logits(f, X.row(i)));
    for (size_t c = 0; c < k; ++c) {
      double delta = (p[c] - (y[i] == c ? 1.0 : 0.0)) * inv_n;
      gb[c] += delta;
      for (size_t j = 0; j < d; ++j) gw[c][j] += delta * X(i, j);
    }
  }
  for (size_t c = 0; c < k; ++c)
    for (size_t j = 0; j < d; ++j) gw[c][j] += 2.0 * l2 * f.weights[c][j];
}

// Full-batch gradient descent from zero init. Deterministic; the step is
// retried at half the rate whenever the objective would increase, so the loss
// sequence is non-increasing.
inline classification_fit fit_classification(const matrix& X, const std::vector<size_t>& y,
                                             size_t n_classes, const fit_config& cfg = {}) {
  if (X.rows == 0 || X.rows != y.size())
    fail(errc::length_mismatch, "rows of X and y differ or are empty");
  std::set<size_t> distinct(y.begin(), y.end());
  if (n_classes < 2 || distinct.size() < 2)
    fail(errc::single_class_training_set, "need at least two classes present to fit");
  classification_fit f;
  f.weights.assign(n_classes, std::vector<double>(X.cols, 0.0));
  f.intercepts.assign(n_classes, 0.0);

  double lr = cfg.learning_rate;
  double loss = classification_objective(X, y, f, cfg.l2_penalty);
  std::vector<std::vector<double>> gw;
  std::vector<double> gb;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    classification_gradient(X, y, f, cfg.l2_penalty, gw, gb);
    // Let the step recover between epochs; a halving forced once must not
    // pin every later epoch to a crawl.
    lr = std::min(cfg.learning_rate, lr * 2.0);
    classification_fit trial;
    double new_loss = 0.0;
    bool stepped = false;
    while (lr >= 1e-12) {
      trial = f;
      for (size_t c = 0; c < n_classes; ++c) {
        trial.intercepts[c] -= lr * gb[c];
        for (size_t j = 0; j < X.cols; ++j) trial.weights[c][j] -= lr * gw[c][j];
      }
      new_loss = classification_objective(X, y, trial, cfg.l2_penalty);
      if (new_loss <= loss) {
        stepped = true;
        break;
      }
      lr *= 0.5;
    }
    if (!stepped) break;
    f = std::move(trial);
    double delta = loss - new_loss;
    loss = new_loss;
    if (delta < cfg.convergence_tol) break;
  }
  return f;
}

// ---- explanation primitives ------------------------------------------------

inline std::vector<double> importances_regression(const std::vector<double>& weights) {
  std::vector<double> out(weights.size(), 0.0);
  for (size_t j = 0; j < weights.size(); ++j) out[j] = std::fabs(weights[j]);
  return out;
}

inline std::vector<double> importances_classification(
    const std::vector<std::vector<double>>& weights) {
  if (weights.empty()) return {};
  std::vector<double> out(weights[0].size(), 0.0);
  for (const auto& row : weights)
    for (size_t j = 0; j < row.size(); ++j) out[j] += std::fabs(row[j]);
  for (double& v : out) v /= static_cast<double>(weights.size());
  return out;
}

// Per-concept additive terms; summed in index order on top of the intercept
// they reproduce predict_regression exactly.
inline std::vector<double> contributions(const std::vector<double>& weights,
                                         const std::vector<double>& x) {
  if (weights.size() != x.size())
    fail(errc::dimension_mismatch, "feature vector length does not match weights");
  std::vector<double> out(weights.size(), 0.0);
  for (size_t j = 0; j < weights.size(); ++j) out[j] = weights[j] * x[j];
  return out;
}

}  // namespace tbm
