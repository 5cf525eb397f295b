#pragma once

// Template definitions for losses.hpp. Everything accumulates in double and
// casts once at the boundary, so float32 and float64 instantiations agree to
// float32 rounding.

#include <algorithm>
#include <limits>

namespace effssl::loss {

namespace detail {

template <typename T>
std::vector<double> row_norms(const Mat<T>& m) {
  std::vector<double> norms(static_cast<size_t>(m.rows));
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) s += static_cast<double>(m.at(r, c)) * m.at(r, c);
    norms[static_cast<size_t>(r)] = std::sqrt(s);
    if (norms[static_cast<size_t>(r)] == 0.0)
      throw std::domain_error("zero-norm embedding row");
  }
  return norms;
}

// Stack a/b into one 2B-row matrix of unit rows (doubles).
template <typename T>
void normalized_stack(const Mat<T>& a, const Mat<T>& b, std::vector<double>& u,
                      std::vector<double>& norms) {
  const int bsz = a.rows, d = a.cols;
  u.assign(static_cast<size_t>(2 * bsz) * d, 0.0);
  norms.assign(static_cast<size_t>(2 * bsz), 0.0);
  for (int r = 0; r < 2 * bsz; ++r) {
    const Mat<T>& src = r < bsz ? a : b;
    const int rr = r < bsz ? r : r - bsz;
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += static_cast<double>(src.at(rr, c)) * src.at(rr, c);
    const double n = std::sqrt(s);
    if (n == 0.0) throw std::domain_error("zero-norm embedding row");
    norms[static_cast<size_t>(r)] = n;
    for (int c = 0; c < d; ++c)
      u[static_cast<size_t>(r) * d + c] = static_cast<double>(src.at(rr, c)) / n;
  }
}

inline double dot(const double* x, const double* y, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += x[i] * y[i];
  return s;
}

// Map gradient w.r.t. unit rows back to the raw inputs and split views.
template <typename T>
void chain_through_normalization(const std::vector<double>& u, const std::vector<double>& norms,
                                 const std::vector<double>& grad_u, int bsz, int d,
                                 Mat<T>& grad_a, Mat<T>& grad_b) {
  grad_a = Mat<T>(bsz, d);
  grad_b = Mat<T>(bsz, d);
  for (int r = 0; r < 2 * bsz; ++r) {
    const double* ur = u.data() + static_cast<size_t>(r) * d;
    const double* gr = grad_u.data() + static_cast<size_t>(r) * d;
    const double inner = dot(gr, ur, d);
    Mat<T>& dst = r < bsz ? grad_a : grad_b;
    const int rr = r < bsz ? r : r - bsz;
    for (int c = 0; c < d; ++c)
      dst.at(rr, c) = static_cast<T>((gr[c] - inner * ur[c]) / norms[static_cast<size_t>(r)]);
  }
}

}  // namespace detail

template <typename T>
T cosine_sim(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("cosine_sim: size mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw std::domain_error("cosine_sim: zero-norm input");
  return static_cast<T>(ab / (std::sqrt(aa) * std::sqrt(bb)));
}

template <typename T>
PairLossResult<T> ntxent(const Mat<T>& z_a, const Mat<T>& z_b, T temperature,
                         const NegativeMask& mask, DenominatorMode mode) {
  const int bsz = z_a.rows, d = z_a.cols;
  if (bsz < 2) throw std::invalid_argument("ntxent: batch size must be >= 2");
  if (z_b.rows != bsz || z_b.cols != d) throw std::invalid_argument("ntxent: shape mismatch");
  if (mask.b != bsz) throw std::invalid_argument("ntxent: mask size mismatch");
  const double temp = static_cast<double>(temperature);
  if (!(temp > 0.0)) throw std::invalid_argument("ntxent: temperature must be positive");

  std::vector<double> u, norms;
  detail::normalized_stack(z_a, z_b, u, norms);
  const int rows = 2 * bsz;
  std::vector<double> grad_u(static_cast<size_t>(rows) * d, 0.0);

  auto urow = [&](int r) { return u.data() + static_cast<size_t>(r) * d; };
  auto img = [&](int r) { return r % bsz; };

  double total = 0.0;
  std::vector<int> terms;
  std::vector<double> logits;
  for (int r = 0; r < rows; ++r) {
    const int pos = (r + bsz) % rows;
    const double pos_logit = detail::dot(urow(r), urow(pos), d) / temp;

    terms.clear();
    logits.clear();
    for (int s = 0; s < rows; ++s) {
      if (img(s) == img(r)) continue;  // own views never negatives
      if (!mask.allowed(img(r), img(s))) continue;
      terms.push_back(s);
      logits.push_back(detail::dot(urow(r), urow(s), d) / temp);
    }
    if (terms.empty())
      throw std::domain_error("ntxent: degenerate anchor, no admissible negatives");
    if (mode == DenominatorMode::Standard) {
      terms.push_back(pos);
      logits.push_back(pos_logit);
    }

    double mx = -std::numeric_limits<double>::infinity();
    for (double l : logits) mx = std::max(mx, l);
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - mx);
    const double log_denom = mx + std::log(denom);
    total += -pos_logit + log_denom;

    // dL_r/dS[r][s] terms, scaled later by 1/(2B). Each similarity S[r][s]
    // contributes gradient to both rows r and s.
    auto add_pair = [&](int s, double coef) {
      const double* us = urow(s);
      const double* ur = urow(r);
      double* gr = grad_u.data() + static_cast<size_t>(r) * d;
      double* gs = grad_u.data() + static_cast<size_t>(s) * d;
      for (int c = 0; c < d; ++c) {
        gr[c] += coef * us[c];
        gs[c] += coef * ur[c];
      }
    };
    for (size_t k = 0; k < terms.size(); ++k) {
      const double p = std::exp(logits[k] - log_denom);
      add_pair(terms[k], p / temp);
    }
    add_pair(pos, -1.0 / temp);
  }

  PairLossResult<T> res;
  const double scale = 1.0 / static_cast<double>(rows);
  res.value = static_cast<T>(total * scale);
  for (auto& g : grad_u) g *= scale;
  detail::chain_through_normalization(u, norms, grad_u, bsz, d, res.grad_a, res.grad_b);
  return res;
}

template <typename T>
PairLossResult<T> ntxent(const Mat<T>& z_a, const Mat<T>& z_b, T temperature,
                         DenominatorMode mode) {
  return ntxent(z_a, z_b, temperature, NegativeMask(z_a.rows), mode);
}

template <typename T>
PairLossResult<T> supcon(const Mat<T>& z_a, const Mat<T>& z_b, const std::vector<int>& labels,
                         T temperature) {
  const int bsz = z_a.rows, d = z_a.cols;
  if (bsz < 2) throw std::invalid_argument("supcon: batch size must be >= 2");
  if (z_b.rows != bsz || z_b.cols != d) throw std::invalid_argument("supcon: shape mismatch");
  if (static_cast<int>(labels.size()) != bsz)
    throw std::invalid_argument("supcon: labels must cover every row");
  for (int l : labels)
    if (l < 0) throw std::invalid_argument("supcon: all rows must be labeled");
  const double temp = static_cast<double>(temperature);
  if (!(temp > 0.0)) throw std::invalid_argument("supcon: temperature must be positive");

  std::vector<double> u, norms;
  detail::normalized_stack(z_a, z_b, u, norms);
  const int rows = 2 * bsz;
  std::vector<double> grad_u(static_cast<size_t>(rows) * d, 0.0);
  auto urow = [&](int r) { return u.data() + static_cast<size_t>(r) * d; };
  auto label_of = [&](int r) { return labels[static_cast<size_t>(r % bsz)]; };

  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    std::vector<int> others;
    std::vector<double> logits;
    std::vector<char> is_pos;
    int pos_count = 0;
    for (int s = 0; s < rows; ++s) {
      if (s == r) continue;
      others.push_back(s);
      logits.push_back(detail::dot(urow(r), urow(s), d) / temp);
      const bool same_image = (s % bsz) == (r % bsz);
      const bool positive = same_image || label_of(s) == label_of(r);
      is_pos.push_back(positive ? 1 : 0);
      pos_count += positive ? 1 : 0;
    }

    double mx = -std::numeric_limits<double>::infinity();
    for (double l : logits) mx = std::max(mx, l);
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - mx);
    const double log_denom = mx + std::log(denom);

    double anchor_loss = 0.0;
    for (size_t k = 0; k < others.size(); ++k)
      if (is_pos[k]) anchor_loss += -(logits[k] - log_denom);
    anchor_loss /= static_cast<double>(pos_count);
    total += anchor_loss;

    auto add_pair = [&](int s, double coef) {
      const double* us = urow(s);
      const double* ur = urow(r);
      double* gr = grad_u.data() + static_cast<size_t>(r) * d;
      double* gs = grad_u.data() + static_cast<size_t>(s) * d;
      for (int c = 0; c < d; ++c) {
        gr[c] += coef * us[c];
        gs[c] += coef * ur[c];
      }
    };
    for (size_t k = 0; k < others.size(); ++k) {
      const double p = std::exp(logits[k] - log_denom);
      const double pos_term = is_pos[k] ? 1.0 / static_cast<double>(pos_count) : 0.0;
      add_pair(others[k], (p - pos_term) / temp);
    }
  }

  PairLossResult<T> res;
  const double scale = 1.0 / static_cast<double>(rows);
  res.value = static_cast<T>(total * scale);
  for (auto& g : grad_u) g *= scale;
  detail::chain_through_normalization(u, norms, grad_u, bsz, d, res.grad_a, res.grad_b);
  return res;
}

namespace detail {

// d cos(p, t) / dp with t treated as a constant.
template <typename T>
void cosine_alignment(const Mat<T>& preds, const Mat<T>& targets, double weight, double& value,
                      Mat<T>& grad) {
  const int bsz = preds.rows, d = preds.cols;
  for (int i = 0; i < bsz; ++i) {
    double pp = 0.0, tt = 0.0, pt = 0.0;
    for (int c = 0; c < d; ++c) {
      pp += static_cast<double>(preds.at(i, c)) * preds.at(i, c);
      tt += static_cast<double>(targets.at(i, c)) * targets.at(i, c);
      pt += static_cast<double>(preds.at(i, c)) * targets.at(i, c);
    }
    const double np = std::sqrt(pp), nt = std::sqrt(tt);
    if (np == 0.0 || nt == 0.0) throw std::domain_error("alignment loss: zero-norm row");
    const double cos = pt / (np * nt);
    value += weight * cos;
    for (int c = 0; c < d; ++c) {
      const double dcos =
          targets.at(i, c) / (np * nt) - cos * preds.at(i, c) / (np * np);
      grad.at(i, c) += static_cast<T>(weight * dcos);
    }
  }
}

}  // namespace detail

template <typename T>
PairLossResult<T> byol_loss(const Mat<T>& p_a, const Mat<T>& p_b, const Mat<T>& t_a,
                            const Mat<T>& t_b) {
  const int bsz = p_a.rows, d = p_a.cols;
  if (p_b.rows != bsz || t_a.rows != bsz || t_b.rows != bsz || p_b.cols != d || t_a.cols != d ||
      t_b.cols != d)
    throw std::invalid_argument("byol_loss: shape mismatch");
  PairLossResult<T> res;
  res.grad_a = Mat<T>(bsz, d);
  res.grad_b = Mat<T>(bsz, d);
  double value = 0.0;
  const double w = -1.0 / (2.0 * bsz);
  detail::cosine_alignment(p_a, t_b, w, value, res.grad_a);
  detail::cosine_alignment(p_b, t_a, w, value, res.grad_b);
  res.value = static_cast<T>(value);
  return res;
}

template <typename T>
SimsiamResult<T> simsiam_loss(const Mat<T>& p_a, const Mat<T>& p_b, const Mat<T>& z_a,
                              const Mat<T>& z_b) {
  const int bsz = p_a.rows, d = p_a.cols;
  if (p_b.rows != bsz || z_a.rows != bsz || z_b.rows != bsz || p_b.cols != d || z_a.cols != d ||
      z_b.cols != d)
    throw std::invalid_argument("simsiam_loss: shape mismatch");
  SimsiamResult<T> res;
  res.grad_p_a = Mat<T>(bsz, d);
  res.grad_p_b = Mat<T>(bsz, d);
  res.grad_z_a = Mat<T>(bsz, d);  // stop-gradient: stays zero
  res.grad_z_b = Mat<T>(bsz, d);
  double value = 0.0;
  const double w = -1.0 / (2.0 * bsz);
  detail::cosine_alignment(p_a, z_b, w, value, res.grad_p_a);
  detail::cosine_alignment(p_b, z_a, w, value, res.grad_p_b);
  res.value = static_cast<T>(value);
  return res;
}

template <typename T>
Mat<T> sinkhorn(const Mat<T>& scores, T eps, int iters) {
  const int k = scores.rows, b = scores.cols;
  if (k < 1 || b < 1) throw std::invalid_argument("sinkhorn: empty score matrix");
  if (!(static_cast<double>(eps) > 0.0))
    throw std::invalid_argument("sinkhorn: eps must be positive");
  if (iters < 1) throw std::invalid_argument("sinkhorn: iters must be >= 1");

  std::vector<double> q(static_cast<size_t>(k) * b);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k * b; ++i) {
    const double v = static_cast<double>(scores.v[static_cast<size_t>(i)]);
    if (!std::isfinite(v)) throw std::invalid_argument("sinkhorn: non-finite score");
    mx = std::max(mx, v);
  }
  double total = 0.0;
  for (int i = 0; i < k * b; ++i) {
    q[static_cast<size_t>(i)] =
        std::exp((static_cast<double>(scores.v[static_cast<size_t>(i)]) - mx) /
                 static_cast<double>(eps));
    total += q[static_cast<size_t>(i)];
  }
  for (auto& x : q) x /= total;

  for (int it = 0; it < iters; ++it) {
    for (int r = 0; r < k; ++r) {
      double s = 0.0;
      for (int c = 0; c < b; ++c) s += q[static_cast<size_t>(r) * b + c];
      const double f = 1.0 / (static_cast<double>(k) * s);
      for (int c = 0; c < b; ++c) q[static_cast<size_t>(r) * b + c] *= f;
    }
    for (int c = 0; c < b; ++c) {
      double s = 0.0;
      for (int r = 0; r < k; ++r) s += q[static_cast<size_t>(r) * b + c];
      const double f = 1.0 / (static_cast<double>(b) * s);
      for (int r = 0; r < k; ++r) q[static_cast<size_t>(r) * b + c] *= f;
    }
  }

  Mat<T> out(k, b);
  for (int i = 0; i < k * b; ++i) out.v[static_cast<size_t>(i)] = static_cast<T>(q[static_cast<size_t>(i)]);
  return out;
}

template <typename T>
SwavResult<T> swav_loss_with_assignments(const Mat<T>& z_pred, const Mat<T>& prototypes,
                                         const Mat<T>& qhat, T temperature) {
  const int bsz = z_pred.rows, d = z_pred.cols, k = prototypes.rows;
  if (prototypes.cols != d || qhat.rows != bsz || qhat.cols != k)
    throw std::invalid_argument("swav_loss_with_assignments: shape mismatch");
  const double temp = static_cast<double>(temperature);

  SwavResult<T> res;
  res.grad_a = Mat<T>(bsz, d);
  res.grad_prototypes = Mat<T>(k, d);

  std::vector<double> logits(static_cast<size_t>(k));
  std::vector<double> probs(static_cast<size_t>(k));
  double value = 0.0;
  for (int i = 0; i < bsz; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double s = 0.0;
      for (int e = 0; e < d; ++e)
        s += static_cast<double>(z_pred.at(i, e)) * prototypes.at(c, e);
      logits[static_cast<size_t>(c)] = s / temp;
      mx = std::max(mx, logits[static_cast<size_t>(c)]);
    }
    double denom = 0.0;
    for (int c = 0; c < k; ++c) denom += std::exp(logits[static_cast<size_t>(c)] - mx);
    const double log_denom = mx + std::log(denom);
    for (int c = 0; c < k; ++c)
      probs[static_cast<size_t>(c)] = std::exp(logits[static_cast<size_t>(c)] - log_denom);

    for (int c = 0; c < k; ++c) {
      const double qh = static_cast<double>(qhat.at(i, c));
      if (qh != 0.0) value -= qh * (logits[static_cast<size_t>(c)] - log_denom);
      const double dlogit =
          (probs[static_cast<size_t>(c)] - qh) / (static_cast<double>(bsz) * temp);
      for (int e = 0; e < d; ++e) {
        res.grad_a.at(i, e) += static_cast<T>(dlogit * prototypes.at(c, e));
        res.grad_prototypes.at(c, e) += static_cast<T>(dlogit * z_pred.at(i, e));
      }
    }
  }
  res.value = static_cast<T>(value / static_cast<double>(bsz));
  return res;
}

template <typename T>
SwavResult<T> swav_loss_one_sided(const Mat<T>& z_pred, const Mat<T>& z_assign,
                                  const Mat<T>& prototypes, T temperature, T eps, int iters) {
  const int bsz = z_pred.rows, d = z_pred.cols, k = prototypes.rows;
  if (z_assign.rows != bsz || z_assign.cols != d || prototypes.cols != d)
    throw std::invalid_argument("swav_loss_one_sided: shape mismatch");

  // Assignment scores (K x B), sinkhorn, then per-sample assignment rows.
  Mat<T> scores(k, bsz);
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < bsz; ++i) {
      double s = 0.0;
      for (int e = 0; e < d; ++e)
        s += static_cast<double>(prototypes.at(c, e)) * z_assign.at(i, e);
      scores.at(c, i) = static_cast<T>(s);
    }
  const Mat<T> q = sinkhorn(scores, eps, iters);
  Mat<T> qhat(bsz, k);
  for (int i = 0; i < bsz; ++i)
    for (int c = 0; c < k; ++c)
      qhat.at(i, c) = static_cast<T>(static_cast<double>(q.at(c, i)) * bsz);

  SwavResult<T> res = swav_loss_with_assignments(z_pred, prototypes, qhat, temperature);
  res.grad_b = Mat<T>(bsz, d);  // assignment view is gradient-detached
  return res;
}

template <typename T>
SwavResult<T> swav_loss(const Mat<T>& z_a, const Mat<T>& z_b, const Mat<T>& prototypes,
                        T temperature, T eps, int iters) {
  SwavResult<T> ab = swav_loss_one_sided(z_a, z_b, prototypes, temperature, eps, iters);
  SwavResult<T> ba = swav_loss_one_sided(z_b, z_a, prototypes, temperature, eps, iters);
  SwavResult<T> res;
  res.value = static_cast<T>(0.5 * (static_cast<double>(ab.value) + ba.value));
  res.grad_a = Mat<T>(z_a.rows, z_a.cols);
  res.grad_b = Mat<T>(z_b.rows, z_b.cols);
  res.grad_prototypes = Mat<T>(prototypes.rows, prototypes.cols);
  for (size_t i = 0; i < res.grad_a.v.size(); ++i)
    res.grad_a.v[i] = static_cast<T>(0.5 * static_cast<double>(ab.grad_a.v[i]));
  for (size_t i = 0; i < res.grad_b.v.size(); ++i)
    res.grad_b.v[i] = static_cast<T>(0.5 * static_cast<double>(ba.grad_a.v[i]));
  for (size_t i = 0; i < res.grad_prototypes.v.size(); ++i)
    res.grad_prototypes.v[i] = static_cast<T>(
        0.5 * (static_cast<double>(ab.grad_prototypes.v[i]) + ba.grad_prototypes.v[i]));
  return res;
}

template <typename T>
ScalarLossResult<T> cross_entropy(const Mat<T>& logits, const std::vector<int>& labels) {
  const int rows = logits.rows, k = logits.cols;
  if (static_cast<int>(labels.size()) != rows)
    throw std::invalid_argument("cross_entropy: one label per row required");
  ScalarLossResult<T> res;
  res.grad = Mat<T>(rows, k);
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const int y = labels[static_cast<size_t>(r)];
    if (y < 0 || y >= k) throw std::invalid_argument("cross_entropy: label out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits.at(r, c)));
    double denom = 0.0;
    for (int c = 0; c < k; ++c) denom += std::exp(static_cast<double>(logits.at(r, c)) - mx);
    const double log_denom = mx + std::log(denom);
    total += -(static_cast<double>(logits.at(r, y)) - log_denom);
    for (int c = 0; c < k; ++c) {
      const double p = std::exp(static_cast<double>(logits.at(r, c)) - log_denom);
      res.grad.at(r, c) =
          static_cast<T>((p - (c == y ? 1.0 : 0.0)) / static_cast<double>(rows));
    }
  }
  res.value = static_cast<T>(total / static_cast<double>(rows));
  return res;
}

template <typename T>
Mat<T> normalize_rows(const Mat<T>& m) {
  const auto norms = detail::row_norms(m);
  Mat<T> out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c)
      out.at(r, c) = static_cast<T>(static_cast<double>(m.at(r, c)) / norms[static_cast<size_t>(r)]);
  return out;
}

template <typename T>
Mat<T> normalize_rows_backward(const Mat<T>& input, const Mat<T>& grad_normalized) {
  const auto norms = detail::row_norms(input);
  Mat<T> out(input.rows, input.cols);
  for (int r = 0; r < input.rows; ++r) {
    const double n = norms[static_cast<size_t>(r)];
    double inner = 0.0;
    for (int c = 0; c < input.cols; ++c)
      inner += static_cast<double>(grad_normalized.at(r, c)) * input.at(r, c) / n;
    for (int c = 0; c < input.cols; ++c) {
      const double ui = static_cast<double>(input.at(r, c)) / n;
      out.at(r, c) =
          static_cast<T>((static_cast<double>(grad_normalized.at(r, c)) - inner * ui) / n);
    }
  }
  return out;
}

}  // namespace effssl::loss
