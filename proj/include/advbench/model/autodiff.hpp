#pragma once

// Reverse-mode automatic differentiation over Eigen matrices. A Tape owns the
// computation graph; Vars are lightweight handles into it. Creation order is
// the topological order, so backward() is a single reverse sweep.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "advbench/common/errors.hpp"

namespace advbench::ad {

using Mat = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t idx) : tape_(tape), idx_(idx) {}
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t index() const { return idx_; }
  const Mat& value() const;
  const Mat& grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t idx_ = 0;
};

class Tape {
 public:
  Var leaf(Mat value, bool needs_grad = false) {
    nodes_.push_back(Node{std::move(value), Mat(), needs_grad, nullptr});
    return Var(this, nodes_.size() - 1);
  }
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value(std::size_t i) const { return nodes_[i].value; }
  bool needs_grad(std::size_t i) const { return nodes_[i].needs_grad; }

  Mat& grad_buf(std::size_t i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  const Mat& grad(std::size_t i) const {
    const Node& n = nodes_[i];
    if (n.grad.size() == 0) {
      throw NumericalError("autodiff: gradient was never computed for this node");
    }
    return n.grad;
  }

  // Registers a node computed from `parents`. The closure receives the tape
  // and the output gradient and must accumulate into the parents' buffers.
  Var make(Mat value, std::initializer_list<Var> parents,
           std::function<void(Tape&, const Mat&)> backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.index()].needs_grad;
    nodes_.push_back(Node{std::move(value), Mat(), needs,
                          needs ? std::move(backward) : nullptr});
    return Var(this, nodes_.size() - 1);
  }

  Var make(Mat value, const std::vector<Var>& parents,
           std::function<void(Tape&, const Mat&)> backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.index()].needs_grad;
    nodes_.push_back(Node{std::move(value), Mat(), needs,
                          needs ? std::move(backward) : nullptr});
    return Var(this, nodes_.size() - 1);
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse creation order.
  void backward(Var loss) {
    if (loss.tape() != this) throw NumericalError("autodiff: foreign tape");
    const Node& ln = nodes_[loss.index()];
    if (ln.value.rows() != 1 || ln.value.cols() != 1) {
      throw NumericalError("autodiff: backward needs a scalar loss");
    }
    if (!ln.needs_grad) {
      throw NumericalError("autodiff: loss does not depend on any gradient leaf");
    }
    grad_buf(loss.index())(0, 0) = 1.0;
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad;
    std::function<void(Tape&, const Mat&)> backward;
  };
  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape_->value(idx_); }
inline const Mat& Var::grad() const { return tape_->grad(idx_); }

namespace detail {

inline Tape& tape_of(Var a) { return *a.tape(); }

inline void check_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw NumericalError("autodiff: mixed tapes");
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = detail::tape_of(a);
  return t.make(a.value() + b.value(), {a, b},
                [ai = a.index(), bi = b.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai) += g;
                  if (tp.needs_grad(bi)) tp.grad_buf(bi) += g;
                });
}

inline Var sub(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = detail::tape_of(a);
  return t.make(a.value() - b.value(), {a, b},
                [ai = a.index(), bi = b.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai) += g;
                  if (tp.needs_grad(bi)) tp.grad_buf(bi) -= g;
                });
}

inline Var mul(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = detail::tape_of(a);
  return t.make(a.value().cwiseProduct(b.value()), {a, b},
                [ai = a.index(), bi = b.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai) += g.cwiseProduct(tp.value(bi));
                  if (tp.needs_grad(bi)) tp.grad_buf(bi) += g.cwiseProduct(tp.value(ai));
                });
}

inline Var scale(Var a, double s) {
  Tape& t = detail::tape_of(a);
  return t.make(a.value() * s, {a},
                [ai = a.index(), s](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai) += s * g;
                });
}

// Elementwise a*s + b.
inline Var affine(Var a, double s, double b) {
  Tape& t = detail::tape_of(a);
  return t.make((a.value().array() * s + b).matrix(), {a},
                [ai = a.index(), s](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai) += s * g;
                });
}

inline Var add_const(Var a, const Mat& c) {
  Tape& t = detail::tape_of(a);
  return t.make(a.value() + c, {a},
                [ai = a.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai) += g;
                });
}

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = detail::tape_of(a);
  return t.make(a.value() * b.value(), {a, b},
                [ai = a.index(), bi = b.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai).noalias() += g * tp.value(bi).transpose();
                  if (tp.needs_grad(bi)) tp.grad_buf(bi).noalias() += tp.value(ai).transpose() * g;
                });
}

// a * b^T
inline Var matmul_nt(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = detail::tape_of(a);
  return t.make(a.value() * b.value().transpose(), {a, b},
                [ai = a.index(), bi = b.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai).noalias() += g * tp.value(bi);
                  if (tp.needs_grad(bi)) tp.grad_buf(bi).noalias() += g.transpose() * tp.value(ai);
                });
}

// Adds a 1-row bias to every row of a.
inline Var add_rowvec(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = detail::tape_of(a);
  Mat out = a.value();
  out.rowwise() += b.value().row(0);
  return t.make(std::move(out), {a, b},
                [ai = a.index(), bi = b.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai) += g;
                  if (tp.needs_grad(bi)) tp.grad_buf(bi) += g.colwise().sum();
                });
}

inline Var gelu(Var a) {
  Tape& t = detail::tape_of(a);
  const double c = std::sqrt(2.0 / M_PI);
  const Mat& x = a.value();
  Mat u = (c * (x.array() + 0.044715 * x.array().cube())).matrix();
  Mat th = u.array().tanh().matrix();
  Mat out = (0.5 * x.array() * (1.0 + th.array())).matrix();
  return t.make(std::move(out), {a},
                [ai = a.index(), c, th = std::move(th)](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ai)) return;
                  const auto& x = tp.value(ai).array();
                  const auto dudx = c * (1.0 + 3.0 * 0.044715 * x.square());
                  const auto dy = 0.5 * (1.0 + th.array()) +
                                  0.5 * x * (1.0 - th.array().square()) * dudx;
                  tp.grad_buf(ai).array() += g.array() * dy;
                });
}

inline Var softmax_rows(Var a) {
  Tape& t = detail::tape_of(a);
  Mat y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return t.make(y, {a},
                [ai = a.index(), y](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ai)) return;
                  Mat& ga = tp.grad_buf(ai);
                  for (Eigen::Index i = 0; i < y.rows(); ++i) {
                    const double dot = g.row(i).cwiseProduct(y.row(i)).sum();
                    ga.row(i).array() +=
                        y.row(i).array() * (g.row(i).array() - dot);
                  }
                });
}

inline Var log_softmax_rows(Var a) {
  Tape& t = detail::tape_of(a);
  const Mat& x = a.value();
  Mat lp(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    lp.row(i) = x.row(i).array() - lse;
  }
  return t.make(lp, {a},
                [ai = a.index(), lp](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ai)) return;
                  Mat& ga = tp.grad_buf(ai);
                  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
                    const double gsum = g.row(i).sum();
                    ga.row(i).array() +=
                        g.row(i).array() - gsum * lp.row(i).array().exp();
                  }
                });
}

// Per-row layer normalization with learnable 1-row gamma/beta.
inline Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5) {
  detail::check_same_tape(x, gamma);
  detail::check_same_tape(x, beta);
  Tape& t = detail::tape_of(x);
  const Mat& v = x.value();
  const auto n = static_cast<double>(v.cols());
  Mat xhat(v.rows(), v.cols());
  Eigen::VectorXd inv_sigma(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double mu = v.row(i).mean();
    const double var = (v.row(i).array() - mu).square().sum() / n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(i) = is;
    xhat.row(i) = (v.row(i).array() - mu) * is;
  }
  Mat out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return t.make(std::move(out), {x, gamma, beta},
                [xi = x.index(), gi = gamma.index(), bi = beta.index(),
                 xhat = std::move(xhat), inv_sigma = std::move(inv_sigma),
                 n](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(bi)) tp.grad_buf(bi) += g.colwise().sum();
                  if (tp.needs_grad(gi)) {
                    tp.grad_buf(gi) += g.cwiseProduct(xhat).colwise().sum();
                  }
                  if (!tp.needs_grad(xi)) return;
                  Mat& gx = tp.grad_buf(xi);
                  const auto& gam = tp.value(gi).row(0).array();
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    const auto gh = g.row(i).array() * gam;  // d/dxhat
                    const double m1 = gh.sum() / n;
                    const double m2 = (gh * xhat.row(i).array()).sum() / n;
                    gx.row(i).array() +=
                        inv_sigma(i) * (gh - m1 - xhat.row(i).array() * m2);
                  }
                });
}

inline Var cols(Var a, Eigen::Index start, Eigen::Index n) {
  Tape& t = detail::tape_of(a);
  return t.make(a.value().middleCols(start, n), {a},
                [ai = a.index(), start, n](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai).middleCols(start, n) += g;
                });
}

inline Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw NumericalError("autodiff: hcat of nothing");
  Tape& t = detail::tape_of(parts[0]);
  Eigen::Index total = 0;
  for (const Var& p : parts) total += p.value().cols();
  Mat out(parts[0].value().rows(), total);
  Eigen::Index at = 0;
  std::vector<std::size_t> idx;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    out.middleCols(at, p.value().cols()) = p.value();
    at += p.value().cols();
    idx.push_back(p.index());
    widths.push_back(p.value().cols());
  }
  return t.make(std::move(out), parts,
                [idx = std::move(idx), widths = std::move(widths)](Tape& tp, const Mat& g) {
                  Eigen::Index at = 0;
                  for (std::size_t k = 0; k < idx.size(); ++k) {
                    if (tp.needs_grad(idx[k])) {
                      tp.grad_buf(idx[k]) += g.middleCols(at, widths[k]);
                    }
                    at += widths[k];
                  }
                });
}

// Row gather (embedding lookup): out.row(i) = table.row(ids[i]).
inline Var gather_rows(Var table, std::vector<int> ids) {
  Tape& t = detail::tape_of(table);
  Mat out(static_cast<Eigen::Index>(ids.size()), table.value().cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  return t.make(std::move(out), {table},
                [ti = table.index(), ids = std::move(ids)](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ti)) return;
                  Mat& gt = tp.grad_buf(ti);
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
                  }
                });
}

// Column gather: out.col(j) = a.col(ids[j]).
inline Var gather_cols(Var a, std::vector<int> ids) {
  Tape& t = detail::tape_of(a);
  Mat out(a.value().rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = a.value().col(ids[j]);
  }
  return t.make(std::move(out), {a},
                [ai = a.index(), ids = std::move(ids)](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ai)) return;
                  Mat& ga = tp.grad_buf(ai);
                  for (std::size_t j = 0; j < ids.size(); ++j) {
                    ga.col(ids[j]) += g.col(static_cast<Eigen::Index>(j));
                  }
                });
}

// Slices a 1×N signal into overlapping frames: out(f, k) = x(0, starts[f]+k),
// zero outside [0, N).
inline Var frame_rows(Var x, std::vector<long> starts, int win) {
  Tape& t = detail::tape_of(x);
  const Mat& v = x.value();
  const long n = v.cols();
  Mat out = Mat::Zero(static_cast<Eigen::Index>(starts.size()), win);
  for (std::size_t f = 0; f < starts.size(); ++f) {
    for (int k = 0; k < win; ++k) {
      const long j = starts[f] + k;
      if (j >= 0 && j < n) out(static_cast<Eigen::Index>(f), k) = v(0, j);
    }
  }
  return t.make(std::move(out), {x},
                [xi = x.index(), starts = std::move(starts), win, n](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(xi)) return;
                  Mat& gx = tp.grad_buf(xi);
                  for (std::size_t f = 0; f < starts.size(); ++f) {
                    for (int k = 0; k < win; ++k) {
                      const long j = starts[f] + k;
                      if (j >= 0 && j < n) gx(0, j) += g(static_cast<Eigen::Index>(f), k);
                    }
                  }
                });
}

// Builds conv patches: out.row(i) = [a.row(idx[i][0]), a.row(idx[i][1]), ...];
// an index of -1 contributes zeros.
inline Var gather_rows_concat(Var a, std::vector<std::vector<long>> idx) {
  Tape& t = detail::tape_of(a);
  const Mat& v = a.value();
  const auto c = v.cols();
  const auto k = static_cast<Eigen::Index>(idx.empty() ? 0 : idx[0].size());
  Mat out = Mat::Zero(static_cast<Eigen::Index>(idx.size()), k * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const long src = idx[i][static_cast<std::size_t>(j)];
      if (src >= 0) out.block(static_cast<Eigen::Index>(i), j * c, 1, c) = v.row(src);
    }
  }
  return t.make(std::move(out), {a},
                [ai = a.index(), idx = std::move(idx), k, c](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ai)) return;
                  Mat& ga = tp.grad_buf(ai);
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    for (Eigen::Index j = 0; j < k; ++j) {
                      const long src = idx[i][static_cast<std::size_t>(j)];
                      if (src >= 0) {
                        ga.row(src) += g.block(static_cast<Eigen::Index>(i), j * c, 1, c);
                      }
                    }
                  }
                });
}

// From interleaved [re | im] halves (F × 2K) to power spectrum (F × K).
inline Var power_pairs(Var a, Eigen::Index k) {
  Tape& t = detail::tape_of(a);
  const Mat& v = a.value();
  Mat out = v.leftCols(k).array().square() + v.rightCols(k).array().square();
  return t.make(std::move(out), {a},
                [ai = a.index(), k](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ai)) return;
                  Mat& ga = tp.grad_buf(ai);
                  const Mat& v = tp.value(ai);
                  ga.leftCols(k).array() += 2.0 * v.leftCols(k).array() * g.array();
                  ga.rightCols(k).array() += 2.0 * v.rightCols(k).array() * g.array();
                });
}

// log10(max(a, floor)); zero gradient where the floor is active.
inline Var log10_floor(Var a, double floor) {
  Tape& t = detail::tape_of(a);
  const Mat& v = a.value();
  Mat out = v.array().max(floor).log10();
  return t.make(std::move(out), {a},
                [ai = a.index(), floor](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ai)) return;
                  const auto& v = tp.value(ai).array();
                  const double inv_ln10 = 1.0 / std::log(10.0);
                  tp.grad_buf(ai).array() +=
                      (v > floor).select(g.array() * inv_ln10 / v, 0.0);
                });
}

inline Var pick(Var a, Eigen::Index i, Eigen::Index j) {
  Tape& t = detail::tape_of(a);
  Mat out(1, 1);
  out(0, 0) = a.value()(i, j);
  return t.make(std::move(out), {a},
                [ai = a.index(), i, j](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai)(i, j) += g(0, 0);
                });
}

// Negative log likelihood per row: out(i, 0) = -logp(i, ids[i]).
inline Var nll_rows(Var logp, std::vector<int> ids) {
  Tape& t = detail::tape_of(logp);
  Mat out(static_cast<Eigen::Index>(ids.size()), 1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out(static_cast<Eigen::Index>(i), 0) = -logp.value()(static_cast<Eigen::Index>(i), ids[i]);
  }
  return t.make(std::move(out), {logp},
                [li = logp.index(), ids = std::move(ids)](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(li)) return;
                  Mat& gl = tp.grad_buf(li);
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    gl(static_cast<Eigen::Index>(i), ids[i]) -= g(static_cast<Eigen::Index>(i), 0);
                  }
                });
}

// Weighted mean of a column vector: sum(w_i * col_i) / sum(w).
inline Var weighted_mean(Var col, std::vector<double> w) {
  Tape& t = detail::tape_of(col);
  if (static_cast<std::size_t>(col.value().rows()) != w.size()) {
    throw ValidationError("weighted_mean: weight count mismatch");
  }
  double wsum = 0.0;
  for (double x : w) wsum += x;
  Mat out(1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i] * col.value()(static_cast<Eigen::Index>(i), 0);
  }
  out(0, 0) = acc / wsum;
  return t.make(std::move(out), {col},
                [ci = col.index(), w = std::move(w), wsum](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(ci)) return;
                  Mat& gc = tp.grad_buf(ci);
                  for (std::size_t i = 0; i < w.size(); ++i) {
                    gc(static_cast<Eigen::Index>(i), 0) += g(0, 0) * w[i] / wsum;
                  }
                });
}

inline Var sum_all(Var a) {
  Tape& t = detail::tape_of(a);
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.make(std::move(out), {a},
                [ai = a.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai).array() += g(0, 0);
                });
}

inline Var sum_squares(Var a) {
  Tape& t = detail::tape_of(a);
  Mat out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return t.make(std::move(out), {a},
                [ai = a.index()](Tape& tp, const Mat& g) {
                  if (tp.needs_grad(ai)) tp.grad_buf(ai) += 2.0 * g(0, 0) * tp.value(ai);
                });
}

}  // namespace advbench::ad
