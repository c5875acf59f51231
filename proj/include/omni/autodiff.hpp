#ifndef OMNI_AUTODIFF_HPP
#define OMNI_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "omni/common.hpp"

// Reverse-mode autodiff over dense matrices. All trainable modules
// (adapter, language core, speech LM, flow field network) build their
// forward passes on this tape so analytic gradients share one code path.
namespace omni::ad {

// Named parameter matrices with insertion-ordered iteration, so that
// serialization and content hashing are deterministic.
struct ParamStore {
  std::vector<std::string> order;
  std::map<std::string, Mat> values;
  std::map<std::string, Mat> grads;

  Mat& create(const std::string& name, Eigen::Index rows, Eigen::Index cols,
              Rng& rng, double scale) {
    OMNI_CHECK(!values.count(name), "duplicate parameter: " + name);
    order.push_back(name);
    values[name] = rng.normal_matrix(rows, cols, scale);
    return values[name];
  }

  Mat& create_zero(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    OMNI_CHECK(!values.count(name), "duplicate parameter: " + name);
    order.push_back(name);
    values[name] = Mat::Zero(rows, cols);
    return values[name];
  }

  Mat& create_const(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                    double fill) {
    OMNI_CHECK(!values.count(name), "duplicate parameter: " + name);
    order.push_back(name);
    values[name] = Mat::Constant(rows, cols, fill);
    return values[name];
  }

  Mat& at(const std::string& name) {
    auto it = values.find(name);
    OMNI_CHECK(it != values.end(), "unknown parameter: " + name);
    return it->second;
  }
  const Mat& at(const std::string& name) const {
    auto it = values.find(name);
    OMNI_CHECK(it != values.end(), "unknown parameter: " + name);
    return it->second;
  }

  void zero_grads() {
    for (const auto& name : order)
      grads[name] = Mat::Zero(values[name].rows(), values[name].cols());
  }

  uint64_t content_hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& name : order) {
      h = fnv1a(name.data(), name.size(), h);
      h = hash_matrix(values.at(name), h);
    }
    return h;
  }

  size_t num_scalars() const {
    size_t n = 0;
    for (const auto& name : order) n += static_cast<size_t>(values.at(name).size());
    return n;
  }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Mat& val() const;
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
};

class Tape {
 public:
  int push(Mat value) {
    nodes_.push_back({std::move(value), Mat(), nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_back(int id, std::function<void(Tape&)> back) {
    nodes_[id].back = std::move(back);
  }

  Var var(Mat value) { return {this, push(std::move(value))}; }

  // Leaf tied to a named parameter; grads flow back into the store.
  Var param(ParamStore& store, const std::string& name) {
    Var v{this, push(store.at(name))};
    param_refs_.push_back({&store, name, v.id});
    return v;
  }

  const Mat& val(int id) const { return nodes_[id].val; }
  Mat& grad(int id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }

  // Seeds d(scalar)/d(scalar)=1, sweeps the tape in reverse, then
  // accumulates parameter gradients into each referenced store.
  void backward(const Var& scalar) {
    OMNI_CHECK(scalar.val().size() == 1, "backward seed must be scalar");
    grad(scalar.id).setConstant(1.0);
    for (int i = scalar.id; i >= 0; --i) {
      if (nodes_[i].back && has_grad(i)) nodes_[i].back(*this);
    }
    for (const auto& ref : param_refs_) {
      if (!has_grad(ref.id)) continue;
      auto& g = ref.store->grads[ref.name];
      if (g.size() == 0)
        g = Mat::Zero(nodes_[ref.id].val.rows(), nodes_[ref.id].val.cols());
      g += nodes_[ref.id].grad;
    }
  }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&)> back;
  };
  struct ParamRef {
    ParamStore* store;
    std::string name;
    int id;
  };
  std::vector<Node> nodes_;
  std::vector<ParamRef> param_refs_;
};

inline const Mat& Var::val() const { return tape->val(id); }

// ---- elementwise / linear ops ----

inline Var add(Var a, Var b) {
  OMNI_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape& t = *a.tape;
  int out = t.push(a.val() + b.val());
  t.set_back(out, [out, ia = a.id, ib = b.id](Tape& t) {
    t.grad(ia) += t.grad(out);
    t.grad(ib) += t.grad(out);
  });
  return {&t, out};
}

inline Var sub(Var a, Var b) {
  OMNI_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tape& t = *a.tape;
  int out = t.push(a.val() - b.val());
  t.set_back(out, [out, ia = a.id, ib = b.id](Tape& t) {
    t.grad(ia) += t.grad(out);
    t.grad(ib) -= t.grad(out);
  });
  return {&t, out};
}

inline Var mul(Var a, Var b) {
  OMNI_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Tape& t = *a.tape;
  int out = t.push(a.val().cwiseProduct(b.val()));
  t.set_back(out, [out, ia = a.id, ib = b.id](Tape& t) {
    t.grad(ia) += t.grad(out).cwiseProduct(t.val(ib));
    t.grad(ib) += t.grad(out).cwiseProduct(t.val(ia));
  });
  return {&t, out};
}

inline Var scale(Var a, double c) {
  Tape& t = *a.tape;
  int out = t.push(a.val() * c);
  t.set_back(out, [out, ia = a.id, c](Tape& t) { t.grad(ia) += t.grad(out) * c; });
  return {&t, out};
}

inline Var matmul(Var a, Var b) {
  OMNI_CHECK(a.cols() == b.rows(), "matmul: inner dims " + std::to_string(a.cols()) +
                                       " vs " + std::to_string(b.rows()));
  Tape& t = *a.tape;
  int out = t.push(a.val() * b.val());
  t.set_back(out, [out, ia = a.id, ib = b.id](Tape& t) {
    t.grad(ia) += t.grad(out) * t.val(ib).transpose();
    t.grad(ib) += t.val(ia).transpose() * t.grad(out);
  });
  return {&t, out};
}

// Broadcast a 1xC row (bias) over every row of a.
inline Var add_rowvec(Var a, Var row) {
  OMNI_CHECK(row.rows() == 1 && row.cols() == a.cols(), "add_rowvec: bad row shape");
  Tape& t = *a.tape;
  int out = t.push(a.val().rowwise() + row.val().row(0));
  t.set_back(out, [out, ia = a.id, ir = row.id](Tape& t) {
    t.grad(ia) += t.grad(out);
    t.grad(ir) += t.grad(out).colwise().sum();
  });
  return {&t, out};
}

inline Var mul_rowvec(Var a, Var row) {
  OMNI_CHECK(row.rows() == 1 && row.cols() == a.cols(), "mul_rowvec: bad row shape");
  Tape& t = *a.tape;
  Mat v = a.val().array().rowwise() * row.val().row(0).array();
  int out = t.push(std::move(v));
  t.set_back(out, [out, ia = a.id, ir = row.id](Tape& t) {
    t.grad(ia).array() += t.grad(out).array().rowwise() * t.val(ir).row(0).array();
    t.grad(ir) += t.grad(out).cwiseProduct(t.val(ia)).colwise().sum();
  });
  return {&t, out};
}

// Repeat a 1xC row n times into an nxC matrix.
inline Var tile_rows(Var row, Eigen::Index n) {
  OMNI_CHECK(row.rows() == 1, "tile_rows: expects a single row");
  Tape& t = *row.tape;
  int out = t.push(row.val().replicate(n, 1));
  t.set_back(out, [out, ir = row.id](Tape& t) {
    t.grad(ir) += t.grad(out).colwise().sum();
  });
  return {&t, out};
}

inline Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const double n = static_cast<double>(a.rows());
  int out = t.push(a.val().colwise().mean());
  t.set_back(out, [out, ia = a.id, n](Tape& t) {
    t.grad(ia) += (t.grad(out) / n).replicate(t.val(ia).rows(), 1);
  });
  return {&t, out};
}

inline Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
  OMNI_CHECK(r0 >= 0 && r0 + n <= a.rows(), "slice_rows: out of range");
  Tape& t = *a.tape;
  int out = t.push(a.val().middleRows(r0, n));
  t.set_back(out, [out, ia = a.id, r0, n](Tape& t) {
    t.grad(ia).middleRows(r0, n) += t.grad(out);
  });
  return {&t, out};
}

inline Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
  OMNI_CHECK(c0 >= 0 && c0 + n <= a.cols(), "slice_cols: out of range");
  Tape& t = *a.tape;
  int out = t.push(a.val().middleCols(c0, n));
  t.set_back(out, [out, ia = a.id, c0, n](Tape& t) {
    t.grad(ia).middleCols(c0, n) += t.grad(out);
  });
  return {&t, out};
}

inline Var concat_rows(const std::vector<Var>& parts) {
  OMNI_CHECK(!parts.empty(), "concat_rows: empty");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const auto& p : parts) {
    OMNI_CHECK(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat v(rows, cols);
  Eigen::Index r = 0;
  std::vector<std::pair<int, Eigen::Index>> spans;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.val();
    spans.push_back({p.id, p.rows()});
    r += p.rows();
  }
  int out = t.push(std::move(v));
  t.set_back(out, [out, spans](Tape& t) {
    Eigen::Index r = 0;
    for (const auto& [id, n] : spans) {
      t.grad(id) += t.grad(out).middleRows(r, n);
      r += n;
    }
  });
  return {&t, out};
}

inline Var concat_cols(const std::vector<Var>& parts) {
  OMNI_CHECK(!parts.empty(), "concat_cols: empty");
  Tape& t = *parts[0].tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const auto& p : parts) {
    OMNI_CHECK(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  Eigen::Index c = 0;
  std::vector<std::pair<int, Eigen::Index>> spans;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.val();
    spans.push_back({p.id, p.cols()});
    c += p.cols();
  }
  int out = t.push(std::move(v));
  t.set_back(out, [out, spans](Tape& t) {
    Eigen::Index c = 0;
    for (const auto& [id, n] : spans) {
      t.grad(id) += t.grad(out).middleCols(c, n);
      c += n;
    }
  });
  return {&t, out};
}

inline Var tanh_op(Var a) {
  Tape& t = *a.tape;
  int out = t.push(a.val().array().tanh().matrix());
  t.set_back(out, [out, ia = a.id](Tape& t) {
    Mat th = t.val(out);
    t.grad(ia).array() += t.grad(out).array() * (1.0 - th.array().square());
  });
  return {&t, out};
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

// tanh-approximation GELU; derivative matches the same approximation so
// finite-difference checks agree with the analytic gradient.
inline Var gelu(Var a) {
  Tape& t = *a.tape;
  const double kC = kGeluC;
  const double kA = kGeluA;
  Mat x = a.val();
  Mat inner = (kC * (x.array() + kA * x.array().cube())).matrix();
  Mat th = inner.array().tanh().matrix();
  Mat y = (0.5 * x.array() * (1.0 + th.array())).matrix();
  int out = t.push(std::move(y));
  t.set_back(out, [out, ia = a.id, th = std::move(th)](Tape& t) {
    const auto& x = t.val(ia).array();
    auto sech2 = 1.0 - th.array().square();
    auto dinner = kGeluC * (1.0 + 3.0 * kGeluA * x.square());
    Mat d = (0.5 * (1.0 + th.array()) + 0.5 * x * sech2 * dinner).matrix();
    t.grad(ia) += t.grad(out).cwiseProduct(d);
  });
  return {&t, out};
}

// Rowwise layer norm with learned gain/bias (each 1xC).
inline Var layernorm(Var a, Var gamma, Var beta, double eps = 1e-5) {
  OMNI_CHECK(gamma.rows() == 1 && gamma.cols() == a.cols(), "layernorm: gamma shape");
  OMNI_CHECK(beta.rows() == 1 && beta.cols() == a.cols(), "layernorm: beta shape");
  Tape& t = *a.tape;
  const Mat& x = a.val();
  const Eigen::Index F = x.rows(), C = x.cols();
  Mat xhat(F, C);
  Vec inv_std(F);
  for (Eigen::Index i = 0; i < F; ++i) {
    double mu = x.row(i).mean();
    double var = (x.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  Mat y = (xhat.array().rowwise() * gamma.val().row(0).array()).rowwise() +
          beta.val().row(0).array();
  int out = t.push(std::move(y));
  t.set_back(out, [out, ia = a.id, ig = gamma.id, ib = beta.id,
                   xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
    const Mat& g = t.grad(out);
    const Eigen::Index F = g.rows(), C = g.cols();
    t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
    t.grad(ib) += g.colwise().sum();
    Mat dxhat = g.array().rowwise() * t.val(ig).row(0).array();
    Mat dx(F, C);
    for (Eigen::Index i = 0; i < F; ++i) {
      double m1 = dxhat.row(i).mean();
      double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
      dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
    t.grad(ia) += dx;
  });
  return {&t, out};
}

// Rowwise softmax over an LxL score matrix with entries j > i masked out.
inline Var causal_softmax(Var scores) {
  OMNI_CHECK(scores.rows() == scores.cols(), "causal_softmax: square input");
  Tape& t = *scores.tape;
  const Mat& s = scores.val();
  const Eigen::Index L = s.rows();
  Mat p = Mat::Zero(L, L);
  for (Eigen::Index i = 0; i < L; ++i) {
    double mx = s.row(i).head(i + 1).maxCoeff();
    double z = 0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      p(i, j) = std::exp(s(i, j) - mx);
      z += p(i, j);
    }
    p.row(i).head(i + 1) /= z;
  }
  int out = t.push(std::move(p));
  t.set_back(out, [out, is = scores.id](Tape& t) {
    const Mat& p = t.val(out);
    const Mat& g = t.grad(out);
    const Eigen::Index L = p.rows();
    Mat ds = Mat::Zero(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
      double dot = 0;
      for (Eigen::Index j = 0; j <= i; ++j) dot += g(i, j) * p(i, j);
      for (Eigen::Index j = 0; j <= i; ++j) ds(i, j) = p(i, j) * (g(i, j) - dot);
    }
    t.grad(is) += ds;
  });
  return {&t, out};
}

// Mean negative log-likelihood over masked rows of an LxV logit matrix.
// Fused log-softmax keeps the value and gradient numerically stable.
inline Var xent_mean(Var logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask) {
  const Mat& z = logits.val();
  const Eigen::Index L = z.rows(), V = z.cols();
  OMNI_CHECK(static_cast<Eigen::Index>(targets.size()) == L, "xent: target length");
  OMNI_CHECK(static_cast<Eigen::Index>(mask.size()) == L, "xent: mask length");
  Eigen::Index n_active = 0;
  double total = 0;
  for (Eigen::Index i = 0; i < L; ++i) {
    if (!mask[i]) continue;
    OMNI_CHECK(targets[i] >= 0 && targets[i] < V, "xent: target out of vocabulary");
    double mx = z.row(i).maxCoeff();
    double lse = std::log((z.row(i).array() - mx).exp().sum()) + mx;
    total += lse - z(i, targets[i]);
    ++n_active;
  }
  OMNI_CHECK(n_active > 0, "xent: empty supervision mask");
  Tape& t = *logits.tape;
  int out = t.push(Mat::Constant(1, 1, total / static_cast<double>(n_active)));
  t.set_back(out, [out, iz = logits.id, targets, mask, n_active](Tape& t) {
    const double g = t.grad(out)(0, 0) / static_cast<double>(n_active);
    const Mat& z = t.val(iz);
    Mat dz = Mat::Zero(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      if (!mask[i]) continue;
      double mx = z.row(i).maxCoeff();
      Eigen::ArrayXd e = (z.row(i).array() - mx).exp();
      dz.row(i) = (e / e.sum()).matrix() * g;
      dz(i, targets[i]) -= g;
    }
    t.grad(iz) += dz;
  });
  return {&t, out};
}

inline Var mse_mean(Var a, Var b) {
  OMNI_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "mse: shape mismatch");
  Tape& t = *a.tape;
  const double n = static_cast<double>(a.val().size());
  Mat diff = a.val() - b.val();
  int out = t.push(Mat::Constant(1, 1, diff.squaredNorm() / n));
  t.set_back(out, [out, ia = a.id, ib = b.id, n](Tape& t) {
    double g = t.grad(out)(0, 0);
    Mat d = (2.0 * g / n) * (t.val(ia) - t.val(ib));
    t.grad(ia) += d;
    t.grad(ib) -= d;
  });
  return {&t, out};
}

// Same-padded 1-D convolution along rows (time). x is FxCin; the kernel is
// stored as (kw*Cin)xCout with tap d occupying rows [d*Cin, (d+1)*Cin).
inline Var conv1d_same(Var x, Var w, Var bias, int kw) {
  OMNI_CHECK(kw >= 1 && kw % 2 == 1, "conv1d: odd kernel width required");
  const Eigen::Index cin = x.cols();
  OMNI_CHECK(w.rows() == kw * cin, "conv1d: kernel rows != kw*Cin");
  OMNI_CHECK(bias.rows() == 1 && bias.cols() == w.cols(), "conv1d: bias shape");
  Tape& t = *x.tape;
  const Eigen::Index F = x.rows(), cout = w.cols();
  const int half = kw / 2;
  Mat y = bias.val().replicate(F, 1);
  for (int d = 0; d < kw; ++d) {
    const Mat wd = w.val().middleRows(static_cast<Eigen::Index>(d) * cin, cin);
    for (Eigen::Index f = 0; f < F; ++f) {
      Eigen::Index src = f + d - half;
      if (src < 0 || src >= F) continue;  // zero padding
      y.row(f) += x.val().row(src) * wd;
    }
  }
  int out = t.push(std::move(y));
  t.set_back(out, [out, ix = x.id, iw = w.id, ib = bias.id, kw, half, cin](Tape& t) {
    const Mat& g = t.grad(out);
    const Mat& xv = t.val(ix);
    const Eigen::Index F = xv.rows();
    t.grad(ib) += g.colwise().sum();
    for (int d = 0; d < kw; ++d) {
      const Mat wd = t.val(iw).middleRows(static_cast<Eigen::Index>(d) * cin, cin);
      Mat dwd = Mat::Zero(cin, g.cols());
      for (Eigen::Index f = 0; f < F; ++f) {
        Eigen::Index src = f + d - half;
        if (src < 0 || src >= F) continue;
        t.grad(ix).row(src) += g.row(f) * wd.transpose();
        dwd += xv.row(src).transpose() * g.row(f);
      }
      t.grad(iw).middleRows(static_cast<Eigen::Index>(d) * cin, cin) += dwd;
    }
  });
  return {&t, out};
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  int out = t.push(a.val().transpose());
  t.set_back(out, [out, ia = a.id](Tape& t) {
    t.grad(ia) += t.grad(out).transpose();
  });
  return {&t, out};
}

// Row gather from an embedding table; backward scatter-adds.
inline Var gather_rows(Var table, const std::vector<int>& idx) {
  Tape& t = *table.tape;
  const Mat& tab = table.val();
  Mat v(static_cast<Eigen::Index>(idx.size()), tab.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    OMNI_CHECK(idx[i] >= 0 && idx[i] < tab.rows(), "gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = tab.row(idx[i]);
  }
  int out = t.push(std::move(v));
  t.set_back(out, [out, it = table.id, idx](Tape& t) {
    const Mat& g = t.grad(out);
    Mat& gt = t.grad(it);
    for (size_t i = 0; i < idx.size(); ++i)
      gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
  return {&t, out};
}

// affine(x) = x*W + b as one call.
inline Var linear(Var x, Var w, Var bias) { return add_rowvec(matmul(x, w), bias); }

}  // namespace omni::ad

#endif  // OMNI_AUTODIFF_HPP
