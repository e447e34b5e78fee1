#include "bvllm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bvllm/error.hpp"

namespace bvllm::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

Tensor as_matrix(const Tensor& t) {
  if (t.rank() == 2) return t;
  return t.reshaped({t.rows(), t.cols()});
}

}  // namespace

Var matmul(Var a, Var b) {
  Tensor out = kernels::matmul(as_matrix(a.value()), as_matrix(b.value()));
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& og) {
    if (a.requires_grad()) g.accumulate(a, kernels::matmul_nt(og, as_matrix(b.value())));
    if (b.requires_grad()) g.accumulate(b, kernels::matmul_tn(as_matrix(a.value()), og));
  });
}

Var matmul_nt(Var a, Var b) {
  Tensor out = kernels::matmul_nt(as_matrix(a.value()), as_matrix(b.value()));
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& og) {
    // out = a bᵀ: da = og b, db = ogᵀ a
    if (a.requires_grad()) g.accumulate(a, kernels::matmul(og, as_matrix(b.value())));
    if (b.requires_grad()) g.accumulate(b, kernels::matmul_tn(og, as_matrix(a.value())));
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& og) {
    g.accumulate(a, og);
    g.accumulate(b, og);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& og) {
    g.accumulate(a, og);
    if (b.requires_grad()) {
      Tensor neg = og;
      for (double& v : neg.data()) v = -v;
      g.accumulate(b, neg);
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.graph().record(std::move(out), {a}, [a, factor](Graph& g, const Tensor& og) {
    Tensor d = og;
    for (double& v : d.data()) v *= factor;
    g.accumulate(a, d);
  });
}

Var add_constant(Var a, const Tensor& c) {
  require_same_shape(a.value(), c, "add_constant");
  Tensor out = a.value();
  auto o = out.data();
  auto cv = c.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += cv[i];
  return a.graph().record(std::move(out), {a},
                          [a](Graph& g, const Tensor& og) { g.accumulate(a, og); });
}

Var add_row(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.size() != av.cols()) {
    throw DimensionError("add_row bias " + shape_string(bv.shape()) + " does not match rows of " +
                         shape_string(av.shape()));
  }
  Tensor out = as_matrix(av);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv.data()[j];
  }
  return a.graph().record(std::move(out), {a, bias}, [a, bias](Graph& g, const Tensor& og) {
    g.accumulate(a, og);
    if (bias.requires_grad()) {
      Tensor db(bias.value().shape());
      for (std::size_t i = 0; i < og.rows(); ++i)
        for (std::size_t j = 0; j < og.cols(); ++j) db.data()[j] += og(i, j);
      g.accumulate(bias, db);
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& og) {
    if (a.requires_grad()) {
      Tensor d = og;
      auto bv = b.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] *= bv[i];
      g.accumulate(a, d);
    }
    if (b.requires_grad()) {
      Tensor d = og;
      auto av = a.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] *= av[i];
      g.accumulate(b, d);
    }
  });
}

Var softmax_rows(Var x) {
  Tensor out = kernels::softmax_rows(as_matrix(x.value()));
  Tensor y = out;
  return x.graph().record(std::move(out), {x}, [x, y = std::move(y)](Graph& g, const Tensor& og) {
    Tensor d(y.shape());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += og(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) d(i, j) = y(i, j) * (og(i, j) - dot);
    }
    g.accumulate(x, d);
  });
}

Var log_softmax_rows(Var x) {
  Tensor in = as_matrix(x.value());
  Tensor out = in;
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (double& v : r) v -= lse;
  }
  Tensor probs = out;
  for (double& v : probs.data()) v = std::exp(v);
  return x.graph().record(std::move(out), {x},
                          [x, probs = std::move(probs)](Graph& g, const Tensor& og) {
                            Tensor d(probs.shape());
                            for (std::size_t i = 0; i < probs.rows(); ++i) {
                              double s = 0.0;
                              for (std::size_t j = 0; j < probs.cols(); ++j) s += og(i, j);
                              for (std::size_t j = 0; j < probs.cols(); ++j)
                                d(i, j) = og(i, j) - probs(i, j) * s;
                            }
                            g.accumulate(x, d);
                          });
}

Var layernorm(Var x, Var gain, Var bias) {
  const Tensor in = as_matrix(x.value());
  const std::size_t m = in.rows(), d = in.cols();
  if (d == 0) throw DimensionError("layernorm needs at least one column");
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layernorm affine parameters do not match width " + std::to_string(d));
  }
  Tensor xhat(in.shape());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (double v : in.row(i)) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in.row(i)) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) xhat(i, j) = (in(i, j) - mu) * inv_std[i];
  }
  Tensor out = xhat;
  const auto gv = gain.value().data();
  const auto bv = bias.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xhat(i, j) * gv[j] + bv[j];

  return x.graph().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g,
                                                                            const Tensor& og) {
        const std::size_t m = xhat.rows(), d = xhat.cols();
        const auto gv = gain.value().data();
        if (gain.requires_grad() || bias.requires_grad()) {
          Tensor dg(gain.value().shape()), db(bias.value().shape());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              dg.data()[j] += og(i, j) * xhat(i, j);
              db.data()[j] += og(i, j);
            }
          g.accumulate(gain, dg);
          g.accumulate(bias, db);
        }
        if (x.requires_grad()) {
          Tensor dx(xhat.shape());
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = og(i, j) * gv[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat(i, j);
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = og(i, j) * gv[j];
              dx(i, j) = inv_std[i] * (dxh - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
            }
          }
          g.accumulate(x, dx);
        }
      });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

Var gelu(Var x) {
  Tensor out = as_matrix(x.value());
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return x.graph().record(std::move(out), {x}, [x](Graph& g, const Tensor& og) {
    Tensor d = og;
    const auto in = x.value().data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = in[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = std::exp(-0.5 * v * v) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      d.data()[i] *= cdf + v * pdf;
    }
    g.accumulate(x, d);
  });
}

Var cosine_matrix(Var a, Var b, double eps) {
  const Tensor av = as_matrix(a.value());
  const Tensor bv = as_matrix(b.value());
  Tensor out = kernels::cosine_matrix(av, bv, eps);
  auto norms = [](const Tensor& t) {
    std::vector<double> n(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i) {
      double s = 0.0;
      for (double v : t.row(i)) s += v * v;
      n[i] = std::sqrt(s);
    }
    return n;
  };
  Tensor cos = out;
  return a.graph().record(
      std::move(out), {a, b},
      [a, b, eps, cos = std::move(cos), na = norms(av), nb = norms(bv)](Graph& g,
                                                                        const Tensor& og) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        const std::size_t p = av.rows(), q = bv.rows(), d = av.cols();
        // Below the eps floor the norm is a constant and contributes no gradient.
        if (a.requires_grad()) {
          Tensor da(av.shape());
          for (std::size_t i = 0; i < p; ++i) {
            const double fa = std::max(na[i], eps);
            double gc = 0.0;
            for (std::size_t j = 0; j < q; ++j) {
              const double w = og(i, j) / (fa * std::max(nb[j], eps));
              for (std::size_t k = 0; k < d; ++k) da(i, k) += w * bv(j, k);
              gc += og(i, j) * cos(i, j);
            }
            if (na[i] > eps)
              for (std::size_t k = 0; k < d; ++k) da(i, k) -= gc * av(i, k) / (fa * fa);
          }
          g.accumulate(a, da);
        }
        if (b.requires_grad()) {
          Tensor db(bv.shape());
          for (std::size_t j = 0; j < q; ++j) {
            const double fb = std::max(nb[j], eps);
            double gc = 0.0;
            for (std::size_t i = 0; i < p; ++i) {
              const double w = og(i, j) / (std::max(na[i], eps) * fb);
              for (std::size_t k = 0; k < d; ++k) db(j, k) += w * av(i, k);
              gc += og(i, j) * cos(i, j);
            }
            if (nb[j] > eps)
              for (std::size_t k = 0; k < d; ++k) db(j, k) -= gc * bv(j, k) / (fb * fb);
          }
          g.accumulate(b, db);
        }
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows needs at least one part");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows width mismatch: " + std::to_string(p.cols()) + " vs " +
                           std::to_string(cols));
    }
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Var& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return parts.front().graph().record(
      Tensor({rows, cols}, std::move(data)), parts, [parts](Graph& g, const Tensor& og) {
        std::size_t offset = 0;
        for (const Var& p : parts) {
          const std::size_t r = p.rows();
          if (p.requires_grad()) g.accumulate(p, og.rows_slice(offset, offset + r));
          offset += r;
        }
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs at least one part");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols row count mismatch");
    cols += p.cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
  }
  return parts.front().graph().record(std::move(out), parts, [parts](Graph& g, const Tensor& og) {
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t c = p.cols();
      if (p.requires_grad()) {
        Tensor d = Tensor::zeros(og.rows(), c);
        for (std::size_t i = 0; i < og.rows(); ++i)
          for (std::size_t j = 0; j < c; ++j) d(i, j) = og(i, offset + j);
        g.accumulate(p, d);
      }
      offset += c;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tensor out = as_matrix(a.value()).rows_slice(begin, end);
  return a.graph().record(std::move(out), {a}, [a, begin](Graph& g, const Tensor& og) {
    Tensor d(Shape{a.rows(), a.cols()});
    std::copy(og.data().begin(), og.data().end(), d.data().begin() + begin * a.cols());
    g.accumulate(a, d);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (begin > end || end > av.cols()) throw DimensionError("slice_cols range out of bounds");
  Tensor out = Tensor::zeros(av.rows(), end - begin);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
  return a.graph().record(std::move(out), {a}, [a, begin](Graph& g, const Tensor& og) {
    Tensor d = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < og.rows(); ++i)
      for (std::size_t j = 0; j < og.cols(); ++j) d(i, begin + j) = og(i, j);
    g.accumulate(a, d);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) {
    throw DimensionError("cannot reshape " + shape_string(a.value().shape()) + " to " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Tensor out = a.value().reshaped({rows, cols});
  return a.graph().record(std::move(out), {a}, [a](Graph& g, const Tensor& og) {
    g.accumulate(a, og.reshaped(a.value().shape()));
  });
}

Var group_mean_rows(Var a, const std::vector<std::vector<std::size_t>>& groups) {
  const Tensor av = as_matrix(a.value());
  const std::size_t n = av.cols();
  Tensor out = Tensor::zeros(groups.size(), n);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& members = groups[gi];
    if (members.empty()) throw DimensionError("group_mean_rows got an empty group");
    auto o = out.row(gi);
    // Running mean: a group of identical rows reproduces the row exactly.
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t r = members[k];
      if (r >= av.rows()) throw DimensionError("group_mean_rows index out of range");
      auto src = av.row(r);
      if (k == 0) {
        std::copy(src.begin(), src.end(), o.begin());
        continue;
      }
      const double count = static_cast<double>(k + 1);
      for (std::size_t j = 0; j < n; ++j) o[j] += (src[j] - o[j]) / count;
    }
  }
  return a.graph().record(std::move(out), {a}, [a, groups](Graph& g, const Tensor& og) {
    Tensor d = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const double inv = 1.0 / static_cast<double>(groups[gi].size());
      for (std::size_t r : groups[gi])
        for (std::size_t j = 0; j < og.cols(); ++j) d(r, j) += og(gi, j) * inv;
    }
    g.accumulate(a, d);
  });
}

Var mix_rows(Var weights, Var values) {
  const Tensor w = as_matrix(weights.value());
  const Tensor v = as_matrix(values.value());
  Tensor out = kernels::matmul(w, v);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    std::size_t ones = 0, hot = 0;
    bool others_zero = true;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      if (w(i, j) == 1.0) {
        ++ones;
        hot = j;
      } else if (w(i, j) != 0.0) {
        others_zero = false;
      }
    }
    if (ones == 1 && others_zero) std::copy(v.row(hot).begin(), v.row(hot).end(), out.row(i).begin());
  }
  return weights.graph().record(std::move(out), {weights, values},
                                [weights, values](Graph& g, const Tensor& og) {
                                  if (weights.requires_grad())
                                    g.accumulate(weights,
                                                 kernels::matmul_nt(og, as_matrix(values.value())));
                                  if (values.requires_grad())
                                    g.accumulate(values,
                                                 kernels::matmul_tn(as_matrix(weights.value()), og));
                                });
}

Var straight_through(const Tensor& hard, Var soft) {
  require_same_shape(hard, soft.value(), "straight_through");
  return soft.graph().record(Tensor(soft.value().shape(), hard.storage()), {soft},
                             [soft](Graph& g, const Tensor& og) { g.accumulate(soft, og); });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(Tensor({1, 1}, {s}), {a}, [a](Graph& g, const Tensor& og) {
    g.accumulate(a, Tensor(a.value().shape(), std::vector<double>(a.value().size(), og.data()[0])));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var weighted_sum(Var a, const Tensor& weights) {
  if (weights.size() != a.value().size()) {
    throw DimensionError("weighted_sum weights " + shape_string(weights.shape()) +
                         " do not match " + shape_string(a.value().shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += a.value().data()[i] * weights.data()[i];
  return a.graph().record(Tensor({1, 1}, {s}), {a}, [a, weights](Graph& g, const Tensor& og) {
    Tensor d(a.value().shape(), weights.storage());
    for (double& v : d.data()) v *= og.data()[0];
    g.accumulate(a, d);
  });
}

}  // namespace bvllm::ops
