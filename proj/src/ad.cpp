// Copyright 2026 The sphflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sphflow/ad.hpp"

#include <algorithm>
#include <cmath>

namespace sphflow::ad {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw SignatureError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

void require_frames(const Var& x, int width, const char* op) {
  if (width <= 0 || x.cols() % width != 0) {
    throw SignatureError(std::string(op) + ": column count is not a multiple of the frame width");
  }
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const {
  const Matrix& g = tape_->grad(id_);
  if (g.size() == 0) return Matrix::Zero(rows(), cols());
  return g;
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, int(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, int(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || needs_grad(p);
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, int(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

void Tape::backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw SignatureError("backward needs a scalar (1x1) root");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  accumulate(root.id(), Matrix::Ones(1, 1));
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && n.grad.size() != 0) n.backward(*this, id);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate(ib, t.grad(self).cwiseProduct(t.value(ia)));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw SignatureError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  const int ia = a.id(), ib = b.id();
  Matrix v = a.value() * b.value();
  return a.tape().record(std::move(v), {a, b}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.accumulate(ia, t.grad(self) * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * t.grad(self));
  });
}

Var scale(const Var& a, double s) { return affine(a, s, 0.0); }

Var affine(const Var& a, double alpha, double beta) {
  const int ia = a.id();
  Matrix v = (alpha * a.value()).array() + beta;
  return a.tape().record(std::move(v), {a},
                         [ia, alpha](Tape& t, int self) { t.accumulate(ia, alpha * t.grad(self)); });
}

Var transpose(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().transpose(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).transpose());
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.rows() * a.cols()) throw SignatureError("reshape: element count changes");
  const int ia = a.id();
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  Matrix v = a.value().reshaped(rows, cols);
  return a.tape().record(std::move(v), {a}, [ia, r0, c0](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).reshaped(r0, c0));
  });
}

Var add_column(const Var& x, const Var& bias) {
  if (bias.cols() != 1 || bias.rows() != x.rows()) {
    throw SignatureError("add_column: bias must be a column with one entry per row");
  }
  const int ix = x.id(), ib = bias.id();
  Matrix v = x.value().colwise() + bias.value().col(0);
  return x.tape().record(std::move(v), {x, bias}, [ix, ib](Tape& t, int self) {
    t.accumulate(ix, t.grad(self));
    if (t.needs_grad(ib)) t.accumulate(ib, t.grad(self).rowwise().sum());
  });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  Matrix v = a.value().unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
  return a.tape().record(std::move(v), {a}, [ia](Tape& t, int self) {
    const Matrix& s = t.value(self);
    t.accumulate(ia, t.grad(self).cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var silu(const Var& a) {
  const int ia = a.id();
  Matrix v = a.value().unaryExpr([](double z) { return z / (1.0 + std::exp(-z)); });
  return a.tape().record(std::move(v), {a}, [ia](Tape& t, int self) {
    Matrix d = t.value(ia).unaryExpr([](double z) {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 + z * (1.0 - s));
    });
    t.accumulate(ia, t.grad(self).cwiseProduct(d));
  });
}

Var softmax_rows(const Var& a) {
  const int ia = a.id();
  Matrix v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    v.row(r).array() -= v.row(r).maxCoeff();
    v.row(r) = v.row(r).array().exp().matrix();
    v.row(r) /= v.row(r).sum();
  }
  return a.tape().record(std::move(v), {a}, [ia](Tape& t, int self) {
    const Matrix& p = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix d(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double dot = g.row(r).dot(p.row(r));
      d.row(r) = p.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    t.accumulate(ia, d);
  });
}

Var rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw SignatureError("rows: out of range");
  const int ia = a.id();
  const Eigen::Index total = a.rows();
  return a.tape().record(a.value().middleRows(start, count), {a},
                         [ia, start, count, total](Tape& t, int self) {
                           Matrix g = Matrix::Zero(total, t.grad(self).cols());
                           g.middleRows(start, count) = t.grad(self);
                           t.accumulate(ia, g);
                         });
}

Var cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw SignatureError("cols: out of range");
  const int ia = a.id();
  const Eigen::Index total = a.cols();
  return a.tape().record(a.value().middleCols(start, count), {a},
                         [ia, start, count, total](Tape& t, int self) {
                           Matrix g = Matrix::Zero(t.grad(self).rows(), total);
                           g.middleCols(start, count) = t.grad(self);
                           t.accumulate(ia, g);
                         });
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw SignatureError("vcat of nothing");
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.cols() != parts[0].cols()) throw SignatureError("vcat: column counts differ");
    total += p.rows();
  }
  Matrix v(total, parts[0].cols());
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.rows();
  }
  return parts[0].tape().record(std::move(v), parts, [layout](Tape& t, int self) {
    for (const auto& [id, start] : layout) {
      if (t.needs_grad(id)) t.accumulate(id, t.grad(self).middleRows(start, t.value(id).rows()));
    }
  });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw SignatureError("hcat of nothing");
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.rows() != parts[0].rows()) throw SignatureError("hcat: row counts differ");
    total += p.cols();
  }
  Matrix v(parts[0].rows(), total);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts[0].tape().record(std::move(v), parts, [layout](Tape& t, int self) {
    for (const auto& [id, start] : layout) {
      if (t.needs_grad(id)) t.accumulate(id, t.grad(self).middleCols(start, t.value(id).cols()));
    }
  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape().record(std::move(v), {a}, [ia, r, c](Tape& t, int self) {
    t.accumulate(ia, Matrix::Constant(r, c, t.grad(self)(0, 0)));
  });
}

Var sum_squares(const Var& a) {
  const int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().squaredNorm();
  return a.tape().record(std::move(v), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, (2.0 * t.grad(self)(0, 0)) * t.value(ia));
  });
}

Var time_shift(const Var& x, int width, int horizon, int lag) {
  require_frames(x, width, "time_shift");
  const Eigen::Index frames = x.cols() / width;
  if (horizon <= 0 || frames % horizon != 0 || lag < 0) {
    throw SignatureError("time_shift: frames are not a whole number of sequences");
  }
  auto source = [=](Eigen::Index f) {
    const Eigen::Index t = f % horizon;
    return f - t + std::max<Eigen::Index>(t - lag, 0);
  };
  const Matrix& in = x.value();
  Matrix v(in.rows(), in.cols());
  for (Eigen::Index f = 0; f < frames; ++f) {
    v.middleCols(f * width, width) = in.middleCols(source(f) * width, width);
  }
  const int ix = x.id();
  return x.tape().record(std::move(v), {x}, [=](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix d = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index f = 0; f < frames; ++f) {
      d.middleCols(source(f) * width, width) += g.middleCols(f * width, width);
    }
    t.accumulate(ix, d);
  });
}

Var time_pool(const Var& x, int width, int horizon, int factor) {
  require_frames(x, width, "time_pool");
  const Eigen::Index frames = x.cols() / width;
  if (factor <= 0 || horizon % factor != 0 || frames % horizon != 0) {
    throw SignatureError("time_pool: horizon not divisible by the pooling factor");
  }
  const Eigen::Index out_frames = frames / factor;
  const Matrix& in = x.value();
  Matrix v = Matrix::Zero(in.rows(), out_frames * width);
  for (Eigen::Index f = 0; f < frames; ++f) {
    v.middleCols((f / factor) * width, width) += in.middleCols(f * width, width);
  }
  v /= double(factor);
  const int ix = x.id();
  return x.tape().record(std::move(v), {x}, [=](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix d(g.rows(), frames * width);
    for (Eigen::Index f = 0; f < frames; ++f) {
      d.middleCols(f * width, width) = g.middleCols((f / factor) * width, width) / double(factor);
    }
    t.accumulate(ix, d);
  });
}

Var time_repeat(const Var& x, int width, int factor) {
  require_frames(x, width, "time_repeat");
  if (factor <= 0) throw SignatureError("time_repeat: factor must be positive");
  const Eigen::Index frames = x.cols() / width;
  const Matrix& in = x.value();
  Matrix v(in.rows(), frames * factor * width);
  for (Eigen::Index f = 0; f < frames * factor; ++f) {
    v.middleCols(f * width, width) = in.middleCols((f / factor) * width, width);
  }
  const int ix = x.id();
  return x.tape().record(std::move(v), {x}, [=](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix d = Matrix::Zero(g.rows(), frames * width);
    for (Eigen::Index f = 0; f < frames * factor; ++f) {
      d.middleCols((f / factor) * width, width) += g.middleCols(f * width, width);
    }
    t.accumulate(ix, d);
  });
}

Var scale_frames(const Var& x, const Var& s, int width) {
  require_frames(x, width, "scale_frames");
  const Eigen::Index frames = x.cols() / width;
  if (s.rows() != x.rows() || s.cols() != frames) {
    throw SignatureError("scale_frames: need one scale per (row, frame)");
  }
  const Matrix& in = x.value();
  const Matrix& sv = s.value();
  Matrix v(in.rows(), in.cols());
  for (Eigen::Index f = 0; f < frames; ++f) {
    v.middleCols(f * width, width) = sv.col(f).asDiagonal() * in.middleCols(f * width, width);
  }
  const int ix = x.id(), is = s.id();
  return x.tape().record(std::move(v), {x, s}, [=](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv = t.value(ix);
    const Matrix& scales = t.value(is);
    if (t.needs_grad(ix)) {
      Matrix d(g.rows(), g.cols());
      for (Eigen::Index f = 0; f < frames; ++f) {
        d.middleCols(f * width, width) = scales.col(f).asDiagonal() * g.middleCols(f * width, width);
      }
      t.accumulate(ix, d);
    }
    if (t.needs_grad(is)) {
      Matrix d(scales.rows(), frames);
      for (Eigen::Index f = 0; f < frames; ++f) {
        d.col(f) = g.middleCols(f * width, width)
                       .cwiseProduct(xv.middleCols(f * width, width))
                       .rowwise()
                       .sum();
      }
      t.accumulate(is, d);
    }
  });
}

Var efilm_frames(const Var& h, const Var& gamma, const Var& beta, int width, double eps) {
  require_same_shape(h, gamma, "efilm");
  require_same_shape(h, beta, "efilm");
  require_frames(h, width, "efilm");
  const Eigen::Index frames = h.cols() / width;
  const Matrix& hv = h.value();
  const Matrix& gv = gamma.value();
  Matrix v = beta.value();
  for (Eigen::Index f = 0; f < frames; ++f) {
    const auto hb = hv.middleCols(f * width, width);
    const auto gb = gv.middleCols(f * width, width);
    for (Eigen::Index r = 0; r < hv.rows(); ++r) {
      const double n = std::max(hb.row(r).norm(), eps);
      v.row(r).segment(f * width, width) += (gb.row(r).dot(hb.row(r)) / n) * hb.row(r);
    }
  }
  const int ih = h.id(), ig = gamma.id(), ib = beta.id();
  return h.tape().record(std::move(v), {h, gamma, beta}, [=](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& hv = t.value(ih);
    const Matrix& gv = t.value(ig);
    t.accumulate(ib, g);
    const bool need_h = t.needs_grad(ih), need_g = t.needs_grad(ig);
    if (!need_h && !need_g) return;
    Matrix dh = Matrix::Zero(hv.rows(), hv.cols());
    Matrix dg = Matrix::Zero(hv.rows(), hv.cols());
    for (Eigen::Index f = 0; f < frames; ++f) {
      for (Eigen::Index r = 0; r < hv.rows(); ++r) {
        const auto hr = hv.row(r).segment(f * width, width);
        const auto gr = gv.row(r).segment(f * width, width);
        const auto up = g.row(r).segment(f * width, width);
        const double norm = hr.norm();
        const bool floored = norm < eps;
        const double n = floored ? eps : norm;
        const double s = gr.dot(hr);
        // out = s * u + beta with u = h / n
        const Eigen::RowVectorXd u = hr / n;
        const double up_u = up.dot(u);
        dg.row(r).segment(f * width, width) = up_u * hr;
        Eigen::RowVectorXd d = up_u * gr;
        if (floored) {
          d += (s / n) * up;
        } else {
          d += (s / n) * (up - up_u * u);
        }
        dh.row(r).segment(f * width, width) = d;
      }
    }
    if (need_h) t.accumulate(ih, dh);
    if (need_g) t.accumulate(ig, dg);
  });
}

Var Binder::operator()(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                       double gain) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto it = params_->find(name);
  if (it == params_->end()) {
    if (mutable_params_ == nullptr) throw ConfigError("missing parameter '" + name + "'");
    Matrix m;
    switch (init) {
      case Init::kZero:
        m = Matrix::Zero(rows, cols);
        break;
      case Init::kOnes:
        m = Matrix::Ones(rows, cols);
        break;
      case Init::kIdentity:
        m = Matrix::Identity(rows, cols);
        break;
      case Init::kFanIn: {
        std::normal_distribution<double> normal(0.0, gain / std::sqrt(double(std::max<Eigen::Index>(cols, 1))));
        m.resize(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
          for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(*init_rng_);
        break;
      }
    }
    it = mutable_params_->emplace(name, std::move(m)).first;
  }
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw SignatureError("parameter '" + name + "' has shape " + std::to_string(it->second.rows()) +
                         "x" + std::to_string(it->second.cols()) + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Var v = trainable_ ? tape_.variable(it->second) : tape_.constant(it->second);
  bound_.emplace(name, v);
  return v;
}

ParamSet Binder::gradients() const {
  ParamSet g;
  for (const auto& [name, v] : bound_) g.emplace(name, v.grad());
  return g;
}

double squared_norm(const ParamSet& p) {
  double s = 0.0;
  for (const auto& [name, m] : p) s += m.squaredNorm();
  return s;
}

void jitter(ParamSet& p, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  for (auto& [name, m] : p)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += normal(rng);
}

}  // namespace sphflow::ad
