#include "deglink/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace deglink {

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace deglink

namespace deglink::nn {

namespace {

constexpr double kNormFloor = 1e-12;

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                              shape_string(b));
}

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different tapes");
  }
  return *a.tape;
}

bool any_grad(Var a) { return a.tape->requires_grad(a); }
bool any_grad(Var a, Var b) { return a.tape->requires_grad(a) || b.tape->requires_grad(b); }

enum class Broadcast { None, Row };

Broadcast check_elementwise(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::None;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  shape_error(op, a, b);
}

}  // namespace

Parameter::Parameter(std::string name_, Matrix value_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(Matrix::Zero(value.rows(), value.cols())),
      first_moment(Matrix::Zero(value.rows(), value.cols())),
      second_moment(Matrix::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() { grad.setZero(value.rows(), value.cols()); }

const Matrix& Var::value() const { return tape->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::invalid_argument("scalar(): tensor has shape " + shape_string(v));
  }
  return v(0, 0);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, Matrix(), true, &p, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Matrix& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& contribution) {
  if (!nodes_[v.id].requires_grad) return;
  grad_buffer(v) += contribution;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss is not on this tape");
  if (consumed_) throw std::logic_error("backward: tape already consumed; run a new forward pass");
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward: loss must be 1x1, got " + shape_string(lv));
  }
  consumed_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss).setOnes();
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
  }
}

// ---------------------------------------------------------------------------
// Dense ops

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Matrix out = av * bv;
  return t.record(std::move(out), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.grad_buffer(a).noalias() += g * tp.value(b).transpose();
    if (tp.requires_grad(b)) tp.grad_buffer(b).noalias() += tp.value(a).transpose() * g;
  });
}

namespace {

template <int Sign>
Var add_sub(Var a, Var b, const char* op) {
  Tape& t = same_tape(a, b, op);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Broadcast bc = check_elementwise(op, av, bv);
  Matrix out;
  if (bc == Broadcast::None) {
    out = Sign > 0 ? Matrix(av + bv) : Matrix(av - bv);
  } else {
    out = av;
    if (Sign > 0) {
      out.rowwise() += bv.row(0);
    } else {
      out.rowwise() -= bv.row(0);
    }
  }
  return t.record(std::move(out), any_grad(a, b), [a, b, bc](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (!tp.requires_grad(b)) return;
    if (bc == Broadcast::None) {
      if (Sign > 0) {
        tp.grad_buffer(b) += g;
      } else {
        tp.grad_buffer(b) -= g;
      }
    } else {
      Matrix col = g.colwise().sum();
      if (Sign > 0) {
        tp.grad_buffer(b) += col;
      } else {
        tp.grad_buffer(b) -= col;
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return add_sub<1>(a, b, "add"); }
Var sub(Var a, Var b) { return add_sub<-1>(a, b, "sub"); }

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Broadcast bc = check_elementwise("mul", av, bv);
  Matrix out;
  if (bc == Broadcast::None) {
    out = av.cwiseProduct(bv);
  } else {
    out = av.array().rowwise() * bv.row(0).array();
  }
  return t.record(std::move(out), any_grad(a, b), [a, b, bc](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(a);
    const Matrix& bv = tp.value(b);
    if (bc == Broadcast::None) {
      if (tp.requires_grad(a)) tp.grad_buffer(a) += g.cwiseProduct(bv);
      if (tp.requires_grad(b)) tp.grad_buffer(b) += g.cwiseProduct(av);
    } else {
      if (tp.requires_grad(a)) {
        Matrix ga = g.array().rowwise() * bv.row(0).array();
        tp.grad_buffer(a) += ga;
      }
      if (tp.requires_grad(b)) {
        Matrix gb = g.cwiseProduct(av).colwise().sum();
        tp.grad_buffer(b) += gb;
      }
    }
  });
}

Var scale(Var a, double factor) {
  Matrix out = a.value() * factor;
  return a.tape->record(std::move(out), any_grad(a), [a, factor](Tape& tp, const Matrix& g) {
    tp.grad_buffer(a) += g * factor;
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b, "concat_cols");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) shape_error("concat_cols", av, bv);
  Matrix out(av.rows(), av.cols() + bv.cols());
  out.leftCols(av.cols()) = av;
  out.rightCols(bv.cols()) = bv;
  const Index split = av.cols();
  return t.record(std::move(out), any_grad(a, b), [a, b, split](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.grad_buffer(a) += g.leftCols(split);
    if (tp.requires_grad(b)) tp.grad_buffer(b) += g.rightCols(g.cols() - split);
  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = same_tape(a, b, "concat_rows");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("concat_rows", av, bv);
  Matrix out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  const Index split = av.rows();
  return t.record(std::move(out), any_grad(a, b), [a, b, split](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.grad_buffer(a) += g.topRows(split);
    if (tp.requires_grad(b)) tp.grad_buffer(b) += g.bottomRows(g.rows() - split);
  });
}

Var mean_rows(Var a) {
  const Matrix& av = a.value();
  if (av.rows() == 0) throw std::invalid_argument("mean_rows: empty tensor");
  Matrix out = av.colwise().mean();
  return a.tape->record(std::move(out), any_grad(a), [a](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_buffer(a);
    const double inv = 1.0 / static_cast<double>(ga.rows());
    ga.rowwise() += g.row(0) * inv;
  });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return a.tape->record(std::move(out), any_grad(a), [a, slope](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(a);
    Matrix d = av.unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    tp.grad_buffer(a) += g.cwiseProduct(d);
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t out_id = a.tape->size();
  return a.tape->record(std::move(out), any_grad(a), [a, out_id](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(Var{&tp, out_id});
    tp.grad_buffer(a).array() += g.array() * (1.0 - y.array().square());
  });
}

Var gather_rows(Var a, std::vector<Index> rows) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(rows.size()), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= av.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[k]) + " out of range for " +
                              shape_string(av));
    }
    out.row(static_cast<Index>(k)) = av.row(rows[k]);
  }
  return a.tape->record(std::move(out), any_grad(a),
                        [a, rows = std::move(rows)](Tape& tp, const Matrix& g) {
                          Matrix& ga = tp.grad_buffer(a);
                          for (std::size_t k = 0; k < rows.size(); ++k) {
                            ga.row(rows[k]) += g.row(static_cast<Index>(k));
                          }
                        });
}

Var row_scale(Var a, std::vector<double> factors) {
  const Matrix& av = a.value();
  if (static_cast<Index>(factors.size()) != av.rows()) {
    throw std::invalid_argument("row_scale: " + std::to_string(factors.size()) +
                                " factors for tensor " + shape_string(av));
  }
  Matrix out(av.rows(), av.cols());
  for (Index r = 0; r < av.rows(); ++r) out.row(r) = av.row(r) * factors[r];
  return a.tape->record(std::move(out), any_grad(a),
                        [a, factors = std::move(factors)](Tape& tp, const Matrix& g) {
                          Matrix& ga = tp.grad_buffer(a);
                          for (Index r = 0; r < ga.rows(); ++r) ga.row(r) += g.row(r) * factors[r];
                        });
}

Var cosine_rows(Var a, Var b) {
  Tape& t = same_tape(a, b, "cosine_rows");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("cosine_rows", av, bv);
  Matrix out(av.rows(), 1);
  for (Index r = 0; r < av.rows(); ++r) {
    out(r, 0) = cosine({av.row(r).data(), static_cast<std::size_t>(av.cols())},
                       {bv.row(r).data(), static_cast<std::size_t>(bv.cols())});
  }
  return t.record(std::move(out), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(a);
    const Matrix& bv = tp.value(b);
    const bool ga_on = tp.requires_grad(a);
    const bool gb_on = tp.requires_grad(b);
    for (Index r = 0; r < av.rows(); ++r) {
      const double na = av.row(r).norm();
      const double nb = bv.row(r).norm();
      if (na < kNormFloor || nb < kNormFloor) continue;
      const double s = av.row(r).dot(bv.row(r)) / (na * nb);
      const double gr = g(r, 0);
      if (ga_on) {
        tp.grad_buffer(a).row(r) += gr * (bv.row(r) / (na * nb) - s * av.row(r) / (na * na));
      }
      if (gb_on) {
        tp.grad_buffer(b).row(r) += gr * (av.row(r) / (na * nb) - s * bv.row(r) / (nb * nb));
      }
    }
  });
}

Var sum_squares(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return a.tape->record(std::move(out), any_grad(a), [a](Tape& tp, const Matrix& g) {
    tp.grad_buffer(a) += (2.0 * g(0, 0)) * tp.value(a);
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), any_grad(a), [a](Tape& tp, const Matrix& g) {
    tp.grad_buffer(a).array() += g(0, 0);
  });
}

// ---------------------------------------------------------------------------
// Sparse ops

Var edge_aggregate(const EdgeIndexPtr& index, Var weights, Var values) {
  Tape& t = same_tape(weights, values, "edge_aggregate");
  const Matrix& w = weights.value();
  const Matrix& v = values.value();
  const auto edges = static_cast<Index>(index->num_edges());
  if (w.rows() != edges || w.cols() != 1) {
    throw std::invalid_argument("edge_aggregate: expected " + std::to_string(edges) +
                                "x1 weights, got " + shape_string(w));
  }
  if (v.rows() != index->in_rows) {
    throw std::invalid_argument("edge_aggregate: index expects " + std::to_string(index->in_rows) +
                                " input rows, got " + shape_string(v));
  }
  Matrix out = Matrix::Zero(index->out_rows, v.cols());
  for (Index r = 0; r < index->out_rows; ++r) {
    for (std::size_t e = index->offsets[r]; e < index->offsets[r + 1]; ++e) {
      out.row(r) += w(static_cast<Index>(e), 0) * v.row(static_cast<Index>(index->sources[e]));
    }
  }
  return t.record(std::move(out), any_grad(weights, values),
                  [index, weights, values](Tape& tp, const Matrix& g) {
                    const Matrix& w = tp.value(weights);
                    const Matrix& v = tp.value(values);
                    const bool gw_on = tp.requires_grad(weights);
                    const bool gv_on = tp.requires_grad(values);
                    Matrix* gw = gw_on ? &tp.grad_buffer(weights) : nullptr;
                    Matrix* gv = gv_on ? &tp.grad_buffer(values) : nullptr;
                    for (Index r = 0; r < index->out_rows; ++r) {
                      for (std::size_t e = index->offsets[r]; e < index->offsets[r + 1]; ++e) {
                        const auto src = static_cast<Index>(index->sources[e]);
                        const auto ei = static_cast<Index>(e);
                        if (gw_on) (*gw)(ei, 0) += g.row(r).dot(v.row(src));
                        if (gv_on) gv->row(src) += w(ei, 0) * g.row(r);
                      }
                    }
                  });
}

Var edge_scores(const EdgeIndexPtr& index, Var row_scores, Var source_scores) {
  Tape& t = same_tape(row_scores, source_scores, "edge_scores");
  const Matrix& rs = row_scores.value();
  const Matrix& ss = source_scores.value();
  if (rs.rows() != index->out_rows || rs.cols() != 1 || ss.rows() != index->in_rows ||
      ss.cols() != 1) {
    shape_error("edge_scores", rs, ss);
  }
  Matrix out(static_cast<Index>(index->num_edges()), 1);
  for (Index r = 0; r < index->out_rows; ++r) {
    for (std::size_t e = index->offsets[r]; e < index->offsets[r + 1]; ++e) {
      out(static_cast<Index>(e), 0) = rs(r, 0) + ss(static_cast<Index>(index->sources[e]), 0);
    }
  }
  return t.record(std::move(out), any_grad(row_scores, source_scores),
                  [index, row_scores, source_scores](Tape& tp, const Matrix& g) {
                    const bool gr_on = tp.requires_grad(row_scores);
                    const bool gs_on = tp.requires_grad(source_scores);
                    Matrix* gr = gr_on ? &tp.grad_buffer(row_scores) : nullptr;
                    Matrix* gs = gs_on ? &tp.grad_buffer(source_scores) : nullptr;
                    for (Index r = 0; r < index->out_rows; ++r) {
                      for (std::size_t e = index->offsets[r]; e < index->offsets[r + 1]; ++e) {
                        const double ge = g(static_cast<Index>(e), 0);
                        if (gr_on) (*gr)(r, 0) += ge;
                        if (gs_on) (*gs)(static_cast<Index>(index->sources[e]), 0) += ge;
                      }
                    }
                  });
}

Var segment_softmax(const EdgeIndexPtr& index, Var logits) {
  const Matrix& x = logits.value();
  if (x.rows() != static_cast<Index>(index->num_edges()) || x.cols() != 1) {
    throw std::invalid_argument("segment_softmax: expected " +
                                std::to_string(index->num_edges()) + "x1 logits, got " +
                                shape_string(x));
  }
  Matrix out(x.rows(), 1);
  for (Index r = 0; r < index->out_rows; ++r) {
    const std::size_t begin = index->offsets[r];
    const std::size_t end = index->offsets[r + 1];
    if (begin == end) continue;
    double mx = x(static_cast<Index>(begin), 0);
    for (std::size_t e = begin + 1; e < end; ++e) mx = std::max(mx, x(static_cast<Index>(e), 0));
    double z = 0.0;
    for (std::size_t e = begin; e < end; ++e) {
      const double ex = std::exp(x(static_cast<Index>(e), 0) - mx);
      out(static_cast<Index>(e), 0) = ex;
      z += ex;
    }
    for (std::size_t e = begin; e < end; ++e) out(static_cast<Index>(e), 0) /= z;
  }
  const std::size_t out_id = logits.tape->size();
  return logits.tape->record(
      std::move(out), any_grad(logits), [index, logits, out_id](Tape& tp, const Matrix& g) {
        const Matrix& y = tp.value(Var{&tp, out_id});
        Matrix& gx = tp.grad_buffer(logits);
        for (Index r = 0; r < index->out_rows; ++r) {
          double dot = 0.0;
          for (std::size_t e = index->offsets[r]; e < index->offsets[r + 1]; ++e) {
            dot += y(static_cast<Index>(e), 0) * g(static_cast<Index>(e), 0);
          }
          for (std::size_t e = index->offsets[r]; e < index->offsets[r + 1]; ++e) {
            const auto ei = static_cast<Index>(e);
            gx(ei, 0) += y(ei, 0) * (g(ei, 0) - dot);
          }
        }
      });
}

// ---------------------------------------------------------------------------

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kNormFloor || nb < kNormFloor) return 0.0;
  return dot / (na * nb);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (!p->grad.allFinite()) {
      throw std::runtime_error("adam: non-finite gradient in parameter '" + p->name + "'");
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (Parameter* p : params) {
    p->first_moment = beta1_ * p->first_moment + (1.0 - beta1_) * p->grad;
    p->second_moment = beta2_ * p->second_moment + (1.0 - beta2_) * p->grad.cwiseAbs2();
    p->value.array() -= lr_ * (p->first_moment.array() / c1) /
                        ((p->second_moment.array() / c2).sqrt() + eps_);
    p->zero_grad();
  }
}

}  // namespace deglink::nn
