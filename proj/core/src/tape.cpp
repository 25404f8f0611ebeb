// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/tape.hpp"

#include <algorithm>
#include <cmath>

namespace timotion::ad {

namespace {

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) {
    throw timotion::UsageError(std::string(op) + ": operands recorded on different tapes");
  }
}

// C += A.B, A: n x k, B: k x m. ikj order keeps the inner loop contiguous.
void mm_acc_nn(const double* A, const double* B, double* C, int64_t n, int64_t k, int64_t m) {
  for (int64_t i = 0; i < n; ++i) {
    const double* a_row = A + i * k;
    double* c_row = C + i * m;
    for (int64_t p = 0; p < k; ++p) {
      double a = a_row[p];
      const double* b_row = B + p * m;
      for (int64_t j = 0; j < m; ++j) c_row[j] += a * b_row[j];
    }
  }
}

// C += A.B^T, A: n x k, B: m x k.
void mm_acc_nt(const double* A, const double* B, double* C, int64_t n, int64_t k, int64_t m) {
  for (int64_t i = 0; i < n; ++i) {
    const double* a_row = A + i * k;
    double* c_row = C + i * m;
    for (int64_t j = 0; j < m; ++j) {
      const double* b_row = B + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      c_row[j] += acc;
    }
  }
}

// C += A^T.B, A: k x n, B: k x m, C: n x m.
void mm_acc_tn(const double* A, const double* B, double* C, int64_t n, int64_t k, int64_t m) {
  for (int64_t p = 0; p < k; ++p) {
    const double* a_row = A + p * n;
    const double* b_row = B + p * m;
    for (int64_t i = 0; i < n; ++i) {
      double a = a_row[i];
      double* c_row = C + i * m;
      for (int64_t j = 0; j < m; ++j) c_row[j] += a * b_row[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape core

Var Tape::leaf(Array value) {
  nodes_.push_back(Node{std::move(value), Array{}, nullptr, nullptr});
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, Array{}, nullptr, &p});
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::make(Array value, BackFn back) {
  nodes_.push_back(Node{std::move(value), Array{}, std::move(back), nullptr});
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Array& Tape::grad_buffer(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.data.empty()) n.grad = Array::zeros(n.value.shape);
  return n.grad;
}

bool Tape::grad_live(int32_t id) const {
  return !nodes_[static_cast<size_t>(id)].grad.data.empty();
}

const Array& Tape::value(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int32_t>(nodes_.size())) {
    throw timotion::UsageError("Var does not belong to this tape");
  }
  return nodes_[static_cast<size_t>(v.id)].value;
}

Array Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  if (n.grad.data.empty()) return Array::zeros(n.value.shape);
  return n.grad;
}

void Tape::backward(Var out) {
  if (out.tape != this) throw timotion::UsageError("backward: Var from another tape");
  const Array& v = value(out);
  if (v.size() != 1) {
    throw timotion::DimensionError("backward: target must be a single element, got shape " +
                                   shape_to_string(v.shape));
  }
  grad_buffer(out.id).data[0] += 1.0;
  for (int32_t i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.data.empty()) continue;  // never reached by a downstream gradient
    if (n.back) n.back(*this, i);
    if (n.param) {
      for (size_t j = 0; j < n.grad.data.size(); ++j) n.param->grad.data[j] += n.grad.data[j];
    }
  }
}

void Tape::reset() { nodes_.clear(); }

// ---------------------------------------------------------------------------
// Elementwise binary

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  const Array& y = t.value(b);
  check_same_shape(x, y, "add");
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] + y.data[i];
  int32_t aid = a.id, bid = b.id;
  return t.make(std::move(out), [aid, bid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    Array& gb = tp.grad_buffer(bid);
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b, "sub");
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  const Array& y = t.value(b);
  check_same_shape(x, y, "sub");
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] - y.data[i];
  int32_t aid = a.id, bid = b.id;
  return t.make(std::move(out), [aid, bid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    Array& gb = tp.grad_buffer(bid);
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  const Array& y = t.value(b);
  check_same_shape(x, y, "mul");
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] * y.data[i];
  int32_t aid = a.id, bid = b.id;
  return t.make(std::move(out), [aid, bid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& x = tp.node_value(aid);
    const Array& y = tp.node_value(bid);
    Array& ga = tp.grad_buffer(aid);
    Array& gb = tp.grad_buffer(bid);
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i] * y.data[i];
      gb.data[i] += g.data[i] * x.data[i];
    }
  });
}

Var div(Var a, Var b) {
  check_same_tape(a, b, "div");
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  const Array& y = t.value(b);
  check_same_shape(x, y, "div");
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] / y.data[i];
  int32_t aid = a.id, bid = b.id;
  return t.make(std::move(out), [aid, bid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& x = tp.node_value(aid);
    const Array& y = tp.node_value(bid);
    Array& ga = tp.grad_buffer(aid);
    Array& gb = tp.grad_buffer(bid);
    for (size_t i = 0; i < g.data.size(); ++i) {
      double inv = 1.0 / y.data[i];
      ga.data[i] += g.data[i] * inv;
      gb.data[i] -= g.data[i] * x.data[i] * inv * inv;
    }
  });
}

Var affine(Var a, double scale, double shift) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = scale * x.data[i] + shift;
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, scale](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += scale * g.data[i];
  });
}

// ---------------------------------------------------------------------------
// Matrix ops

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  const Array& y = t.value(b);
  check_rank2(x, "matmul lhs");
  check_rank2(y, "matmul rhs");
  if (x.cols() != y.rows()) {
    throw timotion::DimensionError("matmul: inner extents differ, " + shape_to_string(x.shape) +
                                   " vs " + shape_to_string(y.shape));
  }
  int64_t n = x.rows(), k = x.cols(), m = y.cols();
  Array out({n, m});
  mm_acc_nn(x.data.data(), y.data.data(), out.data.data(), n, k, m);
  int32_t aid = a.id, bid = b.id;
  return t.make(std::move(out), [aid, bid, n, k, m](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& x = tp.node_value(aid);
    const Array& y = tp.node_value(bid);
    Array& ga = tp.grad_buffer(aid);
    Array& gb = tp.grad_buffer(bid);
    mm_acc_nt(g.data.data(), y.data.data(), ga.data.data(), n, m, k);  // dA += G.B^T
    mm_acc_tn(x.data.data(), g.data.data(), gb.data.data(), k, n, m);  // dB += A^T.G
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  check_rank2(x, "transpose");
  int64_t n = x.rows(), m = x.cols();
  Array out({m, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.at(j, i) = x.at(i, j);
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, n, m](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) ga.data[static_cast<size_t>(i * m + j)] += g.data[static_cast<size_t>(j * n + i)];
  });
}

// ---------------------------------------------------------------------------
// Layout ops

Var concat_cols(Var a, Var b) { return concat_cols(std::vector<Var>{a, b}); }

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw timotion::UsageError("concat_cols: no inputs");
  Tape& t = *parts[0].tape;
  int64_t rows = -1, total = 0;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p, "concat_cols");
    const Array& x = t.value(p);
    check_rank2(x, "concat_cols");
    if (rows < 0) rows = x.rows();
    if (x.rows() != rows) {
      throw timotion::DimensionError("concat_cols: row counts differ, " +
                                     shape_to_string(t.value(parts[0]).shape) + " vs " +
                                     shape_to_string(x.shape));
    }
    total += x.cols();
  }
  Array out({rows, total});
  std::vector<int32_t> ids;
  std::vector<int64_t> widths;
  int64_t off = 0;
  for (const Var& p : parts) {
    const Array& x = t.value(p);
    int64_t w = x.cols();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < w; ++c) out.at(r, off + c) = x.at(r, c);
    ids.push_back(p.id);
    widths.push_back(w);
    off += w;
  }
  return t.make(std::move(out), [ids, widths, rows, total](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    int64_t off = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      Array& gp = tp.grad_buffer(ids[k]);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < widths[k]; ++c)
          gp.data[static_cast<size_t>(r * widths[k] + c)] += g.data[static_cast<size_t>(r * total + off + c)];
      off += widths[k];
    }
  });
}

Var concat_rows(Var a, Var b) { return concat_rows(std::vector<Var>{a, b}); }

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw timotion::UsageError("concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  int64_t cols = -1, total = 0;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p, "concat_rows");
    const Array& x = t.value(p);
    check_rank2(x, "concat_rows");
    if (cols < 0) cols = x.cols();
    if (x.cols() != cols) {
      throw timotion::DimensionError("concat_rows: column counts differ, " +
                                     shape_to_string(t.value(parts[0]).shape) + " vs " +
                                     shape_to_string(x.shape));
    }
    total += x.rows();
  }
  Array out({total, cols});
  std::vector<int32_t> ids;
  std::vector<int64_t> heights;
  int64_t off = 0;
  for (const Var& p : parts) {
    const Array& x = t.value(p);
    std::copy(x.data.begin(), x.data.end(), out.data.begin() + off * cols);
    ids.push_back(p.id);
    heights.push_back(x.rows());
    off += x.rows();
  }
  return t.make(std::move(out), [ids, heights, cols](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    int64_t off = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      Array& gp = tp.grad_buffer(ids[k]);
      int64_t n = heights[k] * cols;
      for (int64_t i = 0; i < n; ++i) gp.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(off * cols + i)];
      off += heights[k];
    }
  });
}

Var slice_cols(Var a, int64_t start, int64_t count) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  check_rank2(x, "slice_cols");
  if (start < 0 || count < 1 || start + count > x.cols()) {
    throw timotion::DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                                   std::to_string(start + count) + ") outside shape " +
                                   shape_to_string(x.shape));
  }
  int64_t rows = x.rows(), w = x.cols();
  Array out({rows, count});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < count; ++c) out.at(r, c) = x.at(r, start + c);
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, start, count, rows, w](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < count; ++c)
        ga.data[static_cast<size_t>(r * w + start + c)] += g.data[static_cast<size_t>(r * count + c)];
  });
}

std::pair<Var, Var> split_cols(Var a, int64_t left_cols) {
  const Array& x = a.tape->value(a);
  check_rank2(x, "split_cols");
  if (left_cols < 1 || left_cols >= x.cols()) {
    throw timotion::DimensionError("split_cols: split at " + std::to_string(left_cols) +
                                   " outside shape " + shape_to_string(x.shape));
  }
  return {slice_cols(a, 0, left_cols), slice_cols(a, left_cols, x.cols() - left_cols)};
}

Var gather_rows(Var a, std::vector<int64_t> index) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  check_rank2(x, "gather_rows");
  int64_t rows = x.rows(), w = x.cols();
  for (int64_t i : index) {
    if (i < 0 || i >= rows) {
      throw timotion::DimensionError("gather_rows: index " + std::to_string(i) +
                                     " outside shape " + shape_to_string(x.shape));
    }
  }
  Array out({static_cast<int64_t>(index.size()), w});
  for (size_t r = 0; r < index.size(); ++r)
    for (int64_t c = 0; c < w; ++c) out.data[r * static_cast<size_t>(w) + static_cast<size_t>(c)] = x.at(index[r], c);
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, index = std::move(index), w](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    for (size_t r = 0; r < index.size(); ++r)
      for (int64_t c = 0; c < w; ++c)
        ga.data[static_cast<size_t>(index[r] * w + c)] += g.data[r * static_cast<size_t>(w) + static_cast<size_t>(c)];
  });
}

Var slice_rows(Var a, int64_t start, int64_t count) {
  const Array& x = a.tape->value(a);
  check_rank2(x, "slice_rows");
  if (start < 0 || count < 1 || start + count > x.rows()) {
    throw timotion::DimensionError("slice_rows: range [" + std::to_string(start) + ", " +
                                   std::to_string(start + count) + ") outside shape " +
                                   shape_to_string(x.shape));
  }
  std::vector<int64_t> idx(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = start + i;
  return gather_rows(a, std::move(idx));
}

Var shift_rows_down(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  check_rank2(x, "shift_rows_down");
  int64_t rows = x.rows(), w = x.cols();
  Array out({rows, w});
  for (int64_t r = 1; r < rows; ++r)
    for (int64_t c = 0; c < w; ++c) out.at(r, c) = x.at(r - 1, c);
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, rows, w](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    for (int64_t r = 1; r < rows; ++r)
      for (int64_t c = 0; c < w; ++c)
        ga.data[static_cast<size_t>((r - 1) * w + c)] += g.data[static_cast<size_t>(r * w + c)];
  });
}

Var repeat_rows(Var row, int64_t rows) {
  Tape& t = *row.tape;
  const Array& x = t.value(row);
  check_rank2(x, "repeat_rows");
  if (x.rows() != 1) {
    throw timotion::DimensionError("repeat_rows: expected a single row, got shape " +
                                   shape_to_string(x.shape));
  }
  if (rows < 1) throw timotion::DimensionError("repeat_rows: non-positive row count");
  int64_t w = x.cols();
  Array out({rows, w});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < w; ++c) out.at(r, c) = x.data[static_cast<size_t>(c)];
  int32_t aid = row.id;
  return t.make(std::move(out), [aid, rows, w](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < w; ++c) ga.data[static_cast<size_t>(c)] += g.data[static_cast<size_t>(r * w + c)];
  });
}

Var scale_rows(Var a, Var s) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  const Array& sc = t.value(s);
  check_rank2(x, "scale_rows");
  if (sc.rows() != x.rows() || sc.cols() != 1) {
    throw timotion::DimensionError("scale_rows: scale " + shape_to_string(sc.shape) +
                                   " must be a [" + std::to_string(x.rows()) + ", 1] column");
  }
  int64_t n = x.rows(), w = x.cols();
  Array out(x.shape);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < w; ++c) out.at(r, c) = x.at(r, c) * sc.at(r, 0);
  int32_t aid = a.id, sid = s.id;
  return t.make(std::move(out), [aid, sid, n, w](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& x = tp.node_value(aid);
    const Array& sc = tp.node_value(sid);
    Array& ga = tp.grad_buffer(aid);
    Array& gs = tp.grad_buffer(sid);
    for (int64_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (int64_t c = 0; c < w; ++c) {
        ga.at(r, c) += g.at(r, c) * sc.at(r, 0);
        acc += g.at(r, c) * x.at(r, c);
      }
      gs.at(r, 0) += acc;
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary

Var exp(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = std::exp(x.data[i]);
  int32_t aid = a.id;
  return t.make(std::move(out), [aid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& y = tp.node_value(self);
    Array& ga = tp.grad_buffer(aid);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
  });
}

Var sqrt(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = std::sqrt(x.data[i]);
  int32_t aid = a.id;
  return t.make(std::move(out), [aid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& y = tp.node_value(self);
    Array& ga = tp.grad_buffer(aid);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * 0.5 / y.data[i];
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) {
    double v = x.data[i];
    out.data[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  int32_t aid = a.id;
  return t.make(std::move(out), [aid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& y = tp.node_value(self);
    Array& ga = tp.grad_buffer(aid);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  int32_t aid = a.id;
  return t.make(std::move(out), [aid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& x = tp.node_value(aid);
    Array& ga = tp.grad_buffer(aid);
    for (size_t i = 0; i < g.data.size(); ++i) {
      if (x.data[i] > 0.0) ga.data[i] += g.data[i];
    }
  });
}

Var square(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  Array out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] * x.data[i];
  int32_t aid = a.id;
  return t.make(std::move(out), [aid](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& x = tp.node_value(aid);
    Array& ga = tp.grad_buffer(aid);
    for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * 2.0 * x.data[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations

Var max_reduce(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  if (x.data.empty()) throw timotion::DimensionError("max_reduce: empty input");
  size_t arg = 0;
  for (size_t i = 1; i < x.data.size(); ++i) {
    if (x.data[i] > x.data[arg]) arg = i;
  }
  Array out = Array::scalar(x.data[arg]);
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, arg](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    tp.grad_buffer(aid).data[arg] += g.data[0];
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  check_rank2(x, "softmax_rows");
  int64_t rows = x.rows(), w = x.cols();
  Array out({rows, w});
  for (int64_t r = 0; r < rows; ++r) {
    double m = x.at(r, 0);
    for (int64_t c = 1; c < w; ++c) m = std::max(m, x.at(r, c));
    double z = 0.0;
    for (int64_t c = 0; c < w; ++c) {
      double e = std::exp(x.at(r, c) - m);
      out.at(r, c) = e;
      z += e;
    }
    for (int64_t c = 0; c < w; ++c) out.at(r, c) /= z;
  }
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, rows, w](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& y = tp.node_value(self);
    Array& ga = tp.grad_buffer(aid);
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t c = 0; c < w; ++c) dot += g.at(r, c) * y.at(r, c);
      for (int64_t c = 0; c < w; ++c)
        ga.data[static_cast<size_t>(r * w + c)] += y.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var layer_norm_rows(Var a, double eps) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  check_rank2(x, "layer_norm_rows");
  int64_t rows = x.rows(), w = x.cols();
  Array out({rows, w});
  Array inv_std({rows, 1});
  for (int64_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int64_t c = 0; c < w; ++c) mean += x.at(r, c);
    mean /= static_cast<double>(w);
    double var = 0.0;
    for (int64_t c = 0; c < w; ++c) {
      double d = x.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(w);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std.at(r, 0) = is;
    for (int64_t c = 0; c < w; ++c) out.at(r, c) = (x.at(r, c) - mean) * is;
  }
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, rows, w, inv_std = std::move(inv_std)](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& y = tp.node_value(self);
    Array& ga = tp.grad_buffer(aid);
    for (int64_t r = 0; r < rows; ++r) {
      double gm = 0.0, gym = 0.0;
      for (int64_t c = 0; c < w; ++c) {
        gm += g.at(r, c);
        gym += g.at(r, c) * y.at(r, c);
      }
      gm /= static_cast<double>(w);
      gym /= static_cast<double>(w);
      double is = inv_std.at(r, 0);
      for (int64_t c = 0; c < w; ++c)
        ga.data[static_cast<size_t>(r * w + c)] += is * (g.at(r, c) - gm - y.at(r, c) * gym);
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  double s = 0.0;
  for (double v : x.data) s += v;
  int32_t aid = a.id;
  return t.make(Array::scalar(s), [aid](Tape& tp, int32_t self) {
    double g = tp.grad_buffer(self).data[0];
    Array& ga = tp.grad_buffer(aid);
    for (double& v : ga.data) v += g;
  });
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  check_rank2(x, "row_sum");
  int64_t rows = x.rows(), w = x.cols();
  Array out({rows, 1});
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < w; ++c) s += x.at(r, c);
    out.at(r, 0) = s;
  }
  int32_t aid = a.id;
  return t.make(std::move(out), [aid, rows, w](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    Array& ga = tp.grad_buffer(aid);
    for (int64_t r = 0; r < rows; ++r) {
      double gr = g.at(r, 0);
      for (int64_t c = 0; c < w; ++c) ga.data[static_cast<size_t>(r * w + c)] += gr;
    }
  });
}

Var mse(Var a, Var b) {
  check_same_tape(a, b, "mse");
  Tape& t = *a.tape;
  const Array& x = t.value(a);
  const Array& y = t.value(b);
  check_same_shape(x, y, "mse");
  double n = static_cast<double>(x.size());
  double s = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    double d = x.data[i] - y.data[i];
    s += d * d;
  }
  int32_t aid = a.id, bid = b.id;
  return t.make(Array::scalar(s / n), [aid, bid, n](Tape& tp, int32_t self) {
    double g = tp.grad_buffer(self).data[0];
    const Array& x = tp.node_value(aid);
    const Array& y = tp.node_value(bid);
    Array& ga = tp.grad_buffer(aid);
    Array& gb = tp.grad_buffer(bid);
    double k = 2.0 * g / n;
    for (size_t i = 0; i < x.data.size(); ++i) {
      double d = k * (x.data[i] - y.data[i]);
      ga.data[i] += d;
      gb.data[i] -= d;
    }
  });
}

// ---------------------------------------------------------------------------
// Structured ops

Var linear(Var x, Var w, Var b) {
  check_same_tape(x, w, "linear");
  check_same_tape(x, b, "linear");
  Tape& t = *x.tape;
  const Array& xv = t.value(x);
  const Array& wv = t.value(w);
  const Array& bv = t.value(b);
  check_rank2(xv, "linear input");
  check_rank2(wv, "linear weight");
  if (xv.cols() != wv.rows()) {
    throw timotion::DimensionError("linear: input " + shape_to_string(xv.shape) +
                                   " does not match weight " + shape_to_string(wv.shape));
  }
  if (bv.rank() != 2 || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw timotion::DimensionError("linear: bias " + shape_to_string(bv.shape) +
                                   " does not match weight " + shape_to_string(wv.shape));
  }
  int64_t n = xv.rows(), k = xv.cols(), m = wv.cols();
  Array out({n, m});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.at(i, j) = bv.data[static_cast<size_t>(j)];
  mm_acc_nn(xv.data.data(), wv.data.data(), out.data.data(), n, k, m);
  int32_t xid = x.id, wid = w.id, bid = b.id;
  return t.make(std::move(out), [xid, wid, bid, n, k, m](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& xv = tp.node_value(xid);
    const Array& wv = tp.node_value(wid);
    Array& gx = tp.grad_buffer(xid);
    Array& gw = tp.grad_buffer(wid);
    Array& gb = tp.grad_buffer(bid);
    mm_acc_nt(g.data.data(), wv.data.data(), gx.data.data(), n, m, k);
    mm_acc_tn(xv.data.data(), g.data.data(), gw.data.data(), k, n, m);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) gb.data[static_cast<size_t>(j)] += g.at(i, j);
  });
}

Var conv1d(Var x, Var w, Var b) {
  check_same_tape(x, w, "conv1d");
  check_same_tape(x, b, "conv1d");
  Tape& t = *x.tape;
  const Array& xv = t.value(x);
  const Array& wv = t.value(w);
  const Array& bv = t.value(b);
  check_rank2(xv, "conv1d input");
  if (wv.rank() != 3) {
    throw timotion::DimensionError("conv1d: weight must be rank-3 {k, in, out}, got " +
                                   shape_to_string(wv.shape));
  }
  int64_t L = xv.rows(), cin = xv.cols();
  int64_t k = wv.shape[0], wcin = wv.shape[1], cout = wv.shape[2];
  if (wcin != cin) {
    throw timotion::DimensionError("conv1d: input " + shape_to_string(xv.shape) +
                                   " does not match weight " + shape_to_string(wv.shape));
  }
  if (bv.rank() != 2 || bv.rows() != 1 || bv.cols() != cout) {
    throw timotion::DimensionError("conv1d: bias " + shape_to_string(bv.shape) +
                                   " does not match weight " + shape_to_string(wv.shape));
  }
  int64_t off = (k - 1) / 2;
  Array out({L, cout});
  for (int64_t s = 0; s < L; ++s)
    for (int64_t co = 0; co < cout; ++co) out.at(s, co) = bv.data[static_cast<size_t>(co)];
  for (int64_t s = 0; s < L; ++s) {
    for (int64_t tap = 0; tap < k; ++tap) {
      int64_t src = s + tap - off;
      if (src < 0 || src >= L) continue;
      const double* xrow = xv.data.data() + src * cin;
      const double* wtap = wv.data.data() + tap * cin * cout;
      double* orow = out.data.data() + s * cout;
      for (int64_t ci = 0; ci < cin; ++ci) {
        double xi = xrow[ci];
        const double* wrow = wtap + ci * cout;
        for (int64_t co = 0; co < cout; ++co) orow[co] += xi * wrow[co];
      }
    }
  }
  int32_t xid = x.id, wid = w.id, bid = b.id;
  return t.make(std::move(out), [xid, wid, bid, L, cin, k, cout, off](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& xv = tp.node_value(xid);
    const Array& wv = tp.node_value(wid);
    Array& gx = tp.grad_buffer(xid);
    Array& gw = tp.grad_buffer(wid);
    Array& gb = tp.grad_buffer(bid);
    for (int64_t s = 0; s < L; ++s)
      for (int64_t co = 0; co < cout; ++co) gb.data[static_cast<size_t>(co)] += g.at(s, co);
    for (int64_t s = 0; s < L; ++s) {
      const double* grow = g.data.data() + s * cout;
      for (int64_t tap = 0; tap < k; ++tap) {
        int64_t src = s + tap - off;
        if (src < 0 || src >= L) continue;
        const double* xrow = xv.data.data() + src * cin;
        const double* wtap = wv.data.data() + tap * cin * cout;
        double* gxrow = gx.data.data() + src * cin;
        double* gwtap = gw.data.data() + tap * cin * cout;
        for (int64_t ci = 0; ci < cin; ++ci) {
          const double* wrow = wtap + ci * cout;
          double* gwrow = gwtap + ci * cout;
          double xi = xrow[ci];
          double acc = 0.0;
          for (int64_t co = 0; co < cout; ++co) {
            acc += grow[co] * wrow[co];
            gwrow[co] += grow[co] * xi;
          }
          gxrow[ci] += acc;
        }
      }
    }
  });
}

Var wkv(Var k, Var v) {
  check_same_tape(k, v, "wkv");
  Tape& t = *k.tape;
  const Array& kv = t.value(k);
  const Array& vv = t.value(v);
  check_rank2(kv, "wkv keys");
  check_same_shape(kv, vv, "wkv");
  int64_t T = kv.rows(), D = kv.cols();

  // Forward recurrence with running-max shifting. The sentinel makes the
  // first step reduce to h_0 = v_0 exactly (exp(sentinel - k_0) underflows
  // to zero).
  constexpr double kSentinel = -1e30;
  Array h({T, D});
  Array bden({T, D});  // shifted denominators, >= 1
  Array pmax({T, D});  // running max of k
  for (int64_t c = 0; c < D; ++c) {
    double p = kSentinel, a = 0.0, b = 0.0;
    for (int64_t s = 0; s < T; ++s) {
      double kt = kv.at(s, c);
      double pn = std::max(p, kt);
      double e1 = std::exp(p - pn);
      double e2 = std::exp(kt - pn);
      a = e1 * a + e2 * vv.at(s, c);
      b = e1 * b + e2;
      p = pn;
      h.at(s, c) = a / b;
      bden.at(s, c) = b;
      pmax.at(s, c) = p;
    }
  }
  int32_t kid = k.id, vid = v.id;
  return t.make(std::move(h),
                [kid, vid, T, D, bden = std::move(bden), pmax = std::move(pmax)](Tape& tp, int32_t self) {
    const Array& g = tp.grad_buffer(self);
    const Array& h = tp.node_value(self);
    const Array& kv = tp.node_value(kid);
    const Array& vv = tp.node_value(vid);
    Array& gk = tp.grad_buffer(kid);
    Array& gv = tp.grad_buffer(vid);
    // Closed form: with B_t = sum_{i<=t} exp(k_i),
    //   dL/dv_i = exp(k_i) * S1_i,  S1_i = sum_{t>=i} g_t / B_t
    //   dL/dk_i = exp(k_i) * (v_i * S1_i - S2_i),  S2_i = sum_{t>=i} g_t h_t / B_t.
    // Carried as S e^{-p_i} so every exponent stays <= 0.
    for (int64_t c = 0; c < D; ++c) {
      double s1 = 0.0, s2 = 0.0;
      double p_next = 0.0;
      for (int64_t s = T - 1; s >= 0; --s) {
        double p = pmax.at(s, c);
        if (s < T - 1) {
          double decay = std::exp(p - p_next);
          s1 *= decay;
          s2 *= decay;
        }
        double b = bden.at(s, c);
        s1 += g.at(s, c) / b;
        s2 += g.at(s, c) * h.at(s, c) / b;
        double w = std::exp(kv.at(s, c) - p);
        gv.data[static_cast<size_t>(s * D + c)] += w * s1;
        gk.data[static_cast<size_t>(s * D + c)] += w * (vv.at(s, c) * s1 - s2);
        p_next = p;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

double eval_at(const TapeFn& f, const std::vector<Array>& point) {
  Tape t;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Array& a : point) leaves.push_back(t.leaf(a));
  Var out = f(t, leaves);
  const Array& v = out.val();
  if (v.size() != 1) {
    throw timotion::DimensionError("grad_check: function output must be scalar, got shape " +
                                   shape_to_string(v.shape));
  }
  return v.data[0];
}

// The 1e-6 floor keeps coordinates whose true derivative sits below the
// central-difference resolution (roundoff is about 1e-11 for a unit-scale
// output at the default step) from registering as pure noise-vs-noise
// disagreement. Any real defect that large still reports at least 1e-4.
double rel_err(double analytic, double central) {
  return std::fabs(analytic - central) / (std::fabs(analytic) + std::fabs(central) + 1e-6);
}

}  // namespace

double grad_check(const TapeFn& f, const std::vector<Array>& point, double eps) {
  Tape t;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Array& a : point) leaves.push_back(t.leaf(a));
  Var out = f(t, leaves);
  t.backward(out);
  std::vector<Array> analytic;
  analytic.reserve(leaves.size());
  for (Var l : leaves) analytic.push_back(t.grad(l));

  std::vector<Array> pt = point;
  double worst = 0.0;
  for (size_t i = 0; i < pt.size(); ++i) {
    for (size_t j = 0; j < pt[i].data.size(); ++j) {
      double orig = pt[i].data[j];
      pt[i].data[j] = orig + eps;
      double fp = eval_at(f, pt);
      pt[i].data[j] = orig - eps;
      double fm = eval_at(f, pt);
      pt[i].data[j] = orig;
      double central = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, rel_err(analytic[i].data[j], central));
    }
  }
  return worst;
}

double grad_check_params(const std::function<Var(Tape&)>& build,
                         const std::vector<Parameter*>& params, double eps) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    Var out = build(t);
    if (out.val().size() != 1) {
      throw timotion::DimensionError("grad_check_params: output must be scalar, got shape " +
                                     shape_to_string(out.val().shape));
    }
    t.backward(out);
  }
  std::vector<Array> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto eval = [&]() {
    Tape t;
    return build(t).val().data[0];
  };
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    Array& value = params[i]->value;
    for (size_t j = 0; j < value.data.size(); ++j) {
      double orig = value.data[j];
      value.data[j] = orig + eps;
      double fp = eval();
      value.data[j] = orig - eps;
      double fm = eval();
      value.data[j] = orig;
      double central = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, rel_err(analytic[i].data[j], central));
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return worst;
}

}  // namespace timotion::ad
