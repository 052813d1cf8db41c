#include "knowdial/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace knowdial {

namespace {

std::string g_fault_op;
double g_fault_factor = 1.0;

double fault(const char* op) {
  return (!g_fault_op.empty() && g_fault_op == op) ? g_fault_factor : 1.0;
}

bool want_track(std::initializer_list<const Tensor*> ins) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : ins) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// out[m,n] (+)= a[m,k] * b[k,n]
void gemm_nn(std::vector<double>& out, const std::vector<double>& a,
             const std::vector<double>& b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < k; ++l) {
      const double av = a[static_cast<size_t>(i) * k + l];
      if (av == 0.0) continue;
      const size_t bo = static_cast<size_t>(l) * n;
      const size_t co = static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        out[co + j] += av * b[bo + j];
      }
    }
  }
}

// out[m,k] (+)= c[m,n] * b[k,n]^T
void gemm_nt(std::vector<double>& out, const std::vector<double>& c,
             const std::vector<double>& b, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const size_t co = static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const size_t bo = static_cast<size_t>(l) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        acc += c[co + j] * b[bo + j];
      }
      out[static_cast<size_t>(i) * k + l] += acc;
    }
  }
}

// out[k,n] (+)= a[m,k]^T * c[m,n]
void gemm_tn(std::vector<double>& out, const std::vector<double>& a,
             const std::vector<double>& c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const size_t ao = static_cast<size_t>(i) * k;
    const size_t co = static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = a[ao + l];
      if (av == 0.0) continue;
      const size_t oo = static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) {
        out[oo + j] += av * c[co + j];
      }
    }
  }
}

struct SliceView {
  int count;   // number of independent softmax/mean slices
  int len;     // elements per slice
  int stride;  // stride between consecutive slice elements
  int step;    // offset between slice starts
};

SliceView slices_for_axis(const char* op, const Tensor& x, int axis) {
  if (x.rank() == 1) {
    if (axis != 0) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                       " out of range for rank 1");
    }
    return {1, x.dim(0), 1, 0};
  }
  if (x.rank() == 2) {
    if (axis == 1) return {x.dim(0), x.dim(1), 1, x.dim(1)};
    if (axis == 0) return {x.dim(1), x.dim(0), x.dim(1), 1};
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank 2");
  }
  throw ShapeError(std::string(op) + ": unsupported rank for shape " +
                   shape_str(x.shape()));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

void set_gradient_fault(const std::string& op, double factor) {
  if (factor == 1.0) {
    g_fault_op.clear();
    g_fault_factor = 1.0;
  } else {
    g_fault_op = op;
    g_fault_factor = factor;
  }
}

namespace ops {

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2) {
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const int m = a.rank() == 2 ? a.dim(0) : 1;
  const int k = a.rank() == 2 ? a.dim(1) : a.dim(0);
  const int k2 = b.rank() == 2 ? b.dim(0) : b.dim(0);
  const int n = b.rank() == 2 ? b.dim(1) : 1;
  if (k != k2) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }

  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    out_shape = {m, n};
  } else if (a.rank() == 2) {
    out_shape = {m};
  } else if (b.rank() == 2) {
    out_shape = {n};
  } else {
    out_shape = {1};
  }

  Tensor out(out_shape, 0.0, false);
  gemm_nn(out.values(), a.values(), b.values(), m, k, n);

  if (want_track({&a, &b})) {
    out.set_requires_grad(true);
    tape.record("matmul", {a, b}, out, [m, k, n](const TapeNode& node) {
      const double ff = fault("matmul");
      const Tensor& pa = node.inputs[0];
      const Tensor& pb = node.inputs[1];
      const std::vector<double>& dout = node.output.grad();
      if (pa.requires_grad()) {
        std::vector<double> da(pa.grad().size(), 0.0);
        gemm_nt(da, dout, pb.values(), m, n, k);
        for (size_t i = 0; i < da.size(); ++i) pa.grad()[i] += ff * da[i];
      }
      if (pb.requires_grad()) {
        std::vector<double> db(pb.grad().size(), 0.0);
        gemm_tn(db, pa.values(), dout, m, k, n);
        for (size_t i = 0; i < db.size(); ++i) pb.grad()[i] += ff * db[i];
      }
    });
  }
  return out;
}

Tensor concat(Tape& tape, std::span<const Tensor> xs) {
  if (xs.empty()) {
    throw ShapeError("concat: no inputs");
  }
  const int rank = xs[0].rank();
  if (rank < 1 || rank > 2) {
    throw ShapeError("concat: unsupported rank for shape " +
                     shape_str(xs[0].shape()));
  }
  const int rows = rank == 2 ? xs[0].dim(0) : 1;
  int total = 0;
  bool track = false;
  for (const Tensor& x : xs) {
    if (x.rank() != rank || (rank == 2 && x.dim(0) != rows)) {
      throw ShapeError("concat: shape mismatch " + shape_str(xs[0].shape()) +
                       " vs " + shape_str(x.shape()));
    }
    total += x.rank() == 2 ? x.dim(1) : x.dim(0);
    track = track || x.requires_grad();
  }
  track = track && grad_enabled();

  Shape out_shape = rank == 2 ? Shape{rows, total} : Shape{total};
  Tensor out(out_shape, 0.0, false);
  {
    int col = 0;
    for (const Tensor& x : xs) {
      const int w = rank == 2 ? x.dim(1) : x.dim(0);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < w; ++c) {
          out.values()[static_cast<size_t>(r) * total + col + c] =
              x.values()[static_cast<size_t>(r) * w + c];
        }
      }
      col += w;
    }
  }

  if (track) {
    out.set_requires_grad(true);
    tape.record("concat", std::vector<Tensor>(xs.begin(), xs.end()), out,
                [rows, total](const TapeNode& node) {
                  const std::vector<double>& dout = node.output.grad();
                  int col = 0;
                  for (const Tensor& x : node.inputs) {
                    const int w = x.rank() == 2 ? x.dim(1) : x.dim(0);
                    if (x.requires_grad()) {
                      for (int r = 0; r < rows; ++r) {
                        for (int c = 0; c < w; ++c) {
                          x.grad()[static_cast<size_t>(r) * w + c] +=
                              dout[static_cast<size_t>(r) * total + col + c];
                        }
                      }
                    }
                    col += w;
                  }
                });
  }
  return out;
}

Tensor concat(Tape& tape, std::initializer_list<Tensor> xs) {
  std::vector<Tensor> v(xs);
  return concat(tape, std::span<const Tensor>(v));
}

Tensor tanh(Tape& tape, const Tensor& x) {
  Tensor out(x.shape(), 0.0, false);
  for (int i = 0; i < x.numel(); ++i) {
    out.values()[static_cast<size_t>(i)] =
        std::tanh(x.values()[static_cast<size_t>(i)]);
  }
  if (want_track({&x})) {
    out.set_requires_grad(true);
    tape.record("tanh", {x}, out, [](const TapeNode& node) {
      const double ff = fault("tanh");
      const Tensor& px = node.inputs[0];
      if (!px.requires_grad()) return;
      const std::vector<double>& y = node.output.values();
      const std::vector<double>& dy = node.output.grad();
      for (size_t i = 0; i < y.size(); ++i) {
        px.grad()[i] += ff * dy[i] * (1.0 - y[i] * y[i]);
      }
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  Tensor out(x.shape(), 0.0, false);
  for (int i = 0; i < x.numel(); ++i) {
    const double v = x.values()[static_cast<size_t>(i)];
    out.values()[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-v));
  }
  if (want_track({&x})) {
    out.set_requires_grad(true);
    tape.record("sigmoid", {x}, out, [](const TapeNode& node) {
      const double ff = fault("sigmoid");
      const Tensor& px = node.inputs[0];
      if (!px.requires_grad()) return;
      const std::vector<double>& y = node.output.values();
      const std::vector<double>& dy = node.output.grad();
      for (size_t i = 0; i < y.size(); ++i) {
        px.grad()[i] += ff * dy[i] * y[i] * (1.0 - y[i]);
      }
    });
  }
  return out;
}

Tensor softmax(Tape& tape, const Tensor& x, int axis) {
  const SliceView sv = slices_for_axis("softmax", x, axis);
  Tensor out(x.shape(), 0.0, false);
  for (int s = 0; s < sv.count; ++s) {
    const size_t base = static_cast<size_t>(s) * sv.step;
    double mx = x.values()[base];
    for (int i = 1; i < sv.len; ++i) {
      mx = std::max(mx, x.values()[base + static_cast<size_t>(i) * sv.stride]);
    }
    double denom = 0.0;
    for (int i = 0; i < sv.len; ++i) {
      const size_t idx = base + static_cast<size_t>(i) * sv.stride;
      const double e = std::exp(x.values()[idx] - mx);
      out.values()[idx] = e;
      denom += e;
    }
    for (int i = 0; i < sv.len; ++i) {
      out.values()[base + static_cast<size_t>(i) * sv.stride] /= denom;
    }
  }
  if (want_track({&x})) {
    out.set_requires_grad(true);
    tape.record("softmax", {x}, out, [sv](const TapeNode& node) {
      const double ff = fault("softmax");
      const Tensor& px = node.inputs[0];
      if (!px.requires_grad()) return;
      const std::vector<double>& y = node.output.values();
      const std::vector<double>& dy = node.output.grad();
      for (int s = 0; s < sv.count; ++s) {
        const size_t base = static_cast<size_t>(s) * sv.step;
        double dot = 0.0;
        for (int i = 0; i < sv.len; ++i) {
          const size_t idx = base + static_cast<size_t>(i) * sv.stride;
          dot += dy[idx] * y[idx];
        }
        for (int i = 0; i < sv.len; ++i) {
          const size_t idx = base + static_cast<size_t>(i) * sv.stride;
          px.grad()[idx] += ff * y[idx] * (dy[idx] - dot);
        }
      }
    });
  }
  return out;
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("hadamard", a, b);
  Tensor out(a.shape(), 0.0, false);
  for (int i = 0; i < a.numel(); ++i) {
    out.values()[static_cast<size_t>(i)] =
        a.values()[static_cast<size_t>(i)] * b.values()[static_cast<size_t>(i)];
  }
  if (want_track({&a, &b})) {
    out.set_requires_grad(true);
    tape.record("hadamard", {a, b}, out, [](const TapeNode& node) {
      const Tensor& pa = node.inputs[0];
      const Tensor& pb = node.inputs[1];
      const std::vector<double>& dy = node.output.grad();
      if (pa.requires_grad()) {
        for (size_t i = 0; i < dy.size(); ++i) {
          pa.grad()[i] += dy[i] * pb.values()[i];
        }
      }
      if (pb.requires_grad()) {
        for (size_t i = 0; i < dy.size(); ++i) {
          pb.grad()[i] += dy[i] * pa.values()[i];
        }
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  // Canonicalize [d] + [n,d] to [n,d] + [d].
  if (a.rank() == 1 && b.rank() == 2) return add(tape, b, a);

  const bool row_broadcast = a.rank() == 2 && b.rank() == 1;
  if (row_broadcast) {
    if (a.dim(1) != b.dim(0)) {
      throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
  } else {
    check_same_shape("add", a, b);
  }

  Tensor out(a.shape(), 0.0, false);
  if (row_broadcast) {
    const int n = a.dim(0), d = a.dim(1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        out.values()[static_cast<size_t>(i) * d + j] =
            a.values()[static_cast<size_t>(i) * d + j] +
            b.values()[static_cast<size_t>(j)];
      }
    }
  } else {
    for (int i = 0; i < a.numel(); ++i) {
      out.values()[static_cast<size_t>(i)] =
          a.values()[static_cast<size_t>(i)] +
          b.values()[static_cast<size_t>(i)];
    }
  }

  if (want_track({&a, &b})) {
    out.set_requires_grad(true);
    tape.record("add", {a, b}, out, [row_broadcast](const TapeNode& node) {
      const Tensor& pa = node.inputs[0];
      const Tensor& pb = node.inputs[1];
      const std::vector<double>& dy = node.output.grad();
      if (pa.requires_grad()) {
        for (size_t i = 0; i < dy.size(); ++i) pa.grad()[i] += dy[i];
      }
      if (pb.requires_grad()) {
        if (row_broadcast) {
          const int n = pa.dim(0), d = pa.dim(1);
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
              pb.grad()[static_cast<size_t>(j)] +=
                  dy[static_cast<size_t>(i) * d + j];
            }
          }
        } else {
          for (size_t i = 0; i < dy.size(); ++i) pb.grad()[i] += dy[i];
        }
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
  Tensor out(x.shape(), 0.0, false);
  for (int i = 0; i < x.numel(); ++i) {
    out.values()[static_cast<size_t>(i)] =
        c * x.values()[static_cast<size_t>(i)];
  }
  if (want_track({&x})) {
    out.set_requires_grad(true);
    tape.record("scale", {x}, out, [c](const TapeNode& node) {
      const Tensor& px = node.inputs[0];
      if (!px.requires_grad()) return;
      const std::vector<double>& dy = node.output.grad();
      for (size_t i = 0; i < dy.size(); ++i) px.grad()[i] += c * dy[i];
    });
  }
  return out;
}

Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw ShapeError("scale_by: factor of shape " + shape_str(s.shape()) +
                     " is not a scalar");
  }
  const double c = s.values()[0];
  Tensor out(x.shape(), 0.0, false);
  for (int i = 0; i < x.numel(); ++i) {
    out.values()[static_cast<size_t>(i)] =
        c * x.values()[static_cast<size_t>(i)];
  }
  if (want_track({&x, &s})) {
    out.set_requires_grad(true);
    tape.record("scale_by", {x, s}, out, [](const TapeNode& node) {
      const Tensor& px = node.inputs[0];
      const Tensor& ps = node.inputs[1];
      const double c2 = ps.values()[0];
      const std::vector<double>& dy = node.output.grad();
      if (px.requires_grad()) {
        for (size_t i = 0; i < dy.size(); ++i) px.grad()[i] += c2 * dy[i];
      }
      if (ps.requires_grad()) {
        double acc = 0.0;
        for (size_t i = 0; i < dy.size(); ++i) acc += dy[i] * px.values()[i];
        ps.grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& x, int axis) {
  const SliceView sv = slices_for_axis("mean", x, axis);
  // Reducing along `axis` leaves one value per slice... except that a
  // slice here runs along the reduced axis, so the output has sv.count
  // entries for rank 2 and is a scalar for rank 1.
  Shape out_shape = x.rank() == 1 ? Shape{1} : Shape{sv.count};
  Tensor out(out_shape, 0.0, false);
  for (int s = 0; s < sv.count; ++s) {
    const size_t base = static_cast<size_t>(s) * sv.step;
    double acc = 0.0;
    for (int i = 0; i < sv.len; ++i) {
      acc += x.values()[base + static_cast<size_t>(i) * sv.stride];
    }
    out.values()[static_cast<size_t>(s)] = acc / sv.len;
  }
  if (want_track({&x})) {
    out.set_requires_grad(true);
    tape.record("mean", {x}, out, [sv](const TapeNode& node) {
      const Tensor& px = node.inputs[0];
      if (!px.requires_grad()) return;
      const std::vector<double>& dy = node.output.grad();
      for (int s = 0; s < sv.count; ++s) {
        const size_t base = static_cast<size_t>(s) * sv.step;
        const double g = dy[static_cast<size_t>(s)] / sv.len;
        for (int i = 0; i < sv.len; ++i) {
          px.grad()[base + static_cast<size_t>(i) * sv.stride] += g;
        }
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Tensor out({1}, 0.0, false);
  double acc = 0.0;
  for (int i = 0; i < x.numel(); ++i) acc += x.values()[static_cast<size_t>(i)];
  out.values()[0] = acc;
  if (want_track({&x})) {
    out.set_requires_grad(true);
    tape.record("sum", {x}, out, [](const TapeNode& node) {
      const Tensor& px = node.inputs[0];
      if (!px.requires_grad()) return;
      const double g = node.output.grad()[0];
      for (double& v : px.grad()) v += g;
    });
  }
  return out;
}

Tensor embedding_lookup(Tape& tape, const Tensor& table,
                        std::span<const int> ids) {
  if (table.rank() != 2) {
    throw ShapeError("embedding-lookup: table of shape " +
                     shape_str(table.shape()) + " is not rank 2");
  }
  if (ids.empty()) {
    throw ShapeError("embedding-lookup: empty id list");
  }
  const int vocab = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw ShapeError("embedding-lookup: id " + std::to_string(id) +
                       " out of range [0, " + std::to_string(vocab) + ")");
    }
  }
  Tensor out({static_cast<int>(ids.size()), d}, 0.0, false);
  for (size_t r = 0; r < ids.size(); ++r) {
    const size_t src = static_cast<size_t>(ids[r]) * d;
    for (int c = 0; c < d; ++c) {
      out.values()[r * d + c] = table.values()[src + c];
    }
  }
  if (want_track({&table})) {
    out.set_requires_grad(true);
    std::vector<int> ids_copy(ids.begin(), ids.end());
    tape.record("embedding-lookup", {table}, out,
                [ids_copy, d](const TapeNode& node) {
                  const Tensor& pt = node.inputs[0];
                  if (!pt.requires_grad()) return;
                  const std::vector<double>& dy = node.output.grad();
                  for (size_t r = 0; r < ids_copy.size(); ++r) {
                    const size_t dst = static_cast<size_t>(ids_copy[r]) * d;
                    for (int c = 0; c < d; ++c) {
                      pt.grad()[dst + c] += dy[r * d + c];
                    }
                  }
                });
  }
  return out;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
  if (rows.empty()) {
    throw ShapeError("stack-rows: no inputs");
  }
  const int d = rows[0].dim(0);
  bool track = false;
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.dim(0) != d) {
      throw ShapeError("stack-rows: shape mismatch " +
                       shape_str(rows[0].shape()) + " vs " +
                       shape_str(r.shape()));
    }
    track = track || r.requires_grad();
  }
  track = track && grad_enabled();

  Tensor out({static_cast<int>(rows.size()), d}, 0.0, false);
  for (size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < d; ++c) {
      out.values()[r * d + c] = rows[r].values()[static_cast<size_t>(c)];
    }
  }
  if (track) {
    out.set_requires_grad(true);
    tape.record("stack-rows", std::vector<Tensor>(rows.begin(), rows.end()),
                out, [d](const TapeNode& node) {
                  const std::vector<double>& dy = node.output.grad();
                  for (size_t r = 0; r < node.inputs.size(); ++r) {
                    const Tensor& pr = node.inputs[r];
                    if (!pr.requires_grad()) continue;
                    for (int c = 0; c < d; ++c) {
                      pr.grad()[static_cast<size_t>(c)] += dy[r * d + c];
                    }
                  }
                });
  }
  return out;
}

Tensor row(Tape& tape, const Tensor& m, int i) {
  if (m.rank() != 2) {
    throw ShapeError("row: tensor of shape " + shape_str(m.shape()) +
                     " is not rank 2");
  }
  if (i < 0 || i >= m.dim(0)) {
    throw ShapeError("row: index " + std::to_string(i) + " out of range [0, " +
                     std::to_string(m.dim(0)) + ")");
  }
  const int d = m.dim(1);
  Tensor out({d}, 0.0, false);
  for (int c = 0; c < d; ++c) {
    out.values()[static_cast<size_t>(c)] =
        m.values()[static_cast<size_t>(i) * d + c];
  }
  if (want_track({&m})) {
    out.set_requires_grad(true);
    tape.record("row", {m}, out, [i, d](const TapeNode& node) {
      const Tensor& pm = node.inputs[0];
      if (!pm.requires_grad()) return;
      const std::vector<double>& dy = node.output.grad();
      for (int c = 0; c < d; ++c) {
        pm.grad()[static_cast<size_t>(i) * d + c] +=
            dy[static_cast<size_t>(c)];
      }
    });
  }
  return out;
}

Tensor element(Tape& tape, const Tensor& v, int i) {
  if (v.rank() != 1) {
    throw ShapeError("element: tensor of shape " + shape_str(v.shape()) +
                     " is not rank 1");
  }
  if (i < 0 || i >= v.dim(0)) {
    throw ShapeError("element: index " + std::to_string(i) +
                     " out of range [0, " + std::to_string(v.dim(0)) + ")");
  }
  Tensor out({1}, v.values()[static_cast<size_t>(i)], false);
  if (want_track({&v})) {
    out.set_requires_grad(true);
    tape.record("element", {v}, out, [i](const TapeNode& node) {
      const Tensor& pv = node.inputs[0];
      if (!pv.requires_grad()) return;
      pv.grad()[static_cast<size_t>(i)] += node.output.grad()[0];
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, int start, int len) {
  if (x.rank() < 1 || x.rank() > 2) {
    throw ShapeError("slice-cols: unsupported rank for shape " +
                     shape_str(x.shape()));
  }
  const int rows = x.rank() == 2 ? x.dim(0) : 1;
  const int width = x.rank() == 2 ? x.dim(1) : x.dim(0);
  if (start < 0 || len <= 0 || start + len > width) {
    throw ShapeError("slice-cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") invalid for width " +
                     std::to_string(width));
  }
  Shape out_shape = x.rank() == 2 ? Shape{rows, len} : Shape{len};
  Tensor out(out_shape, 0.0, false);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < len; ++c) {
      out.values()[static_cast<size_t>(r) * len + c] =
          x.values()[static_cast<size_t>(r) * width + start + c];
    }
  }
  if (want_track({&x})) {
    out.set_requires_grad(true);
    tape.record("slice-cols", {x}, out,
                [rows, width, start, len](const TapeNode& node) {
                  const Tensor& px = node.inputs[0];
                  if (!px.requires_grad()) return;
                  const std::vector<double>& dy = node.output.grad();
                  for (int r = 0; r < rows; ++r) {
                    for (int c = 0; c < len; ++c) {
                      px.grad()[static_cast<size_t>(r) * width + start + c] +=
                          dy[static_cast<size_t>(r) * len + c];
                    }
                  }
                });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias) {
  if (x.rank() != 1) {
    throw ShapeError("layer-norm: input of shape " + shape_str(x.shape()) +
                     " is not rank 1");
  }
  check_same_shape("layer-norm", x, gain);
  check_same_shape("layer-norm", x, bias);
  constexpr double kEps = 1e-5;
  const int d = x.dim(0);

  double mu = 0.0;
  for (int i = 0; i < d; ++i) mu += x.values()[static_cast<size_t>(i)];
  mu /= d;
  double var = 0.0;
  for (int i = 0; i < d; ++i) {
    const double c = x.values()[static_cast<size_t>(i)] - mu;
    var += c * c;
  }
  var /= d;
  const double inv = 1.0 / std::sqrt(var + kEps);

  Tensor out({d}, 0.0, false);
  std::vector<double> xhat(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) {
    xhat[static_cast<size_t>(i)] =
        (x.values()[static_cast<size_t>(i)] - mu) * inv;
    out.values()[static_cast<size_t>(i)] =
        gain.values()[static_cast<size_t>(i)] * xhat[static_cast<size_t>(i)] +
        bias.values()[static_cast<size_t>(i)];
  }

  if (want_track({&x, &gain, &bias})) {
    out.set_requires_grad(true);
    tape.record("layer-norm", {x, gain, bias}, out,
                [d, inv, xhat](const TapeNode& node) {
                  const Tensor& px = node.inputs[0];
                  const Tensor& pg = node.inputs[1];
                  const Tensor& pb = node.inputs[2];
                  const std::vector<double>& dy = node.output.grad();
                  if (pg.requires_grad()) {
                    for (int i = 0; i < d; ++i) {
                      pg.grad()[static_cast<size_t>(i)] +=
                          dy[static_cast<size_t>(i)] *
                          xhat[static_cast<size_t>(i)];
                    }
                  }
                  if (pb.requires_grad()) {
                    for (int i = 0; i < d; ++i) {
                      pb.grad()[static_cast<size_t>(i)] +=
                          dy[static_cast<size_t>(i)];
                    }
                  }
                  if (px.requires_grad()) {
                    // dxhat_i = dy_i * g_i; dx in terms of dxhat, its mean,
                    // and its xhat-weighted mean.
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    std::vector<double> dxhat(static_cast<size_t>(d));
                    for (int i = 0; i < d; ++i) {
                      dxhat[static_cast<size_t>(i)] =
                          dy[static_cast<size_t>(i)] *
                          pg.values()[static_cast<size_t>(i)];
                      mean_dxhat += dxhat[static_cast<size_t>(i)];
                      mean_dxhat_xhat += dxhat[static_cast<size_t>(i)] *
                                         xhat[static_cast<size_t>(i)];
                    }
                    mean_dxhat /= d;
                    mean_dxhat_xhat /= d;
                    for (int i = 0; i < d; ++i) {
                      px.grad()[static_cast<size_t>(i)] +=
                          inv * (dxhat[static_cast<size_t>(i)] - mean_dxhat -
                                 xhat[static_cast<size_t>(i)] *
                                     mean_dxhat_xhat);
                    }
                  }
                });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, int target) {
  if (logits.rank() != 1) {
    throw ShapeError("cross-entropy: logits of shape " +
                     shape_str(logits.shape()) + " are not rank 1");
  }
  const int c = logits.dim(0);
  if (target < 0 || target >= c) {
    throw ShapeError("cross-entropy: target " + std::to_string(target) +
                     " out of range [0, " + std::to_string(c) + ")");
  }
  double mx = logits.values()[0];
  for (int i = 1; i < c; ++i) {
    mx = std::max(mx, logits.values()[static_cast<size_t>(i)]);
  }
  std::vector<double> probs(static_cast<size_t>(c));
  double denom = 0.0;
  for (int i = 0; i < c; ++i) {
    probs[static_cast<size_t>(i)] =
        std::exp(logits.values()[static_cast<size_t>(i)] - mx);
    denom += probs[static_cast<size_t>(i)];
  }
  for (double& p : probs) p /= denom;

  const double lse = mx + std::log(denom);
  Tensor out({1}, lse - logits.values()[static_cast<size_t>(target)], false);

  if (want_track({&logits})) {
    out.set_requires_grad(true);
    tape.record("cross-entropy", {logits}, out,
                [probs, target](const TapeNode& node) {
                  const Tensor& pl = node.inputs[0];
                  if (!pl.requires_grad()) return;
                  const double g = node.output.grad()[0];
                  for (size_t i = 0; i < probs.size(); ++i) {
                    const double ind =
                        static_cast<int>(i) == target ? 1.0 : 0.0;
                    pl.grad()[i] += g * (probs[i] - ind);
                  }
                });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, bool training,
               Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw NumericsError("dropout: probability " + std::to_string(p) +
                        " outside [0, 1)");
  }
  if (!training || p == 0.0) {
    return x;
  }
  const double keep = 1.0 - p;
  std::vector<std::uint8_t> mask(static_cast<size_t>(x.numel()));
  Tensor out(x.shape(), 0.0, false);
  for (int i = 0; i < x.numel(); ++i) {
    const bool drop = rng.bernoulli(p);
    mask[static_cast<size_t>(i)] = drop ? 0 : 1;
    out.values()[static_cast<size_t>(i)] =
        drop ? 0.0 : x.values()[static_cast<size_t>(i)] / keep;
  }
  if (want_track({&x})) {
    out.set_requires_grad(true);
    tape.record("dropout", {x}, out, [mask, keep](const TapeNode& node) {
      const Tensor& px = node.inputs[0];
      if (!px.requires_grad()) return;
      const std::vector<double>& dy = node.output.grad();
      for (size_t i = 0; i < dy.size(); ++i) {
        if (mask[i]) px.grad()[i] += dy[i] / keep;
      }
    });
  }
  return out;
}

}  // namespace ops

PrimitiveKind primitive_kind_from_string(const std::string& name) {
  if (name == "matmul") return PrimitiveKind::kMatmul;
  if (name == "concat-last-axis") return PrimitiveKind::kConcatLastAxis;
  if (name == "tanh") return PrimitiveKind::kTanh;
  if (name == "softmax-over-axis") return PrimitiveKind::kSoftmaxOverAxis;
  if (name == "hadamard") return PrimitiveKind::kHadamard;
  if (name == "add") return PrimitiveKind::kAdd;
  if (name == "scale") return PrimitiveKind::kScale;
  if (name == "mean-over-axis") return PrimitiveKind::kMeanOverAxis;
  if (name == "embedding-lookup") return PrimitiveKind::kEmbeddingLookup;
  throw NumericsError("unknown primitive: " + name);
}

Tensor apply_primitive(Tape& tape, PrimitiveKind kind,
                       std::span<const Tensor> inputs, int axis) {
  auto need = [&](size_t n, const char* op) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(op) + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case PrimitiveKind::kMatmul:
      need(2, "matmul");
      return ops::matmul(tape, inputs[0], inputs[1]);
    case PrimitiveKind::kConcatLastAxis:
      return ops::concat(tape, inputs);
    case PrimitiveKind::kTanh:
      need(1, "tanh");
      return ops::tanh(tape, inputs[0]);
    case PrimitiveKind::kSoftmaxOverAxis:
      need(1, "softmax");
      return ops::softmax(tape, inputs[0], axis < 0 ? 0 : axis);
    case PrimitiveKind::kHadamard:
      need(2, "hadamard");
      return ops::hadamard(tape, inputs[0], inputs[1]);
    case PrimitiveKind::kAdd:
      need(2, "add");
      return ops::add(tape, inputs[0], inputs[1]);
    case PrimitiveKind::kScale:
      need(2, "scale");
      return ops::scale(tape, inputs[0], inputs[1].value());
    case PrimitiveKind::kMeanOverAxis:
      need(1, "mean");
      return ops::mean(tape, inputs[0], axis < 0 ? 0 : axis);
    case PrimitiveKind::kEmbeddingLookup: {
      need(2, "embedding-lookup");
      std::vector<int> ids;
      ids.reserve(static_cast<size_t>(inputs[1].numel()));
      for (double v : inputs[1].values()) {
        ids.push_back(static_cast<int>(std::llround(v)));
      }
      return ops::embedding_lookup(tape, inputs[0], ids);
    }
  }
  throw NumericsError("unknown primitive kind");
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  Tensor x, double eps) {
  if (eps <= 0.0) {
    throw NumericsError("grad_check: eps must be positive");
  }

  Tensor xa = Tensor::from_values(x.shape(), x.values(), true);
  Tape tape;
  Tensor raw = f(tape, xa);
  if (raw.numel() != 1) {
    throw NumericsError("grad_check: f must return a scalar");
  }
  // Wrapping through scale keeps the identity function checkable: the
  // tape then always owns the loss node.
  std::vector<double> analytic(xa.values().size(), 0.0);
  if (raw.requires_grad()) {
    Tensor loss = ops::scale(tape, raw, 1.0);
    tape.backward(loss);
    analytic = xa.grad();
  }

  auto value_at = [&](const std::vector<double>& vals) {
    NoGradGuard guard;
    Tape scratch;
    Tensor probe = Tensor::from_values(x.shape(), vals, false);
    return f(scratch, probe).value();
  };

  double worst = 0.0;
  std::vector<double> base = x.values();
  for (size_t i = 0; i < base.size(); ++i) {
    const double orig = base[i];
    base[i] = orig + eps;
    const double hi = value_at(base);
    base[i] = orig - eps;
    const double lo = value_at(base);
    base[i] = orig;
    const double numeric = (hi - lo) / (2.0 * eps);
    const double a = analytic[i];
    const double err =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace knowdial
