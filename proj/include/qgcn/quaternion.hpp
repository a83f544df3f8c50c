#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "qgcn/matrix.hpp"

namespace qgcn {

// Hyper-complex algebra: q = r + i*I + j*J + k*K with I^2 = J^2 = K^2 = IJK = -1.
// Vectors and matrices keep their four component blocks in separate contiguous
// buffers so every block product stays a plain real kernel.

struct Quaternion {
  double r = 0.0;
  double i = 0.0;
  double j = 0.0;
  double k = 0.0;
};

struct QuaternionVector {
  std::vector<double> r;
  std::vector<double> i;
  std::vector<double> j;
  std::vector<double> k;

  explicit QuaternionVector(int d = 0) : r(d, 0.0), i(d, 0.0), j(d, 0.0), k(d, 0.0) {}

  int dim() const { return int(r.size()); }
  // real-equivalent dimensionality
  int real_dim() const { return 4 * dim(); }

  bool consistent() const {
    return r.size() == i.size() && r.size() == j.size() && r.size() == k.size();
  }
};

// d x d blocks; the realized real form is 4d x 4d but carries only 4d^2 free
// parameters because each block appears four times in the sign pattern.
struct QuaternionMatrix {
  RealMatrix r;
  RealMatrix i;
  RealMatrix j;
  RealMatrix k;

  explicit QuaternionMatrix(int d = 0) : r(d, d), i(d, d), j(d, d), k(d, d) {}

  int dim() const { return r.rows(); }
  std::size_t param_count() const { return 4 * std::size_t(dim()) * dim(); }
};

inline QuaternionMatrix identity_quaternion_matrix(int d) {
  QuaternionMatrix w(d);
  for (int t = 0; t < d; ++t) w.r(t, t) = 1.0;
  return w;
}

inline double norm(const Quaternion& q) {
  return std::sqrt(q.r * q.r + q.i * q.i + q.j * q.j + q.k * q.k);
}

inline Quaternion q_add(const Quaternion& a, const Quaternion& b) {
  return {a.r + b.r, a.i + b.i, a.j + b.j, a.k + b.k};
}

inline QuaternionVector q_add(const QuaternionVector& a, const QuaternionVector& b) {
  if (!a.consistent() || !b.consistent() || a.dim() != b.dim())
    throw std::invalid_argument("q_add: quaternion vector dimensions differ");
  QuaternionVector out(a.dim());
  for (int t = 0; t < a.dim(); ++t) {
    out.r[t] = a.r[t] + b.r[t];
    out.i[t] = a.i[t] + b.i[t];
    out.j[t] = a.j[t] + b.j[t];
    out.k[t] = a.k[t] + b.k[t];
  }
  return out;
}

// Inner product: sum over the four blocks of the real dot products. Equals the
// dot product of the two concatenated real vectors.
inline double q_inner(const QuaternionVector& a, const QuaternionVector& b) {
  if (!a.consistent() || !b.consistent() || a.dim() != b.dim())
    throw std::invalid_argument("q_inner: quaternion vector dimensions differ");
  double s = 0.0;
  for (int t = 0; t < a.dim(); ++t)
    s += a.r[t] * b.r[t] + a.i[t] * b.i[t] + a.j[t] * b.j[t] + a.k[t] * b.k[t];
  return s;
}

// Hamilton product, non-commutative.
inline Quaternion hamilton(const Quaternion& q, const Quaternion& p) {
  return {
      q.r * p.r - q.i * p.i - q.j * p.j - q.k * p.k,
      q.i * p.r + q.r * p.i - q.k * p.j + q.j * p.k,
      q.j * p.r + q.k * p.i + q.r * p.j - q.i * p.k,
      q.k * p.r - q.j * p.i + q.i * p.j + q.r * p.k,
  };
}

// Low-level kernel shared by hamilton_matvec and the model's row transform.
// Applies the block pattern
//   out_r = Wr vr - Wi vi - Wj vj - Wk vk
//   out_i = Wi vr + Wr vi - Wk vj + Wj vk
//   out_j = Wj vr + Wk vi + Wr vj - Wi vk
//   out_k = Wk vr - Wj vi + Wi vj + Wr vk
// where the in/out pointers address length-d component blocks.
inline void hamilton_block_apply(const QuaternionMatrix& w,
                                 const double* vr, const double* vi,
                                 const double* vj, const double* vk,
                                 double* or_, double* oi, double* oj, double* ok) {
  const int d = w.dim();
  for (int p = 0; p < d; ++p) {
    const double* wr = w.r.row(p);
    const double* wi = w.i.row(p);
    const double* wj = w.j.row(p);
    const double* wk = w.k.row(p);
    double sr = 0.0, si = 0.0, sj = 0.0, sk = 0.0;
    for (int q = 0; q < d; ++q) {
      const double ar = vr[q], ai = vi[q], aj = vj[q], ak = vk[q];
      sr += wr[q] * ar - wi[q] * ai - wj[q] * aj - wk[q] * ak;
      si += wi[q] * ar + wr[q] * ai - wk[q] * aj + wj[q] * ak;
      sj += wj[q] * ar + wk[q] * ai + wr[q] * aj - wi[q] * ak;
      sk += wk[q] * ar - wj[q] * ai + wi[q] * aj + wr[q] * ak;
    }
    or_[p] = sr;
    oi[p] = si;
    oj[p] = sj;
    ok[p] = sk;
  }
}

// Adjoint of hamilton_block_apply: applies the transpose of the realized
// block matrix to an upstream gradient. Column p of block (row a, col b)
// becomes row p, so each W block enters transposed with the mirrored sign:
//   g_vr =  Wr^T gr + Wi^T gi + Wj^T gj + Wk^T gk
//   g_vi = -Wi^T gr + Wr^T gi + Wk^T gj - Wj^T gk
//   g_vj = -Wj^T gr - Wk^T gi + Wr^T gj + Wi^T gk
//   g_vk = -Wk^T gr + Wj^T gi - Wi^T gj + Wr^T gk
inline void hamilton_block_apply_adjoint(const QuaternionMatrix& w,
                                         const double* gr, const double* gi,
                                         const double* gj, const double* gk,
                                         double* ovr, double* ovi, double* ovj,
                                         double* ovk) {
  const int d = w.dim();
  for (int q = 0; q < d; ++q) {
    ovr[q] = 0.0;
    ovi[q] = 0.0;
    ovj[q] = 0.0;
    ovk[q] = 0.0;
  }
  for (int p = 0; p < d; ++p) {
    const double* wr = w.r.row(p);
    const double* wi = w.i.row(p);
    const double* wj = w.j.row(p);
    const double* wk = w.k.row(p);
    const double ur = gr[p], ui = gi[p], uj = gj[p], uk = gk[p];
    for (int q = 0; q < d; ++q) {
      ovr[q] += wr[q] * ur + wi[q] * ui + wj[q] * uj + wk[q] * uk;
      ovi[q] += -wi[q] * ur + wr[q] * ui + wk[q] * uj - wj[q] * uk;
      ovj[q] += -wj[q] * ur - wk[q] * ui + wr[q] * uj + wi[q] * uk;
      ovk[q] += -wk[q] * ur + wj[q] * ui - wi[q] * uj + wr[q] * uk;
    }
  }
}

// Accumulates the gradient of the shared blocks from one (upstream grad,
// input) row pair; each block collects the four outer products dictated by
// where it appears in the sign pattern.
inline void hamilton_block_grad_accumulate(QuaternionMatrix& gw,
                                           const double* gr, const double* gi,
                                           const double* gj, const double* gk,
                                           const double* vr, const double* vi,
                                           const double* vj, const double* vk) {
  const int d = gw.dim();
  for (int p = 0; p < d; ++p) {
    double* wr = gw.r.row(p);
    double* wi = gw.i.row(p);
    double* wj = gw.j.row(p);
    double* wk = gw.k.row(p);
    const double ur = gr[p], ui = gi[p], uj = gj[p], uk = gk[p];
    for (int q = 0; q < d; ++q) {
      const double ar = vr[q], ai = vi[q], aj = vj[q], ak = vk[q];
      wr[q] += ur * ar + ui * ai + uj * aj + uk * ak;
      wi[q] += -ur * ai + ui * ar - uj * ak + uk * aj;
      wj[q] += -ur * aj + ui * ak + uj * ar - uk * ai;
      wk[q] += -ur * ak - ui * aj + uj * ai + uk * ar;
    }
  }
}

inline QuaternionVector hamilton_matvec(const QuaternionMatrix& w,
                                        const QuaternionVector& v) {
  if (!v.consistent() || w.dim() != v.dim())
    throw std::invalid_argument("hamilton_matvec: block shapes do not match");
  QuaternionVector out(v.dim());
  hamilton_block_apply(w, v.r.data(), v.i.data(), v.j.data(), v.k.data(),
                       out.r.data(), out.i.data(), out.j.data(), out.k.data());
  return out;
}

// Dense 4d x 4d real form of the quaternion matrix. Row/column blocks are
// ordered r, i, j, k; multiplying the concatenated vector reproduces
// hamilton_matvec. Exists for testing; the hot path never materializes it.
inline RealMatrix realize_block_matrix(const QuaternionMatrix& w) {
  const int d = w.dim();
  RealMatrix m(4 * d, 4 * d);
  // sign[a][b] and src[a][b] describe block (row a, col b) of the pattern
  static const int sign[4][4] = {
      {+1, -1, -1, -1}, {+1, +1, -1, +1}, {+1, +1, +1, -1}, {+1, -1, +1, +1}};
  const RealMatrix* blocks[4] = {&w.r, &w.i, &w.j, &w.k};
  static const int src[4][4] = {
      {0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}};
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const RealMatrix& blk = *blocks[src[a][b]];
      for (int p = 0; p < d; ++p)
        for (int q = 0; q < d; ++q)
          m(a * d + p, b * d + q) = sign[a][b] * blk(p, q);
    }
  return m;
}

}  // namespace qgcn
