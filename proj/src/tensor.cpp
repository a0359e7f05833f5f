#include "steerlab/tensor.hpp"

#include <cmath>

#include "steerlab/kernels.hpp"

namespace steerlab::autodiff {

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kLnEps = 1e-5;

inline double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid_stable(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace

int Tape::push(Mat v, std::vector<int> parents) {
    Node n;
    n.v = std::move(v);
    n.parents = std::move(parents);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Mat v) { return push(std::move(v), {}); }

int Tape::leaf_scalar(double v) {
    Mat m(1, 1);
    m.d[0] = v;
    return leaf(std::move(m));
}

int Tape::param(Param& p) {
    int id = push(p.value, {});
    nodes_[id].param = &p;
    return id;
}

int Tape::add(int a, int b) {
    const Mat& A = nodes_[a].v;
    const Mat& B = nodes_[b].v;
    if (!A.same_shape(B)) throw NumericError("add: shape mismatch");
    Mat out = A;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] += B.d[i];
    int id = push(std::move(out), {a, b});
    nodes_[id].back = [this, id, a, b] {
        const Mat& go = g(id);
        kernels::axpy(g(a).d.data(), go.d.data(), 1.0, go.size());
        kernels::axpy(g(b).d.data(), go.d.data(), 1.0, go.size());
    };
    return id;
}

int Tape::sub(int a, int b) {
    const Mat& A = nodes_[a].v;
    const Mat& B = nodes_[b].v;
    if (!A.same_shape(B)) throw NumericError("sub: shape mismatch");
    Mat out = A;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] -= B.d[i];
    int id = push(std::move(out), {a, b});
    nodes_[id].back = [this, id, a, b] {
        const Mat& go = g(id);
        kernels::axpy(g(a).d.data(), go.d.data(), 1.0, go.size());
        kernels::axpy(g(b).d.data(), go.d.data(), -1.0, go.size());
    };
    return id;
}

int Tape::mul(int a, int b) {
    const Mat& A = nodes_[a].v;
    const Mat& B = nodes_[b].v;
    if (!A.same_shape(B)) throw NumericError("mul: shape mismatch");
    Mat out = A;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] *= B.d[i];
    int id = push(std::move(out), {a, b});
    nodes_[id].back = [this, id, a, b] {
        const Mat& go = g(id);
        const Mat& A2 = nodes_[a].v;
        const Mat& B2 = nodes_[b].v;
        Mat& ga = g(a);
        Mat& gb = g(b);
        for (size_t i = 0; i < go.size(); ++i) {
            ga.d[i] += go.d[i] * B2.d[i];
            gb.d[i] += go.d[i] * A2.d[i];
        }
    };
    return id;
}

int Tape::scale(int a, double s) {
    Mat out = nodes_[a].v;
    for (double& v : out.d) v *= s;
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a, s] {
        const Mat& go = g(id);
        kernels::axpy(g(a).d.data(), go.d.data(), s, go.size());
    };
    return id;
}

int Tape::add_rowvec(int a, int rowvec) {
    const Mat& A = nodes_[a].v;
    const Mat& R = nodes_[rowvec].v;
    if (R.rows != 1 || R.cols != A.cols) throw NumericError("add_rowvec: shape mismatch");
    Mat out = A;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += R.d[j];
    int id = push(std::move(out), {a, rowvec});
    nodes_[id].back = [this, id, a, rowvec] {
        const Mat& go = g(id);
        kernels::axpy(g(a).d.data(), go.d.data(), 1.0, go.size());
        Mat& gr = g(rowvec);
        for (int i = 0; i < go.rows; ++i)
            for (int j = 0; j < go.cols; ++j) gr.d[j] += go.at(i, j);
    };
    return id;
}

int Tape::square(int a) {
    Mat out = nodes_[a].v;
    for (double& v : out.d) v *= v;
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        const Mat& go = g(id);
        const Mat& A = nodes_[a].v;
        Mat& ga = g(a);
        for (size_t i = 0; i < go.size(); ++i) ga.d[i] += 2.0 * A.d[i] * go.d[i];
    };
    return id;
}

int Tape::exp_op(int a) {
    Mat out = nodes_[a].v;
    for (double& v : out.d) v = std::exp(v);
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        const Mat& go = g(id);
        const Mat& O = nodes_[id].v;
        Mat& ga = g(a);
        for (size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] * O.d[i];
    };
    return id;
}

int Tape::tanh_op(int a) {
    Mat out = nodes_[a].v;
    for (double& v : out.d) v = std::tanh(v);
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        const Mat& go = g(id);
        const Mat& O = nodes_[id].v;
        Mat& ga = g(a);
        for (size_t i = 0; i < go.size(); ++i)
            ga.d[i] += go.d[i] * (1.0 - O.d[i] * O.d[i]);
    };
    return id;
}

int Tape::sigmoid(int a) {
    Mat out = nodes_[a].v;
    for (double& v : out.d) v = sigmoid_stable(v);
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        const Mat& go = g(id);
        const Mat& O = nodes_[id].v;
        Mat& ga = g(a);
        for (size_t i = 0; i < go.size(); ++i)
            ga.d[i] += go.d[i] * O.d[i] * (1.0 - O.d[i]);
    };
    return id;
}

int Tape::gelu(int a) {
    Mat out = nodes_[a].v;
    for (double& v : out.d) {
        double u = kGeluC * (v + 0.044715 * v * v * v);
        v = 0.5 * v * (1.0 + std::tanh(u));
    }
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        const Mat& go = g(id);
        const Mat& A = nodes_[a].v;
        Mat& ga = g(a);
        for (size_t i = 0; i < go.size(); ++i) {
            double x = A.d[i];
            double u = kGeluC * (x + 0.044715 * x * x * x);
            double th = std::tanh(u);
            double sech2 = 1.0 - th * th;
            double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
            ga.d[i] += go.d[i] * (0.5 * (1.0 + th) + 0.5 * x * sech2 * du);
        }
    };
    return id;
}

int Tape::clip(int a, double lo, double hi) {
    Mat out = nodes_[a].v;
    for (double& v : out.d) v = v < lo ? lo : (v > hi ? hi : v);
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a, lo, hi] {
        const Mat& go = g(id);
        const Mat& A = nodes_[a].v;
        Mat& ga = g(a);
        for (size_t i = 0; i < go.size(); ++i)
            if (A.d[i] >= lo && A.d[i] <= hi) ga.d[i] += go.d[i];
    };
    return id;
}

int Tape::min_elem(int a, int b) {
    const Mat& A = nodes_[a].v;
    const Mat& B = nodes_[b].v;
    if (!A.same_shape(B)) throw NumericError("min_elem: shape mismatch");
    Mat out = A;
    for (size_t i = 0; i < out.size(); ++i)
        if (B.d[i] < out.d[i]) out.d[i] = B.d[i];
    int id = push(std::move(out), {a, b});
    nodes_[id].back = [this, id, a, b] {
        const Mat& go = g(id);
        const Mat& A2 = nodes_[a].v;
        const Mat& B2 = nodes_[b].v;
        Mat& ga = g(a);
        Mat& gb = g(b);
        for (size_t i = 0; i < go.size(); ++i) {
            if (A2.d[i] <= B2.d[i])
                ga.d[i] += go.d[i];
            else
                gb.d[i] += go.d[i];
        }
    };
    return id;
}

int Tape::matmul(int a, int b) {
    const Mat& A = nodes_[a].v;
    const Mat& B = nodes_[b].v;
    if (A.cols != B.rows) throw NumericError("matmul: inner dim mismatch");
    Mat out(A.rows, B.cols);
    kernels::matmul_nn(out.d.data(), A.d.data(), B.d.data(), A.rows, A.cols, B.cols);
    int id = push(std::move(out), {a, b});
    nodes_[id].back = [this, id, a, b] {
        const Mat& go = g(id);
        const Mat& A2 = nodes_[a].v;
        const Mat& B2 = nodes_[b].v;
        // dA += G B^T ; dB += A^T G
        kernels::matmul_nt(g(a).d.data(), go.d.data(), B2.d.data(), go.rows, go.cols,
                           B2.rows, true);
        kernels::matmul_tn(g(b).d.data(), A2.d.data(), go.d.data(), A2.cols, A2.rows,
                           go.cols, true);
    };
    return id;
}

int Tape::matmul_nt(int a, int b) {
    const Mat& A = nodes_[a].v;
    const Mat& B = nodes_[b].v;
    if (A.cols != B.cols) throw NumericError("matmul_nt: inner dim mismatch");
    Mat out(A.rows, B.rows);
    kernels::matmul_nt(out.d.data(), A.d.data(), B.d.data(), A.rows, A.cols, B.rows);
    int id = push(std::move(out), {a, b});
    nodes_[id].back = [this, id, a, b] {
        const Mat& go = g(id);
        const Mat& A2 = nodes_[a].v;
        const Mat& B2 = nodes_[b].v;
        // out = A B^T : dA += G B ; dB += G^T A
        kernels::matmul_nn(g(a).d.data(), go.d.data(), B2.d.data(), go.rows, go.cols,
                           B2.cols, true);
        kernels::matmul_tn(g(b).d.data(), go.d.data(), A2.d.data(), go.cols, go.rows,
                           A2.cols, true);
    };
    return id;
}

int Tape::rows(int table, std::vector<int> ids) {
    const Mat& T = nodes_[table].v;
    Mat out(static_cast<int>(ids.size()), T.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= T.rows) throw NumericError("rows: index out of range");
        std::copy(T.row(ids[i]), T.row(ids[i]) + T.cols, out.row(static_cast<int>(i)));
    }
    int id = push(std::move(out), {table});
    nodes_[id].back = [this, id, table, ids = std::move(ids)] {
        const Mat& go = g(id);
        Mat& gt = g(table);
        for (size_t i = 0; i < ids.size(); ++i)
            kernels::axpy_serial(gt.row(ids[i]), go.row(static_cast<int>(i)), 1.0,
                                 static_cast<size_t>(go.cols));
    };
    return id;
}

int Tape::slice_rows(int a, int r0, int r1) {
    const Mat& A = nodes_[a].v;
    if (r0 < 0 || r1 > A.rows || r0 >= r1) throw NumericError("slice_rows: bad range");
    Mat out(r1 - r0, A.cols);
    std::copy(A.row(r0), A.row(r0) + out.size(), out.d.data());
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a, r0] {
        const Mat& go = g(id);
        Mat& ga = g(a);
        kernels::axpy(ga.row(r0), go.d.data(), 1.0, go.size());
    };
    return id;
}

int Tape::slice_cols(int a, int c0, int c1) {
    const Mat& A = nodes_[a].v;
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw NumericError("slice_cols: bad range");
    Mat out(A.rows, c1 - c0);
    for (int i = 0; i < A.rows; ++i)
        std::copy(A.row(i) + c0, A.row(i) + c1, out.row(i));
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a, c0] {
        const Mat& go = g(id);
        Mat& ga = g(a);
        for (int i = 0; i < go.rows; ++i)
            kernels::axpy_serial(ga.row(i) + c0, go.row(i), 1.0,
                                 static_cast<size_t>(go.cols));
    };
    return id;
}

int Tape::concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw NumericError("concat_cols: empty");
    int rows = nodes_[parts[0]].v.rows;
    int cols = 0;
    for (int p : parts) {
        if (nodes_[p].v.rows != rows) throw NumericError("concat_cols: row mismatch");
        cols += nodes_[p].v.cols;
    }
    Mat out(rows, cols);
    int off = 0;
    for (int p : parts) {
        const Mat& P = nodes_[p].v;
        for (int i = 0; i < rows; ++i)
            std::copy(P.row(i), P.row(i) + P.cols, out.row(i) + off);
        off += P.cols;
    }
    int id = push(std::move(out), parts);
    nodes_[id].back = [this, id, parts] {
        const Mat& go = g(id);
        int off2 = 0;
        for (int p : parts) {
            Mat& gp = g(p);
            for (int i = 0; i < go.rows; ++i)
                kernels::axpy_serial(gp.row(i), go.row(i) + off2, 1.0,
                                     static_cast<size_t>(gp.cols));
            off2 += gp.cols;
        }
    };
    return id;
}

int Tape::concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw NumericError("concat_rows: empty");
    int cols = nodes_[parts[0]].v.cols;
    int rows = 0;
    for (int p : parts) {
        if (nodes_[p].v.cols != cols) throw NumericError("concat_rows: col mismatch");
        rows += nodes_[p].v.rows;
    }
    Mat out(rows, cols);
    int off = 0;
    for (int p : parts) {
        const Mat& P = nodes_[p].v;
        std::copy(P.d.begin(), P.d.end(), out.row(off));
        off += P.rows;
    }
    int id = push(std::move(out), parts);
    nodes_[id].back = [this, id, parts] {
        const Mat& go = g(id);
        int off2 = 0;
        for (int p : parts) {
            Mat& gp = g(p);
            kernels::axpy(gp.d.data(), go.row(off2), 1.0, gp.size());
            off2 += gp.rows;
        }
    };
    return id;
}

int Tape::layer_norm(int x, int gain, int bias) {
    const Mat& X = nodes_[x].v;
    const Mat& G = nodes_[gain].v;
    const Mat& B = nodes_[bias].v;
    if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols)
        throw NumericError("layer_norm: shape mismatch");
    int n = X.cols;
    Mat out(X.rows, n);
    Mat xhat(X.rows, n);
    std::vector<double> inv_std(X.rows);
    for (int i = 0; i < X.rows; ++i) {
        const double* xi = X.row(i);
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += xi[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= n;
        double is = 1.0 / std::sqrt(var + kLnEps);
        inv_std[i] = is;
        for (int j = 0; j < n; ++j) {
            double xh = (xi[j] - mu) * is;
            xhat.at(i, j) = xh;
            out.at(i, j) = G.d[j] * xh + B.d[j];
        }
    }
    int id = push(std::move(out), {x, gain, bias});
    nodes_[id].back = [this, id, x, gain, bias, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)] {
        const Mat& go = g(id);
        const Mat& G2 = nodes_[gain].v;
        int n2 = go.cols;
        Mat& gx = g(x);
        Mat& gg = g(gain);
        Mat& gb = g(bias);
        for (int i = 0; i < go.rows; ++i) {
            const double* gi = go.row(i);
            const double* xh = xhat.row(i);
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int j = 0; j < n2; ++j) {
                double dxh = gi[j] * G2.d[j];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[j];
                gg.d[j] += gi[j] * xh[j];
                gb.d[j] += gi[j];
            }
            double m1 = sum_dxh / n2;
            double m2 = sum_dxh_xh / n2;
            double* gxi = gx.row(i);
            for (int j = 0; j < n2; ++j) {
                double dxh = gi[j] * G2.d[j];
                gxi[j] += inv_std[i] * (dxh - m1 - xh[j] * m2);
            }
        }
    };
    return id;
}

int Tape::causal_softmax(int a) {
    Mat out = nodes_[a].v;
    kernels::softmax_rows_causal(out.d.data(), out.rows, out.cols);
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        const Mat& go = g(id);
        const Mat& P = nodes_[id].v;
        Mat& ga = g(a);
        for (int i = 0; i < P.rows; ++i) {
            int hi = i + 1 < P.cols ? i + 1 : P.cols;
            const double* pi = P.row(i);
            const double* gi = go.row(i);
            double dot = 0.0;
            for (int j = 0; j < hi; ++j) dot += gi[j] * pi[j];
            double* gai = ga.row(i);
            for (int j = 0; j < hi; ++j) gai[j] += pi[j] * (gi[j] - dot);
        }
    };
    return id;
}

int Tape::mean_rows(int a) {
    const Mat& A = nodes_[a].v;
    if (A.rows == 0) throw NumericError("mean_rows: empty");
    Mat out(1, A.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) out.d[j] += A.at(i, j);
    for (double& v : out.d) v /= A.rows;
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        const Mat& go = g(id);
        Mat& ga = g(a);
        double inv = 1.0 / ga.rows;
        for (int i = 0; i < ga.rows; ++i)
            for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += go.d[j] * inv;
    };
    return id;
}

int Tape::sum_all(int a) {
    const Mat& A = nodes_[a].v;
    double s = 0.0;
    for (double v : A.d) s += v;
    Mat out(1, 1);
    out.d[0] = s;
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        double go = g(id).d[0];
        Mat& ga = g(a);
        for (double& v : ga.d) v += go;
    };
    return id;
}

int Tape::mean_all(int a) {
    const Mat& A = nodes_[a].v;
    if (A.size() == 0) throw NumericError("mean_all: empty");
    double s = 0.0;
    for (double v : A.d) s += v;
    Mat out(1, 1);
    out.d[0] = s / static_cast<double>(A.size());
    int id = push(std::move(out), {a});
    nodes_[id].back = [this, id, a] {
        Mat& ga = g(a);
        double go = g(id).d[0] / static_cast<double>(ga.size());
        for (double& v : ga.d) v += go;
    };
    return id;
}

int Tape::mean_of(const std::vector<int>& scalars) {
    if (scalars.empty()) throw NumericError("mean_of: empty");
    double s = 0.0;
    for (int n : scalars) {
        if (nodes_[n].v.size() != 1) throw NumericError("mean_of: non-scalar input");
        s += nodes_[n].v.d[0];
    }
    Mat out(1, 1);
    out.d[0] = s / scalars.size();
    int id = push(std::move(out), scalars);
    nodes_[id].back = [this, id, scalars] {
        double go = g(id).d[0] / scalars.size();
        for (int n : scalars) g(n).d[0] += go;
    };
    return id;
}

// mean negative log-likelihood over masked rows; softmax cached for backward
int Tape::cross_entropy(int logits, std::vector<int> targets, std::vector<uint8_t> mask) {
    const Mat& L = nodes_[logits].v;
    if (static_cast<int>(targets.size()) != L.rows ||
        static_cast<int>(mask.size()) != L.rows)
        throw NumericError("cross_entropy: length mismatch");
    int n_masked = 0;
    for (uint8_t m : mask) n_masked += m ? 1 : 0;
    if (n_masked == 0) throw DataError("cross_entropy: all positions masked out");

    Mat probs = L;
    kernels::softmax_rows(probs.d.data(), probs.rows, probs.cols);
    double loss = 0.0;
    for (int i = 0; i < L.rows; ++i) {
        if (!mask[i]) continue;
        int t = targets[i];
        if (t < 0 || t >= L.cols) throw NumericError("cross_entropy: target out of range");
        // recompute log prob stably from logits
        const double* li = L.row(i);
        double mx = li[0];
        for (int j = 1; j < L.cols; ++j)
            if (li[j] > mx) mx = li[j];
        double z = 0.0;
        for (int j = 0; j < L.cols; ++j) z += std::exp(li[j] - mx);
        loss += std::log(z) + mx - li[t];
    }
    loss /= n_masked;
    Mat out(1, 1);
    out.d[0] = loss;
    int id = push(std::move(out), {logits});
    nodes_[id].back = [this, id, logits, targets = std::move(targets),
                       mask = std::move(mask), probs = std::move(probs), n_masked] {
        double go = g(id).d[0] / n_masked;
        Mat& gl = g(logits);
        for (int i = 0; i < gl.rows; ++i) {
            if (!mask[i]) continue;
            const double* pi = probs.row(i);
            double* gi = gl.row(i);
            for (int j = 0; j < gl.cols; ++j) gi[j] += go * pi[j];
            gi[targets[i]] -= go;
        }
    };
    return id;
}

int Tape::logprob_rows(int logits, std::vector<int> ids) {
    const Mat& L = nodes_[logits].v;
    if (static_cast<int>(ids.size()) != L.rows)
        throw NumericError("logprob_rows: length mismatch");
    Mat probs = L;
    kernels::softmax_rows(probs.d.data(), probs.rows, probs.cols);
    Mat out(L.rows, 1);
    for (int i = 0; i < L.rows; ++i) {
        int t = ids[i];
        if (t < 0 || t >= L.cols) throw NumericError("logprob_rows: id out of range");
        const double* li = L.row(i);
        double mx = li[0];
        for (int j = 1; j < L.cols; ++j)
            if (li[j] > mx) mx = li[j];
        double z = 0.0;
        for (int j = 0; j < L.cols; ++j) z += std::exp(li[j] - mx);
        out.d[i] = li[t] - mx - std::log(z);
    }
    int id = push(std::move(out), {logits});
    nodes_[id].back = [this, id, logits, ids = std::move(ids), probs = std::move(probs)] {
        const Mat& go = g(id);
        Mat& gl = g(logits);
        for (int i = 0; i < gl.rows; ++i) {
            double gi = go.d[i];
            if (gi == 0.0) continue;
            const double* pi = probs.row(i);
            double* gli = gl.row(i);
            for (int j = 0; j < gl.cols; ++j) gli[j] -= gi * pi[j];
            gli[ids[i]] += gi;
        }
    };
    return id;
}

int Tape::bce_with_logits(int z, std::vector<double> targets) {
    const Mat& Z = nodes_[z].v;
    if (Z.cols != 1 || static_cast<int>(targets.size()) != Z.rows)
        throw NumericError("bce_with_logits: shape mismatch");
    double loss = 0.0;
    for (int i = 0; i < Z.rows; ++i) {
        double y = targets[i];
        if (y < 0.0 || y > 1.0) throw DataError("bce_with_logits: target outside [0,1]");
        loss += (1.0 - y) * Z.d[i] + softplus(-Z.d[i]);
    }
    loss /= Z.rows;
    Mat out(1, 1);
    out.d[0] = loss;
    int id = push(std::move(out), {z});
    nodes_[id].back = [this, id, z, targets = std::move(targets)] {
        double go = g(id).d[0] / nodes_[z].v.rows;
        const Mat& Z2 = nodes_[z].v;
        Mat& gz = g(z);
        for (int i = 0; i < Z2.rows; ++i)
            gz.d[i] += go * (sigmoid_stable(Z2.d[i]) - targets[i]);
    };
    return id;
}

void Tape::backward(int node) {
    // structural reachability from the loss via parent edges
    std::vector<uint8_t> reach(nodes_.size(), 0);
    std::vector<int> stack{node};
    reach[node] = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int p : nodes_[u].parents)
            if (!reach[p]) {
                reach[p] = 1;
                stack.push_back(p);
            }
    }
    touched_params_ = false;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (!reach[i]) continue;
        Node& n = nodes_[i];
        if (n.g.size() == 0)
            n.g = Mat(n.v.rows, n.v.cols);
        else
            n.g.zero();
        if (n.param) touched_params_ = true;
    }
    Mat& gl = nodes_[node].g;
    if (gl.size() != 1) throw NumericError("backward: loss must be scalar");
    gl.d[0] = 1.0;
    for (int i = node; i >= 0; --i) {
        if (!reach[i]) continue;
        if (nodes_[i].back) nodes_[i].back();
    }
    // fold tape grads into the external params
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (!reach[i] || !nodes_[i].param) continue;
        kernels::axpy(nodes_[i].param->grad.d.data(), nodes_[i].g.d.data(), 1.0,
                      nodes_[i].g.size());
    }
}

}  // namespace steerlab::autodiff
