#include "steerlab/kernels.hpp"

#include <atomic>
#include <cmath>

namespace steerlab::kernels {

namespace {
std::atomic<bool> g_parallel{true};

// OpenMP pays off only when a kernel has enough work per fork.
constexpr long kMinFlops = 1 << 15;
}  // namespace

void set_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }

void matmul_nn_serial(double* C, const double* A, const double* B, int m, int k,
                      int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* ci = C + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = A + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            double a = ai[p];
            const double* bp = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_nn(double* C, const double* A, const double* B, int m, int k, int n,
               bool accumulate) {
    bool par = g_parallel.load() && 1L * m * k * n >= kMinFlops && m > 1;
#pragma omp parallel for if (par) schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = C + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = A + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            double a = ai[p];
            const double* bp = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_nt_serial(double* C, const double* A, const double* B, int m, int k,
                      int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* ai = A + static_cast<size_t>(i) * k;
        double* ci = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = B + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

void matmul_nt(double* C, const double* A, const double* B, int m, int k, int n,
               bool accumulate) {
    bool par = g_parallel.load() && 1L * m * k * n >= kMinFlops && m > 1;
#pragma omp parallel for if (par) schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = A + static_cast<size_t>(i) * k;
        double* ci = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = B + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

void matmul_tn_serial(double* C, const double* A, const double* B, int m, int k,
                      int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* ci = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += A[static_cast<size_t>(p) * m + i] * B[static_cast<size_t>(p) * n + j];
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

void matmul_tn(double* C, const double* A, const double* B, int m, int k, int n,
               bool accumulate) {
    bool par = g_parallel.load() && 1L * m * k * n >= kMinFlops && m > 1;
#pragma omp parallel for if (par) schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += A[static_cast<size_t>(p) * m + i] * B[static_cast<size_t>(p) * n + j];
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

namespace {
inline void softmax_row(double* x, int lo, int hi, int cols) {
    double mx = x[lo];
    for (int j = lo + 1; j < hi; ++j)
        if (x[j] > mx) mx = x[j];
    double z = 0.0;
    for (int j = lo; j < hi; ++j) {
        x[j] = std::exp(x[j] - mx);
        z += x[j];
    }
    double inv = 1.0 / z;
    for (int j = lo; j < hi; ++j) x[j] *= inv;
    for (int j = hi; j < cols; ++j) x[j] = 0.0;
}
}  // namespace

void softmax_rows_serial(double* X, int rows, int cols) {
    for (int i = 0; i < rows; ++i)
        softmax_row(X + static_cast<size_t>(i) * cols, 0, cols, cols);
}

void softmax_rows(double* X, int rows, int cols) {
    bool par = g_parallel.load() && 1L * rows * cols >= kMinFlops && rows > 1;
#pragma omp parallel for if (par) schedule(static)
    for (int i = 0; i < rows; ++i)
        softmax_row(X + static_cast<size_t>(i) * cols, 0, cols, cols);
}

void softmax_rows_causal_serial(double* X, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        int hi = i + 1 < cols ? i + 1 : cols;
        softmax_row(X + static_cast<size_t>(i) * cols, 0, hi, cols);
    }
}

void softmax_rows_causal(double* X, int rows, int cols) {
    bool par = g_parallel.load() && 1L * rows * cols >= kMinFlops && rows > 1;
#pragma omp parallel for if (par) schedule(static)
    for (int i = 0; i < rows; ++i) {
        int hi = i + 1 < cols ? i + 1 : cols;
        softmax_row(X + static_cast<size_t>(i) * cols, 0, hi, cols);
    }
}

void axpy_serial(double* y, const double* x, double alpha, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(double* y, const double* x, double alpha, size_t n) {
    bool par = g_parallel.load() && n >= static_cast<size_t>(kMinFlops);
#pragma omp parallel for if (par) schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) y[i] += alpha * x[i];
}

}  // namespace steerlab::kernels
