#ifndef STEERLAB_KERNELS_HPP_
#define STEERLAB_KERNELS_HPP_

#include <cstddef>

// Dense kernels behind every forward/backward pass in the repo. Each kernel
// has a serial reference (*_serial) and an OpenMP variant that parallelizes
// only across independent output rows, never across an accumulation axis, so
// serial and parallel results are bit-identical. test_kernels asserts exact
// equality; bench_kernels compares throughput.
namespace steerlab::kernels {

// Process-wide switch. When false every kernel runs the serial reference.
void set_parallel(bool on);
bool parallel_enabled();

// C(m x n) = A(m x k) * B(k x n); accumulate adds into C instead of overwriting.
void matmul_nn(double* C, const double* A, const double* B, int m, int k, int n,
               bool accumulate = false);
void matmul_nn_serial(double* C, const double* A, const double* B, int m, int k,
                      int n, bool accumulate = false);

// C(m x n) = A(m x k) * B(n x k)^T
void matmul_nt(double* C, const double* A, const double* B, int m, int k, int n,
               bool accumulate = false);
void matmul_nt_serial(double* C, const double* A, const double* B, int m, int k,
                      int n, bool accumulate = false);

// C(m x n) = A(k x m)^T * B(k x n)
void matmul_tn(double* C, const double* A, const double* B, int m, int k, int n,
               bool accumulate = false);
void matmul_tn_serial(double* C, const double* A, const double* B, int m, int k,
                      int n, bool accumulate = false);

// In-place stable softmax over each row.
void softmax_rows(double* X, int rows, int cols);
void softmax_rows_serial(double* X, int rows, int cols);

// In-place stable softmax over row prefixes: row i is normalized over
// columns [0, limit(i)] and zeroed beyond. Used for causal attention, where
// limit(i) = i.
void softmax_rows_causal(double* X, int rows, int cols);
void softmax_rows_causal_serial(double* X, int rows, int cols);

// y += alpha * x
void axpy(double* y, const double* x, double alpha, size_t n);
void axpy_serial(double* y, const double* x, double alpha, size_t n);

}  // namespace steerlab::kernels

#endif  // STEERLAB_KERNELS_HPP_
