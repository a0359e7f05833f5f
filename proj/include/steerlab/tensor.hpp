#ifndef STEERLAB_TENSOR_HPP_
#define STEERLAB_TENSOR_HPP_

#include <functional>
#include <string>
#include <vector>

#include "steerlab/common.hpp"

namespace steerlab::autodiff {

// A named trainable tensor. Lives outside any tape; tapes accumulate into
// grad across backward calls until zero_grad().
struct Param {
    std::string name;
    Mat value;
    Mat grad;

    Param() = default;
    Param(std::string n, int rows, int cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
    Param(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
        grad = Mat(value.rows, value.cols);
    }
    void zero_grad() { grad.zero(); }
};

// Reverse-mode tape over dense matrices. Nodes are created in topological
// order, so backward is a single reverse sweep over the node list. Ops
// dispatch hot loops through steerlab::kernels, which keeps the whole graph
// bit-deterministic regardless of thread count.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // leaves
    int leaf(Mat v);
    int leaf_scalar(double v);
    int param(Param& p);

    // elementwise / affine
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int a, double s);
    int add_rowvec(int a, int rowvec);  // broadcast 1 x n over rows of a
    int square(int a);
    int exp_op(int a);
    int tanh_op(int a);
    int sigmoid(int a);
    int gelu(int a);
    int clip(int a, double lo, double hi);  // zero grad where clamped
    int min_elem(int a, int b);

    // linear algebra
    int matmul(int a, int b);     // (m x k)(k x n)
    int matmul_nt(int a, int b);  // (m x k)(n x k)^T

    // structure
    int rows(int table, std::vector<int> ids);  // gather rows
    int slice_rows(int a, int r0, int r1);
    int slice_cols(int a, int c0, int c1);
    int concat_cols(const std::vector<int>& parts);
    int concat_rows(const std::vector<int>& parts);

    // normalization / attention
    int layer_norm(int x, int gain, int bias);  // per-row, eps 1e-5
    int causal_softmax(int a);                  // row i over columns [0, i]

    // reductions
    int mean_rows(int a);  // 1 x n
    int sum_all(int a);    // 1 x 1
    int mean_all(int a);   // 1 x 1
    int mean_of(const std::vector<int>& scalars);  // all 1 x 1

    // losses
    // mean NLL over masked positions; targets/mask aligned with logits rows
    int cross_entropy(int logits, std::vector<int> targets, std::vector<uint8_t> mask);
    // per-row log softmax probability of ids[r]; result rows x 1
    int logprob_rows(int logits, std::vector<int> ids);
    // z: n x 1 pre-squash scores; mean soft-target binary cross-entropy
    int bce_with_logits(int z, std::vector<double> targets);

    void backward(int node);
    // true when the last backward reached at least one param leaf
    bool touched_params() const { return touched_params_; }

    const Mat& val(int id) const { return nodes_[id].v; }
    const Mat& grad_of(int id) const { return nodes_[id].g; }
    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Mat v;
        Mat g;
        std::vector<int> parents;
        std::function<void()> back;  // adds into parents' grads
        Param* param = nullptr;
    };

    int push(Mat v, std::vector<int> parents);
    Mat& g(int id) { return nodes_[id].g; }

    std::vector<Node> nodes_;
    bool touched_params_ = false;
};

}  // namespace steerlab::autodiff

#endif  // STEERLAB_TENSOR_HPP_
