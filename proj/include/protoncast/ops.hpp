#pragma once

#include <initializer_list>
#include <span>

#include "protoncast/tensor.hpp"

// Forward rules and accumulating adjoints for the primitives the model uses.
// Every `*_backward` adds into its output gradients; callers zero them first.
namespace protoncast::ops {

using Vec = std::span<double>;
using CVec = std::span<const double>;

// c = a·b, or c += a·b when accumulating.
void matmul(MatrixRef a, MatrixRef b, MutMatrixRef c, bool accumulate = false);
// a_bar += c_bar·bᵀ and b_bar += aᵀ·c_bar; pass a null view to skip either.
void matmul_backward(MatrixRef a, MatrixRef b, MatrixRef c_bar, MutMatrixRef a_bar, MutMatrixRef b_bar);

// y = A·x
void matvec(MatrixRef a, CVec x, Vec y);
void matvec_backward(MatrixRef a, CVec x, CVec y_bar, MutMatrixRef a_bar, Vec x_bar);

void add(CVec a, CVec b, Vec out);
void add_backward(CVec out_bar, Vec a_bar, Vec b_bar);

void mul(CVec a, CVec b, Vec out);
void mul_backward(CVec a, CVec b, CVec out_bar, Vec a_bar, Vec b_bar);

double sigmoid(double x);
void sigmoid(CVec x, Vec y);
// Adjoints of the activations are expressed through the forward output y.
void sigmoid_backward(CVec y, CVec y_bar, Vec x_bar);

void tanh(CVec x, Vec y);
void tanh_backward(CVec y, CVec y_bar, Vec x_bar);

void softmax(CVec x, Vec y);
void softmax_backward(CVec y, CVec y_bar, Vec x_bar);

void concat(std::initializer_list<CVec> parts, Vec out);
void concat_backward(CVec out_bar, std::initializer_list<Vec> part_bars);

void slice(CVec x, std::size_t offset, Vec out);
void slice_backward(CVec out_bar, std::size_t offset, Vec x_bar);

// mean(x²)
double mean_square(CVec x);
void mean_square_backward(CVec x, double out_bar, Vec x_bar);

// (1/n)·Σ(pred − obs)²
double mse_loss(CVec pred, CVec obs);
void mse_loss_backward(CVec pred, CVec obs, double out_bar, Vec pred_bar);

double dot(CVec a, CVec b);

}  // namespace protoncast::ops
