#pragma once

#include <Eigen/Dense>

namespace lobdiff::detail {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using CMapT = Eigen::Map<const Mat<T>>;

// 2D convolution geometry over a channels x (height*width) activation whose
// column index is h*width + w.
struct ConvGeom {
  int cin = 1, cout = 1;
  int in_h = 1, in_w = 1;
  int kh = 3, kw = 3;
  int stride_h = 1, stride_w = 1;
  int dil_h = 1, dil_w = 1;
  int pad_h = 0, pad_w = 0;

  int out_h() const { return (in_h + 2 * pad_h - dil_h * (kh - 1) - 1) / stride_h + 1; }
  int out_w() const { return (in_w + 2 * pad_w - dil_w * (kw - 1) - 1) / stride_w + 1; }
};

// y = W x + b.
template <class T>
void linear_forward(const CMapT<T>& w, const T* b, const Mat<T>& x, Mat<T>& y);
// dW += dy x^T, db += rowsum(dy), dx = W^T dy (any of the outputs may be null).
template <class T>
void linear_backward(const CMapT<T>& w, const Mat<T>& x, const Mat<T>& dy, T* dw, T* db, Mat<T>* dx);

template <class T>
void conv_forward(const CMapT<T>& w, const T* b, const Mat<T>& x, const ConvGeom& g, Mat<T>& y);
template <class T>
void conv_backward(const CMapT<T>& w, const Mat<T>& x, const ConvGeom& g, const Mat<T>& dy, T* dw, T* db,
                   Mat<T>* dx);

}  // namespace lobdiff::detail
