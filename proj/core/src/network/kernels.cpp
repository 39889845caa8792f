#include "kernels.hpp"

namespace lobdiff::detail {

namespace {

template <class T>
void im2col(const Mat<T>& x, const ConvGeom& g, Mat<T>& cols) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  cols.resize(static_cast<Eigen::Index>(g.kh) * g.kw * g.cin, static_cast<Eigen::Index>(oh) * ow);
  // Every (tap, output) segment is written exactly once, padding included.
  for (int ho = 0; ho < oh; ++ho) {
    for (int ki = 0; ki < g.kh; ++ki) {
      const int hi = ho * g.stride_h - g.pad_h + ki * g.dil_h;
      const bool row_ok = hi >= 0 && hi < g.in_h;
      for (int wo = 0; wo < ow; ++wo) {
        const Eigen::Index q = static_cast<Eigen::Index>(ho) * ow + wo;
        for (int kj = 0; kj < g.kw; ++kj) {
          const int wi = wo * g.stride_w - g.pad_w + kj * g.dil_w;
          const Eigen::Index tap = static_cast<Eigen::Index>(ki) * g.kw + kj;
          auto seg = cols.col(q).segment(tap * g.cin, g.cin);
          if (row_ok && wi >= 0 && wi < g.in_w) {
            seg = x.col(static_cast<Eigen::Index>(hi) * g.in_w + wi);
          } else {
            seg.setZero();
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const Mat<T>& cols, const ConvGeom& g, Mat<T>& dx) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int ho = 0; ho < oh; ++ho) {
    for (int ki = 0; ki < g.kh; ++ki) {
      const int hi = ho * g.stride_h - g.pad_h + ki * g.dil_h;
      if (hi < 0 || hi >= g.in_h) continue;
      for (int wo = 0; wo < ow; ++wo) {
        const Eigen::Index q = static_cast<Eigen::Index>(ho) * ow + wo;
        for (int kj = 0; kj < g.kw; ++kj) {
          const int wi = wo * g.stride_w - g.pad_w + kj * g.dil_w;
          if (wi < 0 || wi >= g.in_w) continue;
          const Eigen::Index tap = static_cast<Eigen::Index>(ki) * g.kw + kj;
          dx.col(static_cast<Eigen::Index>(hi) * g.in_w + wi) += cols.col(q).segment(tap * g.cin, g.cin);
        }
      }
    }
  }
}

}  // namespace

template <class T>
void linear_forward(const CMapT<T>& w, const T* b, const Mat<T>& x, Mat<T>& y) {
  y.noalias() = w * x;
  if (b != nullptr) y.colwise() += Eigen::Map<const Vec<T>>(b, w.rows());
}

template <class T>
void linear_backward(const CMapT<T>& w, const Mat<T>& x, const Mat<T>& dy, T* dw, T* db, Mat<T>* dx) {
  if (dw != nullptr) Eigen::Map<Mat<T>>(dw, w.rows(), w.cols()).noalias() += dy * x.transpose();
  if (dx != nullptr) dx->noalias() = w.transpose() * dy;
  if (db != nullptr) Eigen::Map<Vec<T>>(db, w.rows()) += dy.rowwise().sum();
}

template <class T>
void conv_forward(const CMapT<T>& w, const T* b, const Mat<T>& x, const ConvGeom& g, Mat<T>& y) {
  thread_local Mat<T> cols;
  im2col(x, g, cols);
  y.noalias() = w * cols;
  if (b != nullptr) y.colwise() += Eigen::Map<const Vec<T>>(b, w.rows());
}

template <class T>
void conv_backward(const CMapT<T>& w, const Mat<T>& x, const ConvGeom& g, const Mat<T>& dy, T* dw, T* db,
                   Mat<T>* dx) {
  thread_local Mat<T> cols;
  if (dw != nullptr) {
    im2col(x, g, cols);
    Eigen::Map<Mat<T>>(dw, w.rows(), w.cols()).noalias() += dy * cols.transpose();
  }
  if (dx != nullptr) {
    cols.noalias() = w.transpose() * dy;
    dx->setZero(g.cin, static_cast<Eigen::Index>(g.in_h) * g.in_w);
    col2im_add(cols, g, *dx);
  }
  if (db != nullptr) Eigen::Map<Vec<T>>(db, w.rows()) += dy.rowwise().sum();
}

#define LOBDIFF_INSTANTIATE(T)                                                                                   \
  template void linear_forward<T>(const CMapT<T>&, const T*, const Mat<T>&, Mat<T>&);                            \
  template void linear_backward<T>(const CMapT<T>&, const Mat<T>&, const Mat<T>&, T*, T*, Mat<T>*);              \
  template void conv_forward<T>(const CMapT<T>&, const T*, const Mat<T>&, const ConvGeom&, Mat<T>&);             \
  template void conv_backward<T>(const CMapT<T>&, const Mat<T>&, const ConvGeom&, const Mat<T>&, T*, T*, Mat<T>*);

LOBDIFF_INSTANTIATE(float)
LOBDIFF_INSTANTIATE(double)

#undef LOBDIFF_INSTANTIATE

}  // namespace lobdiff::detail
