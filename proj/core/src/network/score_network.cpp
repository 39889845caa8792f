#include "lobdiff/network/score_network.hpp"

#include <cmath>
#include <string>

#include "kernels.hpp"
#include "layout.hpp"

namespace lobdiff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using detail::ConvGeom;
using detail::Slot;

template <class T>
detail::Vec<T> silu(const detail::Vec<T>& x) {
  return x.array() / (T(1) + (-x.array()).exp());
}

template <class T>
detail::Vec<T> silu_grad(const detail::Vec<T>& pre, const detail::Vec<T>& upstream) {
  const Eigen::Array<T, Eigen::Dynamic, 1> s = T(1) / (T(1) + (-pre.array()).exp());
  return (upstream.array() * s * (T(1) + pre.array() * (T(1) - s))).matrix();
}

template <class T>
void relu_inplace(detail::Mat<T>& m) {
  m = m.cwiseMax(T(0));
}

// Zero the gradient wherever the ReLU output was clipped.
template <class T>
void relu_mask(detail::Mat<T>& grad, const detail::Mat<T>& activated) {
  grad = (activated.array() > T(0)).select(grad, T(0));
}

template <class T>
struct BlockCache {
  detail::Mat<T> in, t, s, g, f, m1, m2;
};

template <class T>
struct Cache {
  using MatrixXd = detail::Mat<T>;
  using VectorXd = detail::Vec<T>;
  VectorXd sin_emb, s1_pre, s1, s2_pre, step_emb;
  bool is_null = false;
  MatrixXd past_x, a1, a2;
  VectorXd cond_in, c_pre, cond_emb, e;
  std::vector<VectorXd> film;

  MatrixXd x_row, in_act, h, q, k, v, attn_o;
  std::vector<MatrixXd> attn;
  std::vector<BlockCache<T>> blocks;
  MatrixXd resid, skip, conv_out;
  MatrixXd skip_scaled, z, out;
};

// Parameters copied into aligned storage in the working precision. Eigen picks
// vectorized or scalar paths from the runtime address, so a fixed alignment
// keeps results independent of where the caller's vector happens to live.
template <class T>
class ParamView {
 public:
  explicit ParamView(const NetworkParameters& params)
      : owned_(Eigen::Map<const Eigen::VectorXd>(params.values().data(),
                                                 static_cast<Eigen::Index>(params.size()))
                   .template cast<T>()) {}
  const T* data() const { return owned_.data(); }

 private:
  detail::Vec<T> owned_;
};

template <class T>
class Net {
 public:
  using MatrixXd = detail::Mat<T>;
  using VectorXd = detail::Vec<T>;
  using CMap = detail::CMapT<T>;

  explicit Net(const NetworkParameters& params)
      : cfg_(params.config()),
        slots_(detail::build_layout(cfg_)),
        view_(params),
        base_(view_.data()),
        C_(cfg_.channels),
        D_(cfg_.level_count),
        L_(cfg_.window),
        P_(cfg_.level_count * cfg_.window),
        dh_(cfg_.channels / cfg_.n_heads) {}

  void check_inputs(const Window* x, const ConditioningContext& ctx) const {
    if (x != nullptr && (x->rows() != L_ || x->cols() != D_)) {
      throw ContractError("eps_predict: input must be " + std::to_string(L_) + "x" + std::to_string(D_) + ", got " +
                          std::to_string(x->rows()) + "x" + std::to_string(x->cols()));
    }
    if (ctx.lam && !cfg_.liquidity_conditioned) {
      throw ContractError("context carries lam but the model is not liquidity-conditioned");
    }
    if (ctx.is_null) return;
    if (ctx.past.rows() != L_ || ctx.past.cols() != D_) throw ContractError("context past window has the wrong shape");
    if (static_cast<int>(ctx.tau.size()) != L_) throw ContractError("context tau has the wrong length");
    if (cfg_.liquidity_conditioned) {
      if (!ctx.lam) throw ContractError("liquidity-conditioned model needs lam in the context");
      if (static_cast<int>(ctx.lam->size()) != L_) throw ContractError("context lam has the wrong length");
    }
  }

  void encode(const ConditioningContext& ctx, int step, Cache<T>& c) const {
    if (step < 1) throw ContractError("diffusion step must be >= 1");
    const int Es = cfg_.step_embed_dim;
    c.sin_emb = step_embedding(step, Es).cast<T>();
    c.s1_pre = W(slots_.step1_w) * c.sin_emb + V(slots_.step1_b);
    c.s1 = silu<T>(c.s1_pre);
    c.s2_pre = W(slots_.step2_w) * c.s1 + V(slots_.step2_b);
    c.step_emb = silu<T>(c.s2_pre);

    c.is_null = ctx.is_null;
    if (ctx.is_null) {
      c.cond_emb = V(slots_.null_emb);
    } else {
      c.past_x = Eigen::Map<const Eigen::RowVectorXd>(ctx.past.data(), P_).cast<T>();
      detail::conv_forward<T>(W(slots_.past1_w), ptr(slots_.past1_b), c.past_x, past1_geom(), c.a1);
      relu_inplace<T>(c.a1);
      detail::conv_forward<T>(W(slots_.past2_w), ptr(slots_.past2_b), c.a1, past2_geom(), c.a2);
      relu_inplace<T>(c.a2);
      c.cond_in.resize(detail::cond_input_dim(cfg_));
      c.cond_in.head(C_) = c.a2.rowwise().mean();
      for (int l = 0; l < L_; ++l) c.cond_in(C_ + l) = static_cast<T>(ctx.tau[static_cast<std::size_t>(l)]);
      if (cfg_.liquidity_conditioned) {
        for (int l = 0; l < L_; ++l) c.cond_in(C_ + L_ + l) = static_cast<T>((*ctx.lam)[static_cast<std::size_t>(l)]);
      }
      c.c_pre = W(slots_.cond_w) * c.cond_in + V(slots_.cond_b);
      c.cond_emb = silu<T>(c.c_pre);
    }
    c.e.resize(Es + cfg_.cond_embed_dim);
    c.e << c.step_emb, c.cond_emb;
    c.film.resize(slots_.blocks.size());
    for (std::size_t b = 0; b < slots_.blocks.size(); ++b) {
      c.film[b] = W(slots_.blocks[b].film_w) * c.e + V(slots_.blocks[b].film_b);
    }
  }

  void forward(const Window& x, int step, const ConditioningContext& ctx, Cache<T>& c) const {
    check_inputs(&x, ctx);
    encode(ctx, step, c);

    c.x_row = Eigen::Map<const Eigen::RowVectorXd>(x.data(), P_).cast<T>();
    c.in_act = W(slots_.in_w) * c.x_row;
    c.in_act.colwise() += V(slots_.in_b);
    relu_inplace<T>(c.in_act);
    c.h = c.in_act;
    const CMap emb = W(slots_.level_emb);
    for (int l = 0; l < L_; ++l) c.h.middleCols(static_cast<Eigen::Index>(l) * D_, D_) += emb;

    detail::linear_forward<T>(W(slots_.q_w), ptr(slots_.q_b), c.h, c.q);
    detail::linear_forward<T>(W(slots_.k_w), ptr(slots_.k_b), c.h, c.k);
    detail::linear_forward<T>(W(slots_.v_w), ptr(slots_.v_b), c.h, c.v);
    c.attn_o.resize(C_, P_);
    c.attn.resize(static_cast<std::size_t>(L_ * cfg_.n_heads));
    // The per-head products are tiny (dh x D); lazy products skip the GEMM setup cost.
    // Scores are stored transposed (keys x queries) so each softmax runs down a column.
    const T inv = T(1) / std::sqrt(static_cast<T>(dh_));
    for (int l = 0; l < L_; ++l) {
      for (int hd = 0; hd < cfg_.n_heads; ++hd) {
        const auto qh = c.q.block(hd * dh_, l * D_, dh_, D_);
        const auto kh = c.k.block(hd * dh_, l * D_, dh_, D_);
        const auto vh = c.v.block(hd * dh_, l * D_, dh_, D_);
        MatrixXd& at = c.attn[static_cast<std::size_t>(l * cfg_.n_heads + hd)];
        at.noalias() = kh.transpose().lazyProduct(qh);
        at *= inv;
        for (int i = 0; i < D_; ++i) {
          auto col = at.col(i);
          col = (col.array() - col.maxCoeff()).exp();
          col /= col.sum();
        }
        c.attn_o.block(hd * dh_, l * D_, dh_, D_).noalias() = vh.lazyProduct(at);
      }
    }
    MatrixXd& r = c.resid;
    detail::linear_forward<T>(W(slots_.o_w), ptr(slots_.o_b), c.attn_o, r);
    r += c.h;
    if (!r.allFinite()) throw NumericError("non-finite activation after the attention layer");

    MatrixXd& skip = c.skip;
    skip.setZero(C_, P_);
    c.blocks.resize(slots_.blocks.size());
    for (std::size_t b = 0; b < slots_.blocks.size(); ++b) {
      const auto& bs = slots_.blocks[b];
      BlockCache<T>& bc = c.blocks[b];
      bc.in = r;
      MatrixXd& hc = c.conv_out;
      detail::conv_forward<T>(W(bs.conv_w), ptr(bs.conv_b), r, block_geom(static_cast<int>(b)), hc);
      // tanh(x) = 1 - 2 / (exp(2x) + 1); the exp form vectorizes, libm tanh does not.
      bc.t = (T(1) - T(2) / ((T(2) * hc.topRows(C_).array()).exp() + T(1))).matrix();
      bc.s = (T(1) / (T(1) + (-hc.bottomRows(C_).array()).exp())).matrix();
      bc.g = bc.t.cwiseProduct(bc.s);
      const auto scale = c.film[b].head(C_);
      const auto shift = c.film[b].tail(C_);
      bc.f = (bc.g.array().colwise() * (T(1) + scale.array())).matrix();
      bc.f.colwise() += shift;
      detail::linear_forward<T>(W(bs.mix1_w), ptr(bs.mix1_b), bc.f, bc.m1);
      relu_inplace<T>(bc.m1);
      detail::linear_forward<T>(W(bs.mix2_w), ptr(bs.mix2_b), bc.m1, bc.m2);
      relu_inplace<T>(bc.m2);
      r += bc.m2;
      skip += bc.m2;
      if (!r.allFinite()) throw NumericError("non-finite activation in residual block " + std::to_string(b));
    }

    c.skip_scaled = skip * (T(1) / std::sqrt(static_cast<T>(slots_.blocks.size())));
    detail::linear_forward<T>(W(slots_.head1_w), ptr(slots_.head1_b), c.skip_scaled, c.z);
    relu_inplace<T>(c.z);
    detail::linear_forward<T>(W(slots_.head2_w), ptr(slots_.head2_b), c.z, c.out);
    if (!c.out.allFinite()) throw NumericError("non-finite activation in the output head");
  }

  // dout is d(loss)/d(output) as a 1 x P row; gradients accumulate into g
  // (working precision, same layout as the parameters).
  void backward(const Cache<T>& c, const MatrixXd& dout, T* g) const {
    MatrixXd dz;
    detail::linear_backward<T>(W(slots_.head2_w), c.z, dout, g + slots_.head2_w.offset, g + slots_.head2_b.offset,
                               &dz);
    relu_mask<T>(dz, c.z);
    MatrixXd dskip;
    detail::linear_backward<T>(W(slots_.head1_w), c.skip_scaled, dz, g + slots_.head1_w.offset,
                               g + slots_.head1_b.offset, &dskip);
    dskip *= T(1) / std::sqrt(static_cast<T>(slots_.blocks.size()));

    MatrixXd dr = MatrixXd::Zero(C_, P_);
    VectorXd de = VectorXd::Zero(c.e.size());
    const MatrixXd e_col = c.e;
    MatrixXd dm2, dm1, df, dhc, dr_in, de_part;
    for (std::size_t bi = slots_.blocks.size(); bi-- > 0;) {
      const auto& bs = slots_.blocks[bi];
      const BlockCache<T>& bc = c.blocks[bi];
      dm2 = dr + dskip;
      relu_mask<T>(dm2, bc.m2);
      detail::linear_backward<T>(W(bs.mix2_w), bc.m1, dm2, g + bs.mix2_w.offset, g + bs.mix2_b.offset, &dm1);
      relu_mask<T>(dm1, bc.m1);
      detail::linear_backward<T>(W(bs.mix1_w), bc.f, dm1, g + bs.mix1_w.offset, g + bs.mix1_b.offset, &df);

      VectorXd dfilm(2 * C_);
      dfilm.head(C_) = df.cwiseProduct(bc.g).rowwise().sum();
      dfilm.tail(C_) = df.rowwise().sum();
      const auto scale = c.film[bi].head(C_);
      const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic> dgate = df.array().colwise() * (T(1) + scale.array());
      dhc.resize(2 * C_, P_);
      dhc.topRows(C_) = (dgate * bc.s.array() * (T(1) - bc.t.array().square())).matrix();
      dhc.bottomRows(C_) = (dgate * bc.t.array() * bc.s.array() * (T(1) - bc.s.array())).matrix();
      detail::conv_backward<T>(W(bs.conv_w), bc.in, block_geom(static_cast<int>(bi)), dhc, g + bs.conv_w.offset,
                               g + bs.conv_b.offset, &dr_in);
      dr += dr_in;

      detail::linear_backward<T>(W(bs.film_w), e_col, dfilm, g + bs.film_w.offset, g + bs.film_b.offset, &de_part);
      de += de_part;
    }

    MatrixXd dattn_o;
    detail::linear_backward<T>(W(slots_.o_w), c.attn_o, dr, g + slots_.o_w.offset, g + slots_.o_b.offset, &dattn_o);
    MatrixXd dhid = dr;
    MatrixXd dq(C_, P_), dk(C_, P_), dv(C_, P_);
    const T inv = T(1) / std::sqrt(static_cast<T>(dh_));
    for (int l = 0; l < L_; ++l) {
      for (int hd = 0; hd < cfg_.n_heads; ++hd) {
        // at is the transposed attention (keys x queries); the algebra below is the
        // usual softmax backward written in that orientation.
        const MatrixXd& at = c.attn[static_cast<std::size_t>(l * cfg_.n_heads + hd)];
        const auto qh = c.q.block(hd * dh_, l * D_, dh_, D_);
        const auto kh = c.k.block(hd * dh_, l * D_, dh_, D_);
        const auto vh = c.v.block(hd * dh_, l * D_, dh_, D_);
        const auto doh = dattn_o.block(hd * dh_, l * D_, dh_, D_);
        dv.block(hd * dh_, l * D_, dh_, D_).noalias() = doh.lazyProduct(at.transpose());
        const MatrixXd dat = vh.transpose().lazyProduct(doh);
        const Eigen::Matrix<T, 1, Eigen::Dynamic> cols = (dat.array() * at.array()).colwise().sum();
        MatrixXd dst = (at.array() * (dat.array().rowwise() - cols.array())).matrix();
        dst *= inv;
        dq.block(hd * dh_, l * D_, dh_, D_).noalias() = kh.lazyProduct(dst);
        dk.block(hd * dh_, l * D_, dh_, D_).noalias() = qh.lazyProduct(dst.transpose());
      }
    }
    MatrixXd tmp;
    detail::linear_backward<T>(W(slots_.q_w), c.h, dq, g + slots_.q_w.offset, g + slots_.q_b.offset, &tmp);
    dhid += tmp;
    detail::linear_backward<T>(W(slots_.k_w), c.h, dk, g + slots_.k_w.offset, g + slots_.k_b.offset, &tmp);
    dhid += tmp;
    detail::linear_backward<T>(W(slots_.v_w), c.h, dv, g + slots_.v_w.offset, g + slots_.v_b.offset, &tmp);
    dhid += tmp;

    Eigen::Map<MatrixXd> demb(g + slots_.level_emb.offset, C_, D_);
    for (int l = 0; l < L_; ++l) demb += dhid.middleCols(static_cast<Eigen::Index>(l) * D_, D_);
    relu_mask<T>(dhid, c.in_act);
    Eigen::Map<VectorXd>(g + slots_.in_w.offset, C_) += dhid * c.x_row.transpose();
    Eigen::Map<VectorXd>(g + slots_.in_b.offset, C_) += dhid.rowwise().sum();

    const int Es = cfg_.step_embed_dim;
    const VectorXd ds2 = silu_grad<T>(c.s2_pre, de.head(Es));
    MatrixXd ds1m;
    detail::linear_backward<T>(W(slots_.step2_w), c.s1, ds2, g + slots_.step2_w.offset, g + slots_.step2_b.offset,
                               &ds1m);
    const VectorXd ds1 = silu_grad<T>(c.s1_pre, ds1m.col(0));
    detail::linear_backward<T>(W(slots_.step1_w), c.sin_emb, ds1, g + slots_.step1_w.offset,
                               g + slots_.step1_b.offset, nullptr);

    const VectorXd dcond = de.tail(cfg_.cond_embed_dim);
    if (c.is_null) {
      Eigen::Map<VectorXd>(g + slots_.null_emb.offset, cfg_.cond_embed_dim) += dcond;
      return;
    }
    const VectorXd dc = silu_grad<T>(c.c_pre, dcond);
    MatrixXd dcond_in;
    detail::linear_backward<T>(W(slots_.cond_w), c.cond_in, dc, g + slots_.cond_w.offset, g + slots_.cond_b.offset,
                               &dcond_in);
    MatrixXd da2(C_, c.a2.cols());
    da2.colwise() = dcond_in.col(0).head(C_) / static_cast<T>(c.a2.cols());
    relu_mask<T>(da2, c.a2);
    MatrixXd da1;
    detail::conv_backward<T>(W(slots_.past2_w), c.a1, past2_geom(), da2, g + slots_.past2_w.offset,
                             g + slots_.past2_b.offset, &da1);
    relu_mask<T>(da1, c.a1);
    detail::conv_backward<T>(W(slots_.past1_w), c.past_x, past1_geom(), da1, g + slots_.past1_w.offset,
                             g + slots_.past1_b.offset, nullptr);
  }

  Window output(const Cache<T>& c) const {
    Window out(L_, D_);
    Eigen::Map<Eigen::RowVectorXd>(out.data(), P_) = c.out.template cast<double>();
    return out;
  }

  std::vector<FilmPair> film_pairs(const Cache<T>& c) const {
    std::vector<FilmPair> pairs;
    pairs.reserve(c.film.size());
    for (const auto& f : c.film) {
      pairs.push_back({f.head(C_).template cast<double>(), f.tail(C_).template cast<double>()});
    }
    return pairs;
  }

  int P() const { return P_; }

 private:
  CMap W(const Slot& s) const { return CMap(base_ + s.offset, s.rows, s.cols); }
  Eigen::Map<const VectorXd> V(const Slot& s) const { return Eigen::Map<const VectorXd>(base_ + s.offset, s.rows); }
  const T* ptr(const Slot& s) const { return base_ + s.offset; }

  ConvGeom block_geom(int layer) const {
    ConvGeom g;
    g.cin = C_;
    g.cout = 2 * C_;
    g.in_h = L_;
    g.in_w = D_;
    g.dil_h = cfg_.dilation(layer);
    g.pad_h = g.dil_h;
    g.pad_w = 1;
    return g;
  }
  ConvGeom past1_geom() const {
    ConvGeom g;
    g.cin = 1;
    g.cout = C_;
    g.in_h = L_;
    g.in_w = D_;
    g.stride_h = g.stride_w = 2;
    g.pad_h = g.pad_w = 1;
    return g;
  }
  ConvGeom past2_geom() const {
    const ConvGeom first = past1_geom();
    ConvGeom g = first;
    g.cin = C_;
    g.in_h = first.out_h();
    g.in_w = first.out_w();
    return g;
  }

  const NetworkConfig& cfg_;
  detail::NetworkSlots slots_;
  ParamView<T> view_;
  const T* base_;
  int C_, D_, L_, P_, dh_;
};

template <class T>
Window predict_as(const NetworkParameters& params, const Window& x, int step, const ConditioningContext& ctx) {
  const Net<T> net(params);
  Cache<T> c;
  net.forward(x, step, ctx, c);
  return net.output(c);
}

template <class T>
double gradient_as(const NetworkParameters& params, const Window& x, int step, const ConditioningContext& ctx,
                   const Window& target, double weight, std::span<double> grad) {
  const Net<T> net(params);
  Cache<T> c;
  net.forward(x, step, ctx, c);
  const Eigen::RowVectorXd diff =
      c.out.template cast<double>() - Eigen::Map<const Eigen::RowVectorXd>(target.data(), net.P());
  const detail::Mat<T> dout = ((2.0 * weight) * diff).cast<T>();
  detail::Vec<T> g = detail::Vec<T>::Zero(static_cast<Eigen::Index>(grad.size()));
  net.backward(c, dout, g.data());
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += static_cast<double>(g[static_cast<Eigen::Index>(i)]);
  return diff.squaredNorm();
}

}  // namespace

VectorXd step_embedding(int step, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("step embedding width must be even");
  const int half = dim / 2;
  VectorXd e(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    e(k) = std::sin(step * freq);
    e(half + k) = std::cos(step * freq);
  }
  return e;
}

std::vector<FilmPair> encode_condition(const NetworkParameters& params, const ConditioningContext& ctx, int step) {
  const Net<double> net(params);
  net.check_inputs(nullptr, ctx);
  Cache<double> c;
  net.encode(ctx, step, c);
  return net.film_pairs(c);
}

Window eps_predict(const NetworkParameters& params, const Window& x, int step, const ConditioningContext& ctx,
                   Precision precision) {
  return precision == Precision::kFast ? predict_as<float>(params, x, step, ctx)
                                       : predict_as<double>(params, x, step, ctx);
}

double squared_error_gradient(const NetworkParameters& params, const Window& x, int step,
                              const ConditioningContext& ctx, const Window& target, double weight,
                              std::span<double> grad, Precision precision) {
  if (grad.size() != params.size()) throw ContractError("gradient buffer does not match the parameter count");
  if (target.rows() != x.rows() || target.cols() != x.cols()) throw ContractError("target shape mismatch");
  return precision == Precision::kFast ? gradient_as<float>(params, x, step, ctx, target, weight, grad)
                                       : gradient_as<double>(params, x, step, ctx, target, weight, grad);
}

}  // namespace lobdiff
