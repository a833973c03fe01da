#pragma once

// Policy-value networks with hand-written backpropagation.
//
// FC:     [block | side] -> FC -> ReLU -> FC -> ReLU -> {logits, value}
// CONV1D: block as n_stack channels x frame_len -> 3 x (conv -> ReLU),
//         flatten, append side inputs, then the same FC trunk and heads.
// CONV2D: block as 1 channel x frame_len x n_stack, 2D kernels.
//
// Parameters live in one flat vector; layers address it through a shape
// table so optimizers and checkpoints can treat them uniformly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "trajocc/common.hpp"

namespace trajocc {

enum class NetVariant { kFC, kConv1D, kConv2D };

inline std::string to_string(NetVariant v) {
  switch (v) {
    case NetVariant::kFC: return "fc";
    case NetVariant::kConv1D: return "conv1d";
    case NetVariant::kConv2D: return "conv2d";
  }
  return "?";
}

inline NetVariant parse_net_variant(const std::string& s) {
  for (auto v : {NetVariant::kFC, NetVariant::kConv1D, NetVariant::kConv2D}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown network variant '" + s + "' (expected fc|conv1d|conv2d)");
}

struct ConvLayerSpec {
  int channels = 32;
  int kernel = 3;
  int stride = 1;
};

struct NetworkSpec {
  NetVariant variant = NetVariant::kFC;
  std::vector<int> hidden = {512, 256};
  std::vector<ConvLayerSpec> conv = {{32, 5, 2}, {32, 3, 2}, {32, 3, 1}};
  int n_actions = 105;
  int frame_len = 105;
  int n_stack = 5;
  int n_side = 4;
  // false: separate policy and value MLPs over the shared input features.
  bool shared = false;

  int block_size() const { return frame_len * n_stack; }
  int input_size() const { return block_size() + n_side; }

  void validate() const {
    if (n_actions < 1) throw ConfigError("network.n_actions must be >= 1");
    if (frame_len < 1 || n_stack < 1 || n_side < 0) throw ConfigError("network input geometry invalid");
    if (hidden.empty()) throw ConfigError("network.hidden must name at least one layer");
    for (int h : hidden)
      if (h < 1) throw ConfigError("network.hidden widths must be >= 1");
    if (variant != NetVariant::kFC) {
      if (conv.empty()) throw ConfigError("network.conv must name at least one layer");
      for (const auto& c : conv)
        if (c.channels < 1 || c.kernel < 1 || c.stride < 1) throw ConfigError("network.conv layer invalid");
    }
  }
};

struct ParamBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

template <typename Scalar>
class PolicyValueNet {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  struct Output {
    Mat logits;   // n_actions x batch
    RowVec values;  // 1 x batch
  };

  // Activations kept for the backward pass.
  struct Cache {
    std::vector<Mat> conv_in;
    std::vector<Mat> conv_pre;
    std::vector<Mat> dense_in;
    std::vector<Mat> dense_pre;
    std::vector<Mat> vdense_in;
    std::vector<Mat> vdense_pre;
    Mat trunk;
    Mat vtrunk;
  };

  explicit PolicyValueNet(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    Eigen::Index offset = 0;
    auto add = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
      shapes_.push_back({name, rows, cols, offset});
      offset += rows * cols;
      return shapes_.size() - 1;
    };

    int in_features = spec_.input_size();
    if (spec_.variant != NetVariant::kFC) {
      int c = spec_.variant == NetVariant::kConv1D ? spec_.n_stack : 1;
      int h = spec_.frame_len;
      int w = spec_.variant == NetVariant::kConv1D ? 1 : spec_.n_stack;
      for (std::size_t i = 0; i < spec_.conv.size(); ++i) {
        const auto& cs = spec_.conv[i];
        ConvGeom g;
        g.c_in = c;
        g.h_in = h;
        g.w_in = w;
        g.kh = cs.kernel;
        g.sh = cs.stride;
        // Time axis of the 2D variant: width-3 kernels (clipped), stride 1.
        g.kw = spec_.variant == NetVariant::kConv2D ? std::min(3, w) : 1;
        g.sw = 1;
        g.c_out = cs.channels;
        if (g.kh > h) {
          throw ShapeError("conv layer " + std::to_string(i) + ": kernel " + std::to_string(g.kh) +
                           " exceeds input length " + std::to_string(h));
        }
        g.h_out = (h - g.kh) / g.sh + 1;
        g.w_out = (w - g.kw) / g.sw + 1;
        const auto name = "conv" + std::to_string(i);
        g.w_block = add(name + ".weight", g.c_out, g.c_in * g.kh * g.kw);
        g.b_block = add(name + ".bias", g.c_out, 1);
        convs_.push_back(g);
        c = g.c_out;
        h = g.h_out;
        w = g.w_out;
      }
      conv_features_ = c * h * w;
      in_features = conv_features_ + spec_.n_side;
    }
    for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
      const auto name = "fc" + std::to_string(i);
      DenseGeom d{in_features, spec_.hidden[i], 0, 0};
      d.w_block = add(name + ".weight", d.out, d.in);
      d.b_block = add(name + ".bias", d.out, 1);
      dense_.push_back(d);
      in_features = d.out;
    }
    int v_features = in_features;
    if (!spec_.shared) {
      v_features = dense_.front().in;
      for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
        const auto name = "vf" + std::to_string(i);
        DenseGeom d{v_features, spec_.hidden[i], 0, 0};
        d.w_block = add(name + ".weight", d.out, d.in);
        d.b_block = add(name + ".bias", d.out, 1);
        vdense_.push_back(d);
        v_features = d.out;
      }
    }
    policy_ = {in_features, spec_.n_actions, 0, 0};
    policy_.w_block = add("policy.weight", policy_.out, policy_.in);
    policy_.b_block = add("policy.bias", policy_.out, 1);
    value_ = {v_features, 1, 0, 0};
    value_.w_block = add("value.weight", 1, value_.in);
    value_.b_block = add("value.bias", 1, 1);
    params_ = Vec::Zero(offset);
  }

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<ParamBlock>& shapes() const { return shapes_; }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }
  int input_size() const { return spec_.input_size(); }
  int conv_output_size() const { return conv_features_; }

  // Orthogonal weights (gain sqrt 2 in the trunk, 0.01 on the policy head,
  // 1 on the value head), zero biases.
  template <typename Rng>
  void init(Rng& rng) {
    params_.setZero();
    std::normal_distribution<double> normal(0.0, 1.0);
    auto orthogonal = [&](std::size_t block, double gain) {
      const auto& s = shapes_[block];
      const Eigen::Index big = std::max(s.rows, s.cols);
      const Eigen::Index small = std::min(s.rows, s.cols);
      Eigen::MatrixXd a(big, small);
      for (Eigen::Index j = 0; j < small; ++j)
        for (Eigen::Index i = 0; i < big; ++i) a(i, j) = normal(rng);
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
      const Eigen::VectorXd diag = qr.matrixQR().diagonal();
      for (Eigen::Index j = 0; j < small; ++j)
        if (diag(j) < 0) q.col(j) *= -1.0;
      Eigen::MatrixXd w = s.rows >= s.cols ? q : Eigen::MatrixXd(q.transpose());
      block_map(block) = (gain * w).template cast<Scalar>();
    };
    for (const auto& g : convs_) orthogonal(g.w_block, std::sqrt(2.0));
    for (const auto& d : dense_) orthogonal(d.w_block, std::sqrt(2.0));
    for (const auto& d : vdense_) orthogonal(d.w_block, std::sqrt(2.0));
    orthogonal(policy_.w_block, 0.01);
    orthogonal(value_.w_block, 1.0);
  }

  // input: input_size x batch, one observation per column.
  Output forward(const Mat& input) const {
    Cache cache;
    return forward(input, cache);
  }

  Output forward(const Mat& input, Cache& cache) const {
    if (input.rows() != spec_.input_size()) {
      throw ShapeError("network expects " + std::to_string(spec_.input_size()) + " inputs, got " +
                       std::to_string(input.rows()));
    }
    const Eigen::Index batch = input.cols();
    cache.conv_in.clear();
    cache.conv_pre.clear();
    cache.dense_in.clear();
    cache.dense_pre.clear();
    cache.vdense_in.clear();
    cache.vdense_pre.clear();

    Mat h;
    if (spec_.variant == NetVariant::kFC) {
      h = input;
    } else {
      Mat x = input.topRows(spec_.block_size());
      for (const auto& g : convs_) {
        Mat pre = conv_forward(g, x);
        cache.conv_in.push_back(std::move(x));
        x = pre.cwiseMax(Scalar(0));
        cache.conv_pre.push_back(std::move(pre));
      }
      h.resize(conv_features_ + spec_.n_side, batch);
      h.topRows(conv_features_) = x;
      h.bottomRows(spec_.n_side) = input.bottomRows(spec_.n_side);
    }
    Mat hv;
    if (!spec_.shared) hv = dense_stack(vdense_, h, cache.vdense_in, cache.vdense_pre);
    h = dense_stack(dense_, h, cache.dense_in, cache.dense_pre);
    const Mat& v_in = spec_.shared ? h : hv;
    Output out;
    out.logits = (block_cmap(policy_.w_block) * h).colwise() + block_cmap(policy_.b_block).col(0);
    out.values = (block_cmap(value_.w_block) * v_in).array() + block_cmap(value_.b_block)(0, 0);
    cache.trunk = std::move(h);
    cache.vtrunk = std::move(hv);
    return out;
  }

  // Accumulates dLoss/dparams into grad (size num_params()).
  void backward(const Cache& cache, const Mat& dlogits, const RowVec& dvalues, Vec& grad) const {
    if (grad.size() != params_.size()) grad = Vec::Zero(params_.size());
    const Mat& trunk = cache.trunk;
    const Mat& v_in = spec_.shared ? trunk : cache.vtrunk;
    grad_map(grad, policy_.w_block).noalias() += dlogits * trunk.transpose();
    grad_map(grad, policy_.b_block).col(0) += dlogits.rowwise().sum();
    grad_map(grad, value_.w_block).noalias() += dvalues * v_in.transpose();
    grad_map(grad, value_.b_block)(0, 0) += dvalues.sum();

    const bool need_features = spec_.variant != NetVariant::kFC;
    Mat dh = block_cmap(policy_.w_block).transpose() * dlogits;
    Mat dv = block_cmap(value_.w_block).transpose() * dvalues;
    if (spec_.shared) {
      dh += dv;
    } else {
      dense_backward(vdense_, cache.vdense_in, cache.vdense_pre, dv, grad, need_features);
    }
    dense_backward(dense_, cache.dense_in, cache.dense_pre, dh, grad, need_features);
    if (!need_features) return;
    if (!spec_.shared) dh += dv;

    Mat dx = dh.topRows(conv_features_);
    for (std::size_t i = convs_.size(); i-- > 0;) {
      const auto& g = convs_[i];
      const Mat dpre = (dx.array() * (cache.conv_pre[i].array() > Scalar(0)).template cast<Scalar>()).matrix();
      dx = conv_backward(g, cache.conv_in[i], dpre, grad, i > 0);
    }
  }

 private:
  struct ConvGeom {
    int c_in = 0, h_in = 0, w_in = 0;
    int kh = 1, kw = 1, sh = 1, sw = 1;
    int c_out = 0, h_out = 0, w_out = 0;
    std::size_t w_block = 0, b_block = 0;

    int patch() const { return c_in * kh * kw; }
    int positions() const { return h_out * w_out; }
  };

  struct DenseGeom {
    int in = 0;
    int out = 0;
    std::size_t w_block = 0, b_block = 0;
  };

  Mat dense_stack(const std::vector<DenseGeom>& layers, Mat h, std::vector<Mat>& ins,
                  std::vector<Mat>& pres) const {
    for (const auto& d : layers) {
      Mat pre = (block_cmap(d.w_block) * h).colwise() + block_cmap(d.b_block).col(0);
      ins.push_back(std::move(h));
      h = pre.cwiseMax(Scalar(0));
      pres.push_back(std::move(pre));
    }
    return h;
  }

  // On return dh holds the gradient w.r.t. the stack input when need_dx.
  void dense_backward(const std::vector<DenseGeom>& layers, const std::vector<Mat>& ins,
                      const std::vector<Mat>& pres, Mat& dh, Vec& grad, bool need_dx) const {
    for (std::size_t i = layers.size(); i-- > 0;) {
      const auto& d = layers[i];
      const Mat dpre = (dh.array() * (pres[i].array() > Scalar(0)).template cast<Scalar>()).matrix();
      grad_map(grad, d.w_block).noalias() += dpre * ins[i].transpose();
      grad_map(grad, d.b_block).col(0) += dpre.rowwise().sum();
      if (i > 0 || need_dx) dh = block_cmap(d.w_block).transpose() * dpre;
    }
  }

  Eigen::Map<Mat> block_map(std::size_t b) {
    const auto& s = shapes_[b];
    return Eigen::Map<Mat>(params_.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<const Mat> block_cmap(std::size_t b) const {
    const auto& s = shapes_[b];
    return Eigen::Map<const Mat>(params_.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<Mat> grad_map(Vec& grad, std::size_t b) const {
    const auto& s = shapes_[b];
    return Eigen::Map<Mat>(grad.data() + s.offset, s.rows, s.cols);
  }

  // Patch matrix (positions x c_in*kh*kw) of one sample stored channel-major
  // as c*H*W + y*W + x.
  static void im2col(const ConvGeom& g, const Scalar* in, Mat& patches) {
    patches.resize(g.positions(), g.patch());
    for (int oy = 0; oy < g.h_out; ++oy)
      for (int ox = 0; ox < g.w_out; ++ox) {
        const int p = oy * g.w_out + ox;
        int col = 0;
        for (int c = 0; c < g.c_in; ++c)
          for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx, ++col) {
              const int y = oy * g.sh + ky;
              const int x = ox * g.sw + kx;
              patches(p, col) = in[(c * g.h_in + y) * g.w_in + x];
            }
      }
  }

  static void col2im_add(const ConvGeom& g, const Mat& dpatches, Scalar* din) {
    for (int oy = 0; oy < g.h_out; ++oy)
      for (int ox = 0; ox < g.w_out; ++ox) {
        const int p = oy * g.w_out + ox;
        int col = 0;
        for (int c = 0; c < g.c_in; ++c)
          for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx, ++col) {
              const int y = oy * g.sh + ky;
              const int x = ox * g.sw + kx;
              din[(c * g.h_in + y) * g.w_in + x] += dpatches(p, col);
            }
      }
  }

  // Output column layout is channel-major: (positions x c_out) col-major.
  Mat conv_forward(const ConvGeom& g, const Mat& x) const {
    const Eigen::Index batch = x.cols();
    Mat out(static_cast<Eigen::Index>(g.c_out) * g.positions(), batch);
    const auto w = block_cmap(g.w_block);
    const auto b = block_cmap(g.b_block);
    Mat patches;
    for (Eigen::Index n = 0; n < batch; ++n) {
      im2col(g, x.col(n).data(), patches);
      Eigen::Map<Mat> y(out.col(n).data(), g.positions(), g.c_out);
      y.noalias() = patches * w.transpose();
      y.rowwise() += b.col(0).transpose();
    }
    return out;
  }

  Mat conv_backward(const ConvGeom& g, const Mat& x, const Mat& dpre, Vec& grad, bool need_dx) const {
    const Eigen::Index batch = x.cols();
    auto dw = grad_map(grad, g.w_block);
    auto db = grad_map(grad, g.b_block);
    const auto w = block_cmap(g.w_block);
    Mat dx;
    if (need_dx) dx = Mat::Zero(x.rows(), batch);
    Mat patches;
    for (Eigen::Index n = 0; n < batch; ++n) {
      im2col(g, x.col(n).data(), patches);
      Eigen::Map<const Mat> dy(dpre.col(n).data(), g.positions(), g.c_out);
      dw.noalias() += dy.transpose() * patches;
      db.col(0) += dy.colwise().sum().transpose();
      if (need_dx) {
        const Mat dpatches = dy * w;
        col2im_add(g, dpatches, dx.col(n).data());
      }
    }
    return dx;
  }

  NetworkSpec spec_;
  std::vector<ParamBlock> shapes_;
  std::vector<ConvGeom> convs_;
  std::vector<DenseGeom> dense_;
  std::vector<DenseGeom> vdense_;
  DenseGeom policy_;
  DenseGeom value_;
  int conv_features_ = 0;
  Vec params_;
};

}  // namespace trajocc
