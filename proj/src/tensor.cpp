#include "retinn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace retinn {

int ParameterStore::add(const std::string& name, std::vector<int> shape) {
  if (find(name) >= 0) throw ConfigError("duplicate parameter name: " + name);
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("non-positive dimension in parameter " + name);
    n *= static_cast<std::size_t>(d);
  }
  Entry e;
  e.name = name;
  e.shape = std::move(shape);
  e.offset = data_.size();
  e.size = n;
  entries_.push_back(std::move(e));
  data_.resize(data_.size() + n, 0.0);
  return static_cast<int>(entries_.size()) - 1;
}

int ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

int ParameterStore::id_covering(std::size_t flat_index) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Entry& e = entries_[i];
    if (flat_index >= e.offset && flat_index < e.offset + e.size)
      return static_cast<int>(i);
  }
  return -1;
}

bool ParameterStore::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

int ConvSpec::out_length(int in_length) const {
  long span = static_cast<long>(in_length) + 2L * padding - width;
  if (span < 0 || stride <= 0 || span % stride != 0)
    throw ConfigError("conv shape mismatch: in_length=" + std::to_string(in_length) +
                      " width=" + std::to_string(width) +
                      " stride=" + std::to_string(stride) +
                      " padding=" + std::to_string(padding));
  long out = span / stride + 1;
  if (out <= 0) throw ConfigError("conv yields empty output");
  return static_cast<int>(out);
}

namespace {

struct TapRange {
  int lo, hi, off;  // valid output range and input offset for one kernel tap
};

inline TapRange tap_range(int kw, int ol_n, int il, const ConvSpec& s) {
  TapRange r{0, ol_n - 1, kw - s.padding};
  if (r.off < 0) r.lo = (-r.off + s.stride - 1) / s.stride;
  int max_in = il - 1 - r.off;
  r.hi = max_in < 0 ? -1 : std::min(r.hi, max_in / s.stride);
  return r;
}

// rows longer than this take the unblocked path
constexpr int kMaxRow = 512;

// out[oc][ol] = bias[oc] + sum_{ic,kw} K[oc][ic][kw] * in[ic][ol*stride+kw-pad]
// Stride-1 rows are produced four output channels at a time so every input
// load feeds four accumulator rows.
void conv_forward_raw(const double* __restrict__ in, int ic_n, int il,
                      const double* __restrict__ kernel,
                      const double* __restrict__ bias, double* __restrict__ out,
                      int ol_n, const ConvSpec& s) {
  const std::size_t kstride = static_cast<std::size_t>(ic_n) * s.width;
  int oc = 0;
  if (s.stride == 1 && ol_n <= kMaxRow) {
    double acc[4][kMaxRow];
    for (; oc + 4 <= s.out_channels; oc += 4) {
      for (int u = 0; u < 4; ++u)
        for (int t = 0; t < ol_n; ++t) acc[u][t] = 0.0;
      for (int ic = 0; ic < ic_n; ++ic) {
        const double* irow = in + static_cast<std::size_t>(ic) * il;
        const double* kr0 = kernel + (oc + 0) * kstride + static_cast<std::size_t>(ic) * s.width;
        const double* kr1 = kr0 + kstride;
        const double* kr2 = kr1 + kstride;
        const double* kr3 = kr2 + kstride;
        for (int kw = 0; kw < s.width; ++kw) {
          TapRange r = tap_range(kw, ol_n, il, s);
          double k0 = kr0[kw], k1 = kr1[kw], k2 = kr2[kw], k3 = kr3[kw];
          const double* is = irow + r.off;
          for (int ol = r.lo; ol <= r.hi; ++ol) {
            double x = is[ol];
            acc[0][ol] += k0 * x;
            acc[1][ol] += k1 * x;
            acc[2][ol] += k2 * x;
            acc[3][ol] += k3 * x;
          }
        }
      }
      for (int u = 0; u < 4; ++u) {
        double* orow = out + static_cast<std::size_t>(oc + u) * ol_n;
        double b = bias ? bias[oc + u] : 0.0;
        if (s.act == Activation::relu) {
          for (int ol = 0; ol < ol_n; ++ol) {
            double v = acc[u][ol] + b;
            orow[ol] = v > 0.0 ? v : 0.0;
          }
        } else {
          for (int ol = 0; ol < ol_n; ++ol) orow[ol] = acc[u][ol] + b;
        }
      }
    }
  }
  for (; oc < s.out_channels; ++oc) {
    double* orow = out + static_cast<std::size_t>(oc) * ol_n;
    double b = bias ? bias[oc] : 0.0;
    std::fill(orow, orow + ol_n, b);
    for (int ic = 0; ic < ic_n; ++ic) {
      const double* irow = in + static_cast<std::size_t>(ic) * il;
      const double* krow = kernel + oc * kstride + static_cast<std::size_t>(ic) * s.width;
      for (int kw = 0; kw < s.width; ++kw) {
        double k = krow[kw];
        TapRange r = tap_range(kw, ol_n, il, s);
        const double* ishift = irow + r.off;
        if (s.stride == 1) {
          for (int ol = r.lo; ol <= r.hi; ++ol) orow[ol] += k * ishift[ol];
        } else {
          for (int ol = r.lo; ol <= r.hi; ++ol) orow[ol] += k * ishift[ol * s.stride];
        }
      }
    }
    if (s.act == Activation::relu) {
      for (int ol = 0; ol < ol_n; ++ol) orow[ol] = orow[ol] > 0.0 ? orow[ol] : 0.0;
    }
  }
}

// lane-split dot product; the fixed lane count keeps the reduction order
// deterministic while letting the compiler vectorize it
inline double dot_lanes(const double* __restrict__ a, const double* __restrict__ b,
                        int n) {
  constexpr int L = 8;
  double lanes[L] = {0, 0, 0, 0, 0, 0, 0, 0};
  int t = 0;
  for (; t + L <= n; t += L)
    for (int u = 0; u < L; ++u) lanes[u] += a[t + u] * b[t + u];
  double tail = 0.0;
  for (; t < n; ++t) tail += a[t] * b[t];
  double sum = tail;
  for (int u = 0; u < L; ++u) sum += lanes[u];
  return sum;
}

// Adjoints for the convolution. The relu gate is out > 0 (output is
// max(pre, 0)), so the subgradient at exactly 0 is 0. gate_scratch holds the
// full out_channels x ol_n gate matrix.
void conv_backward_raw(const double* __restrict__ in, int ic_n, int il,
                       const double* __restrict__ kernel,
                       const double* __restrict__ out,
                       const double* __restrict__ dout, int ol_n, const ConvSpec& s,
                       double* __restrict__ din, double* __restrict__ dkernel,
                       double* __restrict__ dbias, double* __restrict__ gate_scratch) {
  const std::size_t kstride = static_cast<std::size_t>(ic_n) * s.width;
  double* gates = gate_scratch;
  for (int oc = 0; oc < s.out_channels; ++oc) {
    const double* orow = out + static_cast<std::size_t>(oc) * ol_n;
    const double* drow = dout + static_cast<std::size_t>(oc) * ol_n;
    double* g = gates + static_cast<std::size_t>(oc) * ol_n;
    if (s.act == Activation::relu) {
      for (int ol = 0; ol < ol_n; ++ol) g[ol] = orow[ol] > 0.0 ? drow[ol] : 0.0;
    } else {
      std::copy(drow, drow + ol_n, g);
    }
    if (dbias) {
      double acc = 0.0;
      for (int ol = 0; ol < ol_n; ++ol) acc += g[ol];
      dbias[oc] += acc;
    }
  }

  for (int oc = 0; oc < s.out_channels; ++oc) {
    const double* g = gates + static_cast<std::size_t>(oc) * ol_n;
    for (int ic = 0; ic < ic_n; ++ic) {
      const double* irow = in + static_cast<std::size_t>(ic) * il;
      double* dkrow = dkernel + oc * kstride + static_cast<std::size_t>(ic) * s.width;
      for (int kw = 0; kw < s.width; ++kw) {
        TapRange r = tap_range(kw, ol_n, il, s);
        if (r.hi < r.lo) continue;
        if (s.stride == 1) {
          dkrow[kw] += dot_lanes(g + r.lo, irow + r.off + r.lo, r.hi - r.lo + 1);
        } else {
          double kacc = 0.0;
          const double* ishift = irow + r.off;
          for (int ol = r.lo; ol <= r.hi; ++ol) kacc += g[ol] * ishift[ol * s.stride];
          dkrow[kw] += kacc;
        }
      }
    }
  }

  if (!din) return;
  int ic = 0;
  if (s.stride == 1 && il <= kMaxRow) {
    // four input rows at a time so every gate load feeds four accumulators
    double acc[4][kMaxRow];
    for (; ic + 4 <= ic_n; ic += 4) {
      for (int u = 0; u < 4; ++u)
        for (int p = 0; p < il; ++p) acc[u][p] = 0.0;
      for (int oc = 0; oc < s.out_channels; ++oc) {
        const double* g = gates + static_cast<std::size_t>(oc) * ol_n;
        const double* kr0 = kernel + oc * kstride + static_cast<std::size_t>(ic) * s.width;
        const double* kr1 = kr0 + s.width;
        const double* kr2 = kr1 + s.width;
        const double* kr3 = kr2 + s.width;
        for (int kw = 0; kw < s.width; ++kw) {
          TapRange r = tap_range(kw, ol_n, il, s);
          if (r.hi < r.lo) continue;
          double k0 = kr0[kw], k1 = kr1[kw], k2 = kr2[kw], k3 = kr3[kw];
          double* a0 = acc[0] + r.off;
          double* a1 = acc[1] + r.off;
          double* a2 = acc[2] + r.off;
          double* a3 = acc[3] + r.off;
          for (int ol = r.lo; ol <= r.hi; ++ol) {
            double x = g[ol];
            a0[ol] += k0 * x;
            a1[ol] += k1 * x;
            a2[ol] += k2 * x;
            a3[ol] += k3 * x;
          }
        }
      }
      for (int u = 0; u < 4; ++u) {
        double* dirow = din + static_cast<std::size_t>(ic + u) * il;
        for (int p = 0; p < il; ++p) dirow[p] += acc[u][p];
      }
    }
  }
  for (; ic < ic_n; ++ic) {
    double* dirow = din + static_cast<std::size_t>(ic) * il;
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const double* g = gates + static_cast<std::size_t>(oc) * ol_n;
      const double* krow = kernel + oc * kstride + static_cast<std::size_t>(ic) * s.width;
      for (int kw = 0; kw < s.width; ++kw) {
        TapRange r = tap_range(kw, ol_n, il, s);
        if (r.hi < r.lo) continue;
        double k = krow[kw];
        double* dishift = dirow + r.off;
        if (s.stride == 1) {
          for (int ol = r.lo; ol <= r.hi; ++ol) dishift[ol] += k * g[ol];
        } else {
          for (int ol = r.lo; ol <= r.hi; ++ol) dishift[ol * s.stride] += k * g[ol];
        }
      }
    }
  }
}

void softmax_weights(std::span<const double> logits, std::vector<double>& w) {
  w.resize(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    w[j] = std::exp(logits[j] - mx);
    sum += w[j];
  }
  for (double& x : w) x /= sum;
}

}  // namespace

FeatureMap conv1d(const FeatureMap& in, std::span<const double> kernel,
                  std::span<const double> bias, const ConvSpec& spec) {
  if (in.channels != spec.in_channels)
    throw ConfigError("conv channel mismatch: input has " + std::to_string(in.channels) +
                      " channels, kernel expects " + std::to_string(spec.in_channels));
  if (kernel.size() != spec.kernel_size())
    throw ConfigError("conv kernel size mismatch");
  if (spec.bias && bias.size() != static_cast<std::size_t>(spec.out_channels))
    throw ConfigError("conv bias size mismatch");
  int ol = spec.out_length(in.length);
  FeatureMap out(spec.out_channels, ol);
  conv_forward_raw(in.values.data(), in.channels, in.length, kernel.data(),
                   spec.bias ? bias.data() : nullptr, out.values.data(), ol, spec);
  return out;
}

FeatureMap maxpool1d(const FeatureMap& in, int window) {
  if (window <= 0) throw ConfigError("maxpool window must be positive");
  if (in.length % window != 0)
    throw ConfigError("maxpool length " + std::to_string(in.length) +
                      " not divisible by window " + std::to_string(window));
  FeatureMap out(in.channels, in.length / window);
  for (int c = 0; c < in.channels; ++c)
    for (int o = 0; o < out.length; ++o) {
      double m = in.at(c, o * window);
      for (int k = 1; k < window; ++k) m = std::max(m, in.at(c, o * window + k));
      out.at(c, o) = m;
    }
  return out;
}

double softmax_mask_md(std::span<const double> vf, std::span<const double> logits) {
  if (logits.empty()) {
    double s = 0.0;
    for (double v : vf) s += v;
    return s / static_cast<double>(vf.size());
  }
  if (logits.size() != vf.size())
    throw ConfigError("mask logits arity does not match visual field");
  std::vector<double> w;
  softmax_weights(logits, w);
  double md = 0.0;
  for (std::size_t j = 0; j < vf.size(); ++j) md += w[j] * vf[j];
  return md;
}

std::vector<FeatureMap> rpl_unroll(const FeatureMap& r0, const ConvSpec& spec,
                                   std::span<const double> kernel,
                                   std::span<const double> bias, int passes) {
  if (spec.in_channels != spec.out_channels)
    throw ConfigError("recursive layer must preserve channel count");
  if (spec.act != Activation::linear)
    throw ConfigError("recursive layer must use linear activation");
  if (spec.out_length(r0.length) != r0.length)
    throw ConfigError("recursive layer must preserve length");
  std::vector<FeatureMap> out;
  out.reserve(static_cast<std::size_t>(passes));
  const FeatureMap* prev = &r0;
  for (int t = 0; t < passes; ++t) {
    out.push_back(conv1d(*prev, kernel, bias, spec));
    prev = &out.back();
  }
  return out;
}

// ---------------------------------------------------------------------------

int Graph::push(Node n) {
  if (n.op == Op::conv && n.channels * n.length > max_row_)
    max_row_ = n.channels * n.length;
  n.buf = total_size_;
  total_size_ += static_cast<std::size_t>(n.channels) * n.length;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(int channels, int length) {
  if (channels <= 0 || length <= 0) throw ConfigError("input shape must be positive");
  Node n;
  n.op = Op::input;
  n.channels = channels;
  n.length = length;
  return push(std::move(n));
}

int Graph::conv(int in, const ConvSpec& spec, int kernel_param, int bias_param) {
  const Node& src = at(in);
  if (src.channels != spec.in_channels)
    throw ConfigError("conv channel mismatch: input has " +
                      std::to_string(src.channels) + " channels, kernel expects " +
                      std::to_string(spec.in_channels));
  if (spec.bias && bias_param < 0) throw ConfigError("conv expects a bias parameter");
  Node n;
  n.op = Op::conv;
  n.in0 = in;
  n.spec = spec;
  n.kernel_param = kernel_param;
  n.bias_param = spec.bias ? bias_param : -1;
  n.channels = spec.out_channels;
  n.length = spec.out_length(src.length);
  return push(std::move(n));
}

int Graph::pool(int in, int window) {
  const Node& src = at(in);
  if (window <= 0) throw ConfigError("maxpool window must be positive");
  if (src.length % window != 0)
    throw ConfigError("maxpool length " + std::to_string(src.length) +
                      " not divisible by window " + std::to_string(window));
  Node n;
  n.op = Op::pool;
  n.in0 = in;
  n.window = window;
  n.channels = src.channels;
  n.length = src.length / window;
  return push(std::move(n));
}

int Graph::add(int a, int b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.channels != nb.channels || na.length != nb.length)
    throw ConfigError("add shape mismatch");
  Node n;
  n.op = Op::add;
  n.in0 = a;
  n.in1 = b;
  n.channels = na.channels;
  n.length = na.length;
  return push(std::move(n));
}

int Graph::gather(std::vector<std::pair<int, int>> refs) {
  if (refs.empty()) throw ConfigError("gather needs at least one reference");
  for (auto& [node, off] : refs) {
    const Node& src = at(node);
    if (off < 0 || off >= src.channels * src.length)
      throw ConfigError("gather reference out of range");
  }
  Node n;
  n.op = Op::gather;
  n.channels = 1;
  n.length = static_cast<int>(refs.size());
  n.refs = std::move(refs);
  return push(std::move(n));
}

int Graph::softmax_dot(int vec, int logits_param) {
  const Node& src = at(vec);
  if (src.channels != 1) throw ConfigError("softmax_dot expects a single-channel vector");
  Node n;
  n.op = Op::softmax_dot;
  n.in0 = vec;
  n.logits_param = logits_param;
  n.channels = 1;
  n.length = 1;
  return push(std::move(n));
}

int Graph::weighted_sse(int pred, int target, std::vector<double> w) {
  const Node& p = at(pred);
  const Node& t = at(target);
  if (p.channels * p.length != t.channels * t.length ||
      w.size() != static_cast<std::size_t>(p.channels) * p.length)
    throw ConfigError("weighted_sse arity mismatch");
  Node n;
  n.op = Op::weighted_sse;
  n.in0 = pred;
  n.in1 = target;
  n.weights = std::move(w);
  n.channels = 1;
  n.length = 1;
  return push(std::move(n));
}

int Graph::combine(std::vector<int> terms, std::vector<double> coeffs) {
  if (terms.size() != coeffs.size() || terms.empty())
    throw ConfigError("combine needs matching terms and coefficients");
  for (int t : terms)
    if (at(t).channels != 1 || at(t).length != 1)
      throw ConfigError("combine operates on scalar nodes");
  Node n;
  n.op = Op::combine;
  n.terms = std::move(terms);
  n.weights = std::move(coeffs);
  n.channels = 1;
  n.length = 1;
  return push(std::move(n));
}

void Graph::prepare(Workspace& ws) const {
  ws.val.assign(total_size_, 0.0);
  ws.grad.assign(total_size_, 0.0);
  ws.scratch.assign(static_cast<std::size_t>(max_row_), 0.0);
}

std::span<double> Graph::input_values(Workspace& ws, int node) const {
  const Node& n = at(node);
  if (n.op != Op::input) throw ConfigError("node is not an input");
  return {ws.val.data() + n.buf, static_cast<std::size_t>(n.channels) * n.length};
}

std::span<const double> Graph::values(const Workspace& ws, int node) const {
  const Node& n = at(node);
  return {ws.val.data() + n.buf, static_cast<std::size_t>(n.channels) * n.length};
}

void Graph::forward(Workspace& ws, const ParameterStore& params, int upto) const {
  if (ws.val.size() != total_size_) prepare(ws);
  int end = upto < 0 ? static_cast<int>(nodes_.size()) - 1 : upto;
  for (int id = 0; id <= end; ++id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    double* out = ws.val.data() + n.buf;
    switch (n.op) {
      case Op::input:
        break;
      case Op::conv: {
        const Node& src = at(n.in0);
        conv_forward_raw(ws.val.data() + src.buf, src.channels, src.length,
                         params.values(n.kernel_param).data(),
                         n.bias_param >= 0 ? params.values(n.bias_param).data()
                                           : nullptr,
                         out, n.length, n.spec);
        break;
      }
      case Op::pool: {
        const Node& src = at(n.in0);
        const double* in = ws.val.data() + src.buf;
        for (int c = 0; c < n.channels; ++c) {
          const double* irow = in + static_cast<std::size_t>(c) * src.length;
          double* orow = out + static_cast<std::size_t>(c) * n.length;
          for (int o = 0; o < n.length; ++o) {
            double m = irow[o * n.window];
            for (int k = 1; k < n.window; ++k)
              m = std::max(m, irow[o * n.window + k]);
            orow[o] = m;
          }
        }
        break;
      }
      case Op::add: {
        const Node& a = at(n.in0);
        const Node& b = at(n.in1);
        const double* pa = ws.val.data() + a.buf;
        const double* pb = ws.val.data() + b.buf;
        std::size_t sz = static_cast<std::size_t>(n.channels) * n.length;
        for (std::size_t i = 0; i < sz; ++i) out[i] = pa[i] + pb[i];
        break;
      }
      case Op::gather: {
        for (std::size_t j = 0; j < n.refs.size(); ++j)
          out[j] = ws.val[at(n.refs[j].first).buf + n.refs[j].second];
        break;
      }
      case Op::softmax_dot: {
        const Node& src = at(n.in0);
        std::span<const double> v{ws.val.data() + src.buf,
                                  static_cast<std::size_t>(src.length)};
        if (n.logits_param < 0) {
          double s = 0.0;
          for (double x : v) s += x;
          out[0] = s / static_cast<double>(v.size());
        } else {
          out[0] = softmax_mask_md(v, params.values(n.logits_param));
        }
        break;
      }
      case Op::weighted_sse: {
        const Node& p = at(n.in0);
        const Node& t = at(n.in1);
        const double* pv = ws.val.data() + p.buf;
        const double* tv = ws.val.data() + t.buf;
        double acc = 0.0;
        for (std::size_t j = 0; j < n.weights.size(); ++j) {
          double r = tv[j] - pv[j];
          acc += n.weights[j] * r * r;
        }
        out[0] = acc;
        break;
      }
      case Op::combine: {
        double acc = 0.0;
        for (std::size_t k = 0; k < n.terms.size(); ++k)
          acc += n.weights[k] * ws.val[at(n.terms[k]).buf];
        out[0] = acc;
        break;
      }
    }
  }
}

void Graph::backward(Workspace& ws, const ParameterStore& params,
                     std::vector<double>& param_grads, int loss_node, double seed,
                     bool accumulate) const {
  const Node& loss = at(loss_node);
  if (loss.channels != 1 || loss.length != 1)
    throw ConfigError("backward requires a scalar terminal node");
  if (param_grads.size() != params.total_count())
    param_grads.assign(params.total_count(), 0.0);
  if (!accumulate) {
    std::fill(param_grads.begin(), param_grads.end(), 0.0);
    std::fill(ws.grad.begin(), ws.grad.end(), 0.0);
  } else {
    // node adjoints are per-replay scratch even when parameter adjoints
    // accumulate across replays
    std::fill(ws.grad.begin(), ws.grad.end(), 0.0);
  }
  ws.grad[loss.buf] = seed;

  auto pgrad = [&](int id) {
    return param_grads.data() + params.entry(id).offset;
  };

  for (int id = loss_node; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const double* g = ws.grad.data() + n.buf;
    switch (n.op) {
      case Op::input:
        break;
      case Op::conv: {
        const Node& src = at(n.in0);
        if (ws.scratch.size() < static_cast<std::size_t>(n.channels) * n.length)
          ws.scratch.assign(static_cast<std::size_t>(n.channels) * n.length, 0.0);
        conv_backward_raw(ws.val.data() + src.buf, src.channels, src.length,
                          params.values(n.kernel_param).data(),
                          ws.val.data() + n.buf, g, n.length, n.spec,
                          ws.grad.data() + src.buf, pgrad(n.kernel_param),
                          n.bias_param >= 0 ? pgrad(n.bias_param) : nullptr,
                          ws.scratch.data());
        break;
      }
      case Op::pool: {
        // ties route the adjoint to the lowest index of the window
        const Node& src = at(n.in0);
        const double* in = ws.val.data() + src.buf;
        double* din = ws.grad.data() + src.buf;
        for (int c = 0; c < n.channels; ++c) {
          const double* irow = in + static_cast<std::size_t>(c) * src.length;
          double* dirow = din + static_cast<std::size_t>(c) * src.length;
          const double* grow = g + static_cast<std::size_t>(c) * n.length;
          for (int o = 0; o < n.length; ++o) {
            int best = o * n.window;
            for (int k = 1; k < n.window; ++k)
              if (irow[o * n.window + k] > irow[best]) best = o * n.window + k;
            dirow[best] += grow[o];
          }
        }
        break;
      }
      case Op::add: {
        const Node& a = at(n.in0);
        const Node& b = at(n.in1);
        double* da = ws.grad.data() + a.buf;
        double* db = ws.grad.data() + b.buf;
        std::size_t sz = static_cast<std::size_t>(n.channels) * n.length;
        for (std::size_t i = 0; i < sz; ++i) {
          da[i] += g[i];
          db[i] += g[i];
        }
        break;
      }
      case Op::gather: {
        for (std::size_t j = 0; j < n.refs.size(); ++j)
          ws.grad[at(n.refs[j].first).buf + n.refs[j].second] += g[j];
        break;
      }
      case Op::softmax_dot: {
        const Node& src = at(n.in0);
        const double* v = ws.val.data() + src.buf;
        double* dv = ws.grad.data() + src.buf;
        double md = ws.val[n.buf];
        std::size_t k = static_cast<std::size_t>(src.length);
        if (n.logits_param < 0) {
          double u = g[0] / static_cast<double>(k);
          for (std::size_t j = 0; j < k; ++j) dv[j] += u;
        } else {
          std::vector<double> w;
          softmax_weights(params.values(n.logits_param), w);
          double* dl = pgrad(n.logits_param);
          for (std::size_t j = 0; j < k; ++j) {
            dv[j] += g[0] * w[j];
            dl[j] += g[0] * w[j] * (v[j] - md);
          }
        }
        break;
      }
      case Op::weighted_sse: {
        const Node& p = at(n.in0);
        const Node& t = at(n.in1);
        const double* pv = ws.val.data() + p.buf;
        const double* tv = ws.val.data() + t.buf;
        double* dp = ws.grad.data() + p.buf;
        double* dt = ws.grad.data() + t.buf;
        for (std::size_t j = 0; j < n.weights.size(); ++j) {
          double r = tv[j] - pv[j];
          dp[j] += g[0] * n.weights[j] * -2.0 * r;
          dt[j] += g[0] * n.weights[j] * 2.0 * r;
        }
        break;
      }
      case Op::combine: {
        for (std::size_t k = 0; k < n.terms.size(); ++k)
          ws.grad[at(n.terms[k]).buf] += g[0] * n.weights[k];
        break;
      }
    }
  }
}

void Adam::step(ParameterStore& params, std::span<const double> grads) {
  if (grads.size() != params.total_count())
    throw TrainingError("gradient size does not match parameter store");
  ++t_;
  double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::vector<double>& p = params.data();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    double gi = grads[i];
    if (!std::isfinite(gi)) {
      int id = params.id_covering(i);
      throw TrainingError("non-finite gradient for parameter '" +
                          (id >= 0 ? params.entry(id).name : std::string("?")) + "'");
    }
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * gi;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * gi * gi;
    double mhat = m_[i] / b1t;
    double vhat = v_[i] / b2t;
    p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    if (!std::isfinite(p[i])) {
      int id = params.id_covering(i);
      throw TrainingError("non-finite value for parameter '" +
                          (id >= 0 ? params.entry(id).name : std::string("?")) +
                          "' after optimizer step");
    }
  }
}

}  // namespace retinn
