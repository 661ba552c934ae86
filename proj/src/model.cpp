#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedsim/errors.hpp"
#include "fedsim/kernels.hpp"

namespace fedsim {

EncoderSpec EncoderSpec::mlp(int input_dim, std::vector<int> hidden) {
  EncoderSpec s;
  s.kind = EncoderKind::Mlp;
  s.input_shape = {input_dim};
  s.mlp_hidden = std::move(hidden);
  if (s.mlp_hidden.empty()) throw ConfigError("mlp needs at least one layer");
  return s;
}

EncoderSpec EncoderSpec::paper_cnn(int channels, int height, int width) {
  EncoderSpec s;
  s.kind = EncoderKind::PaperCnn;
  s.input_shape = {channels, height, width};
  return s;
}

int EncoderSpec::input_numel() const {
  int n = 1;
  for (int d : input_shape) n *= d;
  return n;
}

int EncoderSpec::representation_dim() const {
  return kind == EncoderKind::Mlp ? mlp_hidden.back() : fc_width;
}

namespace {

enum class LayerKind { Dense, Relu, Conv, MaxPool, Flatten, Dropout };

struct LayerDesc {
  LayerKind kind;
  int w_idx = -1, b_idx = -1;  // indices into ParameterSet::encoder
  // Shapes this layer sees (resolved at plan time).
  int in_c = 0, in_h = 0, in_w = 0;  // conv/pool
  int in_dim = 0, out_dim = 0;       // dense
};

// Resolves the spec into a flat layer plan with concrete shapes.
std::vector<LayerDesc> build_plan(const EncoderSpec& spec) {
  std::vector<LayerDesc> plan;
  int pidx = 0;
  if (spec.kind == EncoderKind::Mlp) {
    if (spec.input_shape.size() != 1)
      plan.push_back({LayerKind::Flatten});
    int in_dim = spec.input_numel();
    for (int width : spec.mlp_hidden) {
      LayerDesc d{LayerKind::Dense};
      d.w_idx = pidx++;
      d.b_idx = pidx++;
      d.in_dim = in_dim;
      d.out_dim = width;
      plan.push_back(d);
      plan.push_back({LayerKind::Relu});
      in_dim = width;
    }
    return plan;
  }
  // PaperCnn: conv conv pool conv conv pool flatten fc dropout.
  if (spec.input_shape.size() != 3)
    throw ConfigError("cnn encoder expects {C,H,W} input shape");
  int c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
  auto conv = [&](int out_c) {
    LayerDesc d{LayerKind::Conv};
    d.w_idx = pidx++;
    d.b_idx = pidx++;
    d.in_c = c;
    d.in_h = h;
    d.in_w = w;
    d.out_dim = out_c;
    plan.push_back(d);
    plan.push_back({LayerKind::Relu});
    c = out_c;
  };
  auto pool = [&] {
    LayerDesc d{LayerKind::MaxPool};
    d.in_c = c;
    d.in_h = h;
    d.in_w = w;
    plan.push_back(d);
    h /= 2;
    w /= 2;
  };
  conv(spec.cnn_channels);
  conv(spec.cnn_channels);
  pool();
  conv(spec.cnn_channels);
  conv(spec.cnn_channels);
  pool();
  plan.push_back({LayerKind::Flatten});
  LayerDesc fc{LayerKind::Dense};
  fc.w_idx = pidx++;
  fc.b_idx = pidx++;
  fc.in_dim = c * h * w;
  fc.out_dim = spec.fc_width;
  plan.push_back(fc);
  plan.push_back({LayerKind::Relu});
  plan.push_back({LayerKind::Dropout});
  return plan;
}

const char* layer_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dropout: return "dropout";
  }
  return "?";
}

void check_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite())
    throw NumericalError("non-finite activation in layer " + where);
}

Tensor xavier(std::vector<std::size_t> shape, int fan_in, int fan_out,
              Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

std::vector<Tensor*> ParameterSet::all_tensors() {
  std::vector<Tensor*> out;
  out.reserve(encoder.size() + 2);
  for (auto& t : encoder) out.push_back(&t);
  out.push_back(&classifier_w);
  out.push_back(&classifier_b);
  return out;
}

std::vector<const Tensor*> ParameterSet::all_tensors() const {
  std::vector<const Tensor*> out;
  out.reserve(encoder.size() + 2);
  for (const auto& t : encoder) out.push_back(&t);
  out.push_back(&classifier_w);
  out.push_back(&classifier_b);
  return out;
}

std::size_t ParameterSet::total_parameters() const {
  std::size_t n = 0;
  for (const Tensor* t : all_tensors()) n += t->numel();
  return n;
}

bool ParameterSet::congruent_with(const ParameterSet& o) const {
  if (encoder.size() != o.encoder.size()) return false;
  for (std::size_t i = 0; i < encoder.size(); ++i)
    if (!encoder[i].same_shape(o.encoder[i])) return false;
  return classifier_w.same_shape(o.classifier_w) &&
         classifier_b.same_shape(o.classifier_b);
}

bool ParameterSet::all_finite() const {
  for (const Tensor* t : all_tensors())
    if (!t->all_finite()) return false;
  return true;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  return a.encoder == b.encoder && a.classifier_w == b.classifier_w &&
         a.classifier_b == b.classifier_b;
}

ParameterSet init_params(const EncoderSpec& spec, int num_labels, Rng& rng) {
  if (num_labels < 1) throw ConfigError("model needs at least one label");
  ParameterSet p;
  for (const LayerDesc& d : build_plan(spec)) {
    if (d.kind == LayerKind::Dense) {
      p.encoder.push_back(xavier({std::size_t(d.out_dim), std::size_t(d.in_dim)},
                                 d.in_dim, d.out_dim, rng));
      p.encoder.emplace_back(std::vector<std::size_t>{std::size_t(d.out_dim)});
    } else if (d.kind == LayerKind::Conv) {
      const int fan_in = d.in_c * 9, fan_out = d.out_dim * 9;
      p.encoder.push_back(xavier(
          {std::size_t(d.out_dim), std::size_t(d.in_c), 3, 3}, fan_in, fan_out,
          rng));
      p.encoder.emplace_back(std::vector<std::size_t>{std::size_t(d.out_dim)});
    }
  }
  const int r = spec.representation_dim();
  p.classifier_w = xavier({std::size_t(num_labels), std::size_t(r)}, r,
                          num_labels, rng);
  p.classifier_b = Tensor({std::size_t(num_labels)});
  return p;
}

ParameterSet zeros_like(const ParameterSet& p) {
  ParameterSet z;
  z.encoder.reserve(p.encoder.size());
  for (const Tensor& t : p.encoder) z.encoder.push_back(Tensor(t.shape));
  z.classifier_w = Tensor(p.classifier_w.shape);
  z.classifier_b = Tensor(p.classifier_b.shape);
  return z;
}

ForwardContext forward(const ParameterSet& params, const EncoderSpec& spec,
                       const Tensor& batch, bool train_mode, Rng* dropout_rng,
                       const std::vector<double>& logit_scale) {
  if (batch.rank() < 2 || int(batch.numel() / batch.rows()) != spec.input_numel())
    throw ConfigError("batch shape does not match encoder input shape");
  const std::size_t B = batch.rows();
  ForwardContext ctx;
  ctx.train_mode = train_mode;
  ctx.logit_scale = logit_scale;
  ctx.acts.push_back(batch);

  const auto plan = build_plan(spec);
  for (const LayerDesc& d : plan) {
    const Tensor& x = ctx.acts.back();
    switch (d.kind) {
      case LayerKind::Dense: {
        Tensor y({B, std::size_t(d.out_dim)});
        kernels::dense_forward(x.data.data(),
                               params.encoder[d.w_idx].data.data(),
                               params.encoder[d.b_idx].data.data(),
                               y.data.data(), int(B), d.in_dim, d.out_dim);
        check_finite(y, layer_name(d.kind));
        ctx.acts.push_back(std::move(y));
        break;
      }
      case LayerKind::Relu: {
        Tensor y(x.shape);
        kernels::relu_forward(x.data.data(), y.data.data(), x.numel());
        ctx.acts.push_back(std::move(y));
        break;
      }
      case LayerKind::Conv: {
        Tensor y({B, std::size_t(d.out_dim), std::size_t(d.in_h),
                  std::size_t(d.in_w)});
        kernels::conv3x3_forward(x.data.data(),
                                 params.encoder[d.w_idx].data.data(),
                                 params.encoder[d.b_idx].data.data(),
                                 y.data.data(), int(B), d.in_c, d.in_h, d.in_w,
                                 d.out_dim);
        check_finite(y, layer_name(d.kind));
        ctx.acts.push_back(std::move(y));
        break;
      }
      case LayerKind::MaxPool: {
        Tensor y({B, std::size_t(d.in_c), std::size_t(d.in_h / 2),
                  std::size_t(d.in_w / 2)});
        std::vector<int> argmax(y.numel());
        kernels::maxpool2_forward(x.data.data(), y.data.data(), argmax.data(),
                                  int(B), d.in_c, d.in_h, d.in_w);
        ctx.pool_argmax.push_back(std::move(argmax));
        ctx.acts.push_back(std::move(y));
        break;
      }
      case LayerKind::Flatten: {
        Tensor y = x;
        y.shape = {B, x.numel() / B};
        ctx.acts.push_back(std::move(y));
        break;
      }
      case LayerKind::Dropout: {
        if (train_mode && spec.dropout > 0.0) {
          if (!dropout_rng)
            throw UsageError("train-mode forward with dropout needs an rng");
          const double keep = 1.0 - spec.dropout;
          Tensor mask(x.shape);
          for (std::size_t i = 0; i < mask.numel(); ++i)
            mask[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
          Tensor y(x.shape);
          for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x[i] * mask[i];
          ctx.dropout_mask = std::move(mask);
          ctx.acts.push_back(std::move(y));
        } else {
          ctx.acts.push_back(x);
        }
        break;
      }
    }
  }

  ctx.representations = ctx.acts.back();
  const std::size_t L = params.num_labels();
  if (!logit_scale.empty() && logit_scale.size() != L)
    throw ConfigError("logit scale length does not match label count");
  ctx.logits = Tensor({B, L});
  kernels::dense_forward(ctx.representations.data.data(),
                         params.classifier_w.data.data(),
                         params.classifier_b.data.data(),
                         ctx.logits.data.data(), int(B),
                         int(ctx.representations.cols()), int(L));
  if (!logit_scale.empty())
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t y = 0; y < L; ++y) ctx.logits.at(i, y) *= logit_scale[y];
  check_finite(ctx.logits, "classifier");
  ctx.probabilities = Tensor({B, L});
  kernels::softmax_rows(ctx.logits.data.data(), ctx.probabilities.data.data(),
                        int(B), int(L));
  return ctx;
}

double cross_entropy(const Tensor& probabilities,
                     const std::vector<int>& labels) {
  const std::size_t B = probabilities.rows(), L = probabilities.cols();
  if (labels.size() != B)
    throw UsageError("label count does not match batch size");
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const int y = labels[i];
    if (y < 0 || std::size_t(y) >= L)
      throw UsageError("label index " + std::to_string(y) +
                       " outside classifier rows (broken reverse index?)");
    total += -std::log(std::max(probabilities.at(i, y), 1e-12));
  }
  return total / double(B);
}

ParameterSet backward(const ParameterSet& params, const EncoderSpec& spec,
                      const ForwardContext& ctx,
                      const std::vector<int>& labels) {
  if (ctx.acts.empty() || ctx.probabilities.empty())
    throw UsageError("backward called without a forward context");
  const std::size_t B = ctx.probabilities.rows(), L = params.num_labels();
  if (labels.size() != B)
    throw UsageError("label count does not match batch size");

  ParameterSet grads = zeros_like(params);

  // d cross_entropy / d logits, including the optional column scaling.
  Tensor dlogits({B, L});
  for (std::size_t i = 0; i < B; ++i) {
    const int y = labels[i];
    if (y < 0 || std::size_t(y) >= L)
      throw UsageError("label index " + std::to_string(y) +
                       " outside classifier rows (broken reverse index?)");
    for (std::size_t c = 0; c < L; ++c) {
      double g = (ctx.probabilities.at(i, c) - (std::size_t(y) == c ? 1.0 : 0.0)) /
                 double(B);
      if (!ctx.logit_scale.empty()) g *= ctx.logit_scale[c];
      dlogits.at(i, c) = g;
    }
  }

  const std::size_t r = ctx.representations.cols();
  Tensor drep({B, r});
  kernels::dense_backward(ctx.representations.data.data(),
                          params.classifier_w.data.data(),
                          dlogits.data.data(), grads.classifier_w.data.data(),
                          grads.classifier_b.data.data(), drep.data.data(),
                          int(B), int(r), int(L));

  const auto plan = build_plan(spec);
  Tensor dy = std::move(drep);
  int pool_slot = int(ctx.pool_argmax.size());
  for (auto it = plan.rbegin(); it != plan.rend(); ++it) {
    const LayerDesc& d = *it;
    const std::size_t layer_index = std::size_t(plan.rend() - it - 1);
    const Tensor& x = ctx.acts[layer_index];
    switch (d.kind) {
      case LayerKind::Dense: {
        Tensor dx({B, std::size_t(d.in_dim)});
        kernels::dense_backward(x.data.data(),
                                params.encoder[d.w_idx].data.data(),
                                dy.data.data(),
                                grads.encoder[d.w_idx].data.data(),
                                grads.encoder[d.b_idx].data.data(),
                                dx.data.data(), int(B), d.in_dim, d.out_dim);
        dy = std::move(dx);
        break;
      }
      case LayerKind::Relu: {
        Tensor dx(x.shape);
        kernels::relu_backward(x.data.data(), dy.data.data(), dx.data.data(),
                               x.numel());
        dy = std::move(dx);
        break;
      }
      case LayerKind::Conv: {
        Tensor dx(x.shape);
        kernels::conv3x3_backward(x.data.data(),
                                  params.encoder[d.w_idx].data.data(),
                                  dy.data.data(), dx.data.data(),
                                  grads.encoder[d.w_idx].data.data(),
                                  grads.encoder[d.b_idx].data.data(), int(B),
                                  d.in_c, d.in_h, d.in_w, d.out_dim);
        dy = std::move(dx);
        break;
      }
      case LayerKind::MaxPool: {
        --pool_slot;
        Tensor dx(x.shape);
        kernels::maxpool2_backward(dy.data.data(),
                                   ctx.pool_argmax[pool_slot].data(),
                                   dx.data.data(), int(B), d.in_c, d.in_h,
                                   d.in_w);
        dy = std::move(dx);
        break;
      }
      case LayerKind::Flatten: {
        dy.shape = x.shape;
        break;
      }
      case LayerKind::Dropout: {
        if (!ctx.dropout_mask.empty()) {
          Tensor dx(x.shape);
          for (std::size_t i = 0; i < dx.numel(); ++i)
            dx[i] = dy[i] * ctx.dropout_mask[i];
          dy = std::move(dx);
        }
        break;
      }
    }
  }

  for (Tensor* t : grads.all_tensors())
    if (!t->all_finite()) throw NumericalError("non-finite gradient");
  return grads;
}

double kink_margin(const ParameterSet& params, const EncoderSpec& spec,
                   const Tensor& batch) {
  const ForwardContext ctx = forward(params, spec, batch, false);
  const auto plan = build_plan(spec);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Tensor& x = ctx.acts[i];
    if (plan[i].kind == LayerKind::Relu) {
      for (double v : x.data) margin = std::min(margin, std::abs(v));
    } else if (plan[i].kind == LayerKind::MaxPool) {
      const int C = plan[i].in_c, H = plan[i].in_h, W = plan[i].in_w;
      const std::size_t planes = x.numel() / (std::size_t(H) * W);
      (void)C;
      for (std::size_t bc = 0; bc < planes; ++bc) {
        const double* plane = x.data.data() + bc * H * W;
        for (int h = 0; h + 1 < H; h += 2)
          for (int w0 = 0; w0 + 1 < W; w0 += 2) {
            double best = -std::numeric_limits<double>::infinity();
            double second = best;
            for (int dh = 0; dh < 2; ++dh)
              for (int dw = 0; dw < 2; ++dw) {
                const double v = plane[(h + dh) * W + w0 + dw];
                if (v > best) {
                  second = best;
                  best = v;
                } else if (v > second) {
                  second = v;
                }
              }
            margin = std::min(margin, best - second);
          }
      }
    }
  }
  return margin;
}

double grad_check(const ParameterSet& params, const EncoderSpec& spec,
                  const Tensor& batch, const std::vector<int>& labels,
                  Rng& rng, int min_coords, double epsilon) {
  ForwardContext ctx = forward(params, spec, batch, /*train_mode=*/false);
  ParameterSet analytic = backward(params, spec, ctx, labels);

  ParameterSet probe = params;
  auto tensors = probe.all_tensors();
  auto grads = analytic.all_tensors();

  const std::size_t total = params.total_parameters();
  const std::size_t want = std::min<std::size_t>(total, std::size_t(min_coords));

  // Sample coordinates uniformly over the flattened parameter vector,
  // covering every tensor at least once.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t ti = 0; ti < tensors.size(); ++ti)
    if (tensors[ti]->numel() > 0)
      coords.emplace_back(ti, std::size_t(rng.uniform_int(int(tensors[ti]->numel()))));
  while (coords.size() < want) {
    std::size_t flat = std::size_t(rng.uniform_int(int(total)));
    std::size_t ti = 0;
    while (flat >= tensors[ti]->numel()) {
      flat -= tensors[ti]->numel();
      ++ti;
    }
    coords.emplace_back(ti, flat);
  }

  double worst = 0.0;
  for (auto [ti, i] : coords) {
    double& slot = (*tensors[ti])[i];
    const double saved = slot;
    slot = saved + epsilon;
    const double up =
        cross_entropy(forward(probe, spec, batch, false).probabilities, labels);
    slot = saved - epsilon;
    const double down =
        cross_entropy(forward(probe, spec, batch, false).probabilities, labels);
    slot = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = (*grads[ti])[i];
    const double rel = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace fedsim
