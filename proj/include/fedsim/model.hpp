#pragma once

#include <string>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

enum class EncoderKind { Mlp, PaperCnn };

// Architecture description. The model is always encoder + linear-softmax
// classifier; the classifier lives in ParameterSet, not here.
struct EncoderSpec {
  EncoderKind kind = EncoderKind::Mlp;
  std::vector<int> input_shape;   // {d} for Mlp, {C,H,W} for PaperCnn
  std::vector<int> mlp_hidden{32};  // dense layer widths; last = representation
  int cnn_channels = 3;             // filters per conv layer
  int fc_width = 128;               // CNN fully-connected width (representation)
  double dropout = 0.5;             // CNN dropout rate after the FC layer

  static EncoderSpec mlp(int input_dim, std::vector<int> hidden);
  static EncoderSpec paper_cnn(int channels, int height, int width);

  int input_numel() const;
  int representation_dim() const;
};

// Encoder parameters plus the per-label classifier (weight row + bias per
// label). The unit of FL communication; copy to send.
struct ParameterSet {
  std::vector<Tensor> encoder;  // weight/bias pairs in layer order
  Tensor classifier_w;          // labels x representation
  Tensor classifier_b;          // labels

  std::size_t num_labels() const { return classifier_w.rows(); }

  std::vector<Tensor*> all_tensors();
  std::vector<const Tensor*> all_tensors() const;
  std::size_t total_parameters() const;
  bool congruent_with(const ParameterSet& o) const;
  bool all_finite() const;
};

bool operator==(const ParameterSet& a, const ParameterSet& b);

// Xavier-uniform weights, zero biases.
ParameterSet init_params(const EncoderSpec& spec, int num_labels, Rng& rng);
ParameterSet zeros_like(const ParameterSet& p);

// Intermediate state of one forward pass; required by backward().
struct ForwardContext {
  std::vector<Tensor> acts;                  // acts[0] = input batch
  std::vector<std::vector<int>> pool_argmax;
  Tensor dropout_mask;                       // scaled inverted-dropout mask
  Tensor representations;                    // B x r
  Tensor logits;                             // B x L, after optional scaling
  Tensor probabilities;                      // B x L
  bool train_mode = false;
  std::vector<double> logit_scale;           // empty = no scaling
};

// Runs encoder + classifier + softmax. train_mode enables dropout (rng
// required when the spec has any). logit_scale, when non-empty, multiplies
// logit column y by logit_scale[y] before the softmax (FedRS-style).
ForwardContext forward(const ParameterSet& params, const EncoderSpec& spec,
                       const Tensor& batch, bool train_mode,
                       Rng* dropout_rng = nullptr,
                       const std::vector<double>& logit_scale = {});

// Mean cross-entropy over the batch; probabilities floored at 1e-12 in log.
double cross_entropy(const Tensor& probabilities,
                     const std::vector<int>& labels);

// Gradient of mean cross-entropy w.r.t. every parameter, via the saved
// context. Shape-congruent with `params`.
ParameterSet backward(const ParameterSet& params, const EncoderSpec& spec,
                      const ForwardContext& ctx,
                      const std::vector<int>& labels);

// Max relative error between analytic and central finite-difference gradients
// over >= min_coords sampled parameter coordinates (all of them if fewer).
double grad_check(const ParameterSet& params, const EncoderSpec& spec,
                  const Tensor& batch, const std::vector<int>& labels,
                  Rng& rng, int min_coords = 200, double epsilon = 1e-4);

// Smallest distance from any relu pre-activation to zero, or from any pooling
// window's winner to its runner-up. Finite differences are only trustworthy
// when this margin comfortably exceeds the probe step.
double kink_margin(const ParameterSet& params, const EncoderSpec& spec,
                   const Tensor& batch);

}  // namespace fedsim
