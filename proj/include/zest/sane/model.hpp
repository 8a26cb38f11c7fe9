#pragma once

#include "zest/numerics/attention.hpp"
#include "zest/numerics/ops.hpp"
#include "zest/numerics/param.hpp"
#include "zest/numerics/rng.hpp"
#include "zest/sane/config.hpp"

#include <memory>
#include <span>
#include <vector>

namespace zest::sane {

using num::Parameter;
using num::Tensor;

template <typename T>
struct EncoderBlock {
  Parameter<T> ln1_gain, ln1_bias;
  num::AttentionWeights<T> attention;
  Parameter<T> ln2_gain, ln2_bias;
  Parameter<T> w1, b1, w2, b2;

  EncoderBlock(const std::string& prefix, std::size_t width, std::size_t hidden)
      : ln1_gain(prefix + ".ln1.gain", 1, width),
        ln1_bias(prefix + ".ln1.bias", 1, width),
        attention(prefix + ".attn", width),
        ln2_gain(prefix + ".ln2.gain", 1, width),
        ln2_bias(prefix + ".ln2.bias", 1, width),
        w1(prefix + ".mlp.w1", width, hidden),
        b1(prefix + ".mlp.b1", 1, hidden),
        w2(prefix + ".mlp.w2", hidden, width),
        b2(prefix + ".mlp.b2", 1, width) {}
};

/// Intermediate values of one encoder block kept for the backward pass.
template <typename T>
struct BlockTrace {
  num::LayerNormCache<T> ln1, ln2;
  num::AttentionCache<T> attention;
  Tensor<T> mid;          // E + R1 (pre-norm) or Norm(E + R1) (post-norm)
  Tensor<T> mlp_input;    // Norm(E + R1) (pre-norm) or mid (post-norm)
  Tensor<T> hidden_pre;   // before GELU
  Tensor<T> hidden;       // after GELU
};

template <typename T>
struct ForwardTrace {
  Tensor<T> input;                  // n x f
  std::vector<BlockTrace<T>> blocks;
  Tensor<T> encoded;                // (n+1) x d_model after the last block
  Tensor<T> pooled;                 // 1 x d_model
  Tensor<T> latent;                 // l, 1 x M
  Tensor<T> attribute;              // lambda, 1 x N
  Tensor<T> logits;                 // 1 x |S|
};

template <typename T>
struct SaneOutput {
  Tensor<T> logits;
  Tensor<T> latent;
  Tensor<T> attribute;
};

/// Self-attention network encoder: packet embedding, a prepended learnable
/// sequence-level aggregation (SLA) row, learnable positional embedding,
/// `encoders` blocks, average pooling over all rows, then
/// pooled -> l (NL_l) -> lambda (NL_lambda) -> class logits.
template <typename T>
class BasicSaneModel {
 public:
  explicit BasicSaneModel(SaneConfig config);

  /// Xavier-uniform projections, zero biases, unit norm gains,
  /// N(0, 0.02) SLA and positional rows.
  void initialize(num::Rng& rng);

  const SaneConfig& config() const noexcept { return config_; }

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  SaneOutput<T> forward(const Tensor<T>& x) const;
  SaneOutput<T> forward(const Tensor<T>& x, ForwardTrace<T>& trace) const;

  /// Accumulates parameter gradients for d(loss)/d(logits) of one sample.
  void backward(const ForwardTrace<T>& trace, const Tensor<T>& dlogits);

  /// Mean cross-entropy over a batch. With `with_grad`, gradients of the
  /// mean loss are accumulated into the parameters. Predicted classes are
  /// written to `predictions` when non-null.
  T batch_loss(std::span<const Tensor<T>* const> xs, std::span<const int> labels, bool with_grad,
               std::vector<int>* predictions = nullptr);

  // Individual stages, used by the feature extractors.
  Tensor<T> encode(const Tensor<T>& x, ForwardTrace<T>* trace = nullptr) const;
  Tensor<T> latent_from_pooled(const Tensor<T>& pooled) const;
  Tensor<T> attribute_from_latent(const Tensor<T>& latent) const;
  Tensor<T> logits_from_attribute(const Tensor<T>& attribute) const;

  /// When set, the positional embedding receives no gradient.
  bool freeze_positional = false;

  /// Number of completed training epochs; 0 means untrained.
  std::size_t trained_epochs = 0;

  template <typename U>
  BasicSaneModel<U> cast() const {
    BasicSaneModel<U> out(config_);
    num::copy_values(out.parameters(), parameters());
    out.freeze_positional = freeze_positional;
    out.trained_epochs = trained_epochs;
    return out;
  }

 private:
  Tensor<T> block_forward(const EncoderBlock<T>& block, const Tensor<T>& e, BlockTrace<T>* trace) const;
  Tensor<T> block_backward(EncoderBlock<T>& block, const BlockTrace<T>& trace, const Tensor<T>& dout);

  SaneConfig config_;
  Parameter<T> embed_w_, embed_b_;
  Parameter<T> sla_;
  Parameter<T> positional_;
  std::vector<EncoderBlock<T>> blocks_;
  Parameter<T> latent_w_, latent_b_;
  Parameter<T> attribute_w_, attribute_b_;
  Parameter<T> head_w_, head_b_;
};

using SaneModel = BasicSaneModel<float>;

extern template class BasicSaneModel<float>;
extern template class BasicSaneModel<double>;

/// Index of the largest logit; ties go to the lowest index.
template <typename T>
int argmax_row(const Tensor<T>& logits, std::size_t row = 0) {
  auto r = logits.row(row);
  std::size_t best = 0;
  for (std::size_t c = 1; c < r.size(); ++c) {
    if (r[c] > r[best]) best = c;
  }
  return static_cast<int>(best);
}

}  // namespace zest::sane
