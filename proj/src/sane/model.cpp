#include "zest/sane/model.hpp"

#include <string>

namespace zest::sane {

using num::as_eigen;

template <typename T>
BasicSaneModel<T>::BasicSaneModel(SaneConfig config)
    : config_(config),
      embed_w_("embed.w", config.features, config.d_model),
      embed_b_("embed.b", 1, config.d_model),
      sla_("sla", 1, config.d_model),
      positional_("pos", config.seq_len + 1, config.d_model),
      latent_w_("nl_l.w", config.d_model, config.latent_dim),
      latent_b_("nl_l.b", 1, config.latent_dim),
      attribute_w_("nl_lambda.w", config.latent_dim, config.attr_dim),
      attribute_b_("nl_lambda.b", 1, config.attr_dim),
      head_w_("head.w", config.attr_dim, config.num_classes),
      head_b_("head.b", 1, config.num_classes) {
  config_.validate();
  blocks_.reserve(config.encoders);
  for (std::size_t i = 0; i < config.encoders; ++i) {
    blocks_.emplace_back("block" + std::to_string(i), config.d_model, config.d_mlp);
    blocks_.back().ln1_gain.value.fill(T(1));
    blocks_.back().ln2_gain.value.fill(T(1));
  }
}

template <typename T>
void BasicSaneModel<T>::initialize(num::Rng& rng) {
  for (Parameter<T>* p : parameters()) {
    const std::string& n = p->name;
    const bool is_bias = n.ends_with(".b") || n.ends_with(".bq") || n.ends_with(".bk") ||
                         n.ends_with(".bv") || n.ends_with(".bo") || n.ends_with(".b1") ||
                         n.ends_with(".b2") || n.ends_with(".bias");
    if (n == "sla" || n == "pos") {
      num::normal_init(p->value, rng, 0.02);
    } else if (n.ends_with(".gain")) {
      p->value.fill(T(1));
    } else if (is_bias) {
      p->value.zero();
    } else {
      num::xavier_uniform(p->value, rng);
    }
    p->grad.zero();
  }
  trained_epochs = 0;
}

template <typename T>
std::vector<Parameter<T>*> BasicSaneModel<T>::parameters() {
  std::vector<Parameter<T>*> out{&embed_w_, &embed_b_, &sla_, &positional_};
  for (auto& b : blocks_) {
    out.push_back(&b.ln1_gain);
    out.push_back(&b.ln1_bias);
    for (auto* p : b.attention.parameters()) out.push_back(p);
    for (auto* p : {&b.ln2_gain, &b.ln2_bias, &b.w1, &b.b1, &b.w2, &b.b2}) out.push_back(p);
  }
  for (auto* p : {&latent_w_, &latent_b_, &attribute_w_, &attribute_b_, &head_w_, &head_b_}) {
    out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> BasicSaneModel<T>::parameters() const {
  auto mut = const_cast<BasicSaneModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
Tensor<T> BasicSaneModel<T>::block_forward(const EncoderBlock<T>& block, const Tensor<T>& e,
                                           BlockTrace<T>* trace) const {
  num::LayerNormCache<T>* ln1 = trace ? &trace->ln1 : nullptr;
  num::LayerNormCache<T>* ln2 = trace ? &trace->ln2 : nullptr;
  num::AttentionCache<T>* ac = trace ? &trace->attention : nullptr;
  Tensor<T> mid;
  Tensor<T> mlp_input;
  if (!config_.standard_residual) {
    // R1 = MHA(Norm(E)); R2 = MLP(Norm(E + R1)); E <- R2 + (E + R1)
    const Tensor<T> normed = num::layer_norm(e, block.ln1_gain.value, block.ln1_bias.value, ln1);
    const Tensor<T> r1 = num::multi_head_attention(normed, block.attention, config_.heads, ac);
    mid = num::add(e, r1);
    mlp_input = num::layer_norm(mid, block.ln2_gain.value, block.ln2_bias.value, ln2);
  } else {
    // mid = Norm(E + MHA(E)); E <- Norm(mid + MLP(mid))
    const Tensor<T> r1 = num::multi_head_attention(e, block.attention, config_.heads, ac);
    mid = num::layer_norm(num::add(e, r1), block.ln1_gain.value, block.ln1_bias.value, ln1);
    mlp_input = mid;
  }
  Tensor<T> hidden_pre = num::linear(mlp_input, block.w1.value, block.b1.value);
  Tensor<T> hidden = num::gelu(hidden_pre);
  const Tensor<T> r2 = num::linear(hidden, block.w2.value, block.b2.value);
  Tensor<T> out = num::add(mid, r2);
  if (config_.standard_residual) {
    out = num::layer_norm(out, block.ln2_gain.value, block.ln2_bias.value, ln2);
  }
  if (trace) {
    trace->mid = std::move(mid);
    trace->mlp_input = std::move(mlp_input);
    trace->hidden_pre = std::move(hidden_pre);
    trace->hidden = std::move(hidden);
  }
  return out;
}

template <typename T>
Tensor<T> BasicSaneModel<T>::block_backward(EncoderBlock<T>& block, const BlockTrace<T>& trace,
                                            const Tensor<T>& dout_in) {
  Tensor<T> dout = dout_in;
  if (config_.standard_residual) {
    dout = num::layer_norm_backward(trace.ln2, block.ln2_gain.value, dout, block.ln2_gain.grad,
                                    block.ln2_bias.grad);
  }
  // MLP branch
  Tensor<T> dhidden = num::linear_backward(trace.hidden, block.w2.value, dout, block.w2.grad, block.b2.grad);
  Tensor<T> dpre = num::gelu_backward(trace.hidden_pre, dhidden);
  Tensor<T> dmlp_in = num::linear_backward(trace.mlp_input, block.w1.value, dpre, block.w1.grad, block.b1.grad);

  if (!config_.standard_residual) {
    Tensor<T> dmid = dout;
    num::add_inplace(dmid, num::layer_norm_backward(trace.ln2, block.ln2_gain.value, dmlp_in,
                                                    block.ln2_gain.grad, block.ln2_bias.grad));
    Tensor<T> dnormed = num::multi_head_attention_backward(trace.attention, block.attention, dmid);
    Tensor<T> de = dmid;
    num::add_inplace(de, num::layer_norm_backward(trace.ln1, block.ln1_gain.value, dnormed,
                                                  block.ln1_gain.grad, block.ln1_bias.grad));
    return de;
  }
  Tensor<T> dmid = dout;
  num::add_inplace(dmid, dmlp_in);
  Tensor<T> dsum = num::layer_norm_backward(trace.ln1, block.ln1_gain.value, dmid, block.ln1_gain.grad,
                                            block.ln1_bias.grad);
  Tensor<T> de = dsum;
  num::add_inplace(de, num::multi_head_attention_backward(trace.attention, block.attention, dsum));
  return de;
}

template <typename T>
Tensor<T> BasicSaneModel<T>::encode(const Tensor<T>& x, ForwardTrace<T>* trace) const {
  if (x.rank() != 2 || x.rows() != config_.seq_len || x.cols() != config_.features) {
    throw num::ShapeError("sane: expected input " + std::to_string(config_.seq_len) + "x" +
                          std::to_string(config_.features) + ", got " + num::shape_string(x.shape()));
  }
  const Tensor<T> embedded = num::linear(x, embed_w_.value, embed_b_.value);
  Tensor<T> e = num::concat_rows(sla_.value, embedded);
  num::add_inplace(e, positional_.value);
  if (trace) trace->blocks.resize(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    e = block_forward(blocks_[i], e, trace ? &trace->blocks[i] : nullptr);
  }
  Tensor<T> pooled = num::mean_pool(e);
  if (trace) {
    trace->input = x;
    trace->encoded = std::move(e);
    trace->pooled = pooled;
  }
  return pooled;
}

template <typename T>
Tensor<T> BasicSaneModel<T>::latent_from_pooled(const Tensor<T>& pooled) const {
  return num::linear(pooled, latent_w_.value, latent_b_.value);
}

template <typename T>
Tensor<T> BasicSaneModel<T>::attribute_from_latent(const Tensor<T>& latent) const {
  return num::linear(latent, attribute_w_.value, attribute_b_.value);
}

template <typename T>
Tensor<T> BasicSaneModel<T>::logits_from_attribute(const Tensor<T>& attribute) const {
  return num::linear(attribute, head_w_.value, head_b_.value);
}

template <typename T>
SaneOutput<T> BasicSaneModel<T>::forward(const Tensor<T>& x) const {
  SaneOutput<T> out;
  const Tensor<T> pooled = encode(x);
  out.latent = latent_from_pooled(pooled);
  out.attribute = attribute_from_latent(out.latent);
  out.logits = logits_from_attribute(out.attribute);
  return out;
}

template <typename T>
SaneOutput<T> BasicSaneModel<T>::forward(const Tensor<T>& x, ForwardTrace<T>& trace) const {
  encode(x, &trace);
  trace.latent = latent_from_pooled(trace.pooled);
  trace.attribute = attribute_from_latent(trace.latent);
  trace.logits = logits_from_attribute(trace.attribute);
  return {trace.logits, trace.latent, trace.attribute};
}

template <typename T>
void BasicSaneModel<T>::backward(const ForwardTrace<T>& trace, const Tensor<T>& dlogits) {
  const Tensor<T> dattr =
      num::linear_backward(trace.attribute, head_w_.value, dlogits, head_w_.grad, head_b_.grad);
  const Tensor<T> dlatent =
      num::linear_backward(trace.latent, attribute_w_.value, dattr, attribute_w_.grad, attribute_b_.grad);
  const Tensor<T> dpooled =
      num::linear_backward(trace.pooled, latent_w_.value, dlatent, latent_w_.grad, latent_b_.grad);
  Tensor<T> de = num::mean_pool_backward(config_.seq_len + 1, dpooled);
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    de = block_backward(blocks_[i], trace.blocks[i], de);
  }
  if (!freeze_positional) num::add_inplace(positional_.grad, de);
  auto [dsla, dembedded] = num::concat_rows_backward(de, 1);
  num::add_inplace(sla_.grad, dsla);
  num::linear_backward(trace.input, embed_w_.value, dembedded, embed_w_.grad, embed_b_.grad);
}

template <typename T>
T BasicSaneModel<T>::batch_loss(std::span<const Tensor<T>* const> xs, std::span<const int> labels,
                                bool with_grad, std::vector<int>* predictions) {
  if (xs.size() != labels.size() || xs.empty()) {
    throw std::invalid_argument("sane: batch and label sizes differ or batch is empty");
  }
  const T inv_batch = T(1) / static_cast<T>(xs.size());
  T total = 0;
  if (predictions) predictions->clear();
  ForwardTrace<T> trace;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const int label = labels[i];
    Tensor<T> dlogits;
    SaneOutput<T> out = with_grad ? forward(*xs[i], trace) : forward(*xs[i]);
    total += num::cross_entropy(out.logits, std::span<const int>(&label, 1), with_grad ? &dlogits : nullptr);
    if (predictions) predictions->push_back(argmax_row(out.logits));
    if (with_grad) {
      for (T& v : dlogits.values()) v *= inv_batch;
      backward(trace, dlogits);
    }
  }
  return total * inv_batch;
}

template class BasicSaneModel<float>;
template class BasicSaneModel<double>;

}  // namespace zest::sane
