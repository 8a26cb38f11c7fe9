#include "zest/sane/config.hpp"

#include <stdexcept>
#include <string>

namespace zest::sane {

void SaneConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("SaneConfig: " + what); };
  if (seq_len == 0) fail("seq_len must be >= 1");
  if (features == 0) fail("features must be >= 1");
  if (encoders == 0) fail("encoders must be >= 1");
  if (heads == 0 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if (d_mlp == 0) fail("d_mlp must be >= 1");
  if (attr_dim == 0 || attr_dim >= latent_dim) fail("attr_dim must satisfy 1 <= N < M");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
}

nlohmann::json SaneConfig::to_json() const {
  return {{"seq_len", seq_len},         {"features", features},
          {"d_model", d_model},         {"encoders", encoders},
          {"heads", heads},             {"d_mlp", d_mlp},
          {"latent_dim", latent_dim},   {"attr_dim", attr_dim},
          {"num_classes", num_classes}, {"batch_size", batch_size},
          {"epochs", epochs},           {"learning_rate", learning_rate},
          {"seed", seed},               {"standard_residual", standard_residual}};
}

SaneConfig SaneConfig::from_json(const nlohmann::json& j) {
  SaneConfig c;
  c.seq_len = j.value("seq_len", c.seq_len);
  c.features = j.value("features", c.features);
  c.d_model = j.value("d_model", c.d_model);
  c.encoders = j.value("encoders", c.encoders);
  c.heads = j.value("heads", c.heads);
  c.d_mlp = j.value("d_mlp", c.d_mlp);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.attr_dim = j.value("attr_dim", c.attr_dim);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.standard_residual = j.value("standard_residual", c.standard_residual);
  return c;
}

}  // namespace zest::sane
