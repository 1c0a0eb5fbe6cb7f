#include "textres/textual/textual.hpp"

#include <algorithm>
#include <cmath>

#include "textres/core/error.hpp"
#include "textres/nn/ops.hpp"

namespace textres::textual {

int MlpDims::resolved_hidden() const {
  return hidden_dim > 0 ? hidden_dim : std::max(input_dim, output_dim());
}

Mlp Mlp::mapper(const MlpDims& dims, Seed seed, double output_std) {
  require(dims.input_dim > 0 && dims.n_words > 0 && dims.text_dim > 0, ErrorKind::InvalidParam,
          "mapper dims must be positive");
  Mlp m(dims, false);
  m.build(seed, output_std);
  return m;
}

Mlp Mlp::restorer(int n_words, int text_dim, Seed seed, double noise_scale, int hidden_dim) {
  MlpDims dims{n_words * text_dim, n_words, text_dim, hidden_dim};
  require(n_words > 0 && text_dim > 0, ErrorKind::InvalidParam, "restorer dims must be positive");
  Mlp m(dims, true);
  m.build(seed, noise_scale);
  return m;
}

void Mlp::build(Seed seed, double output_std) {
  Rng rng(seed, residual_ ? "textual.restorer_init" : "textual.mapper_init");
  const int hidden = dims_.resolved_hidden();
  const int widths[kLayers + 1] = {dims_.input_dim, hidden, hidden, hidden, dims_.output_dim()};
  for (int l = 0; l < kLayers; ++l) {
    const int in = widths[l], out = widths[l + 1];
    const double stddev = l + 1 < kLayers ? std::sqrt(2.0 / in) : output_std;
    params_.add("fc" + std::to_string(l) + ".w", rng.normal_tensor({out, in}, stddev));
    params_.add("fc" + std::to_string(l) + ".b", Tensor({out}));
  }
}

nn::Var Mlp::forward(nn::Graph& g, nn::Var x) const {
  require(g.value(x).size() == static_cast<std::size_t>(dims_.input_dim), ErrorKind::InvalidInput,
          "MLP expects input of size " + std::to_string(dims_.input_dim) + ", got " +
              std::to_string(g.value(x).size()));
  nn::Var h = nn::reshape(g, x, {dims_.input_dim});
  const nn::Var input = h;
  // Unit-norm image embeddings are rescaled to unit RMS per entry before the first layer.
  if (!residual_) h = nn::scale(g, h, std::sqrt(static_cast<double>(dims_.input_dim)));
  for (int l = 0; l < kLayers; ++l) {
    h = nn::linear(g, h, g.param(params_[2 * l]), g.param(params_[2 * l + 1]));
    if (l + 1 < kLayers) h = nn::gelu(g, h);
  }
  if (residual_) h = nn::add(g, input, h);
  return h;
}

Tensor Mlp::forward(const Tensor& x) const {
  nn::Graph g;
  return g.value(forward(g, g.constant(x)));
}

TextualEmbedding i2t_map(const encoders::ImageEmbedding& e_img, const Mlp& mapper) {
  nn::Graph g;
  return {g.value(i2t_map(g, g.constant(e_img.vector), mapper))};
}

nn::Var i2t_map(nn::Graph& g, nn::Var e_img, const Mlp& mapper) {
  require(!mapper.residual(), ErrorKind::InvalidInput, "i2t_map needs a mapper network");
  require(g.value(e_img).size() == static_cast<std::size_t>(mapper.input_dim()), ErrorKind::InvalidInput,
          "image embedding has " + std::to_string(g.value(e_img).size()) + " values, mapper expects " +
              std::to_string(mapper.input_dim()));
  return nn::reshape(g, mapper.forward(g, e_img), {mapper.dims().n_words, mapper.dims().text_dim});
}

TextualEmbedding textual_restore(const TextualEmbedding& e_txt, const Mlp& restorer) {
  nn::Graph g;
  return {g.value(textual_restore(g, g.constant(e_txt.words), restorer))};
}

nn::Var textual_restore(nn::Graph& g, nn::Var e_txt, const Mlp& restorer) {
  const Tensor& words = g.value(e_txt);
  require(words.rank() == 2 && words.dim(0) == restorer.dims().n_words && words.dim(1) == restorer.dims().text_dim,
          ErrorKind::InvalidInput,
          "textual embedding " + words.shape_string() + " does not match restorer (" +
              std::to_string(restorer.dims().n_words) + "," + std::to_string(restorer.dims().text_dim) + ")");
  return nn::reshape(g, restorer.forward(g, e_txt), {restorer.dims().n_words, restorer.dims().text_dim});
}

}  // namespace textres::textual
