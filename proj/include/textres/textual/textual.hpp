#pragma once

#include "textres/core/rng.hpp"
#include "textres/encoders/encoders.hpp"
#include "textres/nn/graph.hpp"
#include "textres/nn/params.hpp"

namespace textres::textual {

inline constexpr int kDefaultWords = 20;
inline constexpr char kMapperModuleId[] = "i2t_mapper";
inline constexpr char kRestorerModuleId[] = "textual_restorer";

/// N x D matrix of word embeddings used as conditioning tokens.
struct TextualEmbedding {
  Tensor words;  // (N, D)

  int n_words() const { return words.dim(0); }
  int dim() const { return words.dim(1); }
  static TextualEmbedding zeros(int n_words, int dim) { return {Tensor({n_words, dim})}; }
};

struct MlpDims {
  int input_dim = 0;
  int n_words = kDefaultWords;
  int text_dim = 12;
  int hidden_dim = 0;  // 0 selects max(input_dim, n_words * text_dim)

  int output_dim() const { return n_words * text_dim; }
  int resolved_hidden() const;
};

/// Four linear layers with GELU between them. The restorer variant adds its
/// input to the output (residual form).
class Mlp {
 public:
  static constexpr int kLayers = 4;

  /// Hidden layers use fan-in scaled normal init; the output layer uses std `output_std`.
  static Mlp mapper(const MlpDims& dims, Seed seed, double output_std = 0.02);
  /// Residual MLP whose output layer is `noise_scale` * N(0, 1); with 0 it is an exact identity.
  static Mlp restorer(int n_words, int text_dim, Seed seed, double noise_scale = 1e-3, int hidden_dim = 0);

  nn::Var forward(nn::Graph& g, nn::Var x) const;
  Tensor forward(const Tensor& x) const;

  const MlpDims& dims() const noexcept { return dims_; }
  bool residual() const noexcept { return residual_; }
  int input_dim() const noexcept { return dims_.input_dim; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }

 private:
  Mlp(MlpDims dims, bool residual) : dims_(dims), residual_(residual) {}
  void build(Seed seed, double output_std);

  MlpDims dims_;
  bool residual_;
  nn::ParamSet params_;
};

/// E_txt = reshape(M_i2t(e_img)).
TextualEmbedding i2t_map(const encoders::ImageEmbedding& e_img, const Mlp& mapper);
nn::Var i2t_map(nn::Graph& g, nn::Var e_img, const Mlp& mapper);

/// E'_txt = M_clean(E_txt), same shape.
TextualEmbedding textual_restore(const TextualEmbedding& e_txt, const Mlp& restorer);
nn::Var textual_restore(nn::Graph& g, nn::Var e_txt, const Mlp& restorer);

}  // namespace textres::textual
