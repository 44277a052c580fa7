#include "shield/pcm.hpp"

#include <cmath>

#include "shield/errors.hpp"

namespace shield {

Matrix uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = u(rng);
  return m;
}

std::vector<Param*> PcmParams::params() { return {&w_vision, &b_vision, &w_text, &b_text}; }

PcmParams PcmParams::init(std::size_t d, std::size_t d_v, std::size_t d_t, std::mt19937_64& rng) {
  if (d == 0 || d_v == 0 || d_t == 0) throw ConfigError("pcm: dims must be >= 1");
  PcmParams p;
  p.w_vision = Param("pcm.w_vision", uniform_fan_in(d, d_v, d_v, rng));
  p.b_vision = Param("pcm.b_vision", uniform_fan_in(d, 1, d_v, rng));
  p.w_text = Param("pcm.w_text", uniform_fan_in(d, d_t, d_t, rng));
  p.b_text = Param("pcm.b_text", uniform_fan_in(d, 1, d_t, rng));
  return p;
}

std::pair<Var, Var> pool_inputs(Var patch_embeddings, Var token_embeddings) {
  return {ad::mean_pool(patch_embeddings), ad::mean_pool(token_embeddings)};
}

Var pcm_fuse(Var h_v, Var h_t, Tape& tape, PcmParams& params) {
  if (h_v.rows() != params.vision_dim() || h_t.rows() != params.text_dim()) {
    throw ShapeError("pcm_fuse: inputs " + shape_string(h_v.value()) + " / " +
                     shape_string(h_t.value()) + " do not match params (d_v=" +
                     std::to_string(params.vision_dim()) + ", d_t=" +
                     std::to_string(params.text_dim()) + ")");
  }
  Var vision = ad::linear(h_v, tape.param(params.w_vision), tape.param(params.b_vision));
  Var text = ad::linear(h_t, tape.param(params.w_text), tape.param(params.b_text));
  return ad::hadamard(vision, text);
}

Var pcm_forward(const Matrix& patch_embeddings, const Matrix& token_embeddings, Tape& tape,
                PcmParams& params) {
  auto [h_v, h_t] = pool_inputs(tape.constant(patch_embeddings), tape.constant(token_embeddings));
  return pcm_fuse(h_v, h_t, tape, params);
}

}  // namespace shield
