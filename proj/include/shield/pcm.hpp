#pragma once

// Presupposed context fusion: mean-pool each modality, map both through their
// own affine layer into a shared width d and multiply elementwise.
//
//   h_PC = (W1 h_v + b1) ⊙ (W2 h_t + b2)
//
// Agreeing signs reinforce, opposing signs produce negative components.

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

#include "shield/autodiff.hpp"

namespace shield {

struct PcmParams {
  Param w_vision;  // W1, d x d_v
  Param b_vision;  // b1, d x 1
  Param w_text;    // W2, d x d_t
  Param b_text;    // b2, d x 1

  std::size_t fused_dim() const { return w_vision.value.rows(); }
  std::size_t vision_dim() const { return w_vision.value.cols(); }
  std::size_t text_dim() const { return w_text.value.cols(); }
  std::vector<Param*> params();

  // Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static PcmParams init(std::size_t d, std::size_t d_v, std::size_t d_t, std::mt19937_64& rng);
};

// (mean over patch rows, mean over token rows)
std::pair<Var, Var> pool_inputs(Var patch_embeddings, Var token_embeddings);

Var pcm_fuse(Var h_v, Var h_t, Tape& tape, PcmParams& params);

// Convenience: pooling and fusion from raw embedding matrices.
Var pcm_forward(const Matrix& patch_embeddings, const Matrix& token_embeddings, Tape& tape,
                PcmParams& params);

// Fills a matrix with U(-bound, bound), bound = 1/sqrt(fan_in).
Matrix uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace shield
