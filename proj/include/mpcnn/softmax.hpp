#pragma once

#include <span>
#include <vector>

#include "mpcnn/protocols.hpp"

namespace mpcnn {

struct SoftmaxConfig {
  int L = 4;                  // exponent of the power-function surrogate
  double xmax = 16.0;         // post-ReLU activation ceiling
  int mask_window_bits = 8;   // bounded re-share window, in ring units
  int recip_iters = 12;       // Newton iteration floor
  int recip_bound_log2 = 3;   // B: standalone reciprocal domain is [1/2, 2^B]
  bool literal_form = false;  // drop the additive term, comparison runs only

  // normalizer (L/e^L)^L; hat_exp_local(0) equals this
  double normalizer() const;
  void validate() const;
};

// scaled exponent surrogate ((L + x)/e^L)^L = normalizer * (1 + x/L)^L.
// Throws NumericError when the result cannot be represented.
double hat_exp_local(double x, const SoftmaxConfig& cfg);

// Unscaled power form (1 + x/L)^L used on the shared path. The normalizer
// cancels under the final division, and carrying it through fixed point
// would flush every product to zero at L = 6, so shares never see it.
double hat_exp_raw(double x, int L);

struct SoftmaxArtifacts {
  std::size_t rows = 0, n = 0;
  std::vector<u64> p;    // probability shares, row-major
  std::vector<u64> zt;   // clamped post-ReLU logits
  std::vector<u64> ind;  // window indicator 1{0 < x < xmax}
};

// The paper-style approximated Softmax, batched over independent rows:
// clamp-ReLU, bounded re-share, each party exponentiates its own piece
// locally, one Beaver product per element, then one scaled reciprocal of
// each row sum. Outputs reconstruct to hat(x_i)/sum_j hat(x_j) per row.
SoftmaxArtifacts approx_softmax_rows(Session& s, std::span<const u64> x, std::size_t rows,
                                     std::size_t n, const SoftmaxConfig& cfg,
                                     OtMode mode = OtMode::dealer);

inline SoftmaxArtifacts approx_softmax(Session& s, std::span<const u64> x,
                                       const SoftmaxConfig& cfg, OtMode mode = OtMode::dealer) {
  return approx_softmax_rows(s, x, 1, x.size(), cfg, mode);
}

// Newton reciprocal in scaled space: returns shares decoding to 2^scale_c / d,
// starting from the public iterate y0. Requires decoded d / 2^scale_c in (0, 2).
std::vector<u64> secure_reciprocal_scaled(Session& s, std::span<const u64> d, int scale_c,
                                          double y0, int iters);

// standalone contract: domain [1/2, 2^B]; the iterate starts at 2^-B, half
// of the classic 2^(1-B), which stalls exactly at d = 2^B
std::vector<u64> secure_reciprocal(Session& s, std::span<const u64> d, const SoftmaxConfig& cfg);

// Elementwise natural log of positive shared values: clamp to >= 1e-4, a
// garbled normalizer extracts (mantissa, exponent), then a fixed degree-4
// polynomial on [1, 2). Masks r_m, r_e come from party 0's mask stream,
// two draws per element after the clamp's ReLU draw.
std::vector<u64> secure_log(Session& s, std::span<const u64> q, OtMode mode = OtMode::dealer);

// mean over rows of -sum_i y_i log(clamp(p_i)); returns a single share
std::vector<u64> cross_entropy_loss(Session& s, std::span<const u64> p, std::span<const u64> y,
                                    std::size_t rows, std::size_t n,
                                    OtMode mode = OtMode::dealer);

// d(loss)/d(logits) for cross-entropy on the approximated Softmax:
// (p - y) * L/(L + zt) * indicator, elementwise over the batch
std::vector<u64> softmax_ce_backward(Session& s, const SoftmaxArtifacts& art,
                                     std::span<const u64> y, const SoftmaxConfig& cfg);

// general vector-Jacobian product through the approximated Softmax:
// (t_k - p_k * sum_j t_j) * L/(L + zt_k) * indicator with t = dLdp . p
std::vector<u64> softmax_backward(Session& s, std::span<const u64> dldp,
                                  const SoftmaxArtifacts& art, const SoftmaxConfig& cfg);

}  // namespace mpcnn
