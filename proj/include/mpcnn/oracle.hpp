#pragma once

#include <span>
#include <vector>

#include "mpcnn/ring.hpp"

namespace mpcnn {

enum class OracleMode : u8 { real_arithmetic = 0, fixed_point_mirror = 1 };

enum class SoftmaxKind : u8 { f1 = 0, f2 = 1 };

// Rounding model for fixed_point_mirror mode: values live on the 2^-f grid,
// encoding rounds half away from zero, and products are floored onto the grid
// like the share-local truncation. real_arithmetic passes values through
// untouched, so the same code path serves both modes.
struct FixedRounding {
  OracleMode mode = OracleMode::real_arithmetic;
  FixedPointConfig fp{};

  bool mirror() const { return mode == OracleMode::fixed_point_mirror; }
  double quantize(double v) const;
  double trunc(double v) const;
  double mul(double a, double b) const;
  double div(double a, double b) const;
};

double oracle_relu(double x);
double oracle_max(double a, double b);
std::vector<double> oracle_relu(std::span<const double> x);

// 2x2 stride-2 window maximum; rows and cols must be even
std::vector<double> oracle_maxpool(std::span<const double> x, std::size_t rows,
                                   std::size_t cols);

std::vector<double> oracle_softmax_true(std::span<const double> x);

// relu(x) / sum(relu(x)); throws NumericError when no entry is positive
std::vector<double> oracle_softmax_f1(std::span<const double> x);

// ratios of (1 + clip(relu(x), 0, xmax)/L)^L, the clear-value counterpart of
// the secure pipeline
std::vector<double> oracle_softmax_f2(std::span<const double> x, int L, double xmax = 16.0,
                                      const FixedRounding& r = {});

struct OracleNetwork {
  std::size_t in = 784;
  std::size_t hidden = 128;
  std::size_t out = 10;
};

struct OracleTrainConfig {
  SoftmaxKind kind = SoftmaxKind::f2;
  int L = 4;
  double lr = 0.05;
  int epochs = 5;
  std::size_t batch = 128;
  u64 seed = 7;
  double xmax = 16.0;
  double f1_eps = 3e-2;   // gradient damping for the division-form softmax
  double f1_floor = 1.0;  // denominator floor keeping early gradients bounded
  double b2_init = 0.5;   // output biases start where some logit is positive
  FixedRounding rounding{};
};

struct TrainTrajectory {
  std::vector<double> loss;           // mean training cross-entropy per epoch
  std::vector<double> accuracy;       // test accuracy after each epoch
  std::vector<double> epoch_seconds;  // cumulative wall-clock at each epoch boundary
  std::vector<double> w1, b1, w2, b2;
  bool overflow = false;  // non-finite value seen; recorded, never fatal
};

// Two-layer fully connected classifier trained with minibatch SGD and a
// hand-written backward pass. Deterministic under cfg.seed; epochs shorter
// than one batch leave the parameters untouched.
TrainTrajectory oracle_train(const OracleNetwork& net, std::span<const float> xtr,
                             std::span<const u8> ytr, std::span<const float> xte,
                             std::span<const u8> yte, const OracleTrainConfig& cfg);

}  // namespace mpcnn
