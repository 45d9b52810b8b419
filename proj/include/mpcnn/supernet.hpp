#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpcnn/oracle.hpp"
#include "mpcnn/softmax.hpp"

namespace mpcnn {

// Candidate units of a mixed layer. Convolutions run along the feature axis
// with same-padding, the pooling unit is a stride-1 windowed maximum over the
// configured 2-D view, so every unit preserves the layer width.
enum class UnitKind : u8 {
  conv3x3 = 0,
  conv5x5 = 1,
  fully_connected = 2,
  maxpool2x2 = 3,
  identity = 4,
};

const char* unit_name(UnitKind k);

// which split a reported loss was measured on
enum class LossKind : u8 { arch_loss = 0, weight_loss = 1 };

struct SupernetConfig {
  std::size_t input_dim = 196;  // 14x14 downsampled images, flattened
  std::size_t width = 32;       // common feature width of every searched layer
  std::size_t classes = 2;
  std::size_t layers = 2;  // N searched layers
  std::vector<UnitKind> units = {UnitKind::conv3x3, UnitKind::fully_connected,
                                 UnitKind::identity};  // M candidates per layer
  std::size_t pool_rows = 8, pool_cols = 4;            // 2-D view for maxpool2x2

  std::size_t unit_count() const { return units.size(); }
  void validate() const;
};

struct TrainConfig {
  int epochs = 3;       // E
  double eta_a = 0.1;   // architecture learning rate
  double eta_w = 0.1;   // weight learning rate
  std::size_t batch = 8;
  int L = 4;            // Softmax exponent, threaded into SoftmaxConfig
  u64 seed = 1;

  SoftmaxConfig softmax() const;
  void validate() const;
};

struct Architecture {
  std::vector<u32> units;  // chosen unit index per layer
  bool operator==(const Architecture&) const = default;
};

std::string describe(const Architecture& a, const SupernetConfig& cfg);

// One party's share of the super-net parameters. Weight tensors come
// pre-shared from the dealer; alpha rows start at a shared constant.
struct SuperNet {
  SupernetConfig cfg;
  std::vector<u64> stem;                       // input_dim x width
  std::vector<u64> head;                       // width x classes
  std::vector<std::vector<u64>> alpha;         // [layer] -> M entries
  std::vector<std::vector<std::vector<u64>>> w;  // [layer][unit] -> params
};

SuperNet init_supernet(Session& s, const SupernetConfig& cfg);

// mixing forward of one layer: sum_j p_j * unit_j(x) with p the approximated
// Softmax of the layer's alpha row; x is batch x width, row-major
std::vector<u64> mixed_layer_forward(Session& s, SuperNet& net, std::size_t layer,
                                     std::span<const u64> x, std::size_t batch,
                                     const SoftmaxConfig& scfg);

// stem, every mixed layer, then classifier head probabilities
std::vector<u64> supernet_forward(Session& s, SuperNet& net, std::span<const u64> x,
                                  std::size_t batch, const SoftmaxConfig& scfg);

// one SGD step on the weight shares from the training batch; returns the
// batch cross-entropy share (the per-epoch L_W reporting hook)
std::vector<u64> update_weights(Session& s, SuperNet& net, std::span<const u64> x,
                                std::span<const u64> y, std::size_t batch,
                                const TrainConfig& cfg);

// one gradient step on the alpha shares from the validation batch; call
// after update_weights so the step sees the freshly updated weights
void update_arch(Session& s, SuperNet& net, std::span<const u64> x, std::span<const u64> y,
                 std::size_t batch, const TrainConfig& cfg);

// one party's shares of a data split: images and one-hot labels
struct SharedSplit {
  std::size_t count = 0, dim = 0, classes = 0;
  std::vector<u64> x;  // count x dim
  std::vector<u64> y;  // count x classes
};

// deterministic sharing of a plaintext split under a dedicated stream, so
// the lockstep oracle can reproduce party 0's halves
std::pair<SharedSplit, SharedSplit> share_split(std::span<const float> x, std::span<const u8> y,
                                                std::size_t dim, std::size_t classes, u64 seed,
                                                const FixedPointConfig& fp);

struct NasOutcome {
  SuperNet net;                       // final parameter shares, alpha included
  std::vector<u64> epoch_loss;        // one mean L_W share per completed epoch
  std::vector<u64> epoch_val_loss;    // matching mean L_A shares
  std::vector<double> epoch_seconds;  // cumulative wall-clock, local measurement
  int epochs_done = 0;
};

// Algorithm: per batch pair, a weight step on the training split followed by
// an architecture step on the validation split, for cfg.epochs epochs. Writes
// a PPNA checkpoint after every epoch when a path is given and resumes from a
// matching one; on mid-run resource loss the checkpoint survives the throw.
NasOutcome pp_nas_search(Session& s, const SupernetConfig& ncfg, const TrainConfig& tcfg,
                         const SharedSplit& train, const SharedSplit& val,
                         const std::string& checkpoint_path = "");

// The single sanctioned reveal of the search: both parties must pass consent,
// the reconstruction is audited, and each layer takes the arg max unit with
// ties resolved to the lowest index.
Architecture derive_architecture(Session& s, const std::vector<std::vector<u64>>& alpha,
                                 const SupernetConfig& cfg, bool consent);

// plaintext variants of the architecture choice, for oracle runs
Architecture argmax_architecture(const std::vector<double>& alpha, std::size_t layers,
                                 std::size_t m);

struct PlainSplit {
  std::size_t count = 0, dim = 0, classes = 0;
  std::vector<float> x;
  std::vector<u8> y;
};

struct OracleNasOutcome {
  std::vector<double> alpha;           // final alpha values, layer-major
  std::vector<double> epoch_loss;      // mean L_W per epoch
  std::vector<double> epoch_val_loss;  // mean L_A per epoch
  std::vector<double> epoch_seconds;   // cumulative wall-clock per epoch
  double val_accuracy = 0;             // final super-net accuracy on the val split
  Architecture arch;
};

// Single-process reference run of the same search graph. real_arithmetic is
// the plain DARTS-style baseline in doubles; fixed_point_mirror replays the
// dealer streams, party 0's masks and the shared shuffle, tracking every ring
// value and party-0 share exactly as the two-party execution produces them.
OracleNasOutcome nas_search_oracle(const SupernetConfig& ncfg, const TrainConfig& tcfg,
                                   const PlainSplit& train, const PlainSplit& val,
                                   OracleMode mode, u64 dealer_seed, const SessionConfig& scfg,
                                   u64 data_seed);

// pre-sizes dealer artifacts for a file-based search run
DealerPlan plan_nas_search(const SupernetConfig& ncfg, const TrainConfig& tcfg,
                           std::size_t train_count, std::size_t val_count);

}  // namespace mpcnn
