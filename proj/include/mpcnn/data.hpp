#pragma once

#include <string>
#include <vector>

#include "mpcnn/common.hpp"

namespace mpcnn {

struct Dataset {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<float> images;  // count x rows x cols, scaled to [0, 1]
  std::vector<u8> labels;

  std::size_t dim() const { return rows * cols; }
};

// IDX pair loader (0x803 image files, 0x801 label files, big-endian header).
// Malformed input raises FormatError naming the offending byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// round-trips through the same layout load_idx reads
void write_idx(const Dataset& d, const std::string& images_path,
               const std::string& labels_path);

struct Corpus {
  Dataset train, test;
};

// Deterministic stand-in corpus when no real digit scans are available:
// one random prototype per class, box-blurred into smooth shapes, then each
// sample is a wrapped shift of its prototype plus Gaussian pixel noise.
// Train and test share the prototypes, so accuracy is meaningful.
Corpus synth_corpus(std::size_t train_count, std::size_t test_count, u64 seed,
                    std::size_t classes = 10);

// keep the first n records
void subset(Dataset& d, std::size_t n);

// 2x2 average pooling; both image dimensions must be even
void downsample2(Dataset& d);

}  // namespace mpcnn
