#pragma once

#include <array>
#include <vector>

#include "mpcnn/garble.hpp"
#include "mpcnn/session.hpp"

namespace mpcnn {

// dealer: precomputed OT correlations (the production path)
// trusted_test: both labels cross the wire and the receiver picks locally;
// only for tests that compare against the dealer route
enum class OtMode : u8 { dealer, trusted_test };

inline constexpr u8 kTagOt = 3;

// one message per direction regardless of batch size
void ot_send_labels(Session& s, const std::vector<std::array<Block, 2>>& pairs, OtMode mode);
std::vector<Block> ot_recv_labels(Session& s, const std::vector<u8>& choices, OtMode mode);

}  // namespace mpcnn
