#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "eapo/envs.hpp"
#include "eapo/net.hpp"

namespace eapo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to rebuild a trained network and its environment.
// Byte layout is documented in docs/formats.md.
struct Checkpoint {
  NetworkConfig network;
  ParameterLayout layout;
  std::vector<double> params;
  PopArtStats value_stats;
  PopArtStats entropy_stats;
  std::string env_name;
  EnvOptions env_options;
  std::uint64_t seed = 0;
  std::int64_t global_step = 0;
};

Checkpoint make_checkpoint(const DualHeadNetwork& net, const std::string& env_name,
                           const EnvOptions& env_options, std::uint64_t seed,
                           std::int64_t global_step);
DualHeadNetwork restore_network(const Checkpoint& checkpoint);

// Throws Error{kIo} on stream failure, Error{kParse} on a bad magic, version or
// a layout that disagrees with the network config.
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace eapo
