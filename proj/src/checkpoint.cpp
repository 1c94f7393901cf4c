#include "eapo/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include "eapo/error.hpp"

namespace eapo {

namespace {

constexpr std::array<char, 8> kMagic{'E', 'A', 'P', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kMaxStringLength = 1u << 16;
constexpr std::uint64_t kMaxVectorLength = 1ull << 28;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  void uint(std::uint64_t v, int bytes) {
    char buf[8];
    for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(buf, bytes);
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > kMaxStringLength) throw Error(ErrorCode::kParse, "checkpoint string too long");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(ErrorCode::kParse, "checkpoint truncated");
    }
  }

 private:
  std::uint64_t uint(int bytes) {
    unsigned char buf[8];
    read(reinterpret_cast<char*>(buf), static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

void write_stats(Writer& w, const PopArtStats& s) {
  w.f64(s.mu);
  w.f64(s.nu);
  w.f64(s.beta);
  w.f64(s.sigma_min);
  w.f64(s.sigma_max);
}

PopArtStats read_stats(Reader& r) {
  PopArtStats s;
  s.mu = r.f64();
  s.nu = r.f64();
  s.beta = r.f64();
  s.sigma_min = r.f64();
  s.sigma_max = r.f64();
  return s;
}

}  // namespace

Checkpoint make_checkpoint(const DualHeadNetwork& net, const std::string& env_name,
                           const EnvOptions& env_options, std::uint64_t seed,
                           std::int64_t global_step) {
  Checkpoint c;
  c.network = net.config();
  c.layout = net.layout();
  c.params.assign(net.params().begin(), net.params().end());
  c.value_stats = net.value_stats;
  c.entropy_stats = net.entropy_stats;
  c.env_name = env_name;
  c.env_options = env_options;
  c.seed = seed;
  c.global_step = global_step;
  return c;
}

DualHeadNetwork restore_network(const Checkpoint& checkpoint) {
  DualHeadNetwork net(checkpoint.network);
  net.set_params(checkpoint.params);
  net.value_stats = checkpoint.value_stats;
  net.entropy_stats = checkpoint.entropy_stats;
  return net;
}

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);

  w.u32(static_cast<std::uint32_t>(c.network.input_size));
  w.u32(static_cast<std::uint32_t>(c.network.num_actions));
  w.u32(static_cast<std::uint32_t>(c.network.hidden.size()));
  for (int h : c.network.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(c.network.shared_trunk ? 1 : 0);

  w.u32(static_cast<std::uint32_t>(c.layout.layers.size()));
  for (const LayerSpec& l : c.layout.layers) {
    w.str(l.name);
    w.u32(static_cast<std::uint32_t>(l.in));
    w.u32(static_cast<std::uint32_t>(l.out));
    w.u64(l.weight_offset);
    w.u64(l.bias_offset);
  }

  w.u64(c.params.size());
  for (double p : c.params) w.f64(p);
  write_stats(w, c.value_stats);
  write_stats(w, c.entropy_stats);

  w.str(c.env_name);
  w.u32(static_cast<std::uint32_t>(c.env_options.max_steps));
  w.u32(c.env_options.modified_turns ? 1 : 0);
  w.u64(c.seed);
  w.i64(c.global_step);
  if (!out) throw Error(ErrorCode::kIo, "failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) throw Error(ErrorCode::kParse, "not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kParse, "unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint c;
  c.network.input_size = static_cast<int>(r.u32());
  c.network.num_actions = static_cast<int>(r.u32());
  const std::uint32_t depth = r.u32();
  if (depth > 64) throw Error(ErrorCode::kParse, "checkpoint network too deep");
  c.network.hidden.clear();
  for (std::uint32_t i = 0; i < depth; ++i) c.network.hidden.push_back(static_cast<int>(r.u32()));
  c.network.shared_trunk = r.u32() != 0;

  ParameterLayout expected;
  try {
    expected = make_layout(c.network);
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint network config: ") + e.what());
  }
  const std::uint32_t num_layers = r.u32();
  if (num_layers != expected.layers.size()) {
    throw Error(ErrorCode::kParse, "checkpoint layout disagrees with its network config");
  }
  for (const LayerSpec& want : expected.layers) {
    LayerSpec got;
    got.name = r.str();
    got.in = static_cast<int>(r.u32());
    got.out = static_cast<int>(r.u32());
    got.weight_offset = r.u64();
    got.bias_offset = r.u64();
    if (!(got == want)) {
      throw Error(ErrorCode::kParse, "checkpoint layer '" + got.name + "' disagrees with config");
    }
  }
  c.layout = expected;

  const std::uint64_t n = r.u64();
  if (n != expected.total || n > kMaxVectorLength) {
    throw Error(ErrorCode::kParse, "checkpoint parameter count disagrees with layout");
  }
  c.params.resize(n);
  for (double& p : c.params) p = r.f64();
  c.value_stats = read_stats(r);
  c.entropy_stats = read_stats(r);

  c.env_name = r.str();
  c.env_options.max_steps = static_cast<int>(r.u32());
  c.env_options.modified_turns = r.u32() != 0;
  c.seed = r.u64();
  c.global_step = r.i64();
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace eapo
