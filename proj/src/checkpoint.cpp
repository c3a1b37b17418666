#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "gfn/errors.hpp"
#include "gfn/runner.hpp"

namespace gfn::harness {

namespace {

constexpr char kMagic[8] = {'G', 'F', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

// All multi-byte fields are little-endian; floats are raw IEEE-754 bits.

struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void tensor(const diff::Tensor& t) {
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) u32(static_cast<std::uint32_t>(d));
    u64(t.data.size());
    raw(t.data.data(), t.data.size() * sizeof(double));
  }
};

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  std::string section;

  void raw(void* p, std::size_t n) {
    if (pos + n > bytes.size())
      throw RuntimeAbort("checkpoint section '" + section + "' truncated");
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  diff::Tensor tensor() {
    diff::Tensor t;
    const std::uint32_t rank = u32();
    t.shape.resize(rank);
    for (auto& d : t.shape) d = static_cast<int>(u32());
    t.data.resize(u64());
    raw(t.data.data(), t.data.size() * sizeof(double));
    return t;
  }
  void done() const {
    if (pos != bytes.size())
      throw RuntimeAbort("checkpoint section '" + section + "' has trailing bytes");
  }
};

void write_mlp(ByteWriter& w, const diff::Mlp& m) {
  w.u32(static_cast<std::uint32_t>(m.layer_sizes.size()));
  for (int s : m.layer_sizes) w.u32(static_cast<std::uint32_t>(s));
  w.u8(static_cast<std::uint8_t>(m.activation));
  w.f64(m.leaky_slope);
  w.u8(m.activate_output ? 1 : 0);
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    w.tensor(m.weights[l]);
    w.tensor(m.biases[l]);
  }
}

diff::Mlp read_mlp(ByteReader& r) {
  diff::Mlp m;
  m.layer_sizes.resize(r.u32());
  for (auto& s : m.layer_sizes) s = static_cast<int>(r.u32());
  m.activation = static_cast<diff::Activation>(r.u8());
  m.leaky_slope = r.f64();
  m.activate_output = r.u8() != 0;
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    m.weights.push_back(r.tensor());
    m.biases.push_back(r.tensor());
  }
  return m;
}

void write_adam(ByteWriter& w, const diff::AdamState& a) {
  w.f64(a.learning_rate);
  w.f64(a.beta1);
  w.f64(a.beta2);
  w.f64(a.epsilon);
  w.i64(a.step);
  w.u32(static_cast<std::uint32_t>(a.first_moment.size()));
  for (std::size_t i = 0; i < a.first_moment.size(); ++i) {
    w.tensor(a.first_moment[i]);
    w.tensor(a.second_moment[i]);
  }
}

diff::AdamState read_adam(ByteReader& r) {
  diff::AdamState a(r.f64());
  a.beta1 = r.f64();
  a.beta2 = r.f64();
  a.epsilon = r.f64();
  a.step = r.i64();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    a.first_moment.push_back(r.tensor());
    a.second_moment.push_back(r.tensor());
  }
  return a;
}

void write_trajectory(ByteWriter& w, const envs::Trajectory& t) {
  w.u32(static_cast<std::uint32_t>(t.states.size()));
  for (const auto& s : t.states) {
    w.u32(static_cast<std::uint32_t>(s.items.size()));
    for (std::int32_t v : s.items) w.u32(static_cast<std::uint32_t>(v));
    w.u8(s.terminal ? 1 : 0);
  }
  w.u32(static_cast<std::uint32_t>(t.actions.size()));
  for (std::int32_t a : t.actions) w.u32(static_cast<std::uint32_t>(a));
  w.f64(t.terminal_energy);
  w.f64(t.terminal_reward);
}

envs::Trajectory read_trajectory(ByteReader& r) {
  envs::Trajectory t;
  t.states.resize(r.u32());
  for (auto& s : t.states) {
    s.items.resize(r.u32());
    for (auto& v : s.items) v = static_cast<std::int32_t>(r.u32());
    s.terminal = r.u8() != 0;
  }
  t.actions.resize(r.u32());
  for (auto& a : t.actions) a = static_cast<std::int32_t>(r.u32());
  t.terminal_energy = r.f64();
  t.terminal_reward = r.f64();
  return t;
}

void append_section(std::vector<std::uint8_t>& file, const std::string& name,
                    const ByteWriter& payload) {
  ByteWriter head;
  head.u32(static_cast<std::uint32_t>(name.size()));
  head.raw(name.data(), name.size());
  head.u64(payload.bytes.size());
  file.insert(file.end(), head.bytes.begin(), head.bytes.end());
  file.insert(file.end(), payload.bytes.begin(), payload.bytes.end());
  const std::uint64_t checksum = fnv1a64(payload.bytes.data(), payload.bytes.size());
  ByteWriter tail;
  tail.u64(checksum);
  file.insert(file.end(), tail.bytes.begin(), tail.bytes.end());
}

std::map<std::string, std::vector<std::uint8_t>> read_sections(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeAbort("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (file.size() < sizeof(kMagic) + 4 + 4 + 8 ||
      std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0)
    throw RuntimeAbort("'" + path + "' is not a checkpoint file");
  std::size_t pos = sizeof(kMagic);
  auto take_u32 = [&]() {
    std::uint32_t v;
    std::memcpy(&v, file.data() + pos, 4);
    pos += 4;
    return v;
  };
  auto take_u64 = [&]() {
    std::uint64_t v;
    std::memcpy(&v, file.data() + pos, 8);
    pos += 8;
    return v;
  };
  if (take_u32() != kVersion) throw RuntimeAbort("unsupported checkpoint version in '" + path + "'");

  std::map<std::string, std::vector<std::uint8_t>> sections;
  while (true) {
    if (pos + 4 > file.size()) throw RuntimeAbort("checkpoint '" + path + "' truncated");
    const std::uint32_t name_len = take_u32();
    if (name_len == 0) break;  // end marker
    if (pos + name_len > file.size()) throw RuntimeAbort("checkpoint '" + path + "' truncated");
    std::string name(reinterpret_cast<const char*>(file.data() + pos), name_len);
    pos += name_len;
    const std::uint64_t payload_len = take_u64();
    if (pos + payload_len + 8 > file.size())
      throw RuntimeAbort("checkpoint section '" + name + "' truncated");
    std::vector<std::uint8_t> payload(file.begin() + pos, file.begin() + pos + payload_len);
    pos += payload_len;
    const std::uint64_t stored = take_u64();
    if (fnv1a64(payload.data(), payload.size()) != stored)
      throw RuntimeAbort("checkpoint integrity failure in section '" + name + "'");
    sections.emplace(std::move(name), std::move(payload));
  }
  const std::uint64_t stored_file_hash = take_u64();
  if (fnv1a64(file.data(), pos - 8) != stored_file_hash)
    throw RuntimeAbort("checkpoint '" + path + "' failed the whole-file checksum");
  return sections;
}

}  // namespace

void write_checkpoint(const std::string& path, const RunConfig& config, std::uint64_t seed,
                      const TrainState& state) {
  std::vector<std::uint8_t> file;
  file.insert(file.end(), kMagic, kMagic + sizeof(kMagic));
  {
    ByteWriter w;
    w.u32(kVersion);
    file.insert(file.end(), w.bytes.begin(), w.bytes.end());
  }

  {
    ByteWriter w;
    w.u64(config.hash(seed));
    w.u64(seed);
    w.str(config.to_text());
    append_section(file, "config", w);
  }
  {
    ByteWriter w;
    w.i64(state.round);
    w.i64(state.cum_samples);
    w.i64(state.oracle_terminal);
    w.i64(state.oracle_intermediate);
    append_section(file, "meta", w);
  }
  {
    ByteWriter w;
    w.u64(state.sample_rng.seed());
    w.u64(state.sample_rng.counter());
    w.u64(state.mask_rng.seed());
    w.u64(state.mask_rng.counter());
    w.u64(state.buffer_rng.seed());
    w.u64(state.buffer_rng.counter());
    w.u64(state.oracle_rng_seed);
    w.u64(state.oracle_rng_counter);
    append_section(file, "rngs", w);
  }
  {
    ByteWriter w;
    write_mlp(w, state.policy.trunk);
    write_mlp(w, state.policy.forward_head);
    write_mlp(w, state.policy.backward_head);
    write_mlp(w, state.policy.flow_head);
    w.tensor(state.policy.log_z);
    append_section(file, "policy", w);
  }
  {
    ByteWriter w;
    write_adam(w, state.policy_opt);
    append_section(file, "policy_opt", w);
  }
  if (state.potential) {
    ByteWriter w;
    write_mlp(w, state.potential->net);
    w.f64(state.potential->learning_rate);
    append_section(file, "potential", w);
    ByteWriter o;
    write_adam(o, *state.potential_opt);
    append_section(file, "potential_opt", o);
  }
  if (state.proxy) {
    ByteWriter w;
    write_mlp(w, *state.proxy);
    append_section(file, "proxy", w);
    ByteWriter o;
    write_adam(o, *state.proxy_opt);
    append_section(file, "proxy_opt", o);
  }
  {
    ByteWriter w;
    w.u64(state.buffer.capacity());
    w.u64(state.buffer.size());
    for (std::size_t i = 0; i < state.buffer.size(); ++i)
      write_trajectory(w, state.buffer.at(i));
    append_section(file, "buffer", w);
  }
  {
    ByteWriter w;
    w.f64(state.modes.threshold);
    w.u64(state.modes.discovered.size());
    for (const auto& k : state.modes.discovered) w.str(k);
    w.u64(state.modes.history.size());
    for (std::int64_t h : state.modes.history) w.i64(h);
    w.u32(static_cast<std::uint32_t>(state.topk.k));
    w.u64(state.topk.best.size());
    for (const auto& [k, v] : state.topk.best) {
      w.str(k);
      w.f64(v);
    }
    append_section(file, "trackers", w);
  }

  // End marker and whole-file checksum.
  {
    ByteWriter w;
    w.u32(0);
    file.insert(file.end(), w.bytes.begin(), w.bytes.end());
  }
  const std::uint64_t file_hash = fnv1a64(file.data(), file.size());
  {
    ByteWriter w;
    w.u64(file_hash);
    file.insert(file.end(), w.bytes.begin(), w.bytes.end());
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeAbort("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
}

std::pair<RunConfig, std::uint64_t> checkpoint_config(const std::string& path) {
  const auto sections = read_sections(path);
  const auto it = sections.find("config");
  if (it == sections.end()) throw RuntimeAbort("checkpoint '" + path + "' has no config section");
  ByteReader r{it->second, 0, "config"};
  r.u64();  // stored hash
  const std::uint64_t seed = r.u64();
  const std::string text = r.str();
  return {RunConfig::from_text(text), seed};
}

TrainState read_checkpoint(const std::string& path, const RunConfig& config, std::uint64_t seed) {
  const auto sections = read_sections(path);
  auto need = [&](const std::string& name) -> const std::vector<std::uint8_t>& {
    const auto it = sections.find(name);
    if (it == sections.end())
      throw RuntimeAbort("checkpoint '" + path + "' is missing section '" + name + "'");
    return it->second;
  };

  {
    ByteReader r{need("config"), 0, "config"};
    const std::uint64_t stored_hash = r.u64();
    const std::uint64_t expected = config.hash(seed);
    if (stored_hash != expected)
      throw RuntimeAbort("checkpoint config hash " + std::to_string(stored_hash) +
                         " does not match the requested configuration hash " +
                         std::to_string(expected));
  }

  const envs::EnvSpec spec = config.build_env();
  TrainState state = init_train_state(config, spec, seed);
  {
    ByteReader r{need("meta"), 0, "meta"};
    state.round = static_cast<int>(r.i64());
    state.cum_samples = r.i64();
    state.oracle_terminal = r.i64();
    state.oracle_intermediate = r.i64();
    r.done();
  }
  {
    ByteReader r{need("rngs"), 0, "rngs"};
    state.sample_rng = diff::SeededRng(r.u64());
    state.sample_rng.set_counter(r.u64());
    state.mask_rng = diff::SeededRng(r.u64());
    state.mask_rng.set_counter(r.u64());
    state.buffer_rng = diff::SeededRng(r.u64());
    state.buffer_rng.set_counter(r.u64());
    state.oracle_rng_seed = r.u64();
    state.oracle_rng_counter = r.u64();
    r.done();
  }
  {
    ByteReader r{need("policy"), 0, "policy"};
    state.policy.trunk = read_mlp(r);
    state.policy.forward_head = read_mlp(r);
    state.policy.backward_head = read_mlp(r);
    state.policy.flow_head = read_mlp(r);
    state.policy.log_z = r.tensor();
    r.done();
  }
  {
    ByteReader r{need("policy_opt"), 0, "policy_opt"};
    state.policy_opt = read_adam(r);
    r.done();
  }
  if (sections.contains("potential")) {
    ByteReader r{need("potential"), 0, "potential"};
    led::PotentialModel pot;
    pot.net = read_mlp(r);
    pot.learning_rate = r.f64();
    r.done();
    state.potential = std::move(pot);
    ByteReader o{need("potential_opt"), 0, "potential_opt"};
    state.potential_opt = read_adam(o);
    o.done();
  }
  if (sections.contains("proxy")) {
    ByteReader r{need("proxy"), 0, "proxy"};
    state.proxy = read_mlp(r);
    r.done();
    ByteReader o{need("proxy_opt"), 0, "proxy_opt"};
    state.proxy_opt = read_adam(o);
    o.done();
  }
  {
    ByteReader r{need("buffer"), 0, "buffer"};
    state.buffer = led::ReplayBuffer(r.u64());
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) state.buffer.push(read_trajectory(r));
    r.done();
  }
  {
    ByteReader r{need("trackers"), 0, "trackers"};
    state.modes = metrics::ModeTracker(r.f64());
    const std::uint64_t n_modes = r.u64();
    for (std::uint64_t i = 0; i < n_modes; ++i) state.modes.discovered.insert(r.str());
    state.modes.history.resize(r.u64());
    for (auto& h : state.modes.history) h = r.i64();
    state.topk = metrics::TopKTracker(static_cast<int>(r.u32()));
    const std::uint64_t n_topk = r.u64();
    for (std::uint64_t i = 0; i < n_topk; ++i) {
      const std::string k = r.str();
      state.topk.best.emplace(k, r.f64());
    }
    r.done();
  }
  return state;
}

}  // namespace gfn::harness
