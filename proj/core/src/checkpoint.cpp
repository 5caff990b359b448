#include "ivrl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ivrl/errors.hpp"
#include "ivrl/rng.hpp"

namespace ivrl {

namespace {

constexpr char kMagic[8] = {'I', 'V', 'R', 'L', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(std::string_view bytes) { return hash_name(bytes); }

class Writer {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : in_(bytes) {}
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::size_t remaining() const { return in_.size() - pos_; }

  // Guards element counts read from the file before allocating.
  void need(std::size_t n) const {
    if (n > remaining()) throw CorruptFile("checkpoint is truncated");
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_block(Writer& w, const ParameterVector& p) {
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(p.layers().size()));
  for (const auto& l : p.layers()) {
    w.uint<std::uint64_t>(l.input_width);
    w.uint<std::uint64_t>(l.output_width);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(l.activation));
  }
  w.uint<std::uint64_t>(p.size());
  for (double v : p.values()) w.f64(v);
}

ParameterVector read_block(Reader& r) {
  const auto n_layers = r.uint<std::uint32_t>();
  r.need(static_cast<std::size_t>(n_layers) * 17);
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.input_width = r.uint<std::uint64_t>();
    l.output_width = r.uint<std::uint64_t>();
    const auto act = r.uint<std::uint8_t>();
    if (act > static_cast<std::uint8_t>(Activation::AbsoluteValue)) throw CorruptFile("checkpoint: bad activation tag");
    l.activation = static_cast<Activation>(act);
    layers.push_back(l);
  }
  ParameterVector p;
  try {
    p = ParameterVector(std::move(layers));
  } catch (const ConfigError& e) {
    throw CorruptFile(std::string("checkpoint: bad layer spec: ") + e.what());
  }
  const auto n = r.uint<std::uint64_t>();
  if (n != p.size()) throw CorruptFile("checkpoint: parameter count does not match layer spec");
  r.need(n * 8);
  for (double& v : p.values()) v = r.f64();
  return p;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(c.params.algorithm));
  w.uint<std::uint64_t>(c.step);
  std::uint64_t n_agents = 0, aux = 0;
  if (c.params.mixer) n_agents = c.params.mixer->n_agents, aux = c.params.mixer->embed;
  if (c.params.qtran) n_agents = c.params.qtran->n_agents, aux = c.params.qtran->n_actions;
  w.uint<std::uint64_t>(n_agents);
  w.uint<std::uint64_t>(aux);
  const auto blocks = c.params.blocks();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(blocks.size()));
  for (const ParameterVector* b : blocks) write_block(w, *b);
  w.uint<std::uint8_t>(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    const OptimizerState& o = *c.optimizer;
    w.uint<std::uint64_t>(o.step);
    w.f64(o.learning_rate);
    w.f64(o.beta1);
    w.f64(o.beta2);
    w.f64(o.epsilon);
    w.f64(o.clip_norm);
    w.uint<std::uint64_t>(o.first_moment.size());
    for (double v : o.first_moment) w.f64(v);
    for (double v : o.second_moment) w.f64(v);
  }
  w.uint<std::uint64_t>(fnv1a(w.str()));
  return std::move(w.str());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8) throw CorruptFile("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CorruptFile("not a checkpoint file (bad magic)");
  Reader header(std::string_view(bytes).substr(sizeof kMagic));
  const auto version = header.uint<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw VersionMismatch("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const std::string_view body(bytes.data(), bytes.size() - 8);
  Reader trailer(std::string_view(bytes).substr(bytes.size() - 8));
  if (trailer.uint<std::uint64_t>() != fnv1a(body)) throw CorruptFile("checkpoint hash mismatch (truncated or corrupted)");

  Reader r(body.substr(sizeof kMagic + 4));
  Checkpoint c;
  const auto alg = r.uint<std::uint8_t>();
  if (alg > static_cast<std::uint8_t>(Algorithm::QTRAN)) throw CorruptFile("checkpoint: bad algorithm tag");
  c.params.algorithm = static_cast<Algorithm>(alg);
  c.step = r.uint<std::uint64_t>();
  const auto n_agents = r.uint<std::uint64_t>();
  const auto aux = r.uint<std::uint64_t>();
  const auto n_blocks = r.uint<std::uint32_t>();
  const std::uint32_t expected = c.params.algorithm == Algorithm::QMIX ? 5 : c.params.algorithm == Algorithm::QTRAN ? 3 : 1;
  if (n_blocks != expected) throw CorruptFile("checkpoint: wrong number of parameter blocks for algorithm");
  c.params.agent = read_block(r);
  if (c.params.algorithm == Algorithm::QMIX) {
    MixerParams m;
    m.n_agents = n_agents;
    m.embed = aux;
    m.hyper_w1 = read_block(r);
    m.hyper_b1 = read_block(r);
    m.hyper_w2 = read_block(r);
    m.hyper_b2 = read_block(r);
    c.params.mixer = std::move(m);
  } else if (c.params.algorithm == Algorithm::QTRAN) {
    QtranHeads h;
    h.n_agents = n_agents;
    h.n_actions = aux;
    h.joint = read_block(r);
    h.value = read_block(r);
    c.params.qtran = std::move(h);
  }
  if (r.uint<std::uint8_t>() != 0) {
    OptimizerState o;
    o.step = r.uint<std::uint64_t>();
    o.learning_rate = r.f64();
    o.beta1 = r.f64();
    o.beta2 = r.f64();
    o.epsilon = r.f64();
    o.clip_norm = r.f64();
    const auto n = r.uint<std::uint64_t>();
    r.need(n * 16);
    o.first_moment.resize(n);
    o.second_moment.resize(n);
    for (double& v : o.first_moment) v = r.f64();
    for (double& v : o.second_moment) v = r.f64();
    c.optimizer = std::move(o);
  }
  if (r.remaining() != 0) throw CorruptFile("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const LearnerParams& params, const OptimizerState* optimizer, std::uint64_t step,
                     const std::filesystem::path& path) {
  Checkpoint c{params, optimizer ? std::optional<OptimizerState>(*optimizer) : std::nullopt, step};
  const std::string bytes = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace ivrl
