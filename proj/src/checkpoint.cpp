#include "dipp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dipp/errors.hpp"

namespace dipp {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'P', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kMaxLayers = 64;
constexpr std::uint64_t kMaxParams = std::uint64_t{1} << 32;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }

  template <class T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw LoadError("checkpoint '" + path_ + "' is truncated at byte " + std::to_string(pos_));
    }
  }

  const std::string& data_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

std::string describe(const Checkpoint& c) {
  return std::string(model_kind_name(c.kind)) + " " + c.arch.describe();
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

void check_expectations(const Checkpoint& c, const std::string& path, const std::optional<DenoiserArch>& arch,
                        std::optional<std::uint64_t> hash) {
  if (arch && !(c.arch == *arch)) {
    throw LoadError("checkpoint '" + path + "' has architecture " + c.arch.describe() + ", expected " +
                    arch->describe());
  }
  if (hash && c.config_hash != *hash) {
    throw LoadError("checkpoint '" + path + "' was produced under config hash " + hex(c.config_hash) +
                    ", current config hash is " + hex(*hash));
  }
}

DenoiserNet to_denoiser(const Checkpoint& c) {
  DenoiserNet net(c.arch);
  if (net.params().size() != c.params.size()) {
    throw LoadError("checkpoint parameter count " + std::to_string(c.params.size()) + " does not fit " +
                    describe(c) + " (" + std::to_string(net.params().size()) + " parameters)");
  }
  std::copy(c.params.begin(), c.params.end(), net.params().begin());
  return net;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::reference:
      return "reference";
    case ModelKind::ta:
      return "ta";
    case ModelKind::generator:
      return "generator";
    case ModelKind::generator_ema:
      return "generator-ema";
  }
  return "?";
}

Checkpoint make_checkpoint(const DenoiserNet& net, ModelKind kind, std::uint64_t step, std::uint64_t config_hash) {
  Checkpoint c;
  c.kind = kind;
  c.arch = net.arch();
  c.step = step;
  c.config_hash = config_hash;
  c.params.assign(net.params().begin(), net.params().end());
  return c;
}

Checkpoint make_checkpoint(const OneStepGenerator& gen, ModelKind kind, std::uint64_t step,
                           std::uint64_t config_hash) {
  Checkpoint c = make_checkpoint(gen.net(), kind, step, config_hash);
  c.sigma_init = gen.sigma_init();
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le(kCheckpointVersion);
  w.le(static_cast<std::uint8_t>(c.kind));
  w.le(static_cast<std::uint32_t>(c.arch.dim));
  w.le(static_cast<std::uint32_t>(c.arch.num_conditions));
  w.le(static_cast<std::uint8_t>(c.arch.activation));
  w.le(static_cast<std::uint32_t>(c.arch.hidden.size()));
  for (auto width : c.arch.hidden) w.le(static_cast<std::uint32_t>(width));
  w.f64(c.arch.sigma_data);
  w.f64(c.sigma_init);
  w.le(c.step);
  w.le(c.config_hash);
  w.le(static_cast<std::uint64_t>(c.params.size()));
  for (double p : c.params) w.f64(p);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  out.close();
  if (!out) throw Error("failed to write checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  Reader r(data, path);

  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw LoadError("'" + path + "' is not a checkpoint file");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint '" + path + "' has format version " + std::to_string(version) +
                    ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  const auto kind = r.le<std::uint8_t>();
  if (kind < 1 || kind > 4) throw LoadError("checkpoint '" + path + "' has unknown model kind " + std::to_string(kind));
  c.kind = static_cast<ModelKind>(kind);
  c.arch.dim = r.le<std::uint32_t>();
  c.arch.num_conditions = r.le<std::uint32_t>();
  const auto act = r.le<std::uint8_t>();
  if (act > static_cast<std::uint8_t>(Activation::silu)) throw LoadError("checkpoint '" + path + "' has unknown activation");
  c.arch.activation = static_cast<Activation>(act);
  const auto layers = r.le<std::uint32_t>();
  if (layers > kMaxLayers) throw LoadError("checkpoint '" + path + "' declares " + std::to_string(layers) + " layers");
  c.arch.hidden.resize(layers);
  for (auto& width : c.arch.hidden) width = r.le<std::uint32_t>();
  c.arch.sigma_data = r.f64();
  c.sigma_init = r.f64();
  c.step = r.le<std::uint64_t>();
  c.config_hash = r.le<std::uint64_t>();
  const auto count = r.le<std::uint64_t>();
  if (count > kMaxParams || count * 8 != r.remaining()) {
    throw LoadError("checkpoint '" + path + "' declares " + std::to_string(count) + " parameters but holds " +
                    std::to_string(r.remaining()) + " bytes of payload");
  }
  c.params.resize(count);
  for (double& p : c.params) p = r.f64();
  return c;
}

DenoiserNet load_denoiser(const std::string& path, ModelKind kind, const std::optional<DenoiserArch>& expected_arch,
                          std::optional<std::uint64_t> expected_hash) {
  const Checkpoint c = load_checkpoint(path);
  if (c.kind != kind) {
    throw LoadError("checkpoint '" + path + "' holds a " + model_kind_name(c.kind) + " model, expected " +
                    model_kind_name(kind));
  }
  check_expectations(c, path, expected_arch, expected_hash);
  return to_denoiser(c);
}

OneStepGenerator load_generator(const std::string& path, const std::optional<DenoiserArch>& expected_arch,
                                std::optional<std::uint64_t> expected_hash) {
  const Checkpoint c = load_checkpoint(path);
  if (c.kind != ModelKind::generator && c.kind != ModelKind::generator_ema) {
    throw LoadError("checkpoint '" + path + "' holds a " + model_kind_name(c.kind) + " model, expected a generator");
  }
  check_expectations(c, path, expected_arch, expected_hash);
  if (!(c.sigma_init > 0.0)) throw LoadError("checkpoint '" + path + "' has invalid sigma_init");
  return OneStepGenerator(to_denoiser(c), c.sigma_init);
}

}  // namespace dipp
