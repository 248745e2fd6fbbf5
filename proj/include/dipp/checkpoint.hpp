#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dipp/denoiser.hpp"
#include "dipp/generator.hpp"

namespace dipp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint8_t { reference = 1, ta = 2, generator = 3, generator_ema = 4 };

const char* model_kind_name(ModelKind kind);

/// On-disk layout, all integers and floats little-endian:
///
///   magic "DIPPCKPT" | u32 version | u8 kind
///   u32 dim | u32 conditions | u8 activation | u32 layers | u32 width * layers
///   f64 sigma_data | f64 sigma_init | u64 step | u64 config_hash
///   u64 param_count | f64 * param_count
struct Checkpoint {
  ModelKind kind = ModelKind::reference;
  DenoiserArch arch;
  double sigma_init = kDefaultSigmaInit;  // meaningful for generator kinds only
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  std::vector<double> params;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(const DenoiserNet& net, ModelKind kind, std::uint64_t step, std::uint64_t config_hash);
Checkpoint make_checkpoint(const OneStepGenerator& gen, ModelKind kind, std::uint64_t step,
                           std::uint64_t config_hash);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

/// Reads and validates a checkpoint. Truncated or corrupt files, unknown
/// versions and trailing bytes raise LoadError.
Checkpoint load_checkpoint(const std::string& path);

/// Typed loaders. Each rejects a file of the wrong kind, and when given an
/// expected architecture or config hash, a mismatch naming both sides.
DenoiserNet load_denoiser(const std::string& path, ModelKind kind,
                          const std::optional<DenoiserArch>& expected_arch = std::nullopt,
                          std::optional<std::uint64_t> expected_hash = std::nullopt);
// Accepts the generator and generator-EMA kinds.
OneStepGenerator load_generator(const std::string& path,
                                const std::optional<DenoiserArch>& expected_arch = std::nullopt,
                                std::optional<std::uint64_t> expected_hash = std::nullopt);

}  // namespace dipp
