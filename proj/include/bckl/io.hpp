#pragma once

#include "bckl/mcmc.hpp"
#include "bckl/metrics.hpp"
#include "bckl/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bckl {

// ---------------------------------------------------------------- files

inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::uint32_t kMaskFileVersion = 1;

/// "BCKL" | u32 version | u64 M, T, P | f64 payload (vec order, little-endian); NaN = missing.
void write_tensor(const std::string& path, const SpatioTensor& t);
void write_tensor(const std::string& path, const Dims& dims, const Eigen::VectorXd& values);
[[nodiscard]] SpatioTensor read_tensor(const std::string& path);
/// Raw payload (NaNs kept), for dense matrices stored as n x n x 1 tensors.
[[nodiscard]] Eigen::VectorXd read_tensor_values(const std::string& path, Dims* dims = nullptr);

/// "BCKM" | u32 version | u64 M, T, P | u8 payload.
void write_mask(const std::string& path, const Dims& dims, const std::vector<std::uint8_t>& mask);
[[nodiscard]] std::vector<std::uint8_t> read_mask(const std::string& path, Dims* dims = nullptr);

/// Long-format CSV with header m,t,p,value and 1-based indices. Entries not listed are
/// missing. Dims are inferred from the largest indices unless given.
[[nodiscard]] SpatioTensor read_long_csv(const std::string& path, std::optional<Dims> dims = std::nullopt);

// ---------------------------------------------------------------- data generation

/// Noiseless field cos(4[f1(s1) + f2(s2)]) + sin(4[f1(s2) - f2(s1)]).
[[nodiscard]] double synthetic_field(double s1, double s2);
/// n1 x n2 x 1 tensor on the uniform grid over [-1, 3]^2 plus N(0, noise_var) noise.
[[nodiscard]] SpatioTensor generate_synthetic(Index n1 = 100, Index n2 = 100, double noise_var = 0.01,
                                              std::uint64_t seed = 0);

enum class MissingKind { Random, NonrandomTube, BlackoutTube, Quadrant };

struct MissingScenario {
    MissingKind kind = MissingKind::Random;
    double rate = 0.5;  // unused for Quadrant
};

[[nodiscard]] MissingKind parse_missing_kind(const std::string& name);
[[nodiscard]] std::string to_string(MissingKind k);

struct MissingResult {
    SpatioTensor train;
    std::vector<std::uint8_t> test_mask;  // newly masked and originally observed
    double achieved_rate = 0.0;           // masked fraction of the originally observed entries
};

/// rm: floor(rate |observed|) random entries; nm: round(rate M P) whole (m, :, p) tubes;
/// sbm: round(rate T P) whole (:, t, p) tubes; quadrant: 60% random missing on the two
/// diagonal quadrants and 80% on the other two (per quadrant).
[[nodiscard]] MissingResult apply_missing(const SpatioTensor& t, const MissingScenario& scenario, std::uint64_t seed);

// ---------------------------------------------------------------- configuration

struct RunConfig {
    std::string input;
    std::optional<Dims> input_dims;  // CSV inputs only
    std::string output_dir;
    std::optional<std::string> truth;
    std::optional<std::string> test_mask;
    std::optional<std::string> space_precomputed_path;
    std::optional<std::string> time_precomputed_path;
    std::string scenario;  // informational
    McmcConfig mcmc;
    /// The parsed document re-serialized with sorted keys; hashed into the manifest.
    std::string canonical_json;
};

/// Parses a run configuration document. Unknown keys and wrong types raise SchemaError;
/// violated invariants raise ConfigError. Relative paths resolve against `base_dir`.
[[nodiscard]] RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = "");
[[nodiscard]] RunConfig load_run_config(const std::string& path);

/// Loads the input tensor (TensorFile or long CSV) and any precomputed covariances.
[[nodiscard]] SpatioTensor load_input(RunConfig& cfg);

/// FNV-1a 64-bit hash, hex encoded.
[[nodiscard]] std::string content_hash(const std::string& text);

// ---------------------------------------------------------------- run outputs

/// Header iter,tau,phi_1..D,delta_1..D,theta1_1..Q,theta2_1..Q,pcg_iters; length-scales on
/// their natural scale.
void write_trace_csv(const std::string& path, const std::vector<SweepRecord>& trace, Index rank, Index q);
/// One JSON object per sweep: iteration, tau, theta1, theta2, pcg_iterations.
[[nodiscard]] std::string sweep_json_line(const SweepRecord& rec);

/// mean/std/lower/upper tensors under `dir`.
void write_summary(const std::string& dir, const Dims& dims, const PosteriorSummary& s);
[[nodiscard]] PosteriorSummary read_summary(const std::string& dir, Dims* dims = nullptr);

[[nodiscard]] std::string score_json(const ScoreReport& r);

/// Scores the summary at the entries selected by `test_mask` against `truth`.
[[nodiscard]] ScoreReport evaluate(const PosteriorSummary& s, const SpatioTensor& truth,
                                   const std::vector<std::uint8_t>& test_mask, double alpha = 0.05,
                                   std::optional<double> psnr_max = std::nullopt);

}  // namespace bckl
