#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "keybot/core/geometry.hpp"
#include "keybot/core/random.hpp"
#include "keybot/core/topology.hpp"

namespace keybot::errorsim {

enum class ErrorKind { accurate, misvertex, misbone, lr_inversion };
enum class BoneShift { up, down, accurate };
enum class SpanScenario { full_range, random_start, random_end, random_start_end };

const char* to_string(ErrorKind kind);
const char* to_string(BoneShift shift);
const char* to_string(SpanScenario scenario);
ErrorKind error_kind_from_string(const std::string& s);

/// Realized parameters of each generator, sufficient to replay a corruption
/// without the RNG (see apply_spec).
struct MisvertexParams {
    int radius = 4;
    /// (displaced index, signed index offset), offsets never zero.
    std::vector<std::pair<int, int>> displacements;
};

struct MisboneParams {
    BoneShift direction = BoneShift::accurate;
    SpanScenario scenario = SpanScenario::full_range;
    /// Inclusive range over SpineTopology::full_vertebrae() positions.
    int first_vertebra = 0;
    int last_vertebra = -1;
};

struct LrInversionParams {
    double swap_probability = 0.9;
    /// Positions into SpineTopology::lr_pairs() that were swapped.
    std::vector<int> swapped_pairs;
};

struct ErrorSpec {
    ErrorKind kind = ErrorKind::accurate;
    std::variant<std::monostate, MisvertexParams, MisboneParams, LrInversionParams> params;
    std::uint64_t seed = 0;
};

struct CorruptionResult {
    KeypointSet corrupted;
    AnomalyLabel labels;
    ErrorSpec applied_spec;
    /// Set when the generator could not act (e.g. no lr pairs in the topology).
    bool warning = false;
};

/// labels[i] = corrupted[i] differs bitwise from original[i].
AnomalyLabel label_moved(const KeypointSet& original, const KeypointSet& corrupted);

/// Moves `num_displaced` distinct keypoints (drawn without replacement from
/// `candidates`, or from all indices when empty) onto the original position of
/// index i + delta mod K, delta uniform in [-r, r] \ {0}.
CorruptionResult simulate_misvertex(const KeypointSet& kps, int radius, int num_displaced, Rng& rng,
                                    std::span<const int> candidates = {});

/// Shifts a vertebra-aligned span one vertebra up or down. Unset direction or
/// scenario are drawn with equal probability.
CorruptionResult simulate_misbone(const KeypointSet& kps, const SpineTopology& topology, Rng& rng,
                                  std::optional<BoneShift> direction = std::nullopt,
                                  std::optional<SpanScenario> scenario = std::nullopt);

/// Swaps each lr pair independently with the given probability.
CorruptionResult simulate_lr_inversion(const KeypointSet& kps, const SpineTopology& topology,
                                       double swap_probability, Rng& rng);

/// Deterministic replay of a realized spec.
CorruptionResult apply_spec(const KeypointSet& kps, const SpineTopology& topology, const ErrorSpec& spec);

enum class ProfileKind { detector_train, corrector_train };
ProfileKind profile_kind_from_string(const std::string& s);
const char* to_string(ProfileKind kind);

struct CorruptionProfile {
    ProfileKind kind = ProfileKind::corrector_train;
    int radius = 4;
    /// Detector profile: count of displaced keypoints is uniform in 0..max.
    int detector_max_displaced = 3;
    double accurate_probability = 0.2;
    /// Corrector misvertex: weights for 1..N displaced keypoints.
    std::vector<double> misvertex_count_weights = std::vector<double>(9, 1.0);
    double swap_probability = 0.9;

    /// Defaults per topology preset: 3 displaced for AASCE-style columns, 4 otherwise.
    static CorruptionProfile detector_train(const SpineTopology& topology);
    static CorruptionProfile corrector_train();

    nlohmann::json to_json() const;
    static CorruptionProfile from_json(const nlohmann::json& j);
};

/// Draws one training corruption. For the detector profile, `candidates`
/// restricts which indices may be displaced (the training window).
CorruptionResult sample_training_corruption(const KeypointSet& kps, const SpineTopology& topology,
                                            const CorruptionProfile& profile, Rng& rng,
                                            std::span<const int> candidates = {});

/// Exactly one non-identity error of the given kind (misbone direction forced
/// to up/down, at least one displaced keypoint, at least one swapped pair).
CorruptionResult sample_single_error(const KeypointSet& kps, const SpineTopology& topology, ErrorKind kind,
                                     const CorruptionProfile& profile, Rng& rng);

nlohmann::json to_json(const ErrorSpec& spec);
ErrorSpec error_spec_from_json(const nlohmann::json& j);

}  // namespace keybot::errorsim
