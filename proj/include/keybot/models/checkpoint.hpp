#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "keybot/models/toy_models.hpp"

namespace keybot::models {

nlohmann::json to_json(const InteractionConfig& c);
nlohmann::json to_json(const CorrectorConfig& c);
nlohmann::json to_json(const DetectorConfig& c);
InteractionConfig interaction_config_from_json(const nlohmann::json& j);
CorrectorConfig corrector_config_from_json(const nlohmann::json& j);
DetectorConfig detector_config_from_json(const nlohmann::json& j);

/// Contents of the JSON sidecar written next to every checkpoint.
struct CheckpointInfo {
    std::string kind;  // "interaction", "corrector" or "detector"
    int k = 0;         // detector window, 0 for the others
    int K = 0;         // keypoints, 0 for the detector
    nlohmann::json resolutions;
    std::uint64_t seed = 0;
    /// Hex SHA-256 of the canonical model config.
    std::string config_hash;
    nlohmann::json config;
};

nlohmann::json sidecar_json(const CheckpointInfo& info);

std::string sha256_hex(const std::string& bytes);

/// Binary container: magic "KBOTCKPT", u32 version, u64 header length, the
/// header JSON (sidecar plus model config) and the raw parameters. The sidecar
/// goes to `<path>.json`.
void save_checkpoint(const std::filesystem::path& path, ToyInteractionModel& model);
void save_checkpoint(const std::filesystem::path& path, ToyCorrector& model);
void save_checkpoint(const std::filesystem::path& path, ToyDetector& model);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

std::unique_ptr<ToyInteractionModel> load_interaction(const std::filesystem::path& path);
std::unique_ptr<ToyCorrector> load_corrector(const std::filesystem::path& path);
std::unique_ptr<ToyDetector> load_detector(const std::filesystem::path& path);

}  // namespace keybot::models
