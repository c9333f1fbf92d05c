#include "keybot/models/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "keybot/core/error.hpp"
#include "keybot/core/io.hpp"
#include "keybot/nn/optim.hpp"

namespace keybot::models {

namespace {

constexpr char kMagic[8] = {'K', 'B', 'O', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
T get(const nlohmann::json& j, const char* key, T fallback)
{
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const char* what)
{
    require(j.is_object(), Errc::invalid_argument, std::string(what) + " config must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        require(known.contains(it.key()), Errc::invalid_argument,
                std::string("unknown ") + what + " key '" + it.key() + "'");
}

}  // namespace

nlohmann::json to_json(const InteractionConfig& c)
{
    return {{"num_keypoints", c.num_keypoints}, {"image_height", c.image_height}, {"image_width", c.image_width},
            {"pool", c.pool},                   {"widths", c.widths},             {"target_sigma_cells", c.target_sigma_cells}};
}

nlohmann::json to_json(const CorrectorConfig& c)
{
    return {{"num_keypoints", c.num_keypoints},
            {"image_height", c.image_height},
            {"image_width", c.image_width},
            {"input_downscale", c.input_downscale},
            {"pool", c.pool},
            {"widths", c.widths},
            {"target_sigma_cells", c.target_sigma_cells},
            {"passthrough_init", c.passthrough_init}};
}

nlohmann::json to_json(const DetectorConfig& c)
{
    return {{"window", c.window},           {"crop_size", c.crop_size}, {"crop_margin", c.crop_margin},
            {"sigma_cells", c.sigma_cells}, {"widths", c.widths},       {"hidden", c.hidden}};
}

InteractionConfig interaction_config_from_json(const nlohmann::json& j)
{
    InteractionConfig c;
    reject_unknown(j, to_json(c), "interaction");
    c.num_keypoints = get(j, "num_keypoints", c.num_keypoints);
    c.image_height = get(j, "image_height", c.image_height);
    c.image_width = get(j, "image_width", c.image_width);
    c.pool = get(j, "pool", c.pool);
    c.widths = get(j, "widths", c.widths);
    c.target_sigma_cells = get(j, "target_sigma_cells", c.target_sigma_cells);
    return c;
}

CorrectorConfig corrector_config_from_json(const nlohmann::json& j)
{
    CorrectorConfig c;
    reject_unknown(j, to_json(c), "corrector");
    c.num_keypoints = get(j, "num_keypoints", c.num_keypoints);
    c.image_height = get(j, "image_height", c.image_height);
    c.image_width = get(j, "image_width", c.image_width);
    c.input_downscale = get(j, "input_downscale", c.input_downscale);
    c.pool = get(j, "pool", c.pool);
    c.widths = get(j, "widths", c.widths);
    c.target_sigma_cells = get(j, "target_sigma_cells", c.target_sigma_cells);
    c.passthrough_init = get(j, "passthrough_init", c.passthrough_init);
    return c;
}

DetectorConfig detector_config_from_json(const nlohmann::json& j)
{
    DetectorConfig c;
    reject_unknown(j, to_json(c), "detector");
    c.window = get(j, "window", c.window);
    c.crop_size = get(j, "crop_size", c.crop_size);
    c.crop_margin = get(j, "crop_margin", c.crop_margin);
    c.sigma_cells = get(j, "sigma_cells", c.sigma_cells);
    c.widths = get(j, "widths", c.widths);
    c.hidden = get(j, "hidden", c.hidden);
    return c;
}

std::string sha256_hex(const std::string& bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1, Errc::io_error,
            "sha256 failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

nlohmann::json sidecar_json(const CheckpointInfo& info)
{
    return {{"kind", info.kind},   {"k", info.k},
            {"K", info.K},         {"resolutions", info.resolutions},
            {"seed", info.seed},   {"config_hash", info.config_hash}};
}

namespace {

void write_container(const std::filesystem::path& path, CheckpointInfo info, const std::vector<nn::Param*>& params)
{
    info.config_hash = sha256_hex(info.config.dump());
    nlohmann::json header = sidecar_json(info);
    header["config"] = info.config;
    const std::string h = header.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(out.good(), Errc::io_error, "cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
    const std::uint64_t len = h.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    nn::write_params(out, params);
    require(out.good(), Errc::io_error, "failed writing checkpoint " + path.string());
    write_json(path.string() + ".json", sidecar_json(info));
}

CheckpointInfo read_header(std::istream& in, const std::filesystem::path& path)
{
    char magic[8];
    in.read(magic, sizeof magic);
    require(in.good() && std::memcmp(magic, kMagic, sizeof magic) == 0, Errc::io_error,
            "not a keybot checkpoint: " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    require(in.good() && version == kVersion, Errc::io_error, "unsupported checkpoint version in " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    require(in.good() && len < (1u << 24), Errc::io_error, "corrupt checkpoint header in " + path.string());
    std::string h(len, '\0');
    in.read(h.data(), static_cast<std::streamsize>(len));
    require(in.good(), Errc::io_error, "truncated checkpoint header in " + path.string());
    CheckpointInfo info;
    try {
        const auto j = nlohmann::json::parse(h);
        info.kind = j.at("kind").get<std::string>();
        info.k = j.at("k").get<int>();
        info.K = j.at("K").get<int>();
        info.resolutions = j.at("resolutions");
        info.seed = j.at("seed").get<std::uint64_t>();
        info.config_hash = j.at("config_hash").get<std::string>();
        info.config = j.at("config");
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::io_error, "bad checkpoint header in " + path.string() + ": " + e.what());
    }
    require(sha256_hex(info.config.dump()) == info.config_hash, Errc::io_error,
            "checkpoint config hash mismatch in " + path.string());
    return info;
}

std::ifstream open_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Errc::not_found, "cannot open checkpoint " + path.string());
    return in;
}

nlohmann::json grid_json(const GridSpec& g)
{
    return {{"height", g.height}, {"width", g.width}};
}

template <class Model>
std::unique_ptr<Model> load_params(std::istream& in, std::unique_ptr<Model> model, const std::filesystem::path& path)
{
    try {
        nn::read_params(in, model->params());
    } catch (const Error& e) {
        throw Error(Errc::io_error, "bad checkpoint parameters in " + path.string() + ": " + e.what());
    }
    return model;
}

void expect_kind(const CheckpointInfo& info, const char* kind, const std::filesystem::path& path)
{
    require(info.kind == kind, Errc::invalid_argument,
            "checkpoint " + path.string() + " holds a " + info.kind + ", expected a " + kind);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, ToyInteractionModel& model)
{
    CheckpointInfo info;
    info.kind = "interaction";
    info.K = model.num_keypoints();
    info.resolutions = {{"input", grid_json(model.input_grid())}, {"output", grid_json(model.output_grid())}};
    info.seed = model.seed();
    info.config = to_json(model.config());
    write_container(path, info, model.params());
}

void save_checkpoint(const std::filesystem::path& path, ToyCorrector& model)
{
    CheckpointInfo info;
    info.kind = "corrector";
    info.K = model.num_keypoints();
    info.resolutions = {{"image", {{"height", model.config().image_height / model.config().input_downscale},
                                   {"width", model.config().image_width / model.config().input_downscale}}},
                        {"output", grid_json(model.output_grid())}};
    info.seed = model.seed();
    info.config = to_json(model.config());
    write_container(path, info, model.params());
}

void save_checkpoint(const std::filesystem::path& path, ToyDetector& model)
{
    CheckpointInfo info;
    info.kind = "detector";
    info.k = model.window_size();
    info.resolutions = {{"crop", {{"height", model.config().crop_size}, {"width", model.config().crop_size}}}};
    info.seed = model.seed();
    info.config = to_json(model.config());
    write_container(path, info, model.params());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path)
{
    auto in = open_checkpoint(path);
    return read_header(in, path);
}

std::unique_ptr<ToyInteractionModel> load_interaction(const std::filesystem::path& path)
{
    auto in = open_checkpoint(path);
    const CheckpointInfo info = read_header(in, path);
    expect_kind(info, "interaction", path);
    return load_params(in, std::make_unique<ToyInteractionModel>(interaction_config_from_json(info.config), info.seed),
                       path);
}

std::unique_ptr<ToyCorrector> load_corrector(const std::filesystem::path& path)
{
    auto in = open_checkpoint(path);
    const CheckpointInfo info = read_header(in, path);
    expect_kind(info, "corrector", path);
    return load_params(in, std::make_unique<ToyCorrector>(corrector_config_from_json(info.config), info.seed), path);
}

std::unique_ptr<ToyDetector> load_detector(const std::filesystem::path& path)
{
    auto in = open_checkpoint(path);
    const CheckpointInfo info = read_header(in, path);
    expect_kind(info, "detector", path);
    return load_params(in, std::make_unique<ToyDetector>(detector_config_from_json(info.config), info.seed), path);
}

}  // namespace keybot::models
