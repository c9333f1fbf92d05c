#include "keybot/errorsim/errorsim.hpp"

#include <algorithm>
#include <numeric>

#include "keybot/core/error.hpp"

namespace keybot::errorsim {

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::accurate: return "accurate";
    case ErrorKind::misvertex: return "misvertex";
    case ErrorKind::misbone: return "misbone";
    case ErrorKind::lr_inversion: return "lr_inversion";
    }
    return "?";
}

const char* to_string(BoneShift shift)
{
    switch (shift) {
    case BoneShift::up: return "up";
    case BoneShift::down: return "down";
    case BoneShift::accurate: return "accurate";
    }
    return "?";
}

const char* to_string(SpanScenario scenario)
{
    switch (scenario) {
    case SpanScenario::full_range: return "full_range";
    case SpanScenario::random_start: return "random_start";
    case SpanScenario::random_end: return "random_end";
    case SpanScenario::random_start_end: return "random_start_end";
    }
    return "?";
}

ErrorKind error_kind_from_string(const std::string& s)
{
    for (auto k : {ErrorKind::accurate, ErrorKind::misvertex, ErrorKind::misbone, ErrorKind::lr_inversion})
        if (s == to_string(k)) return k;
    throw Error(Errc::invalid_argument, "unknown error kind '" + s + "'");
}

namespace {

BoneShift bone_shift_from_string(const std::string& s)
{
    for (auto k : {BoneShift::up, BoneShift::down, BoneShift::accurate})
        if (s == to_string(k)) return k;
    throw Error(Errc::invalid_argument, "unknown bone shift '" + s + "'");
}

SpanScenario scenario_from_string(const std::string& s)
{
    for (auto k : {SpanScenario::full_range, SpanScenario::random_start, SpanScenario::random_end,
                   SpanScenario::random_start_end})
        if (s == to_string(k)) return k;
    throw Error(Errc::invalid_argument, "unknown span scenario '" + s + "'");
}

CorruptionResult finish(const KeypointSet& original, KeypointSet corrupted, ErrorSpec spec)
{
    CorruptionResult out;
    out.labels = label_moved(original, corrupted);
    out.corrupted = std::move(corrupted);
    out.applied_spec = std::move(spec);
    return out;
}

void check_points(const KeypointSet& kps)
{
    require(kps.size() > 0, Errc::invalid_argument, "keypoint set is empty");
    require(kps.all_finite(), Errc::invalid_argument, "keypoints must be finite");
}

KeypointSet apply_misvertex(const KeypointSet& kps, const MisvertexParams& p)
{
    const int K = static_cast<int>(kps.size());
    KeypointSet out = kps;
    for (auto [i, delta] : p.displacements) {
        require(i >= 0 && i < K, Errc::out_of_range, "misvertex index out of range");
        require(delta != 0 && std::abs(delta) <= p.radius, Errc::invalid_argument, "misvertex offset out of range");
        int src = ((i + delta) % K + K) % K;
        out[i] = kps[src];
    }
    return out;
}

KeypointSet apply_misbone(const KeypointSet& kps, const SpineTopology& topology, const MisboneParams& p)
{
    KeypointSet out = kps;
    if (p.direction == BoneShift::accurate) return out;
    const auto full = topology.full_vertebrae();
    const int V = static_cast<int>(full.size());
    require(V >= 2, Errc::failed_precondition, "misbone needs at least two full vertebrae");
    require(p.first_vertebra >= 0 && p.first_vertebra <= p.last_vertebra && p.last_vertebra < V,
            Errc::out_of_range, "misbone span out of range");
    const auto& verts = topology.vertebrae();
    auto corner = [&](int v, int role) { return kps[verts[full[v]].indices[role]]; };
    for (int v = p.first_vertebra; v <= p.last_vertebra; ++v) {
        for (int role = 0; role < 4; ++role) {
            int idx = verts[full[v]].indices[role];
            Point moved;
            if (p.direction == BoneShift::up) {
                if (v > 0) {
                    moved = corner(v - 1, role);
                } else {
                    Point a = corner(0, role), b = corner(1, role);
                    moved = {kps[idx].row + (a.row - b.row), kps[idx].col + (a.col - b.col)};
                }
            } else {
                if (v < V - 1) {
                    moved = corner(v + 1, role);
                } else {
                    Point a = corner(V - 1, role), b = corner(V - 2, role);
                    moved = {kps[idx].row + (a.row - b.row), kps[idx].col + (a.col - b.col)};
                }
            }
            out[idx] = moved;
        }
    }
    return out;
}

KeypointSet apply_lr(const KeypointSet& kps, const SpineTopology& topology, const LrInversionParams& p)
{
    KeypointSet out = kps;
    const auto& pairs = topology.lr_pairs();
    for (int pi : p.swapped_pairs) {
        require(pi >= 0 && pi < static_cast<int>(pairs.size()), Errc::out_of_range, "lr pair out of range");
        auto [l, r] = pairs[pi];
        std::swap(out[l], out[r]);
    }
    return out;
}

int draw_weighted(const std::vector<double>& weights, Rng& rng)
{
    std::discrete_distribution<int> dist(weights.begin(), weights.end());
    return dist(rng);
}

}  // namespace

AnomalyLabel label_moved(const KeypointSet& original, const KeypointSet& corrupted)
{
    require(original.size() == corrupted.size(), Errc::invalid_argument, "keypoint sets differ in length");
    AnomalyLabel labels;
    labels.flags.resize(original.size());
    for (std::size_t i = 0; i < original.size(); ++i) labels.flags[i] = !(original[i] == corrupted[i]);
    return labels;
}

CorruptionResult simulate_misvertex(const KeypointSet& kps, int radius, int num_displaced, Rng& rng,
                                    std::span<const int> candidates)
{
    check_points(kps);
    const int K = static_cast<int>(kps.size());
    require(radius >= 1, Errc::invalid_argument, "misvertex radius must be >= 1");
    require(radius < K, Errc::invalid_argument, "misvertex radius must be smaller than K");
    std::vector<int> pool;
    if (candidates.empty()) {
        pool.resize(K);
        std::iota(pool.begin(), pool.end(), 0);
    } else {
        pool.assign(candidates.begin(), candidates.end());
        for (int i : pool) require(i >= 0 && i < K, Errc::out_of_range, "candidate index out of range");
    }
    require(num_displaced >= 0 && num_displaced <= static_cast<int>(pool.size()), Errc::invalid_argument,
            "cannot displace more keypoints than candidates");

    ErrorSpec spec;
    spec.kind = ErrorKind::misvertex;
    spec.seed = rng();
    Rng local(spec.seed);
    // Partial Fisher-Yates: sampling without replacement.
    for (int j = 0; j < num_displaced; ++j) std::swap(pool[j], pool[uniform_int(local, j, static_cast<int>(pool.size()) - 1)]);
    MisvertexParams params;
    params.radius = radius;
    for (int j = 0; j < num_displaced; ++j) {
        int u = uniform_int(local, 0, 2 * radius - 1);
        int delta = u < radius ? u - radius : u - radius + 1;
        params.displacements.emplace_back(pool[j], delta);
    }
    std::sort(params.displacements.begin(), params.displacements.end());
    KeypointSet corrupted = apply_misvertex(kps, params);
    spec.params = std::move(params);
    return finish(kps, std::move(corrupted), std::move(spec));
}

CorruptionResult simulate_misbone(const KeypointSet& kps, const SpineTopology& topology, Rng& rng,
                                  std::optional<BoneShift> direction, std::optional<SpanScenario> scenario)
{
    check_points(kps);
    require(static_cast<int>(kps.size()) == topology.num_keypoints(), Errc::invalid_argument,
            "keypoint count does not match topology");
    const int V = static_cast<int>(topology.full_vertebrae().size());
    require(V >= 2, Errc::failed_precondition, "misbone needs at least two full vertebrae");

    ErrorSpec spec;
    spec.kind = ErrorKind::misbone;
    spec.seed = rng();
    Rng local(spec.seed);
    MisboneParams params;
    params.direction = direction ? *direction : static_cast<BoneShift>(uniform_int(local, 0, 2));
    params.scenario = scenario ? *scenario : static_cast<SpanScenario>(uniform_int(local, 0, 3));
    switch (params.scenario) {
    case SpanScenario::full_range:
        params.first_vertebra = 0;
        params.last_vertebra = V - 1;
        break;
    case SpanScenario::random_start:
        params.first_vertebra = uniform_int(local, 0, V - 1);
        params.last_vertebra = V - 1;
        break;
    case SpanScenario::random_end:
        params.first_vertebra = 0;
        params.last_vertebra = uniform_int(local, 0, V - 1);
        break;
    case SpanScenario::random_start_end: {
        int a = uniform_int(local, 0, V - 1), b = uniform_int(local, 0, V - 1);
        params.first_vertebra = std::min(a, b);
        params.last_vertebra = std::max(a, b);
        break;
    }
    }
    KeypointSet corrupted = apply_misbone(kps, topology, params);
    spec.params = params;
    return finish(kps, std::move(corrupted), std::move(spec));
}

CorruptionResult simulate_lr_inversion(const KeypointSet& kps, const SpineTopology& topology,
                                       double swap_probability, Rng& rng)
{
    check_points(kps);
    require(static_cast<int>(kps.size()) == topology.num_keypoints(), Errc::invalid_argument,
            "keypoint count does not match topology");
    require(swap_probability >= 0.0 && swap_probability <= 1.0, Errc::invalid_argument,
            "swap probability must lie in [0, 1]");
    ErrorSpec spec;
    spec.kind = ErrorKind::lr_inversion;
    spec.seed = rng();
    Rng local(spec.seed);
    LrInversionParams params;
    params.swap_probability = swap_probability;
    const int P = static_cast<int>(topology.lr_pairs().size());
    for (int pi = 0; pi < P; ++pi)
        if (bernoulli(local, swap_probability)) params.swapped_pairs.push_back(pi);
    KeypointSet corrupted = apply_lr(kps, topology, params);
    spec.params = std::move(params);
    auto out = finish(kps, std::move(corrupted), std::move(spec));
    out.warning = P == 0;
    return out;
}

CorruptionResult apply_spec(const KeypointSet& kps, const SpineTopology& topology, const ErrorSpec& spec)
{
    check_points(kps);
    KeypointSet corrupted = kps;
    switch (spec.kind) {
    case ErrorKind::accurate: break;
    case ErrorKind::misvertex: corrupted = apply_misvertex(kps, std::get<MisvertexParams>(spec.params)); break;
    case ErrorKind::misbone: corrupted = apply_misbone(kps, topology, std::get<MisboneParams>(spec.params)); break;
    case ErrorKind::lr_inversion: corrupted = apply_lr(kps, topology, std::get<LrInversionParams>(spec.params)); break;
    }
    auto out = finish(kps, std::move(corrupted), spec);
    out.warning = spec.kind == ErrorKind::lr_inversion && topology.lr_pairs().empty();
    return out;
}

ProfileKind profile_kind_from_string(const std::string& s)
{
    if (s == "detector_train") return ProfileKind::detector_train;
    if (s == "corrector_train") return ProfileKind::corrector_train;
    throw Error(Errc::invalid_argument, "unknown corruption profile '" + s + "'");
}

const char* to_string(ProfileKind kind)
{
    return kind == ProfileKind::detector_train ? "detector_train" : "corrector_train";
}

CorruptionProfile CorruptionProfile::detector_train(const SpineTopology& topology)
{
    CorruptionProfile p;
    p.kind = ProfileKind::detector_train;
    p.detector_max_displaced = topology.full_vertebrae().size() >= 10 ? 3 : 4;
    return p;
}

CorruptionProfile CorruptionProfile::corrector_train()
{
    CorruptionProfile p;
    p.kind = ProfileKind::corrector_train;
    return p;
}

nlohmann::json CorruptionProfile::to_json() const
{
    return {{"kind", errorsim::to_string(kind)},
            {"radius", radius},
            {"detector_max_displaced", detector_max_displaced},
            {"accurate_probability", accurate_probability},
            {"misvertex_count_weights", misvertex_count_weights},
            {"swap_probability", swap_probability}};
}

CorruptionProfile CorruptionProfile::from_json(const nlohmann::json& j)
{
    CorruptionProfile p;
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") p.kind = profile_kind_from_string(value.get<std::string>());
        else if (key == "radius") p.radius = value.get<int>();
        else if (key == "detector_max_displaced") p.detector_max_displaced = value.get<int>();
        else if (key == "accurate_probability") p.accurate_probability = value.get<double>();
        else if (key == "misvertex_count_weights") p.misvertex_count_weights = value.get<std::vector<double>>();
        else if (key == "swap_probability") p.swap_probability = value.get<double>();
        else throw Error(Errc::invalid_argument, "unknown corruption profile key '" + key + "'");
    }
    require(!p.misvertex_count_weights.empty(), Errc::invalid_argument, "misvertex weights must be non-empty");
    return p;
}

CorruptionResult sample_training_corruption(const KeypointSet& kps, const SpineTopology& topology,
                                            const CorruptionProfile& profile, Rng& rng,
                                            std::span<const int> candidates)
{
    check_points(kps);
    if (profile.kind == ProfileKind::detector_train) {
        int pool = candidates.empty() ? static_cast<int>(kps.size()) : static_cast<int>(candidates.size());
        int count = uniform_int(rng, 0, std::min(profile.detector_max_displaced, pool));
        return simulate_misvertex(kps, profile.radius, count, rng, candidates);
    }
    if (bernoulli(rng, profile.accurate_probability)) {
        ErrorSpec spec;
        spec.seed = rng();
        return finish(kps, kps, spec);
    }
    auto kind = static_cast<ErrorKind>(uniform_int(rng, 1, 3));
    switch (kind) {
    case ErrorKind::misvertex: {
        int count = 1 + draw_weighted(profile.misvertex_count_weights, rng);
        count = std::min(count, static_cast<int>(kps.size()));
        return simulate_misvertex(kps, profile.radius, count, rng);
    }
    case ErrorKind::misbone: return simulate_misbone(kps, topology, rng);
    default: return simulate_lr_inversion(kps, topology, profile.swap_probability, rng);
    }
}

CorruptionResult sample_single_error(const KeypointSet& kps, const SpineTopology& topology, ErrorKind kind,
                                     const CorruptionProfile& profile, Rng& rng)
{
    switch (kind) {
    case ErrorKind::misvertex: {
        int count = 1 + draw_weighted(profile.misvertex_count_weights, rng);
        return simulate_misvertex(kps, profile.radius, std::min(count, static_cast<int>(kps.size())), rng);
    }
    case ErrorKind::misbone:
        return simulate_misbone(kps, topology, rng, bernoulli(rng, 0.5) ? BoneShift::up : BoneShift::down);
    case ErrorKind::lr_inversion: {
        require(profile.swap_probability > 0.0 && !topology.lr_pairs().empty(), Errc::failed_precondition,
                "lr inversion cannot produce a swap");
        for (;;) {
            auto res = simulate_lr_inversion(kps, topology, profile.swap_probability, rng);
            if (!std::get<LrInversionParams>(res.applied_spec.params).swapped_pairs.empty()) return res;
        }
    }
    case ErrorKind::accurate: break;
    }
    throw Error(Errc::invalid_argument, "sample_single_error needs a non-accurate kind");
}

nlohmann::json to_json(const ErrorSpec& spec)
{
    nlohmann::json params = nlohmann::json::object();
    if (auto* mv = std::get_if<MisvertexParams>(&spec.params)) {
        auto disp = nlohmann::json::array();
        for (auto [i, d] : mv->displacements) disp.push_back({i, d});
        params = {{"radius", mv->radius}, {"displacements", disp}};
    } else if (auto* mb = std::get_if<MisboneParams>(&spec.params)) {
        params = {{"direction", to_string(mb->direction)},
                  {"scenario", to_string(mb->scenario)},
                  {"first_vertebra", mb->first_vertebra},
                  {"last_vertebra", mb->last_vertebra}};
    } else if (auto* lr = std::get_if<LrInversionParams>(&spec.params)) {
        params = {{"swap_probability", lr->swap_probability}, {"swapped_pairs", lr->swapped_pairs}};
    }
    return {{"kind", to_string(spec.kind)}, {"params", params}, {"seed", spec.seed}};
}

ErrorSpec error_spec_from_json(const nlohmann::json& j)
{
    ErrorSpec spec;
    spec.kind = error_kind_from_string(j.at("kind").get<std::string>());
    spec.seed = j.value("seed", std::uint64_t{0});
    const auto& p = j.at("params");
    switch (spec.kind) {
    case ErrorKind::accurate: break;
    case ErrorKind::misvertex: {
        MisvertexParams mv;
        mv.radius = p.at("radius").get<int>();
        for (const auto& d : p.at("displacements")) mv.displacements.emplace_back(d.at(0).get<int>(), d.at(1).get<int>());
        spec.params = std::move(mv);
        break;
    }
    case ErrorKind::misbone: {
        MisboneParams mb;
        mb.direction = bone_shift_from_string(p.at("direction").get<std::string>());
        mb.scenario = scenario_from_string(p.at("scenario").get<std::string>());
        mb.first_vertebra = p.at("first_vertebra").get<int>();
        mb.last_vertebra = p.at("last_vertebra").get<int>();
        spec.params = mb;
        break;
    }
    case ErrorKind::lr_inversion: {
        LrInversionParams lr;
        lr.swap_probability = p.at("swap_probability").get<double>();
        lr.swapped_pairs = p.at("swapped_pairs").get<std::vector<int>>();
        spec.params = std::move(lr);
        break;
    }
    }
    return spec;
}

}  // namespace keybot::errorsim
