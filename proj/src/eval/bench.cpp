#include "keybot/eval/bench.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "keybot/core/error.hpp"
#include "keybot/core/io.hpp"
#include "keybot/core/random.hpp"
#include "keybot/eval/metrics.hpp"

namespace keybot::eval {

std::string NocSpec::label() const
{
    std::ostringstream out;
    out << "NoC" << max_clicks << "@" << target;
    return out.str();
}

Point to_original(const Point& p, const BenchmarkSample& s)
{
    const double sr = static_cast<double>(s.sample.image.height()) / s.original_height;
    const double sc = static_cast<double>(s.sample.image.width()) / s.original_width;
    return {(p.row + 0.5) / sr - 0.5, (p.col + 0.5) / sc - 0.5};
}

namespace {

KeypointSet keypoints_to_original(const KeypointSet& k, const BenchmarkSample& s)
{
    KeypointSet out = k;
    for (auto& p : out.points) p = to_original(p, s);
    return out;
}

}  // namespace

void attach_corrupted_initials(std::span<BenchmarkSample> samples, const SpineTopology& topology,
                               const errorsim::CorruptionProfile& profile, std::uint64_t seed)
{
    static constexpr errorsim::ErrorKind kinds[] = {errorsim::ErrorKind::misvertex, errorsim::ErrorKind::misbone,
                                                    errorsim::ErrorKind::lr_inversion};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Rng rng(mix_seed(seed, i));
        samples[i].initial =
            errorsim::sample_single_error(samples[i].sample.keypoints, topology, kinds[i % 3], profile, rng).corrupted;
    }
}

void recompute_aggregates(RunReport& run, std::span<const NocSpec> noc_specs)
{
    const std::size_t clicks = static_cast<std::size_t>(run.run.config.T) + 1;
    run.mean_mre.assign(clicks, 0.0);
    run.mean_noc.assign(noc_specs.size(), 0.0);
    if (run.samples.empty()) return;
    for (const auto& s : run.samples) {
        for (std::size_t c = 0; c < clicks; ++c) run.mean_mre[c] += s.curve.at(c);
        for (std::size_t j = 0; j < noc_specs.size(); ++j) run.mean_noc[j] += s.noc.at(j);
    }
    const double n = static_cast<double>(run.samples.size());
    for (double& v : run.mean_mre) v /= n;
    for (double& v : run.mean_noc) v /= n;
}

EvalReport run_benchmark(const std::string& dataset, std::span<const BenchmarkSample> samples,
                         const ModelsForSample& models_for, std::span<const BenchmarkRun> runs,
                         std::span<const NocSpec> noc_specs, const SpineTopology& topology)
{
    require(!samples.empty(), Errc::invalid_argument, "benchmark dataset is empty");
    for (const auto& spec : noc_specs)
        for (const auto& r : runs)
            require(spec.max_clicks <= r.config.T, Errc::invalid_argument,
                    "NoC click cap " + std::to_string(spec.max_clicks) + " exceeds T of run " + r.label);
    EvalReport report;
    report.dataset = dataset;
    report.noc_specs.assign(noc_specs.begin(), noc_specs.end());
    for (const auto& r : runs) {
        RunReport rr;
        rr.run = r;
        double interaction_total = 0.0, iteration_total = 0.0;
        std::size_t interaction_count = 0;
        for (const auto& bs : samples) {
            const models::ModelSet models = models_for(bs);
            const engine::Trajectory traj = engine::run_policy(bs.sample.image, bs.sample.keypoints, topology, models,
                                                               r.config, r.policy, bs.initial);
            const KeypointSet gt = keypoints_to_original(bs.sample.keypoints, bs);
            SampleRecord rec;
            rec.id = bs.sample.id;
            for (const auto& out : traj.outputs) rec.curve.push_back(mre(keypoints_to_original(out, bs), gt));
            for (const auto& spec : noc_specs) rec.noc.push_back(noc(rec.curve, spec.max_clicks, spec.target));
            rr.samples.push_back(std::move(rec));
            for (double s : traj.interaction_seconds) interaction_total += s;
            interaction_count += traj.interaction_seconds.size();
            for (double s : traj.iteration_seconds) {
                iteration_total += s;
                rr.max_iteration_seconds = std::max(rr.max_iteration_seconds, s);
            }
            rr.iteration_count += traj.iteration_seconds.size();
        }
        if (interaction_count) rr.mean_interaction_seconds = interaction_total / interaction_count;
        if (rr.iteration_count) rr.mean_iteration_seconds = iteration_total / rr.iteration_count;
        recompute_aggregates(rr, noc_specs);
        report.runs.push_back(std::move(rr));
    }
    return report;
}

nlohmann::json EvalReport::to_json() const
{
    nlohmann::json specs = nlohmann::json::array();
    for (const auto& s : noc_specs) specs.push_back({{"max_clicks", s.max_clicks}, {"target", s.target}, {"label", s.label()}});
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : runs) {
        nlohmann::json samples = nlohmann::json::array();
        for (const auto& s : r.samples) samples.push_back({{"id", s.id}, {"curve", s.curve}, {"noc", s.noc}});
        nlohmann::json noc_table = nlohmann::json::object();
        for (std::size_t j = 0; j < noc_specs.size(); ++j) noc_table[noc_specs[j].label()] = r.mean_noc[j];
        rs.push_back({{"label", r.run.label},
                      {"policy", engine::to_string(r.run.policy)},
                      {"config", engine::to_json(r.run.config)},
                      {"mean_mre", r.mean_mre},
                      {"noc", noc_table},
                      {"timing",
                       {{"mean_interaction_seconds", r.mean_interaction_seconds},
                        {"mean_iteration_seconds", r.mean_iteration_seconds},
                        {"max_iteration_seconds", r.max_iteration_seconds},
                        {"iterations", r.iteration_count}}},
                      {"samples", samples}});
    }
    return {{"dataset", dataset}, {"noc_specs", specs}, {"runs", rs}};
}

std::string EvalReport::mre_csv() const
{
    std::ostringstream out;
    out.precision(10);
    out << "label,policy,clicks,mean_mre\n";
    for (const auto& r : runs)
        for (std::size_t c = 0; c < r.mean_mre.size(); ++c)
            out << r.run.label << ',' << engine::to_string(r.run.policy) << ',' << c << ',' << r.mean_mre[c] << '\n';
    return out.str();
}

std::string EvalReport::noc_csv() const
{
    std::ostringstream out;
    out.precision(10);
    out << "label,policy,max_clicks,target,mean_noc\n";
    for (const auto& r : runs)
        for (std::size_t j = 0; j < noc_specs.size(); ++j)
            out << r.run.label << ',' << engine::to_string(r.run.policy) << ',' << noc_specs[j].max_clicks << ','
                << noc_specs[j].target << ',' << r.mean_noc[j] << '\n';
    return out.str();
}

void EvalReport::write(const std::filesystem::path& dir) const
{
    std::filesystem::create_directories(dir);
    write_json(dir / "report.json", to_json());
    auto dump = [&](const char* name, const std::string& body) {
        std::ofstream f(dir / name);
        require(f.good(), Errc::io_error, "cannot write " + (dir / name).string());
        f << body;
    };
    dump("report_mre.csv", mre_csv());
    dump("report_noc.csv", noc_csv());
}

}  // namespace keybot::eval
