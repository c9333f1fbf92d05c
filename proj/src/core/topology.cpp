#include "keybot/core/topology.hpp"

#include <algorithm>
#include <regex>

#include "keybot/core/error.hpp"

namespace keybot {

SpineTopology::SpineTopology(std::string name, int num_keypoints, std::vector<Vertebra> vertebrae,
                             std::vector<std::pair<int, int>> lr_pairs, std::vector<int> detectable_indices)
    : name_(std::move(name)),
      num_keypoints_(num_keypoints),
      vertebrae_(std::move(vertebrae)),
      lr_pairs_(std::move(lr_pairs)),
      detectable_(std::move(detectable_indices))
{
    validate();
    vertebra_of_.assign(num_keypoints_, -1);
    for (std::size_t v = 0; v < vertebrae_.size(); ++v)
        for (int i : vertebrae_[v].indices) vertebra_of_[i] = static_cast<int>(v);
}

void SpineTopology::validate() const
{
    require(num_keypoints_ > 0, Errc::invalid_argument, "topology needs at least one keypoint");
    std::vector<int> seen(num_keypoints_, 0);
    for (const auto& v : vertebrae_) {
        require(!v.indices.empty() && v.indices.size() <= 4, Errc::invalid_argument,
                "vertebra descriptors hold 1..4 indices");
        for (int i : v.indices) {
            require(i >= 0 && i < num_keypoints_, Errc::out_of_range, "vertebra index out of range");
            ++seen[i];
        }
    }
    for (int count : seen)
        require(count == 1, Errc::invalid_argument, "every keypoint must belong to exactly one vertebra");

    std::vector<int> paired(num_keypoints_, 0);
    for (auto [l, r] : lr_pairs_) {
        require(l >= 0 && l < num_keypoints_ && r >= 0 && r < num_keypoints_ && l != r, Errc::out_of_range,
                "lr pair index out of range");
        require(++paired[l] == 1 && ++paired[r] == 1, Errc::invalid_argument, "lr pairs must be disjoint");
        bool same = false;
        for (const auto& v : vertebrae_) {
            bool has_l = std::find(v.indices.begin(), v.indices.end(), l) != v.indices.end();
            bool has_r = std::find(v.indices.begin(), v.indices.end(), r) != v.indices.end();
            same = same || (has_l && has_r);
        }
        require(same, Errc::invalid_argument, "lr pair members must share a vertebra");
    }
    for (int i : detectable_)
        require(i >= 0 && i < num_keypoints_, Errc::out_of_range, "detectable index out of range");
    require(std::is_sorted(detectable_.begin(), detectable_.end()) &&
                std::adjacent_find(detectable_.begin(), detectable_.end()) == detectable_.end(),
            Errc::invalid_argument, "detectable indices must be strictly increasing");
}

SpineTopology SpineTopology::column(std::string name, int num_full, int num_trailing)
{
    require(num_full >= 1 && num_trailing >= 0 && num_trailing <= 4, Errc::invalid_argument,
            "column needs >= 1 vertebra and <= 4 trailing points");
    std::vector<Vertebra> verts;
    std::vector<std::pair<int, int>> pairs;
    std::vector<int> detectable;
    for (int v = 0; v < num_full; ++v) {
        int b = 4 * v;
        verts.push_back({{b, b + 1, b + 2, b + 3}});
        pairs.emplace_back(b, b + 1);
        pairs.emplace_back(b + 2, b + 3);
        for (int j = 0; j < 4; ++j) detectable.push_back(b + j);
    }
    if (num_trailing > 0) {
        Vertebra tail;
        for (int j = 0; j < num_trailing; ++j) tail.indices.push_back(4 * num_full + j);
        verts.push_back(std::move(tail));
    }
    return SpineTopology(std::move(name), 4 * num_full + num_trailing, std::move(verts), std::move(pairs),
                         std::move(detectable));
}

SpineTopology SpineTopology::aasce() { return column("aasce", 17); }
SpineTopology SpineTopology::buu_ap() { return column("buu_ap", 5); }
SpineTopology SpineTopology::buu_la() { return column("buu_la", 5, 2); }

SpineTopology SpineTopology::preset(const std::string& name)
{
    if (name == "aasce") return aasce();
    if (name == "buu_ap") return buu_ap();
    if (name == "buu_la") return buu_la();
    // "column:<full>" or "column:<full>:<trailing>" for ad-hoc columns.
    static const std::regex ad_hoc(R"(column:([1-9][0-9]{0,2})(?::([0-9]{1,2}))?)");
    std::smatch m;
    if (std::regex_match(name, m, ad_hoc))
        return column(name, std::stoi(m[1]), m[2].matched ? std::stoi(m[2]) : 0);
    throw Error(Errc::invalid_argument, "unknown topology preset '" + name + "'");
}

std::vector<std::string> SpineTopology::preset_names() { return {"aasce", "buu_ap", "buu_la"}; }

std::vector<int> SpineTopology::full_vertebrae() const
{
    std::vector<int> out;
    for (std::size_t v = 0; v < vertebrae_.size(); ++v)
        if (vertebrae_[v].is_full()) out.push_back(static_cast<int>(v));
    return out;
}

bool SpineTopology::is_detectable(int index) const
{
    return std::binary_search(detectable_.begin(), detectable_.end(), index);
}

int SpineTopology::vertebra_of(int index) const
{
    require(index >= 0 && index < num_keypoints_, Errc::out_of_range, "keypoint index out of range");
    return vertebra_of_[index];
}

}  // namespace keybot
