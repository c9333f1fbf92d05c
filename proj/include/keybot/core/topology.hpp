#pragma once

#include <string>
#include <utility>
#include <vector>

namespace keybot {

enum class CornerRole { top_left = 0, top_right = 1, bottom_left = 2, bottom_right = 3 };

/// Keypoint indices of one vertebra, ordered by corner role. A "full"
/// vertebra has all four corners; trailing landmarks (e.g. the two extra
/// lateral-view points) are grouped into a partial descriptor.
struct Vertebra {
    std::vector<int> indices;

    bool is_full() const { return indices.size() == 4; }
};

class SpineTopology {
public:
    SpineTopology(std::string name, int num_keypoints, std::vector<Vertebra> vertebrae,
                  std::vector<std::pair<int, int>> lr_pairs, std::vector<int> detectable_indices);

    /// Column of `num_full` four-corner vertebrae in TL, TR, BL, BR order,
    /// optionally followed by `num_trailing` extra points excluded from detection.
    static SpineTopology column(std::string name, int num_full, int num_trailing = 0);

    static SpineTopology aasce();   // 17 vertebrae, K = 68
    static SpineTopology buu_ap();  // 5 vertebrae, K = 20
    static SpineTopology buu_la();  // 5 vertebrae + 2 trailing, K = 22
    /// A preset by name, or "column:<full>[:<trailing>]" for an ad-hoc column.
    static SpineTopology preset(const std::string& name);
    static std::vector<std::string> preset_names();

    const std::string& name() const { return name_; }
    int num_keypoints() const { return num_keypoints_; }
    const std::vector<Vertebra>& vertebrae() const { return vertebrae_; }
    const std::vector<std::pair<int, int>>& lr_pairs() const { return lr_pairs_; }
    const std::vector<int>& detectable_indices() const { return detectable_; }

    /// Indices into vertebrae() of the four-corner vertebrae, top to bottom.
    std::vector<int> full_vertebrae() const;
    bool is_detectable(int index) const;
    /// Vertebra descriptor index containing the keypoint.
    int vertebra_of(int index) const;

private:
    void validate() const;

    std::string name_;
    int num_keypoints_;
    std::vector<Vertebra> vertebrae_;
    std::vector<std::pair<int, int>> lr_pairs_;
    std::vector<int> detectable_;
    std::vector<int> vertebra_of_;
};

}  // namespace keybot
