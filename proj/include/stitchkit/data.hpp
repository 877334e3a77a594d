#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stitchkit/nn.hpp"

namespace stitchkit {

struct Transition {
    int traj_id = 0;
    int t = 0;
    Vec state;
    Vec action;
    double reward = 0.0;
    Vec next_state;
    bool done = false;
};

bool operator==(const Transition& a, const Transition& b);

struct Trajectory {
    int traj_id = 0;
    std::vector<Transition> transitions;

    double reward_sum() const;
};

// Back-reference into the flat state index. role: current = state of the
// transition at (traj_id, t), next = its next_state.
struct StateRef {
    int traj_id = 0;
    int t = 0;
    bool next = false;
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    int d_s = 0;
    int d_a = 0;
    std::vector<StateRef> state_index;  // every state occurrence exactly once

    std::size_t transition_count() const;
    const Trajectory* find_trajectory(int traj_id) const;
    const Vec& state_at(const StateRef& ref) const;
    void rebuild_index();
    // Throws IntegrityError on continuity/shape/done violations.
    void validate() const;
};

bool operator==(const Dataset& a, const Dataset& b);

Dataset load_dataset(const std::string& path);
// Atomic: writes a temp file next to `path` and renames it into place.
void save_dataset(const Dataset& dataset, const std::string& path);

struct NormStats {
    Vec mean;
    Vec std;  // floored at 1e-6 per dimension

    Vec normalize(const Vec& v) const;
    Vec denormalize(const Vec& v) const;
};

// Two-pass mean/std over every state occurrence. Requires >= 2 transitions.
NormStats normalization_stats(const Dataset& dataset);

// 0.1 x mean per-dimension state std; the default neighborhood radius.
double default_epsilon(const Dataset& dataset);

struct CandidateSet {
    struct Entry {
        Vec state;
        int traj_id = 0;
        int step = 0;    // canonical position: transition index of this state
        bool tail = false;  // true when the state is a trajectory's final next_state
        double dist = 0.0;  // distance that admitted the entry
    };
    std::vector<Entry> entries;
    std::size_t before_cap = 0;  // entry count prior to the top-K cap
    bool capped = false;
};

inline constexpr int kCandidateCap = 64;

// Union of (a) successors of dataset states within eps of s and (b) dataset
// states within eps of s_next. `exclude` names the observed s' occurrence,
// which is the baseline rather than a candidate; pass nullptr to keep all.
CandidateSet candidate_next_states(const Dataset& dataset, const Vec& s,
                                   const Vec& s_next, double eps,
                                   const StateRef* exclude = nullptr,
                                   int cap = kCandidateCap);

}  // namespace stitchkit
