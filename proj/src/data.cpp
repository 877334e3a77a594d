#include "stitchkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

double dist2(const Vec& a, const Vec& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i] - b[i];
        d += x * x;
    }
    return d;
}

void require_finite(const Vec& v, const char* what, int traj, int t) {
    for (double x : v)
        if (!std::isfinite(x))
            throw IntegrityError(std::string("non-finite ") + what + " at traj " +
                                 std::to_string(traj) + " step " + std::to_string(t));
}

}  // namespace

bool operator==(const Transition& a, const Transition& b) {
    return a.traj_id == b.traj_id && a.t == b.t && a.state == b.state &&
           a.action == b.action && a.reward == b.reward &&
           a.next_state == b.next_state && a.done == b.done;
}

double Trajectory::reward_sum() const {
    double s = 0.0;
    for (const auto& tr : transitions) s += tr.reward;
    return s;
}

std::size_t Dataset::transition_count() const {
    std::size_t n = 0;
    for (const auto& traj : trajectories) n += traj.transitions.size();
    return n;
}

const Trajectory* Dataset::find_trajectory(int traj_id) const {
    for (const auto& traj : trajectories)
        if (traj.traj_id == traj_id) return &traj;
    return nullptr;
}

const Vec& Dataset::state_at(const StateRef& ref) const {
    const Trajectory* traj = find_trajectory(ref.traj_id);
    if (traj == nullptr || ref.t < 0 ||
        ref.t >= static_cast<int>(traj->transitions.size()))
        throw ConfigError("state_at: reference outside dataset");
    const Transition& tr = traj->transitions[static_cast<std::size_t>(ref.t)];
    return ref.next ? tr.next_state : tr.state;
}

void Dataset::rebuild_index() {
    state_index.clear();
    for (const auto& traj : trajectories) {
        for (const auto& tr : traj.transitions) {
            state_index.push_back({traj.traj_id, tr.t, false});
            state_index.push_back({traj.traj_id, tr.t, true});
        }
    }
}

void Dataset::validate() const {
    std::unordered_map<int, bool> seen;
    for (const auto& traj : trajectories) {
        if (seen.count(traj.traj_id))
            throw IntegrityError("duplicate traj_id " + std::to_string(traj.traj_id));
        seen[traj.traj_id] = true;
        const auto n = traj.transitions.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Transition& tr = traj.transitions[i];
            if (tr.traj_id != traj.traj_id)
                throw IntegrityError("traj_id mismatch inside trajectory " +
                                     std::to_string(traj.traj_id));
            if (tr.t != static_cast<int>(i))
                throw IntegrityError("non-contiguous step index at traj " +
                                     std::to_string(traj.traj_id) + " step " +
                                     std::to_string(tr.t));
            if (tr.state.size() != static_cast<std::size_t>(d_s) ||
                tr.next_state.size() != static_cast<std::size_t>(d_s))
                throw IntegrityError("state dim mismatch at traj " +
                                     std::to_string(traj.traj_id) + " step " +
                                     std::to_string(tr.t));
            if (tr.action.size() != static_cast<std::size_t>(d_a))
                throw IntegrityError("action dim mismatch at traj " +
                                     std::to_string(traj.traj_id) + " step " +
                                     std::to_string(tr.t));
            require_finite(tr.state, "state", tr.traj_id, tr.t);
            require_finite(tr.action, "action", tr.traj_id, tr.t);
            require_finite(tr.next_state, "next_state", tr.traj_id, tr.t);
            if (!std::isfinite(tr.reward))
                throw IntegrityError("non-finite reward at traj " +
                                     std::to_string(tr.traj_id) + " step " +
                                     std::to_string(tr.t));
            if (tr.done && i + 1 != n)
                throw IntegrityError("done before the last transition of traj " +
                                     std::to_string(traj.traj_id) + " at step " +
                                     std::to_string(tr.t));
            if (i + 1 < n && tr.next_state != traj.transitions[i + 1].state)
                throw IntegrityError("continuity violation: next_state != state at traj " +
                                     std::to_string(traj.traj_id) + " step " +
                                     std::to_string(tr.t));
        }
    }
}

bool operator==(const Dataset& a, const Dataset& b) {
    if (a.d_s != b.d_s || a.d_a != b.d_a ||
        a.trajectories.size() != b.trajectories.size())
        return false;
    for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
        const auto& ta = a.trajectories[i];
        const auto& tb = b.trajectories[i];
        if (ta.traj_id != tb.traj_id || ta.transitions != tb.transitions) return false;
    }
    return true;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": missing header line");
    Dataset ds;
    try {
        const auto header = nlohmann::json::parse(line);
        if (header.value("version", 0) != 1)
            throw ParseError(path + ":1: unsupported dataset version");
        ds.d_s = header.at("d_s").get<int>();
        ds.d_a = header.at("d_a").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ":1: bad header: " + e.what());
    }
    std::unordered_map<int, std::size_t> slot_of;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Transition tr;
        try {
            const auto j = nlohmann::json::parse(line);
            tr.traj_id = j.at("traj").get<int>();
            tr.t = j.at("t").get<int>();
            tr.state = j.at("s").get<Vec>();
            tr.action = j.at("a").get<Vec>();
            tr.reward = j.at("r").get<double>();
            tr.next_state = j.at("s2").get<Vec>();
            tr.done = j.at("done").get<bool>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": malformed transition: " + e.what());
        }
        auto it = slot_of.find(tr.traj_id);
        if (it == slot_of.end()) {
            slot_of[tr.traj_id] = ds.trajectories.size();
            ds.trajectories.push_back({tr.traj_id, {}});
            it = slot_of.find(tr.traj_id);
        }
        ds.trajectories[it->second].transitions.push_back(std::move(tr));
    }
    ds.validate();
    ds.rebuild_index();
    return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    dataset.validate();
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        nlohmann::json header = {{"version", 1}, {"d_s", dataset.d_s}, {"d_a", dataset.d_a}};
        out << header.dump() << "\n";
        for (const auto& traj : dataset.trajectories) {
            for (const auto& tr : traj.transitions) {
                nlohmann::json j = {{"traj", tr.traj_id}, {"t", tr.t},
                                    {"s", tr.state},     {"a", tr.action},
                                    {"r", tr.reward},    {"s2", tr.next_state},
                                    {"done", tr.done}};
                out << j.dump() << "\n";
            }
        }
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp + " -> " + path + ": " + ec.message());
}

NormStats normalization_stats(const Dataset& dataset) {
    if (dataset.transition_count() < 2)
        throw ConfigError("normalization_stats needs at least 2 transitions");
    const int d = dataset.d_s;
    NormStats stats;
    stats.mean.assign(d, 0.0);
    stats.std.assign(d, 0.0);
    std::size_t n = 0;
    auto accumulate = [&](const Vec& v) {
        for (int i = 0; i < d; ++i) stats.mean[i] += v[i];
        ++n;
    };
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions) {
            accumulate(tr.state);
            accumulate(tr.next_state);
        }
    for (int i = 0; i < d; ++i) stats.mean[i] /= static_cast<double>(n);
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions)
            for (const Vec* v : {&tr.state, &tr.next_state})
                for (int i = 0; i < d; ++i) {
                    const double x = (*v)[i] - stats.mean[i];
                    stats.std[i] += x * x;
                }
    for (int i = 0; i < d; ++i)
        stats.std[i] = std::max(1e-6, std::sqrt(stats.std[i] / static_cast<double>(n)));
    return stats;
}

Vec NormStats::normalize(const Vec& v) const {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean[i]) / std[i];
    return out;
}

Vec NormStats::denormalize(const Vec& v) const {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * std[i] + mean[i];
    return out;
}

double default_epsilon(const Dataset& dataset) {
    const NormStats stats = normalization_stats(dataset);
    double mean_std = 0.0;
    for (double s : stats.std) mean_std += s;
    mean_std /= static_cast<double>(stats.std.size());
    return 0.1 * mean_std;
}

CandidateSet candidate_next_states(const Dataset& dataset, const Vec& s,
                                   const Vec& s_next, double eps,
                                   const StateRef* exclude, int cap) {
    if (eps < 0.0) throw ConfigError("candidate_next_states: eps must be >= 0");
    const double eps2 = eps * eps;
    // Key: canonical position (traj slot, step, tail bit).
    std::unordered_map<std::uint64_t, CandidateSet::Entry> found;
    auto offer = [&](const Trajectory& traj, int step, bool tail, double dist) {
        if (exclude != nullptr && exclude->traj_id == traj.traj_id) {
            // The exclude ref names the observed s' occurrence; its canonical
            // position is (t, next) == (t+1, current) when t+1 exists.
            const Transition& last = traj.transitions.back();
            int ex_step = exclude->t;
            bool ex_tail = exclude->next;
            if (exclude->next && exclude->t < last.t) {
                ex_step = exclude->t + 1;
                ex_tail = false;
            }
            if (ex_step == step && ex_tail == tail) return;
        }
        const std::uint64_t key =
            (static_cast<std::uint64_t>(static_cast<std::uint32_t>(traj.traj_id)) << 32) |
            (static_cast<std::uint64_t>(static_cast<std::uint32_t>(step)) << 1) |
            (tail ? 1u : 0u);
        auto it = found.find(key);
        if (it == found.end()) {
            const Transition& tr = traj.transitions[static_cast<std::size_t>(step)];
            found.emplace(key, CandidateSet::Entry{tail ? tr.next_state : tr.state,
                                                   traj.traj_id, step, tail, dist});
        } else if (dist < it->second.dist) {
            it->second.dist = dist;
        }
    };
    for (const auto& traj : dataset.trajectories) {
        const int n = static_cast<int>(traj.transitions.size());
        for (int i = 0; i < n; ++i) {
            const Transition& tr = traj.transitions[static_cast<std::size_t>(i)];
            // (a) successor of any state within eps of s; terminal transitions
            // have no successor to offer.
            if (!tr.done) {
                const double da = dist2(tr.state, s);
                if (da <= eps2) {
                    if (i + 1 < n)
                        offer(traj, i + 1, false, std::sqrt(da));
                    else
                        offer(traj, i, true, std::sqrt(da));
                }
            }
            // (b) any state within eps of the observed next state.
            const double db = dist2(tr.state, s_next);
            if (db <= eps2) offer(traj, i, false, std::sqrt(db));
        }
        if (n > 0) {
            const double dt = dist2(traj.transitions.back().next_state, s_next);
            if (dt <= eps2) offer(traj, n - 1, true, std::sqrt(dt));
        }
    }
    CandidateSet set;
    set.entries.reserve(found.size());
    for (auto& [key, entry] : found) set.entries.push_back(std::move(entry));
    std::sort(set.entries.begin(), set.entries.end(),
              [](const CandidateSet::Entry& a, const CandidateSet::Entry& b) {
                  if (a.dist != b.dist) return a.dist < b.dist;
                  if (a.traj_id != b.traj_id) return a.traj_id < b.traj_id;
                  if (a.step != b.step) return a.step < b.step;
                  return a.tail < b.tail;
              });
    set.before_cap = set.entries.size();
    if (cap > 0 && set.entries.size() > static_cast<std::size_t>(cap)) {
        set.entries.resize(static_cast<std::size_t>(cap));
        set.capped = true;
    }
    return set;
}

}  // namespace stitchkit
