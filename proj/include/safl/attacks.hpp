#pragma once

// Poisoning attacks run by malicious clients. Data poisoning (label flip,
// trigger embedding) rewrites a shard once; update manipulation rewrites the
// vector a malicious client uploads every round. The adversary has full
// knowledge: it sees the honest updates and, for the adaptive attack, the
// defender's filter state.

#include <cstddef>
#include <string>
#include <vector>

#include "safl/defense.hpp"
#include "safl/history.hpp"
#include "safl/numkit.hpp"
#include "safl/taskbench.hpp"

namespace safl {

enum class AttackKind { none, labelflip, signflip, gaussian, scaling, minmax, adaptive };

std::string to_string(AttackKind k);
AttackKind attack_from_string(const std::string& s);

/// Trigger-based targeted attacks report ASR next to TER.
bool is_targeted(AttackKind k) noexcept;
/// Attacks that rewrite the client's shard at setup.
bool is_data_poisoning(AttackKind k) noexcept;

inline constexpr double kGaussianAttackStd = 200.0;

struct AttackContext {
    ClientId attacker = 0;
    Round base_round = 0;
    std::vector<ParamVector> benign_updates;
    std::vector<ClientId> malicious_ids;
    ParamVector global_w;
    /// Defender state for the adaptive attack; null when the defense keeps none.
    const HistoryStore* defense_view = nullptr;
};

Dataset labelflip_poison(const Dataset& shard);

ParamVector signflip(const ParamVector& g);

ParamVector gaussian_fabricate(std::size_t d, RngStream& rng);

ParamVector scaling_attack(const ParamVector& g_poisoned, double factor);

/// Shard for the scaling attack: the clean samples plus a triggered,
/// relabelled copy of each.
Dataset backdoor_poison(const Dataset& shard, const TriggerSpec& trig);

/// Pushes the benign mean along its inverted unit direction as far as the
/// largest pairwise benign distance allows.
ParamVector minmax_attack(const AttackContext& ctx);

/// Moves the attacker's previous upload against the benign mean by just under
/// the defender's Lipschitz budget. Falls back to minmax_attack when the
/// attacker has no record or the defender's log is empty.
ParamVector adaptive_attack(const AttackContext& ctx, const SecureAflConfig& cfg);

}  // namespace safl
