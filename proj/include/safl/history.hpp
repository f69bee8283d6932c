#pragma once

// Server-side memory: every global model, each client's last real update, the
// log of Lipschitz factors and the per-client L-BFGS difference rings.

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

#include "safl/numkit.hpp"

namespace safl {

using Round = std::size_t;
using ClientId = std::size_t;

class HistoryCodec;

/// Global models w^0, w^1, ... kept gapless. An optional retention cap drops
/// the oldest models once exceeded (off by default).
class GlobalLog {
public:
    explicit GlobalLog(std::size_t retention_cap = 0) : cap_(retention_cap) {}

    void record(Round t, ParamVector w);
    const ParamVector& at(Round t) const;
    bool contains(Round t) const noexcept;

    bool empty() const noexcept { return models_.empty(); }
    Round first_round() const noexcept { return first_; }
    Round latest_round() const;
    std::size_t stored() const noexcept { return models_.size(); }

    /// w^t - w^v.
    ParamVector delta_w(Round t, Round v) const;

    friend class HistoryCodec;

private:
    std::size_t cap_;
    Round first_ = 0;
    std::deque<ParamVector> models_;
};

struct ClientRecord {
    ClientId id = 0;
    ParamVector last_update;
    Round last_base_round = 0;
    bool ever_seen = false;

    void update(ParamVector g, Round base_round);
};

/// Append-only list Q of Lipschitz factors.
class LipschitzLog {
public:
    void append(double lambda);
    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

private:
    std::vector<double> values_;
};

/// How the model-difference ring Phi relates to the per-client ring Pi_k.
enum class DiffAnchoring {
    per_client,     // each client owns aligned (dw, dg) pairs
    shared_global,  // one dw ring for all clients, dg rings per client
};

/// Fixed-capacity L-BFGS difference buffers.
class LbfgsBuffers {
public:
    LbfgsBuffers(std::size_t n_clients, std::size_t capacity, DiffAnchoring anchoring = DiffAnchoring::per_client);

    void push(ClientId k, ParamVector dw, ParamVector dg);

    /// Aligned (Phi, Pi_k) views for client k, oldest first, equal lengths.
    std::vector<ParamVector> model_diffs(ClientId k) const;
    std::vector<ParamVector> update_diffs(ClientId k) const;
    std::size_t pair_count(ClientId k) const;

    std::size_t capacity() const noexcept { return capacity_; }
    DiffAnchoring anchoring() const noexcept { return anchoring_; }
    std::size_t n_clients() const noexcept { return update_rings_.size(); }
    /// Total number of vectors currently held.
    std::size_t stored_vectors() const noexcept;

    void clear(ClientId k);

    friend class HistoryCodec;

private:
    using Ring = std::deque<ParamVector>;
    const Ring& dw_ring(ClientId k) const;
    static void push_ring(Ring& r, ParamVector v, std::size_t cap);

    std::size_t capacity_;
    DiffAnchoring anchoring_;
    std::vector<Ring> model_rings_;  // one per client, or a single shared ring
    std::vector<Ring> update_rings_;
};

/// Everything the server remembers across rounds.
struct HistoryStore {
    HistoryStore(std::size_t n_clients, std::size_t lbfgs_capacity,
                 DiffAnchoring anchoring = DiffAnchoring::per_client, std::size_t retention_cap = 0);

    GlobalLog globals;
    std::vector<ClientRecord> clients;
    LipschitzLog lipschitz;
    LbfgsBuffers buffers;

    ClientRecord& client(ClientId k);
    const ClientRecord& client(ClientId k) const;
    std::size_t n_clients() const noexcept { return clients.size(); }
};

/// Versioned JSON checkpoint of a HistoryStore.
class HistoryCodec {
public:
    static constexpr int kSchemaVersion = 1;
    static void save(std::ostream& os, const HistoryStore& h);
    static HistoryStore load(std::istream& is);
};

}  // namespace safl
