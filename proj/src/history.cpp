#include "safl/history.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace safl {

void GlobalLog::record(Round t, ParamVector w) {
    const Round expected = first_ + models_.size();
    if (t != expected)
        throw Error("GlobalLog: expected round " + std::to_string(expected) + ", got " + std::to_string(t));
    if (!models_.empty() && w.size() != models_.front().size()) throw Error("GlobalLog: model dimension changed");
    require_finite(w, "GlobalLog: non-finite model");
    models_.push_back(std::move(w));
    if (cap_ > 0 && models_.size() > cap_) {
        models_.pop_front();
        ++first_;
    }
}

bool GlobalLog::contains(Round t) const noexcept { return t >= first_ && t < first_ + models_.size(); }

const ParamVector& GlobalLog::at(Round t) const {
    if (!contains(t)) throw Error("unknown base model: round " + std::to_string(t));
    return models_[t - first_];
}

Round GlobalLog::latest_round() const {
    if (models_.empty()) throw Error("GlobalLog: empty");
    return first_ + models_.size() - 1;
}

ParamVector GlobalLog::delta_w(Round t, Round v) const { return at(t) - at(v); }

void ClientRecord::update(ParamVector g, Round base_round) {
    last_update = std::move(g);
    last_base_round = base_round;
    ever_seen = true;
}

void LipschitzLog::append(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("LipschitzLog: entries must be finite and >= 0");
    values_.push_back(lambda);
}

LbfgsBuffers::LbfgsBuffers(std::size_t n_clients, std::size_t capacity, DiffAnchoring anchoring)
    : capacity_(capacity),
      anchoring_(anchoring),
      model_rings_(anchoring == DiffAnchoring::per_client ? n_clients : 1),
      update_rings_(n_clients) {
    if (capacity == 0) throw Error("LbfgsBuffers: capacity must be >= 1");
}

void LbfgsBuffers::push_ring(Ring& r, ParamVector v, std::size_t cap) {
    r.push_back(std::move(v));
    while (r.size() > cap) r.pop_front();
}

const LbfgsBuffers::Ring& LbfgsBuffers::dw_ring(ClientId k) const {
    return anchoring_ == DiffAnchoring::per_client ? model_rings_.at(k) : model_rings_.front();
}

void LbfgsBuffers::push(ClientId k, ParamVector dw, ParamVector dg) {
    if (k >= update_rings_.size()) throw Error("LbfgsBuffers: unknown client");
    if (dw.size() != dg.size()) throw Error("LbfgsBuffers: length mismatch");
    const auto& ring = dw_ring(k);
    if (!ring.empty() && ring.front().size() != dw.size()) throw Error("LbfgsBuffers: length mismatch");
    auto& model_ring = anchoring_ == DiffAnchoring::per_client ? model_rings_[k] : model_rings_.front();
    push_ring(model_ring, std::move(dw), capacity_);
    push_ring(update_rings_[k], std::move(dg), capacity_);
}

std::size_t LbfgsBuffers::pair_count(ClientId k) const {
    return std::min(dw_ring(k).size(), update_rings_.at(k).size());
}

std::vector<ParamVector> LbfgsBuffers::model_diffs(ClientId k) const {
    const auto& r = dw_ring(k);
    const std::size_t s = pair_count(k);
    return {r.end() - static_cast<std::ptrdiff_t>(s), r.end()};
}

std::vector<ParamVector> LbfgsBuffers::update_diffs(ClientId k) const {
    const auto& r = update_rings_.at(k);
    const std::size_t s = pair_count(k);
    return {r.end() - static_cast<std::ptrdiff_t>(s), r.end()};
}

std::size_t LbfgsBuffers::stored_vectors() const noexcept {
    std::size_t total = 0;
    for (const auto& r : model_rings_) total += r.size();
    for (const auto& r : update_rings_) total += r.size();
    return total;
}

void LbfgsBuffers::clear(ClientId k) {
    update_rings_.at(k).clear();
    if (anchoring_ == DiffAnchoring::per_client) model_rings_.at(k).clear();
}

HistoryStore::HistoryStore(std::size_t n_clients, std::size_t lbfgs_capacity, DiffAnchoring anchoring,
                           std::size_t retention_cap)
    : globals(retention_cap), clients(n_clients), buffers(n_clients, lbfgs_capacity, anchoring) {
    for (ClientId k = 0; k < n_clients; ++k) clients[k].id = k;
}

ClientRecord& HistoryStore::client(ClientId k) {
    if (k >= clients.size()) throw Error("unknown client " + std::to_string(k));
    return clients[k];
}

const ClientRecord& HistoryStore::client(ClientId k) const {
    if (k >= clients.size()) throw Error("unknown client " + std::to_string(k));
    return clients[k];
}

namespace {

using nlohmann::json;

json ring_to_json(const std::deque<ParamVector>& r) {
    json out = json::array();
    for (const auto& v : r) out.push_back(v.values());
    return out;
}

std::deque<ParamVector> ring_from_json(const json& j) {
    std::deque<ParamVector> r;
    for (const auto& v : j) r.emplace_back(v.get<std::vector<double>>());
    return r;
}

}  // namespace

void HistoryCodec::save(std::ostream& os, const HistoryStore& h) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["globals"]["first_round"] = h.globals.first_round();
    j["globals"]["retention_cap"] = h.globals.cap_;
    json models = json::array();
    for (const auto& w : h.globals.models_) models.push_back(w.values());
    j["globals"]["models"] = std::move(models);

    json clients = json::array();
    for (const auto& c : h.clients) {
        clients.push_back({{"id", c.id},
                           {"ever_seen", c.ever_seen},
                           {"last_base_round", c.last_base_round},
                           {"last_update", c.last_update.values()}});
    }
    j["clients"] = std::move(clients);
    j["lipschitz"] = std::vector<double>(h.lipschitz.values().begin(), h.lipschitz.values().end());

    const auto& b = h.buffers;
    j["buffers"]["capacity"] = b.capacity_;
    j["buffers"]["anchoring"] = b.anchoring_ == DiffAnchoring::per_client ? "per_client" : "shared_global";
    json mr = json::array();
    for (const auto& r : b.model_rings_) mr.push_back(ring_to_json(r));
    json ur = json::array();
    for (const auto& r : b.update_rings_) ur.push_back(ring_to_json(r));
    j["buffers"]["model_rings"] = std::move(mr);
    j["buffers"]["update_rings"] = std::move(ur);
    os << j.dump() << '\n';
}

HistoryStore HistoryCodec::load(std::istream& is) {
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw Error(std::string("history checkpoint: ") + e.what());
    }
    if (j.value("schema_version", 0) != kSchemaVersion) throw Error("history checkpoint: unsupported schema_version");
    try {
        const auto& jb = j.at("buffers");
        const auto anchoring =
            jb.at("anchoring").get<std::string>() == "per_client" ? DiffAnchoring::per_client : DiffAnchoring::shared_global;
        const auto& jc = j.at("clients");
        HistoryStore h(jc.size(), jb.at("capacity").get<std::size_t>(), anchoring,
                       j.at("globals").at("retention_cap").get<std::size_t>());

        h.globals.first_ = j["globals"].at("first_round").get<Round>();
        for (const auto& w : j["globals"].at("models")) h.globals.models_.emplace_back(w.get<std::vector<double>>());

        for (std::size_t k = 0; k < jc.size(); ++k) {
            auto& c = h.clients[k];
            c.id = jc[k].at("id").get<ClientId>();
            c.ever_seen = jc[k].at("ever_seen").get<bool>();
            c.last_base_round = jc[k].at("last_base_round").get<Round>();
            c.last_update = ParamVector(jc[k].at("last_update").get<std::vector<double>>());
        }
        for (double l : j.at("lipschitz")) h.lipschitz.append(l);

        const auto& mr = jb.at("model_rings");
        const auto& ur = jb.at("update_rings");
        if (mr.size() != h.buffers.model_rings_.size() || ur.size() != h.buffers.update_rings_.size())
            throw Error("history checkpoint: ring count mismatch");
        for (std::size_t r = 0; r < mr.size(); ++r) h.buffers.model_rings_[r] = ring_from_json(mr[r]);
        for (std::size_t r = 0; r < ur.size(); ++r) h.buffers.update_rings_[r] = ring_from_json(ur[r]);
        return h;
    } catch (const json::exception& e) {
        throw Error(std::string("history checkpoint: ") + e.what());
    }
}

}  // namespace safl
