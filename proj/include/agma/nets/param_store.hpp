#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "agma/ad/tape.hpp"
#include "agma/util/errors.hpp"

namespace agma::nets {

using ad::Matrix;

/// Flat registry of named trainable tensors, each with a gradient slot of
/// the same shape. Entries are never removed and their addresses are stable,
/// so a Tape may hold pointers to gradient slots for the duration of a step.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Matrix value;
        Matrix grad;
    };

    ParamStore() = default;
    ParamStore(const ParamStore& other) : seed_(other.seed_) {
        for (const Entry& e : other.entries_) add(e.name, e.value);
    }
    ParamStore& operator=(const ParamStore& other) {
        if (this == &other) return *this;
        entries_.clear();
        index_.clear();
        seed_ = other.seed_;
        for (const Entry& e : other.entries_) add(e.name, e.value);
        return *this;
    }
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Matrix& add(const std::string& name, Matrix init) {
        if (index_.count(name) != 0) throw ContractError("parameter already registered: " + name);
        if (!init.allFinite()) throw NumericError("non-finite initial value for " + name);
        Matrix zero = Matrix::Zero(init.rows(), init.cols());
        entries_.push_back(Entry{name, std::move(init), std::move(zero)});
        index_.emplace(name, entries_.size() - 1);
        return entries_.back().value;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return entries_[it->second];
    }
    const Entry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return entries_[it->second];
    }

    Matrix& value(const std::string& name) { return entry(name).value; }
    const Matrix& value(const std::string& name) const { return entry(name).value; }
    Matrix& grad(const std::string& name) { return entry(name).grad; }
    const Matrix& grad(const std::string& name) const { return entry(name).grad; }

    std::deque<Entry>& entries() { return entries_; }
    const std::deque<Entry>& entries() const { return entries_; }

    void zero_grad() {
        for (Entry& e : entries_) e.grad.setZero();
    }

    bool all_finite() const {
        for (const Entry& e : entries_)
            if (!e.value.allFinite()) return false;
        return true;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const Entry& e : entries_) n += static_cast<std::size_t>(e.value.size());
        return n;
    }

    std::uint64_t seed() const { return seed_; }
    void set_seed(std::uint64_t s) { seed_ = s; }

    /// Registers `name` as a differentiable leaf on `tape`; its gradient is
    /// added into this store when the tape runs backward.
    ad::Var bind(ad::Tape& tape, const std::string& name) {
        Entry& e = entry(name);
        return tape.leaf(e.value, &e.grad);
    }

private:
    std::deque<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t seed_ = 0;
};

/// Binds each parameter at most once per tape.
class Binder {
public:
    Binder(ad::Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}

    ad::Var operator()(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        ad::Var v = store_.bind(tape_, name);
        cache_.emplace(name, v);
        return v;
    }

    ad::Tape& tape() { return tape_; }
    ParamStore& store() { return store_; }
    ad::Var constant(Matrix m) { return tape_.constant(std::move(m)); }

private:
    ad::Tape& tape_;
    ParamStore& store_;
    std::unordered_map<std::string, ad::Var> cache_;
};

/// Uniform fan-in initialisation in [-bound, bound], bound = gain / sqrt(fan_in).
inline Matrix fan_in_uniform(ad::Index rows, ad::Index cols, ad::Index fan_in, double gain, std::mt19937_64& rng) {
    const double bound = gain / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(rows, cols);
    for (ad::Index j = 0; j < cols; ++j)
        for (ad::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
}

// ---------------------------------------------------------------- checkpoint

/// Text container: {"format", "version", "config", "seed", "params": [{name, rows, cols, data}]}.
/// Doubles are written with round-trip precision, so save/load is bitwise exact.
inline nlohmann::json params_to_json(const ParamStore& store) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : store.entries()) {
        std::vector<double> data(static_cast<std::size_t>(e.value.size()));
        for (ad::Index i = 0; i < e.value.rows(); ++i)
            for (ad::Index j = 0; j < e.value.cols(); ++j)
                data[static_cast<std::size_t>(i * e.value.cols() + j)] = e.value(i, j);
        arr.push_back({{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}, {"data", data}});
    }
    return arr;
}

inline void save_checkpoint(const std::string& path, const ParamStore& store, const nlohmann::json& config) {
    nlohmann::json j;
    j["format"] = "agma-checkpoint";
    j["version"] = 1;
    j["config"] = config;
    j["seed"] = store.seed();
    j["params"] = params_to_json(store);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw CheckpointError("cannot write checkpoint " + path);
        out << j.dump() << '\n';
        if (!out) throw CheckpointError("failed writing checkpoint " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into " + path);
}

struct Checkpoint {
    nlohmann::json config;
    ParamStore params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed checkpoint " + path + ": " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "agma-checkpoint" || j.value("version", 0) != 1)
        throw CheckpointError("unsupported checkpoint format in " + path);
    Checkpoint ck;
    try {
        ck.config = j.at("config");
        ck.params.set_seed(j.at("seed").get<std::uint64_t>());
        for (const auto& p : j.at("params")) {
            const auto rows = p.at("rows").get<ad::Index>();
            const auto cols = p.at("cols").get<ad::Index>();
            const auto data = p.at("data").get<std::vector<double>>();
            if (static_cast<ad::Index>(data.size()) != rows * cols)
                throw CheckpointError("parameter size mismatch for " + p.at("name").get<std::string>());
            Matrix m(rows, cols);
            for (ad::Index i = 0; i < rows; ++i)
                for (ad::Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
            ck.params.add(p.at("name").get<std::string>(), std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed checkpoint " + path + ": " + e.what());
    }
    return ck;
}

}  // namespace agma::nets
