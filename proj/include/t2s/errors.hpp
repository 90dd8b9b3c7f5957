#pragma once

#include <stdexcept>
#include <string>

namespace t2s {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension / shape disagreements between tensors.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Violated API precondition (bad arguments, unregistered masks, duplicate ids, ...).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Pool capacity overrun: j > n, or not enough unused rows left to fill a task mask.
struct CapacityError : Error {
    explicit CapacityError(const std::string& msg) : Error(msg) {}
};

// A Pattention call or sublayer mask ended up with zero parameter tokens.
struct EmptyPoolError : Error {
    explicit EmptyPoolError(const std::string& msg) : Error(msg) {}
};

// simulate_step called past the episode horizon.
struct EpisodeOverError : Error {
    explicit EpisodeOverError(const std::string& msg) : Error(msg) {}
};

// Scripted expert could not complete a demonstration.
struct SuiteError : Error {
    explicit SuiteError(const std::string& msg) : Error(msg) {}
};

// Training loss became NaN or blew past the guard threshold.
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

// nbt() on a single-task matrix.
struct UndefinedMetricError : Error {
    explicit UndefinedMetricError(const std::string& msg) : Error(msg) {}
};

// Bad config file / unknown key / invalid value.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Checkpoint or table file could not be read back; message names the field.
struct LoadError : Error {
    explicit LoadError(const std::string& msg) : Error(msg) {}
};

}  // namespace t2s
