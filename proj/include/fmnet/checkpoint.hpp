#pragma once

#include <map>
#include <string>
#include <vector>

#include "fmnet/graph.hpp"

namespace fmnet {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Versioned binary: magic, version, graph fingerprint, parameter count, then
// named tensors in declaration order as little-endian f32.
void save_checkpoint(const Graph& g, const Executor<float>& exec, const std::string& path,
                     const std::map<std::string, std::string>& meta = {});

struct LoadedCheckpoint {
    uint64_t fingerprint = 0;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

LoadedCheckpoint read_checkpoint(const std::string& path);

struct WarmStartReport {
    int loaded = 0;
    std::vector<std::string> skipped;         // checkpoint tensors with no match
    std::vector<std::string> left_initialized;  // model params not in the checkpoint
};

// strict: the checkpoint fingerprint must match the graph. lenient: load
// whatever matches by name and shape, report the rest.
WarmStartReport warm_start(const Graph& g, Executor<float>& exec, const std::string& path,
                           bool strict);

}  // namespace fmnet
