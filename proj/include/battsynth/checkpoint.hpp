#pragma once

#include <string>
#include <utility>
#include <vector>

#include "battsynth/tensor.hpp"
#include "json.hpp"

namespace battsynth::io {

/// Serialized model state: a kind tag, one JSON metadata object
/// (hyperparameters, normalization statistics, anything the loader needs),
/// and an ordered name -> tensor map. The format is textual:
///
///   battsynth-checkpoint v1
///   <meta as single-line JSON, including "kind">
///   tensor <name> <rank> <dim0> <dim1> ...
///   <values, space separated, 17 significant digits>
///   ...
///   end
///
/// Values round-trip bit-exactly, so identical training runs produce
/// byte-identical files.
struct Checkpoint {
    std::string kind;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, num::TensorPtr>> tensors;

    const num::TensorPtr& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

/// Throws std::runtime_error on missing file or malformed content.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace battsynth::io
