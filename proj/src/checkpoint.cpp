#include "battsynth/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace battsynth::io {

const num::TensorPtr& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw std::runtime_error("checkpoint: no tensor named \"" + name + "\"");
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write \"" + path + "\"");

    nlohmann::json meta = ckpt.meta;
    meta["kind"] = ckpt.kind;
    out << "battsynth-checkpoint v1\n" << meta.dump() << "\n";

    char buf[40];
    for (const auto& [name, t] : ckpt.tensors) {
        out << "tensor " << name << " " << t->rank();
        for (std::size_t d : t->shape) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t->size(); ++i) {
            if (i) out << " ";
            std::snprintf(buf, sizeof buf, "%.17g", t->data[i]);
            out << buf;
        }
        out << "\n";
    }
    out << "end\n";
    if (!out) throw std::runtime_error("save_checkpoint: write failure on \"" + path + "\"");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open \"" + path + "\"");

    std::string line;
    if (!std::getline(in, line) || line != "battsynth-checkpoint v1")
        throw std::runtime_error("load_checkpoint: \"" + path +
                                 "\" is not a battsynth checkpoint (bad magic line)");
    if (!std::getline(in, line))
        throw std::runtime_error("load_checkpoint: \"" + path + "\" is truncated (no metadata)");

    Checkpoint ckpt;
    try {
        ckpt.meta = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: bad metadata JSON in \"" + path +
                                 "\": " + e.what());
    }
    if (!ckpt.meta.contains("kind") || !ckpt.meta["kind"].is_string())
        throw std::runtime_error("load_checkpoint: metadata of \"" + path +
                                 "\" is missing a string \"kind\"");
    ckpt.kind = ckpt.meta["kind"].get<std::string>();

    while (std::getline(in, line)) {
        if (line == "end") return ckpt;
        std::istringstream head(line);
        std::string tag, name;
        std::size_t rank = 0;
        if (!(head >> tag >> name >> rank) || tag != "tensor")
            throw std::runtime_error("load_checkpoint: malformed tensor header \"" + line +
                                     "\" in \"" + path + "\"");
        std::vector<std::size_t> dims(rank);
        std::size_t count = 1;
        for (auto& d : dims) {
            if (!(head >> d)) throw std::runtime_error("load_checkpoint: bad shape for \"" +
                                                       name + "\" in \"" + path + "\"");
            count *= d;
        }
        if (!std::getline(in, line))
            throw std::runtime_error("load_checkpoint: missing values for \"" + name +
                                     "\" in \"" + path + "\"");
        std::istringstream body(line);
        std::vector<double> values(count);
        for (auto& v : values) {
            if (!(body >> v))
                throw std::runtime_error("load_checkpoint: too few values for \"" + name +
                                         "\" in \"" + path + "\"");
        }
        ckpt.tensors.emplace_back(name, num::Tensor::make(std::move(values), std::move(dims)));
    }
    throw std::runtime_error("load_checkpoint: \"" + path + "\" is truncated (no end marker)");
}

}  // namespace battsynth::io
