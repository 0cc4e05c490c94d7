#include "fmnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fmnet/util.hpp"

namespace fmnet {

namespace {

constexpr uint32_t kMagic = 0x464d4e43;  // "FMNC"
constexpr uint32_t kVersion = 1;

// Little-endian scalar writers. The format is defined little-endian; this
// code assumes a little-endian host, which the build targets.
template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& off) {
    if (off + sizeof(T) > in.size()) throw CheckpointError("truncated checkpoint");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

void put_string(std::string& out, const std::string& s) {
    put<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out += s;
}

std::string take_string(const std::string& in, size_t& off) {
    const uint32_t n = take<uint32_t>(in, off);
    if (off + n > in.size()) throw CheckpointError("truncated checkpoint string");
    std::string s = in.substr(off, n);
    off += n;
    return s;
}

}  // namespace

void save_checkpoint(const Graph& g, const Executor<float>& exec, const std::string& path,
                     const std::map<std::string, std::string>& meta) {
    std::string out;
    put<uint32_t>(out, kMagic);
    put<uint32_t>(out, kVersion);
    put<uint64_t>(out, g.fingerprint());
    put<uint32_t>(out, static_cast<uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        put_string(out, k);
        put_string(out, v);
    }
    put<uint32_t>(out, static_cast<uint32_t>(g.params.size()));
    for (size_t i = 0; i < g.params.size(); ++i) {
        const ParamSpec& spec = g.params[i];
        const Tensor& t = exec.params()[i];
        put_string(out, spec.name);
        put<uint8_t>(out, static_cast<uint8_t>(spec.shape.rank));
        put<int32_t>(out, spec.shape.d0);
        put<int32_t>(out, spec.shape.d1);
        put<int32_t>(out, spec.shape.d2);
        out.append(reinterpret_cast<const char*>(t.v.data()), t.v.size() * sizeof(float));
    }
    write_file(path, out);
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
    const std::string in = read_file(path);
    size_t off = 0;
    if (take<uint32_t>(in, off) != kMagic) throw CheckpointError("not a checkpoint file: " + path);
    const uint32_t version = take<uint32_t>(in, off);
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    LoadedCheckpoint ck;
    ck.fingerprint = take<uint64_t>(in, off);
    const uint32_t nmeta = take<uint32_t>(in, off);
    for (uint32_t i = 0; i < nmeta; ++i) {
        std::string k = take_string(in, off);
        ck.meta[k] = take_string(in, off);
    }
    const uint32_t nparams = take<uint32_t>(in, off);
    for (uint32_t i = 0; i < nparams; ++i) {
        std::string name = take_string(in, off);
        Shape s;
        s.rank = take<uint8_t>(in, off);
        s.d0 = take<int32_t>(in, off);
        s.d1 = take<int32_t>(in, off);
        s.d2 = take<int32_t>(in, off);
        Tensor t = Tensor::zeros(s);
        const size_t bytes = t.v.size() * sizeof(float);
        if (off + bytes > in.size()) throw CheckpointError("truncated checkpoint tensor " + name);
        std::memcpy(t.v.data(), in.data() + off, bytes);
        off += bytes;
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

WarmStartReport warm_start(const Graph& g, Executor<float>& exec, const std::string& path,
                           bool strict) {
    LoadedCheckpoint ck = read_checkpoint(path);
    if (strict && ck.fingerprint != g.fingerprint())
        throw CheckpointError("checkpoint fingerprint mismatch (strict load)");
    WarmStartReport report;
    std::map<std::string, size_t> by_name;
    for (size_t i = 0; i < g.params.size(); ++i) by_name[g.params[i].name] = i;
    std::vector<bool> filled(g.params.size(), false);
    for (auto& [name, tensor] : ck.tensors) {
        auto it = by_name.find(name);
        if (it == by_name.end() || !(g.params[it->second].shape == tensor.shape)) {
            if (strict) throw CheckpointError("checkpoint tensor mismatch: " + name);
            report.skipped.push_back(name);
            continue;
        }
        exec.params()[it->second].v = tensor.v;
        filled[it->second] = true;
        ++report.loaded;
    }
    for (size_t i = 0; i < filled.size(); ++i)
        if (!filled[i]) report.left_initialized.push_back(g.params[i].name);
    if (strict && !report.left_initialized.empty())
        throw CheckpointError("checkpoint missing tensors for this graph");
    return report;
}

}  // namespace fmnet
