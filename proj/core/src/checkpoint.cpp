#include "difftsp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "difftsp/errors.hpp"

namespace difftsp {

namespace {

constexpr char kMagic[8] = {'D', 'T', 'S', 'P', 'C', 'K', 'P', 'T'};

// Little-endian fixed-width writers. The host is little-endian on every
// supported target; memcpy keeps this alias-safe.
template <class T>
void put(std::ostream& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in) {
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in) throw CorruptCheckpoint("unexpected end of checkpoint file");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

void put_array(std::ostream& out, const std::string& name, const std::vector<double>& values,
               const std::vector<std::size_t>& shape) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put<std::uint64_t>(out, d);
    for (double x : values) put<float>(out, static_cast<float>(x));
}

void get_array(std::istream& in, const std::string& expect_name, std::vector<double>& values) {
    auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw CorruptCheckpoint("truncated array name");
    if (name != expect_name)
        throw CorruptCheckpoint("array order mismatch: expected " + expect_name + ", got " + name);
    auto ndim = get<std::uint32_t>(in);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) count *= get<std::uint64_t>(in);
    if (count != values.size())
        throw CorruptCheckpoint("shape mismatch for " + name);
    for (double& x : values) x = static_cast<double>(get<float>(in));
}

}  // namespace

void quantize_params(DenoiserParams& params) {
    params.for_each([](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
        for (double& x : v) x = static_cast<double>(static_cast<float>(x));
    });
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, ckpt.version);
    put<std::uint8_t>(out, ckpt.whole_graph_mode ? 1 : 0);
    const ModelConfig& m = ckpt.params.cfg;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_rel));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.embed_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_dit));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.l_rce));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.t_total));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.n_s));
    put<double>(out, ckpt.gamma);
    put<double>(out, ckpt.rho);
    put<std::uint64_t>(out, ckpt.vocab_fingerprint);
    put<double>(out, ckpt.best_val_f_tsp);
    put<double>(out, ckpt.lr);
    put<std::uint64_t>(out, ckpt.adam_step);

    auto dump = [&out](const DenoiserParams& p, const std::string& suffix) {
        p.for_each([&](const std::string& name, const std::vector<double>& v,
                       const std::vector<std::size_t>& shape) {
            put_array(out, name + suffix, v, shape);
        });
    };
    dump(ckpt.params, "");
    dump(ckpt.adam_m, ".m");
    dump(ckpt.adam_v, ".v");
    if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CorruptCheckpoint("bad magic in " + path);
    Checkpoint ckpt;
    ckpt.version = get<std::uint32_t>(in);
    if (ckpt.version != 1) throw CorruptCheckpoint("unsupported checkpoint version");
    ckpt.whole_graph_mode = get<std::uint8_t>(in) != 0;
    ModelConfig cfg;
    cfg.n_rel = get<std::uint32_t>(in);
    cfg.embed_dim = get<std::uint32_t>(in);
    cfg.n_dit = get<std::uint32_t>(in);
    cfg.l_rce = get<std::uint32_t>(in);
    ckpt.t_total = get<std::uint32_t>(in);
    ckpt.n_s = get<std::uint32_t>(in);
    ckpt.gamma = get<double>(in);
    ckpt.rho = get<double>(in);
    ckpt.vocab_fingerprint = get<std::uint64_t>(in);
    ckpt.best_val_f_tsp = get<double>(in);
    ckpt.lr = get<double>(in);
    ckpt.adam_step = get<std::uint64_t>(in);

    ckpt.params = DenoiserParams::zeros(cfg);
    ckpt.adam_m = DenoiserParams::zeros(cfg);
    ckpt.adam_v = DenoiserParams::zeros(cfg);
    auto slurp = [&in](DenoiserParams& p, const std::string& suffix) {
        p.for_each([&](const std::string& name, std::vector<double>& v,
                       const std::vector<std::size_t>&) {
            get_array(in, name + suffix, v);
        });
    };
    slurp(ckpt.params, "");
    slurp(ckpt.adam_m, ".m");
    slurp(ckpt.adam_v, ".v");
    return ckpt;
}

void verify_checkpoint(const Checkpoint& ckpt, const Vocab& vocab) {
    if (ckpt.vocab_fingerprint != vocab.fingerprint())
        throw DatasetMismatch("checkpoint was trained on a different dataset");
    if (ckpt.params.cfg.n_rel != vocab.num_relations())
        throw DatasetMismatch("relation count differs from checkpoint");
}

}  // namespace difftsp
