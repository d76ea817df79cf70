#include "angio/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace angio {

namespace {

constexpr char kMagic[] = "ANGIOCKPT1\n";

nlohmann::json shape_list(EncoderWeights& enc, GcnWeights& gcn) {
    nlohmann::json shapes = nlohmann::json::array();
    auto rec = [&](const std::string& name, MatX& m) {
        shapes.push_back({name, m.rows(), m.cols()});
    };
    for_each_param(enc, rec);
    for_each_param(gcn, rec);
    return shapes;
}

} // namespace

void save_checkpoint(const std::string& path, EncoderWeights& enc, GcnWeights& gcn,
                     uint64_t seed) {
    nlohmann::json header;
    header["encoder"] = {{"level_channels", enc.config.level_channels},
                         {"hidden_channels", enc.config.hidden_channels}};
    header["gcn"] = {{"hidden_dim", gcn.config.hidden_dim},
                     {"num_layers", gcn.config.num_layers},
                     {"absolute_regression", gcn.config.absolute_regression},
                     {"input_dim", gcn.input_dim}};
    header["shapes"] = shape_list(enc, gcn);
    header["seed"] = seed;
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot write checkpoint: " + path);
    f.write(kMagic, sizeof(kMagic) - 1);
    const uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), 8); // little-endian host
    f.write(hs.data(), std::streamsize(hs.size()));
    auto dump = [&](const std::string&, MatX& m) {
        f.write(reinterpret_cast<const char*>(m.data()), std::streamsize(m.size() * 8));
    };
    for_each_param(enc, dump);
    for_each_param(gcn, dump);
    if (!f) throw NumericalError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot read checkpoint: " + path);
    char magic[sizeof(kMagic) - 1];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw InvalidInput("not a checkpoint file: " + path);
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    if (!f || len > (1u << 20)) throw InvalidInput("corrupt checkpoint header: " + path);
    std::string hs(len, '\0');
    f.read(hs.data(), std::streamsize(len));
    const nlohmann::json header = nlohmann::json::parse(hs);

    Checkpoint ck;
    EncoderConfig ec;
    ec.level_channels = header.at("encoder").at("level_channels");
    ec.hidden_channels = header.at("encoder").at("hidden_channels");
    GcnConfig gc;
    gc.hidden_dim = header.at("gcn").at("hidden_dim");
    gc.num_layers = header.at("gcn").at("num_layers");
    gc.absolute_regression = header.at("gcn").at("absolute_regression");
    const int input_dim = header.at("gcn").at("input_dim");
    ck.seed = header.at("seed");

    Rng rng(0); // shapes only; values come from the blob
    ck.encoder = EncoderWeights::glorot(ec, rng);
    ck.gcn = GcnWeights::glorot(input_dim, gc, rng);

    const auto& shapes = header.at("shapes");
    size_t idx = 0;
    auto load = [&](const std::string& name, MatX& m) {
        if (idx >= shapes.size()) throw InvalidInput("checkpoint: missing shape entry");
        const auto& s = shapes[idx++];
        if (s[0].get<std::string>() != name || s[1].get<long>() != m.rows() ||
            s[2].get<long>() != m.cols())
            throw InvalidInput("checkpoint: shape mismatch for " + name);
        f.read(reinterpret_cast<char*>(m.data()), std::streamsize(m.size() * 8));
    };
    for_each_param(ck.encoder, load);
    for_each_param(ck.gcn, load);
    if (!f || idx != shapes.size()) throw InvalidInput("checkpoint: truncated blob: " + path);
    return ck;
}

} // namespace angio
