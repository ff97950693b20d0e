#include "episignal/cluster.hpp"
#include "episignal/core/error.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace episignal::cluster {

using nlohmann::json;

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw ParseError(0, "cluster sidecar: truncated header");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

Algorithm algorithm_from(const std::string& s) {
    if (s == "hdbscan") return Algorithm::hdbscan;
    if (s == "km") return Algorithm::km;
    if (s == "gmm") return Algorithm::gmm;
    throw ValidationError("cluster model: unknown algorithm '" + s + "'");
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".coords.bin";
    return p;
}

void save_model(const ClusterModel& model, const std::filesystem::path& path) {
    json j;
    j["algorithm"] = algorithm_name(model.algorithm);
    j["labels"] = model.labels;
    json table = json::array();
    for (const auto& c : model.clusters)
        table.push_back({{"id", c.id}, {"size", c.size}, {"stability", c.stability}, {"lambda_birth", c.lambda_birth}});
    j["clusters"] = table;
    if (model.algorithm == Algorithm::hdbscan) {
        j["params"] = {{"min_cluster_size", model.hdbscan.min_cluster_size},
                       {"min_samples", model.hdbscan.effective_min_samples()},
                       {"allow_single_cluster", model.hdbscan.allow_single_cluster}};
        j["core"] = model.core;
        json edges = json::array();
        for (const auto& e : model.mst) edges.push_back({e.a, e.b, e.weight});
        j["mst"] = edges;
    } else {
        j["params"] = {{"k", model.k}, {"seed", model.seed}};
    }
    j["trace"] = model.trace;
    const bool has_ref = model.reference.size() > 0;
    if (has_ref) j["coords"] = sidecar_path(path).filename().string();

    std::ofstream out(path);
    if (!out) throw Error("save_model: cannot open " + path.string());
    out << j.dump() << '\n';

    if (has_ref) {
        std::ofstream bin(sidecar_path(path), std::ios::binary);
        if (!bin) throw Error("save_model: cannot open sidecar for " + path.string());
        put_u32(bin, std::uint32_t(model.reference.rows()));
        put_u32(bin, std::uint32_t(model.reference.cols()));
        for (Eigen::Index i = 0; i < model.reference.rows(); ++i)
            for (Eigen::Index c = 0; c < model.reference.cols(); ++c) {
                float f = float(model.reference(i, c));
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                put_u32(bin, bits);
            }
    }
}

ClusterModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_model: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(0, "load_model: " + std::string(e.what()));
    }
    ClusterModel m;
    try {
        m.algorithm = algorithm_from(j.at("algorithm").get<std::string>());
        m.labels = j.at("labels").get<std::vector<int>>();
        for (const auto& c : j.at("clusters"))
            m.clusters.push_back({c.at("id").get<int>(), c.at("size").get<int>(), c.at("stability").get<double>(),
                                  c.at("lambda_birth").get<double>()});
        const auto& p = j.at("params");
        if (m.algorithm == Algorithm::hdbscan) {
            m.hdbscan.min_cluster_size = p.at("min_cluster_size").get<int>();
            m.hdbscan.min_samples = p.at("min_samples").get<int>();
            m.hdbscan.allow_single_cluster = p.at("allow_single_cluster").get<bool>();
            m.core = j.at("core").get<std::vector<double>>();
            for (const auto& e : j.at("mst"))
                m.mst.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()});
        } else {
            m.k = p.at("k").get<int>();
            m.seed = p.at("seed").get<std::uint64_t>();
        }
        m.trace = j.at("trace").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ValidationError("load_model: " + std::string(e.what()));
    }
    for (int lab : m.labels)
        if (lab != -1 && !m.find(lab)) throw ValidationError("load_model: label " + std::to_string(lab) + " not in cluster table");

    if (j.contains("coords")) {
        auto bin_path = path.parent_path() / j["coords"].get<std::string>();
        std::ifstream bin(bin_path, std::ios::binary);
        if (!bin) throw Error("load_model: missing sidecar " + bin_path.string());
        const std::uint32_t n = get_u32(bin), k = get_u32(bin);
        m.reference.resize(n, k);
        for (std::uint32_t i = 0; i < n; ++i)
            for (std::uint32_t c = 0; c < k; ++c) {
                std::uint32_t bits = get_u32(bin);
                float f;
                std::memcpy(&f, &bits, 4);
                m.reference(i, c) = double(f);
            }
        if (m.reference.rows() != Eigen::Index(m.labels.size()))
            throw DimensionError("load_model: sidecar has " + std::to_string(n) + " rows, model has " +
                                 std::to_string(m.labels.size()) + " labels");
    }
    return m;
}

}  // namespace episignal::cluster
