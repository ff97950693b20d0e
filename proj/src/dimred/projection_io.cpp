#include "episignal/core/error.hpp"
#include "episignal/dimred.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

namespace episignal::dimred {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
    std::vector<double> flat(m.data(), m.data() + m.size());
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Matrix matrix_from(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    auto flat = j.at("data").get<std::vector<double>>();
    if (Eigen::Index(flat.size()) != rows * cols) throw DimensionError("projection: matrix payload size mismatch");
    Matrix m(rows, cols);
    std::copy(flat.begin(), flat.end(), m.data());
    return m;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
    auto flat = j.get<std::vector<double>>();
    return Eigen::Map<Vector>(flat.data(), Eigen::Index(flat.size()));
}

}  // namespace

void save_projection(const Projection& proj, const std::filesystem::path& path) {
    json j;
    j["kind"] = proj.kind == ProjectionKind::pca ? "pca" : "umap";
    j["in_dim"] = proj.in_dim;
    j["out_dim"] = proj.out_dim;
    if (proj.kind == ProjectionKind::pca) {
        j["mean"] = vector_json(proj.pca.mean);
        j["components"] = matrix_json(proj.pca.components);
        j["explained_variance"] = vector_json(proj.pca.explained_variance);
        j["total_variance"] = proj.pca.total_variance;
    } else {
        const auto& p = proj.umap.params;
        j["params"] = {{"n_neighbors", p.n_neighbors},   {"min_dist", p.min_dist},
                       {"spread", p.spread},             {"n_epochs", p.n_epochs},
                       {"out_dim", p.out_dim},           {"negative_sample_rate", p.negative_sample_rate},
                       {"learning_rate", p.learning_rate}, {"seed", p.seed},
                       {"transform_steps", p.transform_steps}};
        j["a"] = proj.umap.a;
        j["b"] = proj.umap.b;
        j["reference"] = matrix_json(proj.umap.reference);
        j["embedding"] = matrix_json(proj.umap.embedding);
    }
    std::ofstream out(path);
    if (!out) throw Error("save_projection: cannot open " + path.string());
    out << j.dump() << '\n';
}

Projection load_projection(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_projection: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(0, "load_projection: " + std::string(e.what()));
    }
    Projection proj;
    try {
        const auto kind = j.at("kind").get<std::string>();
        proj.in_dim = j.at("in_dim").get<int>();
        proj.out_dim = j.at("out_dim").get<int>();
        if (kind == "pca") {
            proj.kind = ProjectionKind::pca;
            proj.pca.mean = vector_from(j.at("mean"));
            proj.pca.components = matrix_from(j.at("components"));
            proj.pca.explained_variance = vector_from(j.at("explained_variance"));
            proj.pca.total_variance = j.at("total_variance").get<double>();
        } else if (kind == "umap") {
            proj.kind = ProjectionKind::umap;
            const auto& p = j.at("params");
            auto& q = proj.umap.params;
            q.n_neighbors = p.at("n_neighbors").get<int>();
            q.min_dist = p.at("min_dist").get<double>();
            q.spread = p.at("spread").get<double>();
            q.n_epochs = p.at("n_epochs").get<int>();
            q.out_dim = p.at("out_dim").get<int>();
            q.negative_sample_rate = p.at("negative_sample_rate").get<int>();
            q.learning_rate = p.at("learning_rate").get<double>();
            q.seed = p.at("seed").get<std::uint64_t>();
            q.transform_steps = p.at("transform_steps").get<int>();
            proj.umap.a = j.at("a").get<double>();
            proj.umap.b = j.at("b").get<double>();
            proj.umap.reference = matrix_from(j.at("reference"));
            proj.umap.embedding = matrix_from(j.at("embedding"));
        } else {
            throw ValidationError("load_projection: unknown kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw ValidationError("load_projection: " + std::string(e.what()));
    }
    return proj;
}

}  // namespace episignal::dimred
