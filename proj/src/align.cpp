#include "leaky/align.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "leaky/csv.hpp"
#include "leaky/nn.hpp"
#include "leaky/serialize.hpp"

namespace leaky::align {

namespace {
constexpr const char* kMapMagic = "LEAKYALIGN";
constexpr std::uint32_t kMapVersion = 1;

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows,
                          const char* what) {
    require(!rows.empty(), ErrorKind::validation,
            std::string(what) + ": empty embedding list");
    const std::size_t d = rows[0].size();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == d, ErrorKind::validation,
                std::string(what) + ": inconsistent embedding dimension");
        for (std::size_t j = 0; j < d; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return out;
}
}  // namespace

AlignmentMap fit_linear_map(const std::vector<std::vector<double>>& aux_text,
                            const std::vector<std::vector<double>>& aux_image,
                            double sv_cutoff) {
    require(aux_text.size() == aux_image.size(), ErrorKind::validation,
            "fit_linear_map: text/image count mismatch");
    const Eigen::MatrixXd ut = to_matrix(aux_text, "fit_linear_map(text)");
    const Eigen::MatrixXd ui = to_matrix(aux_image, "fit_linear_map(image)");
    require(ut.cols() == ui.cols(), ErrorKind::validation,
            "fit_linear_map: embedding dimension mismatch");
    const int d = static_cast<int>(ut.cols());

    // Minimum-norm least squares via SVD with a relative singular-value
    // cutoff; rank-deficient auxiliary sets stay well-defined.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ut, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    const double cut = smax * sv_cutoff;
    Eigen::VectorXd inv = sv;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cut && sv(i) > 0.0) {
            inv(i) = 1.0 / sv(i);
            ++rank;
        } else {
            inv(i) = 0.0;
        }
    }
    const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    const Eigen::MatrixXd m = pinv * ui;

    AlignmentMap map;
    map.dim = d;
    map.fit_size = static_cast<int>(ut.rows());
    map.rank_deficient = rank < d;
    map.m.resize(static_cast<std::size_t>(d) * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) map.m[static_cast<std::size_t>(i) * d + j] = m(i, j);
    map.residual_frobenius = (ui - ut * m).norm();
    return map;
}

std::vector<double> apply_map(const AlignmentMap& map, const std::vector<double>& u_t) {
    require(static_cast<int>(u_t.size()) == map.dim, ErrorKind::validation,
            "apply_map: dimension mismatch");
    std::vector<double> out(map.dim, 0.0);
    for (int i = 0; i < map.dim; ++i) {
        const double ui = u_t[i];
        if (ui == 0.0) continue;
        const double* row = map.m.data() + static_cast<std::size_t>(i) * map.dim;
        for (int j = 0; j < map.dim; ++j) out[j] += ui * row[j];
    }
    return out;
}

AlignmentReport alignment_report(const AlignmentMap& map,
                                 const std::vector<std::vector<double>>& held_text,
                                 const std::vector<std::vector<double>>& held_image) {
    require(!held_text.empty() && held_text.size() == held_image.size(),
            ErrorKind::statistics, "alignment_report: empty or mismatched held-out set");
    AlignmentReport rep;
    double l1 = 0.0, fro = 0.0, base = 0.0;
    std::size_t elements = 0;
    for (std::size_t i = 0; i < held_text.size(); ++i) {
        const auto mapped = apply_map(map, held_text[i]);
        const double denom = nn::norm2(mapped) * nn::norm2(held_image[i]);
        rep.cosines.push_back(denom > 1e-300 ? nn::dot(mapped, held_image[i]) / denom
                                             : 0.0);
        base += nn::cosine(held_text[i], held_image[i]);
        for (std::size_t j = 0; j < mapped.size(); ++j) {
            const double diff = mapped[j] - held_image[i][j];
            l1 += std::abs(diff);
            fro += diff * diff;
            ++elements;
        }
    }
    for (double c : rep.cosines) rep.mean_cosine += c;
    rep.mean_cosine /= static_cast<double>(rep.cosines.size());
    rep.mean_l1_per_element = l1 / static_cast<double>(elements);
    rep.frobenius_error = std::sqrt(fro);
    rep.baseline_mean_cosine = base / static_cast<double>(held_text.size());
    return rep;
}

void save_alignment_map(const AlignmentMap& map, const std::string& path) {
    BinaryWriter w;
    w.str(kMapMagic);
    w.u32(kMapVersion);
    w.u32(static_cast<std::uint32_t>(map.dim));
    w.u32(static_cast<std::uint32_t>(map.fit_size));
    w.f64(map.residual_frobenius);
    w.u8(map.rank_deficient ? 1 : 0);
    w.doubles(map.m);
    w.save(path);
}

AlignmentMap load_alignment_map(const std::string& path) {
    BinaryReader r = BinaryReader::from_file(path);
    require(r.str() == kMapMagic, ErrorKind::ingest, "not an alignment map: " + path);
    require(r.u32() == kMapVersion, ErrorKind::ingest,
            "unsupported alignment map version");
    AlignmentMap map;
    map.dim = static_cast<int>(r.u32());
    map.fit_size = static_cast<int>(r.u32());
    map.residual_frobenius = r.f64();
    map.rank_deficient = r.u8() != 0;
    map.m = r.doubles();
    require(static_cast<int>(map.m.size()) == map.dim * map.dim, ErrorKind::ingest,
            "alignment map size mismatch");
    return map;
}

std::string alignment_map_csv(const AlignmentMap& map) {
    Table t;
    t.schema = "leakyclip.alignment_map.v1";
    t.header = {"row", "col", "value"};
    for (int i = 0; i < map.dim; ++i)
        for (int j = 0; j < map.dim; ++j)
            t.add_row({fmt_int(i), fmt_int(j),
                       fmt_double(map.m[static_cast<std::size_t>(i) * map.dim + j], 17)});
    return t.to_csv();
}

// ---------------------------------------------------------------------------
// Spectral identity
// ---------------------------------------------------------------------------

std::vector<double> PairGraph::text_degrees() const {
    std::vector<double> deg(m, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) deg[i] += at(i, j);
    return deg;
}

std::vector<double> PairGraph::image_degrees() const {
    std::vector<double> deg(n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) deg[j] += at(i, j);
    return deg;
}

void PairGraph::validate() const {
    require(m >= 1 && n >= 1, ErrorKind::validation, "pair graph: empty side");
    require(w.size() == static_cast<std::size_t>(m) * n, ErrorKind::validation,
            "pair graph: weight size mismatch");
    for (double v : w)
        require(v >= 0.0, ErrorKind::validation, "pair graph: negative weight");
    for (double d : text_degrees())
        require(d > 0.0, ErrorKind::validation, "pair graph: isolated text node");
    for (double d : image_degrees())
        require(d > 0.0, ErrorKind::validation, "pair graph: isolated image node");
}

double verify_spectral_relation(const PairGraph& graph, int k,
                                double zero_eig_threshold) {
    graph.validate();
    require(k >= 1 && k <= std::min(graph.m, graph.n), ErrorKind::validation,
            "verify_spectral_relation: k out of range");

    const int m = graph.m, n = graph.n;
    const auto dt = graph.text_degrees();
    const auto di = graph.image_degrees();

    // Normalized adjacency N = D_T^{-1/2} W D_I^{-1/2}.
    Eigen::MatrixXd nrm(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            nrm(i, j) = graph.at(i, j) / std::sqrt(dt[i] * di[j]);

    // Normalized Laplacian of the bipartite graph. Written as eigenpairs of
    // L u = lambda u, the image-node block row rearranges to the identity
    // under test: U_I (I - Lambda) = N^T U_T.
    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(m + n, m + n);
    lap.block(0, m, m, n) = -nrm;
    lap.block(m, 0, n, m) = -nrm.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap);
    require(eig.info() == Eigen::Success, ErrorKind::numerical,
            "eigendecomposition failed");
    const auto& evals = eig.eigenvalues();   // ascending
    const auto& evecs = eig.eigenvectors();  // orthonormal columns

    // k smallest eigenvalues above the zero-exclusion threshold.
    std::vector<int> selected;
    for (Eigen::Index i = 0; i < evals.size() && static_cast<int>(selected.size()) < k; ++i)
        if (std::abs(evals(i)) > zero_eig_threshold)
            selected.push_back(static_cast<int>(i));
    require(static_cast<int>(selected.size()) == k, ErrorKind::validation,
            "verify_spectral_relation: not enough nonzero eigenvalues");

    Eigen::MatrixXd ut(m, k), ui(n, k);
    Eigen::VectorXd lambda(k);
    for (int s = 0; s < k; ++s) {
        lambda(s) = evals(selected[s]);
        ut.col(s) = evecs.col(selected[s]).head(m);
        ui.col(s) = evecs.col(selected[s]).tail(n);
    }

    const Eigen::MatrixXd lhs =
        ui * (Eigen::MatrixXd::Identity(k, k) -
              lambda.asDiagonal().toDenseMatrix());
    const Eigen::MatrixXd rhs = nrm.transpose() * ut;
    return (lhs - rhs).norm();
}

}  // namespace leaky::align
