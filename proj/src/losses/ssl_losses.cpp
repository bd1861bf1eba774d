#include "cromo/losses/ssl_losses.hpp"

#include "cromo/error.hpp"
#include "cromo/log.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace cromo::losses {

namespace {

void check_pair(const Mat& a, const Mat& b, const char* what) {
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    require(a.rows() > 0 && a.cols() > 0, std::string(what) + ": empty input");
}

RowVec row_norms(const Mat& z, const char* what) {
    RowVec n = z.rowwise().norm().transpose();
    for (Eigen::Index i = 0; i < n.size(); ++i)
        if (!(n(i) > 0)) throw ValidationError(std::string(what) + ": row " + std::to_string(i) + " has zero norm");
    return n;
}

Mat normalize_rows(const Mat& z, const RowVec& norms) {
    Mat u = z;
    for (Eigen::Index i = 0; i < z.rows(); ++i) u.row(i) /= norms(i);
    return u;
}

// d/dz of a loss given d/du with u = z / |z|.
Mat normalize_backward(const Mat& u, const RowVec& norms, const Mat& du) {
    Mat dz(u.rows(), u.cols());
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const double proj = u.row(i).dot(du.row(i));
        dz.row(i) = (du.row(i) - proj * u.row(i)) / norms(i);
    }
    return dz;
}

void check_weights(const Vec* w, Eigen::Index n, const char* what) {
    if (!w) return;
    require(w->size() == n, std::string(what) + ": weight vector length must equal batch size");
    for (Eigen::Index i = 0; i < n; ++i)
        require(std::isfinite((*w)(i)), std::string(what) + ": non-finite weight");
}

}  // namespace

SslKind parse_ssl_kind(const std::string& name) {
    if (name == "simclr") return SslKind::kSimclr;
    if (name == "barlow_twins") return SslKind::kBarlowTwins;
    if (name == "byol") return SslKind::kByol;
    if (name == "corinfomax") return SslKind::kCorInfoMax;
    throw ValidationError("unknown ssl kind '" + name + "' (expected simclr, barlow_twins, byol, corinfomax)");
}

std::string to_string(SslKind kind) {
    switch (kind) {
        case SslKind::kSimclr: return "simclr";
        case SslKind::kBarlowTwins: return "barlow_twins";
        case SslKind::kByol: return "byol";
        case SslKind::kCorInfoMax: return "corinfomax";
    }
    return "?";
}

SslLossSpec SslLossSpec::from_json(const nlohmann::json& j) {
    require(j.is_object(), "ssl: expected an object");
    SslLossSpec s;
    for (const auto& [key, v] : j.items()) {
        if (key == "kind") s.kind = parse_ssl_kind(v.get<std::string>());
        else if (key == "temperature") s.temperature = v.get<double>();
        else if (key == "lambda_bt") s.lambda_bt = v.get<double>();
        else if (key == "bt_eps") s.bt_eps = v.get<double>();
        else if (key == "eps") s.eps = v.get<double>();
        else if (key == "lambda_cov") s.lambda_cov = v.get<double>();
        else if (key == "invariance_coef") s.invariance_coef = v.get<double>();
        else if (key == "max_dim") s.max_dim = v.get<int>();
        else if (key == "l2_normalize") s.l2_normalize = v.get<bool>();
        else throw ValidationError("ssl: unknown key '" + key + "'");
    }
    s.validate();
    return s;
}

nlohmann::json SslLossSpec::to_json() const {
    return {{"kind", to_string(kind)}, {"temperature", temperature}, {"lambda_bt", lambda_bt},
            {"bt_eps", bt_eps},        {"eps", eps},                 {"lambda_cov", lambda_cov},
            {"invariance_coef", invariance_coef}, {"max_dim", max_dim},
            {"l2_normalize", l2_normalize}};
}

void SslLossSpec::validate() const {
    require(temperature > 0, "ssl: temperature must be > 0");
    require(lambda_bt >= 0, "ssl: lambda_bt must be >= 0");
    require(bt_eps > 0, "ssl: bt_eps must be > 0");
    require(eps > 0, "ssl: eps must be > 0");
    require(lambda_cov >= 0 && lambda_cov < 1, "ssl: lambda_cov must be in [0,1)");
    require(invariance_coef >= 0, "ssl: invariance_coef must be >= 0");
    require(max_dim > 0, "ssl: max_dim must be > 0");
}

// ---------------------------------------------------------------------------
// InfoNCE
// ---------------------------------------------------------------------------

LossGrad info_nce(const Mat& z1, const Mat& z2, double tau, const Mat* extra, const Vec* weights) {
    check_pair(z1, z2, "info_nce");
    require(tau > 0, "info_nce: temperature must be > 0");
    const Eigen::Index b = z1.rows(), d = z1.cols();
    const Eigen::Index m = extra ? extra->rows() : 0;
    if (extra) require(extra->cols() == d, "info_nce: extra negatives must have the embedding width");
    require(b >= 2 || m > 0, "info_nce: need at least two samples or extra negatives");
    check_weights(weights, b, "info_nce");

    const RowVec n1 = row_norms(z1, "info_nce"), n2 = row_norms(z2, "info_nce");
    const RowVec ne = m > 0 ? row_norms(*extra, "info_nce") : RowVec();
    Mat u(2 * b, d);
    u << normalize_rows(z1, n1), normalize_rows(z2, n2);
    Mat all(2 * b + m, d);
    if (m > 0) all << u, normalize_rows(*extra, ne);
    else all = u;

    Mat s = u * all.transpose() / tau;
    Mat g = Mat::Zero(2 * b, 2 * b + m);
    double loss = 0;
    for (Eigen::Index r = 0; r < 2 * b; ++r) {
        const Eigen::Index pos = r < b ? r + b : r - b;
        const double w = weights ? (*weights)(r % b) : 1.0;
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < all.rows(); ++c)
            if (c != r) mx = std::max(mx, s(r, c));
        double denom = 0;
        for (Eigen::Index c = 0; c < all.rows(); ++c)
            if (c != r) denom += std::exp(s(r, c) - mx);
        const double lse = mx + std::log(denom);
        loss += w * (lse - s(r, pos));
        for (Eigen::Index c = 0; c < all.rows(); ++c)
            if (c != r) g(r, c) = w * std::exp(s(r, c) - lse);
        g(r, pos) -= w;
    }
    const double scale = 1.0 / static_cast<double>(2 * b);
    g *= scale;

    // s = u all^T / tau, and u is the top block of all.
    Mat du = g * all / tau;
    Mat dall = g.transpose() * u / tau;
    du += dall.topRows(2 * b);

    LossGrad out;
    out.value = loss * scale;
    out.g1 = normalize_backward(u.topRows(b), n1, du.topRows(b));
    out.g2 = normalize_backward(u.bottomRows(b), n2, du.bottomRows(b));
    if (m > 0) out.g_extra = normalize_backward(all.bottomRows(m), ne, dall.bottomRows(m));
    return out;
}

// ---------------------------------------------------------------------------
// Barlow Twins
// ---------------------------------------------------------------------------

LossGrad barlow_twins(const Mat& z1, const Mat& z2, double lambda_bt, double eps) {
    check_pair(z1, z2, "barlow_twins");
    require(z1.rows() >= 2, "barlow_twins: batch size must be >= 2");
    require(lambda_bt >= 0 && eps > 0, "barlow_twins: lambda must be >= 0 and eps > 0");
    const Eigen::Index d = z1.cols();

    const Mat a = z1.rowwise() - z1.colwise().mean();
    const Mat c2 = z2.rowwise() - z2.colwise().mean();
    const RowVec sa = a.colwise().squaredNorm(), sb = c2.colwise().squaredNorm();
    for (Eigen::Index i = 0; i < d; ++i)
        if (sa(i) < eps || sb(i) < eps) {
            log_warn("barlow_twins: embedding dimension " + std::to_string(i) +
                     " has near-zero variance; guarded by eps");
            break;
        }
    const RowVec na = (sa.array() + eps).sqrt().matrix(), nb = (sb.array() + eps).sqrt().matrix();

    const Mat s = a.transpose() * c2;  // D x D
    Mat c(d, d), g(d, d);
    double loss = 0;
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) {
            c(i, j) = s(i, j) / (na(i) * nb(j));
            if (i == j) {
                loss += (1 - c(i, i)) * (1 - c(i, i));
                g(i, i) = -2 * (1 - c(i, i));
            } else {
                loss += lambda_bt * c(i, j) * c(i, j);
                g(i, j) = 2 * lambda_bt * c(i, j);
            }
        }

    Mat ds(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) ds(i, j) = g(i, j) / (na(i) * nb(j));
    const Mat gc = g.cwiseProduct(c);
    const RowVec dna = -(gc.rowwise().sum().transpose().array() / na.array()).matrix();
    const RowVec dnb = -(gc.colwise().sum().array() / nb.array()).matrix();

    Mat da = c2 * ds.transpose();
    Mat db = a * ds;
    for (Eigen::Index i = 0; i < d; ++i) {
        da.col(i) += a.col(i) * (dna(i) / na(i));
        db.col(i) += c2.col(i) * (dnb(i) / nb(i));
    }
    LossGrad out;
    out.value = loss;
    out.g1 = da.rowwise() - da.colwise().mean();
    out.g2 = db.rowwise() - db.colwise().mean();
    return out;
}

// ---------------------------------------------------------------------------
// BYOL
// ---------------------------------------------------------------------------

LossGrad byol_mse(const Mat& q1, const Mat& z2, const Vec* weights) {
    check_pair(q1, z2, "byol_mse");
    check_weights(weights, q1.rows(), "byol_mse");
    const Eigen::Index b = q1.rows();
    const RowVec nq = row_norms(q1, "byol_mse"), nz = row_norms(z2, "byol_mse");
    const Mat uq = normalize_rows(q1, nq), uz = normalize_rows(z2, nz);
    LossGrad out;
    out.g1.resize(b, q1.cols());
    out.g2.resize(b, q1.cols());
    double loss = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
        const double w = weights ? (*weights)(i) : 1.0;
        const double cos = uq.row(i).dot(uz.row(i));
        loss += w * (2 - 2 * cos);
        const double k = -2 * w / static_cast<double>(b);
        out.g1.row(i) = k * (uz.row(i) - cos * uq.row(i)) / nq(i);
        out.g2.row(i) = k * (uq.row(i) - cos * uz.row(i)) / nz(i);
    }
    out.value = loss / static_cast<double>(b);
    return out;
}

// ---------------------------------------------------------------------------
// CorInfoMax
// ---------------------------------------------------------------------------

CovarianceState CovarianceState::initial(int dim, double eps) {
    require(dim > 0 && eps > 0, "covariance state: dim and eps must be positive");
    CovarianceState s;
    s.r1 = eps * Mat::Identity(dim, dim);
    s.r2 = s.r1;
    s.mu1 = RowVec::Zero(dim);
    s.mu2 = RowVec::Zero(dim);
    return s;
}

namespace {

struct ViewCov {
    double neg_logdet = 0;
    Mat grad;  // d(-logdet)/dZ
    Mat r;
    RowVec mu;
};

ViewCov cov_term(const Mat& z, const Mat& r_prev, const RowVec& mu_prev, double lam, double eps, const char* view) {
    const Eigen::Index n = z.rows(), d = z.cols();
    ViewCov out;
    out.mu = lam * mu_prev + (1 - lam) * z.colwise().mean();
    const Mat zc = z.rowwise() - out.mu;
    const double k = (1 - lam) / static_cast<double>(n);
    Mat r = lam * r_prev + k * (zc.transpose() * zc);
    r = 0.5 * (r + r.transpose()).eval();
    out.r = r;
    const Mat reg = r + eps * Mat::Identity(d, d);
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reg);
        std::ostringstream msg;
        msg << "corinfomax: covariance of " << view << " is not positive definite (eigenvalues in ["
            << es.eigenvalues().minCoeff() << ", " << es.eigenvalues().maxCoeff() << "])";
        throw RuntimeError(msg.str());
    }
    const Eigen::MatrixXd lmat = llt.matrixL();
    double logdet = 0;
    for (Eigen::Index i = 0; i < d; ++i) logdet += 2 * std::log(lmat(i, i));
    if (!std::isfinite(logdet)) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reg);
        std::ostringstream msg;
        msg << "corinfomax: non-finite logdet for " << view << " (eigenvalues in [" << es.eigenvalues().minCoeff()
            << ", " << es.eigenvalues().maxCoeff() << "])";
        throw RuntimeError(msg.str());
    }
    out.neg_logdet = -logdet;
    const Mat p = llt.solve(Eigen::MatrixXd::Identity(d, d));
    const Mat dzc = -2 * k * zc * p;
    out.grad = dzc.rowwise() - (1 - lam) * dzc.colwise().mean();
    return out;
}

}  // namespace

LossGrad corinfomax(const Mat& z1_in, const Mat& z2_in, const SslLossSpec& spec, const CovarianceState& prev,
                    CovarianceState* next) {
    check_pair(z1_in, z2_in, "corinfomax");
    require(z1_in.rows() >= 2, "corinfomax: batch size must be >= 2");
    require(z1_in.cols() <= spec.max_dim, "corinfomax: embedding width " + std::to_string(z1_in.cols()) +
                                              " exceeds max_dim " + std::to_string(spec.max_dim));
    require(prev.dim() == z1_in.cols() && prev.r2.rows() == z1_in.cols() && prev.mu1.size() == z1_in.cols() &&
                prev.mu2.size() == z1_in.cols(),
            "corinfomax: covariance state width does not match the embedding width");
    // Unit-sphere embeddings keep -logdet bounded below.
    RowVec n1, n2;
    Mat z1 = z1_in, z2 = z2_in;
    if (spec.l2_normalize) {
        n1 = row_norms(z1_in, "corinfomax");
        n2 = row_norms(z2_in, "corinfomax");
        z1 = normalize_rows(z1_in, n1);
        z2 = normalize_rows(z2_in, n2);
    }
    const double lam = spec.lambda_cov, eps = spec.eps;
    const ViewCov v1 = cov_term(z1, prev.r1, prev.mu1, lam, eps, "view 1");
    const ViewCov v2 = cov_term(z2, prev.r2, prev.mu2, lam, eps, "view 2");
    const double c =
        spec.invariance_coef > 0 ? spec.invariance_coef : 2.0 / (eps * static_cast<double>(z1.rows()));
    const Mat diff = z1 - z2;

    LossGrad out;
    out.value = v1.neg_logdet + v2.neg_logdet + c * diff.squaredNorm();
    out.g1 = v1.grad + 2 * c * diff;
    out.g2 = v2.grad - 2 * c * diff;
    if (spec.l2_normalize) {
        out.g1 = normalize_backward(z1, n1, out.g1);
        out.g2 = normalize_backward(z2, n2, out.g2);
    }
    if (next) {
        next->r1 = v1.r;
        next->r2 = v2.r;
        next->mu1 = v1.mu;
        next->mu2 = v2.mu;
    }
    return out;
}

// ---------------------------------------------------------------------------

LossGrad ssl_loss(const SslLossSpec& spec, const Mat& z1, const Mat& z2, const SslAux& aux) {
    switch (spec.kind) {
        case SslKind::kSimclr:
            return info_nce(z1, z2, spec.temperature, aux.negatives, aux.weights);
        case SslKind::kBarlowTwins:
            return barlow_twins(z1, z2, spec.lambda_bt, spec.bt_eps);
        case SslKind::kByol:
            if (!aux.predicted) throw ValidationError("ssl_loss: byol requires the predictor output for view 1");
            return byol_mse(*aux.predicted, z2, aux.weights);
        case SslKind::kCorInfoMax: {
            if (aux.state) return corinfomax(z1, z2, spec, *aux.state, aux.next_state);
            const CovarianceState fresh = CovarianceState::initial(static_cast<int>(z1.cols()), spec.eps);
            return corinfomax(z1, z2, spec, fresh, aux.next_state);
        }
    }
    throw ValidationError("ssl_loss: unknown kind");
}

}  // namespace cromo::losses
