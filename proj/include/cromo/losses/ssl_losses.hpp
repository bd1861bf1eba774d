#pragma once

#include "cromo/tensor.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace cromo::losses {

enum class SslKind { kSimclr, kBarlowTwins, kByol, kCorInfoMax };

SslKind parse_ssl_kind(const std::string& name);
std::string to_string(SslKind kind);

struct SslLossSpec {
    SslKind kind = SslKind::kSimclr;
    double temperature = 0.5;     // simclr
    double lambda_bt = 0.0051;    // barlow twins off-diagonal weight
    double bt_eps = 1e-5;         // barlow twins denominator guard
    double eps = 0.05;            // corinfomax logdet regularizer
    double lambda_cov = 0.01;     // corinfomax EMA factor
    double invariance_coef = 0;   // corinfomax; 0 means 2/(eps*N)
    int max_dim = 4096;           // corinfomax logdet size cap
    bool l2_normalize = true;     // corinfomax: project rows onto the unit sphere first

    // InfoNCE and BYOL decompose over samples; the other two are batch
    // statistics.
    [[nodiscard]] bool pairwise() const { return kind == SslKind::kSimclr || kind == SslKind::kByol; }

    static SslLossSpec from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate() const;
};

// Value and gradients with respect to each input. Inputs that were not
// supplied have empty gradients.
struct LossGrad {
    double value = 0;
    Mat g1, g2, g_extra;
};

// Symmetric NT-Xent. Each row of z1 anchors against z2 (and vice versa);
// the pool for anchor i is every other row of z1 and z2 plus `extra`.
// Optional per-sample weights scale both anchors of pair i.
LossGrad info_nce(const Mat& z1, const Mat& z2, double tau, const Mat* extra = nullptr,
                  const Vec* weights = nullptr);

// Cross-correlation of column-centered embeddings; sum (1-C_ii)^2 +
// lambda sum_{i!=j} C_ij^2.
LossGrad barlow_twins(const Mat& z1, const Mat& z2, double lambda_bt, double eps = 1e-5);

// Weighted mean over rows of 2 - 2 cos(q_i, z_i).
LossGrad byol_mse(const Mat& q1, const Mat& z2, const Vec* weights = nullptr);

// Running covariance and mean estimates for the two views.
struct CovarianceState {
    Mat r1, r2;
    RowVec mu1, mu2;

    static CovarianceState initial(int dim, double eps);
    [[nodiscard]] int dim() const { return static_cast<int>(r1.rows()); }
};

// -logdet(R1+eps I) - logdet(R2+eps I) + c ||Z1 - Z2||_F^2 with R the
// updated covariance estimates; `prev` is treated as a constant. Rows are
// l2-normalized first when spec.l2_normalize is set. Writes the updated
// estimates to `next` when given.
LossGrad corinfomax(const Mat& z1, const Mat& z2, const SslLossSpec& spec, const CovarianceState& prev,
                    CovarianceState* next = nullptr);

struct SslAux {
    const Mat* predicted = nullptr;  // BYOL: predictor output for view 1
    const Mat* negatives = nullptr;  // InfoNCE extra negatives
    const Vec* weights = nullptr;    // per-sample weights (pairwise kinds)
    const CovarianceState* state = nullptr;  // CorInfoMax
    CovarianceState* next_state = nullptr;
};

// Dispatch on spec.kind. For BYOL `aux.predicted` replaces z1 and g1 is
// the gradient with respect to it.
LossGrad ssl_loss(const SslLossSpec& spec, const Mat& z1, const Mat& z2, const SslAux& aux = {});

}  // namespace cromo::losses
