#include "lqr/types.hpp"

#include <Eigen/SVD>

namespace lqr {

double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

void require(bool cond, const std::string& what) {
    if (!cond) throw ConfigError(what);
}

}  // namespace lqr
