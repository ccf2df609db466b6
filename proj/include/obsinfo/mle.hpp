#pragma once

#include "obsinfo/data.hpp"
#include "obsinfo/linalg.hpp"
#include "obsinfo/model.hpp"

namespace obsinfo {

// Sum of log f(y_ij | eta_theta(x_i)) including all additive constants.
// Empty data gives 0.
double log_likelihood(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const DataSet& data);
Vector log_likelihood_gradient(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                               const DataSet& data);
// Equals -J_theta(D), the negative unnormalized observed information.
Matrix log_likelihood_hessian(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                              const DataSet& data);

struct MleOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-8;  // relative to max(1, |loglik|)
    // false: Newton from `init` only (NormalSqrt then finds the local optimum
    // nearest the start rather than the global one).
    bool multi_start = true;
};

struct MleResult {
    Theta theta_hat;
    bool converged = false;
    double log_likelihood = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    Matrix hessian;  // at theta_hat
};

// Newton ascent with step halving. GammaLog is concave in theta, so one start
// suffices (the better of `init` and a log-mean least-squares start is used).
// NormalSqrt is multimodal and symmetric under theta -> -theta: it is started
// from `init`, its sign-flip perturbations and a moment start, the best local
// optimum wins (ties: closer to init), and the returned sign is the one
// closer to init. With options.multi_start == false only `init` is used.
//
// Throws SolverError when the observed support does not span R^p. A fit that
// hits the iteration cap is returned with converged == false.
MleResult fit_mle(const ResponseModel& model, const RegressorMap& map, const DataSet& data, const Theta& init,
                  const MleOptions& options = {});

}  // namespace obsinfo
