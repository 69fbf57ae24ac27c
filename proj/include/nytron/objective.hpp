#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nytron/kernel.hpp"

namespace nytron {

enum class Loss : std::uint8_t { squared_hinge = 0, squared_error = 1 };

const char* to_string(Loss l);
Loss loss_from(const std::string& s);

// Per-row outputs o = C beta and the active mask. For the squared hinge the
// mask is 1 iff 1 - y_i o_i > 0 (strict); for squared error it is identically
// 1, which makes the curvature weighting the identity.
struct LossState {
  std::vector<double> outputs;
  std::vector<std::uint8_t> active;
};

struct LocalPartials {
  double f_reg = 0.0;   // this worker's share of beta^T W beta (lambda applied globally)
  double f_loss = 0.0;  // this worker's loss sum
  std::vector<double> g;
  std::vector<double> hd;
};

LossState local_outputs(const KernelBlock& block, std::span<const double> beta, Loss loss);

// f parts only; global objective = lambda/2 * sum f_reg + sum f_loss.
void local_objective(const KernelBlock& block, const LossState& state,
                     std::span<const double> beta, LocalPartials& out);

// g part: lambda * (w_rows beta) scattered into the owned positions plus
// C^T applied to the masked residual.
void local_gradient(const KernelBlock& block, const LossState& state,
                    std::span<const double> beta, double lambda, LocalPartials& out);

// Gauss-Newton product with the mask frozen in `state`; never materializes
// C^T D C.
void local_hessian_vec(const KernelBlock& block, const LossState& state,
                       std::span<const double> d, double lambda, LocalPartials& out);

// One pass computing outputs, f parts and g part together (they share C beta).
LossState local_eval_fused(const KernelBlock& block, std::span<const double> beta, Loss loss,
                           double lambda, LocalPartials& out);

namespace serial {
LossState local_outputs(const KernelBlock& block, std::span<const double> beta, Loss loss);
void local_objective(const KernelBlock& block, const LossState& state,
                     std::span<const double> beta, LocalPartials& out);
void local_gradient(const KernelBlock& block, const LossState& state,
                    std::span<const double> beta, double lambda, LocalPartials& out);
void local_hessian_vec(const KernelBlock& block, const LossState& state,
                       std::span<const double> d, double lambda, LocalPartials& out);
}  // namespace serial

struct ModelState {
  std::vector<double> beta;
  BasisSet basis;
  HyperParams params;
  Loss loss = Loss::squared_hinge;
  std::int32_t dim = 0;  // feature count seen at training time
};

void save_model(const std::string& path, const ModelState& model);
ModelState load_model(const std::string& path);

}  // namespace nytron
