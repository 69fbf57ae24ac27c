#include "nytron/objective.hpp"

#include "nytron/error.hpp"
#include "nytron/par.hpp"

namespace nytron {

namespace {

void check_beta(const KernelBlock& block, std::span<const double> v, const char* who) {
  if (v.size() != block.m)
    throw ContractError(std::string(who) + ": vector length " + std::to_string(v.size()) +
                        " != m " + std::to_string(block.m));
}

void check_state(const KernelBlock& block, const LossState& state, const char* who) {
  if (state.outputs.size() != block.rows || state.active.size() != block.rows)
    throw ContractError(std::string(who) + ": loss state does not match block rows");
}

LossState make_state(const KernelBlock& block, std::span<const double> beta, Loss loss,
                     bool parallel) {
  check_beta(block, beta, "local_outputs");
  LossState st;
  st.outputs.resize(block.rows);
  if (parallel)
    par::matvec_rows(block.c.data(), block.rows, block.m, beta.data(), st.outputs.data());
  else
    par::serial::matvec_rows(block.c.data(), block.rows, block.m, beta.data(), st.outputs.data());
  st.active.resize(block.rows);
  if (loss == Loss::squared_hinge) {
    for (std::size_t i = 0; i < block.rows; ++i)
      st.active[i] = (1.0 - block.y[i] * st.outputs[i] > 0.0) ? 1 : 0;
  } else {
    for (std::size_t i = 0; i < block.rows; ++i) st.active[i] = 1;
  }
  return st;
}

// Loss terms share one shape: 0.5 * r_i^2 over active rows, with
// r_i = 1 - y_i o_i for the squared hinge and r_i = o_i - y_i for squared
// error. Since y in {-1,+1}, both yield residual z_i = o_i - y_i when active.
template <bool Parallel>
double loss_sum(const KernelBlock& block, const LossState& state) {
  const double* o = state.outputs.data();
  const double* y = block.y.data();
  const std::uint8_t* a = state.active.data();
  auto term = [&](std::size_t i) {
    if (!a[i]) return 0.0;
    const double r = o[i] - y[i];
    return 0.5 * r * r;
  };
  if constexpr (Parallel)
    return par::chunked_sum(block.rows, term);
  else
    return par::serial::chunked_sum(block.rows, term);
}

// Shared reg-side pieces: wv = w_rows * v (worker's owned rows of W applied
// to a full-length vector).
void w_rows_apply(const KernelBlock& block, std::span<const double> v, std::vector<double>& wv,
                  bool parallel) {
  wv.resize(block.w_row_ids.size());
  if (wv.empty()) return;
  if (parallel)
    par::matvec_rows(block.w.data(), wv.size(), block.m, v.data(), wv.data());
  else
    par::serial::matvec_rows(block.w.data(), wv.size(), block.m, v.data(), wv.data());
}

void masked_residual(const KernelBlock& block, const LossState& state, std::vector<double>& z) {
  z.resize(block.rows);
  for (std::size_t i = 0; i < block.rows; ++i)
    z[i] = state.active[i] ? state.outputs[i] - block.y[i] : 0.0;
}

void objective_impl(const KernelBlock& block, const LossState& state,
                    std::span<const double> beta, LocalPartials& out, bool parallel) {
  check_beta(block, beta, "local_objective");
  check_state(block, state, "local_objective");
  std::vector<double> wbeta;
  w_rows_apply(block, beta, wbeta, parallel);
  double reg = 0.0;
  for (std::size_t t = 0; t < wbeta.size(); ++t)
    reg += beta[static_cast<std::size_t>(block.w_row_ids[t])] * wbeta[t];
  out.f_reg = reg;
  out.f_loss = parallel ? loss_sum<true>(block, state) : loss_sum<false>(block, state);
}

void gradient_impl(const KernelBlock& block, const LossState& state, std::span<const double> beta,
                   double lambda, LocalPartials& out, bool parallel) {
  check_beta(block, beta, "local_gradient");
  check_state(block, state, "local_gradient");
  out.g.assign(block.m, 0.0);
  std::vector<double> wbeta;
  w_rows_apply(block, beta, wbeta, parallel);
  for (std::size_t t = 0; t < wbeta.size(); ++t)
    out.g[static_cast<std::size_t>(block.w_row_ids[t])] = lambda * wbeta[t];
  std::vector<double> z;
  masked_residual(block, state, z);
  if (parallel)
    par::matvec_trans_add(block.c.data(), block.rows, block.m, z.data(), out.g.data());
  else
    par::serial::matvec_trans_add(block.c.data(), block.rows, block.m, z.data(), out.g.data());
}

void hessian_vec_impl(const KernelBlock& block, const LossState& state, std::span<const double> d,
                      double lambda, LocalPartials& out, bool parallel) {
  check_beta(block, d, "local_hessian_vec");
  check_state(block, state, "local_hessian_vec");
  out.hd.assign(block.m, 0.0);
  std::vector<double> wd;
  w_rows_apply(block, d, wd, parallel);
  for (std::size_t t = 0; t < wd.size(); ++t)
    out.hd[static_cast<std::size_t>(block.w_row_ids[t])] = lambda * wd[t];
  std::vector<double> t(block.rows);
  if (parallel)
    par::matvec_rows(block.c.data(), block.rows, block.m, d.data(), t.data());
  else
    par::serial::matvec_rows(block.c.data(), block.rows, block.m, d.data(), t.data());
  for (std::size_t i = 0; i < block.rows; ++i)
    if (!state.active[i]) t[i] = 0.0;
  if (parallel)
    par::matvec_trans_add(block.c.data(), block.rows, block.m, t.data(), out.hd.data());
  else
    par::serial::matvec_trans_add(block.c.data(), block.rows, block.m, t.data(), out.hd.data());
}

}  // namespace

const char* to_string(Loss l) {
  return l == Loss::squared_hinge ? "squared_hinge" : "squared_error";
}

Loss loss_from(const std::string& s) {
  if (s == "squared_hinge") return Loss::squared_hinge;
  if (s == "squared_error") return Loss::squared_error;
  throw ConfigError("unknown loss: " + s);
}

LossState local_outputs(const KernelBlock& block, std::span<const double> beta, Loss loss) {
  return make_state(block, beta, loss, true);
}

void local_objective(const KernelBlock& block, const LossState& state,
                     std::span<const double> beta, LocalPartials& out) {
  objective_impl(block, state, beta, out, true);
}

void local_gradient(const KernelBlock& block, const LossState& state,
                    std::span<const double> beta, double lambda, LocalPartials& out) {
  gradient_impl(block, state, beta, lambda, out, true);
}

void local_hessian_vec(const KernelBlock& block, const LossState& state,
                       std::span<const double> d, double lambda, LocalPartials& out) {
  hessian_vec_impl(block, state, d, lambda, out, true);
}

LossState local_eval_fused(const KernelBlock& block, std::span<const double> beta, Loss loss,
                           double lambda, LocalPartials& out) {
  LossState st = make_state(block, beta, loss, true);
  objective_impl(block, st, beta, out, true);
  gradient_impl(block, st, beta, lambda, out, true);
  return st;
}

LossState serial::local_outputs(const KernelBlock& block, std::span<const double> beta,
                                Loss loss) {
  return make_state(block, beta, loss, false);
}

void serial::local_objective(const KernelBlock& block, const LossState& state,
                             std::span<const double> beta, LocalPartials& out) {
  objective_impl(block, state, beta, out, false);
}

void serial::local_gradient(const KernelBlock& block, const LossState& state,
                            std::span<const double> beta, double lambda, LocalPartials& out) {
  gradient_impl(block, state, beta, lambda, out, false);
}

void serial::local_hessian_vec(const KernelBlock& block, const LossState& state,
                               std::span<const double> d, double lambda, LocalPartials& out) {
  hessian_vec_impl(block, state, d, lambda, out, false);
}

}  // namespace nytron
