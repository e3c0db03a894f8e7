#include "symlms/symlms.h"

#include <algorithm>
#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "symlms/analysis.hpp"
#include "symlms/errors.hpp"
#include "symlms/experiment.hpp"
#include "symlms/filters.hpp"
#include "symlms/inversion.hpp"
#include "symlms/sensitivity.hpp"
#include "symlms/simulate.hpp"
#include "symlms/transform.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

symlms_status fail(symlms_status code, const char* what) {
  g_last_error = what ? what : "";
  return code;
}

// Maps C++ exceptions from the core onto status codes.
template <typename Fn>
symlms_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const symlms::IllConditionedError& e) {
    return fail(SYMLMS_ERR_ILL_CONDITIONED, e.what());
  } catch (const symlms::RepeatedRootError& e) {
    return fail(SYMLMS_ERR_REPEATED_ROOT, e.what());
  } catch (const symlms::DivergedError& e) {
    return fail(SYMLMS_ERR_DIVERGED, e.what());
  } catch (const json::exception& e) {
    return fail(SYMLMS_ERR_PARSE, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(SYMLMS_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(SYMLMS_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(SYMLMS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SYMLMS_ERR_INTERNAL, "unknown error");
  }
}

symlms::Matrix to_matrix(const double* data, int rows, int cols) {
  symlms::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = data[i * cols + j];
  return m;
}

void from_matrix(const symlms::Matrix& m, double* out) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out[i * m.cols() + j] = m(i, j);
}

char* dup_string(const std::string& s) {
  char* out = new (std::nothrow) char[s.size() + 1];
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

struct symlms_sim {
  symlms::TrajectoryGenerator gen;
  int L, D;
};

struct symlms_filter {
  std::unique_ptr<symlms::Filter> impl;
  int L, D;
};

const char* symlms_version(void) { return "0.1.0"; }

const char* symlms_last_error(void) { return g_last_error.c_str(); }

int symlms_block_length(int L, int D, int degree) {
  if (L < 1 || D < 1 || degree < 1 || degree > L) return -1;
  return symlms::block_length(D, degree);
}

int symlms_transform_length(int L, int D) {
  if (L < 1 || D < 1) return -1;
  int total = 0;
  for (int l = 1; l <= L; ++l) total += symlms::block_length(D, l);
  return total;
}

symlms_status symlms_full_transform(const double* members, int L, int D, double* out) {
  if (!members || !out || L < 1 || D < 1)
    return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument or bad shape");
  return guarded([&] {
    const auto blocks = symlms::full_transform(to_matrix(members, L, D));
    int at = 0;
    for (const auto& b : blocks) {
      for (int i = 0; i < b.values.size(); ++i) out[at++] = b.values[i];
    }
    return SYMLMS_OK;
  });
}

symlms_status symlms_naive_transform(const double* members, int L, int D, double* out) {
  if (!members || !out || L < 1 || D < 1)
    return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument or bad shape");
  return guarded([&] {
    const auto comps = symlms::naive_transform(to_matrix(members, L, D));
    int at = 0;
    for (const auto& c : comps)
      for (int i = 0; i < c.size(); ++i) out[at++] = c[i];
    return SYMLMS_OK;
  });
}

symlms_status symlms_invert_scalar(const double* lambda, int L, double* theta, int* had_complex) {
  if (!lambda || !theta || L < 1) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    symlms::Vector lam(L);
    for (int i = 0; i < L; ++i) lam[i] = lambda[i];
    const auto inv = symlms::invert_scalar(lam);
    for (int i = 0; i < L; ++i) theta[i] = inv.theta[i];
    if (had_complex) *had_complex = inv.any_complex ? 1 : 0;
    return SYMLMS_OK;
  });
}

symlms_status symlms_invert_vector(const double* blocks, int L, int D, double* theta,
                                   int* had_complex, double* max_condition) {
  if (!blocks || !theta || L < 1 || D < 1)
    return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument or bad shape");
  return guarded([&] {
    std::vector<symlms::CoefficientBlock> lam;
    int at = 0;
    for (int l = 1; l <= L; ++l) {
      symlms::CoefficientBlock b;
      b.degree = l;
      b.values.resize(symlms::block_length(D, l));
      for (int i = 0; i < b.values.size(); ++i) b.values[i] = blocks[at++];
      lam.push_back(std::move(b));
    }
    const auto inv = symlms::invert_vector(lam, D);
    from_matrix(inv.theta.rows(), theta);
    if (had_complex) *had_complex = inv.any_complex ? 1 : 0;
    if (max_condition) {
      double c = 0.0;
      for (double v : inv.condition_numbers) c = std::max(c, v);
      *max_condition = c;
    }
    return SYMLMS_OK;
  });
}

symlms_status symlms_root_sensitivity(const double* theta, int L, double* jac) {
  if (!theta || !jac || L < 1) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    symlms::Vector t(L);
    for (int i = 0; i < L; ++i) t[i] = theta[i];
    const auto s = symlms::root_sensitivity(t);
    from_matrix(s.jac, jac);
    return SYMLMS_OK;
  });
}

symlms_status symlms_lyapunov_solve(const double* q, const double* r, int n, double* sigma) {
  if (!q || !r || !sigma || n < 1) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const auto s = symlms::lyapunov_solve(to_matrix(q, n, n), to_matrix(r, n, n));
    from_matrix(s, sigma);
    return SYMLMS_OK;
  });
}

symlms_status symlms_sim_create(const char* config_json, uint64_t seed, symlms_sim** out) {
  if (!config_json || !out) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    json full = json::parse(config_json);
    full["seed"] = 0;  // parse_experiment requires it; the real seed is the argument
    const symlms::ExperimentSpec spec = symlms::parse_experiment(full);
    auto* sim = new symlms_sim{
        symlms::TrajectoryGenerator(spec.system, spec.perm, spec.hyper, seed, 0, true),
        spec.system.L, spec.system.D};
    *out = sim;
    return SYMLMS_OK;
  });
}

symlms_status symlms_sim_next(symlms_sim* sim, double* psi, double* y_set) {
  if (!sim) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null simulator");
  return guarded([&] {
    const symlms::ObservationRecord rec = sim->gen.next();
    if (psi) from_matrix(rec.psi, psi);
    if (y_set) from_matrix(rec.y_set, y_set);
    return SYMLMS_OK;
  });
}

void symlms_sim_destroy(symlms_sim* sim) { delete sim; }

symlms_status symlms_filter_create(const char* config_json, int L, int D, symlms_filter** out) {
  if (!config_json || !out || L < 1 || D < 1)
    return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument or bad shape");
  *out = nullptr;
  return guarded([&] {
    const json config = json::parse(config_json);
    const symlms::FilterConfig fc = symlms::parse_filter(config, L, D);
    auto* filter = new symlms_filter{symlms::make_filter(fc, L, D), L, D};
    *out = filter;
    return SYMLMS_OK;
  });
}

namespace {

symlms_status step_impl(symlms_filter* filter, const double* psi, const double* y_set,
                        const int* perm) {
  if (!filter || !psi || !y_set) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    symlms::ObservationRecord rec;
    rec.k = filter->impl->diagnostics().steps + 1;
    rec.psi = to_matrix(psi, filter->D, filter->D);
    rec.y_set = to_matrix(y_set, filter->L, filter->D);
    if (perm) {
      symlms::HiddenState h;
      h.perm.assign(perm, perm + filter->L);
      h.noise = symlms::Matrix::Zero(filter->L, filter->D);
      h.theta = symlms::Matrix::Zero(filter->L, filter->D);
      rec.hidden = std::move(h);
    }
    filter->impl->step(rec);
    return SYMLMS_OK;
  });
}

}  // namespace

symlms_status symlms_filter_step(symlms_filter* filter, const double* psi, const double* y_set) {
  return step_impl(filter, psi, y_set, nullptr);
}

symlms_status symlms_filter_step_labeled(symlms_filter* filter, const double* psi,
                                         const double* y_set, const int* perm) {
  if (!perm) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null permutation");
  return step_impl(filter, psi, y_set, perm);
}

symlms_status symlms_filter_estimate(symlms_filter* filter, double* theta) {
  if (!filter || !theta) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    from_matrix(filter->impl->estimate().canonical().rows(), theta);
    return SYMLMS_OK;
  });
}

symlms_status symlms_filter_coefficients(symlms_filter* filter, double* coeffs, int* n) {
  if (!filter || !n) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const symlms::Vector state = filter->impl->coefficient_state();
    if (coeffs) {
      if (*n < state.size()) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "buffer too small");
      for (int i = 0; i < state.size(); ++i) coeffs[i] = state[i];
    }
    *n = static_cast<int>(state.size());
    return SYMLMS_OK;
  });
}

void symlms_filter_destroy(symlms_filter* filter) { delete filter; }

symlms_status symlms_preset(const char* name, char** config_json) {
  if (!name || !config_json) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  *config_json = nullptr;
  return guarded([&] {
    *config_json = dup_string(symlms::preset_config(name).dump(2));
    return *config_json ? SYMLMS_OK : fail(SYMLMS_ERR_INTERNAL, "allocation failed");
  });
}

symlms_status symlms_run(const char* config_json, const char* out_dir, char** result_json) {
  if (!config_json || !out_dir) return fail(SYMLMS_ERR_INVALID_ARGUMENT, "null argument");
  if (result_json) *result_json = nullptr;
  return guarded([&] {
    const json config = json::parse(config_json);
    const symlms::RunResult result = symlms::run_task(config, out_dir);
    if (result_json) {
      *result_json = dup_string(result.summary.dump(2));
      if (!*result_json) return fail(SYMLMS_ERR_INTERNAL, "allocation failed");
    }
    if (!result.targets_met) return fail(SYMLMS_ERR_TARGET_MISSED, "one or more targets missed");
    return SYMLMS_OK;
  });
}

void symlms_string_free(char* s) { delete[] s; }

}  // extern "C"
