#pragma once

#include <string>
#include <vector>

#include "sdec/errors.hpp"

namespace sdec {

/// One training-iteration row. avg_return and consistency_residual are
/// NaN-coded when not evaluated; wall_ms is NaN unless timing was enabled.
struct MetricsRecord {
    long long iteration = 0;
    double objective_L_eta = 0.0;
    double first_term = 0.0;
    double second_term = 0.0;
    double dual_loss = 0.0;
    double grad_norm_V = 0.0;
    double grad_norm_pi = 0.0;
    double avg_return = 0.0;
    double consistency_residual = 0.0;
    double wall_ms = 0.0;
};

/// Shortest decimal form that reparses to the same double; nan -> "nan".
std::string format_double(double v);
double parse_double(const std::string& s);

/// Writes the pinned CSV layout:
/// iteration,objective_L_eta,first_term,second_term,dual_loss,grad_norm_V,
/// grad_norm_pi,avg_return,consistency_residual,wall_ms
void write_metrics(const std::vector<MetricsRecord>& records, const std::string& path);
std::string metrics_to_csv(const std::vector<MetricsRecord>& records);

std::vector<MetricsRecord> read_metrics(const std::string& path);
std::vector<MetricsRecord> metrics_from_csv(const std::string& text);

}  // namespace sdec
