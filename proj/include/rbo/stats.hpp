#pragma once

namespace rbo::stats {

double normal_pdf(double z);
double normal_cdf(double z);

// Regularised incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

// Student's t distribution with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);
// P(|T| >= |t|).
double student_t_two_sided_p(double t, double dof);
// Inverse CDF for p in (0, 1).
double student_t_quantile(double p, double dof);

}  // namespace rbo::stats
