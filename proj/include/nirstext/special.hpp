#pragma once

namespace nirstext::special {

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation
// (modified Lentz). Accurate to ~1e-12 for the a, b ranges used here.
double betainc(double a, double b, double x);

// Two-sided p-value for a Student t statistic with df degrees of freedom:
// p = I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided_p(double t, double df);

}  // namespace nirstext::special
