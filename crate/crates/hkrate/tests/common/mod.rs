//! Labeled integrands shared by the integration tests.

#![allow(dead_code)]

use hkrate::integral_tests::Class;

/// `(expression in t, expected class, borderline)`. Borderline items may be
/// classified `Inconclusive`.
pub const SUITE: &[(&str, Class, bool)] = &[
    ("t^-2", Class::Convergent, false),
    ("t^-1.1", Class::Convergent, false),
    ("t^-1", Class::Divergent, false),
    ("t^-0.9", Class::Divergent, false),
    ("t^-0.5", Class::Divergent, false),
    ("exp(-t)", Class::Convergent, false),
    ("t^3*exp(-sqrt(t))", Class::Convergent, false),
    ("1/(1+t^2)", Class::Convergent, false),
    ("1/(t*ln(t)^2)", Class::Convergent, false),
    ("1/(t*ln(t)^1.2)", Class::Convergent, false),
    ("1/(t*ln(t))", Class::Divergent, false),
    ("1/(t*ln(t)^0.8)", Class::Divergent, false),
    ("ln(t)^5/t^1.05", Class::Convergent, false),
    ("1/(t*sqrt(ln(t)))", Class::Divergent, false),
    ("1/(t*ln(t)*ln(ln(t))^2)", Class::Convergent, false),
    ("1/(t*ln(t)*ln(ln(t))^1.5)", Class::Convergent, false),
    ("1/(t*ln(t)*ln(ln(t)))", Class::Divergent, false),
    ("1/(t*ln(t)*ln(ln(t))^0.5)", Class::Divergent, false),
    ("1/(t*ln(t)*ln(ln(t))^1.1)", Class::Convergent, false),
    // log-log exponent 2% above 1: inside the 5% ratio margin
    ("1/(t*ln(t)*ln(ln(t))^1.02)", Class::Convergent, true),
];
