//! Numerical building blocks: the normal law, quadrature and root finding.

pub mod integrate;
pub mod normal;
pub mod quadrature;
pub mod roots;

pub use integrate::{integrate_1d, integrate_adaptive, integrate_adaptive_vec, QuadOptions};
pub use normal::{norm_cdf, norm_pdf, std_normal_cdf, std_normal_pdf};
pub use quadrature::{
    default_rule, gauss_hermite, gaussian_expect_range, gaussian_expect_range_vec, lognormal_expect,
    QuadratureRule,
};
pub use roots::{
    bracket_increasing, find_root, invert_monotone, try_find_root, RootBracket,
};
