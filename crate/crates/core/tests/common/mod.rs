//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use gda_core::preference::{GdaParams, Utility};
use gda_core::surface::GdaSurface;

pub const V_GRID: [f64; 5] = [1e-4, 1e-2, 0.09, 0.25, 1.0];
pub const Y_GRID: [f64; 4] = [-0.5, 0.0, 0.05, 0.5];

pub fn utilities() -> Vec<Utility> {
    vec![Utility::log(), Utility::crra(3.0).unwrap(), Utility::crra_mixture(1.0, 4.0, 0.5).unwrap()]
}

pub fn param_sets() -> Vec<GdaParams> {
    [(0.5, 0.9), (0.5, 1.1), (2.0, 0.7), (0.5, 1.0), (0.0, 1.0)]
        .iter()
        .map(|&(b, d)| GdaParams::new(b, d).unwrap())
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst relative gap between the analytic partials and central differences
/// over the standard grid, and the worst gap between the two `H_x` forms.
pub fn gradient_check(u: &Utility, p: GdaParams) -> (f64, f64) {
    let s = GdaSurface::new(u, p);
    let (mut worst, mut forms) = (0.0f64, 0.0f64);
    for &v in &V_GRID {
        let x = v.sqrt();
        for &y in &Y_GRID {
            let gr = s.grad_h(x, y).unwrap();
            let gp = s.g_partials(v, y).unwrap();
            let hx = 1e-5 * x.max(0.1);
            let fd_hx = (s.solve_h(x + hx, y).unwrap() - s.solve_h(x - hx, y).unwrap()) / (2.0 * hx);
            let hy = 1e-5;
            let fd_hy = (s.solve_h(x, y + hy).unwrap() - s.solve_h(x, y - hy).unwrap()) / (2.0 * hy);
            let hv = 1e-5 * v.max(0.01);
            let fd_gv = (s.g(v + hv, y).unwrap() - s.g(v - hv, y).unwrap()) / (2.0 * hv);
            let fd_gy = (s.g(v, y + hy).unwrap() - s.g(v, y - hy).unwrap()) / (2.0 * hy);
            // H_y vanishes for power utilities; compare it on the scale of g_y/g.
            let hy_err = (gr.h_y - fd_hy).abs() / (1.0 + gr.h_y.abs());
            // For δ > 1, H_x is exponentially small near x = 0; measure it
            // against a thousandth of x there.
            let hx_err = (gr.h_x - fd_hx).abs() / gr.h_x.abs().max(fd_hx.abs()).max(1e-3 * x);
            for e in [hx_err, hy_err, rel_err(gp.g_v, fd_gv), rel_err(gp.g_y, fd_gy)] {
                worst = worst.max(e);
            }
            if let Some(alt) = gr.h_x_alt {
                forms = forms.max(rel_err(gr.h_x, alt));
            }
        }
    }
    (worst, forms)
}

