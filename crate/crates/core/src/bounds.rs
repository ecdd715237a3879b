//! Robustness constants: the gain threshold under limited sensing and the
//! ultimate error bound under a bounded disturbance.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::kernels::{kernel_difference_fields, von_mises_target, KernelSpec, TargetDensitySpec};
use crate::micro::DisturbanceSpec;
use crate::spectral::spectral_partial;

/// Refinement factor of the fine-grid cross-check.
pub const FINE_FACTOR: usize = 4;

/// Norms of the target density: `L = ||rho_d||_2` and `M_i = ||d rho_d / d x_i||_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNorms {
    pub l: f64,
    pub m: Vec<f64>,
}

pub fn target_norms(rho_d: &ScalarField) -> TargetNorms {
    let dim = rho_d.grid().dim();
    TargetNorms {
        l: rho_d.l2_norm(),
        m: (0..dim).map(|a| spectral_partial(rho_d, a).l2_norm()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingConstants {
    pub f: f64,
    pub g: f64,
    /// `(F + G gamma) / 2`.
    pub kappa_min_gain: f64,
    pub gamma: f64,
}

/// `F = 2 sum_i (L ||g_{i,x_i}||_2 + M_i ||g_i||_2)`, `G = sum_i ||g_{i,x_i}||_2`
/// with `g = f^ - f`, and the gain threshold for an initial-error radius `gamma`.
pub fn theorem2_constants(kernel: &KernelSpec, rho_d: &ScalarField, gamma: f64) -> Result<SensingConstants> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "initial-error radius must be nonnegative"));
    }
    let grid = rho_d.grid();
    let diff = kernel_difference_fields(kernel, grid)?;
    let norms = target_norms(rho_d);
    let mut f = 0.0;
    let mut g = 0.0;
    for axis in 0..grid.dim() {
        let gx = diff.diagonal_derivatives[axis].l2_norm();
        let gi = diff.g.component(axis).l2_norm();
        f += 2.0 * (norms.l * gx + norms.m[axis] * gi);
        g += gx;
    }
    Ok(SensingConstants {
        f,
        g,
        kappa_min_gain: 0.5 * (f + g * gamma),
        gamma,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceConstants {
    pub w_bar: Vec<f64>,
    pub w_hat: f64,
    pub h: f64,
    pub a: f64,
    pub predicted_limsup: f64,
}

/// `H = 2 (L W_hat + sum_i M_i W_bar_i)`, `A = 2 Kp - W_hat`, and `H / A`.
pub fn theorem3_bound(disturbance: &DisturbanceSpec, rho_d: &ScalarField, kp: f64) -> Result<DisturbanceConstants> {
    let grid = rho_d.grid();
    let norms = target_norms(rho_d);
    let w_bar: Vec<f64> = disturbance.component_bounds(grid).into_iter().take(grid.dim()).collect();
    let w_hat = disturbance.divergence_bound(grid);
    let h = 2.0 * (norms.l * w_hat + norms.m.iter().zip(&w_bar).map(|(m, w)| m * w).sum::<f64>());
    let a = 2.0 * kp - w_hat;
    if a <= 0.0 {
        return Err(Error::NoGuarantee {
            two_kp: 2.0 * kp,
            w_hat,
        });
    }
    Ok(DisturbanceConstants {
        w_bar,
        w_hat,
        h,
        a,
        predicted_limsup: h / a,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub n: usize,
    pub kp: f64,
    pub norms: TargetNorms,
    pub sensing: SensingConstants,
    /// `None` when `2 Kp <= W_hat`.
    pub disturbance: Option<DisturbanceConstants>,
    pub w_hat: f64,
    /// Smallest gain with `A > 0`.
    pub disturbance_gain_threshold: f64,
    pub fine_n: usize,
    pub fine_norms: TargetNorms,
    pub fine_sensing: SensingConstants,
}

impl BoundsReport {
    pub fn compute(
        kernel: &KernelSpec,
        target: &TargetDensitySpec,
        disturbance: &DisturbanceSpec,
        grid: crate::grid::GridSpec,
        kp: f64,
        gamma: f64,
    ) -> Result<Self> {
        let rho_d = von_mises_target(target, grid)?;
        let sensing = theorem2_constants(kernel, &rho_d, gamma)?;
        let w_hat = disturbance.divergence_bound(grid);
        let dist = match theorem3_bound(disturbance, &rho_d, kp) {
            Ok(d) => Some(d),
            Err(Error::NoGuarantee { .. }) => None,
            Err(e) => return Err(e),
        };
        let fine = grid.refined(FINE_FACTOR)?;
        let rho_fine = von_mises_target(target, fine)?;
        Ok(BoundsReport {
            n: grid.n(),
            kp,
            norms: target_norms(&rho_d),
            sensing,
            disturbance: dist,
            w_hat,
            disturbance_gain_threshold: 0.5 * w_hat,
            fine_n: fine.n(),
            fine_norms: target_norms(&rho_fine),
            fine_sensing: theorem2_constants(kernel, &rho_fine, gamma)?,
        })
    }

    fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("n".to_string(), self.n as f64),
            ("kp".to_string(), self.kp),
            ("L".to_string(), self.norms.l),
        ];
        for (i, m) in self.norms.m.iter().enumerate() {
            rows.push((format!("M_{}", i + 1), *m));
        }
        rows.push(("F".into(), self.sensing.f));
        rows.push(("G".into(), self.sensing.g));
        rows.push(("gamma".into(), self.sensing.gamma));
        rows.push(("kappa_min_gain".into(), self.sensing.kappa_min_gain));
        rows.push(("W_hat".into(), self.w_hat));
        rows.push(("disturbance_gain_threshold".into(), self.disturbance_gain_threshold));
        if let Some(d) = &self.disturbance {
            for (i, w) in d.w_bar.iter().enumerate() {
                rows.push((format!("W_bar_{}", i + 1), *w));
            }
            rows.push(("H".into(), d.h));
            rows.push(("A".into(), d.a));
            rows.push(("predicted_limsup".into(), d.predicted_limsup));
        }
        rows.push(("fine_n".into(), self.fine_n as f64));
        rows.push(("fine_L".into(), self.fine_norms.l));
        rows.push(("fine_F".into(), self.fine_sensing.f));
        rows.push(("fine_G".into(), self.fine_sensing.g));
        rows
    }

    /// Aligned `name  value` lines.
    pub fn render(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in &rows {
            let _ = writeln!(s, "{k:<width$}  {v:.9e}");
        }
        if self.disturbance.is_none() {
            let _ = writeln!(
                s,
                "{:<width$}  none: 2*Kp = {} does not exceed W_hat = {}",
                "perturbation_bound",
                2.0 * self.kp,
                self.w_hat
            );
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "quantity,value")?;
        for (k, v) in self.rows() {
            writeln!(out, "{k},{v:.12e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::kernels::Sensing;
    use std::f64::consts::PI;

    fn setup(n: usize) -> (GridSpec, ScalarField) {
        let grid = GridSpec::new(2, n).unwrap();
        let rho = von_mises_target(&TargetDensitySpec::default(), grid).unwrap();
        (grid, rho)
    }

    #[test]
    fn unlimited_sensing_has_no_threshold() {
        let (_, rho) = setup(20);
        let c = theorem2_constants(&KernelSpec::default(), &rho, 5.0).unwrap();
        assert_eq!((c.f, c.g, c.kappa_min_gain), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constants_scale_with_strength() {
        let (_, rho) = setup(30);
        let base = KernelSpec::default().with_sensing(Sensing::Radius(0.1 * PI));
        let a = theorem2_constants(&base, &rho, 1.0).unwrap();
        let b = theorem2_constants(&base.with_strength(2.0 * base.strength), &rho, 1.0).unwrap();
        assert!((b.f - 2.0 * a.f).abs() <= 1e-12 * a.f);
        assert!((b.g - 2.0 * a.g).abs() <= 1e-12 * a.g);
    }

    #[test]
    fn zero_radius_fine_grid_agreement() {
        let spec = KernelSpec::default().with_sensing(Sensing::Radius(0.0));
        let (_, coarse) = setup(50);
        let (_, fine) = setup(200);
        let a = theorem2_constants(&spec, &coarse, 1.0).unwrap();
        let b = theorem2_constants(&spec, &fine, 1.0).unwrap();
        assert!(((a.f - b.f) / b.f).abs() < 0.02, "F {} vs {}", a.f, b.f);
        assert!(((a.g - b.g) / b.g).abs() < 0.02, "G {} vs {}", a.g, b.g);
    }

    #[test]
    fn constants_shrink_with_radius() {
        let (_, rho) = setup(50);
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for frac in [0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.0, 1.2, 1.5] {
            let spec = KernelSpec::default().with_sensing(Sensing::Radius(frac * PI));
            let c = theorem2_constants(&spec, &rho, 1.0).unwrap();
            assert!(c.f <= prev.0 * (1.0 + 1e-9) && c.g <= prev.1 * (1.0 + 1e-9), "radius {frac}pi");
            prev = (c.f, c.g);
        }
    }

    #[test]
    fn step_disturbance_bound() {
        let (_, rho) = setup(50);
        let none = theorem3_bound(&DisturbanceSpec::none(), &rho, 100.0).unwrap();
        assert_eq!((none.h, none.predicted_limsup), (0.0, 0.0));
        let d = theorem3_bound(&DisturbanceSpec::step(1.5 * PI, 2, 0.2), &rho, 100.0).unwrap();
        assert_eq!(d.w_hat, 0.0);
        assert_eq!(d.a, 200.0);
        let norms = target_norms(&rho);
        let expect = 2.0 * 1.5 * PI * (norms.m[0] + norms.m[1]);
        assert!((d.h - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn nonpositive_margin_is_an_error() {
        use crate::grid::VectorField;
        use crate::micro::DisturbanceShape;
        let (grid, rho) = setup(20);
        let table = VectorField::from_fn(grid, |x| [3.0 * x[0].sin(), 0.0]);
        let spec = DisturbanceSpec {
            amplitude: [0.0, 0.0],
            onset: 0.0,
            shape: DisturbanceShape::Table(table),
        };
        assert!(matches!(
            theorem3_bound(&spec, &rho, 1.0),
            Err(Error::NoGuarantee { .. })
        ));
    }

    #[test]
    fn report_renders_and_writes() {
        let spec = KernelSpec::default().with_sensing(Sensing::Radius(0.1 * PI));
        let grid = GridSpec::new(2, 20).unwrap();
        let r = BoundsReport::compute(
            &spec,
            &TargetDensitySpec::default(),
            &DisturbanceSpec::step(0.5 * PI, 2, 0.2),
            grid,
            100.0,
            10.0,
        )
        .unwrap();
        assert_eq!(r.fine_n, 80);
        let text = r.render();
        assert!(text.contains("predicted_limsup"));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert!(csv.starts_with("quantity,value\n"));
        assert!(csv.lines().any(|l| l.starts_with("F,")));
    }
}
