use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Potential family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialFamily {
    Zero,
    /// `c (1 + |x - x0|^2)^{-rho/2}`.
    PolynomialDecay,
    /// `c exp(1 - 1/(1 - |x - x0|^2 / R^2))` inside the ball of radius `R`, zero outside.
    CompactBump,
}

/// A smooth potential with an analytic gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: PotentialFamily,
    #[serde(default)]
    pub amplitude: f64,
    /// Decay exponent in the short-range condition.
    #[serde(default = "default_rho")]
    pub decay_rho: f64,
    #[serde(default)]
    pub center: Vec<f64>,
    /// Support radius for the compact bump.
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_rho() -> f64 {
    1.0
}

fn default_radius() -> f64 {
    1.0
}

impl PotentialSpec {
    pub fn zero(dim: usize) -> Self {
        Self { family: PotentialFamily::Zero, amplitude: 0.0, decay_rho: 1.0, center: vec![0.0; dim], radius: 1.0 }
    }

    pub fn polynomial_decay(dim: usize, amplitude: f64, rho: f64) -> Self {
        Self {
            family: PotentialFamily::PolynomialDecay,
            amplitude,
            decay_rho: rho,
            center: vec![0.0; dim],
            radius: 1.0,
        }
    }

    pub fn compact_bump(dim: usize, amplitude: f64, radius: f64) -> Self {
        Self { family: PotentialFamily::CompactBump, amplitude, decay_rho: 1.0, center: vec![0.0; dim], radius }
    }

    pub fn is_zero(&self) -> bool {
        self.family == PotentialFamily::Zero || self.amplitude == 0.0
    }
}

/// Validated evaluator for `V` and `grad V`.
#[derive(Debug, Clone)]
pub struct Potential {
    spec: PotentialSpec,
}

/// Check the spec and build an evaluator.
pub fn make_potential(spec: &PotentialSpec, dim: usize) -> Result<Potential> {
    if !spec.amplitude.is_finite() {
        return Err(invalid("potential amplitude must be finite"));
    }
    let mut spec = spec.clone();
    if spec.center.is_empty() {
        spec.center = vec![0.0; dim];
    }
    if spec.center.len() != dim {
        return Err(invalid(format!("potential center has {} components, grid dimension is {dim}", spec.center.len())));
    }
    if spec.center.iter().any(|c| !c.is_finite()) {
        return Err(invalid("potential center must be finite"));
    }
    match spec.family {
        PotentialFamily::Zero => {}
        PotentialFamily::PolynomialDecay => {
            if !(spec.decay_rho > 0.0) || !spec.decay_rho.is_finite() {
                return Err(invalid(format!(
                    "decay exponent rho = {} violates the short-range condition |V(x)| + <x>|grad V(x)| <= C <x>^(-rho), which needs rho > 0",
                    spec.decay_rho
                )));
            }
        }
        PotentialFamily::CompactBump => {
            if !(spec.radius > 0.0) || !spec.radius.is_finite() {
                return Err(invalid(format!("compact bump radius must be positive, got {}", spec.radius)));
            }
            if !(spec.decay_rho > 0.0) {
                return Err(invalid(format!(
                    "decay exponent rho = {} violates the short-range condition |V(x)| + <x>|grad V(x)| <= C <x>^(-rho), which needs rho > 0",
                    spec.decay_rho
                )));
            }
        }
    }
    Ok(Potential { spec })
}

fn japanese(x: &[f64]) -> f64 {
    (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

impl Potential {
    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.center.len()
    }

    pub fn is_zero(&self) -> bool {
        self.spec.is_zero()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_and_gradient(x).0
    }

    /// `(V(x), grad V(x))`.
    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d: Vec<f64> = x.iter().zip(&self.spec.center).map(|(a, b)| a - b).collect();
        let q: f64 = d.iter().map(|v| v * v).sum();
        let c = self.spec.amplitude;
        match self.spec.family {
            PotentialFamily::Zero => (0.0, vec![0.0; d.len()]),
            PotentialFamily::PolynomialDecay => {
                let rho = self.spec.decay_rho;
                let base = 1.0 + q;
                let v = c * base.powf(-rho / 2.0);
                let factor = -rho * v / base;
                (v, d.iter().map(|di| factor * di).collect())
            }
            PotentialFamily::CompactBump => {
                let r2 = self.spec.radius * self.spec.radius;
                let s = q / r2;
                if s >= 1.0 {
                    return (0.0, vec![0.0; d.len()]);
                }
                let v = c * (1.0 - 1.0 / (1.0 - s)).exp();
                let factor = -v / ((1.0 - s) * (1.0 - s)) * 2.0 / r2;
                (v, d.iter().map(|di| factor * di).collect())
            }
        }
    }

    /// `sup_x <x>^rho (|V| + <x>|grad V|)`, maximized over rays through the
    /// center along the coordinate axes and diagonals, on a radial grid
    /// reaching `|x| = 1e4`.
    pub fn ass1_constant(&self) -> f64 {
        let n = self.dim();
        let rho = self.spec.decay_rho;
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for j in 0..n {
            for s in [-1.0, 1.0] {
                let mut e = vec![0.0; n];
                e[j] = s;
                dirs.push(e);
            }
        }
        if n > 1 {
            let w = 1.0 / (n as f64).sqrt();
            dirs.push(vec![w; n]);
            dirs.push(vec![-w; n]);
        }
        let mut radii: Vec<f64> = (0..=400).map(|k| 0.01 * k as f64).collect();
        radii.extend((0..=600).map(|k| 4.0 * 10f64.powf(3.4 * k as f64 / 600.0)));
        let mut best: f64 = 0.0;
        for d in &dirs {
            for &r in &radii {
                let x: Vec<f64> = d.iter().zip(&self.spec.center).map(|(di, ci)| ci + r * di).collect();
                let (v, g) = self.value_and_gradient(&x);
                let jx = japanese(&x);
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                best = best.max(jx.powf(rho) * (v.abs() + jx * gn));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_family() {
        let p = make_potential(&PotentialSpec::zero(2), 2).unwrap();
        let (v, g) = p.value_and_gradient(&[0.3, -1.0]);
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn polynomial_decay_examples() {
        let p = make_potential(&PotentialSpec::polynomial_decay(1, 0.3, 4.0), 1).unwrap();
        let (v, g) = p.value_and_gradient(&[0.0]);
        assert!((v - 0.3).abs() < 1e-15);
        assert_eq!(g[0], 0.0);
        let c = p.ass1_constant();
        // along a ray the bracket is c (1 + rho r^2 / <r>^2), supremum c (1 + rho)
        assert!(c.is_finite());
        assert!((c / (0.3 * 5.0) - 1.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let specs = [
            PotentialSpec::polynomial_decay(2, 0.7, 3.0),
            PotentialSpec { center: vec![0.2, -0.1], ..PotentialSpec::compact_bump(2, 1.3, 1.5) },
        ];
        for spec in specs {
            let p = make_potential(&spec, 2).unwrap();
            let x = [0.4, 0.5];
            let (_, g) = p.value_and_gradient(&x);
            for j in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-8, "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn compact_bump_support() {
        let p = make_potential(&PotentialSpec::compact_bump(1, 2.0, 1.0), 1).unwrap();
        assert!((p.value(&[0.0]) - 2.0).abs() < 1e-15);
        assert_eq!(p.value(&[1.0]), 0.0);
        assert_eq!(p.value(&[-3.0]), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let err = make_potential(&PotentialSpec::polynomial_decay(1, 0.3, 0.0), 1).unwrap_err();
        assert!(err.to_string().contains("short-range"));
        assert!(make_potential(&PotentialSpec::polynomial_decay(1, 0.3, -1.0), 1).is_err());
        assert!(make_potential(&PotentialSpec::compact_bump(1, 0.3, 0.0), 1).is_err());
        assert!(make_potential(&PotentialSpec::polynomial_decay(2, 0.3, 2.0), 1).is_err());
        assert!(make_potential(&PotentialSpec::polynomial_decay(1, f64::NAN, 2.0), 1).is_err());
    }
}
