//! Small-dimension vector and cone geometry shared by the refinement
//! algorithms. Vectors are plain `f64` slices; dimensions in this crate stay
//! below a dozen so nothing here is tuned for large inputs.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, TradeError};

/// Tolerance for unit-norm and orthogonality checks.
pub const GEOM_TOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_l1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn is_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn normalize(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if !(n > 0.0) || !n.is_finite() {
        return Err(TradeError::Domain("cannot normalize a zero or non-finite vector".into()));
    }
    Ok(scale(a, 1.0 / n))
}

pub fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Angle in radians between two nonzero vectors, clamped into `[0, π]`.
pub fn angle_between(v1: &[f64], v2: &[f64]) -> Result<f64> {
    check_dim(v1.len(), v2.len())?;
    let n1 = norm(v1);
    let n2 = norm(v2);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(TradeError::Domain("angle with a zero vector is undefined".into()));
    }
    let c = (dot(v1, v2) / (n1 * n2)).clamp(-1.0, 1.0);
    Ok(c.acos())
}

/// Removes from `v` its components along each vector of the orthonormal set `basis`.
pub fn project_out(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = v.to_vec();
    // two passes of modified Gram-Schmidt keep the residual orthogonal to ~1e-15
    for _ in 0..2 {
        for b in basis {
            let c = dot(&r, b);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= c * bi;
            }
        }
    }
    r
}

/// Orthonormalizes `fixed` and completes it to a basis of `R^n`, returning only
/// the `n - fixed.len()` completion vectors.
pub fn orthonormal_extension(fixed: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    if fixed.len() > n {
        return Err(TradeError::Degenerate(format!(
            "{} fixed vectors cannot be independent in dimension {n}",
            fixed.len()
        )));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for f in fixed {
        check_dim(n, f.len())?;
        let scale_ref = norm(f);
        let r = project_out(f, &basis);
        let rn = norm(&r);
        if !(scale_ref > 0.0) || rn <= 1e-9 * scale_ref.max(1.0) {
            return Err(TradeError::Degenerate("fixed vectors are linearly dependent".into()));
        }
        basis.push(scale(&r, 1.0 / rn));
    }
    let mut out = Vec::with_capacity(n - fixed.len());
    while basis.len() < n {
        // the standard basis vector with the largest residual is always well conditioned
        let (_, residual) = (0..n)
            .map(|i| (i, project_out(&unit(n, i), &basis)))
            .max_by(|a, b| norm(&a.1).total_cmp(&norm(&b.1)).then(b.0.cmp(&a.0)))
            .expect("n > 0");
        let rn = norm(&residual);
        let v = scale(&residual, 1.0 / rn);
        basis.push(v.clone());
        out.push(v);
    }
    Ok(out)
}

/// `u cos(phi) + w sin(phi)` for orthonormal `u`, `w`.
pub fn rotate_towards(u: &[f64], w: &[f64], phi: f64) -> Result<Vec<f64>> {
    check_dim(u.len(), w.len())?;
    if (norm(u) - 1.0).abs() > 1e-6 || (norm(w) - 1.0).abs() > 1e-6 {
        return Err(TradeError::Domain("rotate_towards expects unit vectors".into()));
    }
    if dot(u, w).abs() > 1e-6 {
        return Err(TradeError::Domain("rotate_towards expects orthogonal vectors".into()));
    }
    let (s, c) = phi.sin_cos();
    Ok(u.iter().zip(w).map(|(a, b)| a * c + b * s).collect())
}

/// Reflection of `v` across the hyperplane with normal `n`.
pub fn mirror(v: &[f64], n: &[f64]) -> Vec<f64> {
    let nn = dot(n, n);
    if nn == 0.0 {
        return v.to_vec();
    }
    axpy(v, -2.0 * dot(v, n) / nn, n)
}

/// Cone `C(direction, angle)` of candidate gradient directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCone {
    direction: Vec<f64>,
    angle: f64,
}

impl GradientCone {
    /// Builds a cone, normalizing `direction`. The angle must lie in `[0, π/2]`;
    /// a zero angle is a ray and only occurs when an enclosure collapses.
    pub fn new(direction: &[f64], angle: f64) -> Result<Self> {
        if !is_finite(direction) || !angle.is_finite() {
            return Err(TradeError::Domain("non-finite cone".into()));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2 + GEOM_TOL).contains(&angle) {
            return Err(TradeError::Domain(format!("cone angle {angle} outside [0, pi/2]")));
        }
        Ok(Self {
            direction: normalize(direction)?,
            angle: angle.min(std::f64::consts::FRAC_PI_2),
        })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn contains(&self, v: &[f64]) -> Result<bool> {
        cone_contains(self, v)
    }
}

pub fn cone_contains(cone: &GradientCone, v: &[f64]) -> Result<bool> {
    Ok(angle_between(v, cone.direction())? <= cone.angle() + GEOM_TOL)
}

/// Constraint `<normal, x> >= offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if !(norm(&normal) > 0.0) {
            return Err(TradeError::Domain("halfspace normal must be nonzero".into()));
        }
        Ok(Self { normal, offset })
    }

    /// Signed slack `<normal, x> - offset`; nonnegative inside.
    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.slack(x) >= -tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn angle_examples() {
        assert!((angle_between(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(angle_between(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((angle_between(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!(angle_between(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn angle_clamps_rounding() {
        let v = [0.1, 0.2, 0.3];
        let a = angle_between(&v, &scale(&v, 3.0)).unwrap();
        assert!(a.is_finite() && a < 1e-7);
        let b = angle_between(&v, &scale(&v, -7.0)).unwrap();
        assert!((b - std::f64::consts::PI).abs() < 1e-7);
    }

    #[test]
    fn cone_contains_examples() {
        let c = GradientCone::new(&[1.0, 0.0], FRAC_PI_4).unwrap();
        assert!(c.contains(&[1.0, 0.5]).unwrap());
        assert!(!c.contains(&[0.0, 1.0]).unwrap());
        let half = GradientCone::new(&[1.0, 1.0], FRAC_PI_2).unwrap();
        assert!(!half.contains(&[-1.0, -1.0]).unwrap());
        assert!(c.contains(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn cone_rejects_bad_angle() {
        assert!(GradientCone::new(&[1.0, 0.0], 2.0).is_err());
        assert!(GradientCone::new(&[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn extension_axis_complement() {
        let ext = orthonormal_extension(&[vec![1.0, 0.0, 0.0]], 3).unwrap();
        assert_eq!(ext.len(), 2);
        for v in &ext {
            assert!(v[0].abs() < 1e-12);
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
        assert!(dot(&ext[0], &ext[1]).abs() < 1e-12);

        let std2 = orthonormal_extension(&[], 2).unwrap();
        assert_eq!(std2.len(), 2);
        assert!(dot(&std2[0], &std2[1]).abs() < 1e-12);
    }

    #[test]
    fn extension_diagonal_case() {
        let s = 0.5f64.sqrt();
        let ext = orthonormal_extension(&[vec![s, s, 0.0], vec![0.0, 0.0, 1.0]], 3).unwrap();
        assert_eq!(ext.len(), 1);
        let v = &ext[0];
        // direct arithmetic: must be +/- (1, -1, 0)/sqrt(2)
        assert!((v[0].abs() - s).abs() < 1e-12);
        assert!((v[0] + v[1]).abs() < 1e-12);
        assert!(v[2].abs() < 1e-12);
    }

    #[test]
    fn extension_rejects_dependent() {
        let r = orthonormal_extension(&[vec![1.0, 1.0], vec![2.0, 2.0]], 2);
        assert!(matches!(r, Err(TradeError::Degenerate(_))));
    }

    #[test]
    fn rotate_examples() {
        let r = rotate_towards(&[1.0, 0.0], &[0.0, 1.0], FRAC_PI_2).unwrap();
        assert!(r[0].abs() < 1e-15 && (r[1] - 1.0).abs() < 1e-15);
        let r = rotate_towards(&[1.0, 0.0], &[0.0, 1.0], 0.0).unwrap();
        assert_eq!(r, vec![1.0, 0.0]);
        let r = rotate_towards(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], FRAC_PI_4).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!((r[0] - h).abs() < 1e-15 && (r[1] - h).abs() < 1e-15 && r[2] == 0.0);
        assert!(rotate_towards(&[1.0, 0.0], &[1.0, 0.0], 0.3).is_err());
    }

    #[test]
    fn mirror_reflects() {
        let m = mirror(&[1.0, 2.0], &[0.0, 1.0]);
        assert_eq!(m, vec![1.0, -2.0]);
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn extension_is_orthonormal(n in 2usize..7, seed in vec_strategy(12)) {
            let k = (seed[0].abs() as usize) % n;
            let fixed: Vec<Vec<f64>> = (0..k).map(|i| {
                (0..n).map(|j| seed[(i * 3 + j) % 12] + if i == j { 25.0 } else { 0.0 }).collect()
            }).collect();
            let ext = orthonormal_extension(&fixed, n).unwrap();
            prop_assert_eq!(ext.len(), n - k);
            let fixed_unit: Vec<Vec<f64>> = fixed.iter().map(|f| normalize(f).unwrap()).collect();
            for (i, a) in ext.iter().enumerate() {
                prop_assert!((norm(a) - 1.0).abs() <= 1e-9);
                for b in ext.iter().skip(i + 1) {
                    prop_assert!(dot(a, b).abs() <= 1e-9);
                }
                for f in &fixed_unit {
                    prop_assert!(dot(a, f).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn rotation_preserves_norm_and_angle(v in vec_strategy(4), w in vec_strategy(4), phi in 0.0f64..FRAC_PI_2) {
            prop_assume!(norm(&v) > 1e-3);
            let u = normalize(&v).unwrap();
            let wr = project_out(&w, std::slice::from_ref(&u));
            prop_assume!(norm(&wr) > 1e-3);
            let wu = normalize(&wr).unwrap();
            let r = rotate_towards(&u, &wu, phi).unwrap();
            prop_assert!((norm(&r) - 1.0).abs() <= 1e-9);
            prop_assert!((angle_between(&r, &u).unwrap() - phi).abs() <= 1e-7);
        }

        #[test]
        fn angle_symmetric_and_scale_invariant(a in vec_strategy(3), b in vec_strategy(3), s in 0.01f64..100.0, t in 0.01f64..100.0) {
            prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let ab = angle_between(&a, &b).unwrap();
            prop_assert!((ab - angle_between(&b, &a).unwrap()).abs() <= 1e-12);
            prop_assert!((ab - angle_between(&scale(&a, s), &scale(&b, t)).unwrap()).abs() <= 1e-7);
        }
    }
}
