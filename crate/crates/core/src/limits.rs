//! Closed-form cooling limits: weak coupling (adiabatic elimination + RWA),
//! general-N limits in terms of G or the coupling angles, the classical
//! strong-coupling limit and the quantum backaction limit.
//!
//! Γ in the two-mode formulas is the total strength, split evenly between
//! the two drives.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linearize::LinearizedSystem;
use crate::scalar::{cabs2, Cx, Real};
use crate::spectral::{coupling_angle, dissipation_from, reciprocal_vectors};

/// Symmetric two-mode parameters, validated against the assumptions of the
/// closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitInputs<T: Real> {
    pub gamma: T,
    pub kappa: T,
    pub n_th: T,
    /// Total strength Γ = Γ_1 + Γ_2.
    pub strength: T,
    pub theta: T,
    pub splitting: T,
    pub mean_frequency: T,
}

impl<T: Real> LimitInputs<T> {
    /// Reads symmetric parameters off a two-drive, two-mode system. Requires
    /// equal κ, equal γ and equal per-drive strengths to a relative 10⁻⁶.
    pub fn two_mode_symmetric(ls: &LinearizedSystem<T>, n_th: T) -> Result<Self> {
        if ls.optical_count() != 2 || ls.mechanical_count() != 2 {
            return Err(Error::Precondition("symmetric two-mode limits need M = N = 2".into()));
        }
        let same = |a: T, b: T| (a - b).abs() <= T::lit(1e-6) * a.abs().max(b.abs());
        let k = &ls.optical_linewidths;
        let g = &ls.mechanical_linewidths;
        if !same(k[0], k[1]) {
            return Err(Error::Precondition("optical linewidths differ".into()));
        }
        if !same(g[0], g[1]) {
            return Err(Error::Precondition("mechanical linewidths differ".into()));
        }
        let s = ls.strengths();
        if !same(s.per_mode[0], s.per_mode[1]) {
            return Err(Error::Precondition("drive strengths differ".into()));
        }
        Ok(Self {
            gamma: g[0],
            kappa: k[0],
            n_th,
            strength: s.total,
            theta: coupling_angle(&ls.coupling)?,
            splitting: ls.mechanical_splitting(),
            mean_frequency: ls.mean_mechanical_frequency(),
        })
    }

    /// Appendix-style auxiliary s = (γ + κ)/Γ.
    pub fn s(&self) -> T {
        (self.gamma + self.kappa) / self.strength
    }

    /// Auxiliary L = γ[(s+2)² − 4cos²θ]/κ.
    pub fn l(&self) -> T {
        let s = self.s();
        let c = self.theta.cos();
        self.gamma * ((s + T::lit(2.0)).powi(2) - T::lit(4.0) * c * c) / self.kappa
    }
}

/// Weak-coupling total occupation including the mechanical splitting:
/// 2γn(γ+2Γ) / [(γ+2Γ)² − 4Γ²cos²θ (γ+2Γ)²/((γ+2Γ)² + δω²)].
pub fn weak_coupling_two_mode<T: Real>(gamma: T, strength: T, theta: T, splitting: T, n_th: T) -> T {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let a = gamma + two * strength;
    let c = theta.cos();
    let den = a * a - four * strength * strength * c * c * a * a / (a * a + splitting * splitting);
    two * gamma * n_th * a / den
}

/// The δω → 0 reduction 2γn(γ+2Γ)/(γ² + 4γΓ + 4Γ² sin²θ).
pub fn weak_coupling_two_mode_reduced<T: Real>(gamma: T, strength: T, theta: T, n_th: T) -> T {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let s = theta.sin();
    two * gamma * n_th * (gamma + two * strength)
        / (gamma * gamma + four * gamma * strength + four * strength * strength * s * s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralLimit<T: Real> {
    /// (γn_th/2) Tr P⁻¹, valid for any κ_k.
    pub n_tot: T,
    /// (1/4)γκn_th Σ|(G⁻¹)_kj|², present when all κ_k are equal.
    pub uniform_kappa_form: Option<T>,
}

/// Weak-coupling limit for a square invertible G.
pub fn weak_coupling_general<T: Real>(g: &DMatrix<Cx<T>>, kappas: &[T], gamma: T, n_th: T) -> Result<GeneralLimit<T>> {
    let n = g.ncols();
    if g.nrows() != n {
        return Err(Error::Precondition(format!("square coupling matrix needed, got {}x{n}", g.nrows())));
    }
    let c = reciprocal_vectors(g).map_err(|e| match e {
        Error::DependentRows { rank, rows } => Error::DarkModeExists { rank, modes: rows },
        other => other,
    })?;
    // Tr P⁻¹ = ½ Σ_k κ_k |c_k|².
    let p = dissipation_from(g, kappas).total;
    let p_inv = p.try_inverse().ok_or(Error::DarkModeExists { rank: n - 1, modes: n })?;
    let n_tot = gamma * n_th * T::lit(0.5) * p_inv.trace().re;
    let k0 = kappas[0];
    let uniform = kappas.iter().all(|&k| (k - k0).abs() <= T::lit(1e-12) * k0);
    let uniform_kappa_form = uniform.then(|| {
        let frob: T = c.iter().flat_map(|v| v.iter()).fold(T::zero(), |s, z| s + cabs2(*z));
        T::lit(0.25) * gamma * k0 * n_th * frob
    });
    Ok(GeneralLimit { n_tot, uniform_kappa_form })
}

/// (γn_th/4) Σ_k 1/(Γ_k sin²θ_k).
pub fn limit_by_angles<T: Real>(strengths: &[T], angles: &[T], gamma: T, n_th: T) -> Result<T> {
    if strengths.len() != angles.len() {
        return Err(Error::Precondition("one angle per drive strength".into()));
    }
    let mut acc = T::zero();
    for (k, (&g, &t)) in strengths.iter().zip(angles).enumerate() {
        let s = t.sin();
        if s == T::zero() || g == T::zero() {
            return Err(Error::Divergence(k));
        }
        acc += T::one() / (g * s * s);
    }
    Ok(T::lit(0.25) * gamma * n_th * acc)
}

/// Classical strong-coupling form with s = (γ+κ)/Γ, L = γ[(s+2)² − 4cos²θ]/κ,
/// X = L + 2s + 4sin²θ: n_tot = 2Ln_th / (X − 4s²cos²θ/X).
pub fn classical_limit_two_mode<T: Real>(gamma: T, kappa: T, strength: T, theta: T, n_th: T) -> T {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    if strength == T::zero() {
        return two * n_th;
    }
    let s = (gamma + kappa) / strength;
    let c = theta.cos();
    let sn = theta.sin();
    let l = gamma * ((s + two).powi(2) - four * c * c) / kappa;
    let x = l + two * s + four * sn * sn;
    two * l * n_th / (x - four * s * s * c * c / x)
}

/// Γ → ∞ asymptote: 2γn_th/(γ+κ) for θ ≠ 0 and (γ/(γ+κ) + 1)n_th for θ = 0.
pub fn classical_limit_asymptote<T: Real>(gamma: T, kappa: T, theta: T, n_th: T) -> T {
    if theta == T::zero() {
        (gamma / (gamma + kappa) + T::one()) * n_th
    } else {
        T::lit(2.0) * gamma * n_th / (gamma + kappa)
    }
}

/// Force-noise spectrum S_j(ω) = Σ_k |g_kj|²/((ω − δ_k)² + κ_k²/4) acting on
/// one mechanical mode, in units where (x_zpf)⁻² = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceNoise<T: Real> {
    pub weights: Vec<T>,
    pub detunings: Vec<T>,
    pub linewidths: Vec<T>,
}

impl<T: Real> ForceNoise<T> {
    pub fn new(column: &[Cx<T>], detunings: &[T], linewidths: &[T]) -> Self {
        Self {
            weights: column.iter().map(|z| cabs2(*z)).collect(),
            detunings: detunings.to_vec(),
            linewidths: linewidths.to_vec(),
        }
    }

    pub fn spectral_density(&self, omega: T) -> T {
        let q = T::lit(0.25);
        self.weights
            .iter()
            .zip(&self.detunings)
            .zip(&self.linewidths)
            .fold(T::zero(), |s, ((&w, &d), &k)| s + w / ((omega - d) * (omega - d) + k * k * q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumLimit<T: Real> {
    pub spectrum: ForceNoise<T>,
    /// n^Q = S(−ω̄)/(S(ω̄) − S(−ω̄)).
    pub occupancy: T,
}

/// Backaction limit of mechanical mode `mode` whose coupling column is `column`.
pub fn quantum_limit<T: Real>(
    mode: usize,
    column: &[Cx<T>],
    detunings: &[T],
    linewidths: &[T],
    mean_frequency: T,
) -> Result<QuantumLimit<T>> {
    let spectrum = ForceNoise::new(column, detunings, linewidths);
    let red = spectrum.spectral_density(mean_frequency);
    let blue = spectrum.spectral_density(-mean_frequency);
    if !(red > blue) {
        return Err(Error::Heating(mode));
    }
    Ok(QuantumLimit { occupancy: blue / (red - blue), spectrum })
}

/// Regime assumption with its evaluation on a concrete system.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityFlag {
    pub name: &'static str,
    pub holds: bool,
    pub detail: String,
}

/// Ratio treated as "much less than" in validity flags.
const MUCH_LESS: f64 = 0.1;

/// Evaluates the assumptions behind each analytic regime.
pub fn regime_flags<T: Real>(ls: &LinearizedSystem<T>) -> Vec<ValidityFlag> {
    let s = ls.strengths();
    let gmax = ls.mechanical_linewidths.iter().fold(T::zero(), |a, &b| a.max(b));
    let kmin = ls.optical_linewidths.iter().fold(T::lit(f64::INFINITY), |a, &b| a.min(b));
    let kmax = ls.optical_linewidths.iter().fold(T::zero(), |a, &b| a.max(b));
    let wbar = ls.mean_mechanical_frequency();
    let dw = ls.mechanical_splitting();
    let gamma_min = s.per_mode.iter().fold(T::lit(f64::INFINITY), |a, &b| a.min(b));
    let lt = |a: T, b: T| a.as_f64() < MUCH_LESS * b.as_f64();
    let mut out = vec![
        ValidityFlag {
            name: "resolved_sideband",
            holds: lt(kmax, wbar),
            detail: format!("kappa_max/omega_bar = {:.3e}", (kmax / wbar).as_f64()),
        },
        ValidityFlag {
            name: "weak_coupling",
            holds: lt(s.total, kmin),
            detail: format!("Gamma/kappa_min = {:.3e}", (s.total / kmin).as_f64()),
        },
        ValidityFlag {
            name: "damping_dominated",
            holds: lt(gmax, gamma_min),
            detail: format!("gamma/Gamma_min = {:.3e}", (gmax / gamma_min).as_f64()),
        },
        ValidityFlag {
            name: "near_degenerate",
            holds: lt(dw, gamma_min),
            detail: format!("delta_omega/Gamma_min = {:.3e}", (dw / gamma_min).as_f64()),
        },
        ValidityFlag {
            name: "strong_coupling",
            holds: s.total.as_f64() >= kmin.as_f64(),
            detail: format!("Gamma/kappa_min = {:.3e}", (s.total / kmin).as_f64()),
        },
    ];
    let red = ls.detunings.iter().all(|&d| (d - wbar).abs() < kmin);
    out.push(ValidityFlag {
        name: "red_sideband",
        holds: red,
        detail: "every detuning within one linewidth of omega_bar".into(),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dual_drive_config;
    use crate::scalar::cr;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn weak_limits_at_special_angles() {
        let (gamma, big, n) = (1e-4f64, 0.05, 1.0);
        let aligned = weak_coupling_two_mode_reduced(gamma, big, 0.0, n);
        assert!((aligned - 1.0).abs() < 0.01);
        let orth = weak_coupling_two_mode_reduced(gamma, big, FRAC_PI_2, n);
        assert!((orth - gamma / big).abs() / (gamma / big) < 0.01);
        assert!((orth - 2.0e-3).abs() / 2.0e-3 < 0.01);
        assert!((weak_coupling_two_mode(gamma, 0.0, 0.3, 0.001, 5.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn splitting_form_reduces_without_splitting() {
        for theta in [0.1f64, 0.6435, 1.2] {
            let a = weak_coupling_two_mode(1e-4, 0.03, theta, 0.0, 1.0);
            let b = weak_coupling_two_mode_reduced(1e-4, 0.03, theta, 1.0);
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn diagonal_general_limit() {
        let (g, kappa, gamma, n) = (0.2f64, 1.0, 1e-4, 100.0);
        let gm = DMatrix::from_diagonal_element(3, 3, cr(g));
        let lim = weak_coupling_general(&gm, &[kappa; 3], gamma, n).unwrap();
        let expected = 3.0 * gamma * kappa * n / (4.0 * g * g);
        assert!((lim.n_tot - expected).abs() < 1e-12 * expected);
        assert!((lim.uniform_kappa_form.unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn general_limit_matches_two_mode_at_right_angle() {
        let big = 0.04;
        let g = (big / 2.0f64).sqrt();
        let gm = DMatrix::from_row_slice(2, 2, &[g, 0.0, 0.0, g]).map(cr);
        let lim = weak_coupling_general(&gm, &[1.0, 1.0], 1e-4, 1.0).unwrap();
        // Leading order in γ/Γ of the two-mode form.
        let two = weak_coupling_two_mode_reduced(1e-4, big, FRAC_PI_2, 1.0);
        assert!((lim.n_tot - two).abs() / two < 1e-2);
        assert!((lim.n_tot - 1e-4 / big).abs() < 1e-15);
    }

    #[test]
    fn singular_g_means_a_dark_mode() {
        let gm = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]).map(cr);
        assert!(matches!(weak_coupling_general(&gm, &[1.0, 1.0], 1e-4, 1.0), Err(Error::DarkModeExists { .. })));
    }

    #[test]
    fn angle_form_single_mode_and_divergence() {
        let v = limit_by_angles(&[0.05], &[FRAC_PI_2], 1e-4, 3.0).unwrap();
        assert!((v - 1e-4 * 3.0 / (4.0 * 0.05)).abs() < 1e-18);
        assert_eq!(limit_by_angles(&[0.05, 0.05], &[0.3, 0.0], 1e-4, 1.0), Err(Error::Divergence(1)));
        let best = limit_by_angles(&[0.05, 0.05], &[FRAC_PI_2, FRAC_PI_2], 1e-4, 1.0).unwrap();
        let worse = limit_by_angles(&[0.05, 0.05], &[1.2, 1.0], 1e-4, 1.0).unwrap();
        assert!(best < worse);
    }

    #[test]
    fn classical_limit_asymptotes() {
        let (gamma, kappa, n) = (1e-4, 1.0, 1.0);
        let far = classical_limit_two_mode(gamma, kappa, 1e7, FRAC_PI_4, n);
        let asym = classical_limit_asymptote(gamma, kappa, FRAC_PI_4, n);
        assert!((far - asym).abs() / asym < 1e-3);
        assert!((asym - 2e-4).abs() < 1e-7);
        let aligned = classical_limit_two_mode(gamma, kappa, 1e7, 0.0, n);
        assert!((aligned - classical_limit_asymptote(gamma, kappa, 0.0, n)).abs() < 1e-3);
        assert!((classical_limit_two_mode(gamma, kappa, 1e-12, 0.7, n) - 2.0).abs() < 1e-6);
        assert_eq!(classical_limit_two_mode(gamma, kappa, 0.0, 0.7, n), 2.0);
    }

    #[test]
    fn quantum_limit_is_independent_of_g() {
        let col = [cr(0.3f64), cr(0.1)];
        let q = quantum_limit(0, &col, &[20.0, 20.0], &[1.0, 1.0], 20.0).unwrap();
        assert!((q.occupancy - 1.0 / 6400.0).abs() < 1e-12);
        let scaled = [cr(3.0), cr(1.0)];
        let q2 = quantum_limit(0, &scaled, &[20.0, 20.0], &[1.0, 1.0], 20.0).unwrap();
        assert!((q.occupancy - q2.occupancy).abs() < 1e-15);
        assert_eq!(quantum_limit(0, &col, &[-20.0, -20.0], &[1.0, 1.0], 20.0), Err(Error::Heating(0)));
    }

    #[test]
    fn symmetric_inputs_from_dual_drive() {
        let ls = LinearizedSystem::direct(&dual_drive_config());
        let li = LimitInputs::two_mode_symmetric(&ls, 1.0).unwrap();
        assert!((li.strength - 0.05).abs() < 1e-14);
        assert!((li.theta.cos() - 0.8).abs() < 1e-12);
        let mut skew = ls.clone();
        skew.optical_linewidths[1] = 2.0;
        assert!(matches!(LimitInputs::two_mode_symmetric(&skew, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn flags_for_dual_drive() {
        let ls = LinearizedSystem::direct(&dual_drive_config());
        let f = regime_flags(&ls);
        let get = |n: &str| f.iter().find(|x| x.name == n).unwrap().holds;
        assert!(get("resolved_sideband") && get("weak_coupling") && get("damping_dominated"));
        assert!(get("near_degenerate") && get("red_sideband") && !get("strong_coupling"));
    }
}
