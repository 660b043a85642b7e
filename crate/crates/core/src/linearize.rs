//! Classical steady state of the driven system and the linearized model for
//! the fluctuations around it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{strengths_of, CouplingKind, DriveStrengths, SystemConfig};
use crate::scalar::{cabs, cabs2, ci, cr, Cx, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalAmplitudes<T: Real> {
    pub alpha: Vec<Cx<T>>,
    pub beta: Vec<Cx<T>>,
}

/// Fluctuation model: corrected detunings, linearized couplings and the
/// linewidths/frequencies needed downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem<T: Real> {
    /// Corrected detunings δ_k.
    pub detunings: Vec<T>,
    pub optical_linewidths: Vec<T>,
    pub mechanical_frequencies: Vec<T>,
    pub mechanical_linewidths: Vec<T>,
    /// Linearized couplings g_kj = g^S_kj α_k.
    pub coupling: DMatrix<Cx<T>>,
    /// Present when the system came from single-photon couplings and drives.
    pub amplitudes: Option<ClassicalAmplitudes<T>>,
    /// Relative change of the last fixed-point iteration (zero for direct input).
    pub residual: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions<T: Real> {
    pub damping: T,
    pub max_iterations: usize,
    pub tolerance: T,
}

impl<T: Real> Default for FixedPointOptions<T> {
    fn default() -> Self {
        Self { damping: T::lit(0.5), max_iterations: 10_000, tolerance: T::tol(1e-12) }
    }
}

/// Diagonal Δ, Ω, K and the coupling matrix G.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrices<T: Real> {
    pub delta: DMatrix<T>,
    pub omega: DMatrix<T>,
    pub coupling: DMatrix<Cx<T>>,
    pub kappa: DMatrix<T>,
}

impl<T: Real> LinearizedSystem<T> {
    /// Builds the fluctuation model from either coupling kind.
    pub fn from_config(cfg: &SystemConfig<T>) -> Result<Self> {
        match cfg.coupling.kind {
            CouplingKind::Linearized => Ok(Self::direct(cfg)),
            CouplingKind::SinglePhoton => classical_steady_state(cfg),
        }
    }

    /// Takes the coupling matrix of `cfg` as the linearized G and the bare
    /// detunings as δ_k.
    pub fn direct(cfg: &SystemConfig<T>) -> Self {
        Self {
            detunings: cfg.optical.iter().map(|o| o.detuning).collect(),
            optical_linewidths: cfg.optical.iter().map(|o| o.linewidth).collect(),
            mechanical_frequencies: cfg.mechanical.iter().map(|m| m.frequency).collect(),
            mechanical_linewidths: cfg.mechanical.iter().map(|m| m.linewidth).collect(),
            coupling: cfg.coupling.entries.clone(),
            amplitudes: None,
            residual: T::zero(),
            iterations: 0,
        }
    }

    pub fn optical_count(&self) -> usize {
        self.detunings.len()
    }

    pub fn mechanical_count(&self) -> usize {
        self.mechanical_frequencies.len()
    }

    pub fn strengths(&self) -> DriveStrengths<T> {
        strengths_of(&self.coupling, &self.optical_linewidths)
    }

    pub fn mean_mechanical_frequency(&self) -> T {
        crate::model::mean(self.mechanical_frequencies.iter().copied())
    }

    pub fn mechanical_splitting(&self) -> T {
        crate::model::spread(self.mechanical_frequencies.iter().copied())
    }

    /// Rescales each coupling row so that Γ_k equals `targets[k]`.
    pub fn with_strengths(&self, targets: &[T]) -> Result<Self> {
        if targets.len() != self.optical_count() {
            return Err(Error::Precondition(format!(
                "{} strengths given for {} drives",
                targets.len(),
                self.optical_count()
            )));
        }
        let current = self.strengths();
        let mut out = self.clone();
        for (k, &target) in targets.iter().enumerate() {
            if target < T::zero() || !target.is_finite() {
                return Err(Error::Domain(format!("strength of drive {} must be non-negative", k + 1)));
            }
            let now = current.per_mode[k];
            let factor = if target == T::zero() {
                T::zero()
            } else if now > T::zero() {
                (target / now).sqrt()
            } else {
                return Err(Error::NoCoupling(k));
            };
            for j in 0..self.mechanical_count() {
                out.coupling[(k, j)] = self.coupling[(k, j)] * factor;
            }
        }
        Ok(out)
    }

    /// Keeps only the drives listed in `active` (others get zero coupling).
    pub fn with_active_drives(&self, active: &[bool]) -> Self {
        let mut out = self.clone();
        for (k, &on) in active.iter().enumerate() {
            if !on {
                out.coupling.row_mut(k).fill(cr(T::zero()));
            }
        }
        out
    }
}

/// Solves the self-consistent classical equations
/// α_k = −iQ_k/(iδ_k + κ_k/2), δ_k = δ'_k + Σ_j g^S_kj 2Re β_j,
/// β_j = −iΣ_k g^S_kj |α_k|²/(iω_j + γ_j/2) by damped Picard iteration.
pub fn classical_steady_state<T: Real>(cfg: &SystemConfig<T>) -> Result<LinearizedSystem<T>> {
    classical_steady_state_with(cfg, &FixedPointOptions::default())
}

pub fn classical_steady_state_with<T: Real>(
    cfg: &SystemConfig<T>,
    opts: &FixedPointOptions<T>,
) -> Result<LinearizedSystem<T>> {
    if cfg.coupling.kind != CouplingKind::SinglePhoton {
        return Err(Error::Precondition("classical steady state needs single-photon couplings".into()));
    }
    let m = cfg.optical_count();
    let n = cfg.mechanical_count();
    let gs = cfg.coupling.entries.map(|z| z.re);
    let map = |alpha: &[Cx<T>], beta: &[Cx<T>]| -> (Vec<Cx<T>>, Vec<Cx<T>>) {
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let a_new: Vec<Cx<T>> = (0..m)
            .map(|k| {
                let o = &cfg.optical[k];
                let shift = (0..n).fold(T::zero(), |s, j| s + gs[(k, j)] * two * beta[j].re);
                let delta = o.detuning + shift;
                -ci::<T>() * o.drive / Cx::new(o.linewidth * half, delta)
            })
            .collect();
        let b_new: Vec<Cx<T>> = (0..n)
            .map(|j| {
                let mm = &cfg.mechanical[j];
                let force = (0..m).fold(T::zero(), |s, k| s + gs[(k, j)] * cabs2(alpha[k]));
                -ci::<T>() * cr(force) / Cx::new(mm.linewidth * half, mm.frequency)
            })
            .collect();
        (a_new, b_new)
    };

    let mut alpha = vec![cr(T::zero()); m];
    let mut beta = vec![cr(T::zero()); n];
    let mut residual = T::zero();
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iterations {
        iterations = it;
        let (a_new, b_new) = map(&alpha, &beta);
        let mut diff2 = T::zero();
        let mut norm2 = T::zero();
        for (x, y) in alpha.iter().chain(beta.iter()).zip(a_new.iter().chain(b_new.iter())) {
            diff2 += cabs2(*y - *x);
            norm2 += cabs2(*y);
        }
        residual = if norm2 > T::zero() { (diff2 / norm2).sqrt() } else { T::zero() };
        let w = opts.damping;
        for (x, y) in alpha.iter_mut().zip(&a_new) {
            *x = *x * (T::one() - w) + *y * w;
        }
        for (x, y) in beta.iter_mut().zip(&b_new) {
            *x = *x * (T::one() - w) + *y * w;
        }
        if residual < opts.tolerance {
            // One undamped sweep so the returned point is the map's image.
            let (a_fin, b_fin) = map(&alpha, &beta);
            alpha = a_fin;
            beta = b_fin;
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence { iterations, residual: residual.as_f64() });
    }

    let detunings: Vec<T> = (0..m)
        .map(|k| {
            let shift = (0..n).fold(T::zero(), |s, j| s + gs[(k, j)] * T::lit(2.0) * beta[j].re);
            cfg.optical[k].detuning + shift
        })
        .collect();
    let coupling = DMatrix::from_fn(m, n, |k, j| alpha[k] * gs[(k, j)]);
    Ok(LinearizedSystem {
        detunings,
        optical_linewidths: cfg.optical.iter().map(|o| o.linewidth).collect(),
        mechanical_frequencies: cfg.mechanical.iter().map(|mm| mm.frequency).collect(),
        mechanical_linewidths: cfg.mechanical.iter().map(|mm| mm.linewidth).collect(),
        coupling,
        amplitudes: Some(ClassicalAmplitudes { alpha, beta }),
        residual,
        iterations,
    })
}

/// Drive amplitude Q_k giving |α_k|² = `photons`, other drives held fixed.
/// The phase of an existing Q_k is kept.
pub fn amplitude_for_photon_number<T: Real>(cfg: &SystemConfig<T>, k: usize, photons: T) -> Result<Cx<T>> {
    let mut targets: Vec<Option<T>> = vec![None; cfg.optical_count()];
    targets[k] = Some(photons);
    let (drives, _) = solve_drives(cfg, &targets)?;
    Ok(drives[k])
}

/// Drive amplitude Q_k such that the linearized couplings give Γ_k = `target`.
pub fn amplitude_for_target_strength<T: Real>(cfg: &SystemConfig<T>, k: usize, target: T) -> Result<Cx<T>> {
    let photons = photons_for_strength(cfg, k, target)?;
    amplitude_for_photon_number(cfg, k, photons)
}

/// Drive amplitudes for all optical modes at once, with the resulting system.
pub fn drives_for_strengths<T: Real>(
    cfg: &SystemConfig<T>,
    targets: &[T],
) -> Result<(Vec<Cx<T>>, LinearizedSystem<T>)> {
    if targets.len() != cfg.optical_count() {
        return Err(Error::Precondition(format!(
            "{} strengths given for {} drives",
            targets.len(),
            cfg.optical_count()
        )));
    }
    let photons = targets
        .iter()
        .enumerate()
        .map(|(k, &t)| photons_for_strength(cfg, k, t).map(Some))
        .collect::<Result<Vec<_>>>()?;
    solve_drives(cfg, &photons)
}

fn photons_for_strength<T: Real>(cfg: &SystemConfig<T>, k: usize, target: T) -> Result<T> {
    if cfg.coupling.kind != CouplingKind::SinglePhoton {
        return Err(Error::Precondition("drive amplitudes need single-photon couplings".into()));
    }
    if target < T::zero() || !target.is_finite() {
        return Err(Error::Domain(format!("target strength must be non-negative, got {target}")));
    }
    let s2 = cfg.coupling.entries.row(k).iter().fold(T::zero(), |s, z| s + z.re * z.re);
    if target == T::zero() {
        return Ok(T::zero());
    }
    if s2 == T::zero() {
        return Err(Error::NoCoupling(k));
    }
    Ok(target * cfg.optical[k].linewidth / s2)
}

/// Adjusts |Q_k| for every k with a photon-number target until the forward
/// solution has |α_k|² on target. The corrected detuning moves with the
/// drive, so |Q_k| = |α_k| |iδ_k + κ_k/2| is iterated to self-consistency.
fn solve_drives<T: Real>(
    cfg: &SystemConfig<T>,
    photons: &[Option<T>],
) -> Result<(Vec<Cx<T>>, LinearizedSystem<T>)> {
    let mut work = cfg.clone();
    let quarter = T::lit(0.25);
    let phase = |q: Cx<T>| if cabs(q) > T::zero() { q / cr(cabs(q)) } else { cr(T::one()) };
    let mut detunings: Vec<T> = cfg.optical.iter().map(|o| o.detuning).collect();
    let tol = T::tol(1e-13);
    for _ in 0..200 {
        let mut change = T::zero();
        for (k, target) in photons.iter().enumerate() {
            if let Some(n) = *target {
                let o = &work.optical[k];
                let q_new = (n * (detunings[k] * detunings[k] + o.linewidth * o.linewidth * quarter)).sqrt();
                let q_old = cabs(o.drive);
                if q_new > T::zero() {
                    change = change.max((q_new - q_old).abs() / q_new);
                }
                work.optical[k].drive = phase(o.drive) * q_new;
            }
        }
        let ls = classical_steady_state(&work)?;
        detunings.clone_from(&ls.detunings);
        if change < tol {
            let alpha = &ls.amplitudes.as_ref().expect("single-photon solve has amplitudes").alpha;
            for (k, target) in photons.iter().enumerate() {
                if let Some(n) = *target {
                    let got = cabs2(alpha[k]);
                    let err = if n > T::zero() { (got - n).abs() / n } else { got };
                    if err > T::tol(1e-10) {
                        return Err(Error::Convergence { iterations: 200, residual: err.as_f64() });
                    }
                }
            }
            return Ok((work.drives(), ls));
        }
    }
    Err(Error::Convergence { iterations: 200, residual: f64::NAN })
}

/// Δ, Ω, G, K views of a linearized system.
pub fn linearized_hamiltonian_matrices<T: Real>(ls: &LinearizedSystem<T>) -> HamiltonianMatrices<T> {
    let diag = |v: &[T]| DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v));
    HamiltonianMatrices {
        delta: diag(&ls.detunings),
        omega: diag(&ls.mechanical_frequencies),
        coupling: ls.coupling.clone(),
        kappa: diag(&ls.optical_linewidths),
    }
}
