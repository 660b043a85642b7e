//! Drive protocols and parameter sweeps built on the steady-state solver.
//!
//! A protocol is a list of segments, each ramping the per-drive strengths Γ_k
//! linearly from the previous endpoint to a target in a number of steps.
//! Quasi-static runs solve for the steady state afresh at every step.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linearize::{drives_for_strengths, LinearizedSystem};
use crate::model::{CouplingKind, SystemConfig};
use crate::moments::{
    build_generator, evolve_moments, hybrid_occupancy, steady_state, EvolveOptions, MomentState, PhononNumbers,
};
use crate::scalar::{cabs2, cr, Cx, Real};
use crate::spectral::{bright_dark_split, schmidt_basis, SchmidtBasis};

#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T: Real> {
    /// Γ_k at the end of the segment.
    pub strengths: Vec<T>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveProtocol<T: Real> {
    /// Strengths before the first segment; all zero when absent.
    pub start: Option<Vec<T>>,
    pub segments: Vec<Segment<T>>,
}

/// One point of a protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct RampPoint<T: Real> {
    /// 0 for the starting point, otherwise the 1-based segment.
    pub segment: usize,
    pub step: usize,
    pub strengths: Vec<T>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    start: Option<Vec<f64>>,
    segment: Vec<RawSegment>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    strengths: Vec<f64>,
    steps: Option<usize>,
}

impl<T: Real> DriveProtocol<T> {
    /// Reads `start = [...]` and `[[segment]] strengths = [...] steps = N`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawProtocol = toml::from_str(text).map_err(|e| Error::Config(format!("protocol: {e}")))?;
        let p = Self {
            start: raw.start.map(|s| s.into_iter().map(T::lit).collect()),
            segments: raw
                .segment
                .into_iter()
                .map(|s| Segment { strengths: s.strengths.into_iter().map(T::lit).collect(), steps: s.steps.unwrap_or(1) })
                .collect(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Each drive switched on in turn to `strength`, in the given order.
    pub fn sequential(drives: usize, order: &[usize], strength: T, steps: usize) -> Self {
        let mut now = vec![T::zero(); drives];
        let segments = order
            .iter()
            .map(|&k| {
                now[k] = strength;
                Segment { strengths: now.clone(), steps }
            })
            .collect();
        Self { start: None, segments }
    }

    /// All drives ramped together to `strength`.
    pub fn simultaneous(drives: usize, strength: T, steps: usize) -> Self {
        Self { start: None, segments: vec![Segment { strengths: vec![strength; drives], steps }] }
    }

    pub fn drives(&self) -> usize {
        self.segments.first().map_or_else(|| self.start.as_ref().map_or(0, Vec::len), |s| s.strengths.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("protocol has no segments".into()));
        }
        let m = self.drives();
        let lists = self.start.iter().chain(self.segments.iter().map(|s| &s.strengths));
        for (i, list) in lists.enumerate() {
            if list.len() != m {
                return Err(Error::Config(format!("protocol entry {i} has {} strengths, expected {m}", list.len())));
            }
            if list.iter().any(|&g| !(g >= T::zero()) || !g.is_finite()) {
                return Err(Error::Config(format!("protocol entry {i}: strengths must be non-negative")));
            }
        }
        if let Some(i) = self.segments.iter().position(|s| s.steps == 0) {
            return Err(Error::Config(format!("segment {} needs at least one step", i + 1)));
        }
        Ok(())
    }

    pub fn final_strengths(&self) -> Vec<T> {
        self.segments.last().map(|s| s.strengths.clone()).unwrap_or_default()
    }

    /// Starting point followed by every step of every segment (linear ramps).
    pub fn points(&self) -> Vec<RampPoint<T>> {
        let m = self.drives();
        let mut from = self.start.clone().unwrap_or_else(|| vec![T::zero(); m]);
        let mut out = vec![RampPoint { segment: 0, step: 0, strengths: from.clone() }];
        for (s, seg) in self.segments.iter().enumerate() {
            for step in 1..=seg.steps {
                let f = T::from_usize_lossy(step) / T::from_usize_lossy(seg.steps);
                let strengths = from.iter().zip(&seg.strengths).map(|(&a, &b)| a + (b - a) * f).collect();
                out.push(RampPoint { segment: s + 1, step, strengths });
            }
            from.clone_from(&seg.strengths);
        }
        out
    }
}

/// Linearized system with per-drive strengths Γ_k = `strengths[k]`. Linearized
/// couplings are rescaled row by row; single-photon configs get their drive
/// amplitudes solved, including the radiation-pressure detuning shift.
pub fn system_at<T: Real>(cfg: &SystemConfig<T>, strengths: &[T]) -> Result<LinearizedSystem<T>> {
    match cfg.coupling.kind {
        CouplingKind::Linearized => LinearizedSystem::direct(cfg).with_strengths(strengths),
        CouplingKind::SinglePhoton => drives_for_strengths(cfg, strengths).map(|(_, ls)| ls),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiStaticStep<T: Real> {
    pub point: RampPoint<T>,
    pub phonons: PhononNumbers<T>,
    /// Occupancies of the final-G Schmidt modes.
    pub schmidt: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct QuasiStaticRun<T: Real> {
    pub steps: Vec<QuasiStaticStep<T>>,
    pub basis: SchmidtBasis<T>,
    pub final_state: MomentState<T>,
}

impl<T: Real> QuasiStaticRun<T> {
    /// Last step of each segment.
    pub fn segment_ends(&self) -> Vec<&QuasiStaticStep<T>> {
        let mut out: Vec<&QuasiStaticStep<T>> = Vec::new();
        for s in &self.steps {
            match out.last() {
                Some(last) if last.point.segment == s.point.segment => *out.last_mut().expect("non-empty") = s,
                _ => out.push(s),
            }
        }
        out
    }
}

fn at_step<T: Real>(point: &RampPoint<T>, e: Error) -> Error {
    if e.is_config() {
        return e;
    }
    Error::Stability(format!("segment {} step {}: {e}", point.segment, point.step))
}

fn schmidt_occupancies<T: Real>(state: &MomentState<T>, basis: &SchmidtBasis<T>) -> Result<Vec<T>> {
    basis.vectors.iter().map(|e| hybrid_occupancy(state, e)).collect()
}

/// Independent steady solves at every protocol point, in parallel.
pub fn quasi_static_run<T: Real>(cfg: &SystemConfig<T>, protocol: &DriveProtocol<T>) -> Result<QuasiStaticRun<T>> {
    protocol.validate()?;
    if protocol.drives() != cfg.optical_count() {
        return Err(Error::Config(format!(
            "protocol drives {} optical modes, config has {}",
            protocol.drives(),
            cfg.optical_count()
        )));
    }
    let n_th = cfg.bath_occupancy()?;
    let points = protocol.points();
    let solved: Vec<(LinearizedSystem<T>, MomentState<T>)> = points
        .par_iter()
        .map(|p| {
            let ls = system_at(cfg, &p.strengths).map_err(|e| at_step(p, e))?;
            let st = steady_state(&ls, n_th).map_err(|e| at_step(p, e))?;
            Ok((ls, st))
        })
        .collect::<Result<_>>()?;
    let (final_ls, final_state) = solved.last().cloned().expect("protocol has points");
    let basis = schmidt_basis(&final_ls.coupling);
    let steps = points
        .into_iter()
        .zip(&solved)
        .map(|(point, (_, st))| {
            Ok(QuasiStaticStep { phonons: st.phonon_numbers(), schmidt: schmidt_occupancies(st, &basis)?, point })
        })
        .collect::<Result<_>>()?;
    Ok(QuasiStaticRun { steps, basis, final_state })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathComparison<T: Real> {
    pub total_a: T,
    pub total_b: T,
    pub relative_difference: T,
    /// Largest entrywise gap of the final second moments relative to their scale.
    pub moment_difference: T,
}

/// Runs both protocols and compares the final steady states.
pub fn path_independence_check<T: Real>(
    cfg: &SystemConfig<T>,
    a: &DriveProtocol<T>,
    b: &DriveProtocol<T>,
) -> Result<PathComparison<T>> {
    let (fa, fb) = (a.final_strengths(), b.final_strengths());
    let scale = fa.iter().chain(&fb).fold(T::zero(), |m, &v| m.max(v.abs()));
    let mismatch = fa.len() != fb.len()
        || fa.iter().zip(&fb).any(|(&x, &y)| (x - y).abs() > T::tol(1e-12) * scale);
    if mismatch {
        return Err(Error::Precondition("protocols end at different drive strengths".into()));
    }
    let ra = quasi_static_run(cfg, a)?;
    let rb = quasi_static_run(cfg, b)?;
    let (pa, pb) = (ra.final_state.pack(), rb.final_state.pack());
    let norm = pa.amax().max(pb.amax()).max(T::lit(1e-300));
    let total_a = ra.final_state.phonon_numbers().total;
    let total_b = rb.final_state.phonon_numbers().total;
    Ok(PathComparison {
        total_a,
        total_b,
        relative_difference: (total_a - total_b).abs() / total_a.abs().max(total_b.abs()).max(T::lit(1e-300)),
        moment_difference: (pa - pb).amax() / norm,
    })
}

#[derive(Debug, Clone)]
pub struct DynamicRun<T: Real> {
    pub points: Vec<RampPoint<T>>,
    /// Time at the end of each point's dwell.
    pub times: Vec<T>,
    pub phonons: Vec<PhononNumbers<T>>,
    pub schmidt: Vec<Vec<T>>,
}

/// Time-domain ramp: G is held at each protocol point for `dwell` and the
/// moments are integrated with RK4 from a thermal start.
pub fn dynamic_run<T: Real>(cfg: &SystemConfig<T>, protocol: &DriveProtocol<T>, dwell: T, dt: T) -> Result<DynamicRun<T>> {
    protocol.validate()?;
    if !(dwell > T::zero() && dt > T::zero()) {
        return Err(Error::Domain("dwell and time step must be positive".into()));
    }
    let n_th = cfg.bath_occupancy()?;
    let points = protocol.points();
    let systems: Vec<LinearizedSystem<T>> = points
        .par_iter()
        .map(|p| system_at(cfg, &p.strengths).map_err(|e| at_step(p, e)))
        .collect::<Result<_>>()?;
    let basis = schmidt_basis(&systems.last().expect("protocol has points").coupling);
    let mut state = MomentState::thermal(cfg.optical_count(), cfg.mechanical_count(), &vec![n_th; cfg.mechanical_count()]);
    let mut out = DynamicRun { points: Vec::new(), times: Vec::new(), phonons: Vec::new(), schmidt: Vec::new() };
    let mut t = T::zero();
    for (p, ls) in points.into_iter().zip(&systems) {
        let traj = evolve_moments(&build_generator(ls, n_th), &state, &EvolveOptions { dt, t_end: dwell, sample_every: usize::MAX })
            .map_err(|e| at_step(&p, e))?;
        state = traj.last_state();
        t += dwell;
        out.times.push(t);
        out.phonons.push(state.phonon_numbers());
        out.schmidt.push(schmidt_occupancies(&state, &basis)?);
        out.points.push(p);
    }
    Ok(out)
}

/// Steady occupancies along a sweep of the total strength Γ, with the per-drive
/// proportions of `ls` kept.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthSweep<T: Real> {
    pub gammas: Vec<T>,
    pub phonons: Vec<PhononNumbers<T>>,
    /// (bright, dark) occupancies for two mechanical modes, relative to the
    /// mean coupling direction (see [`mean_coupling_direction`]).
    pub bright_dark: Option<Vec<(T, T)>>,
}

/// Normalized sum of the normalized coupling rows. For a single drive this is
/// the row itself; for two rows placed symmetrically it is their bisector.
pub fn mean_coupling_direction<T: Real>(ls: &LinearizedSystem<T>) -> Result<DVector<Cx<T>>> {
    let n = ls.mechanical_count();
    let mut acc = DVector::from_element(n, cr(T::zero()));
    for k in 0..ls.optical_count() {
        let row: DVector<Cx<T>> = ls.coupling.row(k).transpose();
        let norm = row.iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
        if norm > T::zero() {
            acc += row / cr(norm);
        }
    }
    let norm = acc.iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
    if norm == T::zero() {
        return Err(Error::NoCoupling(0));
    }
    Ok(acc / cr(norm))
}

pub fn strength_sweep<T: Real>(ls: &LinearizedSystem<T>, n_th: T, gammas: &[T]) -> Result<StrengthSweep<T>> {
    let s = ls.strengths();
    if !(s.total > T::zero()) {
        return Err(Error::NoCoupling(0));
    }
    let split = if ls.mechanical_count() == 2 { Some(bright_dark_split(&mean_coupling_direction(ls)?)?) } else { None };
    let states: Vec<MomentState<T>> = gammas
        .par_iter()
        .map(|&g| {
            let targets: Vec<T> = s.per_mode.iter().map(|&p| p / s.total * g).collect();
            steady_state(&ls.with_strengths(&targets)?, n_th)
        })
        .collect::<Result<_>>()?;
    let bright_dark = split
        .map(|(plus, minus)| {
            states
                .iter()
                .map(|st| Ok((hybrid_occupancy(st, &plus)?, hybrid_occupancy(st, &minus)?)))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    Ok(StrengthSweep { gammas: gammas.to_vec(), phonons: states.iter().map(MomentState::phonon_numbers).collect(), bright_dark })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve<T: Real> {
    pub parameter: Vec<T>,
    pub total: Vec<T>,
    /// Refined location and value of the minimum.
    pub argmin: T,
    pub minimum: T,
}

/// Golden-section search for the minimum of `f` on [a, b].
fn golden_minimum<T: Real>(mut a: T, mut b: T, f: impl Fn(T) -> Result<T>) -> Result<(T, T)> {
    let r = T::lit(0.618_033_988_749_894_9);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    let tol = T::tol(1e-10) * (a.abs() + b.abs()).max(T::one());
    for _ in 0..200 {
        if (b - a).abs() < tol {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

fn curve_with_minimum<T: Real>(parameter: &[T], f: impl Fn(T) -> Result<T> + Sync) -> Result<SweepCurve<T>> {
    if parameter.len() < 3 {
        return Err(Error::Domain("a sweep needs at least three points".into()));
    }
    let total: Vec<T> = parameter.par_iter().map(|&x| f(x)).collect::<Result<_>>()?;
    let i = (0..total.len()).fold(0, |best, i| if total[i] < total[best] { i } else { best });
    let (argmin, minimum) = if i == 0 || i == total.len() - 1 {
        (parameter[i], total[i])
    } else {
        golden_minimum(parameter[i - 1], parameter[i + 1], &f)?
    };
    Ok(SweepCurve { parameter: parameter.to_vec(), total, argmin, minimum })
}

/// n_tot as a function of the detuning δ_k of drive k, all else fixed.
pub fn detuning_sweep<T: Real>(ls: &LinearizedSystem<T>, n_th: T, k: usize, detunings: &[T]) -> Result<SweepCurve<T>> {
    if k >= ls.optical_count() {
        return Err(Error::Domain(format!("no optical mode {}", k + 1)));
    }
    curve_with_minimum(detunings, |d| {
        let mut s = ls.clone();
        s.detunings[k] = d;
        Ok(steady_state(&s, n_th)?.phonon_numbers().total)
    })
}

/// n_tot against the pumping contrast (|g₁|² − |g₂|²)/(|g₁|² + |g₂|²) of the
/// first two drives at fixed |g₁|² + |g₂|² = `norm_sum`, row directions kept.
pub fn contrast_sweep<T: Real>(ls: &LinearizedSystem<T>, n_th: T, norm_sum: T, contrasts: &[T]) -> Result<SweepCurve<T>> {
    if ls.optical_count() < 2 {
        return Err(Error::Precondition("contrast sweep needs two drives".into()));
    }
    if contrasts.iter().any(|c| c.abs() > T::one()) {
        return Err(Error::Domain("contrast must lie in [-1, 1]".into()));
    }
    let row_norm = |k: usize| ls.coupling.row(k).iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
    for k in 0..2 {
        if row_norm(k) == T::zero() {
            return Err(Error::NoCoupling(k));
        }
    }
    let half = T::lit(0.5);
    curve_with_minimum(contrasts, |c| {
        let mut s = ls.clone();
        for (k, w) in [(0, half * (T::one() + c)), (1, half * (T::one() - c))] {
            let f = (norm_sum * w).max(T::zero()).sqrt() / row_norm(k);
            for j in 0..s.mechanical_count() {
                s.coupling[(k, j)] = ls.coupling[(k, j)] * f;
            }
        }
        Ok(steady_state(&s, n_th)?.phonon_numbers().total)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dual_drive_config;

    #[test]
    fn ramp_points_are_linear() {
        let p = DriveProtocol::<f64> {
            start: None,
            segments: vec![
                Segment { strengths: vec![0.4, 0.0], steps: 4 },
                Segment { strengths: vec![0.4, 0.2], steps: 2 },
            ],
        };
        let pts = p.points();
        assert_eq!(pts.len(), 7);
        assert_eq!(pts[1].strengths, vec![0.1, 0.0]);
        assert_eq!(pts[4].strengths, vec![0.4, 0.0]);
        assert_eq!(pts[5].strengths, vec![0.4, 0.1]);
        assert_eq!((pts[6].segment, pts[6].step), (2, 2));
    }

    #[test]
    fn protocol_file() {
        let p = DriveProtocol::<f64>::from_toml("[[segment]]\nstrengths = [1.0, 0.0]\nsteps = 3\n[[segment]]\nstrengths = [1.0, 2.0]\n").unwrap();
        assert_eq!(p.segments[1].steps, 1);
        assert_eq!(p.final_strengths(), vec![1.0, 2.0]);
        assert!(DriveProtocol::<f64>::from_toml("[[segment]]\nstrengths = [-1.0]\n").is_err());
        assert!(DriveProtocol::<f64>::from_toml("[[segment]]\nstrengths = [1.0]\nsteps = 0\n").is_err());
        assert!(DriveProtocol::<f64>::from_toml("[[segment]]\nstrengths = [1.0]\nspeed = 2\n").is_err());
    }

    #[test]
    fn all_zero_protocol_keeps_thermal_occupancy() {
        let cfg = dual_drive_config();
        let p = DriveProtocol::sequential(2, &[0, 1], 0.0, 3);
        let run = quasi_static_run(&cfg, &p);
        // A zero final G leaves the Schmidt basis as the unit vectors.
        let run = run.unwrap();
        let n_th = cfg.bath_occupancy().unwrap();
        for s in &run.steps {
            for &v in &s.schmidt {
                assert!((v - n_th).abs() < 1e-8 * n_th);
            }
        }
    }

    #[test]
    fn halving_steps_does_not_move_endpoints() {
        let cfg = dual_drive_config();
        let a = quasi_static_run(&cfg, &DriveProtocol::sequential(2, &[0, 1], 0.02, 4)).unwrap();
        let b = quasi_static_run(&cfg, &DriveProtocol::sequential(2, &[0, 1], 0.02, 2)).unwrap();
        for (x, y) in a.segment_ends().iter().zip(b.segment_ends()) {
            assert_eq!(x.phonons.total, y.phonons.total);
        }
    }

    #[test]
    fn different_endpoints_are_a_precondition_error() {
        let cfg = dual_drive_config();
        let a = DriveProtocol::simultaneous(2, 0.02, 1);
        let b = DriveProtocol::simultaneous(2, 0.03, 1);
        assert!(matches!(path_independence_check(&cfg, &a, &b), Err(Error::Precondition(_))));
    }

    #[test]
    fn reversed_order_gives_same_final_state() {
        let cfg = dual_drive_config();
        let a = DriveProtocol::sequential(2, &[0, 1], 0.02, 2);
        let b = DriveProtocol::sequential(2, &[1, 0], 0.02, 3);
        let c = path_independence_check(&cfg, &a, &b).unwrap();
        assert!(c.relative_difference < 1e-8);
    }

    #[test]
    fn golden_search_finds_parabola_vertex() {
        let (x, fx) = golden_minimum(0.0, 3.0, |x: f64| Ok((x - 1.234).powi(2) + 2.0)).unwrap();
        assert!((x - 1.234).abs() < 1e-6 && (fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_row_gives_flat_detuning_curve() {
        let cfg = dual_drive_config();
        let ls = LinearizedSystem::direct(&cfg).with_strengths(&[0.0, 0.05]).unwrap();
        let n_th = cfg.bath_occupancy().unwrap();
        let c = detuning_sweep(&ls, n_th, 0, &[18.0, 19.0, 20.0, 21.0, 22.0]).unwrap();
        for v in &c.total {
            assert!((v - c.total[0]).abs() < 1e-9 * c.total[0]);
        }
    }
}
