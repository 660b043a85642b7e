//! Square membrane in a Fabry–Pérot cavity: drum modes, zero-point motion,
//! overlap of Gaussian spots with mode shapes, and single-photon couplings.
//!
//! SI units throughout; frequencies and linewidths are angular.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CouplingKind, CouplingMatrix, Diagnostic, PhysicalConstants, SPEED_OF_LIGHT};
use crate::scalar::{cr, Cx, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembraneSpec<T: Real> {
    pub edge_length: T,
    pub thickness: T,
    pub density: T,
    /// Complex Young's modulus; only the real part enters the bending parameter.
    pub youngs_modulus: Cx<T>,
    pub poisson_ratio: T,
    pub stress: T,
    /// Loss prefactor for the linewidth formula. No default value is assumed.
    pub loss: Option<T>,
}

impl<T: Real> MembraneSpec<T> {
    /// 1 mm × 40 nm SiN-like membrane under 0.3 GPa stress.
    pub fn reference() -> Self {
        Self {
            edge_length: T::lit(1e-3),
            thickness: T::lit(40e-9),
            density: T::lit(2700.0),
            youngs_modulus: Cx::new(T::lit(200e9), T::lit(0.01e9)),
            poisson_ratio: T::lit(0.25),
            stress: T::lit(0.3e9),
            loss: None,
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut positive = |v: T, field: &str| {
            if !(v > T::zero()) || !v.is_finite() {
                out.push(Diagnostic { field: format!("membrane.{field}"), message: format!("{field} must be positive") });
            }
        };
        positive(self.edge_length, "edge_length");
        positive(self.thickness, "thickness");
        positive(self.density, "density");
        positive(self.stress, "stress");
        positive(self.youngs_modulus.re, "youngs_modulus");
        if !(self.poisson_ratio > T::zero() && self.poisson_ratio < T::lit(0.5)) {
            out.push(Diagnostic {
                field: "membrane.poisson_ratio".into(),
                message: "poisson ratio must lie in (0, 0.5)".into(),
            });
        }
        out
    }

    /// Bending parameter ε = (h/l)√(E/(3σ(1 − ν²))).
    pub fn bending_parameter(&self) -> T {
        let nu = self.poisson_ratio;
        self.thickness / self.edge_length
            * (self.youngs_modulus.re / (T::lit(3.0) * self.stress * (T::one() - nu * nu))).sqrt()
    }

    /// ω_mn = (π/l)√(σ(m² + n²)/ρ).
    pub fn mode_frequency(&self, m: u32, n: u32) -> T {
        let q = T::lit(f64::from(m * m + n * n));
        T::pi() / self.edge_length * (self.stress * q / self.density).sqrt()
    }

    /// x_zpf = √(2ħ/(ρ h l² ω)).
    pub fn zero_point_amplitude(&self, omega: T, hbar: T) -> T {
        (T::lit(2.0) * hbar / (self.density * self.thickness * self.edge_length * self.edge_length * omega)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityOptics<T: Real> {
    pub length: T,
    pub finesse: T,
    pub wavelength: T,
}

impl<T: Real> CavityOptics<T> {
    /// 6 mm cavity, finesse 2.58×10⁴, 1064 nm.
    pub fn reference() -> Self {
        Self { length: T::lit(6e-3), finesse: T::lit(2.58e4), wavelength: T::lit(1064e-9) }
    }

    /// κ = 2π c/(2FL).
    pub fn linewidth(&self) -> T {
        T::two_pi() * T::lit(SPEED_OF_LIGHT) / (T::lit(2.0) * self.finesse * self.length)
    }

    /// dω_c/dL = 2π c/(λL).
    pub fn frequency_pull(&self) -> T {
        T::two_pi() * T::lit(SPEED_OF_LIGHT) / (self.wavelength * self.length)
    }

    pub fn optical_frequency(&self) -> T {
        T::two_pi() * T::lit(SPEED_OF_LIGHT) / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpot<T: Real> {
    pub x0: T,
    pub y0: T,
    /// Intensity waist d in I = exp(−r²/d²)/(πd²).
    pub waist: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinewidthModel<T: Real> {
    /// γ given directly (rad/s).
    Direct(T),
    /// γ = s ε [1 + π²(m² + n²)/4] ω with the given s.
    LossFactor(T),
}

impl<T: Real> LinewidthModel<T> {
    /// γ/2π = 39.0 mHz.
    pub fn reference() -> Self {
        LinewidthModel::Direct(T::two_pi() * T::lit(39.0e-3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrumMode<T: Real> {
    pub m: u32,
    pub n: u32,
    pub frequency: T,
    pub linewidth: T,
    pub zero_point_amplitude: T,
    pub edge_length: T,
}

impl<T: Real> DrumMode<T> {
    /// W_mn(x, y) = sin(mπx/l) sin(nπy/l), peak amplitude 1.
    pub fn shape(&self, x: T, y: T) -> T {
        let k = T::pi() / self.edge_length;
        (k * T::lit(f64::from(self.m)) * x).sin() * (k * T::lit(f64::from(self.n)) * y).sin()
    }
}

pub fn drum_mode<T: Real>(
    spec: &MembraneSpec<T>,
    m: u32,
    n: u32,
    linewidth: LinewidthModel<T>,
    constants: &PhysicalConstants<T>,
) -> Result<DrumMode<T>> {
    if m == 0 || n == 0 {
        return Err(Error::Domain(format!("mode indices must be at least 1, got ({m}, {n})")));
    }
    let frequency = spec.mode_frequency(m, n);
    let gamma = match linewidth {
        LinewidthModel::Direct(g) => g,
        LinewidthModel::LossFactor(s) => {
            let q = T::lit(f64::from(m * m + n * n));
            s * spec.bending_parameter() * (T::one() + T::pi() * T::pi() * q / T::lit(4.0)) * frequency
        }
    };
    Ok(DrumMode {
        m,
        n,
        frequency,
        linewidth: gamma,
        zero_point_amplitude: spec.zero_point_amplitude(frequency, constants.hbar),
        edge_length: spec.edge_length,
    })
}

/// Composite Simpson rule on [0, l]² with automatic doubling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Intervals per axis (rounded up to even).
    pub intervals: usize,
    pub tolerance: f64,
    pub max_doublings: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { intervals: 600, tolerance: 1e-4, max_doublings: 8 }
    }
}

impl Quadrature {
    /// Smallest grid with ten points per waist and per mode wavelength.
    pub fn minimum_intervals<T: Real>(mode: &DrumMode<T>, spot: &GaussianSpot<T>) -> usize {
        let per_waist = (T::lit(10.0) * mode.edge_length / spot.waist).ceil().to_usize().unwrap_or(usize::MAX);
        let per_wave = 5 * mode.m.max(mode.n) as usize;
        let n = per_waist.max(per_wave).max(2);
        n + n % 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap<T: Real> {
    pub value: T,
    pub intervals: usize,
    /// |η(2n) − η(n)| at the accepted resolution.
    pub change: T,
}

fn simpson_axis<T: Real>(intervals: usize, l: T, f: impl Fn(T) -> T) -> T {
    let h = l / T::from_usize_lossy(intervals);
    let mut acc = f(T::zero()) + f(l);
    for i in 1..intervals {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        acc += w * f(h * T::from_usize_lossy(i));
    }
    acc * h / T::lit(3.0)
}

/// Tensor-product Simpson value of ∬ I(x,y) W(x,y) dx dy. Both factors
/// separate in x and y, so the 2-D sum is the product of two 1-D sums.
fn overlap_at<T: Real>(mode: &DrumMode<T>, spot: &GaussianSpot<T>, intervals: usize) -> T {
    let l = mode.edge_length;
    let k = T::pi() / l;
    let d2 = spot.waist * spot.waist;
    let km = k * T::lit(f64::from(mode.m));
    let kn = k * T::lit(f64::from(mode.n));
    let fx = simpson_axis(intervals, l, |x| (-(x - spot.x0) * (x - spot.x0) / d2).exp() * (km * x).sin());
    let fy = simpson_axis(intervals, l, |y| (-(y - spot.y0) * (y - spot.y0) / d2).exp() * (kn * y).sin());
    fx * fy / (T::pi() * d2)
}

/// Transverse overlap η = ∬ I W / A over the membrane.
pub fn gaussian_overlap<T: Real>(mode: &DrumMode<T>, spot: &GaussianSpot<T>, quad: &Quadrature) -> Result<Overlap<T>> {
    let l = mode.edge_length;
    if !(spot.waist > T::zero()) {
        return Err(Error::Domain("spot waist must be positive".into()));
    }
    if spot.x0 < T::zero() || spot.x0 > l || spot.y0 < T::zero() || spot.y0 > l {
        return Err(Error::Domain("spot centre must lie on the membrane".into()));
    }
    let min = Quadrature::minimum_intervals(mode, spot);
    if quad.intervals < min {
        return Err(Error::Resolution(format!("{} intervals per axis is below the minimum {min}", quad.intervals)));
    }
    let mut n = quad.intervals + quad.intervals % 2;
    let mut coarse = overlap_at(mode, spot, n);
    for _ in 0..=quad.max_doublings {
        let fine = overlap_at(mode, spot, 2 * n);
        let change = (fine - coarse).abs();
        if change.as_f64() <= quad.tolerance {
            return Ok(Overlap { value: fine, intervals: 2 * n, change });
        }
        n *= 2;
        coarse = fine;
    }
    Err(Error::Resolution(format!("overlap did not converge to {} by {n} intervals", quad.tolerance)))
}

/// g^S = x_zpf (dω_c/dL) η, in rad/s.
pub fn single_photon_coupling<T: Real>(
    mode: &DrumMode<T>,
    spot: &GaussianSpot<T>,
    optics: &CavityOptics<T>,
    quad: &Quadrature,
) -> Result<T> {
    let eta = gaussian_overlap(mode, spot, quad)?;
    Ok(mode.zero_point_amplitude * optics.frequency_pull() * eta.value)
}

/// Single-photon coupling matrix with rows = spots (drives), columns = modes.
pub fn coupling_table<T: Real>(
    modes: &[DrumMode<T>],
    spots: &[GaussianSpot<T>],
    optics: &CavityOptics<T>,
    quad: &Quadrature,
) -> Result<CouplingMatrix<T>> {
    let n = modes.len();
    let entries: Vec<T> = (0..spots.len() * n)
        .into_par_iter()
        .map(|idx| single_photon_coupling(&modes[idx % n], &spots[idx / n], optics, quad))
        .collect::<Result<_>>()?;
    Ok(CouplingMatrix {
        entries: DMatrix::from_row_slice(spots.len(), n, &entries).map(cr),
        kind: CouplingKind::SinglePhoton,
    })
}

/// The three drum modes (1,7), (7,1), (5,5) and three spots of the reference
/// geometry.
pub fn reference_geometry<T: Real>() -> (Vec<(u32, u32)>, Vec<GaussianSpot<T>>) {
    let l = T::lit(1e-3);
    let d = T::lit(90e-6);
    let two_sevenths = l * T::lit(2.0) / T::lit(7.0);
    let half = l * T::lit(0.5);
    (
        vec![(1, 7), (7, 1), (5, 5)],
        vec![
            GaussianSpot { x0: two_sevenths, y0: half, waist: d },
            GaussianSpot { x0: half, y0: half, waist: d },
            GaussianSpot { x0: half, y0: two_sevenths, waist: d },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(m: u32, n: u32) -> DrumMode<f64> {
        drum_mode(&MembraneSpec::reference(), m, n, LinewidthModel::reference(), &PhysicalConstants::default()).unwrap()
    }

    #[test]
    fn degenerate_triplet() {
        let (a, b, c) = (mode(1, 7), mode(7, 1), mode(5, 5));
        assert_eq!(a.frequency, b.frequency);
        assert_eq!(a.frequency, c.frequency);
        assert!((a.frequency / (2.0 * std::f64::consts::PI) / 1.178e6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_point_amplitude() {
        assert!((mode(1, 7).zero_point_amplitude / 5.13e-16 - 1.0).abs() < 0.01);
    }

    #[test]
    fn doubling_edge_halves_frequencies() {
        let spec = MembraneSpec::<f64>::reference();
        let mut big = spec;
        big.edge_length *= 2.0;
        for (m, n) in [(1, 1), (1, 7), (3, 4)] {
            assert_eq!(big.mode_frequency(m, n), spec.mode_frequency(m, n) / 2.0);
        }
    }

    #[test]
    fn zero_index_is_rejected() {
        let r = drum_mode(&MembraneSpec::<f64>::reference(), 0, 3, LinewidthModel::reference(), &PhysicalConstants::default());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn loss_factor_pathway() {
        let spec = MembraneSpec::<f64>::reference();
        let eps = spec.bending_parameter();
        let m = drum_mode(&spec, 1, 7, LinewidthModel::LossFactor(5e-5), &PhysicalConstants::default()).unwrap();
        let expect = 5e-5 * eps * (1.0 + std::f64::consts::PI.powi(2) * 50.0 / 4.0) * m.frequency;
        assert!((m.linewidth - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn cavity_constants() {
        let c = CavityOptics::<f64>::reference();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((c.linewidth() / two_pi - SPEED_OF_LIGHT / (2.0 * 2.58e4 * 6e-3)).abs() < 1e-6);
        assert!((c.frequency_pull() / 2.95e17 - 1.0).abs() < 0.01);
    }

    #[test]
    fn overlap_at_node_vanishes_for_narrow_spot() {
        let m = mode(7, 1);
        let (_, spots) = reference_geometry::<f64>();
        let mut spot = spots[0];
        spot.waist = 5e-6;
        let q = Quadrature { intervals: Quadrature::minimum_intervals(&m, &spot), ..Quadrature::default() };
        assert!(gaussian_overlap(&m, &spot, &q).unwrap().value.abs() < 1e-9);
    }

    #[test]
    fn overlap_matches_gaussian_average_away_from_edges() {
        let m = mode(2, 3);
        let l = 1e-3;
        let spot = GaussianSpot { x0: 0.37 * l, y0: 0.55 * l, waist: 60e-6 };
        let eta = gaussian_overlap(&m, &spot, &Quadrature::default()).unwrap().value;
        let kx = 2.0 * std::f64::consts::PI / l;
        let ky = 3.0 * std::f64::consts::PI / l;
        let d2 = spot.waist * spot.waist;
        let exact = (kx * spot.x0).sin() * (-kx * kx * d2 / 4.0).exp() * (ky * spot.y0).sin() * (-ky * ky * d2 / 4.0).exp();
        assert!((eta - exact).abs() < 1e-6, "{eta} vs {exact}");
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let m = mode(1, 7);
        let (_, spots) = reference_geometry::<f64>();
        let q = Quadrature { intervals: 20, ..Quadrature::default() };
        assert!(matches!(gaussian_overlap(&m, &spots[0], &q), Err(Error::Resolution(_))));
    }

    #[test]
    fn unconverged_quadrature_is_a_resolution_error() {
        let m = mode(1, 7);
        let (_, spots) = reference_geometry::<f64>();
        let q = Quadrature { tolerance: 0.0, max_doublings: 1, ..Quadrature::default() };
        let r = gaussian_overlap(&m, &spots[0], &q);
        assert!(matches!(r, Err(Error::Resolution(_))), "{r:?}");
    }
}
