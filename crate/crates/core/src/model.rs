//! Domain types for an optomechanical system of M optical and N mechanical
//! modes, plus the elementary derived quantities.
//!
//! All frequencies are angular. In [`UnitSystem::KappaNormalized`] every rate
//! is expressed in units of the first optical linewidth.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{cabs2, cr, Cx, Real};

/// CODATA 2018 reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// CODATA 2018 Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalModeSpec<T: Real> {
    /// Bare detuning δ'_k = ν_k − ω^d_k.
    pub detuning: T,
    /// Bare cavity frequency ν_k, when known. Configs in κ units only fix the detuning.
    pub frequency: Option<T>,
    pub linewidth: T,
    /// Drive amplitude Q_k.
    pub drive: Cx<T>,
}

impl<T: Real> OpticalModeSpec<T> {
    pub fn new(detuning: T, linewidth: T) -> Self {
        Self { detuning, frequency: None, linewidth, drive: Cx::new(T::zero(), T::zero()) }
    }

    /// Drive frequency ω^d_k = ν_k − δ'_k.
    pub fn drive_frequency(&self) -> Option<T> {
        self.frequency.map(|nu| nu - self.detuning)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalModeSpec<T: Real> {
    pub frequency: T,
    pub linewidth: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    /// Single-photon couplings g^S; the linearized couplings follow from the drive.
    SinglePhoton,
    /// Linearized couplings g = g^S α, given directly.
    Linearized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix<T: Real> {
    /// M×N entries; row k is the coupling vector of optical mode k.
    pub entries: DMatrix<Cx<T>>,
    pub kind: CouplingKind,
}

impl<T: Real> CouplingMatrix<T> {
    pub fn linearized(entries: DMatrix<Cx<T>>) -> Self {
        Self { entries, kind: CouplingKind::Linearized }
    }

    pub fn single_photon(entries: DMatrix<Cx<T>>) -> Self {
        Self { entries, kind: CouplingKind::SinglePhoton }
    }

    pub fn from_real(rows: usize, cols: usize, values: &[T], kind: CouplingKind) -> Self {
        let entries = DMatrix::from_row_slice(rows, cols, values).map(cr);
        Self { entries, kind }
    }

    pub fn row(&self, k: usize) -> DVector<Cx<T>> {
        self.entries.row(k).transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BathSpec<T: Real> {
    Occupancy(T),
    /// Temperature in kelvin.
    Temperature(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalBath<T: Real> {
    pub spec: BathSpec<T>,
    /// Frequency at which a temperature is converted to an occupancy.
    /// Defaults to the mean mechanical frequency.
    pub reference_frequency: Option<T>,
}

impl<T: Real> ThermalBath<T> {
    pub fn occupancy(n_th: T) -> Self {
        Self { spec: BathSpec::Occupancy(n_th), reference_frequency: None }
    }

    pub fn temperature(kelvin: T) -> Self {
        Self { spec: BathSpec::Temperature(kelvin), reference_frequency: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitSystem<T: Real> {
    /// Rates in units of κ_1. `kappa_si` is κ_1 in rad/s when known.
    KappaNormalized { kappa_si: Option<T> },
    SiAngular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<T: Real> {
    pub hbar: T,
    pub k_b: T,
}

impl<T: Real> Default for PhysicalConstants<T> {
    fn default() -> Self {
        Self { hbar: T::lit(HBAR), k_b: T::lit(K_B) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig<T: Real> {
    pub optical: Vec<OpticalModeSpec<T>>,
    pub mechanical: Vec<MechanicalModeSpec<T>>,
    pub coupling: CouplingMatrix<T>,
    pub bath: ThermalBath<T>,
    pub units: UnitSystem<T>,
    pub constants: PhysicalConstants<T>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Per-drive strengths Γ_k = Σ_j |g_kj|²/κ_k and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveStrengths<T: Real> {
    pub per_mode: Vec<T>,
    pub total: T,
}

impl<T: Real> SystemConfig<T> {
    pub fn optical_count(&self) -> usize {
        self.optical.len()
    }

    pub fn mechanical_count(&self) -> usize {
        self.mechanical.len()
    }

    pub fn detunings(&self) -> DVector<T> {
        DVector::from_iterator(self.optical.len(), self.optical.iter().map(|o| o.detuning))
    }

    pub fn optical_linewidths(&self) -> DVector<T> {
        DVector::from_iterator(self.optical.len(), self.optical.iter().map(|o| o.linewidth))
    }

    pub fn mechanical_frequencies(&self) -> DVector<T> {
        DVector::from_iterator(self.mechanical.len(), self.mechanical.iter().map(|m| m.frequency))
    }

    pub fn mechanical_linewidths(&self) -> DVector<T> {
        DVector::from_iterator(self.mechanical.len(), self.mechanical.iter().map(|m| m.linewidth))
    }

    pub fn drives(&self) -> Vec<Cx<T>> {
        self.optical.iter().map(|o| o.drive).collect()
    }

    /// ω̄_mec = Σω_j / N.
    pub fn mean_mechanical_frequency(&self) -> T {
        mean(self.mechanical.iter().map(|m| m.frequency))
    }

    /// Spread of the mechanical frequencies (|ω_1 − ω_2| for two modes).
    pub fn mechanical_splitting(&self) -> T {
        spread(self.mechanical.iter().map(|m| m.frequency))
    }

    /// Resolves the bath to a phonon occupancy.
    pub fn bath_occupancy(&self) -> Result<T> {
        match self.bath.spec {
            BathSpec::Occupancy(n) => {
                if n < T::zero() || !n.is_finite() {
                    return Err(Error::Domain(format!("bath occupancy must be non-negative, got {n}")));
                }
                Ok(n)
            }
            BathSpec::Temperature(kelvin) => {
                let omega = self.bath.reference_frequency.unwrap_or_else(|| self.mean_mechanical_frequency());
                let omega_si = match self.units {
                    UnitSystem::SiAngular => omega,
                    UnitSystem::KappaNormalized { kappa_si: Some(k) } => omega * k,
                    UnitSystem::KappaNormalized { kappa_si: None } => {
                        return Err(Error::Config(
                            "a bath temperature in kappa units needs units.kappa_si".into(),
                        ))
                    }
                };
                thermal_occupancy_with(omega_si, kelvin, &self.constants)
            }
        }
    }

    /// Converts a κ-normalized configuration to SI angular units.
    pub fn to_si(&self, kappa_si: Option<T>) -> Result<Self> {
        match self.units {
            UnitSystem::SiAngular => Ok(self.clone()),
            UnitSystem::KappaNormalized { kappa_si: stored } => {
                let scale = kappa_si.or(stored).ok_or_else(|| {
                    Error::Config("conversion to SI needs the value of kappa in rad/s".into())
                })?;
                if !(scale > T::zero()) {
                    return Err(Error::Domain("kappa_si must be positive".into()));
                }
                let mut out = self.rescaled(scale);
                out.units = UnitSystem::SiAngular;
                Ok(out)
            }
        }
    }

    /// Converts to units of κ_1, recording κ_1 in rad/s when the source is SI.
    pub fn to_kappa_normalized(&self) -> Result<Self> {
        match self.units {
            UnitSystem::KappaNormalized { .. } => Ok(self.clone()),
            UnitSystem::SiAngular => {
                let kappa = self
                    .optical
                    .first()
                    .map(|o| o.linewidth)
                    .ok_or_else(|| Error::Config("no optical mode to normalize by".into()))?;
                if !(kappa > T::zero()) {
                    return Err(Error::Domain("optical linewidth must be positive".into()));
                }
                let mut out = self.rescaled(T::one() / kappa);
                out.units = UnitSystem::KappaNormalized { kappa_si: Some(kappa) };
                Ok(out)
            }
        }
    }

    fn rescaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for o in &mut out.optical {
            o.detuning *= s;
            o.frequency = o.frequency.map(|f| f * s);
            o.linewidth *= s;
            o.drive *= s;
        }
        for m in &mut out.mechanical {
            m.frequency *= s;
            m.linewidth *= s;
        }
        out.coupling.entries = out.coupling.entries.map(|g| g * s);
        out.bath.reference_frequency = out.bath.reference_frequency.map(|f| f * s);
        out
    }
}

pub(crate) fn mean<T: Real>(values: impl Iterator<Item = T>) -> T {
    let (sum, count) = values.fold((T::zero(), 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        T::zero()
    } else {
        sum / T::from_usize_lossy(count)
    }
}

pub(crate) fn spread<T: Real>(values: impl Iterator<Item = T>) -> T {
    let mut lo: Option<T> = None;
    let mut hi: Option<T> = None;
    for v in values {
        lo = Some(lo.map_or(v, |l: T| l.min(v)));
        hi = Some(hi.map_or(v, |h: T| h.max(v)));
    }
    match (lo, hi) {
        (Some(l), Some(h)) => h - l,
        _ => T::zero(),
    }
}

/// Checks every type invariant; an empty list means the config is usable.
pub fn validate_config<T: Real>(cfg: &SystemConfig<T>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let m = cfg.optical.len();
    let n = cfg.mechanical.len();
    for (k, o) in cfg.optical.iter().enumerate() {
        let field = |name: &str| format!("optical.{}.{name}", k + 1);
        if !(o.linewidth > T::zero()) || !o.linewidth.is_finite() {
            out.push(Diagnostic::new(field("linewidth"), "optical linewidth must be positive"));
        }
        if let Some(nu) = o.frequency {
            if !(nu > T::zero()) || !nu.is_finite() {
                out.push(Diagnostic::new(field("frequency"), "optical frequency must be positive"));
            }
        }
        if !o.detuning.is_finite() {
            out.push(Diagnostic::new(field("detuning"), "detuning must be finite"));
        }
        if !(o.drive.re.is_finite() && o.drive.im.is_finite()) {
            out.push(Diagnostic::new(field("drive"), "drive amplitude must be finite"));
        }
    }
    for (j, mm) in cfg.mechanical.iter().enumerate() {
        let field = |name: &str| format!("mechanical.{}.{name}", j + 1);
        if !(mm.frequency > T::zero()) || !mm.frequency.is_finite() {
            out.push(Diagnostic::new(field("frequency"), "mechanical frequency must be positive"));
        }
        if !(mm.linewidth > T::zero()) || !mm.linewidth.is_finite() {
            out.push(Diagnostic::new(field("linewidth"), "mechanical linewidth must be positive"));
        }
    }
    let g = &cfg.coupling.entries;
    if g.nrows() != m || g.ncols() != n {
        out.push(Diagnostic::new(
            "coupling",
            format!("coupling matrix is {}x{} but there are {m} optical and {n} mechanical modes", g.nrows(), g.ncols()),
        ));
    }
    if g.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        out.push(Diagnostic::new("coupling", "coupling entries must be finite"));
    }
    if cfg.coupling.kind == CouplingKind::SinglePhoton && g.iter().any(|z| z.im != T::zero()) {
        out.push(Diagnostic::new("coupling", "single-photon couplings must be real"));
    }
    match cfg.bath.spec {
        BathSpec::Occupancy(v) if !(v >= T::zero()) || !v.is_finite() => {
            out.push(Diagnostic::new("bath.occupancy", "bath occupancy must be non-negative"));
        }
        BathSpec::Temperature(t) if !(t > T::zero()) || !t.is_finite() => {
            out.push(Diagnostic::new("bath.temperature", "bath temperature must be positive"));
        }
        _ => {}
    }
    if let UnitSystem::KappaNormalized { kappa_si: Some(k) } = cfg.units {
        if !(k > T::zero()) {
            out.push(Diagnostic::new("units.kappa_si", "kappa_si must be positive"));
        }
    }
    if !(cfg.constants.hbar > T::zero() && cfg.constants.k_b > T::zero()) {
        out.push(Diagnostic::new("constants", "physical constants must be positive"));
    }
    out
}

/// Bose occupancy 1/(e^{ħω/k_BT} − 1) with CODATA constants.
pub fn thermal_occupancy<T: Real>(omega: T, kelvin: T) -> Result<T> {
    thermal_occupancy_with(omega, kelvin, &PhysicalConstants::default())
}

pub fn thermal_occupancy_with<T: Real>(omega: T, kelvin: T, c: &PhysicalConstants<T>) -> Result<T> {
    if !(kelvin > T::zero()) {
        return Err(Error::Domain(format!("temperature must be positive, got {kelvin}")));
    }
    if !(omega > T::zero()) {
        return Err(Error::Domain(format!("frequency must be positive, got {omega}")));
    }
    // Form the ratio in f64: ħω and k_BT underflow single precision.
    let x = c.hbar.as_f64() * omega.as_f64() / (c.k_b.as_f64() * kelvin.as_f64());
    Ok(T::lit(1.0 / x.exp_m1()))
}

/// Γ_k from a linearized coupling matrix and optical linewidths.
pub fn strengths_of<T: Real>(coupling: &DMatrix<Cx<T>>, linewidths: &[T]) -> DriveStrengths<T> {
    let per_mode: Vec<T> = (0..coupling.nrows())
        .map(|k| coupling.row(k).iter().fold(T::zero(), |s, &g| s + cabs2(g)) / linewidths[k])
        .collect();
    let total = per_mode.iter().fold(T::zero(), |s, &v| s + v);
    DriveStrengths { per_mode, total }
}

/// Γ_k and Γ of a configuration that carries linearized couplings.
pub fn drive_strengths<T: Real>(cfg: &SystemConfig<T>) -> Result<DriveStrengths<T>> {
    if cfg.coupling.kind != CouplingKind::Linearized {
        return Err(Error::Precondition(
            "drive strengths need linearized couplings; linearize the system first".into(),
        ));
    }
    let kappas: Vec<T> = cfg.optical.iter().map(|o| o.linewidth).collect();
    Ok(strengths_of(&cfg.coupling.entries, &kappas))
}

#[cfg(test)]
pub(crate) use tests::dual_drive_config;
