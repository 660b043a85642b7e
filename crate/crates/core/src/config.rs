//! TOML loader for [`SystemConfig`] and the membrane geometry.
//!
//! ```toml
//! [units]
//! system = "kappa"          # or "si"
//!
//! [optical.1]
//! detuning = 20.0
//! linewidth = 1.0
//! drive = "0.5+0.1i"        # optional
//!
//! [mechanical.1]
//! frequency = 19.9995
//! linewidth = 1e-4
//!
//! [coupling]
//! kind = "linearized"       # or "single_photon"
//! rows = [[0.1, "0.05-0.02i"]]
//! strengths = [0.05]        # optional: rescale rows (or set drives) to these Γ_k
//!
//! [bath]
//! occupancy = 1e4           # or temperature = 0.1 (kelvin)
//! ```
//!
//! With `source = "membrane"` in `[coupling]` the single-photon couplings and
//! the mechanical modes come from the `[membrane]`, `[cavity]`, `[[spot]]` and
//! `[[drum_mode]]` sections instead.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linearize::{drives_for_strengths, LinearizedSystem};
use crate::membrane::{
    coupling_table, drum_mode, CavityOptics, DrumMode, GaussianSpot, LinewidthModel, MembraneSpec, Quadrature,
};
use crate::model::{
    validate_config, BathSpec, CouplingKind, CouplingMatrix, MechanicalModeSpec, OpticalModeSpec, PhysicalConstants,
    SystemConfig, ThermalBath, UnitSystem,
};
use crate::scalar::{cx, Cx, Real};

/// Sections understood by [`system_config`].
pub const SYSTEM_SECTIONS: &[&str] = &["units", "optical", "mechanical", "coupling", "bath", "constants"];
/// Sections understood by [`membrane_setup`].
pub const MEMBRANE_SECTIONS: &[&str] = &["membrane", "cavity", "spot", "drum_mode", "quadrature"];

/// A number or a `"re+im i"` string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Int(i64),
    Text(String),
}

impl ComplexValue {
    pub fn resolve(&self) -> Result<(f64, f64)> {
        match self {
            ComplexValue::Real(x) => Ok((*x, 0.0)),
            ComplexValue::Int(x) => Ok((*x as f64, 0.0)),
            ComplexValue::Text(s) => parse_complex(s),
        }
    }
}

/// Parses `"1.5"`, `"-2i"`, `"3-4i"`, `"200e9+0.01e9 i"`.
pub fn parse_complex(text: &str) -> Result<(f64, f64)> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Config(format!("cannot parse {text:?} as a complex number"));
    let num = |t: &str| -> Result<f64> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => t.parse::<f64>().map_err(|_| bad()),
        }
    };
    let Some(body) = s.strip_suffix('i').or_else(|| s.strip_suffix('j')) else {
        return s.parse::<f64>().map(|x| (x, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&p| (bytes[p] == b'+' || bytes[p] == b'-') && !matches!(bytes[p - 1], b'e' | b'E'));
    match split {
        Some(p) => Ok((body[..p].parse::<f64>().map_err(|_| bad())?, num(&body[p..])?)),
        None => Ok((0.0, num(body)?)),
    }
}

fn complex<T: Real>(v: &ComplexValue) -> Result<Cx<T>> {
    let (re, im) = v.resolve()?;
    Ok(cx(T::lit(re), T::lit(im)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUnits {
    system: String,
    kappa_si: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptical {
    detuning: Option<f64>,
    frequency: Option<f64>,
    drive_frequency: Option<f64>,
    linewidth: f64,
    drive: Option<ComplexValue>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMechanical {
    frequency: f64,
    linewidth: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    kind: Option<String>,
    source: Option<String>,
    rows: Option<Vec<Vec<ComplexValue>>>,
    strengths: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    occupancy: Option<f64>,
    temperature: Option<f64>,
    reference_frequency: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    hbar: Option<f64>,
    k_b: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMembrane {
    edge_length: f64,
    thickness: f64,
    density: f64,
    youngs_modulus: ComplexValue,
    poisson_ratio: f64,
    stress: f64,
    /// Direct mechanical linewidth in rad/s.
    linewidth: Option<f64>,
    loss: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCavity {
    length: f64,
    finesse: f64,
    wavelength: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpot {
    x0: f64,
    y0: f64,
    waist: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrumMode {
    m: u32,
    n: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    intervals: Option<usize>,
    tolerance: Option<f64>,
    max_doublings: Option<usize>,
}

/// Parses TOML text into a table.
pub fn parse_document(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))
}

/// Rejects top-level keys outside `allowed`.
pub fn check_top_level(table: &toml::Table, allowed: &[&str]) -> Result<()> {
    let unknown: Vec<&str> = table.keys().map(String::as_str).filter(|k| !allowed.contains(k)).collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown sections: {}", unknown.join(", "))))
    }
}

fn section<'de, R: Deserialize<'de>>(table: &toml::Table, name: &str) -> Result<Option<R>> {
    table
        .get(name)
        .map(|v| v.clone().try_into::<R>().map_err(|e| Error::Config(format!("[{name}]: {e}"))))
        .transpose()
}

/// Sections named `[name.1]`, `[name.2]`, ... in index order.
fn indexed<'de, R: Deserialize<'de>>(table: &toml::Table, name: &str) -> Result<Vec<R>> {
    let Some(value) = table.get(name) else { return Ok(Vec::new()) };
    let inner = value.as_table().ok_or_else(|| Error::Config(format!("[{name}] must contain [{name}.1], [{name}.2], ...")))?;
    let mut by_index = BTreeMap::new();
    for (key, v) in inner {
        let idx: usize = key
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| Error::Config(format!("[{name}.{key}]: section index must be a positive integer")))?;
        let raw: R = v.clone().try_into().map_err(|e| Error::Config(format!("[{name}.{key}]: {e}")))?;
        by_index.insert(idx, raw);
    }
    if by_index.keys().copied().ne(1..=by_index.len()) {
        return Err(Error::Config(format!("[{name}.k] indices must run 1..{} without gaps", by_index.len())));
    }
    Ok(by_index.into_values().collect())
}

fn optical_spec<T: Real>(raw: &RawOptical, k: usize) -> Result<OpticalModeSpec<T>> {
    let detuning = match (raw.detuning, raw.frequency, raw.drive_frequency) {
        (Some(d), _, None) => d,
        (None, Some(nu), Some(wd)) => nu - wd,
        (Some(_), _, Some(_)) => {
            return Err(Error::Config(format!("[optical.{k}]: give detuning or drive_frequency, not both")))
        }
        _ => return Err(Error::Config(format!("[optical.{k}]: missing detuning"))),
    };
    Ok(OpticalModeSpec {
        detuning: T::lit(detuning),
        frequency: raw.frequency.map(T::lit),
        linewidth: T::lit(raw.linewidth),
        drive: raw.drive.as_ref().map(complex).transpose()?.unwrap_or_else(|| cx(T::zero(), T::zero())),
    })
}

/// `None` when the section is absent.
fn units<T: Real>(table: &toml::Table) -> Result<Option<UnitSystem<T>>> {
    let raw: Option<RawUnits> = section(table, "units")?;
    raw.map(|u| match u.system.as_str() {
        "kappa" => Ok(UnitSystem::KappaNormalized { kappa_si: u.kappa_si.map(T::lit) }),
        "si" if u.kappa_si.is_none() => Ok(UnitSystem::SiAngular),
        "si" => Err(Error::Config("[units]: kappa_si only applies to system = \"kappa\"".into())),
        other => Err(Error::Config(format!("[units]: unknown system {other:?} (use \"kappa\" or \"si\")"))),
    })
    .transpose()
}

fn bath<T: Real>(raw: RawBath) -> Result<ThermalBath<T>> {
    let spec = match (raw.occupancy, raw.temperature) {
        (Some(n), None) => BathSpec::Occupancy(T::lit(n)),
        (None, Some(t)) => BathSpec::Temperature(T::lit(t)),
        _ => return Err(Error::Config("[bath]: give exactly one of occupancy or temperature".into())),
    };
    Ok(ThermalBath { spec, reference_frequency: raw.reference_frequency.map(T::lit) })
}

fn coupling_kind(raw: &RawCoupling) -> Result<CouplingKind> {
    match raw.kind.as_deref() {
        None | Some("linearized") => Ok(CouplingKind::Linearized),
        Some("single_photon") => Ok(CouplingKind::SinglePhoton),
        Some(other) => Err(Error::Config(format!(
            "[coupling]: unknown kind {other:?} (use \"linearized\" or \"single_photon\")"
        ))),
    }
}

/// Builds a validated [`SystemConfig`] from a TOML table. Sections other than
/// the system and membrane ones must be listed in `extra_sections`.
pub fn system_config<T: Real>(table: &toml::Table, extra_sections: &[&str]) -> Result<SystemConfig<T>> {
    let allowed: Vec<&str> = SYSTEM_SECTIONS.iter().chain(MEMBRANE_SECTIONS).chain(extra_sections).copied().collect();
    check_top_level(table, &allowed)?;
    let coupling_raw: Option<RawCoupling> = section(table, "coupling")?;
    let from_membrane = coupling_raw.as_ref().and_then(|c| c.source.as_deref()) == Some("membrane");
    if let Some(src) = coupling_raw.as_ref().and_then(|c| c.source.as_deref()) {
        if src != "membrane" {
            return Err(Error::Config(format!("[coupling]: unknown source {src:?}")));
        }
    }
    let required: &[&str] = if from_membrane { &["coupling", "bath"] } else { &["optical", "mechanical", "coupling", "bath"] };
    let missing: Vec<&str> = required.iter().copied().filter(|s| !table.contains_key(*s)).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing sections: {}", missing.join(", "))));
    }
    let coupling_raw = coupling_raw.expect("checked above");
    let bath_raw: RawBath = section(table, "bath")?.expect("checked above");
    let constants = match section::<RawConstants>(table, "constants")? {
        None => PhysicalConstants::default(),
        Some(c) => {
            let d = PhysicalConstants::<T>::default();
            PhysicalConstants { hbar: c.hbar.map(T::lit).unwrap_or(d.hbar), k_b: c.k_b.map(T::lit).unwrap_or(d.k_b) }
        }
    };
    let units = units::<T>(table)?;
    let optical_raw: Vec<RawOptical> = indexed(table, "optical")?;
    let mechanical_raw: Vec<RawMechanical> = indexed(table, "mechanical")?;

    let mut cfg = if from_membrane {
        if coupling_raw.rows.is_some() || coupling_raw.kind.is_some() {
            return Err(Error::Config("[coupling]: rows and kind are implied by source = \"membrane\"".into()));
        }
        if !mechanical_raw.is_empty() {
            return Err(Error::Config("[mechanical.j] sections conflict with source = \"membrane\"".into()));
        }
        let setup = membrane_setup::<T>(table)?;
        let mut cfg = setup.system_config(constants)?;
        if !optical_raw.is_empty() {
            if optical_raw.len() != cfg.optical.len() {
                return Err(Error::Config(format!(
                    "{} [optical.k] sections for {} spots",
                    optical_raw.len(),
                    cfg.optical.len()
                )));
            }
            cfg.optical = optical_raw.iter().enumerate().map(|(k, o)| optical_spec(o, k + 1)).collect::<Result<_>>()?;
        }
        cfg.bath = bath(bath_raw)?;
        match units {
            None | Some(UnitSystem::SiAngular) => cfg,
            Some(UnitSystem::KappaNormalized { .. }) => cfg.to_kappa_normalized()?,
        }
    } else {
        let kind = coupling_kind(&coupling_raw)?;
        let rows = coupling_raw.rows.as_ref().ok_or_else(|| Error::Config("[coupling]: missing rows".into()))?;
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Config("[coupling]: rows must all have the same length".into()));
        }
        let mut entries = DMatrix::from_element(m, n, cx(T::zero(), T::zero()));
        for (k, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                entries[(k, j)] = complex(v)?;
            }
        }
        SystemConfig {
            optical: optical_raw.iter().enumerate().map(|(k, o)| optical_spec(o, k + 1)).collect::<Result<_>>()?,
            mechanical: mechanical_raw
                .iter()
                .map(|r| MechanicalModeSpec { frequency: T::lit(r.frequency), linewidth: T::lit(r.linewidth) })
                .collect(),
            coupling: CouplingMatrix { entries, kind },
            bath: bath(bath_raw)?,
            units: units.unwrap_or(UnitSystem::KappaNormalized { kappa_si: None }),
            constants,
        }
    };

    let diagnostics = validate_config(&cfg);
    if !diagnostics.is_empty() {
        let text: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
        return Err(Error::Config(text.join("; ")));
    }
    if let Some(targets) = &coupling_raw.strengths {
        let targets: Vec<T> = targets.iter().map(|&t| T::lit(t)).collect();
        apply_strengths(&mut cfg, &targets)?;
    }
    Ok(cfg)
}

/// Sets Γ_k = `targets[k]`: linearized rows are rescaled, single-photon
/// configs get drive amplitudes solved self-consistently.
pub fn apply_strengths<T: Real>(cfg: &mut SystemConfig<T>, targets: &[T]) -> Result<()> {
    match cfg.coupling.kind {
        CouplingKind::Linearized => {
            let ls = LinearizedSystem::direct(cfg).with_strengths(targets)?;
            cfg.coupling.entries = ls.coupling;
        }
        CouplingKind::SinglePhoton => {
            let (drives, _) = drives_for_strengths(cfg, targets)?;
            for (o, q) in cfg.optical.iter_mut().zip(drives) {
                o.drive = q;
            }
        }
    }
    Ok(())
}

/// Geometry and materials for the membrane-in-cavity model.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneSetup<T: Real> {
    pub spec: MembraneSpec<T>,
    pub optics: CavityOptics<T>,
    pub spots: Vec<GaussianSpot<T>>,
    pub modes: Vec<(u32, u32)>,
    pub linewidth: LinewidthModel<T>,
    pub quadrature: Quadrature,
}

impl<T: Real> MembraneSetup<T> {
    pub fn reference() -> Self {
        let (modes, spots) = crate::membrane::reference_geometry();
        Self {
            spec: MembraneSpec::reference(),
            optics: CavityOptics::reference(),
            spots,
            modes,
            linewidth: LinewidthModel::reference(),
            quadrature: Quadrature::default(),
        }
    }

    pub fn drum_modes(&self, constants: &PhysicalConstants<T>) -> Result<Vec<DrumMode<T>>> {
        self.modes.iter().map(|&(m, n)| drum_mode(&self.spec, m, n, self.linewidth, constants)).collect()
    }

    pub fn coupling(&self, constants: &PhysicalConstants<T>) -> Result<CouplingMatrix<T>> {
        coupling_table(&self.drum_modes(constants)?, &self.spots, &self.optics, &self.quadrature)
    }

    /// SI system with one optical mode per spot, each at linewidth κ and
    /// detuned to the mean drum frequency, undriven, with a zero-occupancy bath.
    pub fn system_config(&self, constants: PhysicalConstants<T>) -> Result<SystemConfig<T>> {
        let drums = self.drum_modes(&constants)?;
        let coupling = coupling_table(&drums, &self.spots, &self.optics, &self.quadrature)?;
        let mechanical: Vec<MechanicalModeSpec<T>> =
            drums.iter().map(|d| MechanicalModeSpec { frequency: d.frequency, linewidth: d.linewidth }).collect();
        let mean = crate::model::mean(mechanical.iter().map(|m| m.frequency));
        let optical = self
            .spots
            .iter()
            .map(|_| OpticalModeSpec {
                detuning: mean,
                frequency: Some(self.optics.optical_frequency()),
                linewidth: self.optics.linewidth(),
                drive: cx(T::zero(), T::zero()),
            })
            .collect();
        Ok(SystemConfig {
            optical,
            mechanical,
            coupling,
            bath: ThermalBath::occupancy(T::zero()),
            units: UnitSystem::SiAngular,
            constants,
        })
    }
}

/// Reads the membrane sections; absent sections take the reference values.
pub fn membrane_setup<T: Real>(table: &toml::Table) -> Result<MembraneSetup<T>> {
    let mut setup = MembraneSetup::<T>::reference();
    if let Some(m) = section::<RawMembrane>(table, "membrane")? {
        setup.spec = MembraneSpec {
            edge_length: T::lit(m.edge_length),
            thickness: T::lit(m.thickness),
            density: T::lit(m.density),
            youngs_modulus: complex(&m.youngs_modulus)?,
            poisson_ratio: T::lit(m.poisson_ratio),
            stress: T::lit(m.stress),
            loss: m.loss.map(T::lit),
        };
        setup.linewidth = match (m.linewidth, m.loss) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("[membrane]: give linewidth or loss, not both".into()))
            }
            (Some(g), None) => LinewidthModel::Direct(T::lit(g)),
            (None, Some(s)) => LinewidthModel::LossFactor(T::lit(s)),
            (None, None) => LinewidthModel::reference(),
        };
        let diagnostics = setup.spec.validate();
        if !diagnostics.is_empty() {
            let text: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
            return Err(Error::Config(text.join("; ")));
        }
    }
    if let Some(c) = section::<RawCavity>(table, "cavity")? {
        if !(c.length > 0.0 && c.finesse > 0.0 && c.wavelength > 0.0) {
            return Err(Error::Config("[cavity]: length, finesse and wavelength must be positive".into()));
        }
        setup.optics = CavityOptics { length: T::lit(c.length), finesse: T::lit(c.finesse), wavelength: T::lit(c.wavelength) };
    }
    if let Some(spots) = section::<Vec<RawSpot>>(table, "spot")? {
        setup.spots = spots.iter().map(|s| GaussianSpot { x0: T::lit(s.x0), y0: T::lit(s.y0), waist: T::lit(s.waist) }).collect();
    }
    if let Some(modes) = section::<Vec<RawDrumMode>>(table, "drum_mode")? {
        setup.modes = modes.iter().map(|d| (d.m, d.n)).collect();
    }
    if let Some(q) = section::<RawQuadrature>(table, "quadrature")? {
        let d = Quadrature::default();
        setup.quadrature = Quadrature {
            intervals: q.intervals.unwrap_or(d.intervals),
            tolerance: q.tolerance.unwrap_or(d.tolerance),
            max_doublings: q.max_doublings.unwrap_or(d.max_doublings),
        };
    }
    Ok(setup)
}
