//! One function per subcommand, each turning a parsed config into a report.

use std::path::Path;

use mmcool::config::{check_top_level, membrane_setup, system_config, MEMBRANE_SECTIONS, SYSTEM_SECTIONS};
use mmcool::limits::{
    classical_limit_asymptote, classical_limit_two_mode, limit_by_angles, quantum_limit, regime_flags,
    weak_coupling_general, weak_coupling_two_mode, LimitInputs,
};
use mmcool::linearize::LinearizedSystem;
use mmcool::membrane::gaussian_overlap;
use mmcool::model::{PhysicalConstants, SystemConfig};
use mmcool::moments::{
    build_generator, default_time_step, evolve_moments, hybrid_occupancy, steady_state, EvolveOptions, MomentState,
};
use mmcool::schedule::{
    contrast_sweep, detuning_sweep, dynamic_run, mean_coupling_direction, path_independence_check, quasi_static_run,
    strength_sweep, DriveProtocol, SweepCurve,
};
use mmcool::spectral::{
    bright_dark_split, coupling_angles, find_exceptional_points, gamma_sweep, geometric_grid,
    rwa_dynamical_matrix, schmidt_basis, EpKind,
};
use mmcool::{Cx, Error, Result};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::report::{Cell, Flag, RunReport, Table};

/// Per-subcommand sections accepted next to the system description.
pub const EXTRA_SECTIONS: &[&str] = &["steady", "evolve", "eigen", "schedule", "sweep"];

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    /// Sweep resolution.
    pub steps: Option<usize>,
    /// Solver tolerance (quadrature convergence, EP coalescence threshold).
    pub tol: Option<f64>,
}

fn section<R: DeserializeOwned>(table: &toml::Table, name: &str) -> Result<Option<R>> {
    table
        .get(name)
        .map(|v| v.clone().try_into::<R>().map_err(|e| Error::Config(format!("[{name}]: {e}"))))
        .transpose()
}

fn required<R: DeserializeOwned>(table: &toml::Table, name: &str) -> Result<R> {
    section(table, name)?.ok_or_else(|| Error::Config(format!("missing sections: {name}")))
}

fn system(table: &toml::Table) -> Result<SystemConfig<f64>> {
    system_config(table, EXTRA_SECTIONS)
}

fn flags(ls: &LinearizedSystem<f64>) -> Vec<Flag> {
    regime_flags(ls)
        .into_iter()
        .map(|f| Flag { name: f.name.to_owned(), holds: f.holds, detail: f.detail })
        .collect()
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Bright and dark vectors of a two-mode system relative to the mean coupling
/// direction; `None` for other mode counts.
fn bright_dark(ls: &LinearizedSystem<f64>) -> Result<Option<(DVector<Cx<f64>>, DVector<Cx<f64>>)>> {
    if ls.mechanical_count() != 2 || ls.strengths().total == 0.0 {
        return Ok(None);
    }
    bright_dark_split(&mean_coupling_direction(ls)?).map(Some)
}

fn scaled_targets(ls: &LinearizedSystem<f64>, total: f64) -> Result<Vec<f64>> {
    let s = ls.strengths();
    if !(s.total > 0.0) {
        return Err(Error::NoCoupling(0));
    }
    Ok(s.per_mode.iter().map(|p| p / s.total * total).collect())
}

fn common_gamma(ls: &LinearizedSystem<f64>) -> Result<f64> {
    let g = &ls.mechanical_linewidths;
    if g.iter().any(|&x| (x - g[0]).abs() > 1e-12 * g[0].abs()) {
        return Err(Error::Precondition("closed forms need equal mechanical linewidths".into()));
    }
    Ok(g[0])
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SteadySection {
    gamma: [f64; 2],
    points: Option<usize>,
}

pub fn steady(table: &toml::Table, opts: Options) -> Result<RunReport> {
    let cfg = system(table)?;
    let ls = LinearizedSystem::from_config(&cfg)?;
    let n_th = cfg.bath_occupancy()?;
    let state = steady_state(&ls, n_th)?;
    let phonons = state.phonon_numbers();
    let mut r = RunReport::new("steady", table);

    let mut modes = Table::new(["mode", "frequency", "occupancy", "occupancy_over_bath"]);
    for (j, &n) in phonons.per_mode.iter().enumerate() {
        modes.push(vec![((j + 1) as f64).into(), ls.mechanical_frequencies[j].into(), n.into(), (n / n_th).into()]);
    }
    r.table("modes", modes);

    let basis = schmidt_basis(&ls.coupling);
    let mut schmidt = Table::new(["vector", "occupancy", "coupled"]);
    for (i, e) in basis.vectors.iter().enumerate() {
        let coupled = if i < basis.rank { "yes" } else { "no" };
        schmidt.push(vec![((i + 1) as f64).into(), hybrid_occupancy(&state, e)?.into(), coupled.into()]);
    }
    r.table("schmidt", schmidt);

    let strengths = ls.strengths();
    r.scalar("n_th", n_th);
    r.scalar("n_tot", phonons.total);
    r.scalar("n_tot_over_n_th", phonons.total / n_th);
    r.scalar("gamma_total", strengths.total);
    for (k, &g) in strengths.per_mode.iter().enumerate() {
        r.scalar(format!("gamma_{}", k + 1), g);
    }
    if let Some((plus, minus)) = bright_dark(&ls)? {
        r.scalar("n_bright", hybrid_occupancy(&state, &plus)?);
        r.scalar("n_dark", hybrid_occupancy(&state, &minus)?);
    }
    if let Ok(inp) = LimitInputs::two_mode_symmetric(&ls, n_th) {
        let weak = weak_coupling_two_mode(inp.gamma, inp.strength, inp.theta, inp.splitting, n_th);
        r.scalar("weak_coupling_limit", weak);
        r.scalar("weak_coupling_relative_difference", (phonons.total - weak) / weak);
    }

    if let Some(s) = section::<SteadySection>(table, "steady")? {
        let points = opts.steps.or(s.points).unwrap_or(41);
        let sweep = strength_sweep(&ls, n_th, &geometric_grid(s.gamma[0], s.gamma[1], points))?;
        let n = ls.mechanical_count();
        let mut cols: Vec<String> = vec!["gamma".into(), "n_tot".into()];
        cols.extend(numbered("n", n));
        if sweep.bright_dark.is_some() {
            cols.extend(["n_bright".into(), "n_dark".into()]);
        }
        let mut t = Table::new(cols);
        for (i, (g, p)) in sweep.gammas.iter().zip(&sweep.phonons).enumerate() {
            let mut row: Vec<Cell> = vec![(*g).into(), p.total.into()];
            row.extend(p.per_mode.iter().map(|&x| Cell::from(x)));
            if let Some(bd) = &sweep.bright_dark {
                row.extend([bd[i].0.into(), bd[i].1.into()]);
            }
            t.push(row);
        }
        r.table("sweep", t);
    }
    r.flags = flags(&ls);
    Ok(r)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvolveSection {
    t_end: f64,
    dt: Option<f64>,
    sample_every: Option<usize>,
    /// "thermal" (mechanics at the bath occupancy) or "ground".
    start: Option<String>,
}

pub fn evolve(table: &toml::Table, _opts: Options) -> Result<RunReport> {
    let cfg = system(table)?;
    let s: EvolveSection = required(table, "evolve")?;
    let ls = LinearizedSystem::from_config(&cfg)?;
    let n_th = cfg.bath_occupancy()?;
    let (m, n) = (ls.optical_count(), ls.mechanical_count());
    let start = match s.start.as_deref() {
        None | Some("thermal") => MomentState::thermal(m, n, &vec![n_th; n]),
        Some("ground") => MomentState::zeros(m, n),
        Some(other) => return Err(Error::Config(format!("[evolve]: unknown start {other:?} (use \"thermal\" or \"ground\")"))),
    };
    let dt = s.dt.unwrap_or_else(|| default_time_step(&ls));
    let gen = build_generator(&ls, n_th);
    let opts = EvolveOptions { dt, t_end: s.t_end, sample_every: s.sample_every.unwrap_or(1).max(1) };
    let traj = evolve_moments(&gen, &start, &opts)?;
    let split = bright_dark(&ls)?;

    let mut cols: Vec<String> = vec!["t".into(), "n_tot".into()];
    cols.extend(numbered("n", n));
    if split.is_some() {
        cols.extend(["n_bright".into(), "n_dark".into()]);
    }
    let mut t = Table::new(cols);
    for (i, p) in traj.phonon_series().iter().enumerate() {
        let mut row: Vec<Cell> = vec![traj.times[i].into(), p.total.into()];
        row.extend(p.per_mode.iter().map(|&x| Cell::from(x)));
        if let Some((plus, minus)) = &split {
            let st = traj.state(i);
            row.extend([hybrid_occupancy(&st, plus)?.into(), hybrid_occupancy(&st, minus)?.into()]);
        }
        t.push(row);
    }
    let mut r = RunReport::new("evolve", table);
    r.table("trajectory", t);
    let last = traj.last_state().phonon_numbers().total;
    let steady = steady_state(&ls, n_th)?.phonon_numbers().total;
    r.scalar("dt", dt);
    r.scalar("n_th", n_th);
    r.scalar("final_n_tot", last);
    r.scalar("steady_n_tot", steady);
    r.scalar("final_vs_steady", (last - steady).abs() / steady.abs().max(f64::MIN_POSITIVE));
    r.flags = flags(&ls);
    Ok(r)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EigenSection {
    gamma: Option<[f64; 2]>,
    points: Option<usize>,
    threshold: Option<f64>,
}

pub fn eigen(table: &toml::Table, opts: Options) -> Result<RunReport> {
    let cfg = system(table)?;
    let s: EigenSection = section(table, "eigen")?.unwrap_or_default();
    let ls = LinearizedSystem::from_config(&cfg)?;
    let [lo, hi] = s.gamma.unwrap_or([1e-5, 1.0]);
    let points = opts.steps.or(s.points).unwrap_or(401);
    let threshold = opts.tol.or(s.threshold).unwrap_or(1e-6);
    let grid = geometric_grid(lo, hi, points);
    let build = |g: f64| Ok(rwa_dynamical_matrix(&ls.with_strengths(&scaled_targets(&ls, g)?)?));
    let sweep = gamma_sweep(&grid, ls.optical_count(), build)?;
    let eps = find_exceptional_points(&sweep, threshold, build)?;

    let d = sweep.reports.first().map_or(0, |rep| rep.len());
    let mut cols: Vec<String> = vec!["gamma".into()];
    for b in 1..=d {
        cols.extend([format!("re_{b}"), format!("im_{b}"), format!("photonic_{b}"), format!("label_{b}")]);
    }
    let mut branches = Table::new(cols);
    for (g, rep) in sweep.gammas.iter().zip(&sweep.reports) {
        let mut row: Vec<Cell> = vec![(*g).into()];
        for b in 0..d {
            row.extend([
                rep.eigenvalues[b].re.into(),
                rep.eigenvalues[b].im.into(),
                rep.photonic_weights[b].into(),
                rep.labels[b].as_str().into(),
            ]);
        }
        branches.push(row);
    }

    let mut table_eps = Table::new([
        "gamma",
        "re",
        "im",
        "distance",
        "branch_a",
        "branch_b",
        "eigenvector_overlap",
        "photonic_weight",
        "kind",
    ]);
    let coalescent: Vec<_> = eps.iter().filter(|e| e.coalescent).collect();
    for e in &coalescent {
        let kind = match e.kind {
            EpKind::MechanicalPair => "mechanical_pair",
            EpKind::OpticalMechanical => "optical_mechanical",
        };
        table_eps.push(vec![
            e.gamma.into(),
            e.eigenvalue.re.into(),
            e.eigenvalue.im.into(),
            e.distance.into(),
            ((e.branches.0 + 1) as f64).into(),
            ((e.branches.1 + 1) as f64).into(),
            e.eigenvector_overlap.into(),
            e.photonic_weight.into(),
            kind.into(),
        ]);
    }
    let mut r = RunReport::new("eigen", table);
    r.table("branches", branches);
    r.table("exceptional_points", table_eps);
    r.scalar("threshold", threshold);
    r.scalar("exceptional_points", coalescent.len() as f64);
    r.scalar("mechanical_pair_points", coalescent.iter().filter(|e| e.kind == EpKind::MechanicalPair).count() as f64);
    r.scalar(
        "optical_mechanical_points",
        coalescent.iter().filter(|e| e.kind == EpKind::OpticalMechanical).count() as f64,
    );
    r.flags = flags(&ls);
    Ok(r)
}

pub fn limits(table: &toml::Table, _opts: Options) -> Result<RunReport> {
    let cfg = system(table)?;
    let ls = LinearizedSystem::from_config(&cfg)?;
    let n_th = cfg.bath_occupancy()?;
    let numeric = steady_state(&ls, n_th)?.phonon_numbers().total;
    let strengths = ls.strengths();

    let mut rows: Vec<(String, Result<f64>)> = vec![("numeric".into(), Ok(numeric))];
    let gamma = common_gamma(&ls);
    rows.push((
        "weak_coupling_general".into(),
        gamma.clone().and_then(|g| weak_coupling_general(&ls.coupling, &ls.optical_linewidths, g, n_th).map(|l| l.n_tot)),
    ));
    rows.push((
        "weak_coupling_by_angles".into(),
        gamma.clone().and_then(|g| {
            let angles = coupling_angles(&ls.coupling)?;
            limit_by_angles(&strengths.per_mode, &angles, g, n_th)
        }),
    ));
    let two = LimitInputs::two_mode_symmetric(&ls, n_th);
    let with_two = |f: &dyn Fn(&LimitInputs<f64>) -> f64| two.as_ref().map(f).map_err(Clone::clone);
    rows.push((
        "weak_coupling_two_mode".into(),
        with_two(&|i| weak_coupling_two_mode(i.gamma, i.strength, i.theta, i.splitting, n_th)),
    ));
    rows.push((
        "classical_two_mode".into(),
        with_two(&|i| classical_limit_two_mode(i.gamma, i.kappa, i.strength, i.theta, n_th)),
    ));
    rows.push(("classical_asymptote".into(), with_two(&|i| classical_limit_asymptote(i.gamma, i.kappa, i.theta, n_th))));

    let mut t = Table::new(["quantity", "value", "relative_to_numeric", "status"]);
    for (name, value) in rows {
        t.push(match value {
            Ok(v) => vec![name.into(), v.into(), ((v - numeric) / numeric).into(), "ok".into()],
            Err(e) => vec![name.into(), "n/a".into(), "n/a".into(), e.to_string().into()],
        });
    }
    let mut r = RunReport::new("limits", table);
    r.table("limits", t);

    let mut q = Table::new(["mode", "quantum_limit", "status"]);
    let wbar = ls.mean_mechanical_frequency();
    for j in 0..ls.mechanical_count() {
        let column: Vec<Cx<f64>> = ls.coupling.column(j).iter().copied().collect();
        q.push(match quantum_limit(j, &column, &ls.detunings, &ls.optical_linewidths, wbar) {
            Ok(l) => vec![((j + 1) as f64).into(), l.occupancy.into(), "ok".into()],
            Err(e) => vec![((j + 1) as f64).into(), "n/a".into(), e.to_string().into()],
        });
    }
    r.table("quantum_limit", q);
    r.scalar("n_th", n_th);
    r.scalar("n_tot", numeric);
    r.scalar("gamma_total", strengths.total);
    r.flags = flags(&ls);
    Ok(r)
}

fn constants(table: &toml::Table) -> Result<PhysicalConstants<f64>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        hbar: Option<f64>,
        k_b: Option<f64>,
    }
    let d = PhysicalConstants::default();
    Ok(match section::<Raw>(table, "constants")? {
        None => d,
        Some(c) => PhysicalConstants { hbar: c.hbar.unwrap_or(d.hbar), k_b: c.k_b.unwrap_or(d.k_b) },
    })
}

pub fn membrane(table: &toml::Table, opts: Options) -> Result<RunReport> {
    let allowed: Vec<&str> = SYSTEM_SECTIONS.iter().chain(MEMBRANE_SECTIONS).chain(EXTRA_SECTIONS).copied().collect();
    check_top_level(table, &allowed)?;
    let missing: Vec<&str> =
        ["membrane", "cavity", "spot", "drum_mode"].into_iter().filter(|s| !table.contains_key(*s)).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing sections: {}", missing.join(", "))));
    }
    let mut setup = membrane_setup::<f64>(table)?;
    if let Some(tol) = opts.tol {
        setup.quadrature.tolerance = tol;
    }
    let constants = constants(table)?;
    let drums = setup.drum_modes(&constants)?;
    let coupling = setup.coupling(&constants)?;
    let labels: Vec<String> = drums.iter().map(|d| format!("g_{}_{}", d.m, d.n)).collect();

    let mut signed = Table::new(std::iter::once("spot".to_owned()).chain(labels.iter().cloned()));
    let mut magnitude = signed.clone();
    for k in 0..setup.spots.len() {
        let row: Vec<f64> = (0..drums.len()).map(|j| coupling.entries[(k, j)].re).collect();
        let spot = Cell::from((k + 1) as f64);
        signed.push(std::iter::once(spot.clone()).chain(row.iter().map(|&g| g.into())).collect());
        magnitude.push(std::iter::once(spot).chain(row.iter().map(|&g| g.abs().into())).collect());
    }

    let mut modes = Table::new(["m", "n", "frequency", "frequency_hz", "x_zpf", "linewidth"]);
    for d in &drums {
        modes.push(vec![
            f64::from(d.m).into(),
            f64::from(d.n).into(),
            d.frequency.into(),
            (d.frequency / std::f64::consts::TAU).into(),
            d.zero_point_amplitude.into(),
            d.linewidth.into(),
        ]);
    }

    let mut overlaps = Table::new(["spot", "m", "n", "overlap", "intervals", "change"]);
    for (k, spot) in setup.spots.iter().enumerate() {
        for d in &drums {
            let o = gaussian_overlap(d, spot, &setup.quadrature)?;
            overlaps.push(vec![
                ((k + 1) as f64).into(),
                f64::from(d.m).into(),
                f64::from(d.n).into(),
                o.value.into(),
                (o.intervals as f64).into(),
                o.change.into(),
            ]);
        }
    }

    let mut r = RunReport::new("membrane", table);
    r.table("coupling", signed);
    r.table("coupling_magnitude", magnitude);
    r.table("modes", modes);
    r.table("overlaps", overlaps);
    let kappa = setup.optics.linewidth();
    r.scalar("kappa", kappa);
    r.scalar("kappa_over_2pi_hz", kappa / std::f64::consts::TAU);
    r.scalar("frequency_pull", setup.optics.frequency_pull());
    r.scalar("optical_frequency", setup.optics.optical_frequency());
    r.scalar("bending_parameter", setup.spec.bending_parameter());
    for d in &drums {
        r.scalar(format!("x_zpf_{}_{}", d.m, d.n), d.zero_point_amplitude);
        r.scalar(format!("frequency_hz_{}_{}", d.m, d.n), d.frequency / std::f64::consts::TAU);
    }
    Ok(r)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    /// "quasi_static" (default) or "dynamic".
    mode: Option<String>,
    /// 1-based drive order for a sequential protocol.
    order: Option<Vec<usize>>,
    strength: Option<f64>,
    steps: Option<usize>,
    simultaneous: Option<bool>,
    dwell: Option<f64>,
    dt: Option<f64>,
}

fn read_protocol(path: &Path) -> Result<DriveProtocol<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    DriveProtocol::from_toml(&text)
}

fn protocol_from_section(s: &ScheduleSection, drives: usize) -> Result<DriveProtocol<f64>> {
    let strength = s
        .strength
        .ok_or_else(|| Error::Config("[schedule]: strength is required without --protocol".into()))?;
    let steps = s.steps.unwrap_or(1);
    if s.simultaneous.unwrap_or(false) {
        if s.order.is_some() {
            return Err(Error::Config("[schedule]: order does not apply to a simultaneous ramp".into()));
        }
        return Ok(DriveProtocol::simultaneous(drives, strength, steps));
    }
    let order: Vec<usize> = match &s.order {
        None => (0..drives).collect(),
        Some(o) => o
            .iter()
            .map(|&k| {
                (1..=drives)
                    .contains(&k)
                    .then(|| k - 1)
                    .ok_or_else(|| Error::Config(format!("[schedule]: drive {k} out of range 1..{drives}")))
            })
            .collect::<Result<_>>()?,
    };
    Ok(DriveProtocol::sequential(drives, &order, strength, steps))
}

pub fn schedule(
    table: &toml::Table,
    _opts: Options,
    protocol: Option<&Path>,
    against: Option<&Path>,
) -> Result<RunReport> {
    let cfg = system(table)?;
    let s: Option<ScheduleSection> = section(table, "schedule")?;
    let drives = cfg.optical_count();
    let protocol = match (protocol, &s) {
        (Some(p), _) => read_protocol(p)?,
        (None, Some(s)) => protocol_from_section(s, drives)?,
        (None, None) => return Err(Error::Config("schedule needs --protocol or a [schedule] section".into())),
    };
    if protocol.drives() != drives {
        return Err(Error::Config(format!("protocol sets {} drives, config has {drives}", protocol.drives())));
    }
    let n = cfg.mechanical_count();
    let dynamic = match s.as_ref().and_then(|s| s.mode.as_deref()) {
        None | Some("quasi_static") => false,
        Some("dynamic") => true,
        Some(other) => {
            return Err(Error::Config(format!("[schedule]: unknown mode {other:?} (use \"quasi_static\" or \"dynamic\")")))
        }
    };

    let mut cols: Vec<String> = if dynamic { vec!["t".into()] } else { Vec::new() };
    cols.extend(["segment".into(), "step".into()]);
    cols.extend(numbered("gamma", drives));
    cols.push("n_tot".into());
    cols.extend(numbered("n", n));
    cols.extend(numbered("schmidt", n));
    let mut t = Table::new(cols);
    let row = |time: Option<f64>, seg: usize, step: usize, g: &[f64], total: f64, per: &[f64], sch: &[f64]| {
        let mut row: Vec<Cell> = time.map(Cell::from).into_iter().collect();
        row.extend([(seg as f64).into(), (step as f64).into()]);
        row.extend(g.iter().map(|&x| Cell::from(x)));
        row.push(total.into());
        row.extend(per.iter().map(|&x| Cell::from(x)));
        row.extend(sch.iter().map(|&x| Cell::from(x)));
        row
    };
    let finals: Vec<f64>;
    let final_total: f64;
    if dynamic {
        let sec = s.as_ref().expect("dynamic mode comes from the section");
        let dwell = sec.dwell.ok_or_else(|| Error::Config("[schedule]: dynamic mode needs dwell".into()))?;
        let dt = sec.dt.ok_or_else(|| Error::Config("[schedule]: dynamic mode needs dt".into()))?;
        let run = dynamic_run(&cfg, &protocol, dwell, dt)?;
        for i in 0..run.points.len() {
            let p = &run.points[i];
            t.push(row(Some(run.times[i]), p.segment, p.step, &p.strengths, run.phonons[i].total, &run.phonons[i].per_mode, &run.schmidt[i]));
        }
        finals = run.schmidt.last().cloned().unwrap_or_default();
        final_total = run.phonons.last().map_or(0.0, |p| p.total);
    } else {
        let run = quasi_static_run(&cfg, &protocol)?;
        for st in &run.steps {
            let p = &st.point;
            t.push(row(None, p.segment, p.step, &p.strengths, st.phonons.total, &st.phonons.per_mode, &st.schmidt));
        }
        let last = run.steps.last().expect("protocol has points");
        finals = last.schmidt.clone();
        final_total = last.phonons.total;
    }

    let mut r = RunReport::new("schedule", table);
    r.table("ramp", t);
    r.scalar("n_th", cfg.bath_occupancy()?);
    r.scalar("final_n_tot", final_total);
    for (j, &x) in finals.iter().enumerate() {
        r.scalar(format!("final_schmidt_{}", j + 1), x);
    }
    r.scalar("max_final_schmidt", finals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if let Some(path) = against {
        let other = read_protocol(path)?;
        let cmp = path_independence_check(&cfg, &protocol, &other)?;
        r.scalar("path_total_a", cmp.total_a);
        r.scalar("path_total_b", cmp.total_b);
        r.scalar("path_relative_difference", cmp.relative_difference);
        r.scalar("path_moment_difference", cmp.moment_difference);
    }
    r.flags = flags(&mmcool::schedule::system_at(&cfg, &protocol.final_strengths())?);
    Ok(r)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    /// "strength", "detuning" or "contrast".
    kind: String,
    range: [f64; 2],
    points: Option<usize>,
    /// 1-based drive whose detuning is swept.
    drive: Option<usize>,
    /// |g₁|² + |g₂|² held fixed in a contrast sweep.
    norm_sum: Option<f64>,
}

pub fn sweep(table: &toml::Table, opts: Options) -> Result<RunReport> {
    let cfg = system(table)?;
    let s: SweepSection = required(table, "sweep")?;
    let ls = LinearizedSystem::from_config(&cfg)?;
    let n_th = cfg.bath_occupancy()?;
    let points = opts.steps.or(s.points).unwrap_or(41);
    let [lo, hi] = s.range;
    let mut r = RunReport::new("sweep", table);
    let curve_table = |name: &str, c: &SweepCurve<f64>| {
        let mut t = Table::new([name, "n_tot"]);
        for (x, y) in c.parameter.iter().zip(&c.total) {
            t.push(vec![(*x).into(), (*y).into()]);
        }
        t
    };
    match s.kind.as_str() {
        "strength" => {
            let sw = strength_sweep(&ls, n_th, &geometric_grid(lo, hi, points))?;
            let mut cols = vec!["gamma".to_owned(), "n_tot".to_owned()];
            if sw.bright_dark.is_some() {
                cols.extend(["n_bright".into(), "n_dark".into()]);
            }
            let mut t = Table::new(cols);
            for (i, (g, p)) in sw.gammas.iter().zip(&sw.phonons).enumerate() {
                let mut row: Vec<Cell> = vec![(*g).into(), p.total.into()];
                if let Some(bd) = &sw.bright_dark {
                    row.extend([bd[i].0.into(), bd[i].1.into()]);
                }
                t.push(row);
            }
            r.table("curve", t);
        }
        "detuning" => {
            let k = s.drive.unwrap_or(1);
            if k == 0 {
                return Err(Error::Config("[sweep]: drive is 1-based".into()));
            }
            let c = detuning_sweep(&ls, n_th, k - 1, &linspace(lo, hi, points))?;
            r.table("curve", curve_table("detuning", &c));
            r.scalar("argmin", c.argmin);
            r.scalar("minimum", c.minimum);
            r.scalar("mean_mechanical_frequency", ls.mean_mechanical_frequency());
        }
        "contrast" => {
            let norm = s.norm_sum.ok_or_else(|| Error::Config("[sweep]: contrast sweep needs norm_sum".into()))?;
            let c = contrast_sweep(&ls, n_th, norm, &linspace(lo, hi, points))?;
            r.table("curve", curve_table("contrast", &c));
            r.scalar("argmin", c.argmin);
            r.scalar("minimum", c.minimum);
        }
        other => {
            return Err(Error::Config(format!(
                "[sweep]: unknown kind {other:?} (use \"strength\", \"detuning\" or \"contrast\")"
            )))
        }
    }
    r.scalar("n_th", n_th);
    r.flags = flags(&ls);
    Ok(r)
}
