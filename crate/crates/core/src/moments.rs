//! Second moments of the fluctuation operators: generator assembly, steady
//! state by dense solve and dynamics by classic RK4.
//!
//! Packed layout of the real state vector (dimension
//! M² + N² + M(M+1) + N(N+1) + 4MN):
//!
//! 1. ⟨a†_{k'} a_k⟩ (Hermitian): M real diagonal entries, then re/im pairs of
//!    the upper triangle k' < k in row-major order.
//! 2. ⟨b†_{j'} b_j⟩, same scheme.
//! 3. ⟨a_{k'} a_k⟩ (symmetric): re/im pairs of the upper triangle k' ≤ k.
//! 4. ⟨b_{j'} b_j⟩, same scheme.
//! 5. ⟨a†_k b_j⟩: re/im pairs, row-major over (k, j).
//! 6. ⟨a_k b_j⟩: re/im pairs, row-major over (k, j).
//!
//! Only the upper triangles are stored, so Hermitian and symmetric blocks
//! keep their structure exactly under any linear update.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linearize::LinearizedSystem;
use crate::scalar::{cabs, ci, cr, Cx, Real};

pub fn moment_dimension(m: usize, n: usize) -> usize {
    m * m + n * n + m * (m + 1) + n * (n + 1) + 4 * m * n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    m: usize,
    n: usize,
}

impl Layout {
    fn naa(&self) -> usize {
        0
    }
    fn nbb(&self) -> usize {
        self.m * self.m
    }
    fn saa(&self) -> usize {
        self.nbb() + self.n * self.n
    }
    fn sbb(&self) -> usize {
        self.saa() + self.m * (self.m + 1)
    }
    fn x(&self) -> usize {
        self.sbb() + self.n * (self.n + 1)
    }
    fn y(&self) -> usize {
        self.x() + 2 * self.m * self.n
    }
    fn dim(&self) -> usize {
        self.y() + 2 * self.m * self.n
    }
}

fn pack_hermitian<T: Real>(h: &DMatrix<Cx<T>>, out: &mut [T]) {
    let d = h.nrows();
    for i in 0..d {
        out[i] = h[(i, i)].re;
    }
    let mut p = d;
    for r in 0..d {
        for c in r + 1..d {
            out[p] = h[(r, c)].re;
            out[p + 1] = h[(r, c)].im;
            p += 2;
        }
    }
}

fn unpack_hermitian<T: Real>(d: usize, v: &[T]) -> DMatrix<Cx<T>> {
    let mut h = DMatrix::from_element(d, d, cr(T::zero()));
    for i in 0..d {
        h[(i, i)] = cr(v[i]);
    }
    let mut p = d;
    for r in 0..d {
        for c in r + 1..d {
            let z = Cx::new(v[p], v[p + 1]);
            h[(r, c)] = z;
            h[(c, r)] = z.conj();
            p += 2;
        }
    }
    h
}

fn pack_symmetric<T: Real>(s: &DMatrix<Cx<T>>, out: &mut [T]) {
    let d = s.nrows();
    let mut p = 0;
    for r in 0..d {
        for c in r..d {
            out[p] = s[(r, c)].re;
            out[p + 1] = s[(r, c)].im;
            p += 2;
        }
    }
}

fn unpack_symmetric<T: Real>(d: usize, v: &[T]) -> DMatrix<Cx<T>> {
    let mut s = DMatrix::from_element(d, d, cr(T::zero()));
    let mut p = 0;
    for r in 0..d {
        for c in r..d {
            let z = Cx::new(v[p], v[p + 1]);
            s[(r, c)] = z;
            s[(c, r)] = z;
            p += 2;
        }
    }
    s
}

fn pack_full<T: Real>(x: &DMatrix<Cx<T>>, out: &mut [T]) {
    let mut p = 0;
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            out[p] = x[(r, c)].re;
            out[p + 1] = x[(r, c)].im;
            p += 2;
        }
    }
}

fn unpack_full<T: Real>(rows: usize, cols: usize, v: &[T]) -> DMatrix<Cx<T>> {
    DMatrix::from_fn(rows, cols, |r, c| {
        let p = 2 * (r * cols + c);
        Cx::new(v[p], v[p + 1])
    })
}

/// All second moments of the optical (a) and mechanical (b) fluctuations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState<T: Real> {
    /// ⟨a†_{k'} a_k⟩ at (k', k).
    pub a_dag_a: DMatrix<Cx<T>>,
    /// ⟨b†_{j'} b_j⟩ at (j', j).
    pub b_dag_b: DMatrix<Cx<T>>,
    /// ⟨a_{k'} a_k⟩.
    pub a_a: DMatrix<Cx<T>>,
    /// ⟨b_{j'} b_j⟩.
    pub b_b: DMatrix<Cx<T>>,
    /// ⟨a†_k b_j⟩ at (k, j).
    pub a_dag_b: DMatrix<Cx<T>>,
    /// ⟨a_k b_j⟩ at (k, j).
    pub a_b: DMatrix<Cx<T>>,
}

/// Mechanical occupations n_j and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct PhononNumbers<T: Real> {
    pub per_mode: Vec<T>,
    pub total: T,
}

impl<T: Real> MomentState<T> {
    pub fn zeros(m: usize, n: usize) -> Self {
        let z = |r, c| DMatrix::from_element(r, c, cr(T::zero()));
        Self { a_dag_a: z(m, m), b_dag_b: z(n, n), a_a: z(m, m), b_b: z(n, n), a_dag_b: z(m, n), a_b: z(m, n) }
    }

    /// Empty optical modes and mechanical modes in thermal states.
    pub fn thermal(m: usize, n: usize, occupancies: &[T]) -> Self {
        let mut s = Self::zeros(m, n);
        for (j, &o) in occupancies.iter().enumerate().take(n) {
            s.b_dag_b[(j, j)] = cr(o);
        }
        s
    }

    pub fn optical_count(&self) -> usize {
        self.a_dag_a.nrows()
    }

    pub fn mechanical_count(&self) -> usize {
        self.b_dag_b.nrows()
    }

    pub fn dimension(&self) -> usize {
        moment_dimension(self.optical_count(), self.mechanical_count())
    }

    fn layout(&self) -> Layout {
        Layout { m: self.optical_count(), n: self.mechanical_count() }
    }

    pub fn pack(&self) -> DVector<T> {
        let l = self.layout();
        let mut v = DVector::zeros(l.dim());
        let s = v.as_mut_slice();
        pack_hermitian(&self.a_dag_a, &mut s[l.naa()..l.nbb()]);
        pack_hermitian(&self.b_dag_b, &mut s[l.nbb()..l.saa()]);
        pack_symmetric(&self.a_a, &mut s[l.saa()..l.sbb()]);
        pack_symmetric(&self.b_b, &mut s[l.sbb()..l.x()]);
        pack_full(&self.a_dag_b, &mut s[l.x()..l.y()]);
        pack_full(&self.a_b, &mut s[l.y()..l.dim()]);
        v
    }

    pub fn unpack(m: usize, n: usize, v: &[T]) -> Result<Self> {
        let l = Layout { m, n };
        if v.len() != l.dim() {
            return Err(Error::Precondition(format!(
                "packed moment vector has length {} but M={m}, N={n} needs {}",
                v.len(),
                l.dim()
            )));
        }
        Ok(Self {
            a_dag_a: unpack_hermitian(m, &v[l.naa()..l.nbb()]),
            b_dag_b: unpack_hermitian(n, &v[l.nbb()..l.saa()]),
            a_a: unpack_symmetric(m, &v[l.saa()..l.sbb()]),
            b_b: unpack_symmetric(n, &v[l.sbb()..l.x()]),
            a_dag_b: unpack_full(m, n, &v[l.x()..l.y()]),
            a_b: unpack_full(m, n, &v[l.y()..l.dim()]),
        })
    }

    pub fn phonon_numbers(&self) -> PhononNumbers<T> {
        phonon_numbers(self)
    }

    /// Largest deviation of the Hermitian blocks from Hermiticity and of the
    /// pair blocks from symmetry.
    pub fn structure_defect(&self) -> T {
        let mut worst = T::zero();
        for (h, conj) in [(&self.a_dag_a, true), (&self.b_dag_b, true), (&self.a_a, false), (&self.b_b, false)] {
            for r in 0..h.nrows() {
                for c in 0..h.ncols() {
                    let mirror = if conj { h[(c, r)].conj() } else { h[(c, r)] };
                    worst = worst.max(cabs(h[(r, c)] - mirror));
                }
            }
        }
        worst
    }
}

pub fn phonon_numbers<T: Real>(m: &MomentState<T>) -> PhononNumbers<T> {
    let per_mode: Vec<T> = (0..m.mechanical_count()).map(|j| m.b_dag_b[(j, j)].re).collect();
    let total = per_mode.iter().fold(T::zero(), |s, &v| s + v);
    PhononNumbers { per_mode, total }
}

/// Occupation ñ = Σ e*_{j'} e_{j''} ⟨b†_{j'} b_{j''}⟩ of the hybrid mode with
/// coefficient vector `e`.
pub fn hybrid_occupancy<T: Real>(m: &MomentState<T>, e: &DVector<Cx<T>>) -> Result<T> {
    let n = m.mechanical_count();
    if e.len() != n {
        return Err(Error::Precondition(format!("coefficient vector has {} entries for {n} modes", e.len())));
    }
    let norm = e.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
    if (norm - T::one()).abs() > T::tol(1e-12) {
        return Err(Error::Normalization(norm.as_f64()));
    }
    let mut acc = cr(T::zero());
    for jp in 0..n {
        for jpp in 0..n {
            acc += e[jp].conj() * e[jpp] * m.b_dag_b[(jp, jpp)];
        }
    }
    Ok(acc.re)
}

/// Linear generator dM/dt = A·M + c of the packed moment vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGenerator<T: Real> {
    pub drift: DMatrix<T>,
    pub source: DVector<T>,
    pub optical: usize,
    pub mechanical: usize,
}

impl<T: Real> MomentGenerator<T> {
    pub fn dimension(&self) -> usize {
        self.source.len()
    }

    /// Applies the generator to a state.
    pub fn apply(&self, m: &MomentState<T>) -> Result<MomentState<T>> {
        let v = &self.drift * m.pack() + &self.source;
        MomentState::unpack(self.optical, self.mechanical, v.as_slice())
    }
}

/// Right-hand side of the six moment equation families. The constant
/// sources (γ_j n_th in ⟨b†b⟩, −i g_kj in ⟨ab⟩) are included only when
/// `with_source` is set.
pub fn moment_derivative<T: Real>(
    ls: &LinearizedSystem<T>,
    n_th: T,
    s: &MomentState<T>,
    with_source: bool,
) -> MomentState<T> {
    let m = ls.optical_count();
    let n = ls.mechanical_count();
    let i = ci::<T>();
    let half = T::lit(0.5);
    let g = &ls.coupling;
    let (dl, kp) = (&ls.detunings, &ls.optical_linewidths);
    let (om, gm) = (&ls.mechanical_frequencies, &ls.mechanical_linewidths);
    let (naa, nbb, saa, sbb, x, y) = (&s.a_dag_a, &s.b_dag_b, &s.a_a, &s.b_b, &s.a_dag_b, &s.a_b);
    let mut d = MomentState::zeros(m, n);

    for jp in 0..n {
        for jj in 0..n {
            let mut v = Cx::new(-(gm[jp] + gm[jj]) * half, om[jp] - om[jj]) * nbb[(jp, jj)];
            if with_source && jp == jj {
                v += cr(gm[jj] * n_th);
            }
            let mut acc_out = cr(T::zero());
            let mut acc_in = cr(T::zero());
            for k in 0..m {
                acc_out += g[(k, jj)].conj() * x[(k, jp)].conj() + g[(k, jj)] * y[(k, jp)].conj();
                acc_in += g[(k, jp)].conj() * y[(k, jj)] + g[(k, jp)] * x[(k, jj)];
            }
            d.b_dag_b[(jp, jj)] = v - i * acc_out + i * acc_in;

            let mut v = Cx::new(-(gm[jp] + gm[jj]) * half, -(om[jp] + om[jj])) * sbb[(jp, jj)];
            let mut acc = cr(T::zero());
            for k in 0..m {
                acc += g[(k, jj)].conj() * y[(k, jp)] + g[(k, jj)] * x[(k, jp)];
                acc += g[(k, jp)].conj() * y[(k, jj)] + g[(k, jp)] * x[(k, jj)];
            }
            v -= i * acc;
            d.b_b[(jp, jj)] = v;
        }
    }

    for kp_ in 0..m {
        for k in 0..m {
            let v = Cx::new(-(kp[kp_] + kp[k]) * half, dl[kp_] - dl[k]) * naa[(kp_, k)];
            let mut acc_out = cr(T::zero());
            let mut acc_in = cr(T::zero());
            for j in 0..n {
                acc_out += g[(k, j)] * (x[(kp_, j)] + y[(kp_, j)].conj());
                acc_in += g[(kp_, j)].conj() * (y[(k, j)] + x[(k, j)].conj());
            }
            d.a_dag_a[(kp_, k)] = v - i * acc_out + i * acc_in;

            let v = Cx::new(-(kp[kp_] + kp[k]) * half, -(dl[kp_] + dl[k])) * saa[(kp_, k)];
            let mut acc = cr(T::zero());
            for j in 0..n {
                acc += g[(k, j)] * (y[(kp_, j)] + x[(kp_, j)].conj());
                acc += g[(kp_, j)] * (y[(k, j)] + x[(k, j)].conj());
            }
            d.a_a[(kp_, k)] = v - i * acc;
        }
    }

    for k in 0..m {
        for j in 0..n {
            let rate = -(gm[j] + kp[k]) * half;
            let mut vx = Cx::new(rate, dl[k] - om[j]) * x[(k, j)];
            let mut vy = Cx::new(rate, -dl[k] - om[j]) * y[(k, j)];
            let mut ax = cr(T::zero());
            let mut ay = cr(T::zero());
            for k2 in 0..m {
                ax += g[(k2, j)].conj() * naa[(k, k2)] + g[(k2, j)] * saa[(k2, k)].conj();
                ay += g[(k2, j)].conj() * saa[(k2, k)] + g[(k2, j)] * naa[(k2, k)];
            }
            let mut bx = cr(T::zero());
            let mut by = cr(T::zero());
            for j2 in 0..n {
                let b = sbb[(j2, j)] + nbb[(j2, j)];
                bx += g[(k, j2)].conj() * b;
                by += g[(k, j2)] * b;
            }
            vx += -i * ax + i * bx;
            vy += -i * ay - i * by;
            if with_source {
                vy -= i * g[(k, j)];
            }
            d.a_dag_b[(k, j)] = vx;
            d.a_b[(k, j)] = vy;
        }
    }
    d
}

/// Assembles A column by column from the moment equations; no rotating-wave
/// approximation is made.
pub fn build_generator<T: Real>(ls: &LinearizedSystem<T>, n_th: T) -> MomentGenerator<T> {
    let m = ls.optical_count();
    let n = ls.mechanical_count();
    let dim = moment_dimension(m, n);
    let mut drift = DMatrix::zeros(dim, dim);
    let mut unit = vec![T::zero(); dim];
    for c in 0..dim {
        unit[c] = T::one();
        let state = MomentState::unpack(m, n, &unit).expect("dimension matches layout");
        let d = moment_derivative(ls, n_th, &state, false).pack();
        drift.set_column(c, &d);
        unit[c] = T::zero();
    }
    let source = moment_derivative(ls, n_th, &MomentState::zeros(m, n), true).pack();
    MomentGenerator { drift, source, optical: m, mechanical: n }
}

/// Solves A·M + c = 0. A solution with a negative occupancy cannot be a
/// state: the fluctuations grow instead of settling.
pub fn steady_state_moments<T: Real>(gen: &MomentGenerator<T>) -> Result<MomentState<T>> {
    let (x, _) = solve_steady(gen)?;
    let state = MomentState::unpack(gen.optical, gen.mechanical, x.as_slice())?;
    let diag = |m: &DMatrix<Cx<T>>| (0..m.nrows()).map(|i| m[(i, i)].re).collect::<Vec<T>>();
    let (photons, phonons) = (diag(&state.a_dag_a), diag(&state.b_dag_b));
    let scale = photons.iter().chain(&phonons).fold(T::one(), |s, &v| s.max(v.abs()));
    let floor = -T::tol(1e-8) * scale;
    let negative = |v: &[T], kind: &str| {
        v.iter().position(|&n| n < floor).map(|i| {
            Error::Stability(format!(
                "steady solution has negative {kind} occupancy {:e} in mode {}; the system is unstable",
                v[i].as_f64(),
                i + 1
            ))
        })
    };
    match negative(&photons, "photon").or_else(|| negative(&phonons, "phonon")) {
        Some(e) => Err(e),
        None => Ok(state),
    }
}

/// Steady state of `ls` in a bath of occupancy `n_th`.
pub fn steady_state<T: Real>(ls: &LinearizedSystem<T>, n_th: T) -> Result<MomentState<T>> {
    steady_state_moments(&build_generator(ls, n_th))
}

/// Packed steady state plus the 1-norm condition estimate of A.
pub fn solve_steady<T: Real>(gen: &MomentGenerator<T>) -> Result<(DVector<T>, T)> {
    let a = &gen.drift;
    let dim = gen.dimension();
    let c = &gen.source;
    let lu = a.clone().lu();
    let rhs = -c;
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Stability("drift matrix is singular (undamped mode)".into()))?;
    let cond = condition_estimate(a, &lu);
    let limit = T::lit(1e14).min(T::one() / (T::default_epsilon() * T::lit(10.0)));
    if !cond.is_finite() || cond > limit {
        return Err(Error::Stability(format!(
            "drift matrix is ill-conditioned (condition estimate {:e}); an undamped dark mode or an instability",
            cond.as_f64()
        )));
    }
    let c_norm = c.norm();
    if c_norm == T::zero() {
        return Ok((DVector::zeros(dim), cond));
    }
    let tol = T::tol(1e-10);
    let mut resid = (a * &x + c).norm() / c_norm;
    for _ in 0..2 {
        if resid < tol {
            break;
        }
        let r = a * &x + c;
        if let Some(dx) = lu.solve(&(-r)) {
            x += dx;
        }
        resid = (a * &x + c).norm() / c_norm;
    }
    if !(resid < tol) {
        return Err(Error::Stability(format!("steady-state residual {:e} above tolerance", resid.as_f64())));
    }
    Ok((x, cond))
}

/// Hager's estimate of ‖A‖₁‖A⁻¹‖₁ from an existing LU factorization.
pub fn condition_estimate<T: Real>(a: &DMatrix<T>, lu: &nalgebra::linalg::LU<T, nalgebra::Dyn, nalgebra::Dyn>) -> T {
    let dim = a.nrows();
    if dim == 0 {
        return T::one();
    }
    let norm1 = (0..dim).map(|c| a.column(c).iter().fold(T::zero(), |s, v| s + v.abs())).fold(T::zero(), T::max);
    let l = lu.l();
    let u = lu.u();
    let p = lu.p();
    let solve_t = |b: &DVector<T>| -> Option<DVector<T>> {
        let w = u.tr_solve_upper_triangular(b)?;
        let mut v = l.tr_solve_lower_triangular(&w)?;
        p.inv_permute_rows(&mut v);
        Some(v)
    };
    let mut x = DVector::from_element(dim, T::one() / T::from_usize_lossy(dim));
    let mut est = T::zero();
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return T::lit(f64::INFINITY) };
        est = y.iter().fold(T::zero(), |s, v| s + v.abs());
        let xi = y.map(|v| if v >= T::zero() { T::one() } else { -T::one() });
        let Some(z) = solve_t(&xi) else { break };
        let (jmax, zmax) = z.iter().enumerate().fold((0, T::zero()), |(bj, bv), (j, v)| {
            if v.abs() > bv {
                (j, v.abs())
            } else {
                (bj, bv)
            }
        });
        if zmax <= z.dot(&x) {
            break;
        }
        x.fill(T::zero());
        x[jmax] = T::one();
    }
    norm1 * est
}

/// Default RK4 step 0.01 / max(κ_k, ω_j).
pub fn default_time_step<T: Real>(ls: &LinearizedSystem<T>) -> T {
    let fastest = ls
        .optical_linewidths
        .iter()
        .chain(ls.mechanical_frequencies.iter())
        .fold(T::zero(), |a, &b| a.max(b.abs()));
    T::lit(0.01) / fastest
}

/// Power-iteration estimate of the spectral norm.
pub fn spectral_norm_estimate<T: Real>(a: &DMatrix<T>) -> T {
    let dim = a.ncols();
    if dim == 0 {
        return T::zero();
    }
    let mut v = DVector::from_fn(dim, |i, _| T::one() + T::lit(0.01) * T::from_usize_lossy(i % 7));
    v /= v.norm();
    let mut sigma = T::zero();
    for _ in 0..60 {
        let w = a.tr_mul(&(a * &v));
        let nw = w.norm();
        if nw == T::zero() {
            return T::zero();
        }
        let next = nw.sqrt();
        v = w / nw;
        if (next - sigma).abs() <= T::lit(1e-6) * next {
            sigma = next;
            break;
        }
        sigma = next;
    }
    sigma
}

/// Stability bound on ‖A‖·dt for the classic RK4 step.
pub const RK4_STABILITY_BOUND: f64 = 2.7;

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions<T: Real> {
    pub dt: T,
    pub t_end: T,
    /// Keep every `sample_every`-th step (the final state is always kept).
    pub sample_every: usize,
}

impl<T: Real> EvolveOptions<T> {
    pub fn new(dt: T, t_end: T) -> Self {
        Self { dt, t_end, sample_every: 1 }
    }
}

/// Sampled RK4 trajectory stored as packed vectors.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub packed: Vec<DVector<T>>,
    pub optical: usize,
    pub mechanical: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> MomentState<T> {
        MomentState::unpack(self.optical, self.mechanical, self.packed[i].as_slice()).expect("stored with matching layout")
    }

    pub fn last_state(&self) -> MomentState<T> {
        self.state(self.len() - 1)
    }

    /// n_j(t) and n_tot(t) at every sample.
    pub fn phonon_series(&self) -> Vec<PhononNumbers<T>> {
        let off = Layout { m: self.optical, n: self.mechanical }.nbb();
        self.packed
            .iter()
            .map(|v| {
                let per_mode: Vec<T> = (0..self.mechanical).map(|j| v[off + j]).collect();
                let total = per_mode.iter().fold(T::zero(), |s, &x| s + x);
                PhononNumbers { per_mode, total }
            })
            .collect()
    }
}

/// Integrates dM/dt = A·M + c with the classic fourth-order Runge–Kutta
/// scheme and a fixed step.
pub fn evolve_moments<T: Real>(
    gen: &MomentGenerator<T>,
    m0: &MomentState<T>,
    opts: &EvolveOptions<T>,
) -> Result<Trajectory<T>> {
    if !(opts.dt > T::zero()) || !opts.dt.is_finite() {
        return Err(Error::Domain("time step must be positive".into()));
    }
    if !(opts.t_end >= T::zero()) {
        return Err(Error::Domain("end time must be non-negative".into()));
    }
    if m0.optical_count() != gen.optical || m0.mechanical_count() != gen.mechanical {
        return Err(Error::Precondition("initial state does not match generator dimensions".into()));
    }
    let a = &gen.drift;
    let c = &gen.source;
    let norm = spectral_norm_estimate(a);
    if norm * opts.dt >= T::lit(RK4_STABILITY_BOUND) {
        return Err(Error::StepSize(format!(
            "‖A‖·dt = {:.3} exceeds the RK4 bound {RK4_STABILITY_BOUND}",
            (norm * opts.dt).as_f64()
        )));
    }
    let steps = (opts.t_end / opts.dt).round().to_usize().unwrap_or(0);
    let every = opts.sample_every.max(1);
    let dt = opts.dt;
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let mut x = m0.pack();
    let mut times = vec![T::zero()];
    let mut packed = vec![x.clone()];
    let bound = T::lit(1e10) * (T::one() + x.norm() + c.norm() * opts.t_end.max(T::one()));
    let f = |v: &DVector<T>| a * v + c;
    for step in 1..=steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt * half)));
        let k3 = f(&(&x + &k2 * (dt * half)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * T::lit(2.0) + k3 * T::lit(2.0) + k4) * (dt * sixth);
        if step % 64 == 0 || step == steps {
            let nx = x.norm();
            if !nx.is_finite() || nx > bound {
                return Err(Error::StepSize(format!("state norm grew to {:e} at step {step}", nx.as_f64())));
            }
        }
        if step % every == 0 || step == steps {
            times.push(dt * T::from_usize_lossy(step));
            packed.push(x.clone());
        }
    }
    Ok(Trajectory { times, packed, optical: gen.optical, mechanical: gen.mechanical })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dual_drive_config;

    fn random_state(m: usize, n: usize, seed: u64) -> MomentState<f64> {
        let dim = moment_dimension(m, n);
        let mut s = seed;
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        MomentState::unpack(m, n, &v).unwrap()
    }

    #[test]
    fn dimension_formula() {
        assert_eq!(moment_dimension(2, 2), 36);
        assert_eq!(moment_dimension(1, 1), 10);
        assert_eq!(moment_dimension(3, 3), 78);
        assert_eq!(moment_dimension(12, 10), 990);
    }

    #[test]
    fn pack_round_trip() {
        for (m, n) in [(1, 1), (2, 3), (3, 2)] {
            let s = random_state(m, n, 7);
            assert_eq!(s.pack().len(), moment_dimension(m, n));
            assert_eq!(MomentState::unpack(m, n, s.pack().as_slice()).unwrap(), s);
            assert_eq!(s.structure_defect(), 0.0);
        }
    }

    #[test]
    fn zero_coupling_relaxes_to_thermal() {
        let mut ls = LinearizedSystem::direct(&dual_drive_config());
        ls.coupling.fill(cr(0.0));
        let gen = build_generator(&ls, 1e4);
        let st = steady_state_moments(&gen).unwrap();
        let p = st.phonon_numbers();
        assert!(p.per_mode.iter().all(|&v| (v - 1e4).abs() < 1e-6));
        assert!(st.a_dag_a.iter().all(|z| cabs(*z) < 1e-9));
        // Mechanical diagonal entries decay at γ_j.
        let l = Layout { m: 2, n: 2 };
        assert!((gen.drift[(l.nbb(), l.nbb())] + 1e-4).abs() < 1e-18);
        // Decoupled: no entry links the optical and mechanical number blocks.
        for r in l.naa()..l.nbb() {
            for c in l.nbb()..l.saa() {
                assert_eq!(gen.drift[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn cross_block_diagonal_coefficient() {
        let ls = LinearizedSystem::direct(&dual_drive_config());
        let gen = build_generator(&ls, 1.0);
        let l = Layout { m: 2, n: 2 };
        // Re and Im parts of ⟨a†_1 b_2⟩ at packed positions x + 2(0·2+1).
        let p = l.x() + 2;
        let rate = -(1e-4 + 1.0) / 2.0;
        let freq = 20.0 - 20.0005;
        assert!((gen.drift[(p, p)] - rate).abs() < 1e-15);
        assert!((gen.drift[(p + 1, p + 1)] - rate).abs() < 1e-15);
        assert!((gen.drift[(p, p + 1)] + freq).abs() < 1e-15);
        assert!((gen.drift[(p + 1, p)] - freq).abs() < 1e-15);
    }

    #[test]
    fn generator_matches_direct_derivative() {
        let ls = LinearizedSystem::direct(&dual_drive_config());
        let gen = build_generator(&ls, 3.0);
        let s = random_state(2, 2, 11);
        let via_a = gen.apply(&s).unwrap();
        let direct = moment_derivative(&ls, 3.0, &s, true);
        let diff = (via_a.pack() - direct.pack()).amax();
        assert!(diff < 1e-12);
    }

    #[test]
    fn hybrid_occupancy_checks_normalization() {
        let s = MomentState::thermal(1, 2, &[3.0, 5.0]);
        let e = DVector::from_vec(vec![cr(1.0), cr(1.0)]);
        assert!(matches!(hybrid_occupancy(&s, &e), Err(Error::Normalization(_))));
        let e1 = DVector::from_vec(vec![cr(0.0), cr(1.0)]);
        assert_eq!(hybrid_occupancy(&s, &e1).unwrap(), 5.0);
    }

    #[test]
    fn steady_state_is_a_fixed_point_of_rk4() {
        let ls = LinearizedSystem::direct(&dual_drive_config());
        let gen = build_generator(&ls, 100.0);
        let st = steady_state_moments(&gen).unwrap();
        let traj = evolve_moments(&gen, &st, &EvolveOptions { dt: 0.01, t_end: 5.0, sample_every: 50 }).unwrap();
        let x0 = st.pack();
        for v in &traj.packed {
            assert!((v - &x0).amax() <= 1e-9 * x0.amax());
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let ls = LinearizedSystem::direct(&dual_drive_config());
        let gen = build_generator(&ls, 1.0);
        let st = MomentState::thermal(2, 2, &[1.0, 1.0]);
        let r = evolve_moments(&gen, &st, &EvolveOptions::new(0.5, 1.0));
        assert!(matches!(r, Err(Error::StepSize(_))));
    }

    #[test]
    fn undamped_dark_mode_is_a_stability_error() {
        let mut cfg = dual_drive_config();
        for mm in &mut cfg.mechanical {
            mm.linewidth = 0.0;
            mm.frequency = 20.0;
        }
        let mut ls = LinearizedSystem::direct(&cfg);
        ls.coupling = ls.coupling.clone().remove_row(1).insert_row(1, cr(0.0));
        let r = steady_state(&ls, 10.0);
        assert!(matches!(r, Err(Error::Stability(_))), "{r:?}");
    }

    #[test]
    fn blue_detuned_drive_is_a_stability_error() {
        let mut cfg = dual_drive_config();
        for o in &mut cfg.optical {
            o.detuning = -20.0;
        }
        let ls = LinearizedSystem::direct(&cfg).with_strengths(&[0.25, 0.25]).unwrap();
        let r = steady_state(&ls, 1e4);
        assert!(matches!(r, Err(Error::Stability(_))), "{r:?}");
    }

    #[test]
    fn transposed_solve_matches_explicit_transpose() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, -1.0, 4.0, 3.0, 0.5, 2.0]);
        let lu = a.clone().lu();
        let exact = {
            let inv = a.clone().try_inverse().unwrap();
            let n1 = |m: &DMatrix<f64>| (0..3).map(|c| m.column(c).abs().sum()).fold(0.0, f64::max);
            n1(&a) * n1(&inv)
        };
        let est = condition_estimate(&a, &lu);
        assert!(est <= exact * (1.0 + 1e-12) && est >= exact / 3.0, "{est} vs {exact}");
    }
}
