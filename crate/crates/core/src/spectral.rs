//! Rotating-wave eigenanalysis and the linear algebra of coupling vectors:
//! dark subspace, dissipation matrix, bright/dark split, Schmidt basis,
//! coupling angles and exceptional points along Γ sweeps.
//!
//! Coefficient vectors `e` describe hybrid modes B = Σ_j e_j b_j. A hybrid mode
//! is dark for drive k when g*_k · e = 0.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linearize::LinearizedSystem;
use crate::scalar::{cabs, cabs2, cr, cx, Cx, Real};

/// Beam-splitter generator [[Δ − iK/2, G], [G†, Ω − iΓ_m/2]] of the
/// amplitudes (a, b).
pub fn rwa_dynamical_matrix<T: Real>(ls: &LinearizedSystem<T>) -> DMatrix<Cx<T>> {
    let m = ls.optical_count();
    let n = ls.mechanical_count();
    let half = T::lit(0.5);
    let mut h = DMatrix::from_element(m + n, m + n, cr(T::zero()));
    for k in 0..m {
        h[(k, k)] = cx(ls.detunings[k], -ls.optical_linewidths[k] * half);
        for j in 0..n {
            h[(k, m + j)] = ls.coupling[(k, j)];
            h[(m + j, k)] = ls.coupling[(k, j)].conj();
        }
    }
    for j in 0..n {
        h[(m + j, m + j)] = cx(ls.mechanical_frequencies[j], -ls.mechanical_linewidths[j] * half);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeLabel {
    OpticalLike,
    BrightLike,
    DarkLike,
}

impl ModeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeLabel::OpticalLike => "optical",
            ModeLabel::BrightLike => "bright",
            ModeLabel::DarkLike => "dark",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport<T: Real> {
    pub eigenvalues: Vec<Cx<T>>,
    /// Unit-norm right eigenvectors.
    pub eigenvectors: Vec<DVector<Cx<T>>>,
    pub photonic_weights: Vec<T>,
    pub phononic_weights: Vec<T>,
    /// Presentation labels: photonic weight above one half is optical-like;
    /// otherwise bright or dark by the mechanical part's overlap with the
    /// subspace the drives couple to.
    pub labels: Vec<ModeLabel>,
    pub optical_modes: usize,
    /// Branches whose matching to a previous sweep point was decided by the
    /// index-order tiebreak.
    pub ties: Vec<usize>,
}

impl<T: Real> SpectralReport<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    fn permuted(&self, order: &[usize]) -> Self {
        Self {
            eigenvalues: order.iter().map(|&i| self.eigenvalues[i]).collect(),
            eigenvectors: order.iter().map(|&i| self.eigenvectors[i].clone()).collect(),
            photonic_weights: order.iter().map(|&i| self.photonic_weights[i]).collect(),
            phononic_weights: order.iter().map(|&i| self.phononic_weights[i]).collect(),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            optical_modes: self.optical_modes,
            ties: Vec::new(),
        }
    }
}

/// Eigenvalues and unit right eigenvectors of a general complex matrix.
///
/// The matrix is shifted by its mean diagonal, reduced to complex Schur form,
/// and each eigenvector is recovered by back-substitution on the triangular
/// factor; near-zero pivots (defective or nearly defective spectra) are
/// replaced by a small multiple of the matrix norm.
pub fn eigen_decomposition<T: Real>(matrix: &DMatrix<Cx<T>>) -> Result<(Vec<Cx<T>>, Vec<DVector<Cx<T>>>)> {
    let d = matrix.nrows();
    if d != matrix.ncols() {
        return Err(Error::Precondition("eigen decomposition needs a square matrix".into()));
    }
    if d == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut shift = cr(T::zero());
    for i in 0..d {
        shift += matrix[(i, i)];
    }
    shift /= T::from_usize_lossy(d);
    let mut a = matrix.clone();
    for i in 0..d {
        a[(i, i)] -= shift;
    }
    let schur = nalgebra::Schur::try_new(a, T::default_epsilon(), 10_000)
        .ok_or_else(|| Error::Stability("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let tnorm = t.iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
    let smin = (T::default_epsilon() * tnorm).max(T::lit(1e-30));
    let mut values = Vec::with_capacity(d);
    let mut vectors = Vec::with_capacity(d);
    for i in 0..d {
        let lambda = t[(i, i)];
        let mut y = DVector::from_element(d, cr(T::zero()));
        y[i] = cr(T::one());
        for r in (0..i).rev() {
            let mut s = cr(T::zero());
            for c in r + 1..=i {
                s += t[(r, c)] * y[c];
            }
            let mut denom = t[(r, r)] - lambda;
            if cabs(denom) < smin {
                denom = cr(smin);
            }
            y[r] = -s / denom;
        }
        let mut v = &q * y;
        let nv = v.iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
        v /= cr(nv);
        values.push(lambda + shift);
        vectors.push(v);
    }
    Ok((values, vectors))
}

/// Eigenanalysis of an (M+N)×(M+N) dynamical matrix whose first
/// `optical_modes` coordinates are optical. Eigenpairs are ordered by real
/// part, then imaginary part; use [`match_branches`] to follow them along a
/// sweep.
pub fn eigenmodes<T: Real>(matrix: &DMatrix<Cx<T>>, optical_modes: usize) -> Result<SpectralReport<T>> {
    let d = matrix.nrows();
    if optical_modes > d {
        return Err(Error::Precondition("more optical modes than matrix rows".into()));
    }
    let (values, vectors) = eigen_decomposition(matrix)?;
    let m = optical_modes;
    let n = d - m;
    let g = matrix.view((0, m), (m, n)).into_owned();
    let dark = dark_basis_amplitudes(&g);
    let mut photonic = Vec::with_capacity(d);
    let mut phononic = Vec::with_capacity(d);
    let mut labels = Vec::with_capacity(d);
    for v in &vectors {
        let total = v.iter().fold(T::zero(), |s, z| s + cabs2(*z));
        let p = v.iter().take(m).fold(T::zero(), |s, z| s + cabs2(*z)) / total;
        photonic.push(p);
        phononic.push(T::one() - p);
        let label = if p > T::lit(0.5) {
            ModeLabel::OpticalLike
        } else {
            let mech = v.rows(m, n);
            let mech2 = mech.iter().fold(T::zero(), |s, z| s + cabs2(*z));
            let dark2 = dark.iter().fold(T::zero(), |s, u| s + cabs2(u.dotc(&mech)));
            if mech2 > T::zero() && dark2 >= T::lit(0.5) * mech2 {
                ModeLabel::DarkLike
            } else {
                ModeLabel::BrightLike
            }
        };
        labels.push(label);
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        x.re.partial_cmp(&y.re).unwrap_or(std::cmp::Ordering::Equal).then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    let report = SpectralReport {
        eigenvalues: values,
        eigenvectors: vectors,
        photonic_weights: photonic,
        phononic_weights: phononic,
        labels,
        optical_modes,
        ties: Vec::new(),
    };
    Ok(report.permuted(&order))
}

/// Mechanical amplitude patterns u with G u = 0 (uncoupled in the amplitude
/// picture); orthonormal.
fn dark_basis_amplitudes<T: Real>(g: &DMatrix<Cx<T>>) -> Vec<DVector<Cx<T>>> {
    null_space(&g.map(|z| z), 1e-10)
}

/// Orthonormal basis of {v : A v = 0} via a rank-revealing SVD with relative
/// singular-value threshold `rel`.
fn null_space<T: Real>(a: &DMatrix<Cx<T>>, rel: f64) -> Vec<DVector<Cx<T>>> {
    let n = a.ncols();
    if n == 0 {
        return Vec::new();
    }
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::from_element(rows, n, cr(T::zero()));
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = nalgebra::SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().fold(T::zero(), |m, &s| m.max(s));
    if smax == T::zero() {
        return (0..n)
            .map(|j| DVector::from_fn(n, |i, _| if i == j { cr(T::one()) } else { cr(T::zero()) }))
            .collect();
    }
    let thresh = T::lit(rel) * smax;
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < thresh {
            basis.push(v_t.row(i).transpose().map(|z| z.conj()));
        }
    }
    basis
}

/// Orthonormal basis of the dark coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkSubspace<T: Real> {
    pub basis: Vec<DVector<Cx<T>>>,
}

impl<T: Real> DarkSubspace<T> {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }
}

/// Coefficient vectors e with g*_k · e = 0 for every row k. Singular values
/// below 10⁻¹⁰ of the largest count as zero.
pub fn dark_subspace<T: Real>(g: &DMatrix<Cx<T>>) -> DarkSubspace<T> {
    DarkSubspace { basis: null_space(&g.map(|z| z.conj()), 1e-10) }
}

/// Numerical rank of the coupling matrix with the same threshold.
pub fn coupling_rank<T: Real>(g: &DMatrix<Cx<T>>) -> usize {
    g.ncols() - dark_subspace(g).dimension()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dissipation<T: Real> {
    /// P = 2 G† K⁻¹ G.
    pub total: DMatrix<Cx<T>>,
    /// P^(k)_{jj'} = 2 g*_kj g_kj' / κ_k.
    pub per_drive: Vec<DMatrix<Cx<T>>>,
}

pub fn dissipation_matrix<T: Real>(ls: &LinearizedSystem<T>) -> Dissipation<T> {
    dissipation_from(&ls.coupling, &ls.optical_linewidths)
}

pub fn dissipation_from<T: Real>(g: &DMatrix<Cx<T>>, kappas: &[T]) -> Dissipation<T> {
    let n = g.ncols();
    let two = T::lit(2.0);
    let per_drive: Vec<DMatrix<Cx<T>>> = (0..g.nrows())
        .map(|k| DMatrix::from_fn(n, n, |j, jp| g[(k, j)].conj() * g[(k, jp)] * (two / kappas[k])))
        .collect();
    let mut total = DMatrix::from_element(n, n, cr(T::zero()));
    for p in &per_drive {
        total += p;
    }
    Dissipation { total, per_drive }
}

/// Bright and dark coefficient vectors (e_+, e_−) of a two-component coupling
/// row: e_+ = g/|g|, e_− = (−g₂*, g₁*)/|g|.
pub fn bright_dark_split<T: Real>(row: &DVector<Cx<T>>) -> Result<(DVector<Cx<T>>, DVector<Cx<T>>)> {
    if row.len() != 2 {
        return Err(Error::Precondition(format!("bright/dark split needs two modes, got {}", row.len())));
    }
    let norm = (cabs2(row[0]) + cabs2(row[1])).sqrt();
    if norm == T::zero() {
        return Err(Error::NoCoupling(0));
    }
    let plus = row.map(|z| z / norm);
    let minus = DVector::from_vec(vec![-row[1].conj() / norm, row[0].conj() / norm]);
    Ok((plus, minus))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtBasis<T: Real> {
    /// N orthonormal vectors; the first `rank` come from the coupling rows in
    /// drive order, the rest complete the basis.
    pub vectors: Vec<DVector<Cx<T>>>,
    pub rank: usize,
    /// Rows that were linearly dependent on earlier rows.
    pub dependent_rows: Vec<usize>,
}

/// Gram–Schmidt over the coupling rows in drive order (modified, with one
/// reorthogonalization pass), completed to a full basis with unit vectors.
pub fn schmidt_basis<T: Real>(g: &DMatrix<Cx<T>>) -> SchmidtBasis<T> {
    let n = g.ncols();
    let mut vectors: Vec<DVector<Cx<T>>> = Vec::new();
    let mut dependent = Vec::new();
    let tol = T::lit(1e-10);
    let orthogonalize = |v: &mut DVector<Cx<T>>, basis: &[DVector<Cx<T>>]| {
        for _ in 0..2 {
            for e in basis {
                let p = e.dotc(v);
                *v -= e * p;
            }
        }
    };
    let norm = |v: &DVector<Cx<T>>| v.iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
    for k in 0..g.nrows() {
        let mut v: DVector<Cx<T>> = g.row(k).transpose();
        let n0 = norm(&v);
        orthogonalize(&mut v, &vectors);
        let n1 = norm(&v);
        if n0 == T::zero() || n1 <= tol * n0 || vectors.len() == n {
            dependent.push(k);
            continue;
        }
        vectors.push(v / cr(n1));
    }
    let rank = vectors.len();
    for j in 0..n {
        if vectors.len() == n {
            break;
        }
        let mut v = DVector::from_fn(n, |i, _| if i == j { cr(T::one()) } else { cr(T::zero()) });
        orthogonalize(&mut v, &vectors);
        let nv = norm(&v);
        if nv > T::lit(1e-6) {
            vectors.push(v / cr(nv));
        }
    }
    SchmidtBasis { vectors, rank, dependent_rows: dependent }
}

/// Cross angle θ ∈ [0, π/2] between the two rows of a 2×N coupling matrix.
pub fn coupling_angle<T: Real>(g: &DMatrix<Cx<T>>) -> Result<T> {
    if g.nrows() != 2 {
        return Err(Error::Precondition(format!("coupling angle needs two rows, got {}", g.nrows())));
    }
    let a: DVector<Cx<T>> = g.row(0).transpose();
    let b: DVector<Cx<T>> = g.row(1).transpose();
    let na = a.iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
    let nb = b.iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
    if na == T::zero() {
        return Err(Error::NoCoupling(0));
    }
    if nb == T::zero() {
        return Err(Error::NoCoupling(1));
    }
    let c = (cabs(a.dotc(&b)) / (na * nb)).min(T::one());
    Ok(c.acos())
}

/// Reciprocal vectors c_k: the columns of (conj G)⁻¹, so that g*_k · c_l = δ_kl.
pub fn reciprocal_vectors<T: Real>(g: &DMatrix<Cx<T>>) -> Result<Vec<DVector<Cx<T>>>> {
    let n = g.ncols();
    if g.nrows() != n {
        return Err(Error::Precondition(format!("square coupling matrix needed, got {}x{}", g.nrows(), n)));
    }
    let rank = coupling_rank(g);
    if rank < n {
        return Err(Error::DependentRows { rank, rows: n });
    }
    let inv = g
        .map(|z| z.conj())
        .try_inverse()
        .ok_or(Error::DependentRows { rank, rows: n })?;
    Ok((0..n).map(|k| inv.column(k).into_owned()).collect())
}

/// Angles θ_k with sin θ_k = 1/(|g_k| |c_k|) for a square invertible G.
pub fn coupling_angles<T: Real>(g: &DMatrix<Cx<T>>) -> Result<Vec<T>> {
    let c = reciprocal_vectors(g)?;
    Ok((0..g.nrows())
        .map(|k| {
            let gk = g.row(k).iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
            let ck = c[k].iter().fold(T::zero(), |s, z| s + cabs2(*z)).sqrt();
            (T::one() / (gk * ck)).min(T::one()).asin()
        })
        .collect())
}

/// Follows `next` from `prev` by maximal eigenvector overlap |⟨v_prev, v_next⟩|.
/// Candidates within 10⁻⁹ of the best overlap are ties, broken by index order
/// and recorded in `ties`.
pub fn match_branches<T: Real>(prev: &SpectralReport<T>, next: &SpectralReport<T>) -> SpectralReport<T> {
    let d = prev.len().min(next.len());
    let overlap = DMatrix::from_fn(d, d, |i, j| cabs(prev.eigenvectors[i].dotc(&next.eigenvectors[j])));
    let mut assigned_prev = vec![false; d];
    let mut assigned_next = vec![false; d];
    let mut order = vec![usize::MAX; d];
    let mut ties = Vec::new();
    let tie_tol = T::lit(1e-9);
    for _ in 0..d {
        let mut best = (usize::MAX, usize::MAX, -T::one());
        for i in (0..d).filter(|&i| !assigned_prev[i]) {
            for j in (0..d).filter(|&j| !assigned_next[j]) {
                if overlap[(i, j)] > best.2 + tie_tol {
                    best = (i, j, overlap[(i, j)]);
                }
            }
        }
        let (i, j, v) = best;
        let tied = (0..d).any(|jj| jj != j && !assigned_next[jj] && (overlap[(i, jj)] - v).abs() <= tie_tol);
        if tied {
            ties.push(i);
        }
        assigned_prev[i] = true;
        assigned_next[j] = true;
        order[i] = j;
    }
    let mut out = next.permuted(&order);
    out.ties = ties;
    out
}

/// Eigenanalysis along a Γ grid; points are computed in parallel and matched
/// sequentially afterwards.
#[derive(Debug, Clone)]
pub struct EigenSweep<T: Real> {
    pub gammas: Vec<T>,
    pub reports: Vec<SpectralReport<T>>,
}

pub fn gamma_sweep<T, F>(grid: &[T], optical_modes: usize, build: F) -> Result<EigenSweep<T>>
where
    T: Real,
    F: Fn(T) -> Result<DMatrix<Cx<T>>> + Sync,
{
    let raw: Vec<SpectralReport<T>> = grid
        .par_iter()
        .map(|&g| build(g).and_then(|h| eigenmodes(&h, optical_modes)))
        .collect::<Result<_>>()?;
    let mut reports: Vec<SpectralReport<T>> = Vec::with_capacity(raw.len());
    for r in raw {
        let matched = match reports.last() {
            Some(prev) => match_branches(prev, &r),
            None => r,
        };
        reports.push(matched);
    }
    Ok(EigenSweep { gammas: grid.to_vec(), reports })
}

/// Geometric grid of `points` values from `lo` to `hi`.
pub fn geometric_grid<T: Real>(lo: T, hi: T, points: usize) -> Vec<T> {
    if points < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * T::from_usize_lossy(i) / T::from_usize_lossy(points - 1)).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpKind {
    /// Two mechanical-like branches coalesce.
    MechanicalPair,
    /// A mechanical-like branch coalesces with an optical-like one.
    OpticalMechanical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceptionalPoint<T: Real> {
    pub gamma: T,
    pub eigenvalue: Cx<T>,
    /// Remaining eigenvalue distance after refinement.
    pub distance: T,
    /// Branch indices (sweep order) of the coalescing pair.
    pub branches: (usize, usize),
    /// |⟨v_a, v_b⟩| at the refined point; close to 1 at a true EP.
    pub eigenvector_overlap: T,
    /// Mean photonic weight of the pair at the refined point.
    pub photonic_weight: T,
    pub kind: EpKind,
    pub coalescent: bool,
}

/// Photonic weight below which a coalescing pair is classified as mechanical.
const MECHANICAL_PAIR_WEIGHT: f64 = 0.25;

/// Local minima of each branch pair's eigenvalue distance along the sweep,
/// refined by golden-section search in log Γ. A minimum is coalescent when
/// the refined distance is below `threshold` (10⁻⁶ κ by convention).
pub fn find_exceptional_points<T, F>(
    sweep: &EigenSweep<T>,
    threshold: T,
    build: F,
) -> Result<Vec<ExceptionalPoint<T>>>
where
    T: Real,
    F: Fn(T) -> Result<DMatrix<Cx<T>>> + Sync,
{
    let pts = sweep.reports.len();
    if pts < 3 {
        return Ok(Vec::new());
    }
    let d = sweep.reports[0].len();
    let optical = sweep.reports[0].optical_modes;
    let dist = |i: usize, a: usize, b: usize| cabs(sweep.reports[i].eigenvalues[a] - sweep.reports[i].eigenvalues[b]);
    let mut candidates = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            for i in 1..pts - 1 {
                let (l, c, r) = (dist(i - 1, a, b), dist(i, a, b), dist(i + 1, a, b));
                if c < l && c <= r {
                    candidates.push((i, a, b, l.max(r)));
                }
            }
        }
    }
    let found: Vec<Option<ExceptionalPoint<T>>> = candidates
        .par_iter()
        .map(|&(i, a, b, radius)| -> Result<Option<ExceptionalPoint<T>>> {
            let center = (sweep.reports[i].eigenvalues[a] + sweep.reports[i].eigenvalues[b]) * T::lit(0.5);
            let reach = radius * T::lit(2.0);
            let local = |gamma: T| -> Result<(T, usize, usize, Vec<Cx<T>>, Vec<DVector<Cx<T>>>)> {
                let (vals, vecs) = eigen_decomposition(&build(gamma)?)?;
                let mut best = (T::lit(f64::INFINITY), 0, 0);
                for p in 0..vals.len() {
                    for q in p + 1..vals.len() {
                        let mid = (vals[p] + vals[q]) * T::lit(0.5);
                        if cabs(mid - center) > reach {
                            continue;
                        }
                        let dd = cabs(vals[p] - vals[q]);
                        if dd < best.0 {
                            best = (dd, p, q);
                        }
                    }
                }
                Ok((best.0, best.1, best.2, vals, vecs))
            };
            let (mut lo, mut hi) = (sweep.gammas[i - 1].ln(), sweep.gammas[i + 1].ln());
            let ratio = (T::lit(5.0).sqrt() - T::one()) * T::lit(0.5);
            let mut x1 = hi - (hi - lo) * ratio;
            let mut x2 = lo + (hi - lo) * ratio;
            let mut f1 = local(x1.exp())?.0;
            let mut f2 = local(x2.exp())?.0;
            for _ in 0..90 {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - (hi - lo) * ratio;
                    f1 = local(x1.exp())?.0;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + (hi - lo) * ratio;
                    f2 = local(x2.exp())?.0;
                }
                if hi - lo <= T::default_epsilon() * T::lit(4.0) * hi.abs().max(T::one()) {
                    break;
                }
            }
            let gamma = ((lo + hi) * T::lit(0.5)).exp();
            let (distance, p, q, vals, vecs) = local(gamma)?;
            if !distance.is_finite() {
                return Ok(None);
            }
            let weight = |v: &DVector<Cx<T>>| {
                v.iter().take(optical).fold(T::zero(), |s, z| s + cabs2(*z))
                    / v.iter().fold(T::zero(), |s, z| s + cabs2(*z))
            };
            let w = (weight(&vecs[p]) + weight(&vecs[q])) * T::lit(0.5);
            let kind = if w < T::lit(MECHANICAL_PAIR_WEIGHT) { EpKind::MechanicalPair } else { EpKind::OpticalMechanical };
            Ok(Some(ExceptionalPoint {
                gamma,
                eigenvalue: (vals[p] + vals[q]) * T::lit(0.5),
                distance,
                branches: (a, b),
                eigenvector_overlap: cabs(vecs[p].dotc(&vecs[q])),
                photonic_weight: w,
                kind,
                coalescent: distance < threshold,
            }))
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<ExceptionalPoint<T>> = found.into_iter().flatten().collect();
    out.sort_by(|x, y| x.gamma.partial_cmp(&y.gamma).unwrap_or(std::cmp::Ordering::Equal));
    // The same coalescence can show up for several neighbouring grid minima.
    out.dedup_by(|x, y| x.coalescent == y.coalescent && (x.gamma / y.gamma - T::one()).abs() < T::lit(1e-6));
    Ok(out)
}
