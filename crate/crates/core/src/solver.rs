//! Least-squares finite-difference solves and the boundary value experiments
//! built on them.

use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::TestField;
use crate::geometry::{ArcName, Point, Rect, Region};
use crate::grid::{Grid, GridField};
use crate::operators::{Form, OperatorSpec};

pub type BoundaryFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Boundary condition on one arc.
#[derive(Clone)]
pub enum Condition {
    Dirichlet(BoundaryFn),
    /// `u_y = g`; horizontal arcs only.
    NeumannY(BoundaryFn),
    None,
}

impl Condition {
    pub fn dirichlet(g: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Condition {
        Condition::Dirichlet(Arc::new(g))
    }

    pub fn neumann_y(g: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Condition {
        Condition::NeumannY(Arc::new(g))
    }

    pub fn zero() -> Condition {
        Condition::dirichlet(|_| 0.0)
    }
}

impl std::fmt::Debug for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Condition::Dirichlet(_) => "Dirichlet",
            Condition::NeumannY(_) => "NeumannY",
            Condition::None => "None",
        })
    }
}

/// One condition per boundary arc.
#[derive(Clone, Debug, Default)]
pub struct BoundaryData {
    entries: Vec<(ArcName, Condition)>,
}

impl BoundaryData {
    pub fn new() -> BoundaryData {
        BoundaryData::default()
    }

    /// Sets (or replaces) the condition on `name`.
    pub fn with(mut self, name: ArcName, cond: Condition) -> BoundaryData {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, cond));
        self
    }

    pub fn get(&self, name: ArcName) -> Option<&Condition> {
        self.entries.iter().find(|(n, _)| *n == name).map(|(_, c)| c)
    }

    /// Every arc of `region` has an entry, no entry names a missing arc, and
    /// only characteristic arcs are left free.
    pub fn validate(&self, region: &Region) -> Result<()> {
        let arcs = region.arcs();
        for arc in &arcs {
            match self.get(arc.name) {
                None => return Err(LabError::InvalidInput(format!("no condition for arc {:?}", arc.name))),
                Some(Condition::None) if !arc.name.is_characteristic() => {
                    return Err(LabError::InvalidInput(format!("arc {:?} needs a condition", arc.name)))
                }
                Some(Condition::NeumannY(_)) => {
                    let y0 = arc.vertices[0].y;
                    if arc.vertices.iter().any(|p| (p.y - y0).abs() > 1e-12) {
                        return Err(LabError::InvalidInput(format!("u_y data on non-horizontal arc {:?}", arc.name)));
                    }
                }
                _ => {}
            }
        }
        for (name, _) in &self.entries {
            if !arcs.iter().any(|a| a.name == *name) {
                return Err(LabError::InvalidInput(format!("region has no arc {name:?}")));
            }
        }
        Ok(())
    }

    /// `g` on `L1`, `L2`, `L3`, nothing on the characteristics.
    pub fn open_dirichlet(g: BoundaryFn) -> BoundaryData {
        BoundaryData::new()
            .with(ArcName::L1, Condition::Dirichlet(g.clone()))
            .with(ArcName::L2, Condition::Dirichlet(g.clone()))
            .with(ArcName::L3, Condition::Dirichlet(g))
            .with(ArcName::Gamma1, Condition::None)
            .with(ArcName::Gamma2, Condition::None)
    }

    /// Open data plus `g_char` on both characteristics.
    pub fn closed(g: BoundaryFn, g_char: BoundaryFn) -> BoundaryData {
        BoundaryData::open_dirichlet(g)
            .with(ArcName::Gamma1, Condition::Dirichlet(g_char.clone()))
            .with(ArcName::Gamma2, Condition::Dirichlet(g_char))
    }

    /// `u_y = f1` on `L1`, `u = f2` on `L2`, `u_y = f3` on `L3`.
    pub fn mixed_dn(f1: BoundaryFn, f2: BoundaryFn, f3: BoundaryFn) -> BoundaryData {
        BoundaryData::new()
            .with(ArcName::L1, Condition::NeumannY(f1))
            .with(ArcName::L2, Condition::Dirichlet(f2))
            .with(ArcName::L3, Condition::NeumannY(f3))
            .with(ArcName::Gamma1, Condition::None)
            .with(ArcName::Gamma2, Condition::None)
    }

    /// Dirichlet data `g` on every arc of `region`.
    pub fn dirichlet_all(region: &Region, g: BoundaryFn) -> BoundaryData {
        region
            .arcs()
            .into_iter()
            .fold(BoundaryData::new(), |bd, a| bd.with(a.name, Condition::Dirichlet(g.clone())))
    }
}

/// Sparse matrix-vector products for the iterative solvers.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_t(&self, y: &[f64], out: &mut [f64]);
}

#[derive(Clone, Debug)]
struct Csr {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: &[Vec<(usize, f64)>], ncols: usize) -> Csr {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for r in rows {
            for &(c, v) in r {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Csr { ncols, indptr, indices, data }
    }

    fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.indices.len()];
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.nrows() {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                indices[next[c]] = r;
                data[next[c]] = self.data[p];
                next[c] += 1;
            }
        }
        Csr { ncols: self.nrows(), indptr: counts, indices, data }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let mut s = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            *o = s;
        });
    }
}

/// Row-compressed matrix with a stored transpose.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    a: Csr,
    at: Csr,
}

impl SparseOperator {
    pub fn from_rows(rows: &[Vec<(usize, f64)>], ncols: usize) -> SparseOperator {
        let a = Csr::from_rows(rows, ncols);
        let at = a.transpose();
        SparseOperator { a, at }
    }

    pub fn nnz(&self) -> usize {
        self.a.data.len()
    }

    /// `A⁺ b` by sparse QR; `None` when the factorization fails or the
    /// result is not finite (rank deficiency).
    pub fn qr_lstsq(&self, b: &[f64]) -> Option<Vec<f64>> {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.a.nrows() {
            for p in self.a.indptr[r]..self.a.indptr[r + 1] {
                trip.push(Triplet::new(r, self.a.indices[p], self.a.data[p]));
            }
        }
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(self.a.nrows(), self.a.ncols, &trip).ok()?;
        let qr = m.sp_qr().ok()?;
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = qr.solve_lstsq(&rhs);
        let x: Vec<f64> = (0..self.a.ncols).map(|i| x[(i, 0)]).collect();
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    /// Minimum-norm solution `Aᵀ (A Aᵀ)⁻¹ b` of a consistent underdetermined
    /// system by sparse Cholesky; `None` when `A Aᵀ` is not positive definite.
    pub fn min_norm_solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let m = self.a.nrows();
        let lower: Vec<Vec<(usize, f64)>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
                for p in self.a.indptr[i]..self.a.indptr[i + 1] {
                    let (c, v) = (self.a.indices[p], self.a.data[p]);
                    for q in self.at.indptr[c]..self.at.indptr[c + 1] {
                        let j = self.at.indices[q];
                        if j >= i {
                            *acc.entry(j).or_insert(0.0) += v * self.at.data[q];
                        }
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        let trip: Vec<Triplet<usize, usize, f64>> = lower
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| Triplet::new(j, i, v)))
            .collect();
        let g = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &trip).ok()?;
        let llt = g.sp_cholesky(faer::Side::Lower).ok()?;
        let y = llt.solve(Mat::from_fn(m, 1, |i, _| b[i]));
        let y: Vec<f64> = (0..m).map(|i| y[(i, 0)]).collect();
        let mut x = vec![0.0; self.a.ncols];
        self.apply_t(&y, &mut x);
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

impl LinearOperator for SparseOperator {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.a.ncols
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.a.mul(x, out)
    }
    fn apply_t(&self, y: &[f64], out: &mut [f64]) {
        self.at.mul(y, out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug)]
pub struct CglsResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final `‖Aᵀ(b − Ax)‖` relative to its reference value.
    pub relative_normal_residual: f64,
}

/// Conjugate gradients on `AᵀA x = Aᵀb` from `x0`.
///
/// Stops when `‖Aᵀr‖ ≤ tol · max(‖Aᵀb‖, ‖Aᵀr₀‖)`. From `x0 = 0` the iterates
/// stay in the row space, so the limit is the minimum-norm least-squares solution.
pub fn cgls(op: &dyn LinearOperator, b: &[f64], x0: Vec<f64>, tol: f64, max_iter: usize) -> CglsResult {
    cgls_with_floor(op, b, x0, tol, max_iter, 0.0)
}

fn normal_residual(op: &dyn LinearOperator, b: &[f64], x: &[f64]) -> f64 {
    let mut r = vec![0.0; op.nrows()];
    op.apply(x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut s = vec![0.0; op.ncols()];
    op.apply_t(&r, &mut s);
    dot(&s, &s).sqrt()
}

fn cgls_with_floor(
    op: &dyn LinearOperator,
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
    floor: f64,
) -> CglsResult {
    let (m, n) = (op.nrows(), op.ncols());
    let mut x = x0;
    let mut r = vec![0.0; m];
    op.apply(&x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut s = vec![0.0; n];
    op.apply_t(&r, &mut s);
    let mut atb = vec![0.0; n];
    op.apply_t(b, &mut atb);
    let reference = dot(&atb, &atb).sqrt().max(dot(&s, &s).sqrt()).max(floor);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let mut q = vec![0.0; m];
    let rel = |g: f64| if reference > 0.0 { g.sqrt() / reference } else { 0.0 };
    for it in 0..max_iter {
        if gamma.sqrt() <= tol * reference || reference == 0.0 {
            return CglsResult { x, iterations: it, converged: true, relative_normal_residual: rel(gamma) };
        }
        op.apply(&p, &mut q);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        op.apply_t(&r, &mut s);
        let g_new = dot(&s, &s);
        let beta = g_new / gamma;
        gamma = g_new;
        p.par_iter_mut().zip(&s).for_each(|(pi, si)| *pi = si + beta * *pi);
    }
    let converged = gamma.sqrt() <= tol * reference;
    CglsResult { x, iterations: max_iter, converged, relative_normal_residual: rel(gamma) }
}

/// How the least-squares system is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LsqMethod {
    /// Plain CGLS from the starting guess.
    Cgls,
    /// One sparse-QR correction of the starting guess, then CGLS from there.
    QrCorrected,
}

#[derive(Clone, Debug)]
pub struct LsqOptions {
    pub method: LsqMethod,
    /// Weight of squared boundary mismatches; `None` means `1/h`.
    pub boundary_weight: Option<f64>,
    pub tol: f64,
    /// `None` means `20 · nx · ny`.
    pub max_iter: Option<usize>,
    /// Starting guess; zero when absent.
    pub initial: Option<GridField>,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions { method: LsqMethod::QrCorrected, boundary_weight: None, tol: 1e-10, max_iter: None, initial: None }
    }
}

#[derive(Clone, Debug)]
pub struct LsqSolution {
    /// Defined on the active nodes.
    pub u: GridField,
    /// `√(interior² + boundary²)`.
    pub residual_norm: f64,
    /// Discrete `L²` norm of `Lu − f`.
    pub interior_residual: f64,
    /// `√(w_b Σ ds · mismatch²)`.
    pub boundary_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub unknowns: usize,
}

/// One boundary sample: a point on an arc and its arclength share.
#[derive(Clone, Copy, Debug)]
struct Sample {
    p: Point,
    ds: f64,
}

fn arc_samples(vertices: &[Point], spacing: f64) -> Vec<Sample> {
    let mut cum = vec![0.0];
    for w in vertices.windows(2) {
        cum.push(cum.last().unwrap() + w[0].dist(w[1]));
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return vec![];
    }
    let n = ((total / spacing).ceil() as usize).max(1);
    let ds = total / n as f64;
    (0..n)
        .map(|i| {
            let s = (i as f64 + 0.5) * ds;
            let k = cum.partition_point(|&c| c < s).clamp(1, vertices.len() - 1);
            let (a, b) = (vertices[k - 1], vertices[k]);
            let seg = cum[k] - cum[k - 1];
            let t = if seg > 0.0 { (s - cum[k - 1]) / seg } else { 0.0 };
            Sample { p: Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)), ds }
        })
        .collect()
}

/// Lower-left node of the grid cell used to interpolate at `p`, with local coordinates.
fn cell_of(g: &Grid, p: Point) -> (usize, usize, f64, f64) {
    let fx = (p.x - g.x(0)) / g.hx();
    let fy = (p.y - g.y(0)) / g.hy();
    let i = (fx.floor().max(0.0) as usize).min(g.nx() - 2);
    let j = (fy.floor().max(0.0) as usize).min(g.ny() - 2);
    let tx = ((p.x - g.x(i)) / g.hx()).clamp(0.0, 1.0);
    let ty = ((p.y - g.y(j)) / g.hy()).clamp(0.0, 1.0);
    (i, j, tx, ty)
}

/// Grid row of a horizontal arc at height `y` and the direction into the region.
fn neumann_rows(g: &Grid, region: &Region, p: Point) -> Option<(usize, isize)> {
    let fy = (p.y - g.y(0)) / g.hy();
    let jb = fy.round();
    if (fy - jb).abs() > 1e-6 || jb < 0.0 || jb as usize >= g.ny() {
        return None;
    }
    let jb = jb as usize;
    let dir = if jb == 0 {
        1
    } else if jb == g.ny() - 1 {
        -1
    } else if region.contains(Point::new(p.x, p.y + 0.5 * g.hy()), 0.0) {
        1
    } else {
        -1
    };
    let last = jb as isize + 2 * dir;
    (last >= 0 && (last as usize) < g.ny()).then_some((jb, dir))
}

enum RowKind {
    Interior,
    Boundary,
}

struct Assembly {
    op: SparseOperator,
    rhs: Vec<f64>,
    kinds: Vec<RowKind>,
    unknown_of: Vec<Option<usize>>,
    nodes: Vec<usize>,
}

/// Nodes carrying unknowns: nodes of the closed region and corners of cells
/// holding boundary samples. The second vector marks the nodes that boundary
/// rows touch.
fn active_nodes(g: &Grid, samples: &[Vec<Sample>], neumann: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let mut active: Vec<bool> = g.classes().iter().map(|c| c.is_inside()).collect();
    let mut pinned = vec![false; g.len()];
    let region = g.region();
    for (arc, &is_neumann) in samples.iter().zip(neumann) {
        for s in arc {
            let (i, j, _, _) = cell_of(g, s.p);
            if is_neumann {
                if let Some((jb, dir)) = neumann_rows(g, region, s.p) {
                    for step in 0..3 {
                        let jj = (jb as isize + step * dir) as usize;
                        pinned[g.idx(i, jj)] = true;
                        pinned[g.idx(i + 1, jj)] = true;
                    }
                }
            } else {
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    pinned[g.idx(i + di, j + dj)] = true;
                }
            }
        }
    }
    for (a, p) in active.iter_mut().zip(&pinned) {
        *a |= *p;
    }
    (active, pinned)
}

/// Stencil weights along one axis: centered where both neighbours exist,
/// otherwise the three-point one-sided formula.
fn stencil(active: &dyn Fn(isize) -> bool, second: bool, h: f64) -> Option<Vec<(isize, f64)>> {
    if active(-1) && active(1) {
        return Some(if second {
            let h2 = h * h;
            vec![(-1, 1.0 / h2), (0, -2.0 / h2), (1, 1.0 / h2)]
        } else {
            vec![(-1, -0.5 / h), (1, 0.5 / h)]
        });
    }
    for s in [1isize, -1] {
        if active(s) && active(2 * s) {
            let sf = s as f64;
            return Some(if second {
                let h2 = h * h;
                vec![(0, 1.0 / h2), (s, -2.0 / h2), (2 * s, 1.0 / h2)]
            } else {
                vec![(0, -1.5 * sf / h), (s, 2.0 * sf / h), (2 * s, -0.5 * sf / h)]
            });
        }
    }
    None
}

fn assemble(spec: &OperatorSpec, bc: &BoundaryData, f: &GridField, wb: f64) -> Result<Assembly> {
    let g = f.grid();
    let region = g.region();
    bc.validate(region)?;
    if !g.classes().iter().any(|c| c.is_interior()) {
        return Err(LabError::InvalidDomain("the grid has no interior nodes".into()));
    }
    let spacing = 0.5 * g.hx().min(g.hy());
    let arcs = region.arcs();
    let conds: Vec<&Condition> = arcs.iter().map(|a| bc.get(a.name).expect("validated")).collect();
    let samples: Vec<Vec<Sample>> = arcs
        .iter()
        .zip(&conds)
        .map(|(a, c)| if matches!(c, Condition::None) { vec![] } else { arc_samples(&a.vertices, spacing) })
        .collect();
    let neumann: Vec<bool> = conds.iter().map(|c| matches!(c, Condition::NeumannY(_))).collect();
    // arcs without data still pin their cells, so adding data never changes the unknowns
    let all_samples: Vec<Vec<Sample>> = arcs.iter().map(|a| arc_samples(&a.vertices, spacing)).collect();
    let (active, _) = active_nodes(g, &all_samples, &neumann);
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let is_active = |i: isize, j: isize| i >= 0 && j >= 0 && i < nx && j < ny && active[(j * nx + i) as usize];

    let w_pde = (g.hx() * g.hy()).sqrt();
    let candidates: Vec<usize> = (0..g.len()).filter(|&k| active[k]).collect();
    let pde_rows: Vec<Option<(Vec<(usize, f64)>, f64)>> = candidates
        .par_iter()
        .map(|&k| {
            let (i, j) = g.ij(k);
            let (i, j) = (i as isize, j as isize);
            let x = g.x(i as usize);
            let fv = f.get(k)?;
            let coef = spec.first_order_coeff(x)?;
            let kv = spec.k.eval(x);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(9);
            let mut push = |di: isize, dj: isize, w: f64| row.push((((j + dj) * nx + i + di) as usize, w * w_pde));
            if kv != 0.0 {
                for (o, w) in stencil(&|o| is_active(i + o, j), true, g.hx())? {
                    push(o, 0, kv * w);
                }
            }
            if coef != 0.0 {
                for (o, w) in stencil(&|o| is_active(i + o, j), false, g.hx())? {
                    push(o, 0, coef * w);
                }
            }
            for (o, w) in stencil(&|o| is_active(i, j + o), true, g.hy())? {
                push(0, o, w);
            }
            Some((row, fv * w_pde))
        })
        .collect();

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut kinds = Vec::new();
    for (row, b) in pde_rows.into_iter().flatten() {
        rows.push(row);
        rhs.push(b);
        kinds.push(RowKind::Interior);
    }
    for ((arc_samples, cond), is_neumann) in samples.iter().zip(&conds).zip(&neumann) {
        for s in arc_samples {
            let w = (wb * s.ds).sqrt();
            let (i, j, tx, ty) = cell_of(g, s.p);
            let u = |ii: usize, jj: usize| g.idx(ii, jj);
            match cond {
                Condition::Dirichlet(gf) => {
                    rows.push(vec![
                        (u(i, j), w * (1.0 - tx) * (1.0 - ty)),
                        (u(i + 1, j), w * tx * (1.0 - ty)),
                        (u(i, j + 1), w * (1.0 - tx) * ty),
                        (u(i + 1, j + 1), w * tx * ty),
                    ]);
                    rhs.push(w * gf(s.p));
                }
                Condition::NeumannY(gf) if *is_neumann => {
                    let (jb, dir) = neumann_rows(g, region, s.p).ok_or_else(|| {
                        LabError::InvalidInput(format!("u_y data at y = {} is not on a grid row", s.p.y))
                    })?;
                    let d = dir as f64 / g.hy();
                    let mut row = Vec::with_capacity(6);
                    for (step, c) in [(0isize, -1.5), (1, 2.0), (2, -0.5)] {
                        let jj = (jb as isize + step * dir) as usize;
                        row.push((u(i, jj), w * (1.0 - tx) * c * d));
                        row.push((u(i + 1, jj), w * tx * c * d));
                    }
                    rows.push(row);
                    rhs.push(w * gf(s.p));
                }
                _ => continue,
            }
            kinds.push(RowKind::Boundary);
        }
    }
    // unknowns are the nodes some row touches
    let mut unknown_of = vec![None; g.len()];
    let mut nodes = Vec::new();
    for row in &rows {
        for &(k, _) in row {
            if unknown_of[k].is_none() {
                unknown_of[k] = Some(usize::MAX);
            }
        }
    }
    for (k, u) in unknown_of.iter_mut().enumerate() {
        if u.is_some() {
            *u = Some(nodes.len());
            nodes.push(k);
        }
    }
    for row in &mut rows {
        for e in row.iter_mut() {
            e.0 = unknown_of[e.0].expect("touched node");
        }
    }
    let op = SparseOperator::from_rows(&rows, nodes.len());
    Ok(Assembly { op, rhs, kinds, unknown_of, nodes })
}

/// Minimizes `‖Lu − f‖²_h + w_b Σ ds · mismatch²` over the active nodes of the
/// grid of `f` by conjugate gradients on the normal equations.
pub fn solve_lsq(spec: &OperatorSpec, bc: &BoundaryData, f: &GridField, opts: &LsqOptions) -> Result<LsqSolution> {
    let g = f.grid();
    let wb = opts.boundary_weight.unwrap_or(1.0 / g.h());
    let asm = assemble(spec, bc, f, wb)?;
    let x0: Vec<f64> = match &opts.initial {
        Some(init) => asm.nodes.iter().map(|&k| init.get(k).unwrap_or(0.0)).collect(),
        None => vec![0.0; asm.nodes.len()],
    };
    let max_iter = opts.max_iter.unwrap_or(20 * g.nx() * g.ny());
    let floor = normal_residual(&asm.op, &asm.rhs, &x0);
    let x0 = match opts.method {
        LsqMethod::Cgls => x0,
        LsqMethod::QrCorrected => {
            let mut r = vec![0.0; asm.rhs.len()];
            asm.op.apply(&x0, &mut r);
            r.iter_mut().zip(&asm.rhs).for_each(|(ri, bi)| *ri = bi - *ri);
            match asm.op.qr_lstsq(&r) {
                Some(d) => x0.iter().zip(&d).map(|(a, b)| a + b).collect(),
                None => x0,
            }
        }
    };
    let res = cgls_with_floor(&asm.op, &asm.rhs, x0, opts.tol, max_iter, floor);
    let mut ax = vec![0.0; asm.rhs.len()];
    asm.op.apply(&res.x, &mut ax);
    let (mut ri, mut rb) = (0.0, 0.0);
    for ((a, b), kind) in ax.iter().zip(&asm.rhs).zip(&asm.kinds) {
        let d = (a - b) * (a - b);
        match kind {
            RowKind::Interior => ri += d,
            RowKind::Boundary => rb += d,
        }
    }
    let mut values = vec![0.0; g.len()];
    let mut defined = vec![false; g.len()];
    for (&k, &v) in asm.nodes.iter().zip(&res.x) {
        values[k] = v;
        defined[k] = true;
    }
    debug_assert!(asm.unknown_of.iter().filter(|u| u.is_some()).count() == asm.nodes.len());
    Ok(LsqSolution {
        u: GridField::from_parts(g, values, defined)?,
        residual_norm: (ri + rb).sqrt(),
        interior_residual: ri.sqrt(),
        boundary_residual: rb.sqrt(),
        iterations: res.iterations,
        converged: res.converged,
        unknowns: asm.nodes.len(),
    })
}

/// Largest `|u|` over defined nodes inside the region.
pub fn sup_inside(u: &GridField) -> f64 {
    u.max_abs_where(|k| u.grid().class(k).is_inside())
}

fn seeded_start(grid: &Grid, seed: u64) -> GridField {
    TestField::random_smooth(seed, &grid.region().bbox()).sample(grid)
}

/// One rung of a homogeneous-data ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderRow {
    pub n: usize,
    pub h: f64,
    pub sup_norm: f64,
    /// `‖u‖∞` of the random starting guess.
    pub start_sup_norm: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn homogeneous_ladder(
    spec: &OperatorSpec,
    region: &Region,
    bc: &BoundaryData,
    ladder: &[usize],
    seed: u64,
) -> Result<Vec<LadderRow>> {
    ladder
        .iter()
        .map(|&n| {
            let g = Grid::new(region.clone(), n)?;
            let start = seeded_start(&g, seed);
            let opts = LsqOptions { initial: Some(start.clone()), ..LsqOptions::default() };
            let sol = solve_lsq(spec, bc, &GridField::zeros(&g), &opts)?;
            Ok(LadderRow {
                n,
                h: g.h(),
                sup_norm: sup_inside(&sol.u),
                start_sup_norm: sup_inside(&start),
                residual_norm: sol.residual_norm,
                iterations: sol.iterations,
                converged: sol.converged,
            })
        })
        .collect()
}

/// Homogeneous open problem from a seeded random start on each grid.
pub fn homogeneous_open_experiment(
    spec: &OperatorSpec,
    region: &Region,
    ladder: &[usize],
    seed: u64,
) -> Result<Vec<LadderRow>> {
    homogeneous_ladder(spec, region, &BoundaryData::open_dirichlet(Arc::new(|_| 0.0)), ladder, seed)
}

/// Data placed on the characteristics for the closed problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CharData {
    Constant(f64),
    /// The bilinear trace of the open solution on the same grid.
    OpenTrace,
    /// The trace of the manufactured field itself.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverdeterminacyRow {
    pub n: usize,
    pub h: f64,
    pub open_residual: f64,
    pub closed_residual: f64,
    pub ratio: f64,
    /// `‖u_open − u*‖∞` over the region.
    pub open_error: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverdeterminacyReport {
    pub field: String,
    pub char_data: CharData,
    pub rows: Vec<OverdeterminacyRow>,
}

/// Solves the open problem with data from `exact` (and `f = L exact`), then
/// the closed problem with `g_char` added on both characteristics.
pub fn overdeterminacy_experiment(
    spec: &OperatorSpec,
    region: &Region,
    exact: &TestField,
    g_char: CharData,
    ladder: &[usize],
) -> Result<OverdeterminacyReport> {
    let mut rows = Vec::new();
    for &n in ladder {
        let g = Grid::new(region.clone(), n)?;
        let f = g.sample(|x, y| exact.apply(spec, x, y));
        let ex = exact.clone();
        let data: BoundaryFn = Arc::new(move |p| ex.value(p.x, p.y));
        let open = solve_lsq(spec, &BoundaryData::open_dirichlet(data.clone()), &f, &LsqOptions::default())?;
        let gc: BoundaryFn = match g_char {
            CharData::Constant(c) => Arc::new(move |_| c),
            CharData::OpenTrace => {
                let u = open.u.clone();
                Arc::new(move |p| u.interpolate(p).unwrap_or(0.0))
            }
            CharData::Exact => {
                let ex = exact.clone();
                Arc::new(move |p| ex.value(p.x, p.y))
            }
        };
        let closed = solve_lsq(spec, &BoundaryData::closed(data, gc), &f, &LsqOptions::default())?;
        let err = exact.sample(&g).zip(&open.u, |a, b| a - b);
        rows.push(OverdeterminacyRow {
            n,
            h: g.h(),
            open_residual: open.residual_norm,
            closed_residual: closed.residual_norm,
            ratio: closed.residual_norm / open.residual_norm,
            open_error: sup_inside(&err),
            converged: open.converged && closed.converged,
        });
    }
    Ok(OverdeterminacyReport { field: exact.name().to_string(), char_data: g_char, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixedDnReport {
    pub rows: Vec<LadderRow>,
    /// `max ‖u‖∞ / h` over the ladder.
    pub constant: f64,
}

/// Homogeneous mixed problem `u_y = 0` on `L1`, `L3`, `u = 0` on `L2`, from a
/// seeded random start.
pub fn mixed_dn_experiment(spec: &OperatorSpec, region: &Region, ladder: &[usize], seed: u64) -> Result<MixedDnReport> {
    if spec.form != Form::Loword {
        return Err(LabError::InvalidParameter("the mixed problem uses the K′/2 form".into()));
    }
    let z: BoundaryFn = Arc::new(|_| 0.0);
    let bc = BoundaryData::mixed_dn(z.clone(), z.clone(), z);
    let rows = homogeneous_ladder(spec, region, &bc, ladder, seed)?;
    let constant = rows.iter().map(|r| r.sup_norm / r.h).fold(0.0, f64::max);
    Ok(MixedDnReport { rows, constant })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxPrincipleReport {
    pub interior_max: f64,
    pub boundary_max: f64,
    pub interior_min: f64,
    pub boundary_min: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Compares extreme values of `u` inside `rect` with those on its edges.
pub fn max_principle_check(u: &GridField, rect: &Rect, tol: f64) -> Result<MaxPrincipleReport> {
    let g = u.grid();
    let eps = 1e-9 * (1.0 + rect.width().max(rect.height()));
    let mut r = MaxPrincipleReport {
        interior_max: f64::NEG_INFINITY,
        boundary_max: f64::NEG_INFINITY,
        interior_min: f64::INFINITY,
        boundary_min: f64::INFINITY,
        tol,
        pass: false,
    };
    for k in 0..g.len() {
        let Some(v) = u.get(k) else { continue };
        let p = g.point(k);
        if !rect.contains(p, eps) {
            continue;
        }
        let edge = (p.x - rect.x0).abs() <= eps
            || (p.x - rect.x1).abs() <= eps
            || (p.y - rect.y0).abs() <= eps
            || (p.y - rect.y1).abs() <= eps;
        if edge {
            r.boundary_max = r.boundary_max.max(v);
            r.boundary_min = r.boundary_min.min(v);
        } else {
            r.interior_max = r.interior_max.max(v);
            r.interior_min = r.interior_min.min(v);
        }
    }
    if !r.boundary_max.is_finite() {
        return Err(LabError::InvalidInput("no defined nodes on the rectangle edges".into()));
    }
    r.pass = r.interior_max <= r.boundary_max + tol && r.interior_min >= r.boundary_min - tol;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxPrincipleRow {
    pub n: usize,
    pub h: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub report: MaxPrincipleReport,
}

/// Solves `L u = 0` on `rect` with Dirichlet data `g` and checks the extremes,
/// with tolerance `c_tol · (h² + residual)`.
pub fn max_principle_experiment(
    spec: &OperatorSpec,
    rect: &Rect,
    g: BoundaryFn,
    ladder: &[usize],
    c_tol: f64,
) -> Result<Vec<MaxPrincipleRow>> {
    let region: Region = (*rect).into();
    ladder
        .iter()
        .map(|&n| {
            let grid = Grid::new(region.clone(), n)?;
            let bc = BoundaryData::dirichlet_all(&region, g.clone());
            let sol = solve_lsq(spec, &bc, &GridField::zeros(&grid), &LsqOptions::default())?;
            let h = grid.h();
            let report = max_principle_check(&sol.u, rect, c_tol * (h * h + sol.residual_norm))?;
            Ok(MaxPrincipleRow { n, h, residual_norm: sol.residual_norm, converged: sol.converged, report })
        })
        .collect()
}

/// Whether the box `[cx ± rx] × [cy ± ry]` lies inside `region` with `margin` to spare.
pub fn box_inside(region: &Region, cx: f64, cy: f64, rx: f64, ry: f64, margin: f64) -> bool {
    let steps = 32;
    (0..=steps).all(|s| {
        let t = -1.0 + 2.0 * s as f64 / steps as f64;
        let (x0, x1) = (cx - rx - margin, cx + rx + margin);
        let (y0, y1) = (cy - ry - margin, cy + ry + margin);
        let (xs, ys) = (cx + t * (rx + margin), cy + t * (ry + margin));
        [Point::new(x0, ys), Point::new(x1, ys), Point::new(xs, y0), Point::new(xs, y1)]
            .iter()
            .all(|&p| region.contains(p, 0.0))
    })
}

/// Tensor quartic B-splines with knot spacing `W / 2^level` (`W` the shorter
/// side of the bounding box) whose supports lie strictly inside `region`.
pub fn bspline_basis(region: &Region, level: u32) -> Vec<TestField> {
    let bb = region.bbox();
    let hk = knot_spacing(region, level);
    let margin = 1e-3 * hk;
    let mut out = Vec::new();
    let ni = (bb.width() / hk).floor() as i64;
    let nj = (bb.height() / hk).floor() as i64;
    for j in 0..=nj {
        for i in 0..=ni {
            let (cx, cy) = (bb.x0 + i as f64 * hk, bb.y0 + j as f64 * hk);
            if box_inside(region, cx, cy, 2.5 * hk, 2.5 * hk, margin) {
                out.push(TestField::bspline(cx, cy, hk, hk));
            }
        }
    }
    out
}

/// Knot spacing of [`bspline_basis`] at `level`.
pub fn knot_spacing(region: &Region, level: u32) -> f64 {
    let bb = region.bbox();
    bb.width().min(bb.height()) / f64::powi(2.0, level as i32)
}

/// Held-out C∞ bumps for comparing basis levels from `level` up: at each of
/// eight off-axis spots, the widest bump with radii proportional to the
/// bounding box (up to 30%) that keeps one basis support radius at `level`
/// from the boundary. Spots where a radius would drop below four knot
/// spacings are skipped.
pub fn heldout_tests(region: &Region, level: u32) -> Vec<TestField> {
    let bb = region.bbox();
    let (w, h) = (bb.width(), bb.height());
    let hk = knot_spacing(region, level);
    let margin = 2.5 * hk;
    let spots = [(0.67, 0.57), (0.7, 0.4), (0.8, 0.62), (0.62, 0.3), (0.45, 0.44), (0.35, 0.58), (0.6, 0.75), (0.25, 0.47)];
    let mut out = Vec::new();
    for (fx, fy) in spots {
        let (cx, cy) = (bb.x0 + fx * w, bb.y0 + fy * h);
        let mut s = 0.3;
        while s * w.min(h) >= 4.0 * hk {
            if box_inside(region, cx, cy, s * w, s * h, margin) {
                out.push(TestField::smooth_bump(cx, cy, s * w, s * h));
                break;
            }
            s *= 0.9;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct DualSolveResult {
    pub u: GridField,
    pub test_count: usize,
    /// Max over training tests of `|⟨u, L*ξ⟩_h − ⟨f, ξ⟩_h|`.
    pub pairing_residual: f64,
    /// The same over the held-out tests.
    pub heldout_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Grid nodes inside the declared support of `xi`, or all nodes.
fn support_nodes(g: &Grid, xi: &TestField) -> Vec<usize> {
    let Some(r) = xi.support() else { return (0..g.len()).collect() };
    let (x0, y0) = g.origin();
    let lo = |v: f64, o: f64, h: f64, n: usize| (((v - o) / h).floor().max(0.0) as usize).min(n - 1);
    let hi = |v: f64, o: f64, h: f64, n: usize| (((v - o) / h).ceil().max(0.0) as usize).min(n - 1);
    let (i0, i1) = (lo(r.x0, x0, g.hx(), g.nx()), hi(r.x1, x0, g.hx(), g.nx()));
    let (j0, j1) = (lo(r.y0, y0, g.hy(), g.ny()), hi(r.y1, y0, g.hy(), g.ny()));
    (j0..=j1).flat_map(|j| (i0..=i1).map(move |i| g.idx(i, j))).collect()
}

/// `⟨u, v⟩_h`: cut-cell weighted sum over the region.
pub fn pairing(u: &GridField, v: &GridField) -> f64 {
    let g = u.grid();
    let (wp, wm) = (g.weights(crate::geometry::Side::Plus), g.weights(crate::geometry::Side::Minus));
    let terms: Vec<f64> = (0..g.len())
        .map(|k| match (u.get(k), v.get(k)) {
            (Some(a), Some(b)) => (wp[k] + wm[k]) * a * b,
            _ => 0.0,
        })
        .collect();
    crate::quadrature::pairwise_sum(&terms)
}

fn check_dual_spec(spec: &OperatorSpec) -> Result<OperatorSpec> {
    match spec.form {
        Form::Kappa(k) if (1.0..=1.5).contains(&k) => spec.adjoint(),
        Form::General(k) if k == 1.0 => spec.adjoint(),
        _ => Err(LabError::InvalidParameter(
            "distribution solutions need the κ form with κ in [1, 3/2] or the k = 1 form".into(),
        )),
    }
}

/// Minimum-norm `u` with `⟨u, L*ξ_j⟩_h = ⟨f, ξ_j⟩_h` for every training test `ξ_j`.
pub fn distribution_solve(
    spec: &OperatorSpec,
    f: &GridField,
    basis: &[TestField],
    heldout: &[TestField],
    tol: f64,
) -> Result<DualSolveResult> {
    let adj = check_dual_spec(spec)?;
    if basis.is_empty() {
        return Err(LabError::InvalidParameter("empty test basis".into()));
    }
    let g = f.grid();
    let (wp, wm) = (g.weights(crate::geometry::Side::Plus), g.weights(crate::geometry::Side::Minus));
    let mut unknown_of = vec![None; g.len()];
    let mut nodes = Vec::new();
    for k in 0..g.len() {
        if wp[k] + wm[k] > 0.0 && f.is_defined(k) {
            unknown_of[k] = Some(nodes.len());
            nodes.push(k);
        }
    }
    let weight = |k: usize| wp[k] + wm[k];
    let (rows, rhs): (Vec<Vec<(usize, f64)>>, Vec<f64>) = basis
        .par_iter()
        .map(|xi| {
            let mut row = Vec::new();
            let mut terms = Vec::new();
            for k in support_nodes(g, xi) {
                let (Some(c), Some(fv)) = (unknown_of[k], f.get(k)) else { continue };
                let p = g.point(k);
                let v = weight(k) * xi.apply(&adj, p.x, p.y);
                if v != 0.0 {
                    row.push((c, v));
                }
                terms.push(weight(k) * fv * xi.value(p.x, p.y));
            }
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            let s = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            let r = crate::quadrature::pairwise_sum(&terms);
            (row.into_iter().map(|(c, v)| (c, v * s)).collect(), r * s)
        })
        .unzip();
    let op = SparseOperator::from_rows(&rows, nodes.len());
    let x0 = op.min_norm_solve(&rhs).unwrap_or_else(|| vec![0.0; nodes.len()]);
    let res = cgls_with_floor(&op, &rhs, x0, tol, 20 * g.len(), dot(&rhs, &rhs).sqrt());
    let mut values = vec![0.0; g.len()];
    let mut defined = vec![false; g.len()];
    for (&k, &v) in nodes.iter().zip(&res.x) {
        values[k] = v;
        defined[k] = true;
    }
    let u = GridField::from_parts(g, values, defined)?;
    let residual = |tests: &[TestField]| -> f64 {
        tests
            .par_iter()
            .map(|xi| {
                let terms: Vec<f64> = support_nodes(g, xi)
                    .into_iter()
                    .filter_map(|k| {
                        let (a, b) = (u.get(k)?, f.get(k)?);
                        let p = g.point(k);
                        Some(weight(k) * (a * xi.apply(&adj, p.x, p.y) - b * xi.value(p.x, p.y)))
                    })
                    .collect();
                crate::quadrature::pairwise_sum(&terms).abs()
            })
            .reduce(|| 0.0, f64::max)
    };
    Ok(DualSolveResult {
        pairing_residual: residual(basis),
        heldout_residual: residual(heldout),
        u,
        test_count: basis.len(),
        iterations: res.iterations,
        converged: res.converged,
    })
}
