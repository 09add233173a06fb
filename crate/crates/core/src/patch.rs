//! Immersed patches and their pointwise geometry.
//!
//! A patch is a chart `X: ∏[a_i, b_i] → ℝᴺ` sampled on a [`ParameterGrid`],
//! stored as third-order position jets at every interior node. All tensors
//! are expressed in the coordinate frame `X_i = ∂_i X` with explicit metric
//! contractions; nothing is orthonormalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::{apply_j, dot, norm, AmbientStructure};
use crate::catalog::SolitonSpec;
use crate::error::{Error, Result};
use crate::grid::ParameterGrid;
use crate::jet::{Jet, JetVec, MAX_PARAMS};

/// Immersion threshold: `det g` must exceed this at every interior node.
pub const DET_FLOOR: f64 = 1e-12;

/// Stencil margin of the finite-difference backend.
pub const FD_MARGIN: usize = 2;

pub type Mat = [[f64; MAX_PARAMS]; MAX_PARAMS];
type JetMat = [[Jet; MAX_PARAMS]; MAX_PARAMS];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Analytic,
    #[serde(rename = "fd")]
    FiniteDifference,
}

impl Backend {
    pub fn margin(self) -> usize {
        match self {
            Backend::Analytic => 0,
            Backend::FiniteDifference => FD_MARGIN,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Analytic => "analytic",
            Backend::FiniteDifference => "fd",
        }
    }

    fn lagrangian_tolerance(self) -> f64 {
        match self {
            Backend::Analytic => 1e-10,
            Backend::FiniteDifference => 1e-6,
        }
    }
}

/// A map from the parameter box into ambient space.
pub trait Chart: Send + Sync {
    fn param_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn position(&self, u: &[f64]) -> Vec<f64>;

    /// Position jets to third order, when the chart knows them in closed form.
    fn jets(&self, _u: &[f64]) -> Option<JetVec> {
        None
    }

    /// Whether the image is a Lagrangian submanifold of `ℂⁿ`.
    fn is_lagrangian(&self) -> bool {
        false
    }
}

/// A chart written in jet arithmetic: `map` receives the coordinate jets
/// `u_1..u_n` and returns the ambient components, so the analytic jets come
/// for free.
pub struct JetChart<F> {
    params: usize,
    ambient: usize,
    lagrangian: bool,
    map: F,
}

impl<F> JetChart<F>
where
    F: Fn(&[Jet]) -> Vec<Jet> + Send + Sync,
{
    pub fn new(params: usize, ambient: usize, map: F) -> Self {
        JetChart { params, ambient, lagrangian: false, map }
    }

    pub fn lagrangian(mut self) -> Self {
        self.lagrangian = true;
        self
    }

    fn eval(&self, u: &[f64]) -> JetVec {
        let vars: Vec<Jet> = u.iter().enumerate().map(|(i, &x)| Jet::variable(self.params, i, x)).collect();
        JetVec((self.map)(&vars))
    }
}

impl<F> Chart for JetChart<F>
where
    F: Fn(&[Jet]) -> Vec<Jet> + Send + Sync,
{
    fn param_dim(&self) -> usize {
        self.params
    }
    fn ambient_dim(&self) -> usize {
        self.ambient
    }
    fn position(&self, u: &[f64]) -> Vec<f64> {
        self.eval(u).values()
    }
    fn jets(&self, u: &[f64]) -> Option<JetVec> {
        Some(self.eval(u))
    }
    fn is_lagrangian(&self) -> bool {
        self.lagrangian
    }
}

/// A sampled immersion `Σ`: position jets at every interior node.
#[derive(Clone, Debug)]
pub struct ImmersedPatch {
    grid: ParameterGrid,
    ambient: AmbientStructure,
    backend: Backend,
    lagrangian: bool,
    nodes: Vec<Vec<usize>>,
    jets: Vec<JetVec>,
    spec: Option<SolitonSpec>,
}

/// Sample `chart` on `grid` and assemble position jets with the requested backend.
pub fn build_patch(
    chart: &dyn Chart,
    grid: &ParameterGrid,
    ambient: &AmbientStructure,
    backend: Backend,
) -> Result<ImmersedPatch> {
    if chart.param_dim() != grid.dim() {
        return Err(Error::InvalidGrid(format!(
            "chart has {} parameters, grid has {} axes",
            chart.param_dim(),
            grid.dim()
        )));
    }
    if chart.ambient_dim() != ambient.dim() {
        return Err(Error::InvalidSpec(format!(
            "chart maps into ℝ^{}, ambient structure is ℝ^{}",
            chart.ambient_dim(),
            ambient.dim()
        )));
    }
    let grid = grid.clone().with_margin(backend.margin())?;
    let nodes = grid.interior_nodes();
    let jets = match backend {
        Backend::Analytic => nodes
            .par_iter()
            .map(|idx| chart.jets(&grid.coords(idx)).ok_or(Error::MissingJets))
            .collect::<Result<Vec<_>>>()?,
        Backend::FiniteDifference => {
            if grid.is_degenerate() {
                return Err(Error::InvalidGrid("finite differences need positive spacing on every axis".into()));
            }
            finite_difference_jets(chart, &grid, &nodes)
        }
    };
    let patch = ImmersedPatch { grid, ambient: ambient.clone(), backend, lagrangian: false, nodes, jets, spec: None };
    patch.check_immersion(None)?;
    if chart.is_lagrangian() {
        patch.mark_lagrangian()
    } else {
        Ok(patch)
    }
}

fn finite_difference_jets(chart: &dyn Chart, grid: &ParameterGrid, nodes: &[Vec<usize>]) -> Vec<JetVec> {
    let n = grid.dim();
    let counts: Vec<usize> = grid.axes().iter().map(|a| a.nodes).collect();
    let total: usize = counts.iter().product();
    let flat = |idx: &[usize]| idx.iter().zip(&counts).fold(0, |acc, (&k, &m)| acc * m + k);
    let unflat = |mut p: usize| {
        let mut idx = vec![0; n];
        for i in (0..n).rev() {
            idx[i] = p % counts[i];
            p /= counts[i];
        }
        idx
    };
    let samples: Vec<Vec<f64>> = (0..total).into_par_iter().map(|p| chart.position(&grid.coords(&unflat(p)))).collect();
    let dim = chart.ambient_dim();
    let h: Vec<f64> = (0..n).map(|i| grid.spacing(i)).collect();

    let at = |idx: &[usize], offsets: &[(usize, isize)]| -> &Vec<f64> {
        let mut q = idx.to_vec();
        for &(axis, off) in offsets {
            q[axis] = (q[axis] as isize + off) as usize;
        }
        &samples[flat(&q)]
    };
    // Centered second difference at a node one layer inside the grid.
    let second = |idx: &[usize], i: usize, j: usize, c: usize| -> f64 {
        if i == j {
            (at(idx, &[(i, 1)])[c] - 2.0 * at(idx, &[])[c] + at(idx, &[(i, -1)])[c]) / (h[i] * h[i])
        } else {
            (at(idx, &[(i, 1), (j, 1)])[c] - at(idx, &[(i, 1), (j, -1)])[c] - at(idx, &[(i, -1), (j, 1)])[c]
                + at(idx, &[(i, -1), (j, -1)])[c])
                / (4.0 * h[i] * h[j])
        }
    };

    nodes
        .par_iter()
        .map(|idx| {
            let comps = (0..dim)
                .map(|c| {
                    let d1: Vec<f64> =
                        (0..n).map(|i| (at(idx, &[(i, 1)])[c] - at(idx, &[(i, -1)])[c]) / (2.0 * h[i])).collect();
                    let d2: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| second(idx, i, j, c)).collect()).collect();
                    let d3: Vec<Vec<Vec<f64>>> = (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| {
                                    (0..n)
                                        .map(|k| {
                                            let mut up = idx.clone();
                                            let mut down = idx.clone();
                                            up[k] += 1;
                                            down[k] -= 1;
                                            (second(&up, i, j, c) - second(&down, i, j, c)) / (2.0 * h[k])
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect();
                    Jet::from_parts(n, at(idx, &[])[c], &d1, &d2, Some(&d3))
                })
                .collect();
            JetVec(comps)
        })
        .collect()
}

impl ImmersedPatch {
    /// Assemble a patch from precomputed interior jets (used by deformations).
    pub(crate) fn from_jets(base: &ImmersedPatch, jets: Vec<JetVec>) -> Self {
        ImmersedPatch {
            grid: base.grid.clone(),
            ambient: base.ambient.clone(),
            backend: base.backend,
            lagrangian: false,
            nodes: base.nodes.clone(),
            jets,
            spec: None,
        }
    }

    /// Verify `det g > DET_FLOOR` at every interior node. `step` tags the
    /// error as a deformation failure.
    pub(crate) fn check_immersion(&self, step: Option<f64>) -> Result<()> {
        let dets: Vec<f64> = self.jets.par_iter().map(|x| metric_value(x, self.dim()).1).collect();
        for (idx, det) in self.nodes.iter().zip(dets) {
            if !(det > DET_FLOOR) {
                return Err(match step {
                    None => Error::DegenerateMetric { node: idx.clone(), det },
                    Some(step) => Error::DegenerateDeformation { step, node: idx.clone(), det },
                });
            }
        }
        Ok(())
    }

    fn mark_lagrangian(mut self) -> Result<Self> {
        let defect = self.max_lagrangian_defect()?;
        let tol = self.backend.lagrangian_tolerance();
        if defect > tol {
            return Err(Error::NotLagrangian { defect });
        }
        self.lagrangian = true;
        Ok(self)
    }

    pub fn with_spec(mut self, spec: SolitonSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn spec(&self) -> Option<&SolitonSpec> {
        self.spec.as_ref()
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn ambient(&self) -> &AmbientStructure {
        &self.ambient
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn is_lagrangian(&self) -> bool {
        self.lagrangian
    }

    /// Parameter dimension `n`.
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Ambient dimension `N`.
    pub fn ambient_dim(&self) -> usize {
        self.ambient.dim()
    }

    pub fn nodes(&self) -> &[Vec<usize>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn jets(&self) -> &[JetVec] {
        &self.jets
    }

    pub fn position(&self, node: usize) -> Vec<f64> {
        self.jets[node].values()
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.grid.coords(&self.nodes[node])
    }

    /// Coordinate tangent vectors `X_i` at a node.
    pub fn tangents(&self, node: usize) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.jets[node].0.iter().map(|c| c.d(i)).collect()).collect()
    }

    pub fn local(&self, node: usize) -> LocalGeometry {
        LocalGeometry::new(&self.jets[node], self.dim())
    }

    pub(crate) fn require_lagrangian(&self, what: &str) -> Result<()> {
        if self.lagrangian {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{what} needs a Lagrangian patch (normal frame J X_i)")))
        }
    }

    /// `max_{i<j} |ω(X_i, X_j)|` per interior node.
    pub fn lagrangian_defect(&self) -> Result<Vec<f64>> {
        let (n, big_n) = (self.dim(), self.ambient_dim());
        if big_n != 2 * n {
            return Err(Error::Unsupported(format!("Lagrangian defect needs N = 2n (have n = {n}, N = {big_n})")));
        }
        Ok((0..self.len())
            .into_par_iter()
            .map(|p| {
                let t = self.tangents(p);
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    let jt = apply_j(&t[i]);
                    for tj in &t[i + 1..] {
                        worst = worst.max(dot(&jt, tj).abs());
                    }
                }
                worst
            })
            .collect())
    }

    pub fn max_lagrangian_defect(&self) -> Result<f64> {
        Ok(self.lagrangian_defect()?.into_iter().fold(0.0, f64::max))
    }
}

/// Metric and `det g` from first derivatives only.
pub(crate) fn metric_value(x: &JetVec, n: usize) -> (Mat, f64) {
    let mut g = [[0.0; MAX_PARAMS]; MAX_PARAMS];
    for i in 0..n {
        for j in i..n {
            let v: f64 = x.0.iter().map(|c| c.d(i) * c.d(j)).sum();
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    let det = determinant(&g, n);
    (g, det)
}

fn determinant<T>(m: &[[T; MAX_PARAMS]; MAX_PARAMS], n: usize) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<Output = T>,
{
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("parameter dimension {n}"),
    }
}

/// Adjugate (transposed cofactor matrix) for `n ≤ 3`.
fn adjugate<T>(m: &[[T; MAX_PARAMS]; MAX_PARAMS], n: usize, one: T, zero: T) -> [[T; MAX_PARAMS]; MAX_PARAMS]
where
    T: Copy
        + std::ops::Add<Output = T>
        + std::ops::Sub<Output = T>
        + std::ops::Mul<Output = T>
        + std::ops::Neg<Output = T>,
{
    let mut a = [[zero; MAX_PARAMS]; MAX_PARAMS];
    match n {
        1 => a[0][0] = one,
        2 => {
            a[0][0] = m[1][1];
            a[0][1] = -m[0][1];
            a[1][0] = -m[1][0];
            a[1][1] = m[0][0];
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    // cofactor C_ji
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    a[i][j] = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
                }
            }
        }
        _ => unreachable!("parameter dimension {n}"),
    }
    a
}

pub fn invert(m: &Mat, n: usize) -> Mat {
    let det = determinant(m, n);
    let mut a = adjugate(m, n, 1.0, 0.0);
    for row in a.iter_mut().take(n) {
        for x in row.iter_mut().take(n) {
            *x /= det;
        }
    }
    a
}

fn invert_jet(m: &JetMat, n: usize) -> (JetMat, Jet) {
    let det = determinant(m, n);
    let inv_det = det.recip();
    let mut a = adjugate(m, n, Jet::constant(n, 1.0), Jet::zero(n));
    for row in a.iter_mut().take(n) {
        for x in row.iter_mut().take(n) {
            *x = *x * inv_det;
        }
    }
    (a, det)
}

/// Jet-valued local geometry at one node: tangents, metric, inverse metric
/// and Christoffel symbols, each carrying its own parameter derivatives.
pub struct LocalGeometry {
    pub n: usize,
    pub position: JetVec,
    pub tangents: Vec<JetVec>,
    pub metric: JetMat,
    pub inverse: JetMat,
    pub sqrt_det: Jet,
    /// `christoffel[k][i][j] = Γ^k_ij`; empty when the position jet is only first order.
    pub christoffel: Vec<JetMat>,
}

impl LocalGeometry {
    pub fn new(position: &JetVec, n: usize) -> Self {
        let tangents: Vec<JetVec> = (0..n).map(|i| position.partial(i)).collect();
        let mut metric = [[Jet::zero(n); MAX_PARAMS]; MAX_PARAMS];
        for i in 0..n {
            for j in i..n {
                let g = tangents[i].dot(&tangents[j]);
                metric[i][j] = g;
                metric[j][i] = g;
            }
        }
        let (inverse, det) = invert_jet(&metric, n);
        let sqrt_det = det.sqrt();
        let mut christoffel = Vec::new();
        if metric[0][0].order() >= 1 {
            // ∂_k g_ij
            let dg = |i: usize, j: usize, k: usize| metric[i][j].partial(k);
            // Γ_lij = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
            let mut lowered = vec![[[Jet::zero(n); MAX_PARAMS]; MAX_PARAMS]; n];
            for (l, low) in lowered.iter_mut().enumerate() {
                for i in 0..n {
                    for j in i..n {
                        let v = (dg(j, l, i) + dg(i, l, j) - dg(i, j, l)).scale(0.5);
                        low[i][j] = v;
                        low[j][i] = v;
                    }
                }
            }
            for k in 0..n {
                let mut gamma = [[Jet::zero(n); MAX_PARAMS]; MAX_PARAMS];
                for i in 0..n {
                    for j in i..n {
                        let mut acc = inverse[k][0] * lowered[0][i][j];
                        for (l, low) in lowered.iter().enumerate().skip(1) {
                            acc = acc + inverse[k][l] * low[i][j];
                        }
                        gamma[i][j] = acc;
                        gamma[j][i] = acc;
                    }
                }
                christoffel.push(gamma);
            }
        }
        LocalGeometry { n, position: position.clone(), tangents, metric, inverse, sqrt_det, christoffel }
    }

    pub fn ambient_dim(&self) -> usize {
        self.position.dim()
    }

    /// Contravariant components `c^a = g^{ab}⟨W, X_b⟩` of the tangential part.
    pub fn tangent_coefficients(&self, w: &JetVec) -> Vec<Jet> {
        let n = self.n;
        let inner: Vec<Jet> = self.tangents.iter().map(|t| w.dot(t)).collect();
        (0..n)
            .map(|a| {
                let mut acc = self.inverse[a][0] * inner[0];
                for b in 1..n {
                    acc = acc + self.inverse[a][b] * inner[b];
                }
                acc
            })
            .collect()
    }

    /// Tangential projection `W^T = g^{ab}⟨W, X_b⟩X_a`.
    pub fn tangent_part(&self, w: &JetVec) -> JetVec {
        let coeffs = self.tangent_coefficients(w);
        let mut out = self.tangents[0].scaled(coeffs[0]);
        for (c, t) in coeffs.iter().zip(&self.tangents).skip(1) {
            out.axpy(*c, t);
        }
        out
    }

    /// Normal projection `W^⊥ = W − W^T`.
    pub fn normal_part(&self, w: &JetVec) -> JetVec {
        w.sub(&self.tangent_part(w))
    }

    /// Contravariant components `g^{ij} ∂_j f` of the gradient.
    pub fn gradient_coefficients(&self, f: &Jet) -> Vec<Jet> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut acc = self.inverse[i][0] * f.partial(0);
                for j in 1..n {
                    acc = acc + self.inverse[i][j] * f.partial(j);
                }
                acc
            })
            .collect()
    }

    /// `∇f = g^{ij} ∂_j f X_i`.
    pub fn gradient(&self, f: &Jet) -> JetVec {
        let coeffs = self.gradient_coefficients(f);
        let mut out = self.tangents[0].scaled(coeffs[0]);
        for (c, t) in coeffs.iter().zip(&self.tangents).skip(1) {
            out.axpy(*c, t);
        }
        out
    }

    /// `Δf = g^{ij}(∂_ij f − Γ^k_ij ∂_k f)`.
    pub fn laplacian(&self, f: &Jet) -> Jet {
        let n = self.n;
        let df: Vec<Jet> = (0..n).map(|k| f.partial(k)).collect();
        let mut acc = Jet::zero(n);
        for i in 0..n {
            for j in 0..n {
                let mut hess = df[i].partial(j);
                for (k, dk) in df.iter().enumerate() {
                    hess = hess - self.christoffel[k][i][j] * *dk;
                }
                acc = acc + self.inverse[i][j] * hess;
            }
        }
        acc
    }

    /// `⟨T, ∇f⟩ = g^{ij}⟨T, X_i⟩ ∂_j f`.
    pub fn drift(&self, f: &Jet, translation: &[f64]) -> Jet {
        let coeffs = self.gradient_coefficients(f);
        let mut acc = Jet::zero(self.n);
        for (c, t) in coeffs.iter().zip(&self.tangents) {
            acc = acc + *c * t.dot_const(translation);
        }
        acc
    }

    /// `𝓛f = Δf + ⟨T, ∇f⟩`.
    pub fn drifted_laplacian(&self, f: &Jet, translation: &[f64]) -> Jet {
        self.laplacian(f) + self.drift(f, translation)
    }

    /// Components `(T^T)^i = g^{ij}⟨T, X_j⟩`.
    pub fn tangential_translation(&self, translation: &[f64]) -> Vec<Jet> {
        self.tangent_coefficients(&JetVec::constant(self.n, translation))
    }

    /// `h_ij = (X_ij)^⊥`, indexed `[i][j]`.
    pub fn second_fundamental_form(&self) -> Vec<Vec<JetVec>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.normal_part(&self.tangents[i].partial(j))).collect()).collect()
    }

    /// `H = g^{ij} h_ij` (full trace, so that `Δx = H`).
    pub fn mean_curvature(&self) -> JetVec {
        let h = self.second_fundamental_form();
        let mut out = JetVec::zeros(self.n, self.ambient_dim());
        for i in 0..self.n {
            for j in 0..self.n {
                out.axpy(self.inverse[i][j], &h[i][j]);
            }
        }
        out
    }

    /// Normal connection `∇^⊥_i V = (∂_i V)^⊥`.
    pub fn normal_connection(&self, v: &JetVec, i: usize) -> JetVec {
        self.normal_part(&v.partial(i))
    }

    /// The stability operator `LV = Δ^⊥V + ∇^⊥_{T^T}V + g^{ik}g^{jl}⟨h_ij, V⟩h_kl`
    /// at this node. `V` must be a normal field known to second order.
    pub fn stability_operator(&self, v: &JetVec, translation: &[f64]) -> Vec<f64> {
        let n = self.n;
        let dim = self.ambient_dim();
        let first: Vec<JetVec> = (0..n).map(|i| self.normal_connection(v, i)).collect();
        let mut out = vec![0.0; dim];
        // Δ^⊥V = g^{ij}(∇^⊥_i∇^⊥_j V − Γ^k_ij ∇^⊥_k V)
        for i in 0..n {
            for j in 0..n {
                let second = self.normal_connection(&first[j], i).values();
                let gij = self.inverse[i][j].value();
                for c in 0..dim {
                    let mut term = second[c];
                    for (k, fk) in first.iter().enumerate() {
                        term -= self.christoffel[k][i][j].value() * fk.0[c].value();
                    }
                    out[c] += gij * term;
                }
            }
        }
        // ∇^⊥_{T^T}V
        let tt = self.tangential_translation(translation);
        for (coef, fi) in tt.iter().zip(&first) {
            for c in 0..dim {
                out[c] += coef.value() * fi.0[c].value();
            }
        }
        // ⟨⟨A, V⟩, A⟩
        let h: Vec<Vec<Vec<f64>>> =
            self.second_fundamental_form().iter().map(|row| row.iter().map(JetVec::values).collect()).collect();
        let vv = v.values();
        let ginv = |a: usize, b: usize| self.inverse[a][b].value();
        for i in 0..n {
            for j in 0..n {
                let hv = dot(&h[i][j], &vv);
                for k in 0..n {
                    for l in 0..n {
                        let coef = ginv(i, k) * ginv(j, l) * hv;
                        for c in 0..dim {
                            out[c] += coef * h[k][l][c];
                        }
                    }
                }
            }
        }
        out
    }
}

/// Pointwise metric data on the interior nodes.
#[derive(Clone, Debug)]
pub struct MetricData {
    pub n: usize,
    pub metric: Vec<Mat>,
    pub inverse: Vec<Mat>,
    pub sqrt_det: Vec<f64>,
    /// `christoffel[node][k][i][j] = Γ^k_ij`
    pub christoffel: Vec<Vec<Mat>>,
}

pub fn metric_data(patch: &ImmersedPatch) -> MetricData {
    let n = patch.dim();
    let rows: Vec<(Mat, Mat, f64, Vec<Mat>)> = (0..patch.len())
        .into_par_iter()
        .map(|p| {
            let geo = patch.local(p);
            let val = |m: &JetMat| {
                let mut out = [[0.0; MAX_PARAMS]; MAX_PARAMS];
                for i in 0..n {
                    for j in 0..n {
                        out[i][j] = m[i][j].value();
                    }
                }
                out
            };
            (val(&geo.metric), val(&geo.inverse), geo.sqrt_det.value(), geo.christoffel.iter().map(val).collect())
        })
        .collect();
    let mut data = MetricData {
        n,
        metric: Vec::with_capacity(rows.len()),
        inverse: Vec::with_capacity(rows.len()),
        sqrt_det: Vec::with_capacity(rows.len()),
        christoffel: Vec::with_capacity(rows.len()),
    };
    for (g, gi, s, c) in rows {
        data.metric.push(g);
        data.inverse.push(gi);
        data.sqrt_det.push(s);
        data.christoffel.push(c);
    }
    data
}

/// Second fundamental form data on the interior nodes.
#[derive(Clone, Debug)]
pub struct SffData {
    pub n: usize,
    /// `h[node][i][j]`: the normal vector `h(X_i, X_j)`.
    pub h: Vec<Vec<Vec<Vec<f64>>>>,
    /// `H` per node.
    pub mean_curvature: Vec<Vec<f64>>,
    framed: Option<FramedSff>,
}

/// Components in the frame `ν_α = J X_α`, available on Lagrangian patches.
#[derive(Clone, Debug)]
pub struct FramedSff {
    /// `frame[node][α]`
    pub frame: Vec<Vec<Vec<f64>>>,
    /// `components[node][α][i][j] = h_ij^α` with `h(X_i, X_j) = h_ij^α ν_α`.
    pub components: Vec<Vec<Mat>>,
    /// `cubic[node][i][j][k] = ⟨h(X_i, X_j), J X_k⟩`.
    pub cubic: Vec<Vec<Mat>>,
}

impl SffData {
    pub fn framed(&self) -> Result<&FramedSff> {
        self.framed
            .as_ref()
            .ok_or_else(|| Error::Unsupported("framed second fundamental form needs a Lagrangian patch".into()))
    }

    /// `max |C_ijk − C_ikj|` over all nodes and indices.
    pub fn cubic_asymmetry(&self) -> Result<f64> {
        let framed = self.framed()?;
        let n = self.n;
        let mut worst: f64 = 0.0;
        for c in &framed.cubic {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        worst = worst.max((c[i][j][k] - c[i][k][j]).abs());
                    }
                }
            }
        }
        Ok(worst)
    }
}

pub fn second_fundamental_form(patch: &ImmersedPatch, metric: &MetricData) -> SffData {
    let n = patch.dim();
    let lagrangian = patch.is_lagrangian();
    type Row = (Vec<Vec<Vec<f64>>>, Vec<f64>, Option<(Vec<Vec<f64>>, Vec<Mat>, Vec<Mat>)>);
    let rows: Vec<Row> = (0..patch.len())
        .into_par_iter()
        .map(|p| {
            let geo = patch.local(p);
            let h: Vec<Vec<Vec<f64>>> =
                geo.second_fundamental_form().iter().map(|row| row.iter().map(JetVec::values).collect()).collect();
            let ginv = &metric.inverse[p];
            let mut mean = vec![0.0; patch.ambient_dim()];
            for i in 0..n {
                for j in 0..n {
                    for (m, x) in mean.iter_mut().zip(&h[i][j]) {
                        *m += ginv[i][j] * x;
                    }
                }
            }
            let framed = lagrangian.then(|| {
                let frame: Vec<Vec<f64>> = patch.tangents(p).iter().map(|t| apply_j(t)).collect();
                let mut cubic = vec![[[0.0; MAX_PARAMS]; MAX_PARAMS]; n];
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            cubic[i][j][k] = dot(&h[i][j], &frame[k]);
                        }
                    }
                }
                // ⟨J X_a, J X_b⟩ = g_ab, so raising with g^{αβ} gives frame coefficients.
                let mut comps = vec![[[0.0; MAX_PARAMS]; MAX_PARAMS]; n];
                for a in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            comps[a][i][j] = (0..n).map(|b| ginv[a][b] * cubic[i][j][b]).sum();
                        }
                    }
                }
                (frame, comps, cubic)
            });
            (h, mean, framed)
        })
        .collect();
    let mut h = Vec::with_capacity(rows.len());
    let mut mean = Vec::with_capacity(rows.len());
    let mut framed = lagrangian.then(|| FramedSff { frame: vec![], components: vec![], cubic: vec![] });
    for (hp, mp, fp) in rows {
        h.push(hp);
        mean.push(mp);
        if let (Some(f), Some((frame, comps, cubic))) = (framed.as_mut(), fp) {
            f.frame.push(frame);
            f.components.push(comps);
            f.cubic.push(cubic);
        }
    }
    SffData { n, h, mean_curvature: mean, framed }
}

/// Split an ambient field sampled on the interior nodes into tangential and
/// normal parts.
pub fn project(patch: &ImmersedPatch, field: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if field.len() != patch.len() {
        return Err(Error::FieldMismatch(format!("{} samples for {} nodes", field.len(), patch.len())));
    }
    let n = patch.dim();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..patch.len())
        .into_par_iter()
        .map(|p| {
            let t = patch.tangents(p);
            let (g, _) = metric_value(&patch.jets[p], n);
            let gi = invert(&g, n);
            let w = &field[p];
            let inner: Vec<f64> = t.iter().map(|ti| dot(w, ti)).collect();
            let mut tan = vec![0.0; w.len()];
            for a in 0..n {
                let c: f64 = (0..n).map(|b| gi[a][b] * inner[b]).sum();
                for (x, ta) in tan.iter_mut().zip(&t[a]) {
                    *x += c * ta;
                }
            }
            let nor: Vec<f64> = w.iter().zip(&tan).map(|(a, b)| a - b).collect();
            (tan, nor)
        })
        .collect();
    Ok(parts.into_iter().unzip())
}

/// Largest `|v|` over a sampled ambient field.
pub fn sup_norm(field: &[Vec<f64>]) -> f64 {
    field.iter().map(|v| norm(v)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn flat_chart() -> impl Chart {
        JetChart::new(2, 4, |u: &[Jet]| vec![u[0], Jet::zero(2), u[1], Jet::zero(2)]).lagrangian()
    }

    fn ambient4() -> AmbientStructure {
        AmbientStructure::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn flat_plane_has_identity_metric() {
        let grid = ParameterGrid::uniform(&[(0.0, 1.0), (0.0, 1.0)], 9).unwrap();
        for backend in [Backend::Analytic, Backend::FiniteDifference] {
            let patch = build_patch(&flat_chart(), &grid, &ambient4(), backend).unwrap();
            assert!(patch.is_lagrangian());
            let m = metric_data(&patch);
            for p in 0..patch.len() {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((m.metric[p][i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
                        for k in 0..2 {
                            assert!(m.christoffel[p][k][i][j].abs() < 1e-12);
                        }
                    }
                }
            }
            let sff = second_fundamental_form(&patch, &m);
            assert!(sff.mean_curvature.iter().all(|h| norm(h) < 1e-12));
            assert_eq!(patch.max_lagrangian_defect().unwrap(), 0.0);
        }
    }

    #[test]
    fn collapsing_axis_is_rejected() {
        let chart = JetChart::new(2, 4, |u: &[Jet]| vec![u[0], Jet::zero(2), u[0], Jet::zero(2)]);
        let grid = ParameterGrid::uniform(&[(0.0, 1.0), (0.0, 1.0)], 7).unwrap();
        let err = build_patch(&chart, &grid, &ambient4(), Backend::Analytic).unwrap_err();
        assert!(matches!(err, Error::DegenerateMetric { ref node, .. } if node == &vec![0, 0]), "{err}");
    }

    #[test]
    fn non_lagrangian_plane_has_unit_defect() {
        // span{∂x₁, ∂y₁} in ℂ²
        let chart = JetChart::new(2, 4, |u: &[Jet]| vec![u[0], u[1], Jet::zero(2), Jet::zero(2)]);
        let grid = ParameterGrid::uniform(&[(0.0, 1.0), (0.0, 1.0)], 5).unwrap();
        let patch = build_patch(&chart, &grid, &ambient4(), Backend::Analytic).unwrap();
        assert!(!patch.is_lagrangian());
        assert_eq!(patch.max_lagrangian_defect().unwrap(), 1.0);
        let m = metric_data(&patch);
        let sff = second_fundamental_form(&patch, &m);
        assert!(matches!(sff.framed(), Err(Error::Unsupported(_))));
        let claimed = JetChart::new(2, 4, |u: &[Jet]| vec![u[0], u[1], Jet::zero(2), Jet::zero(2)]).lagrangian();
        assert!(matches!(
            build_patch(&claimed, &grid, &ambient4(), Backend::Analytic),
            Err(Error::NotLagrangian { .. })
        ));
    }

    #[test]
    fn defect_needs_even_ambient_dimension() {
        let chart = JetChart::new(1, 3, |u: &[Jet]| vec![u[0], u[0].square(), Jet::zero(1)]);
        let grid = ParameterGrid::new(vec![Axis::new(0.0, 1.0, 5)]).unwrap();
        let amb = AmbientStructure::new(vec![0.0, 1.0, 0.0]).unwrap();
        let patch = build_patch(&chart, &grid, &amb, Backend::Analytic).unwrap();
        assert!(matches!(patch.lagrangian_defect(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn analytic_backend_needs_jets() {
        struct Positions;
        impl Chart for Positions {
            fn param_dim(&self) -> usize {
                1
            }
            fn ambient_dim(&self) -> usize {
                2
            }
            fn position(&self, u: &[f64]) -> Vec<f64> {
                vec![u[0], u[0] * u[0]]
            }
        }
        let grid = ParameterGrid::uniform(&[(0.0, 1.0)], 9).unwrap();
        let amb = AmbientStructure::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(build_patch(&Positions, &grid, &amb, Backend::Analytic).unwrap_err(), Error::MissingJets);
        let patch = build_patch(&Positions, &grid, &amb, Backend::FiniteDifference).unwrap();
        assert_eq!(patch.len(), 5);
        // Parabola: differences are exact up to rounding.
        let x = &patch.jets()[2].0[1];
        assert!((x.dd(0, 0) - 2.0).abs() < 1e-10);
        assert!(x.ddd(0, 0, 0).abs() < 1e-8);
    }

    #[test]
    fn projection_splits_exactly() {
        let chart = JetChart::new(2, 4, |u: &[Jet]| vec![u[0], u[0].sin() * u[1], u[1], u[0] * u[1].square()]);
        let grid = ParameterGrid::uniform(&[(0.0, 1.0), (0.0, 1.0)], 6).unwrap();
        let patch = build_patch(&chart, &grid, &ambient4(), Backend::Analytic).unwrap();
        let w: Vec<Vec<f64>> = (0..patch.len()).map(|p| vec![1.0, -2.0, 0.5 + p as f64 * 0.01, 3.0]).collect();
        let (t, nrm) = project(&patch, &w).unwrap();
        for p in 0..patch.len() {
            let scale = dot(&w[p], &w[p]);
            assert!(dot(&t[p], &nrm[p]).abs() <= 1e-10 * scale);
            for c in 0..4 {
                assert!((t[p][c] + nrm[p][c] - w[p][c]).abs() < 1e-14);
            }
        }
        // idempotent
        let (t2, n2) = project(&patch, &t).unwrap();
        let (t3, n3) = project(&patch, &nrm).unwrap();
        assert!(sup_norm(&n2) < 1e-12 && sup_norm(&t3) < 1e-12);
        let diff: Vec<Vec<f64>> = t2
            .iter()
            .zip(&t)
            .chain(n3.iter().zip(&nrm))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        assert!(sup_norm(&diff) < 1e-12);
        // W = X_1 is tangent
        let x1: Vec<Vec<f64>> = (0..patch.len()).map(|p| patch.tangents(p)[0].clone()).collect();
        let (_, nx) = project(&patch, &x1).unwrap();
        assert!(sup_norm(&nx) < 1e-14);
    }

    #[test]
    fn metric_inverse_and_christoffel_symmetry() {
        let chart = JetChart::new(2, 4, |u: &[Jet]| vec![u[0].cos() * u[1], u[0].sin() * u[1], u[1], u[0].exp()]);
        let grid = ParameterGrid::uniform(&[(0.0, 1.0), (1.0, 2.0)], 6).unwrap();
        let patch = build_patch(&chart, &grid, &ambient4(), Backend::Analytic).unwrap();
        let m = metric_data(&patch);
        for p in 0..patch.len() {
            for i in 0..2 {
                for j in 0..2 {
                    let prod: f64 = (0..2).map(|k| m.metric[p][i][k] * m.inverse[p][k][j]).sum();
                    assert!((prod - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
                    assert_eq!(m.metric[p][i][j], m.metric[p][j][i]);
                    for k in 0..2 {
                        assert_eq!(m.christoffel[p][k][i][j], m.christoffel[p][k][j][i]);
                    }
                }
            }
            // Γ^k_ij = g^{kl}⟨X_ij, X_l⟩
            let x = &patch.jets()[p];
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let direct: f64 = (0..2)
                            .map(|l| {
                                let xij_xl: f64 = x.0.iter().map(|c| c.dd(i, j) * c.d(l)).sum();
                                m.inverse[p][k][l] * xij_xl
                            })
                            .sum();
                        assert!((direct - m.christoffel[p][k][i][j]).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
