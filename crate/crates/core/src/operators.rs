//! Fields on a patch and the operators acting on them: gradient, drifted
//! Laplacian `𝓛`, normal connection, stability operator `L`, Hamiltonian
//! fields `J∇f`, smooth cutoffs and weighted trapezoid quadrature.
//!
//! Fields are stored as jets at the patch's interior nodes, in the patch's
//! node order. Every operator is a pure per-node map; reductions run in
//! node order so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::{apply_j_jet, dot, norm};
use crate::error::{Error, Result};
use crate::grid::ParameterGrid;
use crate::jet::{Jet, JetVec};
use crate::patch::{metric_value, ImmersedPatch};

/// Orthogonality tolerance for normal fields, relative to `|V| |X_i|`.
pub const NORMAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    FullWindow,
    /// Vanishes identically on the `margin` node layers next to every face.
    Compact {
        margin: usize,
    },
}

impl Support {
    pub fn is_compact(self) -> bool {
        matches!(self, Support::Compact { .. })
    }

    /// Support of a product of two fields.
    pub fn meet(self, other: Support) -> Support {
        match (self, other) {
            (Support::Compact { margin: a }, Support::Compact { margin: b }) => Support::Compact { margin: a.max(b) },
            (c @ Support::Compact { .. }, _) | (_, c @ Support::Compact { .. }) => c,
            _ => Support::FullWindow,
        }
    }
}

fn check_len(patch: &ImmersedPatch, len: usize) -> Result<()> {
    if len == patch.len() {
        Ok(())
    } else {
        Err(Error::FieldMismatch(format!("{len} samples for {} interior nodes", patch.len())))
    }
}

fn check_support(patch: &ImmersedPatch, support: Support, vanishes: impl Fn(usize) -> bool) -> Result<()> {
    if let Support::Compact { margin } = support {
        if margin < patch.grid().margin() + 1 {
            return Err(Error::Hypothesis(format!(
                "support margin {margin} must exceed the stencil margin {}",
                patch.grid().margin()
            )));
        }
        for (p, idx) in patch.nodes().iter().enumerate() {
            if patch.grid().layers_from_face(idx) < margin && !vanishes(p) {
                return Err(Error::Hypothesis(format!(
                    "field declared compactly supported is nonzero at node {idx:?}"
                )));
            }
        }
    }
    Ok(())
}

/// A function on the patch, with derivatives when it was produced analytically.
#[derive(Clone, Debug)]
pub struct ScalarField {
    jets: Vec<Jet>,
    support: Support,
}

impl ScalarField {
    pub fn new(patch: &ImmersedPatch, jets: Vec<Jet>, support: Support) -> Result<Self> {
        check_len(patch, jets.len())?;
        check_support(patch, support, |p| jets[p].value() == 0.0)?;
        Ok(ScalarField { jets, support })
    }

    /// Build from a function of the coordinate jets `u_1..u_n`.
    pub fn from_fn(patch: &ImmersedPatch, support: Support, f: impl Fn(&[Jet]) -> Jet + Sync) -> Result<Self> {
        let n = patch.dim();
        let jets = (0..patch.len())
            .into_par_iter()
            .map(|p| {
                let u: Vec<Jet> = patch.coords(p).iter().enumerate().map(|(i, &x)| Jet::variable(n, i, x)).collect();
                f(&u)
            })
            .collect();
        Self::new(patch, jets, support)
    }

    pub fn constant(patch: &ImmersedPatch, c: f64) -> Self {
        ScalarField { jets: vec![Jet::constant(patch.dim(), c); patch.len()], support: Support::FullWindow }
    }

    /// The ambient coordinate `x^A` restricted to the patch.
    pub fn ambient_coordinate(patch: &ImmersedPatch, axis: usize) -> Self {
        ScalarField { jets: patch.jets().iter().map(|x| x.0[axis]).collect(), support: Support::FullWindow }
    }

    pub fn jets(&self) -> &[Jet] {
        &self.jets
    }

    pub fn values(&self) -> Vec<f64> {
        self.jets.iter().map(Jet::value).collect()
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn len(&self) -> usize {
        self.jets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jets.is_empty()
    }

    pub fn product(&self, other: &ScalarField) -> ScalarField {
        ScalarField {
            jets: self.jets.iter().zip(&other.jets).map(|(a, b)| *a * *b).collect(),
            support: self.support.meet(other.support),
        }
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        ScalarField { jets: self.jets.iter().map(|j| j.scale(factor)).collect(), support: self.support }
    }

    pub fn sup_norm(&self) -> f64 {
        self.jets.iter().map(|j| j.value().abs()).fold(0.0, f64::max)
    }
}

/// A tangent vector field, e.g. a gradient.
#[derive(Clone, Debug)]
pub struct TangentField {
    vectors: Vec<JetVec>,
}

impl TangentField {
    pub fn vectors(&self) -> &[JetVec] {
        &self.vectors
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(JetVec::values).collect()
    }
}

/// A section of the normal bundle used as a variation field.
#[derive(Clone, Debug)]
pub struct NormalField {
    vectors: Vec<JetVec>,
    support: Support,
}

impl NormalField {
    /// Checked constructor: every vector must be orthogonal to the tangent
    /// space to within `NORMAL_TOLERANCE`.
    pub fn new(patch: &ImmersedPatch, vectors: Vec<JetVec>, support: Support) -> Result<Self> {
        check_len(patch, vectors.len())?;
        check_support(patch, support, |p| vectors[p].0.iter().all(|c| c.value() == 0.0))?;
        let field = NormalField { vectors, support };
        let ratio = field.tangential_ratio(patch);
        if ratio > NORMAL_TOLERANCE {
            return Err(Error::FieldMismatch(format!("field is not normal: |⟨V, X_i⟩| / (|V||X_i|) = {ratio:e}")));
        }
        Ok(field)
    }

    pub(crate) fn unchecked(vectors: Vec<JetVec>, support: Support) -> Self {
        NormalField { vectors, support }
    }

    pub fn zero(patch: &ImmersedPatch) -> Self {
        NormalField {
            vectors: vec![JetVec::zeros(patch.dim(), patch.ambient_dim()); patch.len()],
            support: Support::Compact { margin: patch.grid().margin() + 1 },
        }
    }

    /// `y^⊥` for a constant ambient vector `y`.
    pub fn constant_normal_part(patch: &ImmersedPatch, y: &[f64]) -> Self {
        let n = patch.dim();
        let vectors =
            (0..patch.len()).into_par_iter().map(|p| patch.local(p).normal_part(&JetVec::constant(n, y))).collect();
        NormalField { vectors, support: Support::FullWindow }
    }

    /// Pointwise product `f V`.
    pub fn scaled_by(&self, f: &ScalarField) -> NormalField {
        NormalField {
            vectors: self.vectors.iter().zip(f.jets()).map(|(v, s)| v.scaled(*s)).collect(),
            support: self.support.meet(f.support()),
        }
    }

    pub fn scaled(&self, factor: f64) -> NormalField {
        NormalField { vectors: self.vectors.iter().map(|v| v.scaled_const(factor)).collect(), support: self.support }
    }

    pub fn vectors(&self) -> &[JetVec] {
        &self.vectors
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(JetVec::values).collect()
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.vectors.iter().map(|v| norm(&v.values())).fold(0.0, f64::max)
    }

    /// `max |⟨V, X_i⟩| / (|V| |X_i|)` over nodes where `V ≠ 0`.
    pub fn tangential_ratio(&self, patch: &ImmersedPatch) -> f64 {
        (0..patch.len())
            .into_par_iter()
            .map(|p| {
                let v = self.vectors[p].values();
                let nv = norm(&v);
                if nv == 0.0 {
                    return 0.0;
                }
                patch.tangents(p).iter().map(|t| dot(&v, t).abs() / (nv * norm(t))).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Per-node weights of `e^⟨T,x⟩ dμ` for composite trapezoid quadrature.
#[derive(Clone, Debug)]
pub struct WeightedMeasure {
    weights: Vec<f64>,
}

impl WeightedMeasure {
    pub fn new(patch: &ImmersedPatch, translation: &[f64]) -> Self {
        let weights = (0..patch.len())
            .into_par_iter()
            .map(|p| density(patch, p, translation) * patch.grid().trapezoid_weight(&patch.nodes()[p]))
            .collect();
        WeightedMeasure { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_p f_p` in node order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, f)| w * f).sum()
    }

    /// Weighted L² norm of a vector field.
    pub fn l2_norm(&self, field: &[Vec<f64>]) -> f64 {
        self.integrate(&field.iter().map(|v| dot(v, v)).collect::<Vec<_>>()).sqrt()
    }
}

/// `e^⟨T,x⟩ √det g` at an interior node.
pub(crate) fn density(patch: &ImmersedPatch, node: usize, translation: &[f64]) -> f64 {
    let x = &patch.jets()[node];
    let (_, det) = metric_value(x, patch.dim());
    dot(&x.values(), translation).exp() * det.sqrt()
}

/// `∫ integrand · e^⟨T,x⟩ dμ` over the window.
pub fn weighted_integral(patch: &ImmersedPatch, translation: &[f64], integrand: &[f64]) -> Result<f64> {
    check_len(patch, integrand.len())?;
    Ok(WeightedMeasure::new(patch, translation).integrate(integrand))
}

/// `∇f = g^{ij} ∂_j f X_i`.
pub fn gradient(patch: &ImmersedPatch, f: &ScalarField) -> Result<TangentField> {
    check_len(patch, f.len())?;
    let vectors = (0..patch.len()).into_par_iter().map(|p| patch.local(p).gradient(&f.jets[p])).collect();
    Ok(TangentField { vectors })
}

/// `𝓛f = Δf + ⟨T, ∇f⟩` in non-divergence form.
pub fn drifted_laplacian(patch: &ImmersedPatch, translation: &[f64], f: &ScalarField) -> Result<ScalarField> {
    check_len(patch, f.len())?;
    let jets =
        (0..patch.len()).into_par_iter().map(|p| patch.local(p).drifted_laplacian(&f.jets[p], translation)).collect();
    Ok(ScalarField { jets, support: f.support })
}

/// `∇^⊥_i V`.
pub fn normal_connection(patch: &ImmersedPatch, v: &NormalField, axis: usize) -> Result<NormalField> {
    check_len(patch, v.len())?;
    if axis >= patch.dim() {
        return Err(Error::FieldMismatch(format!("direction {axis} out of range")));
    }
    let vectors =
        (0..patch.len()).into_par_iter().map(|p| patch.local(p).normal_connection(&v.vectors[p], axis)).collect();
    Ok(NormalField::unchecked(vectors, v.support))
}

/// `LV = Δ^⊥V + ∇^⊥_{T^T}V + ⟨⟨A, V⟩, A⟩`.
pub fn stability_operator(patch: &ImmersedPatch, translation: &[f64], v: &NormalField) -> Result<NormalField> {
    patch.require_lagrangian("the stability operator")?;
    check_len(patch, v.len())?;
    let n = patch.dim();
    let vectors = (0..patch.len())
        .into_par_iter()
        .map(|p| {
            let out = patch.local(p).stability_operator(&v.vectors[p], translation);
            JetVec(out.into_iter().map(|x| Jet::sample(n, x)).collect())
        })
        .collect();
    Ok(NormalField::unchecked(vectors, v.support))
}

/// The Hamiltonian variation `V = J∇f`.
pub fn hamiltonian_field(patch: &ImmersedPatch, f: &ScalarField) -> Result<NormalField> {
    patch.require_lagrangian("a Hamiltonian field")?;
    check_len(patch, f.len())?;
    let vectors = (0..patch.len()).into_par_iter().map(|p| apply_j_jet(&patch.local(p).gradient(&f.jets[p]))).collect();
    Ok(NormalField::unchecked(vectors, f.support))
}

/// `[χ, χ', χ'', χ''']` of `χ(t) = exp(1 − 1/(1 − t²))` for `|t| < 1`.
fn bump_profile(t: f64) -> [f64; 4] {
    let s = 1.0 - t * t;
    let chi = (1.0 - 1.0 / s).exp();
    let p1 = -2.0 * t / (s * s);
    let p2 = -2.0 / (s * s) - 8.0 * t * t / (s * s * s);
    let p3 = -24.0 * t / (s * s * s) - 48.0 * t * t * t / (s * s * s * s);
    [chi, chi * p1, chi * (p1 * p1 + p2), chi * (p1 * p1 * p1 + 3.0 * p1 * p2 + p3)]
}

/// Product over axes of the smooth bump `χ`, rescaled per axis so that it
/// vanishes on the `margin` node layers next to every face.
pub fn cutoff_bump(grid: &ParameterGrid, margin: usize) -> Result<ScalarField> {
    if margin < grid.margin() + 1 {
        return Err(Error::Hypothesis(format!(
            "cutoff margin {margin} must exceed the stencil margin {}",
            grid.margin()
        )));
    }
    let n = grid.dim();
    for (axis, a) in grid.axes().iter().enumerate() {
        // at least one node strictly inside the support
        if a.nodes < 2 * margin + 3 || a.hi == a.lo {
            return Err(Error::EmptySupport { axis, margin });
        }
    }
    let jets = grid
        .interior_nodes()
        .par_iter()
        .map(|idx| {
            let mut acc = Jet::constant(n, 1.0);
            for (axis, (&k, a)) in idx.iter().zip(grid.axes()).enumerate() {
                let span = (a.nodes - 1 - 2 * margin) as f64;
                // exact in node arithmetic, so reflection symmetry is exact
                let t = (2.0 * k as f64 - (a.nodes - 1) as f64) / span;
                if t.abs() >= 1.0 {
                    return Jet::zero(n);
                }
                let slope = 2.0 / (span * a.spacing());
                acc = acc * Jet::affine(n, axis, t, slope).compose(bump_profile(t));
            }
            acc
        })
        .collect();
    Ok(ScalarField { jets, support: Support::Compact { margin } })
}

/// The bump `χ` rescaled to a fixed parameter sub-box, so that the field
/// does not depend on the resolution. Its support margin is measured on
/// `grid` and must exceed the stencil margin.
pub fn cutoff_bump_on(grid: &ParameterGrid, sub_window: &[(f64, f64)]) -> Result<ScalarField> {
    let n = grid.dim();
    if sub_window.len() != n {
        return Err(Error::FieldMismatch(format!("sub-window has {} axes, grid has {n}", sub_window.len())));
    }
    let mut margin = usize::MAX;
    for (axis, (a, &(lo, hi))) in grid.axes().iter().zip(sub_window).enumerate() {
        if !(hi > lo) {
            return Err(Error::EmptySupport { axis, margin: 0 });
        }
        let outside = |k: usize| {
            let u = a.coord(k);
            u <= lo || u >= hi
        };
        let left = (0..a.nodes).take_while(|&k| outside(k)).count();
        let right = (0..a.nodes).rev().take_while(|&k| outside(k)).count();
        if left == a.nodes {
            return Err(Error::EmptySupport { axis, margin: left });
        }
        margin = margin.min(left).min(right);
    }
    if margin < grid.margin() + 1 {
        return Err(Error::Hypothesis(format!(
            "sub-window leaves {margin} vanishing layers, need more than the stencil margin {}",
            grid.margin()
        )));
    }
    let jets = grid
        .interior_nodes()
        .par_iter()
        .map(|idx| {
            let mut acc = Jet::constant(n, 1.0);
            for (axis, (u, &(lo, hi))) in grid.coords(idx).into_iter().zip(sub_window).enumerate() {
                let t = (2.0 * u - (lo + hi)) / (hi - lo);
                if t.abs() >= 1.0 {
                    return Jet::zero(n);
                }
                acc = acc * Jet::affine(n, axis, t, 2.0 / (hi - lo)).compose(bump_profile(t));
            }
            acc
        })
        .collect();
    Ok(ScalarField { jets, support: Support::Compact { margin } })
}
