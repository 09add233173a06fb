//! Explicit translating solitons with closed-form jets.
//!
//! Every catalog entry is a product of planar curves, one per complex line
//! `span{∂x_k, ∂y_k}`: either the straight line `y = 0` or the scaled grim
//! reaper `y = −(1/c) log cos(c u)`, which translates with speed `c` in the
//! `∂y_k` direction. Products of curves in orthogonal complex lines are
//! Lagrangian, and both the mean curvature and `T^⊥` split factor by factor.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::{dot, AmbientStructure};
use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, MIN_NODES};
use crate::jet::{Jet, JetVec, MAX_PARAMS};
use crate::operators::WeightedMeasure;
use crate::patch::{build_patch, Backend, Chart, ImmersedPatch};

/// Fraction of the maximal symmetric interval used for default grim reaper windows.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolitonKind {
    FlatPlane,
    GrimReaperCylinder,
    GrimReaperProduct,
}

impl SolitonKind {
    pub const ALL: [SolitonKind; 3] =
        [SolitonKind::FlatPlane, SolitonKind::GrimReaperCylinder, SolitonKind::GrimReaperProduct];

    pub fn name(self) -> &'static str {
        match self {
            SolitonKind::FlatPlane => "flat-plane",
            SolitonKind::GrimReaperCylinder => "grim-reaper-cylinder",
            SolitonKind::GrimReaperProduct => "grim-reaper-product",
        }
    }
}

impl fmt::Display for SolitonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolitonKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SolitonKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = SolitonKind::ALL.iter().map(|k| k.name()).collect();
            Error::InvalidSpec(format!("unknown soliton '{s}' (available: {})", names.join(", ")))
        })
    }
}

/// A catalog soliton on a parameter window at a given resolution.
///
/// `speeds` means: per-axis grim reaper speeds `c_k` for the product family;
/// the tangent components of `T` along `∂x_k` for the flat plane; unused
/// (empty) for the cylinder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub name: SolitonKind,
    pub n: usize,
    pub speeds: Vec<f64>,
    pub window: Vec<(f64, f64)>,
    pub resolution: usize,
}

impl SolitonSpec {
    pub fn flat_plane(n: usize, tangent_translation: Vec<f64>) -> Self {
        Self::with_default_window(SolitonKind::FlatPlane, n, tangent_translation)
    }

    pub fn grim_reaper_cylinder(n: usize) -> Self {
        Self::with_default_window(SolitonKind::GrimReaperCylinder, n, vec![])
    }

    pub fn grim_reaper_product(speeds: Vec<f64>) -> Self {
        Self::with_default_window(SolitonKind::GrimReaperProduct, speeds.len(), speeds)
    }

    /// Default speeds for a family: unit speeds, or `T = ∂x₁` for the plane.
    pub fn default_speeds(name: SolitonKind, n: usize) -> Vec<f64> {
        match name {
            SolitonKind::FlatPlane => (0..n).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect(),
            SolitonKind::GrimReaperCylinder => vec![],
            SolitonKind::GrimReaperProduct => vec![1.0; n],
        }
    }

    pub fn with_default_window(name: SolitonKind, n: usize, speeds: Vec<f64>) -> Self {
        let mut spec = SolitonSpec { name, n, speeds, window: vec![], resolution: 64 };
        spec.window = spec.default_window();
        spec
    }

    pub fn window(mut self, window: Vec<(f64, f64)>) -> Self {
        self.window = window;
        self
    }

    pub fn resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    /// Grim reaper speed on each axis (`None` for straight factors).
    pub fn factor_speeds(&self) -> Vec<Option<f64>> {
        (0..self.n)
            .map(|k| match self.name {
                SolitonKind::FlatPlane => None,
                SolitonKind::GrimReaperCylinder => (k == 0).then_some(1.0),
                SolitonKind::GrimReaperProduct => self.speeds.get(k).copied(),
            })
            .collect()
    }

    /// `DEFAULT_WINDOW_FRACTION` of `(−π/(2c), π/(2c))` on grim reaper axes, `[0, 1]` elsewhere.
    pub fn default_window(&self) -> Vec<(f64, f64)> {
        self.factor_speeds()
            .into_iter()
            .map(|c| match c {
                Some(c) if c > 0.0 => {
                    let half = DEFAULT_WINDOW_FRACTION * FRAC_PI_2 / c;
                    (-half, half)
                }
                _ => (0.0, 1.0),
            })
            .collect()
    }

    /// The translation vector `T` in interleaved coordinates.
    pub fn translation(&self) -> Vec<f64> {
        let mut t = vec![0.0; 2 * self.n];
        match self.name {
            SolitonKind::FlatPlane => {
                for (k, &s) in self.speeds.iter().enumerate() {
                    t[2 * k] = s;
                }
            }
            SolitonKind::GrimReaperCylinder => t[1] = 1.0,
            SolitonKind::GrimReaperProduct => {
                for (k, &c) in self.speeds.iter().enumerate() {
                    t[2 * k + 1] = c;
                }
            }
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n == 0 || self.n > MAX_PARAMS {
            return bad(format!("dimension n = {} outside 1..={MAX_PARAMS}", self.n));
        }
        if self.window.len() != self.n {
            return bad(format!("window has {} axes, expected {}", self.window.len(), self.n));
        }
        if self.resolution < MIN_NODES {
            return bad(format!("resolution {} below {MIN_NODES}", self.resolution));
        }
        for (k, &(lo, hi)) in self.window.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                return bad(format!("axis {k}: invalid interval [{lo}, {hi}]"));
            }
        }
        match self.name {
            SolitonKind::FlatPlane => {
                if self.speeds.len() != self.n {
                    return bad(format!("flat plane needs {} tangent components of T", self.n));
                }
                if self.speeds.iter().all(|&s| s == 0.0) || self.speeds.iter().any(|s| !s.is_finite()) {
                    return bad("flat plane translation must be finite and nonzero".into());
                }
            }
            SolitonKind::GrimReaperCylinder => {
                if !self.speeds.is_empty() && self.speeds != [1.0] {
                    return bad("the cylinder has unit speed; leave speeds empty".into());
                }
            }
            SolitonKind::GrimReaperProduct => {
                if self.speeds.len() != self.n {
                    return bad(format!("product needs {} speeds, got {}", self.n, self.speeds.len()));
                }
                if let Some(c) = self.speeds.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
                    return bad(format!("speeds must be positive, got {c}"));
                }
            }
        }
        for (k, (c, &(lo, hi))) in self.factor_speeds().iter().zip(&self.window).enumerate() {
            if let Some(c) = c {
                let limit = FRAC_PI_2 / c;
                if !(lo > -limit && hi < limit) {
                    return bad(format!(
                        "axis {k}: window [{lo}, {hi}] must lie strictly inside (−π/(2c), π/(2c)) = (±{limit})"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn ambient(&self) -> Result<AmbientStructure> {
        AmbientStructure::new(self.translation())
    }

    pub fn grid(&self) -> Result<ParameterGrid> {
        ParameterGrid::uniform(&self.window, self.resolution)
    }

    pub fn chart(&self) -> ProductChart {
        ProductChart { factors: self.factor_speeds() }
    }

    pub fn build(&self, backend: Backend) -> Result<ImmersedPatch> {
        self.validate()?;
        let patch = build_patch(&self.chart(), &self.grid()?, &self.ambient()?, backend)?;
        Ok(patch.with_spec(self.clone()))
    }

    /// Closed-form `∫_window e^⟨T,x⟩ dμ`. The density factorizes per axis:
    /// `sec²(c u)` on grim reaper axes, `e^{t u}` on flat axes.
    pub fn exact_f_value(&self) -> f64 {
        let t = self.translation();
        self.factor_speeds()
            .iter()
            .zip(&self.window)
            .enumerate()
            .map(|(k, (c, &(a, b)))| match c {
                Some(c) => ((c * b).tan() - (c * a).tan()) / c,
                None => {
                    let tk = t[2 * k];
                    if tk == 0.0 {
                        b - a
                    } else {
                        ((tk * b).exp() - (tk * a).exp()) / tk
                    }
                }
            })
            .product()
    }

    /// Plain-text `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let num = |x: f64| format!("{x:.16e}");
        let speeds: Vec<String> = self.speeds.iter().map(|&s| num(s)).collect();
        let window: Vec<String> = self.window.iter().map(|&(a, b)| format!("{}:{}", num(a), num(b))).collect();
        format!(
            "name={}\nn={}\nspeeds={}\nwindow={}\nresolution={}\n",
            self.name,
            self.n,
            speeds.join(","),
            window.join(","),
            self.resolution
        )
    }

    /// Parse `key=value` lines. Missing `speeds`/`window`/`resolution` take
    /// the family defaults; unknown keys are rejected.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut name = None;
        let mut n = None;
        let mut speeds = None;
        let mut window = None;
        let mut resolution = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got '{line}'")))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = Some(value.parse::<SolitonKind>()?),
                "n" => n = Some(parse_num::<usize>(value, "n")?),
                "speeds" => speeds = Some(parse_list(value)?),
                "window" => window = Some(parse_window(value)?),
                "resolution" => resolution = Some(parse_num::<usize>(value, "resolution")?),
                other => return Err(Error::InvalidSpec(format!("unknown key '{other}'"))),
            }
        }
        let name = name.ok_or_else(|| Error::InvalidSpec("missing key 'name'".into()))?;
        let n = n.ok_or_else(|| Error::InvalidSpec("missing key 'n'".into()))?;
        let speeds = speeds.unwrap_or_else(|| Self::default_speeds(name, n));
        let mut spec = Self::with_default_window(name, n, speeds);
        if let Some(w) = window {
            spec.window = w;
        }
        if let Some(r) = resolution {
            spec.resolution = r;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::InvalidSpec(format!("cannot parse {what} from '{s}'")))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',').map(|x| parse_num::<f64>(x, "number")).collect()
}

/// `lo:hi,lo:hi,…`
pub fn parse_window(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|pair| {
            let (a, b) =
                pair.split_once(':').ok_or_else(|| Error::InvalidSpec(format!("window axis '{pair}' is not lo:hi")))?;
            Ok((parse_num(a, "window bound")?, parse_num(b, "window bound")?))
        })
        .collect()
}

/// Product of planar curves: axis `k` maps to `(u_k, y_k(u_k))` in the
/// `k`-th complex line, with `y_k = −(1/c) log cos(c u_k)` or `y_k = 0`.
#[derive(Clone, Debug)]
pub struct ProductChart {
    factors: Vec<Option<f64>>,
}

impl ProductChart {
    pub fn new(factors: Vec<Option<f64>>) -> Self {
        ProductChart { factors }
    }

    /// `[y, y', y'', y''']` of the scaled grim reaper at `u`.
    fn grim(c: f64, u: f64) -> [f64; 4] {
        let (s, co) = (c * u).sin_cos();
        let tan = s / co;
        let sec2 = 1.0 / (co * co);
        [-co.ln() / c, tan, c * sec2, 2.0 * c * c * sec2 * tan]
    }
}

impl Chart for ProductChart {
    fn param_dim(&self) -> usize {
        self.factors.len()
    }

    fn ambient_dim(&self) -> usize {
        2 * self.factors.len()
    }

    fn position(&self, u: &[f64]) -> Vec<f64> {
        self.factors.iter().zip(u).flat_map(|(c, &x)| [x, c.map_or(0.0, |c| Self::grim(c, x)[0])]).collect()
    }

    fn jets(&self, u: &[f64]) -> Option<JetVec> {
        let n = self.factors.len();
        let comps = self
            .factors
            .iter()
            .zip(u)
            .enumerate()
            .flat_map(|(k, (c, &x))| {
                let var = Jet::variable(n, k, x);
                let y = match c {
                    Some(c) => var.compose(Self::grim(*c, x)),
                    None => Jet::zero(n),
                };
                [var, y]
            })
            .collect();
        Some(JetVec(comps))
    }

    fn is_lagrangian(&self) -> bool {
        true
    }
}

/// The flat Lagrangian plane `{y = 0}` translating along a tangent `T`.
pub fn make_flat_plane(
    n: usize,
    translation: &[f64],
    window: Vec<(f64, f64)>,
    resolution: usize,
    backend: Backend,
) -> Result<ImmersedPatch> {
    if translation.len() != 2 * n {
        return Err(Error::InvalidSpec(format!("T must have {} components", 2 * n)));
    }
    if (0..n).any(|k| translation[2 * k + 1] != 0.0) {
        return Err(Error::InvalidSpec(
            "T has a component normal to the plane, so H = 0 ≠ T^⊥ and the plane is not a soliton".into(),
        ));
    }
    let tangent: Vec<f64> = (0..n).map(|k| translation[2 * k]).collect();
    SolitonSpec::flat_plane(n, tangent).window(window).resolution(resolution).build(backend)
}

pub fn make_grim_reaper_cylinder(
    n: usize,
    window: Vec<(f64, f64)>,
    resolution: usize,
    backend: Backend,
) -> Result<ImmersedPatch> {
    SolitonSpec::grim_reaper_cylinder(n).window(window).resolution(resolution).build(backend)
}

pub fn make_grim_reaper_product(
    speeds: Vec<f64>,
    window: Vec<(f64, f64)>,
    resolution: usize,
    backend: Backend,
) -> Result<ImmersedPatch> {
    SolitonSpec::grim_reaper_product(speeds).window(window).resolution(resolution).build(backend)
}

/// Soliton defect `H − T^⊥`: (sup norm, weighted L² norm) over the interior nodes.
pub fn soliton_residual(patch: &ImmersedPatch, translation: &[f64]) -> (f64, f64) {
    let residual = soliton_residual_field(patch, translation);
    let measure = WeightedMeasure::new(patch, translation);
    let sup = residual.iter().map(|r| dot(r, r).sqrt()).fold(0.0, f64::max);
    let l2 = measure.integrate(&residual.iter().map(|r| dot(r, r)).collect::<Vec<_>>()).sqrt();
    (sup, l2)
}

pub fn soliton_residual_field(patch: &ImmersedPatch, translation: &[f64]) -> Vec<Vec<f64>> {
    let n = patch.dim();
    (0..patch.len())
        .into_par_iter()
        .map(|p| {
            let geo = patch.local(p);
            let h = geo.mean_curvature().values();
            let t_perp = geo.normal_part(&JetVec::constant(n, translation)).values();
            h.iter().zip(&t_perp).map(|(a, b)| a - b).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::metric_data;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn grim_reaper_metric_at_quarter_pi() {
        // g₁₁ = 1 + tan²u = sec²u; at π/4 that is 2.
        let grid = ParameterGrid::uniform(&[(-FRAC_PI_4, FRAC_PI_4)], 5).unwrap();
        let amb = AmbientStructure::new(vec![0.0, 1.0]).unwrap();
        let patch = build_patch(&ProductChart::new(vec![Some(1.0)]), &grid, &amb, Backend::Analytic).unwrap();
        let m = metric_data(&patch);
        assert!((m.metric[4][0][0] - 2.0).abs() < 1e-14);
        assert!((m.sqrt_det[4] - 2f64.sqrt()).abs() < 1e-14);
        assert!((m.metric[2][0][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn translation_vectors() {
        assert_eq!(SolitonSpec::grim_reaper_cylinder(2).translation(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(SolitonSpec::grim_reaper_product(vec![1.0, 2.0]).translation(), vec![0.0, 1.0, 0.0, 2.0]);
        assert_eq!(SolitonSpec::flat_plane(2, vec![1.0, 0.0]).translation(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn windows_are_guarded() {
        let err = make_grim_reaper_cylinder(2, vec![(-1.6, 1.6), (0.0, 1.0)], 16, Backend::Analytic);
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
        let err = make_grim_reaper_product(vec![1.0, 2.0], vec![(-0.7, 0.7), (-0.8, 0.8)], 16, Backend::Analytic);
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
        let err = make_grim_reaper_product(vec![1.0, 0.0], vec![(-0.7, 0.7), (-0.7, 0.7)], 16, Backend::Analytic);
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
        let spec = SolitonSpec::grim_reaper_product(vec![1.0, 2.0]);
        assert!(spec.window[1].1 < FRAC_PI_4 && spec.window[1].1 > 0.6);
    }

    #[test]
    fn flat_plane_rejects_normal_translation() {
        let err = make_flat_plane(2, &[0.0, 1.0, 0.0, 0.0], vec![(0.0, 1.0); 2], 9, Backend::Analytic);
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
        let ok = make_flat_plane(1, &[2.0, 0.0], vec![(0.0, 1.0)], 9, Backend::Analytic).unwrap();
        let (sup, l2) = soliton_residual(&ok, &[2.0, 0.0]);
        assert_eq!((sup, l2), (0.0, 0.0));
    }

    #[test]
    fn unknown_name_lists_catalog() {
        let err = "bowl".parse::<SolitonKind>().unwrap_err().to_string();
        assert!(err.contains("grim-reaper-cylinder") && err.contains("flat-plane"));
    }

    #[test]
    fn key_value_rejects_garbage() {
        assert!(SolitonSpec::from_key_value("name=flat-plane\nn=2\ncolour=red").is_err());
        assert!(SolitonSpec::from_key_value("n=2").is_err());
        let spec = SolitonSpec::from_key_value("name=grim-reaper-cylinder\nn=2\nwindow=-1:1,0:1").unwrap();
        assert_eq!(spec.window, vec![(-1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(spec.resolution, 64);
    }

    #[test]
    fn exact_f_values() {
        let cyl = SolitonSpec::grim_reaper_cylinder(2).window(vec![(-1.0, 1.0), (0.0, 1.0)]);
        assert!((cyl.exact_f_value() - 2.0 * 1f64.tan()).abs() < 1e-15);
        let plane = SolitonSpec::flat_plane(2, vec![1.0, 0.0]).window(vec![(0.0, 1.0); 2]);
        assert!((plane.exact_f_value() - (1f64.exp() - 1.0)).abs() < 1e-15);
    }
}
