//! Check reports and their serialization.
//!
//! Every float is written with 17 significant digits so that a report
//! pins the exact bits of each residual.

use std::io;

use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::catalog::SolitonSpec;
use crate::patch::Backend;

#[derive(Clone, Debug, PartialEq, SerializeDerive, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub soliton: Option<SolitonSpec>,
    pub resolutions: Vec<usize>,
    pub backend: Backend,
    #[serde(deserialize_with = "nullable")]
    pub sup_residual: f64,
    #[serde(deserialize_with = "nullable")]
    pub l2_residual: f64,
    #[serde(deserialize_with = "nullable")]
    pub tolerance: f64,
    pub passed: bool,
    pub observed_order: Option<f64>,
    pub wall_clock_seconds: Option<f64>,
    pub seed: Option<u64>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub details: CheckDetails,
}

impl CheckReport {
    pub fn new(check: &str, soliton: Option<SolitonSpec>, backend: Backend) -> Self {
        CheckReport {
            check: check.to_string(),
            resolutions: soliton.iter().map(|s| s.resolution).collect(),
            soliton,
            backend,
            sup_residual: 0.0,
            l2_residual: 0.0,
            tolerance: 0.0,
            passed: false,
            observed_order: None,
            wall_clock_seconds: None,
            seed: None,
            notes: Vec::new(),
            details: CheckDetails::default(),
        }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }
}

// JSON has no infinities; they are written as null and read back as such.
fn nullable<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// In-memory data behind a report, used for plot files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckDetails {
    pub convergence: Vec<ConvergenceRow>,
    pub samples: Vec<SampleResidual>,
    pub criticality: Vec<CriticalitySample>,
    pub stability: Vec<StabilitySample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub resolution: usize,
    pub spacing: f64,
    pub sup_residual: f64,
    pub l2_residual: f64,
    /// Order estimated against the previous (coarser) row.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleResidual {
    pub label: String,
    pub sup_residual: f64,
    pub l2_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalitySample {
    pub index: usize,
    pub fd: f64,
    pub formula: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilitySample {
    pub index: usize,
    pub fd: f64,
    pub quadratic_form: f64,
    pub lf_squared: f64,
    pub scale: f64,
    pub agreement_tolerance: f64,
    pub passed: bool,
}

impl StabilitySample {
    /// Largest pairwise disagreement among the three second-variation values.
    pub fn spread(&self) -> f64 {
        let (a, b, c) = (self.fd, self.quadratic_form, self.lf_squared);
        (a - b).abs().max((b - c).abs()).max((a - c).abs())
    }
}

/// `x` with 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Pretty JSON whose floats carry 17 significant digits.
struct ExactFloats(PrettyFormatter<'static>);

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_float(value).as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// Convergence table: `resolution,sup_residual,l2_residual,order`.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("resolution,sup_residual,l2_residual,order\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.resolution,
            format_float(r.sup_residual),
            format_float(r.l2_residual),
            opt(r.order)
        ));
    }
    out
}

/// Long-format rows `check,resolution,residual,order`, one per (check, resolution).
pub fn long_csv(reports: &[CheckReport]) -> String {
    let mut out = String::from("check,resolution,residual,order\n");
    for rep in reports {
        if rep.details.convergence.is_empty() {
            let res = rep.resolutions.last().copied().unwrap_or(0);
            out.push_str(&format!(
                "{},{res},{},{}\n",
                rep.check,
                format_float(rep.sup_residual),
                opt(rep.observed_order)
            ));
        }
        for r in &rep.details.convergence {
            out.push_str(&format!(
                "{},{},{},{}\n",
                rep.check,
                r.resolution,
                format_float(r.sup_residual),
                opt(r.order)
            ));
        }
    }
    out
}

/// Per-sample rows of every stability scan.
pub fn stability_csv(reports: &[CheckReport]) -> String {
    let mut out = String::from("check,sample,fd,quadratic_form,lf_squared,scale,passed\n");
    for rep in reports {
        for s in &rep.details.stability {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rep.check,
                s.index,
                format_float(s.fd),
                format_float(s.quadratic_form),
                format_float(s.lf_squared),
                format_float(s.scale),
                s.passed
            ));
        }
    }
    out
}
