//! Canonical serialisation: pretty JSON with every float at four decimals,
//! and the grid CSV.

use std::io;
use std::path::Path;

use serde::ser::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{CrispError, Result};
use crate::evaluation::GridPoint;

pub const SCORE_DECIMALS: usize = 4;

struct FixedFloat {
    inner: PrettyFormatter<'static>,
}

impl FixedFloat {
    fn write_float<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            // Avoid "-0.0000".
            let v = if v == 0.0 { 0.0 } else { v };
            write!(w, "{v:.SCORE_DECIMALS$}")
        } else {
            w.write_all(b"null")
        }
    }
}

impl Formatter for FixedFloat {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        self.write_float(w, v)
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_float(w, v as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serialises `value` as indented JSON with fixed four-decimal floats and a
/// trailing newline. Map key order comes from the value (use `BTreeMap`).
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        FixedFloat {
            inner: PrettyFormatter::with_indent(b"  "),
        },
    );
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_canonical_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_canonical_json(value)?).map_err(|e| CrispError::io(path, e))
}

pub const GRID_CSV_HEADER: &str = "s_t,K,alpha,metric,f1_top1,f1_top3,f1_top5,f1_top7,mean_kept,failures";

fn fixed(v: Option<&f64>) -> String {
    v.map(|v| format!("{v:.SCORE_DECIMALS$}")).unwrap_or_default()
}

/// Renders grid points; columns for k outside the evaluated set are empty.
pub fn grid_csv(points: &[GridPoint]) -> String {
    let mut out = String::with_capacity(64 * (points.len() + 1));
    out.push_str(GRID_CSV_HEADER);
    out.push('\n');
    for p in points {
        let f = |k: usize| fixed(p.macro_f1.get(&k));
        out.push_str(&format!(
            "{},{},{:.2},{},{},{},{},{},{},{}\n",
            p.s_t,
            p.k,
            p.alpha,
            p.metric,
            f(1),
            f(3),
            f(5),
            f(7),
            fixed(Some(&p.mean_kept)),
            p.failures
        ));
    }
    out
}
