//! JSON output with fixed float formatting, and the solution file schema.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), so equal
//! inputs give byte-identical files and every `f64` round-trips exactly.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::lp_norm::{LpCertificateFile, LpSolution};
use crate::minimax::MinimaxDiagnostics;
use crate::problem::SampledProblem;
use crate::uniform::{UniformCertificate, UniformSolution};

/// Pretty JSON with floats in scientific notation at full precision.
/// Non-finite floats become `null`.
pub struct FixedFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for FixedFormatter<'_> {
    fn default() -> Self {
        Self {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl Formatter for FixedFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes with [`FixedFormatter`], with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFormatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Uniform,
    Lp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CertificateFile {
    Uniform(UniformCertificate),
    Lp(LpCertificateFile),
}

/// What `solve` writes and `verify` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub norm: NormKind,
    pub coefficients: Vec<f64>,
    pub value: f64,
    pub k: usize,
    pub certificate: CertificateFile,
    #[serde(default)]
    pub diagnostics: MinimaxDiagnostics,
}

impl SolutionFile {
    pub fn from_uniform(sol: &UniformSolution) -> Self {
        Self {
            norm: NormKind::Uniform,
            coefficients: sol.coefficients.0.clone(),
            value: sol.value,
            k: sol.certificate.len(),
            certificate: CertificateFile::Uniform(sol.certificate.clone()),
            diagnostics: sol.diagnostics.clone(),
        }
    }

    pub fn from_lp(problem: &SampledProblem, sol: &LpSolution) -> Self {
        Self {
            norm: NormKind::Lp,
            coefficients: sol.coefficients.0.clone(),
            value: sol.value,
            k: sol.certificate.len(),
            certificate: CertificateFile::Lp(sol.certificate.to_file(problem)),
            diagnostics: sol.diagnostics.clone(),
        }
    }
}
