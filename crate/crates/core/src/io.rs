//! LIBSVM and PGM ingestion, trace CSV and report JSON serialization.

use std::io::{BufRead, Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{DcError, Result};
use crate::graphgl::{Image, PriorLabels};
use crate::scad::LeastSquaresData;
use crate::solvers::{Status, TraceRow};

/// Sparse labelled design matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    /// Per-sample `(feature, value)` lists with 0-based, strictly increasing
    /// feature indices.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Labels in `{−1, +1}`.
    pub labels: Vec<f64>,
    /// Number of features (largest index seen).
    pub features: usize,
    pub source: String,
}

impl Dataset {
    pub fn samples(&self) -> usize {
        self.rows.len()
    }

    /// Dense `A` and `b = labels`.
    pub fn to_least_squares(&self) -> Result<LeastSquaresData> {
        let mut a = Array2::zeros((self.samples(), self.features));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[[i, j]] = v;
            }
        }
        LeastSquaresData::new(a, Array1::from(self.labels.clone()))
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> DcError {
    DcError::Parse {
        line,
        message: message.into(),
    }
}

/// `<label> <index>:<value> ...` per line, 1-based indices.
pub fn parse_libsvm(reader: impl BufRead, source: &str) -> Result<Dataset> {
    let mut data = Dataset {
        source: source.to_owned(),
        ..Dataset::default()
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("label '{label_tok}' is not numeric")))?;
        let label = if label == 1.0 {
            1.0
        } else if label == 0.0 || label == -1.0 {
            -1.0
        } else {
            return Err(parse_err(lineno, format!("label {label} is not binary")));
        };
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("token '{tok}' is not index:value")))?;
            let idx: usize = idx.parse().map_err(|_| {
                parse_err(lineno, format!("index '{idx}' is not a positive integer"))
            })?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, format!("value '{val}' is not numeric")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_err(lineno, "indices are not strictly increasing"));
            }
            last = idx;
            row.push((idx - 1, val));
        }
        data.features = data.features.max(last);
        data.rows.push(row);
        data.labels.push(label);
    }
    Ok(data)
}

/// Header fields and payload offset of a PGM file.
struct PgmHeader {
    binary: bool,
    width: usize,
    height: usize,
    maxval: u32,
    payload: usize,
}

fn pgm_header(bytes: &[u8]) -> Result<PgmHeader> {
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(parse_err(1, "bad PGM magic (expected P2 or P5)")),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(1, "truncated or malformed PGM header"))?;
    }
    // single whitespace byte before the payload
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(parse_err(1, "missing whitespace after PGM header"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(parse_err(1, "PGM dimensions or maxval out of range"));
    }
    Ok(PgmHeader {
        binary,
        width: width as usize,
        height: height as usize,
        maxval,
        payload: pos + 1,
    })
}

/// Raw samples and maxval of a P2/P5 image.
fn pgm_samples(bytes: &[u8]) -> Result<(PgmHeader, Vec<u32>)> {
    let h = pgm_header(bytes)?;
    let n = h.width * h.height;
    let body = &bytes[h.payload.min(bytes.len())..];
    let samples: Vec<u32> = if h.binary {
        let wide = h.maxval > 255;
        let need = if wide { 2 * n } else { n };
        if body.len() < need {
            return Err(parse_err(
                1,
                format!("PGM payload has {} bytes, expected {need}", body.len()),
            ));
        }
        if wide {
            body[..need]
                .chunks_exact(2)
                .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
                .collect()
        } else {
            body[..n].iter().map(|&b| u32::from(b)).collect()
        }
    } else {
        let text =
            std::str::from_utf8(body).map_err(|_| parse_err(1, "P2 payload is not ASCII"))?;
        let vals: std::result::Result<Vec<u32>, _> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .take(n)
            .map(str::parse)
            .collect();
        let vals = vals.map_err(|_| parse_err(1, "non-numeric P2 sample"))?;
        if vals.len() < n {
            return Err(parse_err(
                1,
                format!("P2 payload has {} samples, expected {n}", vals.len()),
            ));
        }
        vals
    };
    if samples.iter().any(|&v| v > h.maxval) {
        return Err(parse_err(1, "PGM sample exceeds maxval"));
    }
    Ok((h, samples))
}

/// Intensities scaled by maxval.
pub fn load_pgm(bytes: &[u8]) -> Result<Image> {
    let (h, samples) = pgm_samples(bytes)?;
    let max = f64::from(h.maxval);
    Image::new(
        h.height,
        h.width,
        samples.into_iter().map(|v| f64::from(v) / max).collect(),
    )
}

/// White is a positive prior, black a negative one, anything else unlabelled.
pub fn load_mask(bytes: &[u8]) -> Result<(usize, usize, PriorLabels)> {
    let (h, samples) = pgm_samples(bytes)?;
    let labels = samples
        .into_iter()
        .map(|v| match v {
            0 => -1.0,
            v if v == h.maxval => 1.0,
            _ => 0.0,
        })
        .collect();
    Ok((h.height, h.width, PriorLabels::from_labels(labels)?))
}

/// 8-bit P5 encoding of intensities in `[0, 1]`.
pub fn write_pgm(height: usize, width: usize, pixels: &[f64]) -> Result<Vec<u8>> {
    crate::error::check_dim(height * width, pixels.len())?;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

/// Schema tag on the first line of every trace file.
pub const TRACE_SCHEMA: &str = "dcopt-trace/1";
/// Schema tag of the JSON report.
pub const REPORT_SCHEMA: &str = "dcopt-report/1";

/// Run metadata carried in the trace header.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub algorithm: String,
    pub profile: String,
    pub seed: u64,
    pub problem: String,
    pub termination: String,
    pub tolerance: f64,
    pub status: Option<Status>,
    pub iterations: usize,
    pub n0: usize,
    pub c_lambda: Option<f64>,
    pub mu_min: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
}

/// Columns that carry wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 1] = ["wall_ms"];

/// `# dcopt-trace/1 {meta}` followed by a CSV table of rows.
pub fn write_trace(mut out: impl Write, meta: &TraceMeta, rows: &[TraceRow]) -> Result<()> {
    writeln!(out, "# {TRACE_SCHEMA} {}", serde_json::to_string(meta)?)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(&mut out);
    w.write_record(trace_columns())?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Column names in schema order.
pub fn trace_columns() -> Vec<&'static str> {
    vec![
        "n",
        "energy",
        "energy_bar",
        "lyapunov_a",
        "lyapunov_h",
        "d_norm",
        "step_norm",
        "lambda",
        "beta",
        "beta_next",
        "trials",
        "accepted",
        "nu",
        "lsde_gap",
        "crit_residual",
        "criterion",
        "dist_ref",
        "inner_iterations",
        "inner_residual",
        "inner_converged",
        "wall_ms",
    ]
}

pub fn read_trace(mut input: impl Read) -> Result<(TraceMeta, Vec<TraceRow>)> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let meta_json = first
        .strip_prefix("# ")
        .and_then(|s| s.strip_prefix(TRACE_SCHEMA))
        .ok_or_else(|| parse_err(1, format!("missing '{TRACE_SCHEMA}' header")))?;
    let meta: TraceMeta = serde_json::from_str(meta_json.trim())?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(rest.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != trace_columns() {
        return Err(parse_err(2, "trace columns do not match the schema"));
    }
    let rows: Vec<TraceRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.windows(2).any(|w| w[1].n <= w[0].n) {
        return Err(parse_err(2, "trace rows are not strictly increasing in n"));
    }
    Ok((meta, rows))
}

/// One (algorithm, tolerance) result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub algorithm: String,
    pub termination: String,
    pub tolerance: f64,
    pub status: Status,
    pub iterations: Option<usize>,
    pub wall_time_s: Option<f64>,
    /// Iteration count as tabulated: the number, or `Max`.
    pub iter_display: String,
    /// Wall time as tabulated: seconds, or `---`.
    pub time_display: String,
    pub final_energy: Option<f64>,
    pub trace_file: Option<String>,
}

impl ReportCell {
    pub fn new(
        algorithm: &str,
        termination: &str,
        tolerance: f64,
        status: Status,
        iterations: Option<usize>,
        wall_time_s: Option<f64>,
    ) -> Self {
        let reached =
            iterations.is_some() && matches!(status, Status::Converged | Status::StationaryDZero);
        let iter_display = match (status, iterations) {
            (Status::NanAbort, _) => "NaN".to_owned(),
            (_, Some(n)) if reached => n.to_string(),
            _ => "Max".to_owned(),
        };
        let time_display = match wall_time_s {
            Some(t) if reached => format!("{t:.2}"),
            _ => "---".to_owned(),
        };
        Self {
            algorithm: algorithm.to_owned(),
            termination: termination.to_owned(),
            tolerance,
            status,
            iterations,
            wall_time_s,
            iter_display,
            time_display,
            final_energy: None,
            trace_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub name: String,
    pub problem: String,
    pub seed: u64,
    /// Model setup time, e.g. graph weight construction.
    pub setup_time_s: f64,
    pub cells: Vec<ReportCell>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(name: &str, problem: &str, seed: u64) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_owned(),
            name: name.to_owned(),
            problem: problem.to_owned(),
            seed,
            setup_time_s: 0.0,
            cells: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn cell(&self, algorithm: &str, tolerance: f64) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.algorithm == algorithm && c.tolerance == tolerance)
    }
}

pub fn write_report(out: impl Write, report: &Report) -> Result<()> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

pub fn read_report(input: impl Read) -> Result<Report> {
    let report: Report = serde_json::from_reader(input)?;
    if report.schema != REPORT_SCHEMA {
        return Err(parse_err(
            1,
            format!("unsupported report schema '{}'", report.schema),
        ));
    }
    Ok(report)
}

/// One row of convergence-plot data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub log10_dist: Option<f64>,
    pub log10_energy_gap: Option<f64>,
    /// Set when the source run did not converge.
    pub warning: bool,
}

/// `(n, log₁₀‖xⁿ − x_final‖, log₁₀(E(xⁿ) − E_final))` from a trace.
pub fn rate_plot_data(meta: &TraceMeta, rows: &[TraceRow]) -> Vec<RatePoint> {
    let warning = !matches!(
        meta.status,
        Some(Status::Converged | Status::StationaryDZero)
    );
    let e_final = rows.last().map_or(meta.final_energy, |r| r.energy);
    let log = |v: f64| (v > 0.0 && v.is_finite()).then(|| v.log10());
    rows.iter()
        .map(|r| RatePoint {
            n: r.n + 1,
            log10_dist: r.dist_ref.and_then(log),
            log10_energy_gap: log(r.energy - e_final),
            warning,
        })
        .collect()
}

pub fn write_rate_plot(out: impl Write, points: &[RatePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    if points.is_empty() {
        w.write_record(["n", "log10_dist", "log10_energy_gap", "warning"])?;
    }
    w.flush()?;
    Ok(())
}
