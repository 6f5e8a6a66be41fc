//! Touchstone 1.x (`.sNp`) reader and writer for S-parameters.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write::write_atomic;
use crate::linalg::CMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TouchstoneFormat {
    Ri,
    Ma,
    Db,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FrequencyUnit {
    pub fn factor(&self) -> f64 {
        match self {
            FrequencyUnit::Hz => 1.0,
            FrequencyUnit::KHz => 1e3,
            FrequencyUnit::MHz => 1e6,
            FrequencyUnit::GHz => 1e9,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            FrequencyUnit::Hz => "Hz",
            FrequencyUnit::KHz => "kHz",
            FrequencyUnit::MHz => "MHz",
            FrequencyUnit::GHz => "GHz",
        }
    }
}

/// S-parameters over frequency; frequencies are stored in Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct TouchstoneFile {
    pub n_ports: usize,
    pub frequencies: Vec<f64>,
    pub data: Vec<CMatrix>,
    pub format: TouchstoneFormat,
    pub unit: FrequencyUnit,
    pub reference_impedance: f64,
}

impl TouchstoneFile {
    pub fn single(s: CMatrix, frequency_hz: f64, format: TouchstoneFormat) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::dim(
                "S-parameter matrix",
                "square",
                format!("{}x{}", s.nrows(), s.ncols()),
            ));
        }
        Ok(Self {
            n_ports: s.nrows(),
            frequencies: vec![frequency_hz],
            data: vec![s],
            format,
            unit: FrequencyUnit::GHz,
            reference_impedance: 50.0,
        })
    }

    /// Frequency point closest to `f0` (the lower one on ties).
    pub fn nearest(&self, f0: f64) -> Option<(f64, &CMatrix)> {
        let mut best: Option<usize> = None;
        for (i, f) in self.frequencies.iter().enumerate() {
            if best.is_none_or(|b| (f - f0).abs() < (self.frequencies[b] - f0).abs()) {
                best = Some(i);
            }
        }
        best.map(|i| (self.frequencies[i], &self.data[i]))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let fmt = match self.format {
            TouchstoneFormat::Ri => "RI",
            TouchstoneFormat::Ma => "MA",
            TouchstoneFormat::Db => "DB",
        };
        let _ = writeln!(out, "! {}-port S-parameters", self.n_ports);
        let _ = writeln!(
            out,
            "# {} S {} R {}",
            self.unit.label(),
            fmt,
            self.reference_impedance
        );
        let n = self.n_ports;
        for (f, s) in self.frequencies.iter().zip(&self.data) {
            let freq = f / self.unit.factor();
            let pair = |i: usize, j: usize| {
                let (a, b) = encode(s[(i, j)], self.format);
                format!(" {a:e} {b:e}")
            };
            if n <= 2 {
                let mut line = format!("{freq:e}");
                // two-port data is column-major: S11 S21 S12 S22
                for j in 0..n {
                    for i in 0..n {
                        line.push_str(&pair(i, j));
                    }
                }
                let _ = writeln!(out, "{line}");
            } else {
                for i in 0..n {
                    for (c, chunk) in (0..n).collect::<Vec<_>>().chunks(4).enumerate() {
                        let mut line = if i == 0 && c == 0 {
                            format!("{freq:e}")
                        } else {
                            String::from(" ")
                        };
                        for &j in chunk {
                            line.push_str(&pair(i, j));
                        }
                        let _ = writeln!(out, "{line}");
                    }
                }
            }
        }
        out
    }
}

fn encode(v: Complex64, format: TouchstoneFormat) -> (f64, f64) {
    match format {
        TouchstoneFormat::Ri => (v.re, v.im),
        TouchstoneFormat::Ma => (v.norm(), v.arg().to_degrees()),
        TouchstoneFormat::Db => (20.0 * v.norm().log10(), v.arg().to_degrees()),
    }
}

fn decode(a: f64, b: f64, format: TouchstoneFormat) -> Complex64 {
    match format {
        TouchstoneFormat::Ri => Complex64::new(a, b),
        TouchstoneFormat::Ma => Complex64::from_polar(a, b.to_radians()),
        TouchstoneFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
    }
}

/// Port count from a `.sNp` extension.
pub fn ports_from_extension(path: &Path) -> Result<usize> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let digits = ext.strip_prefix('s').and_then(|r| r.strip_suffix('p'));
    match digits.and_then(|d| d.parse::<usize>().ok()) {
        Some(n) if n > 0 => Ok(n),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("extension '.{ext}' is not of the form .sNp"),
        }),
    }
}

pub fn parse_touchstone(path: &Path) -> Result<TouchstoneFile> {
    let n = ports_from_extension(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_touchstone_str(&text, n, path)
}

/// Numbers expected on each line of one frequency record.
fn record_layout(n: usize) -> Vec<usize> {
    if n <= 2 {
        return vec![1 + 2 * n * n];
    }
    let mut lines = Vec::new();
    for row in 0..n {
        let mut left = n;
        let mut first = true;
        while left > 0 {
            let pairs = left.min(4);
            lines.push(2 * pairs + usize::from(row == 0 && first));
            left -= pairs;
            first = false;
        }
    }
    lines
}

pub fn parse_touchstone_str(text: &str, n: usize, path: &Path) -> Result<TouchstoneFile> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut unit = FrequencyUnit::GHz;
    let mut format = TouchstoneFormat::Ma;
    let mut impedance = 50.0;
    let mut seen_option = false;
    let layout = record_layout(n);
    let mut frequencies = Vec::new();
    let mut data = Vec::new();
    let mut record: Vec<f64> = Vec::new();
    let mut slot = 0;
    let mut record_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(opts) = content.strip_prefix('#') {
            if seen_option {
                continue;
            }
            if !frequencies.is_empty() || slot != 0 {
                return Err(err(line_no, "option line after data".into()));
            }
            seen_option = true;
            let tokens: Vec<String> = opts
                .split_whitespace()
                .map(|t| t.to_ascii_uppercase())
                .collect();
            let mut i = 0;
            while i < tokens.len() {
                match tokens[i].as_str() {
                    "HZ" => unit = FrequencyUnit::Hz,
                    "KHZ" => unit = FrequencyUnit::KHz,
                    "MHZ" => unit = FrequencyUnit::MHz,
                    "GHZ" => unit = FrequencyUnit::GHz,
                    "S" => {}
                    "Y" | "Z" | "H" | "G" => {
                        return Err(err(
                            line_no,
                            format!("parameter type {} is not supported", tokens[i]),
                        ));
                    }
                    "RI" => format = TouchstoneFormat::Ri,
                    "MA" => format = TouchstoneFormat::Ma,
                    "DB" => format = TouchstoneFormat::Db,
                    "R" => {
                        i += 1;
                        impedance = tokens
                            .get(i)
                            .and_then(|t| t.parse::<f64>().ok())
                            .filter(|z| *z > 0.0)
                            .ok_or_else(|| {
                                err(line_no, "R must be followed by a positive impedance".into())
                            })?;
                    }
                    other => {
                        return Err(err(
                            line_no,
                            format!("malformed option line: unexpected '{other}'"),
                        ))
                    }
                }
                i += 1;
            }
            continue;
        }
        if content.starts_with('[') {
            return Err(err(
                line_no,
                "Touchstone 2.0 keywords are not supported".into(),
            ));
        }
        let numbers = content
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| err(line_no, format!("'{t}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if numbers.len() != layout[slot] {
            return Err(err(
                line_no,
                format!(
                    "expected {} values on this line, found {}",
                    layout[slot],
                    numbers.len()
                ),
            ));
        }
        if slot == 0 {
            record_line = line_no;
        }
        record.extend(numbers);
        slot += 1;
        if slot == layout.len() {
            let freq = record[0] * unit.factor();
            if let Some(&last) = frequencies.last() {
                if freq <= last {
                    return Err(err(
                        record_line,
                        format!("frequency {freq} Hz is not above the previous {last} Hz"),
                    ));
                }
            }
            let mut s = CMatrix::zeros(n, n);
            for e in 0..n * n {
                let (i, j) = if n <= 2 {
                    (e % n, e / n)
                } else {
                    (e / n, e % n)
                };
                s[(i, j)] = decode(record[1 + 2 * e], record[2 + 2 * e], format);
            }
            frequencies.push(freq);
            data.push(s);
            record.clear();
            slot = 0;
        }
    }
    if slot != 0 {
        return Err(err(
            record_line,
            "incomplete frequency record at end of file".into(),
        ));
    }
    if data.is_empty() {
        return Err(err(0, "no frequency records".into()));
    }
    Ok(TouchstoneFile {
        n_ports: n,
        frequencies,
        data,
        format,
        unit,
        reference_impedance: impedance,
    })
}

pub fn write_touchstone(file: &TouchstoneFile, path: &Path) -> Result<()> {
    let expected = format!("s{}p", file.n_ports);
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ext != expected {
        return Err(Error::Config(format!(
            "Touchstone path for {} ports must end in .{expected}",
            file.n_ports
        )));
    }
    write_atomic(path, file.to_text().as_bytes())
}
