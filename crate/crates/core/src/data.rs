//! MNIST ingest, 28×28 → 5×5 preprocessing and the SD-card text files.
//!
//! Preprocessing zero-pads each image by one pixel on every side (30×30),
//! averages each disjoint 6×6 tile and rounds to the nearest integer, ties
//! away from zero, giving 25 values in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const IMAGE_SIDE: usize = 28;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const SAMPLE_SIDE: usize = 5;
pub const SAMPLE_LEN: usize = SAMPLE_SIDE * SAMPLE_SIDE;
const PADDED_SIDE: usize = IMAGE_SIDE + 2;
const TILE: usize = PADDED_SIDE / SAMPLE_SIDE;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: value {value} out of range")]
    ValueOutOfRange { line: usize, value: i64 },
    #[error("{file} line {line}: malformed line")]
    MalformedLine { file: String, line: usize },
    #[error("inputs file has {inputs} records but labels file has {labels}")]
    CountMismatch { inputs: usize, labels: usize },
    #[error("idx file: {0}")]
    Idx(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistRecord {
    pub label: u8,
    /// Row-major 28×28 intensities.
    pub pixels: Vec<u8>,
}

/// A preprocessed 5×5 image, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sample {
    pub label: u8,
    pub values: [u8; SAMPLE_LEN],
}

/// Paths of an exported `inputs.txt` / `labels.txt` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub inputs_path: PathBuf,
    pub labels_path: PathBuf,
    pub count: usize,
}

impl DatasetFiles {
    /// `inputs.txt` and `labels.txt` inside `dir`, count unknown (0).
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            inputs_path: dir.join("inputs.txt"),
            labels_path: dir.join("labels.txt"),
            count: 0,
        }
    }
}

fn parse_field(field: &str, line: usize) -> Result<i64, DataError> {
    field.trim().parse::<i64>().map_err(|_| DataError::MalformedRow {
        line,
        reason: format!("`{}` is not an integer", field.trim()),
    })
}

fn parse_row(text: &str, line: usize) -> Result<MnistRecord, DataError> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != PIXELS + 1 {
        return Err(DataError::MalformedRow {
            line,
            reason: format!("expected {} fields, found {}", PIXELS + 1, fields.len()),
        });
    }
    let label = parse_field(fields[0], line)?;
    if !(0..=9).contains(&label) {
        return Err(DataError::ValueOutOfRange { line, value: label });
    }
    let mut pixels = Vec::with_capacity(PIXELS);
    for f in &fields[1..] {
        let v = parse_field(f, line)?;
        if !(0..=255).contains(&v) {
            return Err(DataError::ValueOutOfRange { line, value: v });
        }
        pixels.push(v as u8);
    }
    Ok(MnistRecord {
        label: label as u8,
        pixels,
    })
}

/// Streaming reader over MNIST-in-CSV rows (`label,p0,...,p783`). A first
/// line whose first field is not numeric is taken as a header and skipped.
/// Blank lines are ignored. Line numbers in errors are 1-based file lines.
pub struct MnistCsv<R> {
    lines: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> MnistCsv<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
        }
    }
}

impl<R: BufRead> Iterator for MnistCsv<R> {
    type Item = Result<MnistRecord, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            let text = text.trim_end_matches('\r');
            if text.trim().is_empty() {
                continue;
            }
            if self.line == 1 {
                let first = text.split(',').next().unwrap_or("").trim();
                if first.parse::<f64>().is_err() {
                    continue;
                }
            }
            return Some(parse_row(text, self.line));
        }
    }
}

pub fn open_mnist_csv(path: &Path) -> Result<MnistCsv<BufReader<File>>, DataError> {
    Ok(MnistCsv::new(BufReader::new(File::open(path)?)))
}

/// Reads every record of an MNIST CSV file.
pub fn load_mnist_csv(path: &Path) -> Result<Vec<MnistRecord>, DataError> {
    open_mnist_csv(path)?.collect()
}

/// Writes records as MNIST CSV with the usual `label,1x1,...,28x28` header.
pub fn write_mnist_csv<'a>(
    records: impl IntoIterator<Item = &'a MnistRecord>,
    path: &Path,
) -> Result<usize, DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "label")?;
    for r in 1..=IMAGE_SIDE {
        for c in 1..=IMAGE_SIDE {
            write!(w, ",{r}x{c}")?;
        }
    }
    writeln!(w)?;
    let mut n = 0;
    for rec in records {
        write!(w, "{}", rec.label)?;
        for p in &rec.pixels {
            write!(w, ",{p}")?;
        }
        writeln!(w)?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Pad to 30×30, average 6×6 tiles, round half away from zero.
pub fn preprocess(record: &MnistRecord) -> Sample {
    let mut values = [0u8; SAMPLE_LEN];
    for (ti, v) in values.iter_mut().enumerate() {
        let (tr, tc) = (ti / SAMPLE_SIDE, ti % SAMPLE_SIDE);
        let mut sum = 0u32;
        for pr in tr * TILE..(tr + 1) * TILE {
            for pc in tc * TILE..(tc + 1) * TILE {
                // padded coordinate p maps to original p - 1
                if (1..=IMAGE_SIDE).contains(&pr) && (1..=IMAGE_SIDE).contains(&pc) {
                    sum += record.pixels[(pr - 1) * IMAGE_SIDE + (pc - 1)] as u32;
                }
            }
        }
        let n = (TILE * TILE) as u32;
        *v = ((2 * sum + n) / (2 * n)) as u8;
    }
    Sample {
        label: record.label,
        values,
    }
}

/// Writes `inputs` (25 comma-separated integers per line, no whitespace)
/// and `labels` (one digit per line).
pub fn export_sd_text<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    inputs_path: &Path,
    labels_path: &Path,
) -> Result<DatasetFiles, DataError> {
    let mut inputs = BufWriter::new(File::create(inputs_path)?);
    let mut labels = BufWriter::new(File::create(labels_path)?);
    let mut count = 0;
    let mut line = String::with_capacity(4 * SAMPLE_LEN);
    for s in samples {
        line.clear();
        for (k, v) in s.values.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        inputs.write_all(line.as_bytes())?;
        writeln!(labels, "{}", s.label)?;
        count += 1;
    }
    inputs.flush()?;
    labels.flush()?;
    Ok(DatasetFiles {
        inputs_path: inputs_path.to_path_buf(),
        labels_path: labels_path.to_path_buf(),
        count,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Inverse of [`export_sd_text`].
pub fn load_sd_text(files: &DatasetFiles) -> Result<Vec<Sample>, DataError> {
    let inputs = read_lines(&files.inputs_path)?;
    let labels = read_lines(&files.labels_path)?;
    if inputs.len() != labels.len() {
        return Err(DataError::CountMismatch {
            inputs: inputs.len(),
            labels: labels.len(),
        });
    }
    let bad = |file: &Path, line: usize| DataError::MalformedLine {
        file: file.display().to_string(),
        line,
    };
    let mut out = Vec::with_capacity(inputs.len());
    for (k, (inp, lab)) in inputs.iter().zip(&labels).enumerate() {
        let label: u8 = lab
            .parse()
            .ok()
            .filter(|l| *l <= 9)
            .ok_or_else(|| bad(&files.labels_path, k + 1))?;
        let mut values = [0u8; SAMPLE_LEN];
        let mut n = 0;
        for f in inp.split(',') {
            if n == SAMPLE_LEN {
                return Err(bad(&files.inputs_path, k + 1));
            }
            // u8 parsing rejects whitespace and signs, as the format requires
            values[n] = f.parse().map_err(|_| bad(&files.inputs_path, k + 1))?;
            n += 1;
        }
        if n != SAMPLE_LEN {
            return Err(bad(&files.inputs_path, k + 1));
        }
        out.push(Sample { label, values });
    }
    Ok(out)
}

fn read_be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Idx("truncated header".into()))
}

/// Reads an IDX image file (`0x00000803`) and label file (`0x00000801`)
/// pair, as distributed with the original MNIST release.
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Vec<MnistRecord>, DataError> {
    let mut img = Vec::new();
    File::open(images)?.read_to_end(&mut img)?;
    let mut lab = Vec::new();
    File::open(labels)?.read_to_end(&mut lab)?;
    if read_be_u32(&img, 0)? != 0x803 || read_be_u32(&lab, 0)? != 0x801 {
        return Err(DataError::Idx("bad magic number".into()));
    }
    let n = read_be_u32(&img, 4)? as usize;
    let (rows, cols) = (read_be_u32(&img, 8)? as usize, read_be_u32(&img, 12)? as usize);
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(DataError::Idx(format!("images are {rows}×{cols}")));
    }
    if read_be_u32(&lab, 4)? as usize != n {
        return Err(DataError::Idx("image and label counts differ".into()));
    }
    if img.len() < 16 + n * PIXELS || lab.len() < 8 + n {
        return Err(DataError::Idx("truncated data".into()));
    }
    (0..n)
        .map(|k| {
            let label = lab[8 + k];
            if label > 9 {
                return Err(DataError::Idx(format!("label {label} at record {k}")));
            }
            Ok(MnistRecord {
                label,
                pixels: img[16 + k * PIXELS..16 + (k + 1) * PIXELS].to_vec(),
            })
        })
        .collect()
}
