//! Response matrices, confusion counts and top-k accuracy.

use std::fmt::Write as _;

use super::LearningError;

pub const CLASSES: usize = 10;

/// Ties between equal responses go to the lower class index.
pub const TIE_RULE: &str = "lowest index wins ties";

/// Position of `class` when responses are sorted descending, ties broken
/// by lower index first. 0 means top-1.
pub fn rank_of(responses: &[f64], class: usize) -> usize {
    let r = responses[class];
    responses
        .iter()
        .enumerate()
        .filter(|&(k, &v)| v > r || (v == r && k < class))
        .count()
}

/// Index of the largest response, first index on ties.
pub fn argmax(responses: &[f64]) -> usize {
    responses
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) })
        .0
}

/// Mean response per (true class, circuit).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultMatrix {
    pub values: [[f64; CLASSES]; CLASSES],
    pub rows_per_class: [usize; CLASSES],
    pub unit: String,
}

impl ResultMatrix {
    /// Number of classes whose averaged row peaks on its own circuit.
    pub fn diagonal_hits(&self) -> usize {
        (0..CLASSES)
            .filter(|&c| self.rows_per_class[c] > 0 && argmax(&self.values[c]) == c)
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# unit={}\ntrue_class,n", self.unit);
        for k in 0..CLASSES {
            let _ = write!(s, ",c{k}");
        }
        s.push('\n');
        for (c, row) in self.values.iter().enumerate() {
            let _ = write!(s, "{c},{}", self.rows_per_class[c]);
            for v in row {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub confusion: [[usize; CLASSES]; CLASSES],
    pub top1: f64,
    pub top3: f64,
    pub n_eval: usize,
    pub tie_rule: &'static str,
}

impl Metrics {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# top1={:?} top3={:?} n_eval={} tie_rule={}\ntrue\\pred",
            self.top1, self.top3, self.n_eval, self.tie_rule
        );
        for k in 0..CLASSES {
            let _ = write!(s, ",{k}");
        }
        s.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            let _ = write!(s, "{c}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`Metrics::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, LearningError> {
        let err = |line: usize, msg: &str| LearningError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file"))?;
        let fields = header.strip_prefix("# ").ok_or_else(|| err(1, "missing `# ` header"))?;
        let (mut top1, mut top3, mut n_eval) = (None, None, None);
        for kv in fields.split(' ') {
            match kv.split_once('=') {
                Some(("top1", v)) => top1 = v.parse::<f64>().ok(),
                Some(("top3", v)) => top3 = v.parse::<f64>().ok(),
                Some(("n_eval", v)) => n_eval = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let mut confusion = [[0usize; CLASSES]; CLASSES];
        lines.next().ok_or_else(|| err(2, "missing column header"))?;
        for (c, row) in confusion.iter_mut().enumerate() {
            let line = lines.next().ok_or_else(|| err(c + 3, "missing confusion row"))?;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != CLASSES + 1 {
                return Err(err(c + 3, "expected 11 fields"));
            }
            for (slot, cell) in row.iter_mut().zip(&cells[1..]) {
                *slot = cell.parse().map_err(|_| err(c + 3, "bad count"))?;
            }
        }
        Ok(Self {
            confusion,
            top1: top1.ok_or_else(|| err(1, "missing top1"))?,
            top3: top3.ok_or_else(|| err(1, "missing top3"))?,
            n_eval: n_eval.ok_or_else(|| err(1, "missing n_eval"))?,
            tie_rule: TIE_RULE,
        })
    }
}

/// One evaluated sample: its label and the ten circuit responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRow {
    pub label: u8,
    pub responses: Vec<f64>,
}

/// Subtracts optional per-circuit offsets, then scores every row.
pub fn evaluate(
    rows: &[ResponseRow],
    baseline: Option<&[f64]>,
    unit: &str,
) -> Result<(ResultMatrix, Metrics), LearningError> {
    if let Some(b) = baseline {
        if b.len() != CLASSES {
            return Err(LearningError::ShapeMismatch(format!("{} baseline offsets", b.len())));
        }
    }
    let mut values = [[0.0; CLASSES]; CLASSES];
    let mut rows_per_class = [0usize; CLASSES];
    let mut confusion = [[0usize; CLASSES]; CLASSES];
    let (mut hit1, mut hit3) = (0usize, 0usize);
    for row in rows {
        if row.responses.len() != CLASSES {
            return Err(LearningError::ShapeMismatch(format!(
                "{} responses in a row",
                row.responses.len()
            )));
        }
        let c = row.label as usize;
        if c >= CLASSES {
            return Err(LearningError::ShapeMismatch(format!("label {c}")));
        }
        let r: Vec<f64> = match baseline {
            Some(b) => row.responses.iter().zip(b).map(|(x, o)| x - o).collect(),
            None => row.responses.clone(),
        };
        if r.iter().any(|v| !v.is_finite()) {
            return Err(LearningError::NonFinite("response".into()));
        }
        let rank = rank_of(&r, c);
        hit1 += (rank == 0) as usize;
        hit3 += (rank < 3) as usize;
        confusion[c][argmax(&r)] += 1;
        rows_per_class[c] += 1;
        for (acc, v) in values[c].iter_mut().zip(&r) {
            *acc += v;
        }
    }
    for (c, row) in values.iter_mut().enumerate() {
        if rows_per_class[c] > 0 {
            row.iter_mut().for_each(|v| *v /= rows_per_class[c] as f64);
        }
    }
    let n = rows.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok((
        ResultMatrix {
            values,
            rows_per_class,
            unit: unit.to_string(),
        },
        Metrics {
            confusion,
            top1: frac(hit1),
            top3: frac(hit3),
            n_eval: n,
            tie_rule: TIE_RULE,
        },
    ))
}
