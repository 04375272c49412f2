//! Models x test-quarters pseudo-perplexity matrices and the degradation
//! analytics computed from them.
//!
//! All percentages are relative differences in pseudo-perplexity,
//! `100 * (new - reference) / reference`, computed at full precision and
//! rounded only when rendered.

mod render;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scoring::{pll, pppl, MaskedScorer, PllResult};
use crate::temporal::{ModelRecord, Quarter, Registry};

pub use render::{
    change_to_csv, comparison_chart, comparison_to_csv, degradation_to_csv, matrix_from_csv,
    matrix_to_csv, render_svg, trajectory_chart, LineChart, Series,
};

/// Builds a scorer for a registry record.
pub type ScorerFactory<'a> = dyn Fn(&ModelRecord) -> Result<Box<dyn MaskedScorer>> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    /// No value, with the reason (scorer failure, missing input, ...).
    Absent(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::Absent(_) => None,
        }
    }
}

/// A skipped cell or row and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flag {
    pub model: String,
    pub quarter: Option<Quarter>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpplMatrix {
    models: Vec<String>,
    quarters: Vec<Quarter>,
    cells: Vec<Vec<Cell>>,
    /// Cutoff quarter of each model that has one on the quarterly chain.
    diag: BTreeMap<String, Quarter>,
}

impl PpplMatrix {
    /// A matrix with every cell absent.
    pub fn new(models: Vec<String>, quarters: Vec<Quarter>) -> Result<Self> {
        for (i, m) in models.iter().enumerate() {
            if models[..i].contains(m) {
                return Err(Error::data(format!("duplicate model row {m:?}")));
            }
        }
        for (i, q) in quarters.iter().enumerate() {
            if quarters[..i].contains(q) {
                return Err(Error::data(format!("duplicate quarter column {q}")));
            }
        }
        let cells = vec![vec![Cell::Absent("not computed".into()); quarters.len()]; models.len()];
        Ok(Self {
            models,
            quarters,
            cells,
            diag: BTreeMap::new(),
        })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn quarters(&self) -> &[Quarter] {
        &self.quarters
    }

    pub fn diag(&self) -> &BTreeMap<String, Quarter> {
        &self.diag
    }

    pub fn row_index(&self, model: &str) -> Option<usize> {
        self.models.iter().position(|m| m == model)
    }

    pub fn col_index(&self, q: Quarter) -> Option<usize> {
        self.quarters.iter().position(|&c| c == q)
    }

    pub fn cell(&self, model: &str, q: Quarter) -> Option<&Cell> {
        Some(&self.cells[self.row_index(model)?][self.col_index(q)?])
    }

    pub fn value(&self, model: &str, q: Quarter) -> Option<f64> {
        self.cell(model, q).and_then(Cell::value)
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        &self.cells[i]
    }

    /// Sets a cell. Perplexities are at least 1, so smaller or non-finite
    /// values are rejected.
    pub fn set(&mut self, model: &str, q: Quarter, cell: Cell) -> Result<()> {
        if let Cell::Value(v) = cell {
            if !(v.is_finite() && v >= 1.0) {
                return Err(Error::data(format!(
                    "cell [{model}, {q}] = {v} is not a perplexity"
                )));
            }
        }
        let r = self
            .row_index(model)
            .ok_or_else(|| Error::NotFound(format!("model row {model:?}")))?;
        let c = self
            .col_index(q)
            .ok_or_else(|| Error::NotFound(format!("quarter column {q}")))?;
        self.cells[r][c] = cell;
        Ok(())
    }

    pub fn set_diag(&mut self, model: &str, q: Quarter) -> Result<()> {
        if self.row_index(model).is_none() {
            return Err(Error::NotFound(format!("model row {model:?}")));
        }
        self.diag.insert(model.to_string(), q);
        Ok(())
    }

    /// Multiplies every present value of a row by `factor`.
    pub fn scale_row(&mut self, model: &str, factor: f64) {
        if let Some(r) = self.row_index(model) {
            for c in &mut self.cells[r] {
                if let Cell::Value(v) = c {
                    *v *= factor;
                }
            }
        }
    }
}

/// Scores every registry model on every test quarter.
///
/// A model whose scorer cannot be built, or a cell whose scoring fails,
/// becomes an absent cell carrying the error text. Quarterly models get their
/// cutoff as diagonal.
pub fn build_pppl_matrix<S: AsRef<str> + Sync>(
    registry: &Registry,
    testsets: &BTreeMap<Quarter, Vec<(u64, S)>>,
    factory: &ScorerFactory<'_>,
) -> Result<PpplMatrix> {
    if testsets.is_empty() {
        return Err(Error::invalid("no test sets"));
    }
    let records = registry.records();
    let quarters: Vec<Quarter> = testsets.keys().copied().collect();
    let mut matrix = PpplMatrix::new(
        records.iter().map(|r| r.name.clone()).collect(),
        quarters.clone(),
    )?;
    let rows: Vec<Vec<Cell>> = records
        .par_iter()
        .map(|record| match factory(record) {
            Err(e) => vec![Cell::Absent(e.to_string()); quarters.len()],
            Ok(scorer) => testsets
                .values()
                .map(|texts| match pppl(scorer.as_ref(), texts) {
                    Ok(r) => Cell::Value(r.pppl),
                    Err(e) => Cell::Absent(e.to_string()),
                })
                .collect(),
        })
        .collect();
    for (record, row) in records.iter().zip(rows) {
        for (q, cell) in quarters.iter().zip(row) {
            if let Cell::Value(v) = cell {
                if !(v.is_finite() && v >= 1.0) {
                    matrix.set(
                        &record.name,
                        *q,
                        Cell::Absent(format!("invalid perplexity {v}")),
                    )?;
                    continue;
                }
            }
            matrix.set(&record.name, *q, cell)?;
        }
        if record.is_quarterly() {
            if let Some(q) = record.quarter() {
                matrix.set_diag(&record.name, q)?;
            }
        }
    }
    Ok(matrix)
}

fn relative_change(new: f64, reference: f64) -> f64 {
    100.0 * (new - reference) / reference
}

/// Per-quarter change between consecutive quarterly models.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeColumn {
    pub values: BTreeMap<Quarter, f64>,
    pub flags: Vec<Flag>,
}

/// For every test quarter `q` covered by the quarterly chain (rows named
/// `YYYY-Qn`), the change from the model of `q - 1` to the model of `q`,
/// both evaluated on `q`:
///
/// ```text
/// change(q) = 100 * (V[q][q] - V[q-1][q]) / V[q-1][q]
/// ```
///
/// The first quarter of the chain has no predecessor and no entry.
pub fn change_column(matrix: &PpplMatrix) -> Result<ChangeColumn> {
    let chain: Vec<Quarter> = matrix
        .models()
        .iter()
        .filter_map(|m| m.parse::<Quarter>().ok())
        .collect();
    let (first, last) = match (chain.iter().min(), chain.iter().max()) {
        (Some(&f), Some(&l)) if f < l => (f, l),
        _ => {
            return Err(Error::data(
                "matrix has fewer than two quarterly model rows",
            ))
        }
    };
    let mut out = ChangeColumn {
        values: BTreeMap::new(),
        flags: Vec::new(),
    };
    for &q in matrix.quarters() {
        if q <= first || q > last {
            continue;
        }
        let (cur, prev) = (q.to_string(), q.prev().to_string());
        for name in [&prev, &cur] {
            if matrix.row_index(name).is_none() {
                return Err(Error::data(format!(
                    "missing cell [{name}, {q}]: no model row {name}"
                )));
            }
        }
        match (matrix.cell(&cur, q), matrix.cell(&prev, q)) {
            (Some(Cell::Value(c)), Some(Cell::Value(p))) => {
                out.values.insert(q, relative_change(*c, *p));
            }
            (a, b) => {
                let reason = [(&cur, a), (&prev, b)]
                    .iter()
                    .filter_map(|(m, c)| match c {
                        Some(Cell::Absent(r)) => Some(format!("[{m}, {q}] absent: {r}")),
                        _ => None,
                    })
                    .collect::<Vec<_>>()
                    .join("; ");
                out.flags.push(Flag {
                    model: cur.clone(),
                    quarter: Some(q),
                    reason,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationTable {
    pub models: Vec<String>,
    pub quarters: Vec<Quarter>,
    /// Signed percentages; `None` where the matrix cell is absent.
    pub values: Vec<Vec<Option<f64>>>,
    pub flags: Vec<Flag>,
}

impl DegradationTable {
    pub fn get(&self, model: &str, q: Quarter) -> Option<f64> {
        let r = self.models.iter().position(|m| m == model)?;
        let c = self.quarters.iter().position(|&x| x == q)?;
        self.values[r][c]
    }
}

/// Each model's pseudo-perplexity on every test quarter relative to its own
/// cutoff quarter:
///
/// ```text
/// D[m][q] = 100 * (V[m][q] - V[m][diag(m)]) / V[m][diag(m)]
/// ```
///
/// Rows without a diagonal, or whose diagonal cell is absent, are skipped and
/// flagged. A diagonal quarter that is not a column is an error.
pub fn degradation_table(matrix: &PpplMatrix) -> Result<DegradationTable> {
    if matrix.diag().is_empty() {
        return Err(Error::data("matrix has no diagonal (model cutoff) entries"));
    }
    let mut table = DegradationTable {
        models: Vec::new(),
        quarters: matrix.quarters().to_vec(),
        values: Vec::new(),
        flags: Vec::new(),
    };
    for (r, model) in matrix.models().iter().enumerate() {
        let Some(&d) = matrix.diag().get(model) else {
            table.flags.push(Flag {
                model: model.clone(),
                quarter: None,
                reason: "no diagonal quarter".into(),
            });
            continue;
        };
        let dc = matrix.col_index(d).ok_or_else(|| {
            Error::data(format!(
                "missing diagonal cell [{model}, {d}]: no column {d}"
            ))
        })?;
        let reference = match &matrix.row(r)[dc] {
            Cell::Value(v) => *v,
            Cell::Absent(reason) => {
                table.flags.push(Flag {
                    model: model.clone(),
                    quarter: Some(d),
                    reason: format!("diagonal cell absent: {reason}"),
                });
                continue;
            }
        };
        let row = matrix
            .row(r)
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == dc {
                    return Some(0.0);
                }
                match cell {
                    Cell::Value(v) => Some(relative_change(*v, reference)),
                    Cell::Absent(reason) => {
                        table.flags.push(Flag {
                            model: model.clone(),
                            quarter: Some(matrix.quarters()[c]),
                            reason: reason.clone(),
                        });
                        None
                    }
                }
            })
            .collect();
        table.models.push(model.clone());
        table.values.push(row);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub quarter: Quarter,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `a - b`; negative means `a` has the lower (better) pseudo-perplexity.
    pub difference: Option<f64>,
    pub winner: Option<Winner>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn winner(&self, q: Quarter) -> Option<Winner> {
        self.rows
            .iter()
            .find(|r| r.quarter == q)
            .and_then(|r| r.winner)
    }
}

/// Quarter-by-quarter comparison of two model rows. Lower wins.
pub fn compare_models(matrix: &PpplMatrix, a: &str, b: &str) -> Result<Comparison> {
    let ra = matrix
        .row_index(a)
        .ok_or_else(|| Error::NotFound(format!("model row {a:?}")))?;
    let rb = matrix
        .row_index(b)
        .ok_or_else(|| Error::NotFound(format!("model row {b:?}")))?;
    let rows = matrix
        .quarters()
        .iter()
        .enumerate()
        .map(|(c, &quarter)| {
            let va = matrix.row(ra)[c].value();
            let vb = matrix.row(rb)[c].value();
            let (difference, winner) = match (va, vb) {
                (Some(x), Some(y)) => {
                    let w = match x.total_cmp(&y) {
                        std::cmp::Ordering::Less => Winner::A,
                        std::cmp::Ordering::Greater => Winner::B,
                        std::cmp::Ordering::Equal => Winner::Tie,
                    };
                    (Some(x - y), Some(w))
                }
                _ => (None, None),
            };
            ComparisonRow {
                quarter,
                a: va,
                b: vb,
                difference,
                winner,
            }
        })
        .collect();
    Ok(Comparison {
        a: a.to_string(),
        b: b.to_string(),
        rows,
    })
}

/// PLL of one text under each quarterly model, oldest model first.
#[derive(Debug, Clone, PartialEq)]
pub struct PllTrajectory {
    pub label: String,
    pub points: Vec<(String, f64)>,
}

/// Scores every `(label, text)` under every quarterly model of the registry.
pub fn pll_trajectories<S: AsRef<str> + Sync>(
    registry: &Registry,
    texts: &[(String, S)],
    factory: &ScorerFactory<'_>,
) -> Result<Vec<PllTrajectory>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let models = registry.quarterly();
    if models.is_empty() {
        return Err(Error::NotFound("registry has no quarterly models".into()));
    }
    let per_model: Vec<Vec<PllResult>> = models
        .par_iter()
        .map(|record| {
            let scorer = factory(record)?;
            texts
                .iter()
                .map(|(label, text)| {
                    pll(scorer.as_ref(), text.as_ref()).map_err(|e| {
                        e.with_context(format!("model {}, text {label:?}", record.name))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(texts
        .iter()
        .enumerate()
        .map(|(i, (label, _))| PllTrajectory {
            label: label.clone(),
            points: models
                .iter()
                .zip(&per_model)
                .map(|(m, results)| (m.name.clone(), results[i].pll))
                .collect(),
        })
        .collect())
}

/// Published pseudo-perplexities of the released models, with each
/// quarterly model's cutoff as diagonal.
pub fn released_matrix() -> PpplMatrix {
    matrix_from_csv(include_str!("../../fixtures/released_pppl.csv")).expect("fixture parses")
}

/// Control-experiment pseudo-perplexities (double-data third-quarter model).
pub fn doubled_data_matrix() -> PpplMatrix {
    matrix_from_csv(include_str!("../../fixtures/doubled_pppl.csv")).expect("fixture parses")
}
