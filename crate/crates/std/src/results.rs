//! CSV result rows and per-cell aggregates.

use std::io::Write;

use charter_core::baseline::{DpSgdRun, FLOAT_BITS};
use charter_core::orchestrator::RunTranscript;

/// Column names, in order. Changing them is a format break.
pub const HEADER: [&str; 16] = [
    "run_id",
    "seed",
    "problem",
    "d",
    "M",
    "N",
    "eps",
    "delta",
    "K",
    "J0",
    "J1",
    "cc_bits",
    "k_star",
    "excess_risk",
    "wall_ms",
    "algo",
];

pub const AGGREGATE_HEADER: [&str; 12] = [
    "problem",
    "d",
    "M",
    "N",
    "eps",
    "delta",
    "algo",
    "runs",
    "median_er",
    "q1_er",
    "q3_er",
    "iqr_er",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algo {
    Charter,
    DpSgd,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Charter => "charter",
            Algo::DpSgd => "dpsgd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run_id: usize,
    pub seed: u64,
    pub problem: String,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub eps: f64,
    pub delta: f64,
    /// Iteration count; the number of rounds for DP-SGD.
    pub k: usize,
    /// Bits per gradient coordinate (32 for DP-SGD).
    pub j0: u32,
    /// Bits per loss value (0 for DP-SGD, which has no verification stage).
    pub j1: u32,
    pub cc_bits: f64,
    /// Selected iterate; the last round for DP-SGD.
    pub k_star: usize,
    pub excess_risk: Option<f64>,
    pub wall_ms: u64,
    pub algo: Algo,
}

impl ResultRow {
    pub fn from_charter(run_id: usize, problem: &str, t: &RunTranscript, wall_ms: u64) -> Self {
        let p = &t.params;
        ResultRow {
            run_id,
            seed: t.seed,
            problem: problem.to_string(),
            d: p.inputs.d,
            m: p.inputs.m,
            n: p.inputs.n,
            eps: p.privacy.eps,
            delta: if p.privacy.is_private() {
                p.privacy.delta
            } else {
                0.0
            },
            k: p.k,
            j0: p.j0,
            j1: p.j1,
            cc_bits: t.cc_bits,
            k_star: t.k_star,
            excess_risk: t.excess_risk,
            wall_ms,
            algo: Algo::Charter,
        }
    }

    pub fn from_dpsgd(run_id: usize, like: &ResultRow, run: &DpSgdRun, wall_ms: u64) -> Self {
        ResultRow {
            run_id,
            k: run.rounds,
            j0: FLOAT_BITS as u32,
            j1: 0,
            cc_bits: run.cc_bits as f64,
            k_star: run.rounds,
            excess_risk: run.excess_risk,
            wall_ms,
            algo: Algo::DpSgd,
            ..like.clone()
        }
    }

    /// Fields as strings, in [`HEADER`] order. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn fields(&self) -> [String; 16] {
        [
            self.run_id.to_string(),
            self.seed.to_string(),
            self.problem.clone(),
            self.d.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.eps.to_string(),
            self.delta.to_string(),
            self.k.to_string(),
            self.j0.to_string(),
            self.j1.to_string(),
            self.cc_bits.to_string(),
            self.k_star.to_string(),
            self.excess_risk.map(|v| v.to_string()).unwrap_or_default(),
            self.wall_ms.to_string(),
            self.algo.as_str().to_string(),
        ]
    }
}

/// Writes rows one at a time, flushing after each.
pub struct RowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RowWriter<W> {
    pub fn new(out: W) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(RowWriter { inner })
    }

    pub fn write(&mut self, row: &ResultRow) -> csv::Result<()> {
        self.inner.write_record(row.fields())?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
            .into_inner()
            .unwrap_or_else(|e| panic!("flush failed: {}", e.error()))
    }
}

/// Reads rows back, checking the header.
pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>, String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(format!(
            "unexpected CSV header {:?}",
            header.iter().collect::<Vec<_>>()
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| {
            f(i).parse::<f64>()
                .map_err(|e| format!("{}: {e}", HEADER[i]))
        };
        let int = |i: usize| {
            f(i).parse::<u64>()
                .map_err(|e| format!("{}: {e}", HEADER[i]))
        };
        rows.push(ResultRow {
            run_id: int(0)? as usize,
            seed: int(1)?,
            problem: f(2).to_string(),
            d: int(3)? as usize,
            m: int(4)? as usize,
            n: int(5)? as usize,
            eps: num(6)?,
            delta: num(7)?,
            k: int(8)? as usize,
            j0: int(9)? as u32,
            j1: int(10)? as u32,
            cc_bits: num(11)?,
            k_star: int(12)? as usize,
            excess_risk: if f(13).is_empty() {
                None
            } else {
                Some(num(13)?)
            },
            wall_ms: int(14)?,
            algo: match f(15) {
                "charter" => Algo::Charter,
                "dpsgd" => Algo::DpSgd,
                other => return Err(format!("unknown algo `{other}`")),
            },
        });
    }
    Ok(rows)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub problem: String,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub eps: f64,
    pub delta: f64,
    pub algo: Algo,
    pub runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Groups rows by cell (everything but the seed) in order of first
/// appearance and summarizes the excess risk.
pub fn aggregate(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut cells: Vec<(CellSummary, Vec<f64>)> = Vec::new();
    for r in rows {
        let same = |c: &CellSummary| {
            c.problem == r.problem
                && c.d == r.d
                && c.m == r.m
                && c.n == r.n
                && c.eps.to_bits() == r.eps.to_bits()
                && c.delta.to_bits() == r.delta.to_bits()
                && c.algo == r.algo
        };
        let idx = match cells.iter().position(|(c, _)| same(c)) {
            Some(i) => i,
            None => {
                let c = CellSummary {
                    problem: r.problem.clone(),
                    d: r.d,
                    m: r.m,
                    n: r.n,
                    eps: r.eps,
                    delta: r.delta,
                    algo: r.algo,
                    runs: 0,
                    median: f64::NAN,
                    q1: f64::NAN,
                    q3: f64::NAN,
                };
                cells.push((c, Vec::new()));
                cells.len() - 1
            }
        };
        cells[idx].0.runs += 1;
        cells[idx].1.extend(r.excess_risk);
    }
    cells
        .into_iter()
        .map(|(mut c, mut ers)| {
            ers.sort_by(f64::total_cmp);
            c.median = quantile(&ers, 0.5);
            c.q1 = quantile(&ers, 0.25);
            c.q3 = quantile(&ers, 0.75);
            c
        })
        .collect()
}

pub fn write_aggregate<W: Write>(out: W, cells: &[CellSummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for c in cells {
        w.write_record([
            c.problem.clone(),
            c.d.to_string(),
            c.m.to_string(),
            c.n.to_string(),
            c.eps.to_string(),
            c.delta.to_string(),
            c.algo.as_str().to_string(),
            c.runs.to_string(),
            c.median.to_string(),
            c.q1.to_string(),
            c.q3.to_string(),
            (c.q3 - c.q1).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, er: f64) -> ResultRow {
        ResultRow {
            run_id: seed as usize,
            seed,
            problem: "max-abs".into(),
            d: 2,
            m: 2,
            n: 100,
            eps: f64::INFINITY,
            delta: 0.0,
            k: 10,
            j0: 8,
            j1: 6,
            cc_bits: 306.0,
            k_star: 3,
            excess_risk: Some(er),
            wall_ms: 0,
            algo: Algo::Charter,
        }
    }

    #[test]
    fn round_trip() {
        let rows = vec![row(0, 0.1), row(1, 1e-300)];
        let mut w = RowWriter::new(Vec::new()).unwrap();
        rows.iter().for_each(|r| w.write(r).unwrap());
        let bytes = w.into_inner();
        assert_eq!(read_rows(&bytes[..]).unwrap(), rows);
    }

    #[test]
    fn quartiles() {
        let cells = aggregate(&[
            row(0, 1.0),
            row(1, 2.0),
            row(2, 3.0),
            row(3, 4.0),
            row(4, 5.0),
        ]);
        assert_eq!(cells.len(), 1);
        assert_eq!((cells[0].q1, cells[0].median, cells[0].q3), (2.0, 3.0, 4.0));
    }
}
