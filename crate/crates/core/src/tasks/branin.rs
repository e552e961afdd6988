use std::f64::consts::PI;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::{rng, Error, Result};

pub const BRANIN_A: f64 = 1.0;
pub const BRANIN_B: f64 = 5.1 / (4.0 * PI * PI);
pub const BRANIN_C: f64 = 5.0 / PI;
pub const BRANIN_R: f64 = 6.0;
pub const BRANIN_S: f64 = 10.0;
pub const BRANIN_T: f64 = 1.0 / (8.0 * PI);

/// `x1 ∈ [−5, 10]`, `x2 ∈ [0, 15]`.
pub const BRANIN_DOMAIN: [(f64, f64); 2] = [(-5.0, 10.0), (0.0, 15.0)];

/// The three global maximizers.
pub const BRANIN_MAXIMA: [[f64; 2]; 3] = [[-PI, 12.275], [PI, 2.275], [9.42478, 2.475]];

pub const BRANIN_MAX_VALUE: f64 = -0.397887;

/// Negated Branin function (to be maximized).
pub fn branin_value(x1: f64, x2: f64) -> f64 {
    let inner = x2 - BRANIN_B * x1 * x1 + BRANIN_C * x1 - BRANIN_R;
    -BRANIN_A * inner * inner - BRANIN_S * (1.0 - BRANIN_T) * x1.cos() - BRANIN_S
}

/// Clamp a point into the domain box.
pub fn clip_to_domain(x: [f64; 2]) -> [f64; 2] {
    [x[0].clamp(BRANIN_DOMAIN[0].0, BRANIN_DOMAIN[0].1), x[1].clamp(BRANIN_DOMAIN[1].0, BRANIN_DOMAIN[1].1)]
}

/// Offline dataset plus an audited evaluation oracle.
#[derive(Debug)]
pub struct BraninTask {
    pub xs: Array2<f64>,
    pub ys: Array1<f64>,
    pub y_max: f64,
    queries: AtomicUsize,
}

impl Clone for BraninTask {
    fn clone(&self) -> Self {
        Self { xs: self.xs.clone(), ys: self.ys.clone(), y_max: self.y_max, queries: AtomicUsize::new(self.query_count()) }
    }
}

impl BraninTask {
    pub fn from_data(xs: Array2<f64>, ys: Array1<f64>) -> Result<Self> {
        if xs.ncols() != 2 || xs.nrows() != ys.len() || ys.is_empty() {
            return Err(Error::invalid(format!("dataset must be N x 2 with N >= 1 labels, got {:?} and {}", xs.dim(), ys.len())));
        }
        let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { xs, ys, y_max, queries: AtomicUsize::new(0) })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// Evaluates the black box and counts the query.
    pub fn query(&self, x: [f64; 2]) -> f64 {
        self.queries.fetch_add(1, Ordering::Relaxed);
        branin_value(x[0], x[1])
    }

    pub fn query_count(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset_queries(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    /// Writes `x1,x2,y` rows with a header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x1", "x2", "y"])?;
        for (x, y) in self.xs.rows().into_iter().zip(self.ys.iter()) {
            w.write_record([fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(*y)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != ["x1", "x2", "y"] {
            return Err(Error::Config(format!("expected header x1,x2,y, got {header:?}")));
        }
        let mut flat = Vec::new();
        let mut ys = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| {
                rec.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("bad value in data row {}, column {i}", line + 1)))
            };
            flat.extend([parse(0)?, parse(1)?]);
            ys.push(parse(2)?);
        }
        let n = ys.len();
        Self::from_data(Array2::from_shape_vec((n, 2), flat).expect("two columns"), Array1::from(ys))
    }
}

/// Shortest decimal text that parses back to the same value.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// `n` uniform draws over the domain, with the best `remove_top_fraction`
/// of them removed.
pub fn branin_dataset(n: usize, remove_top_fraction: f64, seed: u64) -> Result<BraninTask> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be >= 1"));
    }
    if !(0.0..1.0).contains(&remove_top_fraction) {
        return Err(Error::invalid(format!("remove_top_fraction must be in [0, 1), got {remove_top_fraction}")));
    }
    let mut stream = rng::derive(seed, &[0x6272_616e]);
    let mut points: Vec<([f64; 2], f64)> = (0..n)
        .map(|_| {
            let x = [
                stream.random_range(BRANIN_DOMAIN[0].0..=BRANIN_DOMAIN[0].1),
                stream.random_range(BRANIN_DOMAIN[1].0..=BRANIN_DOMAIN[1].1),
            ];
            (x, branin_value(x[0], x[1]))
        })
        .collect();
    points.sort_by(|a, b| a.1.total_cmp(&b.1));
    let removed = ((n as f64) * remove_top_fraction).floor() as usize;
    points.truncate((n - removed).max(1));
    let xs = Array2::from_shape_fn((points.len(), 2), |(i, j)| points[i].0[j]);
    let ys = Array1::from_iter(points.iter().map(|p| p.1));
    BraninTask::from_data(xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxima_and_origin() {
        assert!((branin_value(-PI, 12.275) - BRANIN_MAX_VALUE).abs() < 1e-6);
        for m in BRANIN_MAXIMA {
            assert!((branin_value(m[0], m[1]) - BRANIN_MAX_VALUE).abs() < 1e-3);
        }
        let expect = -36.0 - 10.0 * (1.0 - 1.0 / (8.0 * PI)) - 10.0;
        assert!((branin_value(0.0, 0.0) - expect).abs() < 1e-12);
        assert!((branin_value(0.0, 0.0) + 55.602113).abs() < 1e-6);
    }

    #[test]
    fn maxima_are_local_maxima() {
        for m in BRANIN_MAXIMA {
            let v = branin_value(m[0], m[1]);
            for (dx, dy) in [(0.05, 0.0), (-0.05, 0.0), (0.0, 0.05), (0.0, -0.05)] {
                assert!(branin_value(m[0] + dx, m[1] + dy) < v + 1e-4);
            }
        }
    }

    #[test]
    fn dataset_filtering() {
        let full = branin_dataset(5000, 0.0, 1).unwrap();
        assert_eq!(full.len(), 5000);
        assert!(full.y_max > -1.0);
        let cut = branin_dataset(5000, 0.1, 1).unwrap();
        assert_eq!(cut.len(), 4500);
        assert!((cut.y_max + 6.1).abs() < 0.5, "{}", cut.y_max);
        assert!(cut.ys.iter().all(|&y| y <= cut.y_max));
        let one = branin_dataset(1, 0.0, 3).unwrap();
        assert_eq!(one.y_max, branin_value(one.xs[[0, 0]], one.xs[[0, 1]]));
        assert!(branin_dataset(10, 1.0, 0).is_err());
        assert!(branin_dataset(0, 0.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip_and_counter() {
        let t = branin_dataset(50, 0.1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("branin_data.csv");
        t.write_csv(&path).unwrap();
        let back = BraninTask::read_csv(&path).unwrap();
        assert_eq!(back.xs, t.xs);
        assert_eq!(back.ys, t.ys);
        assert_eq!(back.y_max, t.y_max);
        assert_eq!(t.query_count(), 0);
        t.query([0.0, 0.0]);
        assert_eq!(t.query_count(), 1);
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_to_domain([-7.0, 20.0]), [-5.0, 15.0]);
        assert_eq!(clip_to_domain([1.0, 2.0]), [1.0, 2.0]);
    }
}
