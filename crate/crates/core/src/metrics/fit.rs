use serde::{Deserialize, Serialize};

use super::{CostConstants, MetricsError, RunSample};

/// Relative size of the second QR pivot below which the design is rank-deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub constants: CostConstants,
    pub runtime_rmse_ms: f64,
    pub memory_rmse_mb: f64,
    pub samples: usize,
}

/// Thin QR factorization of the two-column design `[n | m]` (modified Gram-Schmidt
/// with one reorthogonalization pass).
struct Qr {
    q1: Vec<f64>,
    q2: Vec<f64>,
    r11: f64,
    r12: f64,
    r22: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl Qr {
    fn factor(x1: &[f64], x2: &[f64]) -> Result<Self, MetricsError> {
        let r11 = norm(x1);
        if r11 == 0.0 {
            return Err(MetricsError::DegenerateDesign(
                "n column is all zero".into(),
            ));
        }
        let q1: Vec<f64> = x1.iter().map(|v| v / r11).collect();
        let mut r12 = dot(&q1, x2);
        let mut v: Vec<f64> = x2.iter().zip(&q1).map(|(x, q)| x - r12 * q).collect();
        let s = dot(&q1, &v);
        v.iter_mut().zip(&q1).for_each(|(x, q)| *x -= s * q);
        r12 += s;
        let r22 = norm(&v);
        if r22 <= RANK_TOL * norm(x2).max(r11) {
            return Err(MetricsError::DegenerateDesign(
                "(n, m) columns are linearly dependent".into(),
            ));
        }
        let q2 = v.iter().map(|x| x / r22).collect();
        Ok(Qr {
            q1,
            q2,
            r11,
            r12,
            r22,
        })
    }

    fn solve(&self, y: &[f64]) -> (f64, f64) {
        let b1 = dot(&self.q1, y);
        let rest: Vec<f64> = y.iter().zip(&self.q1).map(|(v, q)| v - b1 * q).collect();
        let b2 = dot(&self.q2, &rest);
        let c2 = b2 / self.r22;
        let c1 = (b1 - self.r12 * c2) / self.r11;
        (c1, c2)
    }
}

fn sse(x1: &[f64], x2: &[f64], y: &[f64], (a, b): (f64, f64)) -> f64 {
    x1.iter()
        .zip(x2)
        .zip(y)
        .map(|((n, m), y)| (y - a * n - b * m).powi(2))
        .sum()
}

/// Exact two-variable non-negative least squares: the unconstrained optimum if it
/// is feasible, otherwise the better of the two single-column fits clamped at zero.
fn nnls2(qr: &Qr, x1: &[f64], x2: &[f64], y: &[f64]) -> (f64, f64) {
    let (a, b) = qr.solve(y);
    if a >= 0.0 && b >= 0.0 {
        return (a, b);
    }
    let only1 = ((dot(x1, y) / dot(x1, x1)).max(0.0), 0.0);
    let x2x2 = dot(x2, x2);
    let only2 = (
        0.0,
        if x2x2 > 0.0 {
            (dot(x2, y) / x2x2).max(0.0)
        } else {
            0.0
        },
    );
    if sse(x1, x2, y, only1) <= sse(x1, x2, y, only2) {
        only1
    } else {
        only2
    }
}

fn rmse(x1: &[f64], x2: &[f64], y: &[f64], coef: (f64, f64)) -> f64 {
    (sse(x1, x2, y, coef) / y.len() as f64).sqrt()
}

/// Least-squares fit of `runtime ~ c1·n + c2·m` and `memory ~ c3·n + c4·m`,
/// constrained to non-negative constants.
pub fn fit_constants(samples: &[RunSample]) -> Result<FitReport, MetricsError> {
    if samples.len() < 2 {
        return Err(MetricsError::DegenerateDesign(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n: Vec<f64> = samples.iter().map(|s| s.n as f64).collect();
    let m: Vec<f64> = samples.iter().map(|s| s.m as f64).collect();
    let runtime: Vec<f64> = samples.iter().map(|s| s.runtime_ms).collect();
    let memory: Vec<f64> = samples.iter().map(|s| s.memory_mb).collect();

    let qr = Qr::factor(&n, &m)?;
    let (c1, c2) = nnls2(&qr, &n, &m, &runtime);
    let (c3, c4) = nnls2(&qr, &n, &m, &memory);
    Ok(FitReport {
        constants: CostConstants { c1, c2, c3, c4 },
        runtime_rmse_ms: rmse(&n, &m, &runtime, (c1, c2)),
        memory_rmse_mb: rmse(&n, &m, &memory, (c3, c4)),
        samples: samples.len(),
    })
}

/// Column order of samples files.
pub const SAMPLES_HEADER: [&str; 4] = ["n", "m", "runtime_ms", "memory_mb"];

/// Reads `n,m,runtime_ms,memory_mb` rows, validating each sample.
pub fn load_samples(csv_text: &str) -> Result<Vec<RunSample>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| MetricsError::MalformedFixture(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != SAMPLES_HEADER {
        return Err(MetricsError::MalformedFixture(format!(
            "expected columns {}, got {}",
            SAMPLES_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize::<RunSample>()
        .enumerate()
        .map(|(i, row)| {
            let s =
                row.map_err(|e| MetricsError::MalformedFixture(format!("row {}: {e}", i + 1)))?;
            RunSample::new(s.n, s.m, s.runtime_ms, s.memory_mb)
        })
        .collect()
}

/// One samples-file line (without header) for `s`.
pub fn sample_csv_line(s: &RunSample) -> String {
    format!("{},{},{},{}\n", s.n, s.m, s.runtime_ms, s.memory_mb)
}
