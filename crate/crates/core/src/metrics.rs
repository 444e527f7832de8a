//! Localization error metrics per axis and averaged over the three axes.
//!
//! Arguments follow the order `(truth, pred)`. The normalized variants
//! divide by the range `max − min` of the ground-truth coordinates of each
//! axis. Averages are the mean of the three per-axis values.
//!
//! RMSE comes in two flavours: [`MetricMode::PaperLiteral`] computes
//! `√(Σ d²) / n`, [`MetricMode::Conventional`] computes `√(Σ d² / n)`; the
//! two differ by a factor of `√n`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const AXES: [&str; 3] = ["x", "y", "z"];
pub const METRICS: [&str; 4] = ["mae", "nmae", "rmse", "nrmse"];
pub const CSV_HEADER: &str = "metric,axis,value,mode";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    #[default]
    PaperLiteral,
    Conventional,
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricMode::PaperLiteral => "paper_literal",
            MetricMode::Conventional => "conventional",
        })
    }
}

impl FromStr for MetricMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" | "paper_literal" => Ok(MetricMode::PaperLiteral),
            "conventional" => Ok(MetricMode::Conventional),
            other => Err(Error::config(format!(
                "unknown metric mode `{other}` (expected paper-literal or conventional)"
            ))),
        }
    }
}

/// One metric for the x, y and z axes plus their mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisValues {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub average: f64,
}

impl AxisValues {
    pub fn from_axes(v: [f64; 3]) -> Self {
        AxisValues { x: v[0], y: v[1], z: v[2], average: (v[0] + v[1] + v[2]) / 3.0 }
    }

    pub fn axes(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// `[x, y, z, average]`.
    pub fn values(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.average]
    }

    fn divided_by(&self, ranges: [f64; 3]) -> Self {
        let a = self.axes();
        Self::from_axes(std::array::from_fn(|i| a[i] / ranges[i]))
    }
}

fn columns<T: Element>(truth: &Tensor<T>, pred: &Tensor<T>) -> Result<usize> {
    if truth.ndim() != 2 || truth.dim(1) != 3 {
        return Err(Error::dim("ground-truth positions", "[n, 3]", truth.shape()));
    }
    if pred.shape() != truth.shape() {
        return Err(Error::dim("predicted positions", truth.shape(), pred.shape()));
    }
    let n = truth.dim(0);
    if n == 0 {
        return Err(Error::Domain("metrics need at least one sample".into()));
    }
    Ok(n)
}

/// Per-axis sums of `f(pred − truth)`.
fn axis_sums<T: Element>(truth: &Tensor<T>, pred: &Tensor<T>, f: impl Fn(f64) -> f64) -> [f64; 3] {
    let mut s = [0.0; 3];
    for (t, p) in truth.data().chunks_exact(3).zip(pred.data().chunks_exact(3)) {
        for a in 0..3 {
            s[a] += f(p[a].to_f64().unwrap() - t[a].to_f64().unwrap());
        }
    }
    s
}

/// `max − min` of each ground-truth axis; a zero range is a domain error.
pub fn axis_ranges<T: Element>(truth: &Tensor<T>) -> Result<[f64; 3]> {
    if truth.ndim() != 2 || truth.dim(1) != 3 {
        return Err(Error::dim("ground-truth positions", "[n, 3]", truth.shape()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for row in truth.data().chunks_exact(3) {
        for a in 0..3 {
            let v = row[a].to_f64().unwrap();
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    let ranges: [f64; 3] = std::array::from_fn(|a| hi[a] - lo[a]);
    for (a, r) in ranges.iter().enumerate() {
        if !(*r > 0.0) {
            return Err(Error::Domain(format!(
                "ground-truth {} coordinates have zero range; normalized metrics are undefined",
                AXES[a]
            )));
        }
    }
    Ok(ranges)
}

pub fn mae<T: Element>(truth: &Tensor<T>, pred: &Tensor<T>) -> Result<AxisValues> {
    let n = columns(truth, pred)? as f64;
    let s = axis_sums(truth, pred, f64::abs);
    Ok(AxisValues::from_axes(s.map(|v| v / n)))
}

pub fn nmae<T: Element>(truth: &Tensor<T>, pred: &Tensor<T>) -> Result<AxisValues> {
    let m = mae(truth, pred)?;
    Ok(m.divided_by(axis_ranges(truth)?))
}

pub fn rmse<T: Element>(truth: &Tensor<T>, pred: &Tensor<T>, mode: MetricMode) -> Result<AxisValues> {
    let n = columns(truth, pred)? as f64;
    let s = axis_sums(truth, pred, |d| d * d);
    Ok(AxisValues::from_axes(s.map(|v| match mode {
        MetricMode::PaperLiteral => v.sqrt() / n,
        MetricMode::Conventional => (v / n).sqrt(),
    })))
}

pub fn nrmse<T: Element>(truth: &Tensor<T>, pred: &Tensor<T>, mode: MetricMode) -> Result<AxisValues> {
    let r = rmse(truth, pred, mode)?;
    Ok(r.divided_by(axis_ranges(truth)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: MetricMode,
    pub n: usize,
    /// Ground-truth ranges used by the normalized metrics.
    pub ranges: [f64; 3],
    pub mae: AxisValues,
    pub nmae: AxisValues,
    pub rmse: AxisValues,
    pub nrmse: AxisValues,
}

pub fn compute_report<T: Element>(truth: &Tensor<T>, pred: &Tensor<T>, mode: MetricMode) -> Result<MetricsReport> {
    let n = columns(truth, pred)?;
    let ranges = axis_ranges(truth)?;
    let mae = mae(truth, pred)?;
    let rmse = rmse(truth, pred, mode)?;
    Ok(MetricsReport {
        mode,
        n,
        ranges,
        nmae: mae.divided_by(ranges),
        nrmse: rmse.divided_by(ranges),
        mae,
        rmse,
    })
}

impl MetricsReport {
    pub fn metric(&self, name: &str) -> Option<&AxisValues> {
        match name {
            "mae" => Some(&self.mae),
            "nmae" => Some(&self.nmae),
            "rmse" => Some(&self.rmse),
            "nrmse" => Some(&self.nrmse),
            _ => None,
        }
    }

    /// Long-format CSV: one row per metric and axis, then the sample count
    /// and normalization ranges.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for name in METRICS {
            let v = self.metric(name).expect("known metric").values();
            for (axis, value) in AXES.iter().chain(["average"].iter()).zip(v) {
                writeln!(out, "{name},{axis},{value},{}", self.mode).unwrap();
            }
        }
        for (axis, r) in AXES.iter().zip(self.ranges) {
            writeln!(out, "range,{axis},{r},{}", self.mode).unwrap();
        }
        writeln!(out, "n,all,{},{}", self.n, self.mode).unwrap();
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::Parse { line: 1, message: format!("expected header `{CSV_HEADER}`") }),
        }
        let mut mode = None;
        let mut vals = [[f64::NAN; 4]; 4];
        let mut ranges = [f64::NAN; 3];
        let mut n = None;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse { line: line_no, message: m.to_string() };
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let row_mode: MetricMode = f[3].parse().map_err(|_| bad("unknown mode"))?;
            if *mode.get_or_insert(row_mode) != row_mode {
                return Err(bad("mixed modes in one report"));
            }
            let value: f64 = f[2].parse().map_err(|_| bad("value is not a number"))?;
            let axis = ["x", "y", "z", "average"].iter().position(|a| *a == f[1]);
            match (f[0], axis) {
                ("n", _) if f[1] == "all" => n = Some(f[2].parse().map_err(|_| bad("n is not an integer"))?),
                ("range", Some(a)) if a < 3 => ranges[a] = value,
                (metric, Some(a)) => {
                    let m = METRICS.iter().position(|m| *m == metric).ok_or_else(|| bad("unknown metric"))?;
                    vals[m][a] = value;
                }
                _ => return Err(bad("unknown axis")),
            }
        }
        let missing = || Error::Parse { line: 0, message: "report is incomplete".into() };
        if vals.iter().flatten().chain(&ranges).any(|v| v.is_nan()) {
            return Err(missing());
        }
        let axis = |m: usize| AxisValues { x: vals[m][0], y: vals[m][1], z: vals[m][2], average: vals[m][3] };
        Ok(MetricsReport {
            mode: mode.ok_or_else(missing)?,
            n: n.ok_or_else(missing)?,
            ranges,
            mae: axis(0),
            nmae: axis(1),
            rmse: axis(2),
            nrmse: axis(3),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-sample signed errors `pred − truth` per axis and the Euclidean error.
pub fn per_sample_errors<T: Element>(truth: &Tensor<T>, pred: &Tensor<T>) -> Result<Vec<[f64; 4]>> {
    columns(truth, pred)?;
    Ok(truth
        .data()
        .chunks_exact(3)
        .zip(pred.data().chunks_exact(3))
        .map(|(t, p)| {
            let d: [f64; 3] = std::array::from_fn(|a| p[a].to_f64().unwrap() - t[a].to_f64().unwrap());
            [d[0], d[1], d[2], (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> (Tensor<f64>, Tensor<f64>) {
        let truth = Tensor::from_rows(&[[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]]).unwrap();
        let pred = Tensor::from_rows(&[[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]).unwrap();
        (truth, pred)
    }

    fn all_equal(v: &AxisValues, want: f64, tol: f64) -> bool {
        v.values().iter().all(|x| (x - want).abs() <= tol)
    }

    #[test]
    fn toy_fixture_values() {
        let (t, p) = toy();
        assert!(all_equal(&mae(&t, &p).unwrap(), 1.0, 1e-12));
        assert!(all_equal(&nmae(&t, &p).unwrap(), 0.5, 1e-12));
        assert!(all_equal(&rmse(&t, &p, MetricMode::Conventional).unwrap(), 1.0, 1e-12));
        assert!(all_equal(&rmse(&t, &p, MetricMode::PaperLiteral).unwrap(), 2f64.sqrt() / 2.0, 1e-12));
        assert!(all_equal(&nrmse(&t, &p, MetricMode::Conventional).unwrap(), 0.5, 1e-12));
        let r = compute_report(&t, &p, MetricMode::PaperLiteral).unwrap();
        assert!([r.mae, r.nmae, r.rmse, r.nrmse].iter().flat_map(|v| v.values()).all(f64::is_finite));
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let (t, _) = toy();
        for mode in [MetricMode::PaperLiteral, MetricMode::Conventional] {
            let r = compute_report(&t, &t, mode).unwrap();
            assert!([r.mae, r.nmae, r.rmse, r.nrmse].iter().flat_map(|v| v.values()).all(|v| v == 0.0));
        }
    }

    #[test]
    fn degenerate_axis_is_named() {
        let t = Tensor::from_rows(&[[0.0f64, 1.0, 5.0], [2.0, 3.0, 5.0]]).unwrap();
        let err = nmae(&t, &t).unwrap_err().to_string();
        assert!(err.contains(" z "), "{err}");
        assert!(mae(&t, &t).is_ok());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (t, _) = toy();
        let p = Tensor::zeros(vec![3, 3]).unwrap();
        assert!(matches!(mae(&t, &p), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mode_names() {
        assert_eq!("paper-literal".parse::<MetricMode>().unwrap(), MetricMode::PaperLiteral);
        assert_eq!("conventional".parse::<MetricMode>().unwrap(), MetricMode::Conventional);
        assert!("rms".parse::<MetricMode>().is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let t = Tensor::from_rows(&[[0.0, 1.0, 2.0], [3.5, -1.0, 7.0], [1.0, 0.0, 0.5]]).unwrap();
        let p = Tensor::from_rows(&[[0.1, 1.3, 2.0], [3.0, -1.2, 6.1], [1.7, 0.2, 0.1]]).unwrap();
        for mode in [MetricMode::PaperLiteral, MetricMode::Conventional] {
            let r = compute_report(&t, &p, mode).unwrap();
            let csv = r.to_csv();
            assert_eq!(csv.lines().count(), 1 + 16 + 3 + 1);
            assert_eq!(MetricsReport::from_csv(&csv).unwrap(), r);
            assert_eq!(serde_json::from_str::<MetricsReport>(&r.to_json()).unwrap(), r);
        }
    }

    fn positions() -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec(-100.0f64..100.0, n * 3),
                proptest::collection::vec(-100.0f64..100.0, n * 3),
            )
                .prop_map(move |(a, b)| (Tensor::new(vec![n, 3], a).unwrap(), Tensor::new(vec![n, 3], b).unwrap()))
        })
    }

    fn close(a: &AxisValues, b: &AxisValues, tol: f64) -> bool {
        a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
    }

    proptest! {
        #[test]
        fn mae_never_exceeds_conventional_rmse((t, p) in positions()) {
            let m = mae(&t, &p).unwrap();
            let r = rmse(&t, &p, MetricMode::Conventional).unwrap();
            for (a, b) in m.axes().iter().zip(r.axes()) {
                prop_assert!(*a <= b + 1e-12);
            }
        }

        #[test]
        fn literal_is_conventional_over_sqrt_n((t, p) in positions()) {
            let n = t.dim(0) as f64;
            let lit = rmse(&t, &p, MetricMode::PaperLiteral).unwrap();
            let conv = rmse(&t, &p, MetricMode::Conventional).unwrap();
            for (a, b) in lit.values().iter().zip(conv.values()) {
                prop_assert!((a - b / n.sqrt()).abs() <= 1e-12 * (1.0 + b));
            }
        }

        #[test]
        fn translation_invariance((t, p) in positions(), shift in proptest::array::uniform3(-50.0f64..50.0)) {
            let shifted = |x: &Tensor<f64>| {
                let mut y = x.clone();
                for row in y.data_mut().chunks_exact_mut(3) {
                    for a in 0..3 { row[a] += shift[a]; }
                }
                y
            };
            let (ts, ps) = (shifted(&t), shifted(&p));
            for mode in [MetricMode::PaperLiteral, MetricMode::Conventional] {
                if let (Ok(a), Ok(b)) = (compute_report(&t, &p, mode), compute_report(&ts, &ps, mode)) {
                    prop_assert!(close(&a.mae, &b.mae, 1e-9));
                    prop_assert!(close(&a.rmse, &b.rmse, 1e-9));
                    prop_assert!(close(&a.nmae, &b.nmae, 1e-9));
                    prop_assert!(close(&a.nrmse, &b.nrmse, 1e-9));
                }
            }
        }

        #[test]
        fn scale_covariance((t, p) in positions(), c in 0.01f64..100.0) {
            for mode in [MetricMode::PaperLiteral, MetricMode::Conventional] {
                let a = compute_report(&t, &p, mode).unwrap();
                let b = compute_report(&t.scale(c), &p.scale(c), mode).unwrap();
                let scaled = |v: &AxisValues| AxisValues::from_axes(v.axes().map(|x| x * c));
                prop_assert!(close(&scaled(&a.mae), &b.mae, 1e-9));
                prop_assert!(close(&scaled(&a.rmse), &b.rmse, 1e-9));
                prop_assert!(close(&a.nmae, &b.nmae, 1e-9));
                prop_assert!(close(&a.nrmse, &b.nrmse, 1e-9));
            }
        }
    }
}
