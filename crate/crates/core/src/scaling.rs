//! Small-ladder scaling laws: a bounded compute→loss power law, a fixed-floor
//! loss→accuracy logistic, their composition, and dataset-ranking metrics.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training FLOPs by the usual `6·N·D` estimate.
pub fn compute_flops(params: f64, tokens: f64) -> Result<f64> {
    if !(params > 0.0 && tokens > 0.0) || !params.is_finite() || !tokens.is_finite() {
        return Err(Error::invalid(format!("params and tokens must be positive, got N={params}, D={tokens}")));
    }
    Ok(6.0 * params * tokens)
}

/// Monotonic transform applied to a proxy metric before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    Identity,
    NegLog,
    Reciprocal,
}

impl Transform {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::NegLog => -y.ln(),
            Transform::Reciprocal => 1.0 / y,
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(Transform::Identity),
            "neg-log" | "neglog" => Ok(Transform::NegLog),
            "reciprocal" => Ok(Transform::Reciprocal),
            _ => Err(Error::invalid(format!("unknown transform `{s}` (identity, neg-log, reciprocal)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub e_min: f64,
    /// Defaults to the smallest observed loss.
    pub e_max: Option<f64>,
}

impl Default for PowerLawBounds {
    fn default() -> Self {
        PowerLawBounds {
            alpha_min: 0.05,
            alpha_max: 0.60,
            e_min: 0.0,
            e_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub alpha: f64,
    pub e: f64,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PowerLawFit {
    pub fn loss(&self, compute: f64) -> f64 {
        self.a * compute.powf(-self.alpha) + self.e
    }
}

/// Points normalized by a reference compute so `x = (C/C_ref)^-α` stays O(1).
struct Ladder {
    log_c: Vec<f64>,
    loss: Vec<f64>,
    log_ref: f64,
}

struct Cell {
    a_scaled: f64,
    e: f64,
    residual: f64,
}

impl Ladder {
    fn xs(&self, alpha: f64) -> Vec<f64> {
        self.log_c.iter().map(|lc| (-alpha * (lc - self.log_ref)).exp()).collect()
    }

    fn residual(&self, xs: &[f64], a: f64, e: f64) -> f64 {
        xs.iter().zip(&self.loss).map(|(x, l)| (a * x + e - l).powi(2)).sum()
    }

    /// Closed-form A ≥ 0 for fixed (α, E).
    fn cell(&self, xs: &[f64], e: f64) -> Cell {
        let sxy: f64 = xs.iter().zip(&self.loss).map(|(x, l)| x * (l - e)).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let a = (sxy / sxx).max(0.0);
        Cell {
            a_scaled: a,
            e,
            residual: self.residual(xs, a, e),
        }
    }

    /// Best (A, E) for fixed α with A ≥ 0 and E in bounds: the unconstrained
    /// regression if feasible, else the best boundary solution.
    fn profile(&self, alpha: f64, e_lo: f64, e_hi: f64) -> Cell {
        let xs = self.xs(alpha);
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = self.loss.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&self.loss).map(|(x, l)| (x - mx) * (l - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        if sxx > 0.0 {
            let a = sxy / sxx;
            let e = my - a * mx;
            if a >= 0.0 && (e_lo..=e_hi).contains(&e) {
                return Cell {
                    a_scaled: a,
                    e,
                    residual: self.residual(&xs, a, e),
                };
            }
        }
        let flat = my.clamp(e_lo, e_hi);
        [self.cell(&xs, e_lo), self.cell(&xs, e_hi), Cell {
            a_scaled: 0.0,
            e: flat,
            residual: self.residual(&xs, 0.0, flat),
        }]
        .into_iter()
        .min_by(|p, q| p.residual.total_cmp(&q.residual))
        .unwrap()
    }
}

const ALPHA_GRID: usize = 221;
const E_GRID: usize = 201;

/// Bounded least-squares fit of `L = A·C^-α + E` over `(compute, loss)` pairs:
/// a dense (α, E) grid with closed-form A, then refinement along α with the
/// (A, E) pair re-solved exactly at every step.
pub fn fit_power_law(points: &[(f64, f64)], bounds: &PowerLawBounds) -> Result<PowerLawFit> {
    if points.iter().any(|&(c, l)| !(c > 0.0) || !l.is_finite() || !c.is_finite()) {
        return Err(Error::invalid("power-law fit needs positive compute and finite losses"));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "underdetermined: need at least 3 distinct compute values, got {}",
            distinct.len()
        )));
    }
    if !(bounds.alpha_min > 0.0 && bounds.alpha_min <= bounds.alpha_max) {
        return Err(Error::invalid("alpha bounds must satisfy 0 < min <= max"));
    }
    let min_loss = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let e_lo = bounds.e_min.max(0.0);
    let e_hi = bounds.e_max.unwrap_or(min_loss).max(e_lo);

    let log_c: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let log_ref = log_c.iter().sum::<f64>() / log_c.len() as f64;
    let ladder = Ladder {
        log_c,
        loss: points.iter().map(|p| p.1).collect(),
        log_ref,
    };

    let alpha_at = |i: usize| bounds.alpha_min + (bounds.alpha_max - bounds.alpha_min) * i as f64 / (ALPHA_GRID - 1) as f64;
    let mut best = (f64::INFINITY, bounds.alpha_min, Cell { a_scaled: 0.0, e: e_lo, residual: f64::INFINITY });
    for i in 0..ALPHA_GRID {
        let alpha = alpha_at(i);
        let xs = ladder.xs(alpha);
        for j in 0..E_GRID {
            let e = e_lo + (e_hi - e_lo) * j as f64 / (E_GRID - 1) as f64;
            let cell = ladder.cell(&xs, e);
            if cell.residual < best.0 {
                best = (cell.residual, alpha, cell);
            }
        }
        // The E grid is coarse next to small loss amplitudes; the exact
        // profile at the same α keeps the bracket below honest.
        let cell = ladder.profile(alpha, e_lo, e_hi);
        if cell.residual < best.0 {
            best = (cell.residual, alpha, cell);
        }
    }

    // Golden-section search on the exact profile around the best grid α.
    let h = (bounds.alpha_max - bounds.alpha_min) / (ALPHA_GRID - 1) as f64;
    let (mut lo, mut hi) = ((best.1 - 2.0 * h).max(bounds.alpha_min), (best.1 + 2.0 * h).min(bounds.alpha_max));
    let f = |a: f64| ladder.profile(a, e_lo, e_hi).residual;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    for alpha in [x1, x2, best.1] {
        let cell = ladder.profile(alpha, e_lo, e_hi);
        if cell.residual < best.0 {
            best = (cell.residual, alpha, cell);
        }
    }

    let (_, alpha, cell) = best;
    let a = (cell.a_scaled * (alpha * log_ref).exp()).max(f64::MIN_POSITIVE);
    let mut warnings = Vec::new();
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0));
    if sorted.windows(2).any(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1) {
        let msg = "loss does not decrease monotonically with compute".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if cell.a_scaled == 0.0 {
        warnings.push("data are flat; A collapsed to its lower bound".into());
    }
    let residual = sorted
        .iter()
        .map(|&(c, l)| (a * c.powf(-alpha) + cell.e - l).powi(2))
        .sum();
    Ok(PowerLawFit {
        a,
        alpha,
        e: cell.e,
        residual,
        warnings,
    })
}

/// Fits a proxy metric after a caller-chosen monotonic transform.
pub fn fit_power_law_transformed(points: &[(f64, f64)], transform: Transform, bounds: &PowerLawBounds) -> Result<PowerLawFit> {
    let t: Vec<(f64, f64)> = points.iter().map(|&(c, y)| (c, transform.apply(y))).collect();
    fit_power_law(&t, bounds)
}

/// `Acc(L) = b + (1 − b) / (1 + exp(k·(L − L0)))`, decreasing in L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub b: f64,
    pub k: f64,
    pub l0: f64,
    pub residual: f64,
}

fn logistic(b: f64, k: f64, l0: f64, loss: f64) -> f64 {
    b + (1.0 - b) / (1.0 + (k * (loss - l0)).exp())
}

impl LogisticFit {
    pub fn accuracy(&self, loss: f64) -> f64 {
        logistic(self.b, self.k, self.l0, loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub loss: f64,
    pub accuracy: f64,
    pub weight: f64,
}

pub const DEFAULT_CALIBRATION_WEIGHT: f64 = 10.0;

/// Weighted least squares over (k > 0, L0) with the floor `b` fixed.
pub fn fit_logistic(pairs: &[(f64, f64)], b: f64, calibration: Option<Calibration>) -> Result<LogisticFit> {
    if !(0.0..1.0).contains(&b) {
        return Err(Error::invalid(format!("floor b must be in [0, 1), got {b}")));
    }
    if pairs.len() < 2 {
        return Err(Error::Fit(format!("underdetermined: need at least 2 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::invalid("non-finite loss or accuracy"));
    }
    if pairs.iter().all(|&(_, acc)| acc <= b) {
        return Err(Error::Fit(format!("every accuracy is at or below the floor b = {b}")));
    }
    let mut data: Vec<(f64, f64, f64)> = pairs.iter().map(|&(l, a)| (l, a, 1.0)).collect();
    if let Some(c) = calibration {
        if !(c.weight > 0.0) {
            return Err(Error::invalid("calibration weight must be positive"));
        }
        data.push((c.loss, c.accuracy, c.weight));
    }
    let sse = |log_k: f64, l0: f64| -> f64 {
        let k = log_k.exp();
        data.iter().map(|&(l, a, w)| w * (logistic(b, k, l0, l) - a).powi(2)).sum()
    };

    let lmin = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let lmax = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let span = (lmax - lmin).max(1e-6);
    let mut starts: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..41 {
        let l0 = lmin + span * i as f64 / 40.0;
        for j in 0..25 {
            let log_k = (0.1f64).ln() + ((50.0f64).ln() - (0.1f64).ln()) * j as f64 / 24.0;
            starts.push((sse(log_k, l0), log_k, l0));
        }
    }
    starts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)).then(p.2.total_cmp(&q.2)));

    let dirs: [(f64, f64); 8] = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &(f0, lk0, l00) in starts.iter().take(5) {
        let (mut f, mut lk, mut l0) = (f0, lk0, l00);
        let (mut sk, mut sl) = (0.1, span / 40.0);
        let mut iters = 0;
        while (sk > 1e-12 || sl > 1e-12 * span) && iters < 100_000 {
            iters += 1;
            let mut moved = false;
            for (dk, dl) in dirs {
                let (nk, nl) = (lk + dk * sk, l0 + dl * sl);
                let nf = sse(nk, nl);
                if nf < f {
                    (f, lk, l0) = (nf, nk, nl);
                    moved = true;
                    break;
                }
            }
            if !moved {
                sk *= 0.5;
                sl *= 0.5;
            }
        }
        if f < best.0 {
            best = (f, lk, l0);
        }
    }
    Ok(LogisticFit {
        b,
        k: best.1.exp(),
        l0: best.2,
        residual: best.0,
    })
}

pub fn predict_accuracy(power: &PowerLawFit, logistic: &LogisticFit, compute_target: f64) -> Result<f64> {
    if !(compute_target > 0.0) {
        return Err(Error::invalid("target compute must be positive"));
    }
    Ok(logistic.accuracy(power.loss(compute_target)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    /// Correctly ordered pairs over pairs with distinct actual values;
    /// NaN when every actual value ties.
    pub pairwise_decision_accuracy: f64,
    pub spearman: f64,
    pub kendall: f64,
    /// Mean absolute error in accuracy units.
    pub mape: f64,
    /// Mean of |pred − actual| / |actual|.
    pub mape_relative: f64,
}

/// 1-based average ranks (ties share the mean of their positions).
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let n0 = (n * (n - 1) / 2) as u64;
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let n1 = tie_pairs(&xs);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in idx.windows(2) {
        if x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    let n3 = joint + run * (run - 1) / 2;
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count(&mut ys, &mut Vec::with_capacity(n));
    let n2 = tie_pairs(&ys);
    let concordant_minus_discordant = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    concordant_minus_discordant / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt()
}

pub fn rank_metrics(predicted: &[f64], actual: &[f64]) -> Result<RankingReport> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "predicted ({}) and actual ({}) differ in length",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.len() < 2 {
        return Err(Error::invalid("ranking needs at least two items"));
    }
    let n = predicted.len();
    let (mut correct, mut total) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let da = actual[i] - actual[j];
            if da == 0.0 {
                continue;
            }
            total += 1;
            let dp = predicted[i] - predicted[j];
            if dp != 0.0 && (dp > 0.0) == (da > 0.0) {
                correct += 1;
            }
        }
    }
    let pairwise = if total == 0 { f64::NAN } else { correct as f64 / total as f64 };
    let spearman = pearson(&average_ranks(predicted), &average_ranks(actual));
    let kendall = kendall_tau_b(predicted, actual);
    let mape = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / n as f64;
    let mape_relative = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs() / a.abs()).sum::<f64>() / n as f64;
    Ok(RankingReport {
        pairwise_decision_accuracy: pairwise,
        spearman,
        kendall,
        mape,
        mape_relative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub dataset: String,
    pub params: f64,
    pub tokens: f64,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

impl LadderPoint {
    pub fn compute(&self) -> f64 {
        6.0 * self.params * self.tokens
    }
}

pub const LADDER_HEADER: [&str; 5] = ["dataset", "params", "tokens", "loss", "accuracy"];

pub fn read_ladder(reader: impl Read) -> Result<Vec<LadderPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Data(format!("ladder CSV: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != LADDER_HEADER {
        return Err(Error::Data(format!(
            "ladder CSV header must be `{}`, got `{}`",
            LADDER_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<LadderPoint>().enumerate() {
        let p = rec.map_err(|e| Error::Data(format!("ladder CSV row {}: {e}", i + 2)))?;
        compute_flops(p.params, p.tokens).map_err(|e| Error::Data(format!("ladder CSV row {}: {e}", i + 2)))?;
        if !(p.loss > 0.0) {
            return Err(Error::Data(format!("ladder CSV row {}: loss must be positive", i + 2)));
        }
        if let Some(a) = p.accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Data(format!("ladder CSV row {}: accuracy must be a fraction in [0, 1]", i + 2)));
            }
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_ladder(path: &Path) -> Result<Vec<LadderPoint>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    read_ladder(file)
}

pub fn write_ladder(points: &[LadderPoint]) -> String {
    let mut s = LADDER_HEADER.join(",");
    s.push('\n');
    for p in points {
        let acc = p.accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", p.dataset, p.params, p.tokens, p.loss, acc);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOptions {
    pub targets: Vec<f64>,
    pub floor: f64,
    /// Parameter count of the ladder model whose (loss, accuracy) pair is
    /// up-weighted in the calibrated fit.
    pub calibrate: Option<f64>,
    pub calibration_weight: f64,
    pub tokens_per_param: f64,
    pub transform: Transform,
    pub bounds: PowerLawBounds,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            targets: vec![1.5e9, 1.75e9],
            floor: 0.25,
            calibrate: None,
            calibration_weight: DEFAULT_CALIBRATION_WEIGHT,
            tokens_per_param: 20.0,
            transform: Transform::Identity,
            bounds: PowerLawBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPrediction {
    pub dataset: String,
    pub target_params: f64,
    pub target_compute: f64,
    pub power_law: PowerLawFit,
    pub logistic: LogisticFit,
    pub calibrated_logistic: Option<LogisticFit>,
    pub predicted_loss: f64,
    pub uncalibrated: f64,
    pub calibrated: Option<f64>,
    /// Accuracy of a ladder row at the target size, when present.
    pub actual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRanking {
    pub target_params: f64,
    pub uncalibrated: RankingReport,
    pub calibrated: Option<RankingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub floor: f64,
    pub calibrate: Option<f64>,
    pub predictions: Vec<DatasetPrediction>,
    pub rankings: Vec<TargetRanking>,
}

fn datasets(points: &[LadderPoint]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for p in points {
        if !names.contains(&p.dataset) {
            names.push(p.dataset.clone());
        }
    }
    names
}

fn same_size(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs())
}

/// Fits one dataset's ladder below `target` and predicts accuracy there.
pub fn predict_dataset(points: &[LadderPoint], dataset: &str, target: f64, opts: &PredictOptions) -> Result<DatasetPrediction> {
    let ladder: Vec<&LadderPoint> = points.iter().filter(|p| p.dataset == dataset).collect();
    let below: Vec<&LadderPoint> = ladder.iter().copied().filter(|p| p.params < target && !same_size(p.params, target)).collect();
    let ctx = |e: Error| Error::Fit(format!("{dataset} @ {}: {e}", format_params(target)));
    let curve: Vec<(f64, f64)> = below.iter().map(|p| (p.compute(), p.loss)).collect();
    let power = fit_power_law_transformed(&curve, opts.transform, &opts.bounds).map_err(ctx)?;
    let pairs: Vec<(f64, f64)> = below
        .iter()
        .filter_map(|p| p.accuracy.map(|a| (opts.transform.apply(p.loss), a)))
        .collect();
    let logistic = fit_logistic(&pairs, opts.floor, None).map_err(ctx)?;
    let calibrated_logistic = match opts.calibrate {
        None => None,
        Some(n_ref) => {
            let r = below
                .iter()
                .find(|p| same_size(p.params, n_ref) && p.accuracy.is_some())
                .ok_or_else(|| {
                    Error::Fit(format!(
                        "{dataset}: no ladder row with params = {} and an accuracy to calibrate on",
                        format_params(n_ref)
                    ))
                })?;
            let cal = Calibration {
                loss: opts.transform.apply(r.loss),
                accuracy: r.accuracy.unwrap(),
                weight: opts.calibration_weight,
            };
            Some(fit_logistic(&pairs, opts.floor, Some(cal)).map_err(ctx)?)
        }
    };
    let target_compute = compute_flops(target, opts.tokens_per_param * target)?;
    let predicted_loss = power.loss(target_compute);
    let actual = ladder
        .iter()
        .find(|p| same_size(p.params, target))
        .and_then(|p| p.accuracy);
    Ok(DatasetPrediction {
        dataset: dataset.to_string(),
        target_params: target,
        target_compute,
        uncalibrated: logistic.accuracy(predicted_loss),
        calibrated: calibrated_logistic.map(|l| l.accuracy(predicted_loss)),
        power_law: power,
        logistic,
        calibrated_logistic,
        predicted_loss,
        actual,
    })
}

pub fn scaling_report(points: &[LadderPoint], opts: &PredictOptions) -> Result<ScalingReport> {
    if opts.targets.is_empty() {
        return Err(Error::invalid("no target sizes requested"));
    }
    let names = datasets(points);
    if names.is_empty() {
        return Err(Error::Data("ladder is empty".into()));
    }
    let mut predictions = Vec::new();
    let mut rankings = Vec::new();
    for &t in &opts.targets {
        let preds: Vec<DatasetPrediction> = names.iter().map(|d| predict_dataset(points, d, t, opts)).collect::<Result<_>>()?;
        let with_actual: Vec<&DatasetPrediction> = preds.iter().filter(|p| p.actual.is_some()).collect();
        if with_actual.len() >= 2 {
            let actual: Vec<f64> = with_actual.iter().map(|p| p.actual.unwrap()).collect();
            let unc: Vec<f64> = with_actual.iter().map(|p| p.uncalibrated).collect();
            let cal = if opts.calibrate.is_some() {
                let c: Vec<f64> = with_actual.iter().map(|p| p.calibrated.unwrap()).collect();
                Some(rank_metrics(&c, &actual)?)
            } else {
                None
            };
            rankings.push(TargetRanking {
                target_params: t,
                uncalibrated: rank_metrics(&unc, &actual)?,
                calibrated: cal,
            });
        }
        predictions.extend(preds);
    }
    Ok(ScalingReport {
        floor: opts.floor,
        calibrate: opts.calibrate,
        predictions,
        rankings,
    })
}

/// `1.5e9` → `1.50B`, `7.5e7` → `75.00M`.
pub fn format_params(n: f64) -> String {
    if n >= 1e9 {
        format!("{:.2}B", n / 1e9)
    } else if n >= 1e6 {
        format!("{:.2}M", n / 1e6)
    } else {
        format!("{n}")
    }
}

fn pct(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl ScalingReport {
    fn targets(&self) -> Vec<f64> {
        let mut t: Vec<f64> = Vec::new();
        for p in &self.predictions {
            if !t.contains(&p.target_params) {
                t.push(p.target_params);
            }
        }
        t
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self.predictions.iter().map(|p| p.dataset.len()).chain([7]).max().unwrap();
        for t in self.targets() {
            let _ = writeln!(out, "Predicted Accuracy at {} Parameters", format_params(t));
            let _ = writeln!(out, "{:<width$}  {:>16}  {:>14}", "Dataset", "Uncalibrated (%)", "Calibrated (%)");
            for p in self.predictions.iter().filter(|p| p.target_params == t) {
                let _ = writeln!(out, "{:<width$}  {:>16}  {:>14}", p.dataset, pct(Some(p.uncalibrated)), pct(p.calibrated));
            }
            if let Some(r) = self.rankings.iter().find(|r| r.target_params == t) {
                let u = &r.uncalibrated;
                let _ = writeln!(
                    out,
                    "ranking vs actual (uncalibrated): pairwise {:.3}, spearman {:.3}, kendall {:.3}, MAPE {:.4}",
                    u.pairwise_decision_accuracy, u.spearman, u.kendall, u.mape
                );
                if let Some(c) = &r.calibrated {
                    let _ = writeln!(
                        out,
                        "ranking vs actual (calibrated):   pairwise {:.3}, spearman {:.3}, kendall {:.3}, MAPE {:.4}",
                        c.pairwise_decision_accuracy, c.spearman, c.kendall, c.mape
                    );
                }
            }
            out.push('\n');
        }
        out.push_str("Fitted parameters (loss units as supplied)\n");
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>12}  {:>8}  {:>8}  {:>8}  {:>8}",
            "Dataset", "target", "A", "alpha", "E", "k", "L0"
        );
        for p in &self.predictions {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>12.5e}  {:>8.4}  {:>8.4}  {:>8.3}  {:>8.4}",
                p.dataset,
                format_params(p.target_params),
                p.power_law.a,
                p.power_law.alpha,
                p.power_law.e,
                p.logistic.k,
                p.logistic.l0
            );
        }
        for p in &self.predictions {
            for w in &p.power_law.warnings {
                let _ = writeln!(out, "warning: {} @ {}: {w}", p.dataset, format_params(p.target_params));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "target_params,dataset,predicted_loss,uncalibrated,calibrated,actual,A,alpha,E,power_residual,k,L0,k_calibrated,L0_calibrated,floor\n",
        );
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for p in &self.predictions {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.target_params,
                p.dataset,
                p.predicted_loss,
                p.uncalibrated,
                opt(p.calibrated),
                opt(p.actual),
                p.power_law.a,
                p.power_law.alpha,
                p.power_law.e,
                p.power_law.residual,
                p.logistic.k,
                p.logistic.l0,
                opt(p.calibrated_logistic.map(|l| l.k)),
                opt(p.calibrated_logistic.map(|l| l.l0)),
                self.floor
            );
        }
        s
    }
}

/// Plot-ready predicted curves from 1B to 7B parameters (25 log-spaced
/// sizes), using each dataset's fit for the largest requested target.
pub fn curve_csv(report: &ScalingReport, tokens_per_param: f64) -> String {
    let mut s = String::from("dataset,params,compute,loss,uncalibrated,calibrated\n");
    let Some(&last) = report.targets().last() else { return s };
    for p in report.predictions.iter().filter(|p| p.target_params == last) {
        for i in 0..25 {
            let n = 1e9 * 7f64.powf(i as f64 / 24.0);
            let c = 6.0 * n * tokens_per_param * n;
            let loss = p.power_law.loss(c);
            let cal = p.calibrated_logistic.map(|l| l.accuracy(loss).to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{},{}", p.dataset, n, c, loss, p.logistic.accuracy(loss), cal);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(a: f64, alpha: f64, e: f64) -> Vec<(f64, f64)> {
        (15..=19).map(|p| {
            let c = 10f64.powi(p);
            (c, a * c.powf(-alpha) + e)
        }).collect()
    }

    #[test]
    fn flops_examples() {
        assert_eq!(compute_flops(1e9, 2e10).unwrap(), 1.2e20);
        assert_eq!(compute_flops(2e7, 4e8).unwrap(), 4.8e16);
        assert_eq!(compute_flops(2e7, 5.0).unwrap(), 2.0 * compute_flops(1e7, 5.0).unwrap());
        assert!(compute_flops(0.0, 1.0).is_err());
    }

    #[test]
    fn noiseless_power_law_recovery() {
        let fit = fit_power_law(&synthetic(2.5, 0.10, 1.8), &PowerLawBounds::default()).unwrap();
        assert!((fit.alpha - 0.10).abs() <= 0.005, "{fit:?}");
        assert!((fit.e - 1.8).abs() <= 0.02, "{fit:?}");
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn power_law_errors_and_warnings() {
        assert!(fit_power_law(&[(1e15, 3.0), (1e16, 2.9)], &PowerLawBounds::default()).is_err());
        assert!(fit_power_law(&[(1e15, 3.0), (1e15, 2.9), (1e16, 2.8)], &PowerLawBounds::default()).is_err());
        let fit = fit_power_law(&[(1e15, 3.0), (1e16, 3.1), (1e17, 2.9)], &PowerLawBounds::default()).unwrap();
        assert!(!fit.warnings.is_empty());
    }

    #[test]
    fn logistic_recovery_and_asymptotes() {
        let pairs: Vec<(f64, f64)> = (0..21).map(|i| {
            let l = 2.0 + 0.1 * i as f64;
            (l, logistic(0.25, 8.0, 3.0, l))
        }).collect();
        let fit = fit_logistic(&pairs, 0.25, None).unwrap();
        assert!((fit.k - 8.0).abs() <= 0.1, "{fit:?}");
        assert!((fit.l0 - 3.0).abs() <= 0.01, "{fit:?}");
        assert!((fit.accuracy(fit.l0) - 0.625).abs() < 1e-9);
        assert!((fit.accuracy(fit.l0 + 100.0 / fit.k) - 0.25).abs() < 1e-6);
        assert!(fit_logistic(&[(2.0, 0.2), (3.0, 0.25)], 0.25, None).is_err());
        assert!(fit_logistic(&[(2.0, 0.5)], 0.25, None).is_err());
    }

    #[test]
    fn calibration_pulls_the_curve() {
        let pairs = vec![(2.0, 0.8), (2.5, 0.6), (3.0, 0.45), (3.5, 0.3)];
        let plain = fit_logistic(&pairs, 0.25, None).unwrap();
        let cal = Calibration { loss: 2.2, accuracy: 0.5, weight: 10.0 };
        let pulled = fit_logistic(&pairs, 0.25, Some(cal)).unwrap();
        assert!((pulled.accuracy(2.2) - 0.5).abs() < (plain.accuracy(2.2) - 0.5).abs());
    }

    #[test]
    fn ranking_examples() {
        let r = rank_metrics(&[0.50, 0.52, 0.49], &[0.51, 0.55, 0.48]).unwrap();
        assert_eq!(r.pairwise_decision_accuracy, 1.0);
        assert!((r.mape - 0.05 / 3.0).abs() < 1e-12);
        assert!((r.spearman - 1.0).abs() < 1e-12 && (r.kendall - 1.0).abs() < 1e-12);
        let rev = rank_metrics(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(rev.pairwise_decision_accuracy, 0.0);
        assert!((rev.spearman + 1.0).abs() < 1e-12);
        assert!(rank_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn ladder_csv_round_trip() {
        let pts = vec![
            LadderPoint { dataset: "a".into(), params: 2e7, tokens: 4e8, loss: 3.5, accuracy: Some(0.3) },
            LadderPoint { dataset: "a".into(), params: 6e7, tokens: 1.2e9, loss: 3.2, accuracy: None },
        ];
        let text = write_ladder(&pts);
        assert_eq!(read_ladder(text.as_bytes()).unwrap(), pts);
        assert!(read_ladder("dataset,params,loss\n".as_bytes()).is_err());
        assert!(read_ladder("dataset,params,tokens,loss,accuracy\na,-1,1,1,\n".as_bytes()).is_err());
    }

    #[test]
    fn params_formatting() {
        assert_eq!(format_params(1.5e9), "1.50B");
        assert_eq!(format_params(1.75e9), "1.75B");
        assert_eq!(format_params(7.5e7), "75.00M");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bounds_hold_on_any_data(losses in prop::collection::vec(0.1f64..10.0, 3..8)) {
            let pts: Vec<(f64, f64)> = losses.iter().enumerate().map(|(i, &l)| (10f64.powi(14 + i as i32), l)).collect();
            let fit = fit_power_law(&pts, &PowerLawBounds::default()).unwrap();
            prop_assert!((0.05..=0.60).contains(&fit.alpha));
            prop_assert!(fit.e >= 0.0 && fit.a > 0.0);
            for p in 10..25 {
                let c = 10f64.powi(p);
                prop_assert!(fit.loss(c * 1.5) < fit.loss(c) || fit.a * c.powf(-fit.alpha) < 1e-12);
            }
        }

        #[test]
        fn logistic_stays_inside_its_band(k in 0.1f64..50.0, l0 in 1.0f64..5.0, b in 0.0f64..0.9, l in 0.0f64..6.0) {
            let f = LogisticFit { b, k, l0, residual: 0.0 };
            let acc = f.accuracy(l);
            prop_assert!(acc >= b && acc <= 1.0);
            if (k * (l - l0)).abs() < 30.0 {
                prop_assert!(acc > b && acc < 1.0);
            }
        }

        #[test]
        fn refitting_a_fitted_curve_is_stable(alpha in 0.06f64..0.5, e in 0.5f64..3.0, a_log in 0.0f64..3.0) {
            let a = 10f64.powf(a_log) * 10f64.powf(17.0 * alpha) * 0.05;
            let fit = fit_power_law(&synthetic(a, alpha, e), &PowerLawBounds::default()).unwrap();
            let again = fit_power_law(&synthetic(fit.a, fit.alpha, fit.e), &PowerLawBounds::default()).unwrap();
            prop_assert!((again.alpha - fit.alpha).abs() < 1e-3, "{:?} {:?}", fit, again);
            prop_assert!((again.e - fit.e).abs() < 1e-2);
        }
    }
}
