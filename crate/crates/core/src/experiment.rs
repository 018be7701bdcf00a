//! Synthetic sum-regression experiment: DeepSets models trained on
//! `y = Σ x_i` with `N` Gaussian inputs split into `n` tokens of size `N/n`,
//! measuring the train/test gap as a function of `n`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{log_spaced, sn_invariant_bound, theory_curves, write_curves_csv, CurveRow};
use crate::error::{Error, Result};
use crate::logspace::GroupOrder;
use crate::nets::{mse, train, AdamConfig, Architecture, DeepSetsModel, Matrix, Pool, Sample, TrainConfig};

pub const GAPS_HEADER: [&str; 6] = ["n", "seed", "train_mse", "test_mse", "gap", "log10_gap"];
pub const SUMMARY_HEADER: [&str; 4] = ["n", "mean_log10_gap", "std_log10_gap", "theory_log10"];
pub const THREADS_ENV: &str = "QFSLAB_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_total: usize,
    pub n_list: Vec<usize>,
    pub m_train: usize,
    pub m_test: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seeds: Vec<u64>,
    pub equivariant_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub pool: Pool,
    /// Constant `C` and confidence `ε` for the overlaid bound curves.
    pub bound_c: f64,
    pub bound_epsilon: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_total: 48,
            n_list: vec![2, 4, 6, 8],
            m_train: 60,
            m_test: 10_000,
            epochs: 500,
            batch: 4,
            lr: 1e-3,
            seeds: vec![1, 2, 3, 4, 5],
            equivariant_widths: vec![128, 64, 32],
            head_widths: vec![32],
            pool: Pool::Sum,
            bound_c: 1.0,
            bound_epsilon: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_list.is_empty() || self.seeds.is_empty() {
            return bad("n_list and seeds must be nonempty".into());
        }
        for &n in &self.n_list {
            if n == 0 || !self.n_total.is_multiple_of(n) {
                return bad(format!("N = {} is not divisible by n = {n}", self.n_total));
            }
        }
        if self.m_train == 0 || self.m_test == 0 {
            return bad("sample counts must be positive".into());
        }
        if self.batch == 0 || self.batch > self.m_train {
            return bad(format!("batch {} must lie in 1..={}", self.batch, self.m_train));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if self.equivariant_widths.is_empty() {
            return bad("need at least one equivariant layer".into());
        }
        Ok(())
    }

    pub fn architecture(&self, n: usize) -> Architecture {
        Architecture {
            token_dim: self.n_total / n,
            equivariant_widths: self.equivariant_widths.clone(),
            head_widths: self.head_widths.clone(),
            pool: self.pool,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_reader(File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Independent generator for one purpose within a seed.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const TRAIN_STREAM: u64 = 0;
const TEST_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;
const CHECK_STREAM: u64 = 4;

fn gaussian_samples(n: usize, d: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    (0..m)
        .map(|_| {
            let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
            let y = data.iter().sum();
            Sample {
                x: Matrix { rows: n, cols: d, data },
                y,
            }
        })
        .collect()
}

/// `m` samples of `n` tokens of dimension `d`, entries standard normal
/// (ziggurat sampler on ChaCha8), target the sum of all entries in row-major
/// order.
pub fn generate_dataset(n: usize, d: usize, m: usize, seed: u64) -> Result<Vec<Sample>> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("token shape {n}×{d} is empty")));
    }
    Ok(gaussian_samples(n, d, m, &mut stream_rng(seed, TRAIN_STREAM)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub n: usize,
    pub seed: u64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub gap: f64,
    pub log10_gap: f64,
}

impl GapRecord {
    pub fn new(n: usize, seed: u64, train_mse: f64, test_mse: f64) -> Self {
        let gap = (test_mse - train_mse).abs();
        GapRecord {
            n,
            seed,
            train_mse,
            test_mse,
            gap,
            log10_gap: gap.log10(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub mean_log10_gap: f64,
    /// Population standard deviation over seeds.
    pub std_log10_gap: f64,
    /// `log10(1/√(n!·m^{2/n}))`.
    pub theory_log10: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub record: GapRecord,
    pub loss_history: Vec<f64>,
    /// Largest `|f(σ·X) − f(X)|` over the post-training invariance probes.
    pub invariance_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cells: Vec<CellOutcome>,
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<CurveRow>,
}

impl ExperimentResult {
    pub fn records(&self) -> Vec<GapRecord> {
        self.cells.iter().map(|c| c.record.clone()).collect()
    }

    pub fn max_invariance_error(&self) -> f64 {
        self.cells.iter().map(|c| c.invariance_error).fold(0.0, f64::max)
    }

    /// Arithmetic mean of `gap` per `n`, sorted by `n`.
    pub fn mean_gaps(&self) -> Vec<(usize, f64)> {
        self.summary
            .iter()
            .map(|s| {
                let v: Vec<f64> = self.cells.iter().filter(|c| c.record.n == s.n).map(|c| c.record.gap).collect();
                (s.n, v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect()
    }

    /// Spearman correlation of `n` against the per-`n` mean gap.
    pub fn spearman_n_vs_gap(&self) -> f64 {
        let (ns, gaps): (Vec<f64>, Vec<f64>) = self.mean_gaps().into_iter().map(|(n, g)| (n as f64, g)).unzip();
        spearman(&ns, &gaps)
    }

    /// Least-squares slope of mean log10 gap against log10 theory.
    pub fn theory_slope(&self) -> f64 {
        let t: Vec<f64> = self.summary.iter().map(|r| r.theory_log10).collect();
        let g: Vec<f64> = self.summary.iter().map(|r| r.mean_log10_gap).collect();
        ls_slope(&t, &g)
    }
}

pub const INVARIANCE_PROBES: usize = 100;

pub fn run_cell(config: &ExperimentConfig, n: usize, seed: u64) -> Result<CellOutcome> {
    let d = config.n_total / n;
    let train_set = generate_dataset(n, d, config.m_train, seed)?;
    let test_set = gaussian_samples(n, d, config.m_test, &mut stream_rng(seed, TEST_STREAM));
    let mut model = DeepSetsModel::init(&config.architecture(n), &mut stream_rng(seed, INIT_STREAM))?;
    let tc = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch,
        adam: AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        seed: stream_rng(seed, SHUFFLE_STREAM).next_u64(),
    };
    let report = train(&mut model, &train_set, &tc)?;
    let train_mse = mse(&model, &train_set)?;
    let test_mse = mse(&model, &test_set)?;
    if !(train_mse.is_finite() && test_mse.is_finite()) {
        return Err(Error::NonFinite);
    }
    let invariance_error = invariance_probe(&model, n, d, INVARIANCE_PROBES, seed)?;
    Ok(CellOutcome {
        record: GapRecord::new(n, seed, train_mse, test_mse),
        loss_history: report.epoch_mse,
        invariance_error,
    })
}

/// Largest output change under random token permutations of random inputs.
pub fn invariance_probe(model: &DeepSetsModel, n: usize, d: usize, probes: usize, seed: u64) -> Result<f64> {
    use rand::seq::SliceRandom;
    let mut rng = stream_rng(seed, CHECK_STREAM);
    let mut worst = 0.0f64;
    for s in gaussian_samples(n, d, probes, &mut rng.clone()) {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted = s.x.select_rows(&perm);
        worst = worst.max((model.forward(&s.x)? - model.forward(&permuted)?).abs());
    }
    Ok(worst)
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let k: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV}={v} is not a count")))?;
        builder = builder.num_threads(k.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut keys: Vec<(usize, u64)> = config
        .n_list
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&s| (n, s)))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let cells = worker_pool()?.install(|| {
        keys.par_iter()
            .map(|&(n, s)| run_cell(config, n, s))
            .collect::<Result<Vec<_>>>()
    })?;
    let records: Vec<GapRecord> = cells.iter().map(|c| c.record.clone()).collect();
    let summary = summarize(&records, config.m_train as f64)?;
    let curves = overlay_curves(config)?;
    Ok(ExperimentResult { cells, summary, curves })
}

pub fn theory_log10(n: usize, m: f64) -> Result<f64> {
    Ok(sn_invariant_bound(n, m, 0.05, 1.0)?.main_term_log10)
}

/// Per-`n` mean and population std of `log10_gap`, sorted by `n`.
pub fn summarize(records: &[GapRecord], m_train: f64) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records".into()));
    }
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let v: Vec<f64> = records.iter().filter(|r| r.n == n).map(|r| r.log10_gap).collect();
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
            Ok(SummaryRow {
                n,
                mean_log10_gap: mean,
                std_log10_gap: var.sqrt(),
                theory_log10: theory_log10(n, m_train)?,
            })
        })
        .collect()
}

/// Invariant bound curves for each configured `n` with `|G| = n!`.
pub fn overlay_curves(config: &ExperimentConfig) -> Result<Vec<CurveRow>> {
    curves_for(&config.n_list, config.bound_c, config.bound_epsilon)
}

/// Curves over `m ∈ [10, 10⁶]` (41 log-spaced points) with `|G| = n!`.
pub fn curves_for(n_list: &[usize], c: f64, epsilon: f64) -> Result<Vec<CurveRow>> {
    let orders: Vec<GroupOrder> = n_list.iter().map(|&n| GroupOrder::factorial(n as u64)).collect();
    theory_curves(n_list, &log_spaced(10.0, 1e6, 41), &orders, c, epsilon)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_gaps_csv<W: Write>(records: &[GapRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GAPS_HEADER)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.seed.to_string(),
            fmt_f64(r.train_mse),
            fmt_f64(r.test_mse),
            fmt_f64(r.gap),
            fmt_f64(r.log10_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gaps_csv<R: Read>(input: R) -> Result<Vec<GapRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    if rd.headers()?.iter().ne(GAPS_HEADER) {
        return Err(Error::ShapeMismatch("unexpected gaps.csv header".into()));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number {:?}", &row[i])))
        };
        let n = row[0]
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad n {:?}", &row[0])))?;
        let seed = row[1]
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad seed {:?}", &row[1])))?;
        out.push(GapRecord {
            n,
            seed,
            train_mse: f(2)?,
            test_mse: f(3)?,
            gap: f(4)?,
            log10_gap: f(5)?,
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            fmt_f64(r.mean_log10_gap),
            fmt_f64(r.std_log10_gap),
            fmt_f64(r.theory_log10),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `gaps.csv`, `summary.csv` and `curves.csv` into `dir`.
pub fn emit_plot_data(records: &[GapRecord], summary: &[SummaryRow], curves: &[CurveRow], dir: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to emit".into()));
    }
    std::fs::create_dir_all(dir)?;
    write_gaps_csv(records, create(dir, "gaps.csv")?)?;
    write_summary_csv(summary, create(dir, "summary.csv")?)?;
    write_curves_csv(curves, create(dir, "curves.csv")?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let d: Vec<usize> = c.n_list.iter().map(|&n| c.n_total / n).collect();
        assert_eq!(d, [24, 12, 8, 6]);
        let bad = ExperimentConfig {
            n_list: vec![5],
            ..c.clone()
        };
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig { batch: 61, ..c }.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.n_total, 48);
    }

    #[test]
    fn dataset_targets_are_sums() {
        let data = generate_dataset(4, 12, 10, 7).unwrap();
        assert_eq!(data.len(), 10);
        for s in &data {
            assert_eq!(s.y - s.x.data.iter().sum::<f64>(), 0.0);
            let rev = s.x.select_rows(&[3, 2, 1, 0]);
            assert!((rev.data.iter().sum::<f64>() - s.y).abs() < 1e-12);
        }
        assert_eq!(generate_dataset(4, 12, 1, 7).unwrap()[0], data[0]);
        assert!(generate_dataset(0, 12, 1, 7).is_err());
    }

    #[test]
    fn theory_overlay() {
        assert!((theory_log10(8, 60.0).unwrap() + 2.525).abs() < 1e-3);
    }

    #[test]
    fn summary_single_seed_has_zero_std() {
        let recs = vec![GapRecord::new(2, 1, 0.5, 0.75), GapRecord::new(4, 1, 0.5, 0.6)];
        let s = summarize(&recs, 60.0).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|r| r.std_log10_gap == 0.0));
        assert_eq!(s[0].mean_log10_gap, 0.25f64.log10());
    }

    #[test]
    fn rank_statistics() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[9.0, 4.0, 1.0, 0.5]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]) - 0.8660254037844386).abs() < 1e-12);
        assert!((ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaps_csv_round_trip() {
        let recs = vec![
            GapRecord::new(2, 1, 0.1, 0.30000000000000004),
            GapRecord::new(8, 5, 1e-7, 2.5e-3),
        ];
        let mut buf = Vec::new();
        write_gaps_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,seed,train_mse,test_mse,gap,log10_gap\n"));
        assert_eq!(read_gaps_csv(buf.as_slice()).unwrap(), recs);
    }
}
