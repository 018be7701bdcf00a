use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use qfslab::bounds::{
    equivariant_bound, invariant_bound, log_spaced, nontransitive_equivariant_bound, sn_equivariant_bound,
    theory_curves, write_curves_csv,
};
use qfslab::covering::{analytic_estimate, cube_count, mc_fundamental_volume, CubeDomain, DEFAULT_CELL_BUDGET};
use qfslab::experiment::{
    curves_for, emit_plot_data, read_gaps_csv, run_experiment, summarize, write_summary_csv, ExperimentConfig,
};
use qfslab::logspace::GroupOrder;
use qfslab::permgroup::{GroupSpec, PermGroup};
use qfslab::qfs::{canonical_rep, orbit, quotient_distance, Point};
use qfslab::relunet::sort_network;
use qfslab::{Error, Result};

const GROUP_CAP: usize = 40_320;

#[derive(Parser)]
#[command(name = "qfslab", version, about = "Quotient feature space geometry, bounds and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate generalization bounds (JSON), or bound curves over m (CSV).
    Bounds(BoundsArgs),
    /// Covering and fundamental-domain volume estimates (JSON).
    Covering(CoveringArgs),
    /// Quotient geometry of a single point (JSON).
    Qfs(QfsArgs),
    /// Build and check the exact ReLU sorting network.
    Sortnet(SortnetArgs),
    /// DeepSets generalization-gap experiment.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n: usize,
    /// `24`, `8!`, or `1e157.97` (log10 form); defaults to n!.
    #[arg(long)]
    group_order: Option<String>,
    #[arg(long, default_value_t = 1000.0)]
    m: f64,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Equivariant bound; with no --stab, uses G = S_n.
    #[arg(long)]
    equivariant: bool,
    /// Stabilizer order per orbit (repeat for non-transitive groups).
    #[arg(long, num_args = 1.., requires = "equivariant")]
    stab: Vec<String>,
    /// Emit invariant-bound curves over [M_MIN, M_MAX] as CSV.
    #[arg(long, num_args = 2, value_names = ["M_MIN", "M_MAX"])]
    curves: Option<Vec<f64>>,
    #[arg(long, default_value_t = 41)]
    points: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoveringMode {
    Lattice,
    Mc,
    Analytic,
}

#[derive(Args)]
struct CoveringArgs {
    #[arg(long, value_enum)]
    mode: CoveringMode,
    /// `sn`, `cn`, `trivial`, or `gens@FILE` (JSON with degree and 1-based generators).
    #[arg(long, default_value = "sn")]
    group: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    q: u32,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum QfsOp {
    Dist,
    Canon,
    Orbit,
}

#[derive(Args)]
struct QfsArgs {
    #[arg(value_enum)]
    op: QfsOp,
    #[arg(long, default_value = "sn")]
    group: String,
    /// Comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Second point for `dist`.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SortCheck {
    Exhaustive,
    Random,
}

#[derive(Args)]
struct SortnetArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum)]
    check: Option<SortCheck>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the network as JSON.
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Train every (n, seed) cell and write gaps.csv, summary.csv, curves.csv.
    Run {
        /// JSON config; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write bound curves (and a summary from an existing gaps.csv) into OUT.
    Plotdata {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 10, 15])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 60.0)]
        m_train: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
}

fn parse_order(s: &str) -> Result<GroupOrder> {
    let bad = || Error::InvalidParameter(format!("cannot parse group order {s:?}"));
    let s = s.trim();
    if let Some(k) = s.strip_suffix('!') {
        return Ok(GroupOrder::factorial(k.parse().map_err(|_| bad())?));
    }
    if let Some(e) = s.strip_prefix("1e") {
        return Ok(GroupOrder::from_log10(e.parse().map_err(|_| bad())?));
    }
    let v: u64 = s.parse().map_err(|_| bad())?;
    if v == 0 {
        return Err(bad());
    }
    Ok(GroupOrder::exact(v))
}

fn parse_group(s: &str, n: usize) -> Result<PermGroup> {
    match s {
        "sn" => PermGroup::symmetric(n),
        "cn" => PermGroup::cyclic(n),
        "trivial" => PermGroup::trivial(n),
        _ => {
            let path = s
                .strip_prefix("gens@")
                .ok_or_else(|| Error::InvalidParameter(format!("unknown group {s:?}")))?;
            let spec: GroupSpec = serde_json::from_reader(std::fs::File::open(path)?)?;
            if spec.degree != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: spec.degree,
                });
            }
            PermGroup::from_spec(&spec, GROUP_CAP)
        }
    }
}

fn parse_point(s: &str) -> Result<Point> {
    let coords = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad coordinate {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Point::new(coords)
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let order = match &a.group_order {
        Some(s) => parse_order(s)?,
        None => GroupOrder::factorial(a.n as u64),
    };
    if let Some(range) = &a.curves {
        let ms = log_spaced(range[0], range[1], a.points);
        let rows = theory_curves(&[a.n], &ms, &[order], a.c, a.eps)?;
        return write_curves_csv(&rows, io::stdout().lock());
    }
    let report = if a.equivariant {
        match a.stab.as_slice() {
            [] => sn_equivariant_bound(a.n, a.m, a.eps, a.c)?,
            [one] => equivariant_bound(a.n, parse_order(one)?, a.m, a.eps, a.c)?,
            many => {
                let orders = many.iter().map(|s| parse_order(s)).collect::<Result<Vec<_>>>()?;
                nontransitive_equivariant_bound(a.n, &orders, a.m, a.eps, a.c)?
            }
        }
    } else {
        invariant_bound(a.n, order, a.m, a.eps, a.c)?
    };
    print_json(&report)
}

fn covering(a: CoveringArgs) -> Result<()> {
    if let CoveringMode::Analytic = a.mode {
        // named groups have closed-form orders; avoid enumerating them
        let order = match a.group.as_str() {
            "sn" => GroupOrder::factorial(a.n as u64),
            "cn" => GroupOrder::exact(a.n as u64),
            "trivial" => GroupOrder::exact(1),
            other => GroupOrder::exact(parse_group(other, a.n)?.order() as u64),
        };
        return print_json(&json!({
            "group_order_log10": order.log10(),
            "n": a.n,
            "estimate": analytic_estimate(a.n, order, a.eps, a.c)?,
        }));
    }
    let g = parse_group(&a.group, a.n)?;
    let est = match a.mode {
        CoveringMode::Lattice => {
            let domain = if g.is_symmetric() {
                CubeDomain::Sorted
            } else {
                CubeDomain::tilde_for(&g)?
            };
            cube_count(&domain, a.n, a.q, DEFAULT_CELL_BUDGET)?
        }
        CoveringMode::Mc => mc_fundamental_volume(&g, a.samples, a.seed)?,
        CoveringMode::Analytic => unreachable!("handled above"),
    };
    print_json(&json!({
        "group_order": g.order(),
        "n": a.n,
        "estimate": est,
    }))
}

fn qfs(a: QfsArgs) -> Result<()> {
    let x = parse_point(&a.x)?;
    let g = parse_group(&a.group, x.dim())?;
    match a.op {
        QfsOp::Dist => {
            let y = parse_point(
                a.y.as_deref()
                    .ok_or_else(|| Error::InvalidParameter("dist needs --y".into()))?,
            )?;
            print_json(&json!({ "distance": quotient_distance(&g, &x, &y)? }))
        }
        QfsOp::Canon => print_json(&canonical_rep(&g, &x)?),
        QfsOp::Orbit => {
            let o = orbit(&g, &x)?;
            print_json(&json!({ "size": o.len(), "orbit": o }))
        }
    }
}

fn next_permutation(v: &mut [f64]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("successor exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn sorted_desc(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn sortnet(a: SortnetArgs) -> Result<()> {
    let net = sort_network(a.n)?;
    let mut checked = 0usize;
    let mut failures = 0usize;
    let mut check = |x: &[f64]| -> Result<()> {
        checked += 1;
        if net.evaluate(x)? != sorted_desc(x) {
            failures += 1;
        }
        Ok(())
    };
    match a.check {
        Some(SortCheck::Exhaustive) => {
            let mut v: Vec<f64> = (1..=a.n).map(|i| i as f64).collect();
            loop {
                check(&v)?;
                if !next_permutation(&mut v) {
                    break;
                }
            }
        }
        Some(SortCheck::Random) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            for _ in 0..a.samples {
                let levels = rng.gen_range(1..=a.n as u32);
                let x: Vec<f64> = (0..a.n).map(|_| rng.gen_range(0..levels) as f64 / 8.0).collect();
                check(&x)?;
            }
        }
        None => {}
    }
    if let Some(path) = &a.emit {
        serde_json::to_writer(io::BufWriter::new(std::fs::File::create(path)?), &net)?;
    }
    print_json(&json!({
        "n": a.n,
        "depth": net.depth(),
        "max_width": net.widths().into_iter().max(),
        "nonzero_params": net.nonzero_params(),
        "checked": checked,
        "failures": failures,
    }))?;
    if failures > 0 {
        return Err(Error::InvalidParameter(format!("{failures} sort mismatches")));
    }
    Ok(())
}

fn experiment(cmd: ExperimentCmd) -> Result<()> {
    match cmd {
        ExperimentCmd::Run { config, out } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::from_json_file(&p)?,
                None => ExperimentConfig::default(),
            };
            let res = run_experiment(&cfg)?;
            emit_plot_data(&res.records(), &res.summary, &res.curves, &out)?;
            print_json(&json!({
                "summary": res.summary,
                "spearman_n_vs_mean_gap": res.spearman_n_vs_gap(),
                "theory_slope": res.theory_slope(),
                "max_invariance_error": res.max_invariance_error(),
            }))
        }
        ExperimentCmd::Plotdata { out, n, m_train, c, eps } => {
            std::fs::create_dir_all(&out)?;
            let curves = curves_for(&n, c, eps)?;
            write_curves_csv(&curves, io::BufWriter::new(std::fs::File::create(out.join("curves.csv"))?))?;
            let gaps = out.join("gaps.csv");
            if Path::new(&gaps).exists() {
                let records = read_gaps_csv(std::fs::File::open(&gaps)?)?;
                let summary = summarize(&records, m_train)?;
                write_summary_csv(&summary, io::BufWriter::new(std::fs::File::create(out.join("summary.csv"))?))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Bounds(a) => bounds(a),
        Cmd::Covering(a) => covering(a),
        Cmd::Qfs(a) => qfs(a),
        Cmd::Sortnet(a) => sortnet(a),
        Cmd::Experiment(c) => experiment(c),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
