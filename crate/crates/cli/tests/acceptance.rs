//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero when any criterion fails.
//!
//! The real-data criterion runs only when `REGOMAX_COMTRADE_2016` names a
//! trade CSV for 2016 with ISO alpha-2 countries and two-digit SITC Rev.1
//! products.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use regomax_core::regomax::ORACLE_CAP;
use regomax_core::rank::restrict_to_product;
use regomax_core::sensitivity::{SensitivityOptions, ShockBaseline};
use regomax_core::{
    build_wtn_pair, hat_ranks, load_money_tensor, order_indices, pagerank, reduce, reduce_dense_oracle,
    reduced_balance_sensitivity, synth_tensor, volumes, GoogleMatrix, LinearOperator, MoneyTensor,
    ReduceOptions, ReducedSet, Registry, Selection, ShockSpec, SolverOptions,
};

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Outcome {
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail,
        }
    }
}

fn solver() -> SolverOptions {
    SolverOptions::default()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn max_column_error(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max)
}

/// `n_r` nodes spread over `0..n`.
fn spread(n: usize, n_r: usize, offset: usize) -> Vec<usize> {
    (0..n_r).map(|k| (offset + k * n / n_r) % n).collect()
}

fn weight_error(set: &ReducedSet) -> f64 {
    let w = &set.weights;
    (w.r - 1.0).abs().max((w.rr + w.pr + w.qr - 1.0).abs())
}

fn stochasticity() -> Outcome {
    let mut worst_full = 0.0f64;
    let mut worst_reduced = 0.0f64;
    let mut largest = 0;
    for k in 0..20u64 {
        let (nc, np) = (5 + 5 * k as usize, 1 + k as usize);
        let t = synth_tensor(1000 + k, nc, np, (30.0 / nc as f64).min(0.6)).unwrap();
        let pair = build_wtn_pair(&t, 0.5, solver()).unwrap();
        let n = pair.direct.dim();
        largest = largest.max(n);
        for g in [&pair.direct, &pair.inverted] {
            let s = g.stochastic();
            for j in 0..n {
                let s_sum: f64 = s.column_dense(j).iter().sum();
                let g_sum: f64 = g.materialize_column(j).iter().sum();
                worst_full = worst_full.max((s_sum - 1.0).abs()).max((g_sum - 1.0).abs());
            }
        }
        let group: Vec<usize> = (0..(nc - 1).min(4)).collect();
        let spec = ShockSpec::new(t.registry(), nc - 1, 0, group, 1e-3).unwrap();
        let base = ShockBaseline::new(&t, 0.5, &spec, SensitivityOptions::default()).unwrap();
        let shocked = base.shocked(1e-3);
        for m in [&base.direct.g_r, &base.inverted.g_r, &shocked.direct, &shocked.inverted] {
            worst_reduced = worst_reduced.max(max_column_error(m));
        }
    }
    Outcome::check(
        worst_full < 1e-12 && worst_reduced < 1e-10,
        format!("20 tensors up to N={largest}: S/S*/G {worst_full:.1e}, reduced and shocked {worst_reduced:.1e}"),
    )
}

fn pagerank_oracle() -> Outcome {
    let shapes = [(5, 10), (10, 5), (7, 7), (25, 2), (50, 1), (4, 12), (6, 8), (3, 16), (8, 6), (12, 4)];
    let mut worst = 0.0f64;
    for (k, &(nc, np)) in shapes.iter().enumerate() {
        let t = synth_tensor(200 + k as u64, nc, np, 0.3).unwrap();
        let pair = build_wtn_pair(&t, 0.5, solver()).unwrap();
        for g in [&pair.direct, &pair.inverted] {
            let p = pagerank(g, solver()).unwrap();
            let oracle = common::stationary(&g.to_dense(ORACLE_CAP).unwrap());
            worst = worst.max(common::l1(p.probabilities(), &oracle));
        }
    }
    Outcome::check(worst < 1e-8, format!("10 instances N<=50, worst L1 {worst:.1e}"))
}

/// Ten instances with `N <= 300` and selections of at most 20 nodes.
fn oracle_instances() -> Vec<(GoogleMatrix, Selection)> {
    let shapes = [(30, 10), (20, 15), (60, 5), (100, 3), (15, 20), (50, 6), (25, 12), (300, 1), (10, 30), (75, 4)];
    shapes
        .iter()
        .enumerate()
        .flat_map(|(k, &(nc, np))| {
            let t = synth_tensor(300 + k as u64, nc, np, (20.0 / nc as f64).min(0.5)).unwrap();
            let pair = build_wtn_pair(&t, 0.5, solver()).unwrap();
            let n = pair.direct.dim();
            let n_r = [5, 8, 11, 14, 17, 20, 20, 12, 9, 1][k];
            let sel = Selection::new(spread(n, n_r, k), n).unwrap();
            [(pair.direct, sel.clone()), (pair.inverted, sel)]
        })
        .collect()
}

fn regomax_oracle() -> Outcome {
    let (mut worst, mut identity) = (0.0f64, 0.0f64);
    for (g, sel) in oracle_instances() {
        let set = reduce(&g, &sel, ReduceOptions::default()).unwrap();
        let oracle = reduce_dense_oracle(&g, &sel, ORACLE_CAP).unwrap();
        worst = worst.max(max_abs(&(&set.g_r - oracle)));
        identity = identity.max(max_abs(&(&set.g_rr + &set.g_pr + &set.g_qr - &set.g_r)));
    }
    Outcome::check(
        worst < 1e-10 && identity < 1e-10,
        format!("10 instances x 2 directions: vs oracle {worst:.1e}, decomposition {identity:.1e}"),
    )
}

fn rank_consistency() -> Outcome {
    let mut worst = 0.0f64;
    for (g, sel) in oracle_instances() {
        let set = reduce(&g, &sel, ReduceOptions::default()).unwrap();
        let global = pagerank(&g, solver()).unwrap();
        let mut restricted: Vec<f64> = sel.nodes().iter().map(|&i| global[i]).collect();
        let s: f64 = restricted.iter().sum();
        restricted.iter_mut().for_each(|x| *x /= s);
        let local = pagerank(&set.g_r, solver()).unwrap();
        worst = worst.max(common::l1(local.probabilities(), &restricted));
    }
    Outcome::check(worst < 1e-8, format!("worst L1 {worst:.1e}"))
}

fn trivial_selection() -> Outcome {
    let (mut worst, mut rest) = (0.0f64, 0.0f64);
    for (k, &(nc, np)) in [(6, 3), (10, 4), (20, 1), (4, 9), (12, 5)].iter().enumerate() {
        let t = synth_tensor(400 + k as u64, nc, np, 0.4).unwrap();
        let pair = build_wtn_pair(&t, 0.5, solver()).unwrap();
        for g in [&pair.direct, &pair.inverted] {
            let set = reduce(g, &Selection::all(g.dim()), ReduceOptions::default()).unwrap();
            worst = worst.max(max_abs(&(&set.g_r - g.to_dense(ORACLE_CAP).unwrap())));
            rest = rest.max(max_abs(&set.g_pr)).max(max_abs(&set.g_qr));
        }
    }
    Outcome::check(
        worst < 1e-13 && rest == 0.0,
        format!("G_R vs G {worst:.1e}, largest G_pr/G_qr entry {rest:.1e}"),
    )
}

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

/// Three countries and one product; X imports only from the source Z.
fn toy() -> MoneyTensor {
    let reg = Registry::new(vec!["XX".into(), "YY".into(), "ZZ".into()], vec!["01".into()]).unwrap();
    let mut t = MoneyTensor::new(2016, reg);
    for (imp, exp, v) in [(X, Z, 10.0), (Y, Z, 20.0), (Y, X, 5.0), (Z, Y, 30.0)] {
        t.add(0, imp, exp, v).unwrap();
    }
    t
}

/// Full recomputation with the source's flows into the group scaled by
/// `1 + h`; central differences at 1e-2 and 1e-3 extrapolated in `h^2`.
fn brute_force_derivative(t: &MoneyTensor, alpha: f64, spec: &ShockSpec) -> Vec<f64> {
    let reg = t.registry();
    let balances = |h: f64| {
        let shocked = t.scaled(|k| {
            let hit = k.exporter == spec.source_country
                && k.product == spec.source_product
                && spec.group.contains(&k.importer);
            if hit {
                1.0 + h
            } else {
                1.0
            }
        });
        let (g, g_star) = common::dense_pair(&shocked, alpha);
        let pc = common::marginal(&common::stationary(&g), reg, true);
        let pc_star = common::marginal(&common::stationary(&g_star), reg, true);
        let pick = |v: &[f64]| spec.group.iter().map(|&c| v[c]).collect::<Vec<_>>();
        common::balance(&pick(&pc_star), &pick(&pc))
    };
    let central = |h: f64| -> Vec<f64> {
        let (a, b) = (balances(h), balances(-h));
        a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
    };
    let (h1, h2) = (1e-2, 1e-3);
    let (d1, d2) = (central(h1), central(h2));
    d1.iter()
        .zip(&d2)
        .map(|(a, b)| (h1 * h1 * b - h2 * h2 * a) / (h1 * h1 - h2 * h2))
        .collect()
}

fn sensitivity_convergence() -> Outcome {
    let t = toy();
    let delta = 1e-3;
    let run = |d: f64| {
        let spec = ShockSpec::new(t.registry(), Z, 0, vec![X, Y], d).unwrap();
        reduced_balance_sensitivity(&t, 0.5, &spec, SensitivityOptions::default()).unwrap()
    };
    let (full, half) = (run(delta), run(delta / 2.0));
    let spread = full
        .rows
        .iter()
        .zip(&half.rows)
        .map(|(a, b)| (a.derivative - b.derivative).abs() / a.derivative.abs())
        .fold(0.0, f64::max);
    let spec = ShockSpec::new(t.registry(), Z, 0, vec![X, Y], delta).unwrap();
    let brute = brute_force_derivative(&t, 0.5, &spec)[0];
    let reduced = full.row("XX").unwrap().derivative;
    let magnitude = (reduced - brute).abs() / brute.abs();
    let pass = spread < 1e-2 && reduced < 0.0 && reduced.signum() == brute.signum() && magnitude <= 0.05;
    Outcome::check(
        pass,
        format!(
            "delta vs delta/2 {spread:.1e}; dB_X reduced {reduced:.6} brute force {brute:.6} (relative gap {:.1}%)",
            100.0 * magnitude
        ),
    )
}

fn weight_identities() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (g, sel) in oracle_instances() {
        worst = worst.max(weight_error(&reduce(&g, &sel, ReduceOptions::default()).unwrap()));
        count += 1;
    }
    for k in 0..5u64 {
        let (nc, np) = (8 + 4 * k as usize, 2 + k as usize);
        let t = synth_tensor(500 + k, nc, np, 0.4).unwrap();
        let group: Vec<usize> = (0..3).collect();
        let spec = ShockSpec::new(t.registry(), nc - 1, 1, group, 1e-3).unwrap();
        let base = ShockBaseline::new(&t, 0.5, &spec, SensitivityOptions::default()).unwrap();
        worst = worst.max(weight_error(&base.direct)).max(weight_error(&base.inverted));
        let pair = build_wtn_pair(&t, 0.5, solver()).unwrap();
        let all = reduce(&pair.direct, &Selection::all(pair.direct.dim()), ReduceOptions::default()).unwrap();
        worst = worst.max(weight_error(&all));
        count += 3;
    }
    Outcome::check(worst < 1e-10, format!("{count} reductions, worst {worst:.1e}"))
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            let name = path.strip_prefix(dir).unwrap().to_path_buf();
            out.insert(name, std::fs::read(&path).unwrap());
        }
    }
    out
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_regomax");
    let root = tempfile::tempdir().unwrap();
    let fixture = root.path().join("fixture");
    let run = |args: &[&str], out: &Path| {
        let status = Command::new(bin)
            .args(args)
            .arg("--out-dir")
            .arg(out)
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success(), "regomax {args:?} failed");
    };
    let synth = ["synth", "--seed", "42", "--countries", "8", "--products", "3"];
    run(&synth, &fixture);
    let input = fixture.join("synth.csv");
    let input = input.to_str().unwrap();
    let shock = ["--group", "AA,AB,AC", "--source-country", "AH", "--source-product", "01"];
    let commands: Vec<Vec<&str>> = vec![
        synth.to_vec(),
        [&["rank", "--dump-matrix", "--input", input, "--source-product", "02"][..]].concat(),
        [&["reduce", "--input", input][..], &shock].concat(),
        [&["reduce", "--all-products", "--input", input][..], &shock].concat(),
        [&["sensitivity", "--global-price", "--input", input][..], &shock].concat(),
        [&["network", "--k", "3", "--input", input][..], &shock].concat(),
    ];
    let mut detail = String::new();
    let mut pass = true;
    for (k, args) in commands.iter().enumerate() {
        let a = root.path().join(format!("{k}a"));
        let b = root.path().join(format!("{k}b"));
        run(args, &a);
        run(args, &b);
        let (fa, fb) = (files(&a), files(&b));
        let same = !fa.is_empty() && fa == fb;
        pass &= same;
        let _ = write!(detail, "{} {} files {}; ", args[0], fa.len(), if same { "identical" } else { "DIFFER" });
    }
    Outcome::check(pass, detail.trim_end_matches("; ").to_string())
}

const EU27: [&str; 27] = [
    "AT", "BE", "BG", "CY", "CZ", "DE", "DK", "EE", "ES", "FI", "FR", "GB", "GR", "HU", "IE", "IT", "LT", "LU",
    "LV", "MT", "NL", "PL", "PT", "RO", "SE", "SI", "SK",
];

/// Top ten per column (PageRank, CheiRank, ImportRank, ExportRank) among the
/// EU countries plus the ten largest non-EU exporters of the product.
const PETROLEUM_TOP10: [[&str; 10]; 4] = [
    ["US", "SG", "NL", "IN", "FR", "DE", "ES", "GB", "IT", "BE"],
    ["RU", "US", "AE", "IN", "SG", "SA", "NL", "BE", "GR", "NG"],
    ["US", "NL", "IN", "SG", "DE", "IT", "FR", "GB", "BE", "ES"],
    ["RU", "SA", "US", "AE", "NL", "CA", "IQ", "SG", "KW", "NG"],
];
const GAS_TOP10: [[&str; 10]; 4] = [
    ["NL", "BE", "FR", "IT", "GB", "ES", "HU", "US", "DE", "PT"],
    ["US", "CA", "RU", "QA", "NO", "AU", "NL", "GB", "DZ", "AE"],
    ["FR", "IT", "GB", "US", "DE", "BE", "ES", "NL", "AE", "CA"],
    ["QA", "NO", "RU", "US", "AU", "DZ", "MY", "BE", "CA", "AE"],
];
/// `(W_pr, W_rr, W_qr, W_qrnd)` for EU petroleum plus the Russian petroleum node.
const PETROLEUM_WEIGHTS: [f64; 4] = [0.651568, 0.30849, 0.039942, 0.036512];
const PETROLEUM_WEIGHTS_STAR: [f64; 4] = [0.6051, 0.34379, 0.05111, 0.047];

fn real_data() -> Outcome {
    let Some(path) = std::env::var_os("REGOMAX_COMTRADE_2016") else {
        return Outcome {
            verdict: Verdict::Skip,
            detail: "set REGOMAX_COMTRADE_2016 to a 2016 trade CSV to run".into(),
        };
    };
    let start = Instant::now();
    let t = load_money_tensor(&path, Some(2016), None).unwrap();
    let reg = t.registry();
    let mut problems = Vec::new();
    let pair = build_wtn_pair(&t, 0.5, solver()).unwrap();
    let p = pagerank(&pair.direct, solver()).unwrap();
    let p_star = pagerank(&pair.inverted, solver()).unwrap();
    let hat = hat_ranks(&volumes(&t), reg).unwrap();
    let country = |c: &str| reg.country_index(c).unwrap_or_else(|| panic!("country {c} missing"));
    let eu: Vec<usize> = EU27.iter().map(|c| country(c)).collect();

    for (code, table) in [("33", PETROLEUM_TOP10), ("34", GAS_TOP10)] {
        let prod = reg.product_index(code).unwrap();
        let columns = [p.probabilities(), p_star.probabilities(), &hat.p[..], &hat.p_star[..]]
            .map(|v| restrict_to_product(v, prod, reg));
        let exporters = order_indices(&columns[3]);
        let mut listed = eu.clone();
        listed.extend(exporters.order().iter().filter(|c| !eu.contains(c)).take(10));
        for (col, want) in columns.iter().zip(table) {
            let values: Vec<f64> = listed.iter().map(|&c| col[c]).collect();
            let got: Vec<&str> = order_indices(&values).order()[..10]
                .iter()
                .map(|&k| reg.country(listed[k]))
                .collect();
            if got != want {
                problems.push(format!("product {code} order {got:?} expected {want:?}"));
            }
        }
    }

    let petroleum = reg.product_index("33").unwrap();
    let ru = country("RU");
    let sel = Selection::country_products(reg, &eu, &[petroleum], &[reg.node_index(ru, petroleum)]).unwrap();
    for (g, want) in [(&pair.direct, PETROLEUM_WEIGHTS), (&pair.inverted, PETROLEUM_WEIGHTS_STAR)] {
        let w = reduce(g, &sel, ReduceOptions::default()).unwrap().weights;
        let got = [w.pr, w.rr, w.qr, w.qrnd];
        if got.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-3) {
            problems.push(format!("{} weights {got:?} expected {want:?}", g.direction().name()));
        }
    }

    let spec = ShockSpec::new(reg, ru, petroleum, eu, 1e-3).unwrap();
    let report = reduced_balance_sensitivity(&t, 0.5, &spec, SensitivityOptions::default()).unwrap();
    for c in ["NL", "IT", "GR"] {
        let d = report.row(c).unwrap().derivative;
        if d >= 0.0 {
            problems.push(format!("dB_{c} = {d:e}, expected negative"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed > 1800.0 {
        problems.push(format!("full run took {elapsed:.0} s"));
    }
    Outcome::check(
        problems.is_empty(),
        format!("N={} in {elapsed:.0} s; {}", reg.n_nodes(), problems.join("; ")),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("stochasticity", stochasticity),
        ("pagerank oracle", pagerank_oracle),
        ("reduction oracle equivalence", regomax_oracle),
        ("rank consistency", rank_consistency),
        ("trivial selection", trivial_selection),
        ("sensitivity convergence", sensitivity_convergence),
        ("weight identities", weight_identities),
        ("cli determinism", cli_determinism),
        ("real data reproduction", real_data),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| Outcome {
            verdict: Verdict::Fail,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            ),
        });
        let tag = match outcome.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!(
            "{tag} criterion {} {name}: {} [{:.1} s]",
            k + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria failed", failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
