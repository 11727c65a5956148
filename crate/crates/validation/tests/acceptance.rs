//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! Criteria 1-3 train a few hundred networks on real MNIST and take tens of
//! minutes. Set `MRFORGE_ACCEPTANCE=4,5,6` to run a subset while developing;
//! the default runs everything. MNIST is read from `MRFORGE_DATA_DIR`, or
//! `data/mnist` at the workspace root.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use mrforge::dataset::{self, idx, Mnist};
use mrforge::experiment::{
    self, Condition, ExperimentConfig, ExperimentOutcome, ResultsLog, SgdTrainer,
};
use mrforge::mr::MrKind;
use mrforge::stats::{t_cdf, welch_t};
use mrforge::transforms::{self, GrayImage};
use mrforge::Error;
use mrforge_validation::{gradient, protocol, quadrature, warp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1.
const REPLICATION_ALPHA: f64 = 0.05;
// Criterion 2.
const PRESET_ALPHA: f64 = 0.10;
const PRESET_REQUIRED: usize = 3;
const SHIFT_TRIALS: usize = 5;
// Criterion 3.
const BASELINE_MIN_1500: f64 = 0.90;
const BASELINE_MIN_15000: f64 = 0.97;
// Criterion 4.
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
// Criterion 5.
const P_TOL: f64 = 1e-6;
const CDF_TOL: f64 = 1e-10;
const STATS_CASES: usize = 50;
// Criterion 6.
const WARP_TOL: f64 = 1e-6;
const WARP_IMAGES: usize = 20;
// Criterion 7.
const PLANS: usize = 200;
// Criterion 8.
const TRAIN_COUNT: usize = 60_000;
const TEST_COUNT: usize = 10_000;

type Verdict = Result<String, String>;

fn data_dir() -> PathBuf {
    std::env::var_os("MRFORGE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn summary(out: &ExperimentOutcome) -> String {
    format!(
        "DNN1 {:.4}, DNN2 {:.4}, t = {:.3}, dof = {:.1}, p = {:.4}",
        out.test.mean_a, out.test.mean_b, out.test.t_stat, out.test.dof, out.test.p_value
    )
}

/// Runs the five published conditions once and shares them between criteria 1-3.
struct Preset {
    runs: Vec<(ExperimentConfig, Result<ExperimentOutcome, Error>)>,
}

impl Preset {
    fn run(data: &Mnist, log: &ResultsLog) -> Self {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        let runs = experiment::paper_preset(&ExperimentConfig::default())
            .into_iter()
            .map(|mut cfg| {
                if cfg.mr == MrKind::Shift {
                    cfg.trials = SHIFT_TRIALS;
                }
                let start = Instant::now();
                let out = experiment::run_experiment(&cfg, data, &SgdTrainer, Some(log), workers);
                match &out {
                    Ok(o) => println!(
                        "  {}: {} ({:.0?})",
                        cfg.label(),
                        summary(o),
                        start.elapsed()
                    ),
                    Err(e) => println!("  {}: error: {e}", cfg.label()),
                }
                (cfg, out)
            })
            .collect();
        Preset { runs }
    }

    fn rotate(&self) -> &(ExperimentConfig, Result<ExperimentOutcome, Error>) {
        &self.runs[0]
    }
}

fn criterion_1(preset: &Preset) -> Verdict {
    let (_, out) = preset.rotate();
    let out = out
        .as_ref()
        .map_err(|e| format!("rotate run failed: {e}"))?;
    ensure(
        out.test.mean_b > out.test.mean_a && out.test.p_value < REPLICATION_ALPHA,
        format!(
            "rotate k=1500 6%, 10 trials: {}; need DNN2 > DNN1 and p < {REPLICATION_ALPHA}",
            summary(out)
        ),
    )
}

fn criterion_2(preset: &Preset) -> Verdict {
    let mut hits = Vec::new();
    let mut lines = Vec::new();
    for (cfg, out) in &preset.runs {
        match out {
            Ok(o) => {
                let hit = o.test.mean_b >= o.test.mean_a && o.test.p_value < PRESET_ALPHA;
                if hit {
                    hits.push(cfg.mr.name());
                }
                lines.push(format!(
                    "{} p={:.3}{}",
                    cfg.mr,
                    o.test.p_value,
                    if hit { "*" } else { "" }
                ));
            }
            Err(e) => lines.push(format!("{} error ({e})", cfg.mr)),
        }
    }
    ensure(
        hits.len() >= PRESET_REQUIRED,
        format!(
            "{}/5 conditions with DNN2 >= DNN1 and p < {PRESET_ALPHA} (need {PRESET_REQUIRED}): {}",
            hits.len(),
            lines.join(", ")
        ),
    )
}

fn criterion_3(preset: &Preset) -> Verdict {
    let mut worst_1500 = f64::INFINITY;
    let mut worst_15000 = f64::INFINITY;
    for (cfg, out) in &preset.runs {
        let out = out
            .as_ref()
            .map_err(|e| format!("{} run failed: {e}", cfg.label()))?;
        let lowest = out
            .accuracies(Condition::Baseline)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        match cfg.k {
            1500 => worst_1500 = worst_1500.min(lowest),
            15_000 => worst_15000 = worst_15000.min(lowest),
            _ => {}
        }
    }
    ensure(
        worst_1500 >= BASELINE_MIN_1500 && worst_15000 >= BASELINE_MIN_15000,
        format!(
            "lowest baseline accuracy on the full test pool: k=1500 {worst_1500:.4} (need {BASELINE_MIN_1500}), \
             k=15000 {worst_15000:.4} (need {BASELINE_MIN_15000})"
        ),
    )
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let reports = gradient::check(7)?;
    let elapsed = start.elapsed();
    let worst = reports.iter().map(|r| r.worst).fold(0.0, f64::max);
    let checked: Vec<String> = reports
        .iter()
        .map(|r| format!("{} {}", r.name, r.checked))
        .collect();
    let kinked: usize = reports.iter().map(|r| r.kinked).sum();
    ensure(
        elapsed < GRADIENT_BUDGET && reports.iter().all(|r| r.checked == gradient::PER_LAYER),
        format!(
            "step {:e}, worst relative error {worst:.2e} < {:e} ({}), {kinked} draws at a kink redrawn, {elapsed:.1?}",
            gradient::STEP,
            gradient::MAX_REL_ERR,
            checked.join(", ")
        ),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut worst_p, mut worst_cdf) = (0.0f64, 0.0f64);
    for _ in 0..STATS_CASES {
        let (na, nb) = (rng.gen_range(2..16), rng.gen_range(2..16));
        let (sa, sb) = (rng.gen_range(0.001..0.03), rng.gen_range(0.001..0.03));
        let lift = rng.gen_range(-0.02..0.02);
        let a: Vec<f64> = (0..na).map(|_| 0.9 + rng.gen_range(-sa..sa)).collect();
        let b: Vec<f64> = (0..nb)
            .map(|_| 0.9 + lift + rng.gen_range(-sb..sb))
            .collect();
        let got = welch_t(&a, &b).map_err(|e| e.to_string())?;
        let (_, _, p) = quadrature::welch(&a, &b);
        worst_p = worst_p.max((got.p_value - p).abs());

        let (x, dof) = (rng.gen_range(-8.0..8.0), rng.gen_range(1.0..60.0));
        let cdf = t_cdf(x, dof).map_err(|e| e.to_string())?;
        worst_cdf = worst_cdf.max((cdf - quadrature::t_cdf(x, dof)).abs());
    }
    let same = [0.91, 0.93, 0.92, 0.95];
    let null = welch_t(&same, &same).map_err(|e| e.to_string())?;
    ensure(
        worst_p < P_TOL && worst_cdf < CDF_TOL && null.t_stat == 0.0 && null.p_value == 0.5,
        format!(
            "{STATS_CASES} cases: max |p - oracle| {worst_p:.1e} (< {P_TOL:e}), max |cdf - oracle| {worst_cdf:.1e} \
             (< {CDF_TOL:e}); t(a,a) = {}, p = {}",
            null.t_stat, null.p_value
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst = 0.0f64;
    for n in 0..WARP_IMAGES as u64 {
        let img = warp::random_image(&mut rng);
        let deg = rng.gen_range(-180.0..180.0);
        let f = rng.gen_range(0.5..2.0);
        let (alpha, sigma) = (rng.gen_range(1.0..12.0), rng.gen_range(1.0..5.0));
        let (dx, dy) = (rng.gen_range(-5..=5), rng.gen_range(-5..=5));

        let rotated = transforms::rotate(&img, deg);
        let scaled = transforms::scale(&img, f).map_err(|e| e.to_string())?;
        let warped = transforms::elastic(&img, alpha, sigma, n).map_err(|e| e.to_string())?;
        worst = worst
            .max(warp::max_diff(
                &rotated,
                &warp::affine(&img, warp::rotation(deg)),
            ))
            .max(warp::max_diff(
                &scaled,
                &warp::affine(&img, warp::scaling(f)),
            ))
            .max(warp::max_diff(
                &warped,
                &warp::elastic(&img, alpha, sigma, n),
            ));

        let shifted = transforms::shift(&img, dx, dy);
        let mirrored = transforms::vmirror(&img);
        for out in [&rotated, &scaled, &warped, &shifted, &mirrored] {
            if out.dims() != img.dims() || out.pixels().iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err("a kernel changed dimensions or left [0, 1]".into());
            }
        }
        if transforms::vmirror(&mirrored) != img {
            return Err("vmirror is not an involution".into());
        }
        let identities: [GrayImage; 4] = [
            transforms::rotate(&img, 0.0),
            transforms::shift(&img, 0, 0),
            transforms::scale(&img, 1.0).map_err(|e| e.to_string())?,
            transforms::elastic(&img, 0.0, sigma, n).map_err(|e| e.to_string())?,
        ];
        if identities.iter().any(|out| out != &img) {
            return Err("an identity parameter changed the image".into());
        }
    }
    ensure(
        worst <= WARP_TOL,
        format!(
            "{WARP_IMAGES} images: identities bit-exact, vmirror involutive, dims and range kept; \
             max |kernel - reference| {worst:.1e} (<= {WARP_TOL:e})"
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut counts = [0usize; 5];
    for _ in 0..PLANS {
        let kind_at = rng.gen_range(0..MrKind::ALL.len());
        let kind = MrKind::ALL[kind_at];
        let k = rng.gen_range(4..2000);
        // Synthetic labels cycle 0-9, so about 30% of S can feed vmirror.
        let max_half = if kind == MrKind::Vmirror {
            (k - 1) / 10 * 3 + 1
        } else {
            k / 2
        };
        let half = rng.gen_range(1..=max_half.min((k - 2) / 2).max(1));
        protocol::check(k, 2 * half, kind, rng.gen())?;
        counts[kind_at] += 1;
    }
    Ok(format!(
        "{PLANS} plans (rotate/shift/scale/vmirror/elastic = {counts:?}): |S1| = k-m, |S2| = m, |S'| = k, \
         discarded half excluded, replay identical"
    ))
}

fn criterion_8(dir: &std::path::Path) -> Verdict {
    let data = Mnist::load(dir).map_err(|e| format!("loading {}: {e}", dir.display()))?;
    let images = dataset::locate(dir, dataset::TRAIN_IMAGES).map_err(|e| e.to_string())?;
    let bytes = idx::read_maybe_gzip(&images).map_err(|e| e.to_string())?;

    let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
    let truncated = scratch.path().join("truncated");
    std::fs::write(&truncated, &bytes[..bytes.len() / 2]).map_err(|e| e.to_string())?;
    let mut magic = bytes[..16 + 784].to_vec();
    magic[3] = 0x01;
    let bad_magic = scratch.path().join("bad-magic");
    std::fs::write(&bad_magic, &magic).map_err(|e| e.to_string())?;

    let truncated_rejected = matches!(idx::load_idx_images(&truncated), Err(Error::Format { .. }));
    let magic_rejected = matches!(idx::load_idx_images(&bad_magic), Err(Error::Format { .. }));
    ensure(
        data.train.len() == TRAIN_COUNT && data.test.len() == TEST_COUNT && truncated_rejected && magic_rejected,
        format!(
            "train {} / test {} (need {TRAIN_COUNT} / {TEST_COUNT}); truncated file rejected: {truncated_rejected}, \
             wrong magic rejected: {magic_rejected}",
            data.train.len(),
            data.test.len()
        ),
    )
}

fn main() {
    let selected: Vec<u32> = match std::env::var("MRFORGE_ACCEPTANCE") {
        Ok(list) if !list.trim().is_empty() => list
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect(),
        _ => (1..=8).collect(),
    };
    let wants = |n: u32| selected.contains(&n);
    let dir = data_dir();
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |n: u32, name: &'static str, v: Verdict| {
        let (mark, detail) = match &v {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n} [{mark}] {name}: {detail}");
        verdicts.push((n, name, v));
    };

    if wants(4) {
        record(4, "gradient oracle", criterion_4());
    }
    if wants(5) {
        record(5, "statistics oracle", criterion_5());
    }
    if wants(6) {
        record(6, "transform properties", criterion_6());
    }
    if wants(7) {
        record(7, "protocol arithmetic", criterion_7());
    }
    if wants(8) {
        record(8, "IDX ingestion", criterion_8(&dir));
    }
    if wants(1) || wants(2) || wants(3) {
        match Mnist::load(&dir) {
            Ok(data) => {
                let log_path =
                    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-results.jsonl");
                let _ = std::fs::remove_file(&log_path);
                let log = ResultsLog::new(&log_path);
                println!(
                    "training the five published conditions (log: {})",
                    log_path.display()
                );
                let preset = Preset::run(&data, &log);
                if let Ok(rows) = experiment::report(&log_path, Default::default()) {
                    print!("{}", experiment::render_table(&rows));
                }
                if wants(1) {
                    record(1, "rotate replication", criterion_1(&preset));
                }
                if wants(2) {
                    record(2, "five-condition preset", criterion_2(&preset));
                }
                if wants(3) {
                    record(3, "baseline sanity", criterion_3(&preset));
                }
            }
            Err(e) => {
                for (n, name) in [
                    (1, "rotate replication"),
                    (2, "five-condition preset"),
                    (3, "baseline sanity"),
                ] {
                    if wants(n) {
                        record(
                            n,
                            name,
                            Err(format!("MNIST unavailable at {}: {e}", dir.display())),
                        );
                    }
                }
            }
        }
    }

    verdicts.sort_by_key(|v| v.0);
    println!();
    println!("acceptance summary");
    for (n, name, v) in &verdicts {
        println!(
            "  {n}. {:<22} {}",
            name,
            if v.is_ok() { "PASS" } else { "FAIL" }
        );
    }
    let failed = verdicts.iter().filter(|v| v.2.is_err()).count();
    println!(
        "{} of {} criteria passed",
        verdicts.len() - failed,
        verdicts.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
