//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as its own harness. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --release --test acceptance -- 1 4 7`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use phasefield::geometry::{
    cylinder, default_z_planes, hourglass, lookup, sample_noiseless, sample_noisy,
};
use phasefield::net::PhaseFieldNet;
use phasefield::objective::{
    grid_energy, mc_energy, objective_gradient, total_objective, DiffusionTensor, Estimator,
    ObjectiveSpec,
};
use phasefield::rng::{seeded, stream_rng};
use phasefield::slice_data::{assign_phases, PhaseLabels, SlicePlane, SliceStack};
use phasefield::trainer::{reconstruct_labels, sweep, table1, SweepBase, SweepSetting, TrainConfig};
use phasefield::volume::{
    cross_section, section_complement_components, Axis, ComponentReport, ISO,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const SEEDS: [u64; 3] = [1, 2, 3];

/// First seed decides unless it fails; then two of three must pass.
fn seed_policy(mut run: impl FnMut(u64) -> (bool, String)) -> (bool, String) {
    let mut notes = Vec::new();
    let mut passed = 0;
    for (i, &seed) in SEEDS.iter().enumerate() {
        let (ok, note) = run(seed);
        notes.push(format!("seed {seed}: {} {note}", if ok { "ok" } else { "miss" }));
        passed += ok as usize;
        if i == 0 && ok {
            break;
        }
    }
    let ok = passed >= 2 || (passed == 1 && notes.len() == 1);
    (ok, notes.join("; "))
}

fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(got.abs()).max(floor)
}

fn spec(p: f64, eps: [f64; 3], batch: usize, estimator: Estimator) -> ObjectiveSpec {
    ObjectiveSpec {
        penalty: p,
        diffusion: DiffusionTensor::new(eps[0], eps[1], eps[2]).unwrap(),
        batch_size: batch,
        estimator,
    }
}

fn small_labels() -> PhaseLabels {
    let planes = [0.0, 1.0]
        .iter()
        .map(|&z| {
            let pixels = (0..16).map(|k| if matches!(k, 5 | 6 | 9 | 10) { 1.0 } else { 0.0 }).collect();
            SlicePlane::new(z, 4, pixels).unwrap()
        })
        .collect();
    assign_phases(&SliceStack::new(planes).unwrap(), 0.5).unwrap()
}

fn gradient_exactness() -> Outcome {
    let t = Instant::now();
    let widths = [3, 4, 4, 1];
    let net = PhaseFieldNet::init(&widths, 11).unwrap();
    let labels = small_labels();
    let s = spec(1000.0, [1.0, 1.0, 5.0], 16, Estimator::MonteCarlo);
    let (_, g) = objective_gradient(&net, &labels, &s, &mut seeded(3)).unwrap();
    let params = net.params();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let eval = |delta: f64| {
            let mut p = params.clone();
            p[i] += delta;
            let n = PhaseFieldNet::from_params(&widths, &p).unwrap();
            total_objective(&n, &labels, &s, &mut seeded(3)).unwrap().total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max(rel_err(g.0[i], fd, 1e-3));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 1.0,
        format!("{} params, max rel err {worst:.2e}, {secs:.2}s", params.len()),
    )
}

fn spatial_gradient_exactness() -> Outcome {
    let t = Instant::now();
    let net = PhaseFieldNet::init(&[3, 30, 30, 1], 12).unwrap();
    let mut points = Vec::new();
    phasefield::objective::sample_uniform(&mut seeded(4), 100, &mut points);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for x in &points {
        let (_, g) = net.forward_with_grad(*x);
        for k in 0..3 {
            let (mut xp, mut xm) = (*x, *x);
            xp[k] += h;
            xm[k] -= h;
            let fd = (net.forward(xp) - net.forward(xm)) / (2.0 * h);
            worst = worst.max(rel_err(g[k], fd, 1e-3));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst < 1e-6 && secs < 1.0, format!("max rel err {worst:.2e}, {secs:.2}s"))
}

fn estimator_consistency() -> Outcome {
    let t = Instant::now();
    let net = PhaseFieldNet::init(&[3, 30, 30, 1], 13).unwrap();
    let eps = DiffusionTensor::new(1.0, 1.0, 5.0).unwrap();
    let mc = (0..100u64).map(|k| mc_energy(&net, &eps, 5000, &mut stream_rng(99, k))).sum::<f64>() / 100.0;
    let g75 = grid_energy(&net, &eps, 75);
    let g150 = grid_energy(&net, &eps, 150);
    let (mc_gap, grid_gap) = (rel_err(mc, g75, 0.0), rel_err(g75, g150, 0.0));
    let secs = t.elapsed().as_secs_f64();
    outcome(
        mc_gap < 0.02 && grid_gap < 0.005 && secs < 60.0,
        format!(
            "MC mean {mc:.6} vs grid75 {g75:.6} ({:.3}%), grid75 vs grid150 {g150:.6} ({:.3}%), {secs:.1}s",
            100.0 * mc_gap,
            100.0 * grid_gap
        ),
    )
}

fn constant_field() -> Outcome {
    let net = PhaseFieldNet::zeros(&[3, 30, 30, 1]).unwrap();
    let stack = sample_noiseless(cylinder, 2, 1600, &default_z_planes(2)).unwrap();
    let labels = assign_phases(&stack, 0.75).unwrap();
    let want = 1000.0 / 8.0 + 1.0 / (32.0 * 4.0);
    let mut got = Vec::new();
    for estimator in [Estimator::MonteCarlo, Estimator::FixedGrid(20)] {
        let s = spec(1000.0, [4.0, 4.0, 4.0], 5000, estimator);
        got.push(total_objective(&net, &labels, &s, &mut seeded(0)).unwrap().total);
    }
    let s = spec(1000.0, [2.0, 2.0, 8.0], 777, Estimator::MonteCarlo);
    got.push(total_objective(&net, &labels, &s, &mut seeded(1)).unwrap().total);
    outcome(
        got.iter().all(|&v| v == want) && want == 125.0078125,
        format!("expected {want}, got {got:?}"),
    )
}

struct Trained {
    report: ComponentReport,
    net: PhaseFieldNet,
    seconds: f64,
}

fn train_default(labels: &PhaseLabels, widths: &[usize], s: &ObjectiveSpec, epochs: usize, seed: u64) -> Trained {
    let tc = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let (net, _) = reconstruct_labels(labels, widths, s, &tc).unwrap();
    let seconds = t.elapsed().as_secs_f64();
    let report = ComponentReport::analyze(&net, 50, &[0.5], 200).unwrap();
    Trained { report, net, seconds }
}

fn cylinder_anisotropy() -> Outcome {
    let stack = sample_noiseless(cylinder, 2, 1600, &default_z_planes(2)).unwrap();
    let labels = assign_phases(&stack, 0.75).unwrap();
    let mut slowest: f64 = 0.0;
    let (aniso, aniso_note) = seed_policy(|seed| {
        let r = train_default(&labels, &[3, 30, 30, 1], &spec(1000.0, [1.0, 1.0, 10.0], 5000, Estimator::MonteCarlo), 5000, seed);
        slowest = slowest.max(r.seconds);
        let area = r.report.section_area(0.5).unwrap();
        (
            r.report.component_count == 1 && area > 0.0,
            format!("({} comps, z=0.5 area {area:.4}, {:.0}s)", r.report.component_count, r.seconds),
        )
    });
    let (iso, iso_note) = seed_policy(|seed| {
        let r = train_default(&labels, &[3, 30, 30, 1], &spec(1000.0, [1.0, 1.0, 1.0], 5000, Estimator::MonteCarlo), 5000, seed);
        slowest = slowest.max(r.seconds);
        let section = cross_section(&r.net, Axis::Z, 0.5, 200).unwrap();
        let inside = section.values.iter().filter(|&&u| u >= ISO).count();
        (inside == 0, format!("({inside} section points inside, {:.0}s)", r.seconds))
    });
    outcome(
        aniso && iso && slowest < 120.0,
        format!("eps_z=10 [{aniso_note}] | eps_z=1 [{iso_note}] | slowest arm {slowest:.0}s"),
    )
}

fn sweep_condition(id: usize, report: &ComponentReport) -> bool {
    let area = |z| report.section_area(z).unwrap();
    let n = report.component_count;
    match id {
        1 => n >= 2,
        2 => n == 3,
        3 => n == 1 && (0.8..=1.25).contains(&(area(0.2) / area(0.5))),
        _ => n == 1 && area(0.5) < area(0.05),
    }
}

fn sweep_summary(report: &ComponentReport) -> String {
    let areas: Vec<String> = report.section_areas.iter().map(|s| format!("{}:{:.4}", s.z, s.area)).collect();
    format!("{} comps, areas {}", report.component_count, areas.join(" "))
}

fn hourglass_sweep() -> Outcome {
    let stack = sample_noiseless(hourglass, 3, 1600, &default_z_planes(3)).unwrap();
    let labels = assign_phases(&stack, 0.75).unwrap();
    let base = |seed| SweepBase {
        widths: vec![3, 30, 30, 1],
        estimator: Estimator::MonteCarlo,
        train: TrainConfig {
            seed,
            ..TrainConfig::default()
        },
        probe_resolution: 50,
        section_zs: vec![0.05, 0.2, 0.5],
        section_resolution: 200,
    };
    let table = table1();
    let t = Instant::now();
    let first = sweep(&labels, &base(SEEDS[0]), &table, |_| {});
    let first_pass = t.elapsed().as_secs_f64();
    let mut notes = Vec::new();
    let mut all = true;
    for (setting, run) in table.iter().zip(first) {
        let retry = |seed: u64| -> (bool, String) {
            let one: &[SweepSetting] = std::slice::from_ref(setting);
            let r = sweep(&labels, &base(seed), one, |_| {}).remove(0).result.unwrap();
            (sweep_condition(setting.id, &r.report), sweep_summary(&r.report))
        };
        let mut first_run = Some(run.result.unwrap());
        let (ok, note) = seed_policy(|seed| match first_run.take() {
            Some(r) if seed == SEEDS[0] => (sweep_condition(setting.id, &r.report), sweep_summary(&r.report)),
            _ => retry(seed),
        });
        all &= ok;
        notes.push(format!("setting {} {}: {note}", setting.id, if ok { "ok" } else { "FAIL" }));
    }
    outcome(
        all && first_pass < 1200.0,
        format!("single-seed pass {first_pass:.0}s\n    {}", notes.join("\n    ")),
    )
}

fn noise_labeling_counts() -> Outcome {
    let t = Instant::now();
    let geometry = lookup("four_way_branch").unwrap().noisy(0.3);
    let z = default_z_planes(5);
    let within = |got: usize, want: f64| (got as f64 - want).abs() <= 0.15 * want;
    let mut ok = true;
    let mut counts = Vec::new();
    for seed in 100..110 {
        let stack = sample_noisy(&geometry, 5, 625, &z, seed).unwrap();
        let l = assign_phases(&stack, 0.75).unwrap();
        let (i, o, u) = (l.inside.len(), l.outside.len(), l.unassigned);
        ok &= i + o + u == 3125 && within(i, 575.0) && within(o, 1719.0) && within(u, 831.0);
        counts.push(format!("{i}/{o}/{u}"));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ok && secs < 5.0,
        format!("inside/outside/unassigned over 10 seeds: {}, {secs:.2}s", counts.join(" ")),
    )
}

fn phasefield_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phasefield")).args(args).output().expect("binary runs")
}

fn read_kv(path: &Path) -> std::collections::HashMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Cylinder comparison shared by the cost and width criteria.
struct Comparison {
    kv: std::collections::HashMap<String, String>,
}

impl Comparison {
    fn run() -> Result<Self, String> {
        // Kept after the run so the trained arms can be inspected.
        let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_compare_integration");
        let _ = std::fs::remove_dir_all(&out);
        let o = phasefield_cli(&[
            "compare-integration", "--geometry", "cylinder", "--slices", "2", "--n", "1600", "--eps-z", "10",
            "--penalty", "1000", "--epochs", "5000", "--mc-batch", "5000", "--mc-batch", "500", "--grid", "75",
            "--grid-epochs", "10000", "--seed", "1", "--out", out.to_str().unwrap(),
        ]);
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        Ok(Comparison {
            kv: read_kv(&out.join("comparison.kv")),
        })
    }

    fn num(&self, key: &str) -> f64 {
        self.kv.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
    }
}

fn integration_cost(c: &Result<Comparison, String>) -> Outcome {
    let c = match c {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("compare-integration failed: {e}")),
    };
    let ratio = c.num("wall_clock_ratio");
    let (mc, grid) = (c.num("mc_b5000.components"), c.num("grid_75.components"));
    outcome(
        ratio >= 10.0 && mc == 1.0 && grid == 1.0,
        format!(
            "grid75/10000 {:.0}s vs MC5000/5000 {:.0}s = {ratio:.1}x; components {mc} / {grid}",
            c.num("grid_75.seconds"),
            c.num("mc_b5000.seconds")
        ),
    )
}

fn interface_width_ordering(c: &Result<Comparison, String>) -> Outcome {
    let c = match c {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("compare-integration failed: {e}")),
    };
    let grid = c.num("grid_75.width.z0.5");
    let mc5000 = c.num("mc_b5000.width.z0.5");
    let mc500 = c.num("mc_b500.width.z0.5");
    let gap = |wide: f64, narrow: f64| (wide - narrow) / wide;
    let censored = |arm: &str| {
        format!("{}/{}", c.num(&format!("{arm}.width_censored.z0.5")), c.num(&format!("{arm}.width_crossings.z0.5")))
    };
    outcome(
        gap(grid, mc5000) >= 0.1 && gap(mc5000, mc500) >= 0.1,
        format!(
            "z=0.5 widths grid75 {grid:.4} > MC5000 {mc5000:.4} > MC500 {mc500:.4} (gaps {:.1}%, {:.1}%; censored {}, {}, {})",
            100.0 * gap(grid, mc5000),
            100.0 * gap(mc5000, mc500),
            censored("grid_75"),
            censored("mc_b5000"),
            censored("mc_b500"),
        ),
    )
}

fn hollow_cylinder() -> Outcome {
    let g = lookup("hollow_tilted_cylinder").unwrap();
    let d = g.defaults;
    let stack = sample_noiseless(g.inner, d.slices, d.points_per_plane, &default_z_planes(d.slices)).unwrap();
    let labels = assign_phases(&stack, d.threshold).unwrap();
    let widths = [3, d.hidden_width, d.hidden_width, 1];
    let mut slowest: f64 = 0.0;
    let (ok, note) = seed_policy(|seed| {
        let r = train_default(&labels, &widths, &spec(1000.0, [1.0, 1.0, 1.0], 5000, Estimator::MonteCarlo), 5000, seed);
        slowest = slowest.max(r.seconds);
        let section = cross_section(&r.net, Axis::Z, 0.5, 200).unwrap();
        let parts = section_complement_components(&section, ISO);
        (parts == 2, format!("({parts} complement components, {:.0}s)", r.seconds))
    });
    outcome(ok && slowest < 120.0, format!("S={}, width {}: {note}", d.slices, d.hidden_width))
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = phasefield_cli(&[
            "reconstruct", "--geometry", "two_way_branch", "--seed", "7", "--epochs", "300", "--batch", "1000",
            "--mesh-resolution", "30", "--reproducible", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let files = ["net.txt", "log.csv", "report.kv", "mesh.obj"];
    let differing: Vec<&str> = files.iter().copied().filter(|f| !same(f)).collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} identical across two runs", files.join(", "))
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut failures = 0;
    let mut report = |n: u32, name: &str, o: Outcome| {
        println!("{} criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += (!o.pass) as usize;
    };
    let simple: [(u32, &str, fn() -> Outcome); 7] = [
        (1, "gradient exactness", gradient_exactness),
        (2, "spatial-gradient exactness", spatial_gradient_exactness),
        (3, "estimator consistency", estimator_consistency),
        (4, "constant-field analytics", constant_field),
        (5, "cylinder anisotropy", cylinder_anisotropy),
        (6, "hourglass sweep", hourglass_sweep),
        (7, "noise-labeling counts", noise_labeling_counts),
    ];
    for (n, name, f) in simple {
        if wanted(n) {
            report(n, name, f());
        }
    }
    if wanted(8) || wanted(9) {
        let comparison = Comparison::run();
        if wanted(8) {
            report(8, "integration-cost ratio", integration_cost(&comparison));
        }
        if wanted(9) {
            report(9, "interface-width ordering", interface_width_ordering(&comparison));
        }
    }
    if wanted(10) {
        report(10, "hollow tilted cylinder", hollow_cylinder());
    }
    if wanted(11) {
        report(11, "reproducibility", reproducibility());
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
