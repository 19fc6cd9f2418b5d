use std::fs;
use std::path::Path;
use std::time::Instant;

use cfn_core::criteria::{
    check_diag_scaling, check_offdiag, check_steel, check_tiers, check_w_tiers, criterion_derivatives,
    derivative_errors, fast_criteria, w_tier_notes, Check,
};
use cfn_core::landscape::{
    diag_scaling_experiment, expected_hessian, hessian_report, offdiag_decay_experiment, reconstruction_experiment,
    steel_example, tier_slopes, w_tier_experiment, EstimatePoint, Mode, ReconstructionConfig, SupSearch, TierReport,
    TierThresholds, WTierConfig,
};
use cfn_core::likelihood::{gradient, log_likelihood, EXACT_CAP};
use cfn_core::model::{check_box_membership, sample_edge_params, EdgeParams, RegimeBox, Role, SampleBatch};
use cfn_core::optimize::{
    coordinate_ascent, projected_gradient_ascent, AscentOptions, GradientOptions, Interval, Objective, StopReason,
};
use cfn_core::tree::{load_tree, Tree, TreeFormat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::report::{emit, CliError, CliResult, Report};
use crate::{
    BoxArgs, Command, DiagArgs, FitArgs, HessianArgs, LoglikArgs, MethodArg, ModeArg, OffDiagArgs, PointArg,
    SampleArgs, SelftestArgs, SteelArgs, TierArgs, TreeArgs, WTermsArgs,
};

/// Runs one subcommand; `Ok(false)` means a gated check failed.
pub fn run(cmd: &Command) -> CliResult<bool> {
    let threads = match cmd {
        Command::Sample(a) => a.run.threads,
        Command::Loglik(a) => a.run.threads,
        Command::Fit(a) => a.run.threads,
        Command::Hessian(a) => a.run.threads,
        Command::LandscapeDiag(a) => a.run.threads,
        Command::LandscapeOffdiag(a) => a.run.threads,
        Command::ReconTiers(a) => a.run.threads,
        Command::Wterms(a) => a.run.threads,
        Command::Steel(a) => a.run.threads,
        Command::Selftest(a) => a.threads,
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure {t} threads: {e}")))?;
    }
    let start = Instant::now();
    let (name, run, report, gate) = match cmd {
        Command::Sample(a) => ("sample", &a.run, sample(a)?, a.run.check),
        Command::Loglik(a) => ("loglik", &a.run, loglik(a)?, a.run.check),
        Command::Fit(a) => ("fit", &a.run, fit(a)?, a.run.check),
        Command::Hessian(a) => ("hessian", &a.run, hessian(a)?, a.run.check || a.check_fd),
        Command::LandscapeDiag(a) => ("landscape-diag", &a.run, landscape_diag(a)?, a.run.check),
        Command::LandscapeOffdiag(a) => ("landscape-offdiag", &a.run, landscape_offdiag(a)?, a.run.check),
        Command::ReconTiers(a) => ("recon-tiers", &a.run, recon_tiers(a)?, a.run.check),
        Command::Wterms(a) => ("wterms", &a.run, wterms(a)?, a.run.check),
        Command::Steel(a) => ("steel", &a.run, steel(a)?, a.run.check),
        Command::Selftest(a) => return selftest(a),
    };
    let ok = emit(&run.out, name, cmd, run.seed, start.elapsed().as_secs_f64(), &report, gate)?;
    if !ok {
        eprintln!("{name}: acceptance check failed");
    }
    Ok(ok)
}

/// The tree and, when the file carries a value on every edge, θ* from the file.
fn load(args: &TreeArgs, seed: u64) -> CliResult<(Tree, Option<Vec<f64>>)> {
    if let Some(path) = &args.tree {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read tree file {}: {e}", path.display())))?;
        let format: TreeFormat = args.format.parse()?;
        let (tree, raw) = load_tree(&text, format)?;
        let theta = if raw.iter().all(Option::is_some) && !raw.is_empty() {
            Some(EdgeParams::from_raw(&raw, Role::Truth)?.theta)
        } else if raw.iter().any(Option::is_some) {
            return Err(CliError::Config("edge values must be given on every edge or on none".into()));
        } else {
            None
        };
        return Ok((tree, theta));
    }
    let spec = args.builtin.as_deref().ok_or_else(|| CliError::Config("pass --tree FILE or --builtin NAME".into()))?;
    Ok((builtin(spec, seed)?, None))
}

const BUILTINS: &str = "quartet, caterpillar:N, spine-of-cherries:K, planted-complete:D, random:N";

fn builtin(spec: &str, seed: u64) -> CliResult<Tree> {
    let (name, arg) = spec.split_once(':').map_or((spec, None), |(n, a)| (n, Some(a)));
    let size = || -> CliResult<usize> {
        arg.ok_or_else(|| CliError::Config(format!("--builtin {name} needs a size, e.g. {name}:8")))?
            .parse()
            .map_err(|_| CliError::Config(format!("bad size in --builtin {spec}")))
    };
    Ok(match name {
        "quartet" => Tree::quartet(),
        "caterpillar" => Tree::caterpillar(size()?)?,
        "spine-of-cherries" => Tree::spine_of_cherries(size()?)?,
        "planted-complete" => Tree::planted_complete(size()?)?,
        "random" => Tree::random(size()?, &mut ChaCha8Rng::seed_from_u64(seed))?,
        _ => return Err(CliError::Config(format!("unknown builtin tree '{name}' ({BUILTINS})"))),
    })
}

fn deltas(b: &BoxArgs, default: &[f64]) -> Vec<f64> {
    b.delta.clone().unwrap_or_else(|| default.to_vec())
}

fn regime(b: &BoxArgs, delta: f64) -> CliResult<RegimeBox> {
    Ok(RegimeBox::new(delta, b.c_p, b.c_p_max, b.c_hat, b.c_hat_max)?)
}

fn first_delta(b: &BoxArgs) -> CliResult<f64> {
    match b.delta.as_deref() {
        None => Ok(0.01),
        Some([d]) => Ok(*d),
        Some(_) => Err(CliError::Config("this command takes a single --delta".into())),
    }
}

fn truth(tree: &Tree, from_file: Option<Vec<f64>>, rbox: &RegimeBox, seed: u64) -> Vec<f64> {
    from_file.unwrap_or_else(|| sample_edge_params(tree, rbox, Role::Truth, seed).theta)
}

fn estimate(tree: &Tree, truth: &[f64], point: PointArg, rbox: &RegimeBox, seed: u64) -> Vec<f64> {
    match point {
        PointArg::Truth => truth.to_vec(),
        PointArg::Drawn => sample_edge_params(tree, rbox, Role::Estimate, seed).theta,
    }
}

fn mode(m: ModeArg, samples: usize, seed: u64) -> Mode {
    match m {
        ModeArg::Exact => Mode::Exact,
        ModeArg::Mc => Mode::Mc { m: samples, seed },
    }
}

fn estimate_point(p: PointArg) -> EstimatePoint {
    match p {
        PointArg::Truth => EstimatePoint::Truth,
        PointArg::Drawn => EstimatePoint::Drawn,
    }
}

fn read_samples(path: &Path) -> CliResult<SampleBatch> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read sample file {}: {e}", path.display())))?;
    Ok(SampleBatch::parse(&text)?)
}

fn edge_table(tree: &Tree, theta: &[f64], values: &[f64], column: &str) -> String {
    let mut s = format!("edge,u,v,theta,{column}\n");
    for (e, &(u, v)) in tree.edges().iter().enumerate() {
        s.push_str(&format!("{e},{u},{v},{},{}\n", theta[e], values[e]));
    }
    s
}

fn sample(a: &SampleArgs) -> CliResult<Report> {
    let (tree, file_theta) = load(&a.tree, a.run.seed)?;
    let rbox = regime(&a.rbox, first_delta(&a.rbox)?)?;
    let theta = truth(&tree, file_theta, &rbox, a.run.seed);
    let batch = SampleBatch::simulate(&tree, &theta, a.m, a.run.seed);
    let text_path = a.run.out.join("sample.txt");
    fs::create_dir_all(&a.run.out)
        .and_then(|_| fs::write(&text_path, batch.to_text()))
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", text_path.display())))?;
    let (inside, outside) = check_box_membership(&EdgeParams::new(theta.clone(), Role::Truth)?, &rbox, Role::Truth);
    let report = Report::new(
        batch.to_csv(&tree),
        &json!({ "m": a.m, "leaf_count": tree.leaf_count(), "theta_star": theta, "edges_outside_truth_box": outside }),
    )?;
    Ok(report.with_checks(vec![Check::new(
        "θ* inside the truth box",
        inside,
        format!("{} edges outside", outside.len()),
        "0 edges outside",
    )]))
}

fn loglik(a: &LoglikArgs) -> CliResult<Report> {
    let (tree, file_theta) = load(&a.tree, a.run.seed)?;
    let batch = read_samples(&a.samples)?;
    let rbox = regime(&a.rbox, first_delta(&a.rbox)?)?;
    let ts = truth(&tree, file_theta, &rbox, a.run.seed);
    let th = estimate(&tree, &ts, a.at, &rbox, a.run.seed);
    let ll = log_likelihood(&tree, &th, &batch)?;
    let g = gradient(&tree, &th, &batch)?;
    let mut report = Report::new(
        edge_table(&tree, &th, &g, "gradient"),
        &json!({ "m": batch.len(), "loglik": ll, "theta_hat": th, "gradient": g }),
    )?;
    if a.run.check {
        let (ge, he) = derivative_errors(&tree, &th, &batch)?;
        report = report.with_checks(cfn_core::criteria::check_derivatives(ge, he));
    }
    Ok(report)
}

fn fit(a: &FitArgs) -> CliResult<Report> {
    let (tree, file_theta) = load(&a.tree, a.run.seed)?;
    let delta = first_delta(&a.rbox)?;
    let rbox = regime(&a.rbox, delta)?;
    let has_file_theta = file_theta.is_some();
    let ts = truth(&tree, file_theta, &rbox, a.run.seed);
    let batch = match (&a.samples, a.mode) {
        (Some(p), _) => Some(read_samples(p)?),
        (None, ModeArg::Mc) => Some(SampleBatch::simulate(&tree, &ts, a.m, a.run.seed)),
        (None, ModeArg::Exact) => None,
    };
    let objective = match &batch {
        Some(b) => Objective::batch(b)?,
        None => Objective::exact(&tree, &ts, EXACT_CAP)?,
    };
    // With a sample file and no edge values in the tree file there is no θ* to
    // measure the error against.
    let reference = (a.samples.is_none() || has_file_theta).then_some(ts.as_slice());
    let start = match (a.start, reference) {
        (PointArg::Truth, None) => {
            return Err(CliError::Config("--start truth needs edge values in the tree file".into()))
        }
        (p, _) => estimate(&tree, &ts, p, &rbox, a.run.seed),
    };
    let result = match a.method {
        MethodArg::Ca => {
            let opts = AscentOptions {
                sweeps: a.sweeps,
                tol: a.tol,
                interval: if a.widen { Interval::widened() } else { Interval::ferromagnetic() },
            };
            coordinate_ascent(&tree, &start, &objective, opts, reference)?
        }
        MethodArg::Pga => {
            let (lo, hi) = rbox.theta_interval(Role::Estimate);
            let opts = GradientOptions {
                step: a.step.unwrap_or(delta / 2.0),
                bounds: if a.widen { Interval::widened() } else { Interval { lo, hi } },
                iters: a.sweeps,
                tol: a.tol,
            };
            projected_gradient_ascent(&tree, &start, &objective, opts, reference)?
        }
    };
    let mut checks = vec![Check::new(
        "stopped before the iteration cap",
        result.stop != StopReason::MaxIter,
        format!("{:?} after {} iterations", result.stop, result.iterations),
        "tolerance or boundary stop",
    )];
    if a.method == MethodArg::Ca {
        let mono = result.objective_nondecreasing(1e-12);
        checks.push(Check::new("objective nondecreasing", mono, mono.to_string(), "true"));
    }
    let report = Report::new(
        result.csv(),
        &json!({ "fit": result, "start": start, "theta_star": reference, "samples": batch.as_ref().map(SampleBatch::len) }),
    )?;
    Ok(report.with_checks(checks))
}

fn hessian(a: &HessianArgs) -> CliResult<Report> {
    let (tree, file_theta) = load(&a.tree, a.run.seed)?;
    let delta = first_delta(&a.rbox)?;
    let rbox = regime(&a.rbox, delta)?;
    let ts = truth(&tree, file_theta, &rbox, a.run.seed);
    let th = estimate(&tree, &ts, a.at, &rbox, a.run.seed);
    let (matrix, se) = expected_hessian(&tree, &ts, &th, mode(a.mode, a.m, a.run.seed))?;
    let h = hessian_report(matrix, se, delta)?;
    let mut checks = Vec::new();
    let mut fd = None;
    if a.run.check {
        let diag_neg = h.matrix.diagonal().iter().all(|&d| d < 0.0);
        checks.push(Check::new("all diagonals negative", diag_neg, diag_neg.to_string(), "true"));
        let lmax = h.eigenvalues.last().copied().unwrap_or(f64::NAN);
        checks.push(Check::new("all eigenvalues negative", h.negative_definite(), format!("λ_max = {lmax:.4}"), "< 0"));
        checks.push(Check::new(
            "eigenvalues inside Gershgorin disks",
            h.eigenvalues_in_disks(),
            h.eigenvalues_in_disks().to_string(),
            "true",
        ));
    }
    if a.check_fd {
        let batch = SampleBatch::simulate(&tree, &ts, 200, a.run.seed);
        let (ge, he) = derivative_errors(&tree, &th, &batch)?;
        fd = Some(json!({ "samples": 200, "gradient_max_rel_err": ge, "hessian_max_rel_err": he }));
        checks.extend(cfn_core::criteria::check_derivatives(ge, he));
    }
    let report =
        Report::new(h.csv(), &json!({ "theta_star": ts, "theta_hat": th, "hessian": h, "finite_differences": fd }))?;
    Ok(report.with_checks(checks))
}

fn landscape_diag(a: &DiagArgs) -> CliResult<Report> {
    let (tree, _) = load(&a.tree, a.run.seed)?;
    let ds = deltas(&a.rbox, &[0.02, 0.01, 0.005]);
    let rbox = regime(&a.rbox, ds[0])?;
    let r =
        diag_scaling_experiment(&tree, &rbox, &ds, mode(a.mode, a.m, a.run.seed), estimate_point(a.at), a.run.seed)?;
    let checks = check_diag_scaling(&r);
    Ok(Report::new(r.csv(), &r)?.with_checks(checks))
}

fn landscape_offdiag(a: &OffDiagArgs) -> CliResult<Report> {
    let (tree, _) = load(&a.tree, a.run.seed)?;
    let delta = first_delta(&a.rbox)?;
    let rbox = regime(&a.rbox, delta)?;
    let r =
        offdiag_decay_experiment(&tree, &rbox, delta, mode(a.mode, a.m, a.run.seed), estimate_point(a.at), a.run.seed)?;
    let checks = check_offdiag(&r);
    Ok(Report::new(r.csv(), &r)?.with_checks(checks))
}

fn recon_tiers(a: &TierArgs) -> CliResult<Report> {
    let (tree, _) = load(&a.tree, a.run.seed)?;
    let ds = deltas(&a.rbox, &[0.04, 0.02, 0.01]);
    let rbox = regime(&a.rbox, ds[0])?;
    let cfg = ReconstructionConfig {
        node: a.node,
        parent: a.parent,
        m: a.m,
        seed: a.run.seed,
        deltas: ds,
        thresholds: TierThresholds {
            k_good: a.k_good,
            c_severe: a.c_severe,
            moderate_multiplier: a.moderate_multiplier,
        },
        estimate_at_truth: a.at == PointArg::Truth,
    };
    let rows = reconstruction_experiment(&tree, &rbox, &cfg)?;
    let slopes = tier_slopes(&rows);
    let mut csv = format!("{}\n", TierReport::csv_header());
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let checks = check_tiers(&slopes);
    Ok(Report::new(csv, &json!({ "rows": rows, "slopes": slopes }))?.with_checks(checks))
}

/// The lowest-id pair of edges at the largest edge distance.
fn farthest_pair(tree: &Tree) -> CliResult<(usize, usize)> {
    let mut best = None;
    for e in 0..tree.edge_count() {
        for f in e + 1..tree.edge_count() {
            let d = tree.edge_distance(e, f)?;
            if best.is_none_or(|(bd, _, _)| d > bd) {
                best = Some((d, e, f));
            }
        }
    }
    best.map(|(_, e, f)| (e, f)).ok_or_else(|| CliError::Config("the tree needs at least two edges".into()))
}

fn wterms(a: &WTermsArgs) -> CliResult<Report> {
    let (tree, _) = load(&a.tree, a.run.seed)?;
    let ds = deltas(&a.rbox, &[0.02, 0.01, 0.005]);
    let rbox = regime(&a.rbox, ds[0])?;
    let (e, f) = match (a.edge_e, a.edge_f) {
        (Some(e), Some(f)) => (e, f),
        _ => farthest_pair(&tree)?,
    };
    let cfg = WTierConfig {
        e,
        f,
        m: a.m,
        seed: a.run.seed,
        deltas: ds,
        search: SupSearch { grid_points: a.grid_points, refine: true },
        tail_constant: a.tail_constant,
    };
    let r = w_tier_experiment(&tree, &rbox, &cfg)?;
    for n in w_tier_notes(&r) {
        println!("  {n}");
    }
    let checks = check_w_tiers(&r);
    Ok(Report::new(r.csv(), &r)?.with_checks(checks))
}

fn steel(a: &SteelArgs) -> CliResult<Report> {
    let r = steel_example(a.grid_step)?;
    let checks = check_steel(&r);
    Ok(Report::new(r.csv(), &r)?.with_checks(checks))
}

fn selftest(_: &SelftestArgs) -> CliResult<bool> {
    let mut outcomes = vec![criterion_derivatives(100, 1)?];
    outcomes.extend(fast_criteria()?);
    let mut ok = true;
    for o in &outcomes {
        print!("{}", o.render());
        ok &= o.passed();
    }
    println!("selftest: {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}
