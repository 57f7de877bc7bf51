use serde::Serialize;

use entroscope::constants::closed_form::{
    gap_mf_perm, kappa_bl, kappa_mf_perm, kappa_mf_single, p_critical,
};
use entroscope::constants::verify::{
    conjecture_probe_families, conjecture_probe_gap, verify, verify_tensorization, VerifyOptions,
    VerifyParams,
};
use entroscope::constants::optimizer::restart_rng;
use entroscope::constants::{compute, ClosedForm, OptimizeOptions, Quantity};
use entroscope::decay::{
    check_envelope, default_times, dirac_density, evolve_with, pinsker_mixing_bound,
    random_density, MixingShape, Semigroup,
};
use entroscope::generators::BlockSystem;
use entroscope::permanent::{bound_check, correlation_check, fuzz_bound};
use entroscope::reduction::{monotonicity_report, octopus_probe, reduce, OctopusMode, OctopusOptions};
use entroscope::state_spaces::{
    mean_field_expand, HypergraphWeights, MeanFieldWeights, SpaceCaps, SpaceKind,
};
use entroscope::{Error, Result};

use crate::inputs::{load_graph, load_hypergraph, load_matrix, parse_list, parse_space};
use crate::json::{to_json, Json};
use crate::{
    Command, ConstantArgs, DecayArgs, Mode, OptArgs, Outcome, PermanentArgs, Probe, ReduceArgs,
    ReportArgs, Source, Start, TensorizeArgs, VerifyArgs,
};

/// Largest chain on which the exact mixing time is bisected.
const EXACT_MIXING_MAX_STATES: usize = 720;

pub fn run(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Gap(a) => constant(Quantity::Gap, a),
        Command::Kappa(a) => constant(Quantity::Kappa, a),
        Command::Lsi(a) => constant(Quantity::Lsi, a),
        Command::Mlsi(a) => constant(Quantity::Mlsi, a),
        Command::Verify(a) => verify_cmd(a),
        Command::Tensorize(a) => tensorize(a),
        Command::Conjecture(a) => conjecture(&a.probe),
        Command::Reduce(a) => reduce_cmd(a),
        Command::Permanent(a) => permanent(a),
        Command::Decay(a) => decay(a),
        Command::Report(a) => report_all(a),
    }
}

fn ok(results: impl Serialize, passed: bool, seed: Option<u64>) -> Result<Outcome> {
    Ok(Outcome {
        results: to_json(&results),
        passed,
        seed,
    })
}

impl OptArgs {
    fn options(&self) -> OptimizeOptions {
        OptimizeOptions {
            tol: self.tol,
            restarts: self.restarts,
            max_iters: self.max_iters,
            seed: self.seed,
        }
    }
}

/// The hypergraph behind a source, and its mean-field weights if given as such.
fn hypergraph(source: &Source, n: Option<usize>) -> Result<(HypergraphWeights, Option<MeanFieldWeights>)> {
    if let Some(path) = &source.graph {
        Ok((HypergraphWeights::from_graph(&load_graph(path)?)?, None))
    } else if let Some(path) = &source.hypergraph {
        Ok((load_hypergraph(path)?, None))
    } else if let Some(spec) = &source.mean_field {
        let n = n.ok_or_else(|| Error::Input("--mean-field needs --n".into()))?;
        let w = MeanFieldWeights::parse_spec(n, spec)?;
        Ok((mean_field_expand(&w), Some(w)))
    } else {
        Err(Error::Input("one of --graph, --hypergraph, --mean-field is required".into()))
    }
}

/// Closed form known for `q` on this mean-field instance, if any.
fn closed_form_for(q: Quantity, kind: SpaceKind, w: &MeanFieldWeights) -> Result<Option<(&'static str, f64)>> {
    let pairs_only = w.terms().all(|(l, _)| l == 2);
    Ok(match (q, kind) {
        (Quantity::Kappa, SpaceKind::SingleParticle { .. }) => Some(("kappa-mf-single", kappa_mf_single(w))),
        (Quantity::Gap, SpaceKind::Permutations { .. }) => Some(("gap-mf-perm", gap_mf_perm(w))),
        (Quantity::Kappa, SpaceKind::Permutations { .. }) => Some(("kappa-mf-perm", kappa_mf_perm(w))),
        (Quantity::Kappa, SpaceKind::Slice { n, r }) if pairs_only => {
            Some(("kappa-bl", w.weight(2) * kappa_bl(n, r)?))
        }
        _ => None,
    })
}

fn constant(q: Quantity, a: &ConstantArgs) -> Result<Outcome> {
    let (h, mf) = hypergraph(&a.source, a.n)?;
    let kind = parse_space(&a.space, h.n())?;
    let sys = BlockSystem::on(kind, &h, SpaceCaps::default())?;
    let mut report = compute(&sys, q, &a.opt.options())?;
    if let Some(w) = &mf {
        if let Some((name, value)) = closed_form_for(q, kind, w)? {
            report = report.with_closed_form(name, value);
        }
    }
    let seed = (q != Quantity::Gap).then_some(a.opt.seed);
    ok(report, true, seed)
}

fn verify_cmd(a: &VerifyArgs) -> Result<Outcome> {
    let name = ClosedForm::parse(&a.name)?;
    let w = match &a.w {
        Some(spec) => Some(MeanFieldWeights::parse_spec(a.n, spec)?.terms().collect()),
        None => None,
    };
    let colors = a.colors.as_deref().map(parse_list).transpose()?;
    let params = VerifyParams {
        n: a.n,
        ell: a.ell,
        r: a.r,
        w,
        colors,
    };
    let opts = VerifyOptions {
        tol: a.tol,
        optimize: OptimizeOptions {
            restarts: a.restarts,
            max_iters: a.max_iters,
            seed: a.seed,
            ..OptimizeOptions::default()
        },
    };
    let report = verify(name, params, &opts)?;
    let passed = report.passed;
    ok(report, passed, Some(a.seed))
}

fn tensorize(a: &TensorizeArgs) -> Result<Outcome> {
    let h = load_hypergraph(&a.hypergraph)?;
    let report = verify_tensorization(&h, a.max_n, a.kappa_max_states, &a.opt.options())?;
    let passed = report.passed;
    ok(report, passed, Some(a.opt.seed))
}

/// Probes record slacks and never fail.
fn conjecture(p: &Probe) -> Result<Outcome> {
    match p {
        Probe::Gap { source, n } => {
            let (h, _) = hypergraph(source, *n)?;
            ok(conjecture_probe_gap(&h)?, true, None)
        }
        Probe::Octopus {
            graph,
            node,
            mode,
            samples,
            max_n,
            opt,
        } => {
            let g = load_graph(graph)?;
            let mode = match mode {
                Mode::Variance => OctopusMode::Variance,
                Mode::Entropy => OctopusMode::Entropy,
            };
            let opts = OctopusOptions {
                samples: *samples,
                max_n: *max_n,
                optimize: opt.options(),
            };
            ok(octopus_probe(&g, *node, mode, &opts)?, true, Some(opt.seed))
        }
        Probe::CyclePath { n_max, opt } => {
            ok(conjecture_probe_families(*n_max, &opt.options())?, true, Some(opt.seed))
        }
    }
}

fn reduce_cmd(a: &ReduceArgs) -> Result<Outcome> {
    let g = load_graph(&a.graph)?;
    let step = reduce(&g, a.node)?;
    if !a.report {
        return ok(step, true, None);
    }
    let report = monotonicity_report(&g, a.node, &a.opt.options())?;
    let passed = report.passed;
    let results = Json::Object(vec![
        ("reduction".into(), to_json(&step)),
        ("report".into(), to_json(&report)),
    ]);
    Ok(Outcome {
        results,
        passed,
        seed: Some(a.opt.seed),
    })
}

fn permanent(a: &PermanentArgs) -> Result<Outcome> {
    let mut fields = Vec::new();
    let mut passed = true;
    if let Some(path) = &a.matrix {
        let m = load_matrix(path)?;
        let p = if a.p == "critical" {
            p_critical(m.n().max(2))?
        } else {
            a.p.parse()
                .map_err(|_| Error::Input(format!("--p must be a number or \"critical\", got {:?}", a.p)))?
        };
        let bound = bound_check(&m, p)?;
        passed &= bound.holds;
        fields.push(("bound".to_string(), to_json(&bound)));
        if a.correlation {
            let c = correlation_check(&m.rows())?;
            passed &= c.holds;
            fields.push(("correlation".into(), to_json(&c)));
        }
    }
    if let Some(count) = a.fuzz {
        let fuzz = fuzz_bound(count, a.fuzz_max_n, &[1.0, 1.5, 2.0, 3.0], true, a.seed)?;
        passed &= fuzz.violations == 0;
        fields.push(("fuzz".into(), to_json(&fuzz)));
    }
    Ok(Outcome {
        results: Json::Object(fields),
        passed,
        seed: a.fuzz.map(|_| a.seed),
    })
}

#[derive(Serialize)]
struct KappaSource {
    value: f64,
    /// `closed_form:<name>`, `optimizer` or `given`.
    source: String,
}

fn decay(a: &DecayArgs) -> Result<Outcome> {
    let (h, mf) = hypergraph(&a.source, a.n)?;
    let kind = parse_space(&a.space, h.n())?;
    let sys = BlockSystem::on(kind, &h, SpaceCaps::default())?;
    let l = sys.generator()?;
    let sg = Semigroup::new(&l)?;
    let gap = sg.spectrum().values.get(1).copied().unwrap_or(0.0);
    if gap <= 0.0 {
        return Err(Error::Domain("decay needs an ergodic chain".into()));
    }
    let times = match a.t0 {
        Some(t0) if t0 > 0.0 => std::iter::once(0.0)
            .chain((0..a.steps).map(|k| t0 * 2f64.powi(k as i32)))
            .collect(),
        Some(t0) => return Err(Error::Input(format!("--t0 must be positive, got {t0}"))),
        None => default_times(gap, a.steps),
    };
    let s = sys.n_states();
    let f0 = match a.f0 {
        Start::Dirac => dirac_density(s, 0),
        Start::Random => random_density(&mut restart_rng(a.opt.seed, 0), s),
    };
    let kappa = if a.kappa == "auto" {
        match mf.as_ref().map(|w| closed_form_for(Quantity::Kappa, kind, w)).transpose()?.flatten() {
            Some((name, value)) => KappaSource {
                value,
                source: format!("closed_form:{name}"),
            },
            None => KappaSource {
                value: compute(&sys, Quantity::Kappa, &a.opt.options())?.value,
                source: "optimizer".into(),
            },
        }
    } else {
        let value: f64 = a
            .kappa
            .parse()
            .map_err(|_| Error::Input(format!("--kappa must be \"auto\" or a number, got {:?}", a.kappa)))?;
        KappaSource {
            value,
            source: "given".into(),
        }
    };
    let mut curve = evolve_with(&sg, &f0, &times)?;
    let envelope = check_envelope(&mut curve, kappa.value);
    let shape = match kind {
        SpaceKind::SingleParticle { n } => Some(MixingShape::Synchronous { particles: 1, vertices: n }),
        SpaceKind::Product { n, particles } => Some(MixingShape::Synchronous { particles, vertices: n }),
        SpaceKind::Permutations { n } => Some(MixingShape::Permutations { n }),
        SpaceKind::Slice { .. } => None,
    };
    let mixing = match shape {
        Some(shape) if kappa.value > 0.0 => Some(pinsker_mixing_bound(
            kappa.value,
            shape,
            a.mixing_constant,
            (s <= EXACT_MIXING_MAX_STATES).then_some(&l),
        )?),
        _ => None,
    };
    let passed = envelope.holds && curve.conserved;
    let results = Json::Object(vec![
        ("space".into(), to_json(&kind)),
        ("gap".into(), Json::Float(gap)),
        ("kappa".into(), to_json(&kappa)),
        ("curve".into(), to_json(&curve)),
        ("envelope".into(), to_json(&envelope)),
        ("mixing".into(), to_json(&mixing)),
    ]);
    Ok(Outcome {
        results,
        passed,
        seed: matches!(a.f0, Start::Random).then_some(a.opt.seed),
    })
}

#[derive(Serialize)]
struct SweepRow {
    name: ClosedForm,
    params: VerifyParams,
    computed: Option<f64>,
    expected: Option<f64>,
    bracket: Option<[f64; 2]>,
    relative_error: Option<f64>,
    tolerance: Option<f64>,
    passed: bool,
    error: Option<String>,
}

fn sweep_cases(n_max: usize) -> Vec<(ClosedForm, VerifyParams)> {
    let base = |n| VerifyParams {
        n,
        ..VerifyParams::default()
    };
    let with_ell = |n, ell| VerifyParams {
        ell: Some(ell),
        ..base(n)
    };
    let mut cases = Vec::new();
    for n in 2..=n_max {
        cases.push((ClosedForm::KappaKn, base(n)));
        cases.push((ClosedForm::LsiKn, base(n)));
        cases.push((ClosedForm::PCritical, base(n)));
        for ell in 2..=n {
            cases.push((ClosedForm::KappaMfSingle, with_ell(n, ell)));
            if n <= 6 {
                cases.push((ClosedForm::GapMfPerm, with_ell(n, ell)));
            }
            if n <= 5 {
                cases.push((ClosedForm::KappaMfPerm, with_ell(n, ell)));
            }
        }
        for r in 1..n {
            cases.push((
                ClosedForm::KappaBl,
                VerifyParams {
                    r: Some(r),
                    ..base(n)
                },
            ));
        }
        if n >= 3 {
            cases.push((ClosedForm::StarBounds, base(n)));
            cases.push((ClosedForm::KappaLowerFromGap, base(n)));
            cases.push((ClosedForm::DiracPermUpper, base(n)));
        }
        if (4..=5).contains(&n) {
            cases.push((ClosedForm::StarPermBounds, base(n)));
        }
    }
    cases
}

fn report_all(a: &ReportArgs) -> Result<Outcome> {
    if a.n_max < 2 {
        return Err(Error::Input("--n-max must be at least 2".into()));
    }
    let opts = VerifyOptions {
        tol: None,
        optimize: a.opt.options(),
    };
    let mut rows = Vec::new();
    for (name, params) in sweep_cases(a.n_max) {
        let row = match verify(name, params.clone(), &opts) {
            Ok(r) => SweepRow {
                name,
                params,
                computed: Some(r.computed),
                expected: r.expected,
                bracket: r.bracket,
                relative_error: r.relative_error,
                tolerance: Some(r.tolerance),
                passed: r.passed,
                error: None,
            },
            Err(e) => SweepRow {
                name,
                params,
                computed: None,
                expected: None,
                bracket: None,
                relative_error: None,
                tolerance: None,
                passed: false,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    let results = Json::Object(vec![
        ("cases".into(), Json::Int(rows.len() as i128)),
        ("failed".into(), Json::Int(failed as i128)),
        ("rows".into(), to_json(&rows)),
    ]);
    Ok(Outcome {
        results,
        passed: failed == 0,
        seed: Some(a.opt.seed),
    })
}
