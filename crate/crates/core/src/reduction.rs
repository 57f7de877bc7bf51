//! Electric network reduction at a node, the monotonicity of the four
//! constants under it, and the octopus inequality probe on permutations.

use rand::Rng;
use serde::Serialize;

use crate::constants::optimizer::restart_rng;
use crate::constants::{
    graph_constant, minimize_ratio, Denominator, OptimizeOptions, Quantity, RatioProblem,
};
use crate::error::{Error, Result};
use crate::functionals::mean;
use crate::generators::{BlockSystem, DirichletEvaluator, Functional};
use crate::state_spaces::{build_space_with_caps, SpaceCaps, SpaceKind, VertexSet, WeightedGraph};

/// `G ↦ G_x`: remove `x` and add `c*_yz = c_xy c_xz / Σ_w c_xw` to every
/// remaining pair.
#[derive(Clone, Debug, Serialize)]
pub struct ReductionStep {
    pub before: WeightedGraph,
    pub node: usize,
    pub after: WeightedGraph,
    /// `c*` in the labels of `after`, zero diagonal.
    pub star_weights: Vec<Vec<f64>>,
    /// `kept[i]` is the vertex of `before` that became vertex `i` of `after`.
    pub kept: Vec<usize>,
}

impl ReductionStep {
    /// `Σ_{y<z} 2c*_yz + Σ_y c_xy² / Σ_w c_xw`, which equals `Σ_y c_xy`.
    pub fn star_total(&self) -> f64 {
        let d = self.before.degree(self.node);
        let pairs: f64 = self.star_weights.iter().flatten().sum();
        let diag: f64 = self
            .kept
            .iter()
            .map(|&y| self.before.weight(self.node, y).powi(2) / d)
            .sum();
        pairs + diag
    }
}

pub fn reduce(g: &WeightedGraph, x: usize) -> Result<ReductionStep> {
    let n = g.n();
    if x >= n {
        return Err(Error::domain(format!("node {x} out of range for n={n}")));
    }
    if n < 3 {
        return Err(Error::domain("reduction needs at least 3 vertices"));
    }
    let d = g.degree(x);
    if d <= 0.0 {
        return Err(Error::domain(format!("node {x} is isolated")));
    }
    let kept: Vec<usize> = (0..n).filter(|&y| y != x).collect();
    let m = kept.len();
    let mut star = vec![vec![0.0; m]; m];
    let mut after = vec![vec![0.0; m]; m];
    for (i, &y) in kept.iter().enumerate() {
        for (j, &z) in kept.iter().enumerate() {
            if i != j {
                star[i][j] = g.weight(x, y) * g.weight(x, z) / d;
                after[i][j] = g.weight(y, z) + star[i][j];
            }
        }
    }
    // keep the matrix exactly symmetric
    for i in 0..m {
        for j in 0..i {
            after[i][j] = after[j][i];
            star[i][j] = star[j][i];
        }
    }
    Ok(ReductionStep {
        before: g.clone(),
        node: x,
        after: WeightedGraph::from_matrix(after)?,
        star_weights: star,
        kept,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BeforeAfter {
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub node: usize,
    pub is_leaf: bool,
    pub gap: BeforeAfter,
    pub lsi: BeforeAfter,
    pub mlsi: BeforeAfter,
    pub kappa: BeforeAfter,
    pub gap_monotone: bool,
    pub lsi_monotone: bool,
    pub mlsi_monotone: bool,
    /// `κ(G_x) ≥ log 2 · κ(G)`.
    pub kappa_log2_bound: bool,
    /// `κ(G_x) ≥ κ(G)`, asserted for leaves only.
    pub kappa_monotone: bool,
    pub kappa_leaf_check: Option<bool>,
    pub passed: bool,
}

/// Relative slack allowed on optimizer-computed constants.
const MONO_TOL: f64 = 1e-6;

fn at_least(a: f64, b: f64, tol: f64) -> bool {
    a >= b - tol * b.abs().max(1.0)
}

pub fn monotonicity_report(g: &WeightedGraph, x: usize, opts: &OptimizeOptions) -> Result<MonotonicityReport> {
    let step = reduce(g, x)?;
    let pair = |q: Quantity| -> Result<BeforeAfter> {
        Ok(BeforeAfter {
            before: graph_constant(&step.before, q, opts)?.value,
            after: graph_constant(&step.after, q, opts)?.value,
        })
    };
    let gap = pair(Quantity::Gap)?;
    let lsi = pair(Quantity::Lsi)?;
    let mlsi = pair(Quantity::Mlsi)?;
    let kappa = pair(Quantity::Kappa)?;
    let is_leaf = g.is_leaf(x);
    let gap_monotone = at_least(gap.after, gap.before, 1e-9);
    let lsi_monotone = at_least(lsi.after, lsi.before, MONO_TOL);
    let mlsi_monotone = at_least(mlsi.after, mlsi.before, MONO_TOL);
    let kappa_log2_bound = at_least(kappa.after, std::f64::consts::LN_2 * kappa.before, MONO_TOL);
    let kappa_monotone = at_least(kappa.after, kappa.before, MONO_TOL);
    let kappa_leaf_check = is_leaf.then_some(kappa_monotone);
    Ok(MonotonicityReport {
        node: x,
        is_leaf,
        gap,
        lsi,
        mlsi,
        kappa,
        gap_monotone,
        lsi_monotone,
        mlsi_monotone,
        kappa_log2_bound,
        kappa_monotone,
        kappa_leaf_check,
        passed: gap_monotone
            && lsi_monotone
            && mlsi_monotone
            && kappa_log2_bound
            && kappa_leaf_check.unwrap_or(true),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OctopusMode {
    Variance,
    Entropy,
}

#[derive(Clone, Copy, Debug)]
pub struct OctopusOptions {
    pub samples: usize,
    pub max_n: usize,
    pub optimize: OptimizeOptions,
}

impl Default for OctopusOptions {
    fn default() -> Self {
        OctopusOptions {
            samples: 1000,
            max_n: 5,
            optimize: OptimizeOptions {
                restarts: 64,
                max_iters: 2000,
                ..OptimizeOptions::default()
            },
        }
    }
}

/// The two sides of the octopus inequality on permutations:
/// `LHS = Σ_{y<z≠x} c*_yz μ[F_yz]`, `RHS = Σ_y c_xy μ[F_xy]`.
#[derive(Clone, Debug)]
pub struct OctopusSides {
    pub n_states: usize,
    lhs: DirichletEvaluator,
    rhs: DirichletEvaluator,
}

impl OctopusSides {
    pub fn new(g: &WeightedGraph, x: usize, max_n: usize) -> Result<Self> {
        let step = reduce(g, x)?;
        let n = g.n();
        let caps = SpaceCaps {
            max_perm_n: max_n,
            ..SpaceCaps::default()
        };
        let space = build_space_with_caps(SpaceKind::Permutations { n }, caps)?;
        let mut lhs = Vec::new();
        for (i, &y) in step.kept.iter().enumerate() {
            for (j, &z) in step.kept.iter().enumerate().skip(i + 1) {
                lhs.push((VertexSet::pair(y, z), step.star_weights[i][j]));
            }
        }
        let rhs: Vec<_> = (0..n)
            .filter(|&y| y != x)
            .map(|y| (VertexSet::pair(x, y), g.weight(x, y)))
            .collect();
        Ok(OctopusSides {
            n_states: space.len(),
            lhs: BlockSystem::from_blocks(space.clone(), &lhs)?.evaluator(),
            rhs: BlockSystem::from_blocks(space, &rhs)?.evaluator(),
        })
    }

    /// `(LHS, RHS)` under `Var` or `Ent`.
    pub fn eval(&self, mode: OctopusMode, f: &[f64]) -> Result<(f64, f64)> {
        let func = match mode {
            OctopusMode::Variance => Functional::Variance,
            OctopusMode::Entropy => Functional::Entropy,
        };
        Ok((self.lhs.dirichlet(func, f)?, self.rhs.dirichlet(func, f)?))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OctopusReport {
    pub mode: OctopusMode,
    pub n: usize,
    pub node: usize,
    pub samples: usize,
    /// `min (RHS − LHS)` over sampled and optimized `f` with `μ(f) = 1`.
    pub min_slack: f64,
    /// `inf RHS / LHS` found; the inequality reads `≥ 1`.
    pub worst_ratio: f64,
    /// Asserted outcome; `None` in entropy mode, where the inequality is open.
    pub holds: Option<bool>,
    /// Entropy mode: `min (RHS / log 2 − LHS)`, guaranteed nonnegative.
    pub weak_min_slack: Option<f64>,
    pub weak_holds: Option<bool>,
    pub worst_f: Vec<f64>,
}

fn random_density(rng: &mut impl Rng, s: usize) -> Vec<f64> {
    let sigma = [0.3, 1.0, 2.5][rng.gen_range(0..3)];
    let sparse = rng.gen_bool(0.2);
    let mut f: Vec<f64> = (0..s)
        .map(|_| {
            if sparse && rng.gen_bool(0.5) {
                0.0
            } else {
                (sigma * (rng.gen::<f64>() * 2.0 - 1.0) * 1.7).exp()
            }
        })
        .collect();
    if f.iter().all(|&v| v == 0.0) {
        f[0] = 1.0;
    }
    let m = mean(&f);
    f.iter_mut().for_each(|v| *v /= m);
    f
}

pub fn octopus_probe(g: &WeightedGraph, x: usize, mode: OctopusMode, opts: &OctopusOptions) -> Result<OctopusReport> {
    let sides = OctopusSides::new(g, x, opts.max_n)?;
    let s = sides.n_states;
    let ln2 = std::f64::consts::LN_2;
    let mut rng = restart_rng(opts.optimize.seed, usize::MAX);
    let mut min_slack = f64::INFINITY;
    let mut worst_ratio = f64::INFINITY;
    let mut weak_min = f64::INFINITY;
    let mut worst_f = vec![1.0; s];
    let mut consider = |f: Vec<f64>, lhs: f64, rhs: f64| {
        let slack = rhs - lhs;
        if slack < min_slack {
            min_slack = slack;
        }
        weak_min = weak_min.min(rhs / ln2 - lhs);
        if lhs > 0.0 && rhs / lhs < worst_ratio {
            worst_ratio = rhs / lhs;
            worst_f = f;
        }
    };
    for k in 0..opts.samples {
        let f = if k < s.min(opts.samples / 4) {
            let mut d = vec![0.0; s];
            d[k] = s as f64;
            d
        } else {
            random_density(&mut rng, s)
        };
        let (l, r) = sides.eval(mode, &f)?;
        consider(f, l, r);
    }
    if mode == OctopusMode::Entropy {
        let problem = RatioProblem {
            numerator: sides.rhs.clone(),
            functional: Functional::Entropy,
            denominator: Denominator::Dirichlet(Functional::Entropy, sides.lhs.clone()),
            linearization: None,
        };
        let res = minimize_ratio(&problem, &opts.optimize);
        if res.value.is_finite() {
            let m = mean(&res.minimizer);
            let f: Vec<f64> = res.minimizer.iter().map(|v| v / m).collect();
            let (l, r) = sides.eval(mode, &f)?;
            consider(f, l, r);
        }
    }
    let (holds, weak_min_slack, weak_holds) = match mode {
        OctopusMode::Variance => (Some(min_slack >= -1e-12), None, None),
        OctopusMode::Entropy => (None, Some(weak_min), Some(weak_min >= -1e-12)),
    };
    Ok(OctopusReport {
        mode,
        n: g.n(),
        node: x,
        samples: opts.samples,
        min_slack,
        worst_ratio,
        holds,
        weak_min_slack,
        weak_holds,
        worst_f,
    })
}
