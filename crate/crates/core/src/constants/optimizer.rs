//! Multistart fractional programming for `inf_f N(f)/D(f)`.
//!
//! Each restart runs a Dinkelbach loop: with `κ_k = N(f_k)/D(f_k)` fixed it
//! takes one Armijo-backtracked Barzilai–Borwein step on `N − κ_k D`, then
//! updates `κ_k`. Since `N − κ_k D` has gradient `D·∇(N/D)` at `f_k`, the step
//! is a projected gradient step on the ratio restricted to the normalization
//! sphere. Interior descent is complemented by a closed candidate set (Dirac
//! masses, two-valued profiles, the near-constant limit) evaluated directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::functionals::{bregman, entropy, variance};
use crate::generators::{DirichletEvaluator, Functional};

/// Lower floor for `f` under the exponential parametrization.
pub const MLSI_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub enum Denominator {
    Entropy,
    Variance,
    Dirichlet(Functional, DirichletEvaluator),
}

/// Near-constant limit of the ratio: `f = 1 + εv` as `ε → 0`.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub value: f64,
    pub direction: Vec<f64>,
}

/// `inf_f Σ_A α_A μ[F_A f] / D(f)` over nonnegative non-constant `f`.
#[derive(Clone, Debug)]
pub struct RatioProblem {
    pub numerator: DirichletEvaluator,
    pub functional: Functional,
    pub denominator: Denominator,
    pub linearization: Option<Linearization>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OptimizeOptions {
    pub tol: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tol: 1e-9,
            restarts: 32,
            max_iters: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Candidate {
    Dirac { state: usize },
    TwoValued { state: usize, t: f64 },
    Linearization,
    Restart { index: usize },
}

impl Candidate {
    fn is_analytic(&self) -> bool {
        !matches!(self, Candidate::Restart { .. })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartOutcome {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioResult {
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub winner: Candidate,
    /// Best value among the analytic candidates alone.
    pub best_analytic: f64,
    pub restarts: Vec<RestartOutcome>,
    pub converged: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Param {
    /// `f = g²`
    Square,
    /// `f = e^u`
    Exp,
}

impl RatioProblem {
    pub fn n_states(&self) -> usize {
        self.numerator.n_states()
    }

    fn param(&self) -> Param {
        let cov_den = matches!(self.denominator, Denominator::Dirichlet(Functional::CovFlogf, _));
        if self.functional == Functional::CovFlogf || cov_den {
            Param::Exp
        } else {
            Param::Square
        }
    }

    fn denominator_value(&self, f: &[f64]) -> f64 {
        match &self.denominator {
            Denominator::Entropy => entropy(f),
            Denominator::Variance => variance(f),
            Denominator::Dirichlet(func, ev) => ev.eval(*func, f),
        }
    }

    /// `N(f)/D(f)` through the public functionals; `+∞` when `D(f) = 0`.
    pub fn ratio(&self, f: &[f64]) -> f64 {
        let d = self.denominator_value(f);
        if d <= 0.0 {
            return f64::INFINITY;
        }
        self.numerator.eval(self.functional, f) / d
    }

    /// Numerator and denominator at `f = g²` with gradients in `g`.
    fn eval_square(&self, g: &[f64], gn: &mut [f64], gd: &mut [f64]) -> (f64, f64) {
        gn.fill(0.0);
        gd.fill(0.0);
        let num = self.numerator.eval_grad_square(self.functional, g, gn);
        let s = g.len() as f64;
        let den = match &self.denominator {
            Denominator::Entropy => {
                let m = g.iter().map(|x| x * x).sum::<f64>() / s;
                let mut e = 0.0;
                for (i, &gi) in g.iter().enumerate() {
                    let fi = gi * gi;
                    e += bregman(fi, m);
                    if gi != 0.0 {
                        gd[i] = 2.0 * gi * (fi / m).ln() / s;
                    }
                }
                e / s
            }
            Denominator::Variance => {
                let m = g.iter().map(|x| x * x).sum::<f64>() / s;
                let mut v = 0.0;
                for (i, &gi) in g.iter().enumerate() {
                    let d = gi * gi - m;
                    v += d * d;
                    gd[i] = 4.0 * gi * d / s;
                }
                v / s
            }
            Denominator::Dirichlet(func, ev) => ev.eval_grad_square(*func, g, gd),
        };
        (num, den)
    }

    /// Same at `f = e^u` (passed as `f`), gradients in `u`.
    fn eval_exp(&self, f: &[f64], gn: &mut [f64], gd: &mut [f64]) -> (f64, f64) {
        let g: Vec<f64> = f.iter().map(|x| x.sqrt()).collect();
        let out = self.eval_square(&g, gn, gd);
        for i in 0..f.len() {
            gn[i] *= 0.5 * g[i];
            gd[i] *= 0.5 * g[i];
        }
        out
    }

    fn dirac_ratios(&self) -> Option<Vec<f64>> {
        if self.functional == Functional::CovFlogf {
            return None;
        }
        let s = self.n_states();
        let num = self.numerator.dirac_values(self.functional);
        let den: Vec<f64> = match &self.denominator {
            Denominator::Entropy => vec![(s as f64).ln() / s as f64; s],
            Denominator::Variance => vec![(1.0 - 1.0 / s as f64) / s as f64; s],
            Denominator::Dirichlet(Functional::CovFlogf, _) => return None,
            Denominator::Dirichlet(func, ev) => ev.dirac_values(*func),
        };
        Some(
            num.iter()
                .zip(&den)
                .map(|(n, d)| if *d > 0.0 { n / d } else { f64::INFINITY })
                .collect(),
        )
    }
}

fn two_valued(s: usize, state: usize, t: f64) -> Vec<f64> {
    let mut f = vec![1.0 - t; s];
    f[state] += t * s as f64;
    f
}

/// Grid scan then golden-section refinement of `t ↦ R(1 + t(S δ − 1))`.
fn line_search_two_valued(p: &RatioProblem, state: usize, floor: f64) -> (f64, f64) {
    let s = p.n_states();
    let lo = -1.0 / (s as f64 - 1.0) * (1.0 - floor);
    let hi = 1.0 - floor;
    let eval = |t: f64| p.ratio(&two_valued(s, state, t));
    let grid: Vec<f64> = (0..=48)
        .map(|k| lo + (hi - lo) * k as f64 / 48.0)
        .filter(|t| t.abs() > 1e-9)
        .collect();
    let (mut bi, mut bv) = (0, f64::INFINITY);
    for (i, &t) in grid.iter().enumerate() {
        let v = eval(t);
        if v < bv {
            bi = i;
            bv = v;
        }
    }
    if !bv.is_finite() {
        return (grid[bi], bv);
    }
    let mut a = if bi > 0 { grid[bi - 1] } else { grid[bi] };
    let mut b = if bi + 1 < grid.len() { grid[bi + 1] } else { grid[bi] };
    if a < 0.0 && b > 0.0 {
        // never bracket across the constant function
        if grid[bi] < 0.0 {
            b = -1e-9;
        } else {
            a = 1e-9;
        }
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..80 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    let (t, v) = if fc < fd { (c, fc) } else { (d, fd) };
    if v < bv {
        (t, v)
    } else {
        (grid[bi], bv)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent, reproducible stream for restart `k`.
pub fn restart_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(k as u64)))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; adequate for start points.
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

struct Descent<'a> {
    p: &'a RatioProblem,
    param: Param,
    tol: f64,
    max_iters: usize,
    /// Best value known before the restart starts; used to drop hopeless runs.
    incumbent: f64,
}

struct DescentResult {
    f: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    residual: f64,
}

impl Descent<'_> {
    /// Maps the parameter to a normalized density and back-normalizes the parameter.
    fn normalize(&self, x: &mut [f64]) -> Vec<f64> {
        let s = x.len() as f64;
        match self.param {
            Param::Square => {
                let m = (x.iter().map(|v| v * v).sum::<f64>() / s).sqrt();
                x.iter_mut().for_each(|v| *v /= m);
                x.iter().map(|v| v * v).collect()
            }
            Param::Exp => {
                let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let m = x.iter().map(|v| (v - mx).exp()).sum::<f64>() / s;
                let shift = mx + m.ln();
                let floor = MLSI_FLOOR.ln();
                x.iter_mut().for_each(|v| *v = (*v - shift).max(floor));
                x.iter().map(|v| v.exp()).collect()
            }
        }
    }

    /// Value and gradient of the ratio in the parameter.
    fn value_grad(&self, x: &[f64], f: &[f64], grad: &mut [f64], gd: &mut [f64]) -> f64 {
        let (num, den) = match self.param {
            Param::Square => self.p.eval_square(x, grad, gd),
            Param::Exp => self.p.eval_exp(f, grad, gd),
        };
        if den <= 0.0 || !num.is_finite() {
            return f64::INFINITY;
        }
        let r = num / den;
        for i in 0..grad.len() {
            grad[i] = (grad[i] - r * gd[i]) / den;
        }
        if self.param == Param::Exp {
            let floor = MLSI_FLOOR.ln() + 1e-9;
            for i in 0..grad.len() {
                if x[i] <= floor && grad[i] > 0.0 {
                    grad[i] = 0.0;
                }
            }
        }
        r
    }

    fn run(&self, mut x: Vec<f64>) -> DescentResult {
        let n = x.len();
        let mut f = self.normalize(&mut x);
        let mut grad = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut r = self.value_grad(&x, &f, &mut grad, &mut scratch);
        let mut step = 1.0 / grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-12) * 0.1;
        let mut quiet = 0;
        let mut residual = f64::INFINITY;
        let mut window_start = r;
        let mut iterations = 0;
        let mut converged = false;
        let mut trial_grad = vec![0.0; n];
        while iterations < self.max_iters {
            iterations += 1;
            if !r.is_finite() {
                break;
            }
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            if g2.sqrt() <= 1e-14 * r.abs().max(1.0) {
                converged = true;
                residual = 0.0;
                break;
            }
            // Armijo backtracking on the ratio along the BB step.
            let mut accepted = None;
            let mut t = step;
            for _ in 0..40 {
                let mut xn: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - t * g).collect();
                let fnew = self.normalize(&mut xn);
                if self.param == Param::Square && entropy(&fnew) < 1e-300 {
                    t *= 0.5;
                    continue;
                }
                let rn = self.value_grad(&xn, &fnew, &mut trial_grad, &mut scratch);
                if rn <= r - 1e-4 * t * g2 {
                    accepted = Some((xn, fnew, rn));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, fnew, rn)) = accepted else {
                // no representable descent left
                converged = true;
                residual = 0.0;
                break;
            };
            let (mut sy, mut ss) = (0.0, 0.0);
            for i in 0..n {
                let si = xn[i] - x[i];
                let yi = trial_grad[i] - grad[i];
                sy += si * yi;
                ss += si * si;
            }
            step = if sy > 0.0 { (ss / sy).min(1e6) } else { t * 2.0 };
            residual = r - rn;
            x = xn;
            f = fnew;
            std::mem::swap(&mut grad, &mut trial_grad);
            r = rn;
            if residual <= self.tol * r.abs().max(1.0) {
                quiet += 1;
                if quiet >= 5 {
                    converged = true;
                    break;
                }
            } else {
                quiet = 0;
            }
            if iterations % 100 == 0 {
                // At the recent rate of progress, could this run still beat the incumbent?
                let progress = window_start - r;
                window_start = r;
                if r - self.incumbent > 50.0 * progress && r > self.incumbent * (1.0 + 1e-9) {
                    break;
                }
            }
            if self.param == Param::Square && entropy(&f) < 1e-13 {
                // drifted onto the constant function: the limit candidate covers this
                break;
            }
        }
        DescentResult {
            value: self.p.ratio(&f),
            f,
            iterations,
            converged,
            residual,
        }
    }
}

pub fn minimize_ratio(p: &RatioProblem, opts: &OptimizeOptions) -> RatioResult {
    let s = p.n_states();
    let param = p.param();
    let floor = if param == Param::Exp { MLSI_FLOOR } else { 0.0 };
    let mut flags = Vec::new();
    let mut cands: Vec<(Candidate, f64, Vec<f64>)> = Vec::new();

    // Dirac masses, ranked; their two-valued relaxations.
    let dirac = p.dirac_ratios();
    let mut order: Vec<usize> = (0..s).collect();
    if let Some(d) = &dirac {
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
        let best = order[0];
        let mut fd = vec![0.0; s];
        fd[best] = s as f64;
        cands.push((Candidate::Dirac { state: best }, d[best], fd));
    } else {
        let ent = p.numerator.dirac_values(Functional::Entropy);
        order.sort_by(|&a, &b| ent[a].total_cmp(&ent[b]).then(a.cmp(&b)));
        flags.push("dirac_infinite".to_string());
    }
    for &state in order.iter().take(4) {
        let (t, v) = line_search_two_valued(p, state, floor);
        if v.is_finite() {
            let f = two_valued(s, state, t);
            cands.push((Candidate::TwoValued { state, t }, p.ratio(&f), f));
        }
    }
    if let Some(lin) = &p.linearization {
        let amax = lin.direction.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        let eps = 1e-3 / amax;
        let f: Vec<f64> = lin.direction.iter().map(|v| 1.0 + eps * v).collect();
        cands.push((Candidate::Linearization, lin.value, f));
    }

    let best_analytic = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let seed_point = cands
        .iter()
        .filter(|c| c.1.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|c| c.2.clone());

    let descent = Descent {
        p,
        param,
        tol: opts.tol,
        max_iters: opts.max_iters,
        incumbent: best_analytic,
    };
    let outcomes: Vec<DescentResult> = (0..opts.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = restart_rng(opts.seed, k);
            let x0: Vec<f64> = match (&seed_point, k < opts.restarts / 4) {
                (Some(c), true) => {
                    let theta = 0.05 + 0.5 * rng.gen::<f64>();
                    (0..s)
                        .map(|i| {
                            let noise = (0.7 * standard_normal(&mut rng)).exp();
                            let fi = (1.0 - theta) * c[i] + theta * noise;
                            to_param(param, fi.max(floor))
                        })
                        .collect()
                }
                _ => {
                    let sigma = [0.5, 1.0, 2.0, 3.0][k % 4];
                    (0..s)
                        .map(|_| to_param(param, (sigma * standard_normal(&mut rng)).exp()))
                        .collect()
                }
            };
            descent.run(x0)
        })
        .collect();

    let mut restarts = Vec::with_capacity(outcomes.len());
    for (k, o) in outcomes.into_iter().enumerate() {
        restarts.push(RestartOutcome {
            value: o.value,
            iterations: o.iterations,
            converged: o.converged,
            residual: o.residual,
        });
        cands.push((Candidate::Restart { index: k }, o.value, o.f));
    }

    let (mut wi, mut wv) = (usize::MAX, f64::INFINITY);
    for (i, c) in cands.iter().enumerate() {
        if c.1 < wv {
            wi = i;
            wv = c.1;
        }
    }
    if wi == usize::MAX {
        flags.push("no_finite_candidate".to_string());
        return RatioResult {
            value: f64::INFINITY,
            minimizer: vec![1.0; s],
            winner: Candidate::Linearization,
            best_analytic,
            restarts,
            converged: false,
            flags,
        };
    }
    // Prefer an analytic candidate when it ties with the winner.
    if !cands[wi].0.is_analytic() {
        if let Some((i, _)) = cands
            .iter()
            .enumerate()
            .filter(|(_, c)| c.0.is_analytic() && c.1 <= wv * (1.0 + 1e-10))
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        {
            wi = i;
        }
    }
    let (winner, value, minimizer) = cands.swap_remove(wi);
    let converged = match &winner {
        Candidate::Restart { index } => restarts[*index].converged,
        _ => true,
    };
    if param == Param::Exp && minimizer.iter().any(|&v| v <= MLSI_FLOOR * 1.0001) {
        flags.push("mlsi_floor_active".to_string());
    }
    if matches!(winner, Candidate::Linearization) {
        flags.push("infimum_is_near_constant_limit".to_string());
    }
    RatioResult {
        value,
        minimizer,
        winner,
        best_analytic,
        restarts,
        converged,
        flags,
    }
}

fn to_param(param: Param, f: f64) -> f64 {
    match param {
        Param::Square => f.sqrt(),
        Param::Exp => f.max(MLSI_FLOOR).ln(),
    }
}
