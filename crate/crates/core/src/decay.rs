//! Exact relative-entropy and variance decay along `e^{tL}`, the exponential
//! envelope `Ent(f_t) ≤ e^{−κt} Ent(f_0)`, and Pinsker mixing-time bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{entropy, mean, variance};
use crate::generators::{BlockSystem, Functional, GeneratorMatrix, Spectrum};
use rand::Rng;

/// Tolerance on mass conservation and positivity of `f_t`.
pub const CONSERVATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub ent_values: Vec<f64>,
    pub var_values: Vec<f64>,
    /// κ of the envelope, once one has been checked.
    pub rate_bound: Option<f64>,
    /// `max_t |μ(f_t) − 1|`.
    pub mass_error: f64,
    /// `min_{t,x} f_t(x)` before clamping round-off negatives.
    pub min_value: f64,
    pub conserved: bool,
}

/// The semigroup of one generator, diagonalized once.
#[derive(Clone, Debug)]
pub struct Semigroup {
    spectrum: Spectrum,
}

impl Semigroup {
    pub fn new(l: &GeneratorMatrix) -> Result<Self> {
        let mut spectrum = l.spectrum()?;
        // −L is positive semidefinite; a round-off eigenvalue of ±1e-15 would
        // otherwise grow as e^{1e-15 t} and break mass conservation at large t
        let floor = 1e-12 * l.scale();
        spectrum.values.iter_mut().filter(|v| **v <= floor).for_each(|v| *v = 0.0);
        Ok(Semigroup { spectrum })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// `e^{tL} f`.
    pub fn apply(&self, t: f64, f: &[f64]) -> Vec<f64> {
        self.spectrum.evolve(t, f)
    }

    /// `Ent(e^{tL} f)`, round-off negatives clamped to zero.
    pub fn entropy_at(&self, t: f64, f: &[f64]) -> f64 {
        entropy(&clamped(self.apply(t, f)))
    }
}

fn clamped(mut f: Vec<f64>) -> Vec<f64> {
    f.iter_mut().for_each(|v| *v = v.max(0.0));
    f
}

fn check_density(f0: &[f64], dim: usize) -> Result<()> {
    if f0.len() != dim {
        return Err(Error::domain(format!("f0 has {} entries, generator has {dim}", f0.len())));
    }
    if f0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::domain("f0 must be finite and nonnegative"));
    }
    if (mean(f0) - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("f0 must have mean 1, has {}", mean(f0))));
    }
    Ok(())
}

pub fn evolve(l: &GeneratorMatrix, f0: &[f64], times: &[f64]) -> Result<DecayCurve> {
    evolve_with(&Semigroup::new(l)?, f0, times)
}

pub fn evolve_with(sg: &Semigroup, f0: &[f64], times: &[f64]) -> Result<DecayCurve> {
    check_density(f0, sg.spectrum.values.len())?;
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("times must be nonnegative and strictly increasing"));
    }
    let points: Vec<(f64, f64, f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let ft = sg.apply(t, f0);
            let mass = (mean(&ft) - 1.0).abs();
            let lo = ft.iter().cloned().fold(f64::INFINITY, f64::min);
            let ft = clamped(ft);
            (entropy(&ft), variance(&ft), mass, lo)
        })
        .collect();
    let mass_error = points.iter().map(|p| p.2).fold(0.0, f64::max);
    let min_value = points.iter().map(|p| p.3).fold(f64::INFINITY, f64::min);
    Ok(DecayCurve {
        times: times.to_vec(),
        ent_values: points.iter().map(|p| p.0).collect(),
        var_values: points.iter().map(|p| p.1).collect(),
        rate_bound: None,
        mass_error,
        min_value,
        conserved: mass_error <= CONSERVATION_TOL && min_value >= -CONSERVATION_TOL,
    })
}

/// `0, t0, 2t0, 4t0, …` with `steps` positive points and `t0 = 0.01/λ`.
pub fn default_times(gap: f64, steps: usize) -> Vec<f64> {
    let t0 = 0.01 / gap;
    std::iter::once(0.0)
        .chain((0..steps).map(|k| t0 * 2f64.powi(k as i32)))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopePoint {
    pub t: f64,
    pub ent: f64,
    pub envelope: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeReport {
    pub kappa: f64,
    pub tolerance: f64,
    pub points: Vec<EnvelopePoint>,
    pub holds: bool,
    /// `max (Ent(f_t) − e^{−κt} Ent(f_0))`.
    pub max_excess: f64,
    /// `max log(Ent(f_t) / envelope)` over points with `Ent > 1e-20`; sees
    /// violations hidden below the absolute tolerance.
    pub max_log_excess: Option<f64>,
    pub nonincreasing: bool,
    /// `−Δ log Ent / Δt` over the first grid step.
    pub initial_rate: Option<f64>,
}

/// Absolute tolerance of the envelope comparison.
pub const ENVELOPE_TOL: f64 = 1e-10;

const LOG_EXCESS_FLOOR: f64 = 1e-20;

pub fn check_envelope(curve: &mut DecayCurve, kappa: f64) -> EnvelopeReport {
    curve.rate_bound = Some(kappa);
    let e0 = curve.ent_values.first().copied().unwrap_or(0.0);
    let t0 = curve.times.first().copied().unwrap_or(0.0);
    let points: Vec<EnvelopePoint> = curve
        .times
        .iter()
        .zip(&curve.ent_values)
        .map(|(&t, &ent)| {
            let envelope = (-kappa * (t - t0)).exp() * e0;
            EnvelopePoint {
                t,
                ent,
                envelope,
                ok: ent <= envelope + ENVELOPE_TOL,
            }
        })
        .collect();
    let max_excess = points.iter().map(|p| p.ent - p.envelope).fold(f64::NEG_INFINITY, f64::max);
    let max_log_excess = points
        .iter()
        .filter(|p| p.ent > LOG_EXCESS_FLOOR && p.envelope > 0.0)
        .map(|p| (p.ent / p.envelope).ln())
        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))));
    let initial_rate = match (&curve.times[..], &curve.ent_values[..]) {
        ([a, b, ..], [ea, eb, ..]) if *ea > 0.0 && *eb > 0.0 => Some((ea.ln() - eb.ln()) / (b - a)),
        _ => None,
    };
    EnvelopeReport {
        kappa,
        tolerance: ENVELOPE_TOL,
        holds: points.iter().all(|p| p.ok),
        nonincreasing: curve.ent_values.windows(2).all(|w| w[1] <= w[0] + ENVELOPE_TOL),
        points,
        max_excess,
        max_log_excess,
        initial_rate,
    }
}

/// `−d log Var(f_t)/dt` from the last two grid points with `Var` above `floor`.
pub fn variance_decay_rate(curve: &DecayCurve, floor: f64) -> Option<f64> {
    let idx: Vec<usize> = (0..curve.times.len()).filter(|&i| curve.var_values[i] > floor).collect();
    let (&i, &j) = (idx.get(idx.len().checked_sub(2)?)?, idx.last()?);
    Some((curve.var_values[i].ln() - curve.var_values[j].ln()) / (curve.times[j] - curve.times[i]))
}

/// Below this entropy the finite difference is dominated by round-off in `f_t − 1`.
pub const PRODUCTION_ENT_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct ProductionPoint {
    pub t: f64,
    pub ent: f64,
    /// `−dEnt/dt` by a five-point stencil.
    pub finite_difference: f64,
    /// `Σ_A α_A μ[Cov_A(f_t, log f_t)]`.
    pub analytic: f64,
    pub relative_error: f64,
    /// `ent ≥ PRODUCTION_ENT_FLOOR`; unresolved points carry no information.
    pub resolved: bool,
}

/// Compares the entropy production with the covariance form at each `t > 0`.
pub fn entropy_production_check(system: &BlockSystem, f0: &[f64], times: &[f64]) -> Result<Vec<ProductionPoint>> {
    let l = system.generator()?;
    let sg = Semigroup::new(&l)?;
    check_density(f0, l.dim())?;
    let ev = system.evaluator();
    times
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| {
            let h = (1e-3 / l.scale()).min(t / 16.0);
            let e = |s: f64| sg.entropy_at(s, f0);
            let d = (-e(t + 2.0 * h) + 8.0 * e(t + h) - 8.0 * e(t - h) + e(t - 2.0 * h)) / (12.0 * h);
            let analytic = ev.dirichlet(Functional::CovFlogf, &clamped(sg.apply(t, f0)))?;
            let fd = -d;
            let ent = e(t);
            Ok(ProductionPoint {
                t,
                ent,
                resolved: ent >= PRODUCTION_ENT_FLOOR,
                finite_difference: fd,
                analytic,
                relative_error: (fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingShape {
    /// `N` particles on `|V|` vertices: `(log N + log log |V|)/κ`.
    Synchronous { particles: usize, vertices: usize },
    /// `log n / κ`.
    Permutations { n: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    pub shape: MixingShape,
    pub kappa: f64,
    pub constant: f64,
    pub bound: f64,
    pub epsilon: f64,
    /// Exact `T_mix(ε)` from the worst Dirac start, when computed.
    pub exact_tmix: Option<f64>,
    pub worst_start: Option<usize>,
    pub exact_within_bound: Option<bool>,
}

pub fn pinsker_bound(kappa: f64, shape: MixingShape, constant: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::domain("mixing bound needs kappa > 0"));
    }
    let shape_value = match shape {
        MixingShape::Synchronous { particles, vertices } => {
            if particles == 0 || vertices < 2 {
                return Err(Error::domain("need N >= 1 and |V| >= 2"));
            }
            (particles as f64).ln() + (vertices as f64).ln().ln()
        }
        MixingShape::Permutations { n } => {
            if n < 2 {
                return Err(Error::domain("need n >= 2"));
            }
            (n as f64).ln()
        }
    };
    Ok(constant * shape_value / kappa)
}

/// `max_x ‖δ_x e^{tL} − μ‖_TV`.
fn worst_tv(sg: &Semigroup, t: f64) -> (f64, usize) {
    let p = sg.spectrum.semigroup(t);
    let s = p.nrows();
    let u = 1.0 / s as f64;
    (0..s)
        .map(|x| (0.5 * p.row(x).iter().map(|v| (v - u).abs()).sum::<f64>(), x))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

/// Smallest `t` with worst-start total variation `≤ ε`, by bisection.
pub fn exact_mixing_time(l: &GeneratorMatrix, epsilon: f64) -> Result<(f64, usize)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain("epsilon must lie in (0, 1)"));
    }
    let sg = Semigroup::new(l)?;
    let gap = sg.spectrum.values.get(1).copied().unwrap_or(0.0);
    if gap <= 1e-12 {
        return Err(Error::domain("chain is not ergodic"));
    }
    let mut hi = 1.0 / gap;
    while worst_tv(&sg, hi).0 > epsilon {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if worst_tv(&sg, mid).0 > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((hi, worst_tv(&sg, lo).1))
}

pub fn pinsker_mixing_bound(
    kappa: f64,
    shape: MixingShape,
    constant: f64,
    generator: Option<&GeneratorMatrix>,
) -> Result<MixingReport> {
    let bound = pinsker_bound(kappa, shape, constant)?;
    let epsilon = 0.25;
    let exact = generator.map(|l| exact_mixing_time(l, epsilon)).transpose()?;
    Ok(MixingReport {
        shape,
        kappa,
        constant,
        bound,
        epsilon,
        exact_tmix: exact.map(|e| e.0),
        worst_start: exact.map(|e| e.1),
        exact_within_bound: exact.map(|e| e.0 <= bound),
    })
}

/// A random density with mean 1 and some entries near zero.
pub fn random_density(rng: &mut impl Rng, s: usize) -> Vec<f64> {
    let f: Vec<f64> = (0..s).map(|_| (2.0 * rng.gen::<f64>() - 1.0).exp() * rng.gen::<f64>()).collect();
    let m = mean(&f);
    f.iter().map(|v| v / m).collect()
}

/// `S·δ_state`, the density of a point mass.
pub fn dirac_density(s: usize, state: usize) -> Vec<f64> {
    let mut f = vec![0.0; s];
    f[state] = s as f64;
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::closed_form::kappa_mf_perm;
    use crate::generators::{gen_single_graph, pairs};
    use crate::state_spaces::{MeanFieldWeights, WeightedGraph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interchange(n: usize) -> BlockSystem {
        let mut h = pairs(n).unwrap();
        h = crate::state_spaces::HypergraphWeights::new(n, h.blocks().map(|(s, w)| (s, 2.0 * w))).unwrap();
        BlockSystem::shuffle(&h).unwrap()
    }

    #[test]
    fn two_state_closed_form() {
        let l = gen_single_graph(&WeightedGraph::complete(2, 1.0).unwrap());
        let times = [0.0, 0.1, 0.5, 1.0, 3.0];
        let c = evolve(&l, &[2.0, 0.0], &times).unwrap();
        assert!(c.conserved);
        for (i, &t) in times.iter().enumerate() {
            let e = (-2.0 * t).exp();
            assert!((c.ent_values[i] - entropy(&[1.0 + e, 1.0 - e])).abs() < 1e-14);
            assert!((c.var_values[i] - e * e).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_start_is_flat_and_entropy_vanishes() {
        let l = interchange(3).generator().unwrap();
        let c = evolve(&l, &[1.0; 6], &default_times(3.0, 8)).unwrap();
        assert!(c.ent_values.iter().all(|&e| e < 1e-28));
        let mut f = vec![0.0; 6];
        f[2] = 6.0;
        let c = evolve(&l, &f, &[0.0, 1.0, 10.0, 40.0]).unwrap();
        assert!(c.ent_values[3] < 1e-20 && (c.ent_values[0] - 6f64.ln()).abs() < 1e-12);
        assert!(evolve(&l, &[1.0; 5], &[0.0]).is_err());
        assert!(evolve(&l, &[2.0; 6], &[0.0]).is_err());
        assert!(evolve(&l, &[1.0; 6], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn envelope_on_interchange() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [3, 4] {
            let sys = interchange(n);
            let l = sys.generator().unwrap();
            let sg = Semigroup::new(&l).unwrap();
            let kappa = kappa_mf_perm(&MeanFieldWeights::single(n, 2, 2.0).unwrap());
            let s = sys.n_states();
            let mut starts: Vec<Vec<f64>> = (0..20).map(|_| random_density(&mut rng, s)).collect();
            let mut dirac = vec![0.0; s];
            dirac[0] = s as f64;
            starts.push(dirac);
            for f0 in &starts {
                let mut c = evolve_with(&sg, f0, &default_times(n as f64, 12)).unwrap();
                assert!(c.conserved);
                let r = check_envelope(&mut c, kappa);
                assert!(r.holds && r.nonincreasing, "{r:?}");
            }
            // entropy of a generic start decays at 2λ for large t, so any faster envelope fails
            let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1).collect();
            for f0 in &starts[..3] {
                let mut c = evolve_with(&sg, f0, &times).unwrap();
                let r = check_envelope(&mut c, 2.0 * n as f64 + 1.0);
                assert!(!r.holds && r.max_log_excess.unwrap() > 1.0, "{r:?}");
            }
        }
    }

    #[test]
    fn dirac_initial_rate_is_unbounded() {
        let l = interchange(3).generator().unwrap();
        let mut f = vec![0.0; 6];
        f[0] = 6.0;
        let rate = |t0: f64| {
            let mut c = evolve(&l, &f, &[0.0, t0]).unwrap();
            check_envelope(&mut c, 0.0).initial_rate.unwrap()
        };
        assert!(rate(1e-6) > rate(1e-4) && rate(1e-4) > rate(1e-2));
        let ev = interchange(3).evaluator();
        assert!(ev.dirichlet(Functional::CovFlogf, &f).unwrap().is_infinite());
    }

    #[test]
    fn production_matches_covariance_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for sys in [interchange(3), interchange(4)] {
            let s = sys.n_states();
            for f0 in [random_density(&mut rng, s), dirac_density(s, 0)] {
                let points = entropy_production_check(&sys, &f0, &default_times(3.0, 20)).unwrap();
                assert!(points.iter().filter(|p| p.resolved).count() >= 10);
                assert!(!points.last().unwrap().resolved);
                for p in points.iter().filter(|p| p.resolved) {
                    assert!(p.relative_error < 1e-6, "{p:?}");
                }
            }
        }
    }

    #[test]
    fn variance_rate_is_twice_the_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sys = interchange(4);
        let l = sys.generator().unwrap();
        let gap = l.spectrum().unwrap().values[1];
        let f0 = random_density(&mut rng, sys.n_states());
        let times: Vec<f64> = (0..=8).map(|k| k as f64 * 0.5).collect();
        let c = evolve(&l, &f0, &times).unwrap();
        let rate = variance_decay_rate(&c, 1e-20).unwrap();
        assert!((rate / (2.0 * gap) - 1.0).abs() < 0.01, "{rate} {gap}");
    }

    #[test]
    fn mixing_bounds() {
        let kappa = kappa_mf_perm(&MeanFieldWeights::single(4, 2, 2.0).unwrap());
        let l = interchange(4).generator().unwrap();
        let r = pinsker_mixing_bound(kappa, MixingShape::Permutations { n: 4 }, 1.0, Some(&l)).unwrap();
        let t = r.exact_tmix.unwrap();
        assert!(t > 0.0 && t.is_finite());
        let r2 = pinsker_mixing_bound(2.0 * kappa, MixingShape::Permutations { n: 4 }, 1.0, None).unwrap();
        assert!((r2.bound - r.bound / 2.0).abs() < 1e-15);
        let s = pinsker_bound(1.0, MixingShape::Synchronous { particles: 3, vertices: 5 }, 1.0).unwrap();
        assert!((s - (3f64.ln() + 5f64.ln().ln())).abs() < 1e-15);
        assert!(pinsker_bound(0.0, MixingShape::Permutations { n: 4 }, 1.0).is_err());
    }
}
