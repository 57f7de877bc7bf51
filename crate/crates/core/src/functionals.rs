//! Entropy and variance functionals under the uniform measure, their
//! block-conditional versions, and the two-point functionals `ψ`, `ψ_ρ`,
//! `ψ̄_ρ`, `ψ̂_ρ`.
//!
//! Convention throughout: `0·log 0 = 0`.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::state_spaces::{BlockPartition, Partition};

/// `x log(x/m) − x + m`, the Bregman divergence of `t log t`.
///
/// Nonnegative, and summing it over a class with mean `m` gives the class
/// entropy without the cancellation of `Σ x log x − k m log m`.
pub fn bregman(x: f64, m: f64) -> f64 {
    if x == 0.0 {
        return m;
    }
    if m == 0.0 {
        return f64::INFINITY;
    }
    let d = (x - m) / m;
    if d.abs() < 0.05 {
        // (1+d)log(1+d) − d = Σ_{k≥2} (−d)^k / (k(k−1))
        let mut term = d * d;
        let mut sum = 0.0;
        for k in 2..24 {
            let kf = k as f64;
            sum += term / (kf * (kf - 1.0));
            term *= -d;
        }
        m * sum
    } else {
        (x * (x / m).ln() - x + m).max(0.0)
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// A nonnegative test function indexed by state rank.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityFunction(Vec<f64>);

impl DensityFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("density function has no entries"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("density function entries must be finite and nonnegative"));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::domain("density function is identically zero"));
        }
        Ok(DensityFunction(values))
    }

    /// Rescaled copy with `μ(f) = 1`.
    pub fn normalized(&self) -> DensityFunction {
        let m = mean(&self.0);
        DensityFunction(self.0.iter().map(|v| v / m).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DensityFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn mean(f: &[f64]) -> f64 {
    f.iter().sum::<f64>() / f.len() as f64
}

/// `Ent f = μ[f log(f/μ(f))]`.
pub fn entropy(f: &[f64]) -> f64 {
    let m = mean(f);
    f.iter().map(|&x| bregman(x, m)).sum::<f64>() / f.len() as f64
}

/// `Var f = μ(f²) − μ(f)²`, computed in centered form.
pub fn variance(f: &[f64]) -> f64 {
    let m = mean(f);
    f.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / f.len() as f64
}

fn check_partition(f: &[f64], p: &Partition) -> Result<()> {
    if p.n_states() != f.len() {
        return Err(Error::domain(format!(
            "function has {} entries but the partition covers {} states",
            f.len(),
            p.n_states()
        )));
    }
    Ok(())
}

fn class_sum(f: &[f64], p: &Partition, per_class: impl Fn(&[f64]) -> f64) -> f64 {
    let mut buf = Vec::new();
    let mut total = 0.0;
    for class in p.classes() {
        if class.len() < 2 {
            continue;
        }
        buf.clear();
        buf.extend(class.iter().map(|&i| f[i as usize]));
        total += per_class(&buf);
    }
    total / f.len() as f64
}

/// `Σ_C f log(f/m_C)` on one class (unnormalized).
pub(crate) fn class_entropy(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|&x| bregman(x, m)).sum()
}

pub(crate) fn class_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|&x| (x - m) * (x - m)).sum()
}

pub(crate) fn class_var_sqrt(v: &[f64]) -> f64 {
    let m = v.iter().map(|x| x.sqrt()).sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x.sqrt() - m).powi(2)).sum()
}

pub(crate) fn class_cov_flogf(v: &[f64]) -> f64 {
    let m = mean(v);
    if m == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for &x in v {
        if x == 0.0 {
            return f64::INFINITY;
        }
        // (x − m) log x summed over the class equals Σ (x − m) log(x/m).
        total += (x - m) * ((x - m) / m).ln_1p();
    }
    total
}

/// `μ[Ent(f | P)]`: average over classes of the within-class entropy.
pub fn conditional_entropy(f: &[f64], p: &Partition) -> Result<f64> {
    check_partition(f, p)?;
    Ok(class_sum(f, p, class_entropy))
}

pub fn conditional_variance(f: &[f64], p: &Partition) -> Result<f64> {
    check_partition(f, p)?;
    Ok(class_sum(f, p, class_variance))
}

/// `Ent[μ(f | P)]`: entropy of the conditional expectation.
pub fn between_entropy(f: &[f64], p: &Partition) -> Result<f64> {
    check_partition(f, p)?;
    Ok(entropy(&p.average(f)))
}

pub fn between_variance(f: &[f64], p: &Partition) -> Result<f64> {
    check_partition(f, p)?;
    Ok(variance(&p.average(f)))
}

/// `μ[Ent_A f]`.
pub fn block_entropy(f: &[f64], part: &BlockPartition) -> Result<f64> {
    conditional_entropy(f, part)
}

/// `μ[Var_A f]`.
pub fn block_variance(f: &[f64], part: &BlockPartition) -> Result<f64> {
    conditional_variance(f, part)
}

/// `μ[Var_A √f]`.
pub fn block_var_sqrt(f: &[f64], part: &BlockPartition) -> Result<f64> {
    check_partition(f, part)?;
    Ok(class_sum(f, part, class_var_sqrt))
}

/// `μ[Cov_A(f, log f)]`; `+∞` when a zero shares a class with positive mass.
pub fn block_cov_flogf(f: &[f64], part: &BlockPartition) -> Result<f64> {
    check_partition(f, part)?;
    Ok(class_sum(f, part, class_cov_flogf))
}

/// `ψ(a, b) = ½ a log a + ½ b log b − m log m`, `m = (a+b)/2`.
pub fn psi(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    0.5 * (bregman(a, m) + bregman(b, m))
}

/// `μ_ρ(a, b) = ρ a + (1−ρ) b`.
pub fn mu_rho(a: f64, b: f64, rho: f64) -> f64 {
    rho * a + (1.0 - rho) * b
}

/// Entropy of `(a, b)` under Bernoulli(ρ).
pub fn psi_rho(a: f64, b: f64, rho: f64) -> f64 {
    let m = mu_rho(a, b, rho);
    if m == 0.0 {
        return 0.0;
    }
    let wa = if rho == 0.0 { 0.0 } else { rho * bregman(a, m) };
    let wb = if rho == 1.0 { 0.0 } else { (1.0 - rho) * bregman(b, m) };
    wa + wb
}

/// `(ψ_ρ(a,b) + ψ_ρ(b,a)) / 2`.
pub fn psi_bar_rho(a: f64, b: f64, rho: f64) -> f64 {
    0.5 * (psi_rho(a, b, rho) + psi_rho(b, a, rho))
}

/// `h(ρ) = −ρ log ρ − (1−ρ) log(1−ρ)`.
pub fn shannon_h(rho: f64) -> f64 {
    -xlogx(rho) - xlogx(1.0 - rho)
}

/// `ψ̂_ρ(a) = (1/n) Σ_i ψ_ρ(a_i, ā_i)` with `ā_i` the mean of the other entries.
pub fn psi_hat(a: &[f64], rho: f64) -> Result<f64> {
    let n = a.len();
    if n < 2 {
        return Err(Error::domain("psi_hat needs at least 2 entries"));
    }
    let total: f64 = a.iter().sum();
    let s: f64 = a
        .iter()
        .map(|&ai| psi_rho(ai, (total - ai) / (n - 1) as f64, rho))
        .sum();
    Ok(s / n as f64)
}

/// A two-point configuration `(a, b)` under Bernoulli(ρ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalPair {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
}

impl LocalPair {
    pub fn new(a: f64, b: f64, rho: f64) -> Result<Self> {
        if a < 0.0 || b < 0.0 || !(0.0..=1.0).contains(&rho) {
            return Err(Error::domain("need a, b >= 0 and rho in [0, 1]"));
        }
        if a == 0.0 && b == 0.0 {
            return Err(Error::domain("(a, b) = (0, 0)"));
        }
        Ok(LocalPair { a, b, rho })
    }

    pub fn psi_rho(self) -> f64 {
        psi_rho(self.a, self.b, self.rho)
    }

    pub fn psi_bar_rho(self) -> f64 {
        psi_bar_rho(self.a, self.b, self.rho)
    }
}

/// The three local terms on an edge carrying values `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalEdge {
    /// `¼(√a − √b)²`
    pub var_sqrt: f64,
    /// `ψ(a, b)`
    pub ent: f64,
    /// `¼(a − b) log(a/b)`; `+∞` when exactly one argument is zero.
    pub cov_flogf: f64,
    pub cov_infinite: bool,
}

pub fn local_edge_functionals(a: f64, b: f64) -> LocalEdge {
    let var_sqrt = 0.25 * (a.sqrt() - b.sqrt()).powi(2);
    let (cov_flogf, cov_infinite) = if a == b {
        (0.0, false)
    } else if a == 0.0 || b == 0.0 {
        (f64::INFINITY, true)
    } else {
        (0.25 * (a - b) * (a / b).ln(), false)
    };
    LocalEdge {
        var_sqrt,
        ent: psi(a, b),
        cov_flogf,
        cov_infinite,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_spaces::{build_space, SpaceKind, VertexSet};
    use proptest::prelude::*;
    use std::f64::consts::{E, LN_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn bregman_series_matches_direct_form() {
        for &(x, m) in &[(1.01f64, 1.0f64), (0.97, 1.0), (3.0 * 1.04, 3.0), (1e-3 * 0.96, 1e-3)] {
            let direct = x * (x / m).ln() - x + m;
            assert!(close(bregman(x, m), direct, 1e-9), "{x} {m}");
        }
        assert_eq!(bregman(0.0, 2.0), 2.0);
        assert_eq!(bregman(2.0, 2.0), 0.0);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[3.0, 3.0, 3.0]), 0.0);
        for n in 2..10 {
            let mut f = vec![0.0; n];
            f[0] = 1.0;
            assert!(close(entropy(&f), (n as f64).ln() / n as f64, 1e-15));
        }
        assert!(close(entropy(&[2.0, 0.0]), LN_2, 1e-15));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance(&[5.0; 4]), 0.0);
        assert!(close(variance(&[1.0, 0.0]), 0.25, 1e-15));
        assert!(close(variance(&[1.0, 0.0, 0.0]), 2.0 / 9.0, 1e-15));
    }

    #[test]
    fn block_entropy_examples() {
        let s = build_space(SpaceKind::SingleParticle { n: 4 }).unwrap();
        let p = s.block_partition(VertexSet::pair(0, 1)).unwrap();
        let f = [1.0, 0.0, 0.0, 0.0];
        assert!(close(block_entropy(&f, &p).unwrap(), LN_2 / 4.0, 1e-15));
        assert_eq!(block_entropy(&[1.0, 1.0, 2.0, 7.0], &p).unwrap(), 0.0);

        let s = build_space(SpaceKind::Permutations { n: 4 }).unwrap();
        let full = s.block_partition(VertexSet::full(4)).unwrap();
        let f: Vec<f64> = (0..24).map(|i| 1.0 + (i as f64 * 0.37).sin().abs()).collect();
        assert!(close(block_entropy(&f, &full).unwrap(), entropy(&f), 1e-14));
        assert!(block_entropy(&f[..23], &full).is_err());
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(1.0, 1.0), 0.0);
        assert!(close(psi(0.0, 1.0), LN_2 / 2.0, 1e-15));
        assert!(close(psi(2.0, 2.0 * 0.3), 2.0 * psi(1.0, 0.3), 1e-15));
    }

    #[test]
    fn psi_rho_examples() {
        for &rho in &[0.1, 0.25, 0.5, 0.9] {
            assert_eq!(psi_rho(2.5, 2.5, rho), 0.0);
            assert!(close(psi_rho(0.0, 1.0, rho), -(1.0 - rho) * (1.0 - rho).ln(), 1e-14));
            assert!(close(psi_rho(1.0, 0.0, rho), -rho * rho.ln(), 1e-14));
            assert!(close(psi_bar_rho(0.0, 1.0, rho), shannon_h(rho) / 2.0, 1e-14));
            assert_eq!(psi_bar_rho(0.7, 0.7, rho), 0.0);
        }
        assert!(close(psi_bar_rho(0.3, 1.7, 0.5), psi(0.3, 1.7), 1e-15));
        assert!(close(psi_rho(0.3, 1.7, 0.5), psi(0.3, 1.7), 1e-15));
    }

    #[test]
    fn shannon_examples() {
        assert!(close(shannon_h(0.5), LN_2, 1e-15));
        assert_eq!(shannon_h(0.0), 0.0);
        let want = 0.25 * 4f64.ln() + 0.75 * (4.0f64 / 3.0).ln();
        assert!(close(shannon_h(0.25), want, 1e-15));
    }

    #[test]
    fn psi_hat_examples() {
        assert_eq!(psi_hat(&[2.0, 2.0, 2.0], 0.3).unwrap(), 0.0);
        for n in 2..9 {
            let mut a = vec![0.0; n];
            a[0] = 1.0;
            let rho = 1.0 / n as f64;
            assert!(close(psi_hat(&a, rho).unwrap(), shannon_h(rho) / n as f64, 1e-14));
        }
        assert!(close(psi_hat(&[0.0, 1.0], 0.5).unwrap(), LN_2 / 2.0, 1e-15));
        assert!(psi_hat(&[1.0], 0.5).is_err());
    }

    #[test]
    fn local_edge_examples() {
        let e = local_edge_functionals(1.0, 1.0);
        assert_eq!((e.var_sqrt, e.ent, e.cov_flogf), (0.0, 0.0, 0.0));
        let e = local_edge_functionals(4.0, 0.0);
        assert!(close(e.var_sqrt, 1.0, 1e-15));
        // homogeneity: ψ(4, 0) = 4ψ(1, 0) = 2 log 2
        assert!(close(e.ent, 2.0 * LN_2, 1e-15));
        assert!(e.cov_infinite && e.cov_flogf.is_infinite());
        let e = local_edge_functionals(E, 1.0);
        assert!(close(e.cov_flogf, (E - 1.0) / 4.0, 1e-15));
    }

    #[test]
    fn density_function_validation() {
        assert!(DensityFunction::new(vec![0.0, 0.0]).is_err());
        assert!(DensityFunction::new(vec![1.0, -1.0]).is_err());
        let f = DensityFunction::new(vec![1.0, 3.0]).unwrap().normalized();
        assert_eq!(&*f, &[0.5, 1.5]);
    }

    fn positive() -> impl Strategy<Value = f64> {
        prop_oneof![
            9 => (-6.0f64..6.0).prop_map(|e| 10f64.powf(e)),
            1 => Just(0.0),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 2000, rng_algorithm: proptest::test_runner::RngAlgorithm::ChaCha, ..ProptestConfig::default() })]

        #[test]
        fn local_chain(a in positive(), b in positive()) {
            prop_assume!(a + b > 0.0);
            let e = local_edge_functionals(a, b);
            let scale = 1e-12 * (a + b);
            prop_assert!(2.0 * LN_2 * e.var_sqrt <= e.ent + scale);
            prop_assert!(e.ent <= 2.0 * e.var_sqrt + scale);
            prop_assert!(2.0 * e.var_sqrt <= 0.5 * e.cov_flogf + scale);
        }

        #[test]
        fn psi_symmetric_and_homogeneous(a in positive(), b in positive(), t in 1e-3f64..1e3) {
            prop_assert!((psi(a, b) - psi(b, a)).abs() <= 1e-14 * (a + b));
            prop_assert!((psi(t * a, t * b) - t * psi(a, b)).abs() <= 1e-10 * t * (a + b));
        }

        #[test]
        fn corollary_bound(a in positive(), b in positive(), rho in 0.0f64..=0.5) {
            prop_assume!(a + b > 0.0);
            let rhs = shannon_h(rho) / LN_2 * psi(a, b);
            prop_assert!(psi_bar_rho(a, b, rho) <= rhs + 1e-12 * (a + b));
        }

        #[test]
        fn psi_hat_bound(a in prop::collection::vec(positive(), 2..8)) {
            prop_assume!(a.iter().any(|&x| x > 0.0));
            let n = a.len() as f64;
            let bound = shannon_h(1.0 / n) / n.ln() * entropy(&a);
            let scale: f64 = a.iter().sum::<f64>() / n;
            prop_assert!(psi_hat(&a, 1.0 / n).unwrap() <= bound + 1e-12 * scale);
        }
    }
}
