//! Explicit formulas for the constants, used as ground truth by `verify`.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state_spaces::MeanFieldWeights;

/// `log n!` as a sum of logarithms (exact to rounding at desk scale).
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn need(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::domain(msg))
    }
}

/// `Σ_ℓ w_ℓ C(n−1, ℓ−1) log ℓ / log n`.
pub fn kappa_mf_single(w: &MeanFieldWeights) -> f64 {
    let n = w.n();
    w.terms()
        .map(|(l, x)| x * binomial(n - 1, l - 1) * (l as f64).ln())
        .sum::<f64>()
        / (n as f64).ln()
}

/// `2(n−1) log 2 / log n`.
pub fn kappa_kn(n: usize) -> Result<f64> {
    need(n >= 2, "kappa_Kn needs n >= 2")?;
    Ok(2.0 * (n - 1) as f64 * LN_2 / (n as f64).ln())
}

/// `(n−2)/log(n−1)` for `n > 2`, and `1` at `n = 2`.
pub fn lsi_kn(n: usize) -> Result<f64> {
    need(n >= 2, "lsi_Kn needs n >= 2")?;
    Ok(if n == 2 {
        1.0
    } else {
        (n - 2) as f64 / ((n - 1) as f64).ln()
    })
}

/// `Σ_ℓ (n w_ℓ/ℓ) C(n−2, ℓ−2)`.
pub fn gap_mf_perm(w: &MeanFieldWeights) -> f64 {
    let n = w.n();
    w.terms()
        .map(|(l, x)| n as f64 * x / l as f64 * binomial(n - 2, l - 2))
        .sum()
}

/// `Σ_ℓ w_ℓ C(n, ℓ) log ℓ! / log n!`.
pub fn kappa_mf_perm(w: &MeanFieldWeights) -> f64 {
    let n = w.n();
    w.terms()
        .map(|(l, x)| x * binomial(n, l) * ln_factorial(l))
        .sum::<f64>()
        / ln_factorial(n)
}

/// `r(n−r) log 2 / log C(n, r)`.
pub fn kappa_bl(n: usize, r: usize) -> Result<f64> {
    need(r >= 1 && r < n, "kappa_bl needs 1 <= r <= n-1")?;
    Ok((r * (n - r)) as f64 * LN_2 / ln_binomial(n, r))
}

/// Bracket for the single-particle star, `n ≥ 3`.
pub fn star_bounds(n: usize) -> Result<[f64; 2]> {
    need(n >= 3, "star_bounds needs n >= 3")?;
    let nf = n as f64;
    Ok([
        2.0 * LN_2 * (1.0 - 2.0 / nf) / (nf - 1.0).ln(),
        2.0 * LN_2 / nf.ln(),
    ])
}

/// Bracket for the star shuffle on permutations, `n ≥ 3`.
pub fn star_perm_bounds(n: usize) -> Result<[f64; 2]> {
    need(n >= 3, "star_perm_bounds needs n >= 3")?;
    let ln = (n as f64).ln();
    Ok([LN_2 * LN_2 / ln, 2.0 * LN_2 / ln])
}

/// Ratio at a Dirac mass for the star shuffle: `2 log 2 (n−1) / log n!`.
pub fn dirac_perm_upper(n: usize) -> Result<f64> {
    need(n >= 2, "dirac_perm_upper needs n >= 2")?;
    Ok(2.0 * LN_2 * (n - 1) as f64 / ln_factorial(n))
}

/// `n log n / log n!`, where `n!/n^{n/p}` crosses 1.
pub fn p_critical(n: usize) -> Result<f64> {
    need(n >= 2, "p_critical needs n >= 2")?;
    Ok(n as f64 * (n as f64).ln() / ln_factorial(n))
}

/// Entropy-constant lower bound from the spectral gap.
pub fn kappa_lower_from_gap(n: usize, gap: f64) -> Result<f64> {
    need(n >= 3, "kappa_lower_from_gap needs n >= 3")?;
    let nf = n as f64;
    Ok((1.0 - 2.0 / nf) * 2.0 * LN_2 * gap / (nf - 1.0).ln())
}

fn d_multislice(n: usize, v: &[usize]) -> f64 {
    let ln_multinomial = ln_factorial(n) - v.iter().map(|&k| ln_factorial(k)).sum::<f64>();
    0.5 * v.iter().map(|&k| (k * (n - k)) as f64).sum::<f64>() * LN_2 / ln_multinomial
}

/// Minimum over all coarsenings (with at least two colors) of the color
/// profile `r`; a conjectured value, used only as a probe.
pub fn multislice_conjecture(r: &[usize]) -> Result<f64> {
    need(r.len() >= 2 && r.iter().all(|&k| k >= 1), "need at least two positive color counts")?;
    need(r.len() <= 10, "at most 10 colors")?;
    let n: usize = r.iter().sum();
    let mut best = f64::INFINITY;
    // Enumerate set partitions of the colors as restricted growth strings.
    let m = r.len();
    let mut label = vec![0usize; m];
    loop {
        let parts = label.iter().max().unwrap() + 1;
        if parts >= 2 {
            let mut v = vec![0usize; parts];
            for (i, &b) in label.iter().enumerate() {
                v[b] += r[i];
            }
            best = best.min(d_multislice(n, &v));
        }
        // next restricted growth string
        let mut i = m - 1;
        loop {
            if i == 0 {
                return Ok(best);
            }
            let prefix_max = label[..i].iter().copied().max().unwrap();
            if label[i] <= prefix_max {
                label[i] += 1;
                label[i + 1..].iter_mut().for_each(|x| *x = 0);
                break;
            }
            i -= 1;
        }
    }
}

/// Names accepted by [`evaluate`] and by `verify`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedForm {
    KappaMfSingle,
    KappaKn,
    LsiKn,
    GapMfPerm,
    KappaMfPerm,
    KappaBl,
    StarBounds,
    StarPermBounds,
    DiracPermUpper,
    PCritical,
    KappaLowerFromGap,
    MultisliceConjecture,
}

impl ClosedForm {
    pub const ALL: [ClosedForm; 12] = [
        ClosedForm::KappaMfSingle,
        ClosedForm::KappaKn,
        ClosedForm::LsiKn,
        ClosedForm::GapMfPerm,
        ClosedForm::KappaMfPerm,
        ClosedForm::KappaBl,
        ClosedForm::StarBounds,
        ClosedForm::StarPermBounds,
        ClosedForm::DiracPermUpper,
        ClosedForm::PCritical,
        ClosedForm::KappaLowerFromGap,
        ClosedForm::MultisliceConjecture,
    ];

    /// Kebab-case name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            ClosedForm::KappaMfSingle => "kappa-mf-single",
            ClosedForm::KappaKn => "kappa-kn",
            ClosedForm::LsiKn => "lsi-kn",
            ClosedForm::GapMfPerm => "gap-mf-perm",
            ClosedForm::KappaMfPerm => "kappa-mf-perm",
            ClosedForm::KappaBl => "kappa-bl",
            ClosedForm::StarBounds => "star-bounds",
            ClosedForm::StarPermBounds => "star-perm-bounds",
            ClosedForm::DiracPermUpper => "dirac-perm-upper",
            ClosedForm::PCritical => "p-critical",
            ClosedForm::KappaLowerFromGap => "kappa-lower-from-gap",
            ClosedForm::MultisliceConjecture => "multislice-conjecture",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| Error::input(format!("unknown closed form {s:?}")))
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters for [`evaluate`]; unused fields are ignored.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ClosedFormParams {
    pub n: usize,
    pub w: Option<MeanFieldSpec>,
    pub r: Option<usize>,
    pub gap: Option<f64>,
    pub colors: Option<Vec<usize>>,
}

/// `(ℓ, w_ℓ)` pairs, serializable alongside the other parameters.
pub type MeanFieldSpec = Vec<(usize, f64)>;

/// Evaluates a closed form; bracket-valued forms return both ends.
pub fn evaluate(name: ClosedForm, p: &ClosedFormParams) -> Result<Vec<f64>> {
    let weights = || -> Result<MeanFieldWeights> {
        let spec = p
            .w
            .clone()
            .ok_or_else(|| Error::input(format!("{name} needs mean-field weights")))?;
        MeanFieldWeights::new(p.n, spec)
    };
    let r = || p.r.ok_or_else(|| Error::input(format!("{name} needs r")));
    Ok(match name {
        ClosedForm::KappaMfSingle => vec![kappa_mf_single(&weights()?)],
        ClosedForm::KappaKn => vec![kappa_kn(p.n)?],
        ClosedForm::LsiKn => vec![lsi_kn(p.n)?],
        ClosedForm::GapMfPerm => vec![gap_mf_perm(&weights()?)],
        ClosedForm::KappaMfPerm => vec![kappa_mf_perm(&weights()?)],
        ClosedForm::KappaBl => vec![kappa_bl(p.n, r()?)?],
        ClosedForm::StarBounds => star_bounds(p.n)?.to_vec(),
        ClosedForm::StarPermBounds => star_perm_bounds(p.n)?.to_vec(),
        ClosedForm::DiracPermUpper => vec![dirac_perm_upper(p.n)?],
        ClosedForm::PCritical => vec![p_critical(p.n)?],
        ClosedForm::KappaLowerFromGap => {
            let gap = p.gap.ok_or_else(|| Error::input("kappa-lower-from-gap needs a gap"))?;
            vec![kappa_lower_from_gap(p.n, gap)?]
        }
        ClosedForm::MultisliceConjecture => {
            let colors = p
                .colors
                .clone()
                .ok_or_else(|| Error::input("multislice-conjecture needs a color profile"))?;
            vec![multislice_conjecture(&colors)?]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, l: usize) -> MeanFieldWeights {
        MeanFieldWeights::single(n, l, 1.0).unwrap()
    }

    #[test]
    fn examples() {
        assert!((kappa_mf_single(&e(4, 2)) - 1.5).abs() < 1e-15);
        assert!((kappa_mf_perm(&e(3, 2)) - 3.0 * LN_2 / 6f64.ln()).abs() < 1e-15);
        assert!((kappa_mf_perm(&e(3, 2)) - 1.16056).abs() < 1e-5);
        assert!((kappa_mf_perm(&e(4, 2)) - 6.0 * LN_2 / 24f64.ln()).abs() < 1e-15);
        assert!((kappa_mf_perm(&e(4, 2)) - 1.3086258).abs() < 1e-7);
        for n in 2..10 {
            let w = MeanFieldWeights::single(n, 2, 2.0).unwrap();
            assert!((gap_mf_perm(&w) - n as f64).abs() < 1e-12);
            // α = 2α² is K_n with unit weights
            assert!((kappa_mf_single(&w) - kappa_kn(n).unwrap()).abs() < 1e-12);
        }
        assert!((kappa_kn(3).unwrap() / 3.0 - 0.8412396).abs() < 1e-7);
        assert_eq!(lsi_kn(2).unwrap(), 1.0);
        assert!((lsi_kn(3).unwrap() - 1.0 / 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_laplace_reduces_to_pairs_at_r_one() {
        for n in 2..10 {
            let a = kappa_bl(n, 1).unwrap();
            let b = kappa_mf_single(&e(n, 2));
            assert!((a - b).abs() < 1e-13);
            for r in 1..n {
                assert!((kappa_bl(n, r).unwrap() - kappa_bl(n, n - r).unwrap()).abs() < 1e-13);
            }
        }
        assert!(kappa_bl(4, 0).is_err());
    }

    #[test]
    fn multislice_special_cases() {
        for n in 3..8 {
            for r in 1..n {
                let got = multislice_conjecture(&[r, n - r]).unwrap();
                assert!((got - kappa_bl(n, r).unwrap()).abs() < 1e-13);
            }
            let got = multislice_conjecture(&vec![1; n]).unwrap();
            assert!((got - kappa_mf_perm(&e(n, 2))).abs() < 1e-13, "{n}");
        }
    }

    #[test]
    fn p_critical_crosses_one() {
        for n in 2..12 {
            let pc = p_critical(n).unwrap();
            let pref = ln_factorial(n) - n as f64 / pc * (n as f64).ln();
            assert!(pref.abs() < 1e-12);
        }
    }

    #[test]
    fn star_bracket_ordering() {
        for n in 3..12 {
            let [lo, hi] = star_bounds(n).unwrap();
            assert!(lo < hi);
            let [plo, phi] = star_perm_bounds(n).unwrap();
            assert!(plo < phi && dirac_perm_upper(n).unwrap() > 0.0);
        }
    }

    #[test]
    fn names_round_trip() {
        for c in ClosedForm::ALL {
            assert_eq!(ClosedForm::parse(c.name()).unwrap(), c);
        }
        assert_eq!(ClosedForm::parse("kappa_bl").unwrap(), ClosedForm::KappaBl);
        assert!(ClosedForm::parse("nope").is_err());
    }
}
