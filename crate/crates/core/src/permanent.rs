//! Permanents of nonnegative matrices and the row-norm permanent bound
//! `perm(A) ≤ max{1, n!/n^{n/p}} Π_i ‖R_i‖_p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::closed_form::{ln_factorial, p_critical};
use crate::error::{Error, Result};
use crate::state_spaces::{build_space, SpaceKind};

/// Largest order accepted by [`permanent_ryser`].
pub const RYSER_MAX_N: usize = 24;

/// Relative slack under which a bound is treated as attained.
pub const EQUALITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonnegMatrix {
    n: usize,
    entries: Vec<f64>,
}

#[derive(Deserialize)]
struct MatrixJson {
    matrix: Vec<Vec<f64>>,
}

impl NonnegMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::input("matrix is empty"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::input(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::input(format!("row {i} has invalid entry {v}")));
            }
            entries.extend_from_slice(row);
        }
        Ok(NonnegMatrix { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        (0..n).for_each(|i| entries[i * n + i] = 1.0);
        NonnegMatrix { n, entries }
    }

    pub fn ones(n: usize) -> Self {
        NonnegMatrix {
            n,
            entries: vec![1.0; n * n],
        }
    }

    /// CSV (one row per line) or JSON `{"matrix": [[…], …]}`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let j: MatrixJson =
                serde_json::from_str(text).map_err(|e| Error::input(format!("matrix JSON: {e}")))?;
            return Self::new(j.matrix);
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::input(format!("matrix CSV: {e}")))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::input(format!("matrix CSV: bad number {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_norm(&self, i: usize, p: f64) -> f64 {
        let r = self.row(i);
        let m = r.iter().cloned().fold(0.0, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        m * r.iter().map(|v| (v / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }

    /// Every row has one nonzero entry, in distinct columns.
    pub fn is_scaled_permutation(&self) -> bool {
        let mut seen = vec![false; self.n];
        for i in 0..self.n {
            let nz: Vec<usize> = (0..self.n).filter(|&j| self.get(i, j) != 0.0).collect();
            if nz.len() != 1 || seen[nz[0]] {
                return false;
            }
            seen[nz[0]] = true;
        }
        true
    }

    /// Every row is a positive constant.
    pub fn has_constant_rows(&self) -> bool {
        (0..self.n).all(|i| {
            let r = self.row(i);
            r[0] > 0.0 && r.iter().all(|&v| v == r[0])
        })
    }
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.c
    }
}

/// Ryser's formula over Gray-code ordered column subsets.
pub fn permanent_ryser(a: &NonnegMatrix) -> Result<f64> {
    let n = a.n;
    if n > RYSER_MAX_N {
        return Err(Error::Size {
            what: "permanent order",
            value: n as u128,
            cap: RYSER_MAX_N as u128,
        });
    }
    let mut row_sums = vec![Compensated::default(); n];
    let mut total = Compensated::default();
    let mut gray: u64 = 0;
    for k in 1u64..1 << n {
        let next = k ^ (k >> 1);
        let j = (gray ^ next).trailing_zeros() as usize;
        let adding = next & (1 << j) != 0;
        for (i, rs) in row_sums.iter_mut().enumerate() {
            let v = a.get(i, j);
            rs.add(if adding { v } else { -v });
        }
        gray = next;
        let prod: f64 = row_sums.iter().map(|r| r.value()).product();
        if (n - next.count_ones() as usize) % 2 == 0 {
            total.add(prod);
        } else {
            total.add(-prod);
        }
    }
    Ok(total.value().max(0.0))
}

/// `Σ_σ Π_i a_{i,σ_i}` by enumeration, for small `n`.
pub fn permanent_naive(a: &NonnegMatrix) -> Result<f64> {
    let space = build_space(SpaceKind::Permutations { n: a.n })?;
    Ok(space
        .states()
        .map(|s| s.iter().enumerate().map(|(i, &j)| a.get(i, j as usize)).product::<f64>())
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualityCase {
    Identity,
    AllOnes,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub p: f64,
    pub p_critical: f64,
    pub permanent: f64,
    /// `max{1, n!/n^{n/p}}`.
    pub prefactor: f64,
    pub row_norm_product: f64,
    pub bound: f64,
    /// `bound − perm`.
    pub slack: f64,
    pub relative_slack: f64,
    pub holds: bool,
    pub equality: Option<EqualityCase>,
}

pub fn prefactor(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    (ln_factorial(n) - nf * nf.ln() / p).exp().max(1.0)
}

pub fn bound_check(a: &NonnegMatrix, p: f64) -> Result<BoundReport> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("bound needs p >= 1, got {p}")));
    }
    let n = a.n;
    let permanent = permanent_ryser(a)?;
    let pre = prefactor(n, p);
    let row_norm_product: f64 = (0..n).map(|i| a.row_norm(i, p)).product();
    let bound = pre * row_norm_product;
    let slack = bound - permanent;
    let relative_slack = if bound > 0.0 { slack / bound } else { 0.0 };
    let attained = relative_slack.abs() <= EQUALITY_TOL;
    let equality = if !attained {
        None
    } else if a.is_scaled_permutation() {
        Some(EqualityCase::Identity)
    } else if a.has_constant_rows() {
        Some(EqualityCase::AllOnes)
    } else {
        None
    };
    Ok(BoundReport {
        n,
        p,
        p_critical: if n >= 2 { p_critical(n)? } else { f64::NAN },
        permanent,
        prefactor: pre,
        row_norm_product,
        bound,
        slack,
        relative_slack,
        holds: slack >= -1e-10 * bound.max(f64::MIN_POSITIVE),
        equality,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzReport {
    pub matrices: usize,
    pub ps: Vec<f64>,
    pub critical: bool,
    pub max_n: usize,
    pub checks: usize,
    pub violations: usize,
    pub min_relative_slack: f64,
    pub worst: Option<BoundReport>,
}

/// Random matrix with a mix of dense, sparse and rank-one-like rows.
pub fn random_matrix(rng: &mut impl Rng, n: usize) -> NonnegMatrix {
    let style = rng.gen_range(0..4);
    let rows = (0..n)
        .map(|_| {
            let scale = rng.gen_range(0.1..3.0);
            (0..n)
                .map(|_| match style {
                    0 => rng.gen::<f64>(),
                    1 => {
                        if rng.gen_bool(0.5) {
                            rng.gen::<f64>()
                        } else {
                            0.0
                        }
                    }
                    2 => scale * (1.0 + 0.05 * rng.gen::<f64>()),
                    _ => (3.0 * rng.gen::<f64>() - 1.5).exp(),
                })
                .collect()
        })
        .collect();
    NonnegMatrix::new(rows).expect("generated entries are finite and nonnegative")
}

/// Checks the bound on `count` random matrices of order `2..=max_n`, at each
/// `p` in `ps` and, with `critical`, also at `p_c` of the matrix order.
pub fn fuzz_bound(count: usize, max_n: usize, ps: &[f64], critical: bool, seed: u64) -> Result<FuzzReport> {
    if max_n < 2 {
        return Err(Error::domain("fuzzing needs max_n >= 2"));
    }
    let reports: Vec<Vec<BoundReport>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64));
            let n = rng.gen_range(2..=max_n);
            let a = random_matrix(&mut rng, n);
            let pc = if critical { Some(p_critical(n)?) } else { None };
            ps.iter().copied().chain(pc).map(|p| bound_check(&a, p)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = FuzzReport {
        matrices: count,
        ps: ps.to_vec(),
        critical,
        max_n,
        checks: 0,
        violations: 0,
        min_relative_slack: f64::INFINITY,
        worst: None,
    };
    for r in reports.into_iter().flatten() {
        out.checks += 1;
        out.violations += usize::from(!r.holds);
        if r.relative_slack < out.min_relative_slack {
            out.min_relative_slack = r.relative_slack;
            out.worst = Some(r);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub p_critical: f64,
    /// `μ[Π_x φ_x(σ_x)]`.
    pub lhs: f64,
    /// `Π_x μ[φ_x^{p_c}]^{1/p_c}`.
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    pub equality: bool,
}

pub fn correlation_check(phis: &[Vec<f64>]) -> Result<CorrelationReport> {
    let n = phis.len();
    if !(2..=7).contains(&n) {
        return Err(Error::domain(format!("correlation check needs 2 <= n <= 7, got {n}")));
    }
    let a = NonnegMatrix::new(phis.to_vec())?;
    let pc = p_critical(n)?;
    let space = build_space(SpaceKind::Permutations { n })?;
    let lhs = space
        .states()
        .map(|s| s.iter().enumerate().map(|(x, &i)| a.get(x, i as usize)).product::<f64>())
        .sum::<f64>()
        / space.len() as f64;
    let rhs: f64 = (0..n)
        .map(|x| a.row_norm(x, pc) / (n as f64).powf(1.0 / pc))
        .product();
    let slack = rhs - lhs;
    let scale = rhs.max(f64::MIN_POSITIVE);
    Ok(CorrelationReport {
        n,
        p_critical: pc,
        lhs,
        rhs,
        slack,
        holds: slack >= -1e-12 * scale,
        equality: slack.abs() <= EQUALITY_TOL * scale,
    })
}
