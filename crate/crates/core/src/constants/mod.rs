//! The four constants: spectral gap `λ` (eigensolver), entropy constant `κ`,
//! log-Sobolev `β` and modified log-Sobolev `ρ` (ratio minimization).

pub mod closed_form;
pub mod optimizer;
pub mod verify;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generators::{BlockSystem, Functional, GeneratorMatrix, EIGEN_STATE_CAP};
use crate::state_spaces::{SpaceKind, WeightedGraph};

pub use closed_form::ClosedForm;
pub use optimizer::{
    minimize_ratio, Candidate, Denominator, Linearization, OptimizeOptions, RatioProblem,
    RatioResult,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Gap,
    Kappa,
    Lsi,
    Mlsi,
}

impl Quantity {
    /// Local functional in the Dirichlet form.
    pub fn functional(self) -> Functional {
        match self {
            Quantity::Gap => Functional::Variance,
            Quantity::Kappa => Functional::Entropy,
            Quantity::Lsi => Functional::VarSqrt,
            Quantity::Mlsi => Functional::CovFlogf,
        }
    }

    /// Limit of the ratio along `1 + εv` divided by the gap.
    pub fn linearization_factor(self) -> f64 {
        match self {
            Quantity::Gap | Quantity::Kappa => 1.0,
            Quantity::Lsi => 0.5,
            Quantity::Mlsi => 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosedFormValue {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub seed: Option<u64>,
    pub winner: Option<Candidate>,
    pub best_analytic: Option<f64>,
    pub restart_values: Vec<f64>,
    pub flags: Vec<String>,
}

/// A computed constant with its certificate.
#[derive(Clone, Debug, Serialize)]
pub struct ConstantReport {
    pub quantity: Quantity,
    pub space: SpaceKind,
    pub value: f64,
    /// Normalized minimizer (`μ(f) = 1`), or the gap eigenvector.
    pub minimizer: Vec<f64>,
    pub closed_form: Option<ClosedFormValue>,
    pub relative_error: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl ConstantReport {
    pub fn with_closed_form(mut self, name: impl Into<String>, value: f64) -> Self {
        self.relative_error = Some(relative_error(self.value, value));
        self.closed_form = Some(ClosedFormValue {
            name: name.into(),
            value,
        });
        self
    }
}

pub fn relative_error(computed: f64, expected: f64) -> f64 {
    if computed == expected {
        0.0
    } else {
        (computed - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
    }
}

/// Second-smallest eigenvalue of `−L` and its eigenvector.
pub fn spectral_gap(l: &GeneratorMatrix) -> Result<ConstantReport> {
    let spec = l.spectrum()?;
    let mut diagnostics = Diagnostics {
        converged: true,
        ..Diagnostics::default()
    };
    let (value, minimizer) = if spec.values.len() < 2 {
        diagnostics.flags.push("single_state".into());
        (0.0, vec![1.0])
    } else {
        let v = spec.values[1];
        let col = spec.vectors.column(1).iter().copied().collect();
        if v <= 1e-9 * l.scale() {
            diagnostics.flags.push("disconnected".into());
            (0.0, col)
        } else {
            (v, col)
        }
    };
    Ok(ConstantReport {
        quantity: Quantity::Gap,
        space: l.space,
        value,
        minimizer,
        closed_form: None,
        relative_error: None,
        diagnostics,
    })
}

impl RatioProblem {
    /// The ratio problem for `q ∈ {κ, β, ρ}` (or `λ`) of a block system,
    /// with the near-constant limit attached when the spectrum is affordable.
    pub fn for_system(system: &BlockSystem, q: Quantity) -> Result<Self> {
        let linearization = if system.n_states() <= EIGEN_STATE_CAP {
            let gap = spectral_gap(&system.generator()?)?;
            Some(Linearization {
                value: q.linearization_factor() * gap.value,
                direction: gap.minimizer,
            })
        } else {
            None
        };
        Ok(RatioProblem {
            numerator: system.evaluator(),
            functional: q.functional(),
            denominator: if q == Quantity::Gap {
                Denominator::Variance
            } else {
                Denominator::Entropy
            },
            linearization,
        })
    }
}

/// Computes `q` for a block system: eigensolve for the gap, ratio
/// minimization otherwise.
pub fn compute(system: &BlockSystem, q: Quantity, opts: &OptimizeOptions) -> Result<ConstantReport> {
    if q == Quantity::Gap {
        return spectral_gap(&system.generator()?);
    }
    let problem = RatioProblem::for_system(system, q)?;
    let mut report = from_ratio(q, system.space().kind(), minimize_ratio(&problem, opts), opts);
    if problem.linearization.is_none() {
        report.diagnostics.flags.push("linearization_skipped".into());
    }
    Ok(report)
}

pub(crate) fn from_ratio(q: Quantity, space: SpaceKind, r: RatioResult, opts: &OptimizeOptions) -> ConstantReport {
    let mean = r.minimizer.iter().sum::<f64>() / r.minimizer.len() as f64;
    ConstantReport {
        quantity: q,
        space,
        value: r.value,
        minimizer: r.minimizer.iter().map(|v| v / mean).collect(),
        closed_form: None,
        relative_error: None,
        diagnostics: Diagnostics {
            iterations: r.restarts.iter().map(|o| o.iterations).sum(),
            restarts: r.restarts.len(),
            converged: r.converged,
            seed: Some(opts.seed),
            winner: Some(r.winner),
            best_analytic: Some(r.best_analytic),
            restart_values: r.restarts.iter().map(|o| o.value).collect(),
            flags: r.flags,
        },
    }
}

/// `q` of a weighted graph (single particle).
pub fn graph_constant(g: &WeightedGraph, q: Quantity, opts: &OptimizeOptions) -> Result<ConstantReport> {
    compute(&BlockSystem::single_graph(g)?, q, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::closed_form::*;
    use crate::generators::gen_single_graph;
    use crate::state_spaces::{mean_field_expand, MeanFieldWeights};
    use std::f64::consts::LN_2;

    fn opts() -> OptimizeOptions {
        OptimizeOptions {
            restarts: 12,
            ..OptimizeOptions::default()
        }
    }

    #[test]
    fn complete_graph_gap() {
        for n in 2..=8 {
            let r = spectral_gap(&gen_single_graph(&WeightedGraph::complete(n, 1.0).unwrap())).unwrap();
            assert!((r.value - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn star_gap_is_one() {
        for n in 3..=10 {
            let r = spectral_gap(&gen_single_graph(&WeightedGraph::star(n, 0).unwrap())).unwrap();
            assert!((r.value - 1.0).abs() < 1e-12, "{n} {}", r.value);
        }
    }

    #[test]
    fn disconnected_graph_flagged() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let r = spectral_gap(&gen_single_graph(&g)).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.diagnostics.flags.contains(&"disconnected".to_string()));
    }

    #[test]
    fn kappa_small_graphs() {
        let k2 = graph_constant(&WeightedGraph::complete(2, 1.0).unwrap(), Quantity::Kappa, &opts()).unwrap();
        assert!((k2.value - 2.0).abs() < 1e-9);
        let k3 = graph_constant(&WeightedGraph::complete(3, 1.0).unwrap(), Quantity::Kappa, &opts()).unwrap();
        assert!((k3.value - 4.0 * LN_2 / 3f64.ln()).abs() < 1e-6);
        let s4 = graph_constant(&WeightedGraph::star(4, 0).unwrap(), Quantity::Kappa, &opts()).unwrap();
        assert!((s4.value - 0.9217860).abs() < 1e-6, "{}", s4.value);
        assert!(s4.minimizer.iter().all(|&v| v > 0.0));
        let s3 = graph_constant(&WeightedGraph::star(3, 0).unwrap(), Quantity::Kappa, &opts()).unwrap();
        assert!((s3.value - 1.0).abs() < 1e-6, "{}", s3.value);
    }

    #[test]
    fn lsi_and_mlsi_of_complete_graphs() {
        for n in 2..=5 {
            let g = WeightedGraph::complete(n, 1.0).unwrap();
            let b = graph_constant(&g, Quantity::Lsi, &opts()).unwrap();
            assert!((b.value - lsi_kn(n).unwrap()).abs() < 1e-6, "{n} {}", b.value);
            let rho = graph_constant(&g, Quantity::Mlsi, &opts()).unwrap();
            if n == 2 {
                assert!((rho.value - 4.0).abs() < 1e-6, "{}", rho.value);
            } else {
                assert!(rho.value >= n as f64 - 1e-6 && rho.value <= 2.0 * n as f64 + 1e-6);
            }
        }
    }

    #[test]
    fn mean_field_single_matches_closed_form() {
        for n in 3..=5 {
            for ell in 2..=n {
                let w = MeanFieldWeights::single(n, ell, 1.0).unwrap();
                let sys = BlockSystem::single_hypergraph(&mean_field_expand(&w)).unwrap();
                let r = compute(&sys, Quantity::Kappa, &opts()).unwrap();
                assert!((r.value - kappa_mf_single(&w)).abs() < 1e-9 * r.value);
                assert!(matches!(r.diagnostics.winner, Some(Candidate::Dirac { .. })));
            }
        }
    }
}
