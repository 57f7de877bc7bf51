//! Loading graphs, hypergraphs and matrices from files or named presets.

use std::path::Path;

use entroscope::permanent::NonnegMatrix;
use entroscope::state_spaces::{
    mean_field_expand, GraphJson, HypergraphJson, HypergraphWeights, MeanFieldJson,
    MeanFieldWeights, SpaceKind, WeightedGraph,
};
use entroscope::{Error, Result};

fn read(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {path}: {e}")))
}

/// Splits `star4` into `("star", 4)`.
fn preset(name: &str) -> Option<(&str, usize)> {
    let split = name.find(|c: char| c.is_ascii_digit())?;
    let (kind, digits) = name.split_at(split);
    Some((kind, digits.parse().ok()?))
}

pub fn graph_preset(name: &str) -> Option<Result<WeightedGraph>> {
    let (kind, n) = preset(name)?;
    Some(match kind {
        "k" | "complete" => WeightedGraph::complete(n, 1.0),
        "star" => WeightedGraph::star(n, 0),
        "path" => WeightedGraph::path(n),
        "cycle" => WeightedGraph::cycle(n),
        _ => return None,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Input(format!("{what} JSON: {e}")))
}

/// A graph file (`{"n", "edges"}`) or a preset such as `k4`, `star4`, `path5`, `cycle6`.
pub fn load_graph(arg: &str) -> Result<WeightedGraph> {
    if !Path::new(arg).exists() {
        if let Some(g) = graph_preset(arg) {
            return g;
        }
    }
    parse_json::<GraphJson>(&read(arg)?, "graph")?.try_into()
}

/// A hypergraph file; graph and mean-field files are accepted and converted.
pub fn load_hypergraph(arg: &str) -> Result<HypergraphWeights> {
    if !Path::new(arg).exists() {
        if let Some(g) = graph_preset(arg) {
            return HypergraphWeights::from_graph(&g?);
        }
    }
    let text = read(arg)?;
    let value: serde_json::Value = parse_json(&text, "hypergraph")?;
    if value.get("edges").is_some() {
        let g: WeightedGraph = parse_json::<GraphJson>(&text, "graph")?.try_into()?;
        HypergraphWeights::from_graph(&g)
    } else if value.get("w").is_some() {
        let w: MeanFieldWeights = parse_json::<MeanFieldJson>(&text, "mean-field")?.try_into()?;
        Ok(mean_field_expand(&w))
    } else {
        parse_json::<HypergraphJson>(&text, "hypergraph")?.try_into()
    }
}

/// A CSV/JSON matrix file or a preset `id<N>` / `ones<N>`.
pub fn load_matrix(arg: &str) -> Result<NonnegMatrix> {
    if !Path::new(arg).exists() {
        match preset(arg) {
            Some(("id", n)) if n >= 1 => return Ok(NonnegMatrix::identity(n)),
            Some(("ones", n)) if n >= 1 => return Ok(NonnegMatrix::ones(n)),
            _ => {}
        }
    }
    NonnegMatrix::parse(&read(arg)?)
}

/// `single`, `product:N`, `perm` or `slice:R` on `n` vertices.
pub fn parse_space(spec: &str, n: usize) -> Result<SpaceKind> {
    let number = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Input(format!("bad number in --space {spec:?}")))
    };
    match spec.split_once(':') {
        None if spec == "single" => Ok(SpaceKind::SingleParticle { n }),
        None if spec == "perm" => Ok(SpaceKind::Permutations { n }),
        Some(("product", k)) => Ok(SpaceKind::Product { n, particles: number(k)? }),
        Some(("slice", r)) => Ok(SpaceKind::Slice { n, r: number(r)? }),
        _ => Err(Error::Input(format!(
            "unknown space {spec:?}; expected single, product:N, perm or slice:R"
        ))),
    }
}

/// `"2,1,1"` into `[2, 1, 1]`.
pub fn parse_list(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad list entry {s:?} in {spec:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(load_graph("star4").unwrap(), WeightedGraph::star(4, 0).unwrap());
        assert_eq!(load_graph("k3").unwrap(), WeightedGraph::complete(3, 1.0).unwrap());
        assert!(load_graph("nope").is_err());
        assert_eq!(load_matrix("id3").unwrap(), NonnegMatrix::identity(3));
        assert!(matches!(load_matrix("missing.csv"), Err(Error::Input(_))));
    }

    #[test]
    fn spaces_and_lists() {
        assert_eq!(parse_space("product:3", 4).unwrap(), SpaceKind::Product { n: 4, particles: 3 });
        assert_eq!(parse_space("slice:2", 4).unwrap(), SpaceKind::Slice { n: 4, r: 2 });
        assert_eq!(parse_space("perm", 4).unwrap(), SpaceKind::Permutations { n: 4 });
        assert!(parse_space("slice:x", 4).is_err());
        assert!(parse_space("torus", 4).is_err());
        assert_eq!(parse_list("2, 1,1").unwrap(), vec![2, 1, 1]);
    }
}
