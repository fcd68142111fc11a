//! Synthetic datasets and configs shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphmix::cli::RunConfig;
use graphmix::datapipe::{featurize_all, FeaturizeSettings, PackedBatch, Capacity};
use graphmix::featurize::{descriptors, FeaturizedGraph};
use graphmix::molparse::{parse_smiles, MolGraph};
use graphmix::synth::molecule_corpus;

pub fn descriptor(g: &MolGraph, name: &str) -> f64 {
    descriptors(g).into_iter().find(|(n, _)| n == name).expect("known descriptor").1
}

/// Graph-level target of the overfit set.
pub fn graph_target(g: &MolGraph) -> f64 {
    descriptor(g, "mw") / 50.0 + 2.0 * descriptor(g, "n_rings") - 0.5 * descriptor(g, "n_rotatable_bonds")
}

/// Node-level target of the overfit set, in SMILES atom order.
pub fn node_targets(g: &MolGraph) -> Vec<bool> {
    g.atoms.iter().map(|a| a.in_ring || a.element.symbol() != "C").collect()
}

fn quote(cell: &str) -> String {
    if cell.contains(',') || cell.contains('|') {
        format!("\"{cell}\"")
    } else {
        cell.to_string()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|c| quote(c)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// `n` molecules with a graph regression label `y` and a per-atom binary
/// label `site`; each graph label and each atom label is missing with
/// probability `missing`.
pub fn overfit_csv(path: &Path, n: usize, missing: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for s in molecule_corpus(n, 6, seed) {
        let g = parse_smiles(&s).unwrap();
        let y = if rng.random::<f64>() < missing {
            String::new()
        } else {
            format!("{}", graph_target(&g))
        };
        let site: Vec<String> = node_targets(&g)
            .into_iter()
            .map(|b| if rng.random::<f64>() < missing { String::new() } else { (b as u8).to_string() })
            .collect();
        rows.push(vec![s, y, site.join("|")]);
    }
    write_csv(path, &["smiles", "y", "site"], &rows);
}

pub const OVERFIT_SCHEMA: &str = "
    schema:
      name: overfit
      tasks:
        - {name: y, level: graph, kind: regression, columns: [y], norm: z-score}
        - {name: site, level: node, kind: binary, columns: [site]}
";

/// Config text for the overfit run: every molecule in train.
pub fn overfit_config(csv: &Path, epochs: usize) -> String {
    format!(
        "datasets:
  - path: {}
{OVERFIT_SCHEMA}
splits: {{ratios: {{train: 1.0, val: 0.0, test: 0.0}}, seed: 0}}
model: {{preset: toymix}}
optim: {{epochs: {epochs}, eval_every: 0, batches: {{capacity: {{max_nodes: 256, max_edges: 512, max_graphs: 16}}}}}}
seed: 11
",
        csv.display()
    )
}

/// Three overlapping synthetic datasets with the task kinds of a small
/// mix: multi-label regression, sparse imbalanced binary classification
/// and ranked classification. Returns the CSV paths.
pub fn write_mix(dir: &Path, seed: u64) -> [PathBuf; 3] {
    let corpus = molecule_corpus(240, 6, seed);
    let graphs: Vec<MolGraph> = corpus.iter().map(|s| parse_smiles(s).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);

    let reg: Vec<Vec<String>> = (0..140)
        .map(|i| {
            let g = &graphs[i];
            vec![
                corpus[i].clone(),
                format!("{}", descriptor(g, "mw")),
                format!("{}", descriptor(g, "n_hetero_atoms")),
                format!("{}", descriptor(g, "fsp3")),
            ]
        })
        .collect();

    let cls: Vec<Vec<String>> = (80..200)
        .map(|i| {
            let g = &graphs[i];
            let mut row = vec![corpus[i].clone()];
            for name in ["n_rings", "n_lipinski_hbd", "n_hetero_atoms", "n_rotatable_bonds"] {
                let v = descriptor(g, name);
                let cell = if rng.random::<f64>() < 0.7 {
                    String::new()
                } else {
                    // Rare positives: only the upper tail.
                    ((v >= 3.0) as u8).to_string()
                };
                row.push(cell);
            }
            row
        })
        .collect();

    let rank: Vec<Vec<String>> = (120..240)
        .map(|i| {
            let g = &graphs[i];
            let heavy = descriptor(g, "n_heavy_atoms");
            let class = ((heavy / 6.0).floor() as usize).min(4);
            let class2 = (descriptor(g, "n_hetero_atoms") as usize).min(4);
            vec![corpus[i].clone(), class.to_string(), class2.to_string()]
        })
        .collect();

    let paths = [dir.join("reg.csv"), dir.join("cls.csv"), dir.join("rank.csv")];
    write_csv(&paths[0], &["smiles", "mw", "hetero", "fsp3"], &reg);
    write_csv(&paths[1], &["smiles", "a1", "a2", "a3", "a4"], &cls);
    write_csv(&paths[2], &["smiles", "r1", "r2"], &rank);
    paths
}

pub fn mix_config(paths: &[PathBuf; 3], epochs: usize, extra: &str) -> String {
    let mut text = String::new();
    writeln!(
        text,
        "datasets:
  - path: {}
    schema:
      name: reg
      tasks:
        - {{name: props, level: graph, kind: regression, columns: [mw, hetero, fsp3], norm: z-score}}
  - path: {}
    schema:
      name: cls
      tasks:
        - {{name: assays, level: graph, kind: binary, columns: [a1, a2, a3, a4]}}
  - path: {}
    schema:
      name: rank
      tasks:
        - {{name: ranks, level: graph, kind: ranked, columns: [r1, r2], classes: 5}}
primary: reg
splits: {{seed: 3}}
model: {{preset: toymix, hidden: 32, pe_lap: {{hidden: 8, out: 8}}, pe_rwse: {{hidden: 8, out: 8}}}}
optim: {{epochs: {epochs}, batches: {{capacity: {{max_nodes: 256, max_edges: 512, max_graphs: 16}}}}}}
seed: 5",
        paths[0].display(),
        paths[1].display(),
        paths[2].display()
    )
    .unwrap();
    text.push_str(extra);
    text
}

pub fn load_config(dir: &Path, text: &str) -> RunConfig {
    let path = dir.join("config.yaml");
    std::fs::write(&path, text).unwrap();
    RunConfig::load(&path).unwrap()
}

/// Featurized corpus molecules with default settings.
pub fn featurized(n: usize, seed: u64) -> Vec<FeaturizedGraph> {
    let graphs: Vec<MolGraph> = molecule_corpus(n, 5, seed)
        .iter()
        .map(|s| parse_smiles(s).unwrap().canonicalized())
        .collect();
    let keys: Vec<String> = graphs.iter().map(|g| g.canonical_key.clone()).collect();
    let pairs: Vec<(&str, &MolGraph)> = keys.iter().map(String::as_str).zip(&graphs).collect();
    featurize_all(&pairs, &FeaturizeSettings::default(), None, 1, 64).unwrap().0
}

pub fn pack(graphs: &[&FeaturizedGraph], cap: Capacity) -> PackedBatch {
    let items: Vec<(&FeaturizedGraph, usize)> = graphs.iter().enumerate().map(|(i, g)| (*g, i)).collect();
    PackedBatch::assemble(&items, cap).unwrap()
}
