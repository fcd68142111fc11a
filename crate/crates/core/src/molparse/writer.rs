use std::fmt::Write;

use super::{Atom, BondOrder, MolGraph};

/// Writes a SMILES string for `g`, visiting atoms by the priority given in
/// `order` (`order[i]` is the atom with the i-th highest priority). Depth-first
/// traversal starts at the highest-priority unvisited atom of each fragment
/// and explores neighbors in priority order, so different orders yield
/// different but equivalent strings.
///
/// Aromaticity is written verbatim and stereo is not emitted.
pub fn write_smiles(g: &MolGraph, order: &[usize]) -> String {
    let n = g.num_atoms();
    assert_eq!(order.len(), n, "order must be a permutation of the atoms");
    let mut priority = vec![usize::MAX; n];
    for (p, &a) in order.iter().enumerate() {
        priority[a] = p;
    }
    let mut adj = g.adjacency();
    for nb in adj.iter_mut() {
        nb.sort_by_key(|&(w, _)| priority[w]);
    }

    let mut w = Writer {
        g,
        adj: &adj,
        visited: vec![false; n],
        children: vec![Vec::new(); n],
        ring_events: vec![Vec::new(); n],
        ring_seen: vec![false; g.num_bonds()],
        labels: Vec::new(),
        bond_label: vec![0; g.num_bonds()],
    };
    let mut out = String::new();
    for &root in order {
        if w.visited[root] {
            continue;
        }
        w.build(root, usize::MAX);
        if !out.is_empty() {
            out.push('.');
        }
        w.emit(root, &mut out);
    }
    out
}

#[derive(Clone, Copy)]
enum RingEvent {
    Open(usize),
    Close(usize),
}

struct Writer<'a> {
    g: &'a MolGraph,
    adj: &'a [Vec<(usize, usize)>],
    visited: Vec<bool>,
    /// Tree children as `(child, bond)`.
    children: Vec<Vec<(usize, usize)>>,
    ring_events: Vec<Vec<RingEvent>>,
    ring_seen: Vec<bool>,
    labels: Vec<bool>,
    bond_label: Vec<usize>,
}

impl Writer<'_> {
    fn build(&mut self, v: usize, parent_bond: usize) {
        self.visited[v] = true;
        for &(u, bond) in &self.adj[v] {
            if bond == parent_bond {
                continue;
            }
            if self.visited[u] {
                if !self.ring_seen[bond] {
                    self.ring_seen[bond] = true;
                    self.ring_events[u].push(RingEvent::Open(bond));
                    self.ring_events[v].push(RingEvent::Close(bond));
                }
            } else {
                self.children[v].push((u, bond));
                self.build(u, bond);
            }
        }
    }

    fn emit(&mut self, v: usize, out: &mut String) {
        out.push_str(&atom_text(self.g, v));
        let mut events = self.ring_events[v].clone();
        // Closings reuse labels opened earlier; openings take fresh labels.
        events.sort_by_key(|e| matches!(e, RingEvent::Open(_)));
        let mut freed = Vec::new();
        for e in events {
            match e {
                RingEvent::Close(bond) => {
                    let label = self.bond_label[bond];
                    push_label(out, label);
                    freed.push(label);
                }
                RingEvent::Open(bond) => {
                    let label = match self.labels.iter().position(|used| !used) {
                        Some(i) => i,
                        None => {
                            self.labels.push(false);
                            self.labels.len() - 1
                        }
                    };
                    self.labels[label] = true;
                    self.bond_label[bond] = label + 1;
                    let b = &self.g.bonds[bond];
                    out.push_str(bond_symbol(self.g, b.begin, b.end, b.order));
                    push_label(out, label + 1);
                }
            }
        }
        for label in freed {
            self.labels[label - 1] = false;
        }
        let children = self.children[v].clone();
        let last = children.len().saturating_sub(1);
        for (i, (child, bond)) in children.into_iter().enumerate() {
            let b = &self.g.bonds[bond];
            let sym = bond_symbol(self.g, b.begin, b.end, b.order);
            if i < last {
                out.push('(');
                out.push_str(sym);
                self.emit(child, out);
                out.push(')');
            } else {
                out.push_str(sym);
                self.emit(child, out);
            }
        }
    }
}

fn push_label(out: &mut String, label: usize) {
    if label < 10 {
        let _ = write!(out, "{label}");
    } else {
        let _ = write!(out, "%{label:02}");
    }
}

fn bond_symbol(g: &MolGraph, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = g.atoms[a].aromatic && g.atoms[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn atom_text(g: &MolGraph, v: usize) -> String {
    let atom: &Atom = &g.atoms[v];
    let info = atom.element.info();
    let symbol = if atom.aromatic {
        info.symbol.to_ascii_lowercase()
    } else {
        info.symbol.to_string()
    };
    let default_h = atom
        .element
        .implicit_hydrogens(atom.aromatic, g.bond_half_valence(v));
    let plain = info.organic
        && atom.formal_charge == 0
        && default_h == Some(atom.implicit_h as u32)
        && (!atom.aromatic || info.aromatic);
    if plain {
        return symbol;
    }
    let mut s = format!("[{symbol}");
    match atom.implicit_h {
        0 => {}
        1 => s.push('H'),
        h => {
            let _ = write!(s, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        q => {
            let _ = write!(s, "{q:+}");
        }
    }
    s.push(']');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molparse::parse_smiles;

    fn roundtrip(smi: &str, order: &[usize]) {
        let g = parse_smiles(smi).unwrap();
        let written = write_smiles(&g, order);
        let back = parse_smiles(&written).unwrap_or_else(|e| panic!("{smi} -> {written}: {e}"));
        assert_eq!(back.canonical_key, g.canonical_key, "{smi} -> {written}");
    }

    #[test]
    fn identity_order_round_trips() {
        for smi in [
            "CCO",
            "c1ccccc1",
            "C1CC1.O",
            "[NH4+].[O-]C(=O)C",
            "c1ccc(-c2ccccc2)cc1",
            "CC(C)(C)c1ccc(O)cc1",
            "C1CC2CCC1CC2",
            "c1cc[nH]c1",
            "OS(=O)(=O)O",
            "[H][H]",
            "C#N",
        ] {
            let n = parse_smiles(smi).unwrap().num_atoms();
            let id: Vec<usize> = (0..n).collect();
            roundtrip(smi, &id);
            let rev: Vec<usize> = (0..n).rev().collect();
            roundtrip(smi, &rev);
        }
    }

    #[test]
    fn cage_round_trips() {
        let smi = "C12C3C4C1C5C2C3C45";
        roundtrip(smi, &[7, 6, 5, 4, 3, 2, 1, 0]);
    }
}
